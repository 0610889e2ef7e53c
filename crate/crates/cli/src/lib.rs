//! `lscp` command line: configuration merging, dispatch, and report emission.
//!
//! Settings come from an optional TOML file (`--config`) and from flags;
//! flags win. Reports go to `--output` or stdout.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use lscp_core::analysis::{
    bootstrap_min, grid, linspace, minimize, simulate_finite_sample, BootstrapConfig, GammaPath, JackknifeUnit,
    SearchConfig, SimulationConfig,
};
use lscp_core::distributions::chisq_quantile;
use lscp_core::exec::with_workers;
use lscp_core::lscp::{default_spec, lscp, LscpBreakdown, LscpInputs};
use lscp_core::model::{derive_b, fit_models, intervals, load_dataset, DatasetSpec, FitResult, Intervals, ModelData};
use lscp_core::oracle::{oracle_lscp, OracleConfig, OracleEstimate};
use lscp_core::quadrature::QuadratureSpec;
use lscp_core::{report, ErrorKind, Exec};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] lscp_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) => match e.kind() {
                ErrorKind::Config => 2,
                ErrorKind::Data => 3,
                ErrorKind::Numerical => 4,
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl Range {
    fn values(&self) -> Vec<f64> {
        linspace(self.min, self.max, self.points)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub path: Option<PathBuf>,
    pub intercept: Option<bool>,
    pub theta_columns: Option<Vec<String>>,
    pub gamma_columns: Option<Vec<String>>,
    pub successes: Option<String>,
    pub trials: Option<String>,
    pub a_vector: Option<Vec<f64>>,
    pub gamma_tilde: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub lambda: Option<Range>,
    pub psi: Option<Range>,
    pub lambda_values: Option<Vec<f64>>,
    pub psi_values: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub gamma_both: Option<Range>,
    pub gamma_points: Option<Vec<Vec<f64>>>,
    pub replication_factor: Option<usize>,
    pub batch_size: Option<usize>,
    /// Value of theta to simulate at; the full-model MLE when absent.
    pub theta: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapSection {
    pub level: Option<f64>,
    pub max_retries: Option<usize>,
    pub max_failure_rate: Option<f64>,
    pub jackknife: Option<JackknifeUnit>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OraclePoint {
    pub q: usize,
    pub norm_b: f64,
    pub norm_lambda: f64,
    pub psi: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    pub n_draws: Option<u64>,
    pub points: Option<Vec<OraclePoint>>,
}

/// Everything a run can be configured with. Each field may come from the
/// config file or a flag.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub alpha: Option<f64>,
    pub alpha_tilde: Option<f64>,
    pub q: Option<usize>,
    pub norm_b: Option<f64>,
    pub norm_lambda: Option<f64>,
    pub psi: Option<f64>,
    pub seed: Option<u64>,
    pub n_sims: Option<usize>,
    #[serde(rename = "B")]
    pub resamples: Option<usize>,
    pub output: Option<PathBuf>,
    pub format: Option<OutputFormat>,
    pub workers: Option<usize>,
    pub data: Option<DataConfig>,
    pub quadrature: Option<QuadratureSpec>,
    pub search: Option<SearchConfig>,
    pub grid: Option<GridConfig>,
    pub simulate: Option<SimulateSection>,
    pub bootstrap: Option<BootstrapSection>,
    pub oracle: Option<OracleSection>,
}

impl RunConfig {
    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig = toml::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        // Relative paths in the file are relative to the file.
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(d) = cfg.data.as_mut() {
            if let Some(p) = d.path.as_mut() {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        if let Some(p) = cfg.output.as_mut() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}

#[derive(Debug, Parser)]
#[command(name = "lscp", version, about = "Coverage of confidence intervals after a preliminary Wald test")]
pub struct Cli {
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Cap on worker threads (default: all cores). Output does not depend on it.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Write the report here instead of stdout.
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
    /// Report format (default json).
    #[arg(long, global = true, value_enum)]
    pub format: Option<OutputFormat>,
    /// Nominal non-coverage: the interval has nominal coverage 1 - alpha.
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// Size of the preliminary test.
    #[arg(long, global = true)]
    pub alpha_tilde: Option<f64>,
    /// Master seed for stochastic commands; a random one is drawn and
    /// recorded in the report when absent.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct DataArgs {
    /// Grouped binomial CSV with a header row.
    #[arg(long = "data", global = true)]
    pub path: Option<PathBuf>,
    /// Prepend an intercept column to the theta design.
    #[arg(long, global = true)]
    pub intercept: bool,
    /// Columns forming the theta design, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    pub theta_columns: Option<Vec<String>>,
    /// Columns forming the gamma design, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    pub gamma_columns: Option<Vec<String>>,
    /// Column of success counts (or 0/1 outcomes).
    #[arg(long, global = true)]
    pub successes: Option<String>,
    /// Column of trial counts; every row is one trial when absent.
    #[arg(long, global = true)]
    pub trials: Option<String>,
    /// Contrast a in phi = a'theta, comma separated.
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    pub a_vector: Option<Vec<f64>>,
    /// Restriction value for gamma, comma separated.
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    pub gamma_tilde: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct PointArgs {
    /// Dimension of gamma (at least 2).
    #[arg(long)]
    pub q: Option<usize>,
    /// Length of b, in [0, 1).
    #[arg(long)]
    pub norm_b: Option<f64>,
    /// Length of lambda.
    #[arg(long)]
    pub norm_lambda: Option<f64>,
    /// Cosine of the angle between b and lambda.
    #[arg(long, allow_hyphen_values = true)]
    pub psi: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GridArgs {
    /// Dimension of gamma (at least 2).
    #[arg(long)]
    pub q: Option<usize>,
    /// Length of b, in [0, 1).
    #[arg(long)]
    pub norm_b: Option<f64>,
    /// Explicit |lambda| values.
    #[arg(long, value_delimiter = ',')]
    pub lambda_values: Option<Vec<f64>>,
    /// Explicit psi values.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub psi_values: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct MinArgs {
    /// Dimension of gamma. Needed with --norm-b; otherwise taken from the data.
    #[arg(long)]
    pub q: Option<usize>,
    /// Use this |b|; otherwise it is computed from the fitted data.
    #[arg(long)]
    pub norm_b: Option<f64>,
    /// Upper end of the coarse |lambda| scan.
    #[arg(long)]
    pub lambda_max: Option<f64>,
    /// Coarse scan points along |lambda|.
    #[arg(long)]
    pub lambda_points: Option<usize>,
    /// Coarse scan points along psi.
    #[arg(long)]
    pub psi_points: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SimulateArgs {
    /// Replicates per path point.
    #[arg(long)]
    pub n_sims: Option<usize>,
    /// Multiply every trial count by this factor.
    #[arg(long)]
    pub replication_factor: Option<usize>,
    /// Path start: every gamma coordinate set to this value.
    #[arg(long, allow_hyphen_values = true)]
    pub gamma_min: Option<f64>,
    /// Path end.
    #[arg(long, allow_hyphen_values = true)]
    pub gamma_max: Option<f64>,
    /// Number of path points.
    #[arg(long)]
    pub gamma_points: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct BootstrapArgs {
    /// Number of resamples.
    #[arg(long = "resamples", short = 'B')]
    pub resamples: Option<usize>,
    /// Leave-one-out unit for the BCa acceleration.
    #[arg(long, value_enum)]
    pub jackknife: Option<JackknifeArg>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum JackknifeArg {
    Pattern,
    Observation,
}

#[derive(Debug, Clone, Default, Args)]
pub struct OracleArgs {
    /// Monte Carlo draws per point.
    #[arg(long)]
    pub n_draws: Option<u64>,
    #[command(flatten)]
    pub point: PointArgs,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Coverage at one (q, |b|, |lambda|, psi).
    Eval(PointArgs),
    /// Coverage on a |lambda| x psi grid.
    Grid(GridArgs),
    /// Minimum coverage over |lambda| and psi.
    Min(MinArgs),
    /// Fit full and restricted models; report W, b and the intervals J, J_r, K.
    Fit,
    /// Finite-sample coverage along a gamma path.
    Simulate(SimulateArgs),
    /// Parametric bootstrap of the minimum coverage.
    Bootstrap(BootstrapArgs),
    /// Compare the quadrature against Monte Carlo at a list of points.
    OracleCheck(OracleArgs),
}

fn set<T>(slot: &mut Option<T>, v: Option<T>) {
    if v.is_some() {
        *slot = v;
    }
}

/// Fold the flags into the file config (flags win).
pub fn merge(mut cfg: RunConfig, cli: &Cli) -> RunConfig {
    set(&mut cfg.workers, cli.workers);
    set(&mut cfg.output, cli.output.clone());
    set(&mut cfg.format, cli.format);
    set(&mut cfg.alpha, cli.alpha);
    set(&mut cfg.alpha_tilde, cli.alpha_tilde);
    set(&mut cfg.seed, cli.seed);

    let da = &cli.data;
    let mut d = cfg.data.take().unwrap_or_default();
    set(&mut d.path, da.path.clone());
    if da.intercept {
        d.intercept = Some(true);
    }
    set(&mut d.theta_columns, da.theta_columns.clone());
    set(&mut d.gamma_columns, da.gamma_columns.clone());
    set(&mut d.successes, da.successes.clone());
    set(&mut d.trials, da.trials.clone());
    set(&mut d.a_vector, da.a_vector.clone());
    set(&mut d.gamma_tilde, da.gamma_tilde.clone());
    cfg.data = (d != DataConfig::default()).then_some(d);

    let point = |cfg: &mut RunConfig, p: &PointArgs| {
        set(&mut cfg.q, p.q);
        set(&mut cfg.norm_b, p.norm_b);
        set(&mut cfg.norm_lambda, p.norm_lambda);
        set(&mut cfg.psi, p.psi);
    };
    match &cli.command {
        Command::Eval(p) => point(&mut cfg, p),
        Command::Grid(g) => {
            set(&mut cfg.q, g.q);
            set(&mut cfg.norm_b, g.norm_b);
            let mut gc = cfg.grid.take().unwrap_or_default();
            set(&mut gc.lambda_values, g.lambda_values.clone());
            set(&mut gc.psi_values, g.psi_values.clone());
            cfg.grid = Some(gc);
        }
        Command::Min(m) => {
            set(&mut cfg.q, m.q);
            set(&mut cfg.norm_b, m.norm_b);
            let mut s = cfg.search.unwrap_or_default();
            set(&mut s.lambda_max, m.lambda_max);
            s.lambda_points = m.lambda_points.unwrap_or(s.lambda_points);
            s.psi_points = m.psi_points.unwrap_or(s.psi_points);
            cfg.search = Some(s);
        }
        Command::Fit => {}
        Command::Simulate(s) => {
            set(&mut cfg.n_sims, s.n_sims);
            let mut sc = cfg.simulate.take().unwrap_or_default();
            set(&mut sc.replication_factor, s.replication_factor);
            if s.gamma_min.is_some() || s.gamma_max.is_some() || s.gamma_points.is_some() {
                let r = sc.gamma_both.unwrap_or(DEFAULT_GAMMA_BOTH);
                sc.gamma_both = Some(Range {
                    min: s.gamma_min.unwrap_or(r.min),
                    max: s.gamma_max.unwrap_or(r.max),
                    points: s.gamma_points.unwrap_or(r.points),
                });
                sc.gamma_points = None;
            }
            cfg.simulate = Some(sc);
        }
        Command::Bootstrap(b) => {
            set(&mut cfg.resamples, b.resamples);
            if let Some(j) = b.jackknife {
                let mut bs = cfg.bootstrap.take().unwrap_or_default();
                bs.jackknife = Some(match j {
                    JackknifeArg::Pattern => JackknifeUnit::Pattern,
                    JackknifeArg::Observation => JackknifeUnit::Observation,
                });
                cfg.bootstrap = Some(bs);
            }
        }
        Command::OracleCheck(o) => {
            point(&mut cfg, &o.point);
            let mut os = cfg.oracle.take().unwrap_or_default();
            set(&mut os.n_draws, o.n_draws);
            cfg.oracle = Some(os);
        }
    }
    cfg
}

/// Default `gamma_both` path when none is configured: 101 points on [-1, 1].
pub const DEFAULT_GAMMA_BOTH: Range = Range { min: -1.0, max: 1.0, points: 101 };

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub inputs: LscpInputs,
    pub quadrature: QuadratureSpec,
    pub result: LscpBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub path: PathBuf,
    pub rows: usize,
    pub total_trials: f64,
    pub p: usize,
    pub q: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub data: DataSummary,
    pub fit: FitResult,
    pub intervals: Intervals,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCheckPoint {
    pub inputs: LscpInputs,
    pub lscp: f64,
    pub oracle: OracleEstimate,
    pub seed: u64,
    /// `(oracle - lscp) / standard error`.
    pub standardized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCheckReport {
    pub points: Vec<OracleCheckPoint>,
    pub max_abs_standardized: f64,
    pub n_draws: u64,
    pub seed: u64,
}

/// Output of a run, ready to be written.
#[derive(Debug, Clone)]
pub struct Emitted {
    pub text: String,
    pub path: Option<PathBuf>,
}

struct Ctx {
    cfg: RunConfig,
    alpha: f64,
    alpha_tilde: f64,
    format: OutputFormat,
    spec: QuadratureSpec,
}

impl Ctx {
    fn data_spec(&self) -> Result<DatasetSpec> {
        let d = self.cfg.data.clone().ok_or_else(|| {
            config_err("this command needs data: set [data] in the config or pass --data and the column flags")
        })?;
        let need =
            |what: &str| config_err(format!("missing data.{what} (config [data] or --{})", what.replace('_', "-")));
        Ok(DatasetSpec {
            path: d.path.ok_or_else(|| config_err("missing data.path (config [data] or --data)"))?,
            intercept: d.intercept.unwrap_or(false),
            theta_columns: d.theta_columns.ok_or_else(|| need("theta_columns"))?,
            gamma_columns: d.gamma_columns.ok_or_else(|| need("gamma_columns"))?,
            successes: d.successes.ok_or_else(|| need("successes"))?,
            trials: d.trials,
            a_vector: d.a_vector.ok_or_else(|| need("a_vector"))?,
            gamma_tilde: d.gamma_tilde.ok_or_else(|| need("gamma_tilde"))?,
        })
    }

    fn load(&self) -> Result<(DatasetSpec, ModelData)> {
        let spec = self.data_spec()?;
        let data = load_dataset(&spec)?;
        Ok((spec, data))
    }

    fn scalar(&self, v: Option<f64>, name: &str) -> Result<f64> {
        v.ok_or_else(|| config_err(format!("missing {name} (config key or --{})", name.replace('_', "-"))))
    }

    fn q(&self) -> Result<usize> {
        self.cfg.q.ok_or_else(|| config_err("missing q (config key or --q)"))
    }

    fn seed(&self) -> u64 {
        self.cfg.seed.unwrap_or_else(rand::random)
    }

    fn search(&self) -> SearchConfig {
        self.cfg.search.unwrap_or_default()
    }
}

fn check_level(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(config_err(format!("{name} must lie in (0, 1), got {v}")))
    }
}

fn json<T: Serialize>(v: &T) -> Result<String> {
    Ok(report::to_json(v)?)
}

fn csv_unsupported(cmd: &str) -> CliError {
    config_err(format!("csv output is not available for `{cmd}`; use --format json"))
}

/// Run a parsed command line. The returned text has not been written yet.
pub fn run(cli: &Cli) -> Result<Emitted> {
    let file_cfg = match &cli.config {
        Some(p) => RunConfig::from_toml_file(p)?,
        None => RunConfig::default(),
    };
    let cfg = merge(file_cfg, cli);
    let workers = cfg.workers;
    if workers == Some(0) {
        return Err(config_err("--workers must be at least 1"));
    }
    with_workers(workers, || run_config(&cli.command, cfg))
}

fn run_config(command: &Command, cfg: RunConfig) -> Result<Emitted> {
    let ctx = Ctx {
        alpha: check_level("alpha", cfg.alpha.unwrap_or(0.05))?,
        alpha_tilde: check_level("alpha_tilde", cfg.alpha_tilde.unwrap_or(0.05))?,
        format: cfg.format.unwrap_or(OutputFormat::Json),
        spec: cfg.quadrature.unwrap_or_else(default_spec),
        cfg,
    };
    let exec = Exec::default();
    let text = match command {
        Command::Eval(_) => {
            let inputs = LscpInputs::new(
                ctx.q()?,
                ctx.alpha,
                ctx.alpha_tilde,
                ctx.scalar(ctx.cfg.norm_b, "norm_b")?,
                ctx.scalar(ctx.cfg.norm_lambda, "norm_lambda")?,
                ctx.cfg.psi.unwrap_or(1.0),
            )?;
            let result = lscp(&inputs, &ctx.spec)?;
            let rep = EvalReport { inputs, quadrature: ctx.spec, result };
            match ctx.format {
                OutputFormat::Json => json(&rep)?,
                OutputFormat::Csv => {
                    let f = report::format_f64;
                    format!(
                        "q,alpha,alpha_tilde,norm_b,norm_lambda,psi,a_term,b_term,total\n{},{},{},{},{},{},{},{},{}\n",
                        inputs.q,
                        f(inputs.alpha),
                        f(inputs.alpha_tilde),
                        f(inputs.norm_b),
                        f(inputs.norm_lambda),
                        f(inputs.psi),
                        f(result.a_term),
                        f(result.b_term),
                        f(result.total)
                    )
                }
            }
        }
        Command::Grid(_) => {
            let q = ctx.q()?;
            let t = LscpInputs::new(q, ctx.alpha, ctx.alpha_tilde, ctx.scalar(ctx.cfg.norm_b, "norm_b")?, 0.0, 1.0)?;
            let gc = ctx.cfg.grid.clone().unwrap_or_default();
            let crit = chisq_quantile(1.0 - ctx.alpha_tilde, q)?;
            let lam = match (gc.lambda_values, gc.lambda) {
                (Some(v), _) => v,
                (None, Some(r)) => r.values(),
                (None, None) => linspace(0.0, 2.0 * crit.sqrt() + 10.0, 41),
            };
            let psi = match (gc.psi_values, gc.psi) {
                (Some(v), _) => v,
                (None, Some(r)) => r.values(),
                (None, None) => linspace(-1.0, 1.0, 41),
            };
            let g = grid(&t, &lam, &psi, &ctx.spec, exec)?;
            match ctx.format {
                OutputFormat::Json => json(&g)?,
                OutputFormat::Csv => report::grid_csv(&g)?,
            }
        }
        Command::Min(_) => {
            let mut search = ctx.search();
            if ctx.cfg.quadrature.is_some() {
                search.spec = ctx.spec;
            }
            let (q, norm_b) = match ctx.cfg.norm_b {
                Some(nb) => (ctx.q()?, nb),
                None => {
                    let (_, data) = ctx.load().map_err(|e| match e {
                        CliError::Config(m) => config_err(format!("min needs --norm-b or data: {m}")),
                        e => e,
                    })?;
                    let f = fit_models(&data)?;
                    (data.q(), derive_b(&f.theta_hat, &data)?.1)
                }
            };
            let m = minimize(norm_b, q, ctx.alpha, ctx.alpha_tilde, &search, exec)?;
            match ctx.format {
                OutputFormat::Json => json(&m)?,
                OutputFormat::Csv => report::min_trace_csv(&m)?,
            }
        }
        Command::Fit => {
            if ctx.format == OutputFormat::Csv {
                return Err(csv_unsupported("fit"));
            }
            let (spec, data) = ctx.load()?;
            let f = fit_models(&data)?;
            let iv = intervals(&data, &f, ctx.alpha, ctx.alpha_tilde)?;
            let fit = lscp_core::model::fit(&data)?;
            json(&FitReport {
                data: DataSummary {
                    path: spec.path,
                    rows: data.n(),
                    total_trials: data.trials.sum(),
                    p: data.p(),
                    q: data.q(),
                },
                fit,
                intervals: iv,
            })?
        }
        Command::Simulate(_) => {
            let (_, data) = ctx.load()?;
            let sc = ctx.cfg.simulate.clone().unwrap_or_default();
            let theta = match sc.theta {
                Some(t) => t,
                None => fit_models(&data)?.theta_hat.iter().copied().collect(),
            };
            let path = match (sc.gamma_points, sc.gamma_both) {
                (Some(p), _) => GammaPath::explicit(p),
                (None, r) => GammaPath::both(data.q(), &r.unwrap_or(DEFAULT_GAMMA_BOTH).values()),
            };
            let d = SimulationConfig::default();
            let cfg = SimulationConfig {
                n_sims: ctx.cfg.n_sims.unwrap_or(d.n_sims),
                replication_factor: sc.replication_factor.unwrap_or(1),
                seed: ctx.seed(),
                batch_size: sc.batch_size.unwrap_or(d.batch_size),
                spec: ctx.spec,
            };
            let r = simulate_finite_sample(&data, &theta, &path, ctx.alpha, ctx.alpha_tilde, &cfg, exec)?;
            match ctx.format {
                OutputFormat::Json => json(&r)?,
                OutputFormat::Csv => report::simulation_csv(&r)?,
            }
        }
        Command::Bootstrap(_) => {
            let (_, data) = ctx.load()?;
            let f = fit_models(&data)?;
            let bs = ctx.cfg.bootstrap.clone().unwrap_or_default();
            let d = BootstrapConfig::default();
            let cfg = BootstrapConfig {
                resamples: ctx.cfg.resamples.unwrap_or(d.resamples),
                level: bs.level.unwrap_or(d.level),
                seed: ctx.seed(),
                max_retries: bs.max_retries.unwrap_or(d.max_retries),
                max_failure_rate: bs.max_failure_rate.unwrap_or(d.max_failure_rate),
                jackknife: bs.jackknife.unwrap_or(d.jackknife),
                search: ctx.search(),
            };
            let r = bootstrap_min(&data, &f, ctx.alpha, ctx.alpha_tilde, &cfg, exec)?;
            match ctx.format {
                OutputFormat::Json => json(&r)?,
                OutputFormat::Csv => report::bootstrap_csv(&r)?,
            }
        }
        Command::OracleCheck(_) => {
            if ctx.format == OutputFormat::Csv {
                return Err(csv_unsupported("oracle-check"));
            }
            let os = ctx.cfg.oracle.clone().unwrap_or_default();
            let points = match (os.points, ctx.cfg.norm_b) {
                (_, Some(nb)) => vec![OraclePoint {
                    q: ctx.q()?,
                    norm_b: nb,
                    norm_lambda: ctx.scalar(ctx.cfg.norm_lambda, "norm_lambda")?,
                    psi: ctx.cfg.psi.unwrap_or(1.0),
                }],
                (Some(p), None) if !p.is_empty() => p,
                _ => return Err(config_err("oracle-check needs [oracle] points or --q/--norm-b/--norm-lambda/--psi")),
            };
            let seed = ctx.seed();
            let n_draws = os.n_draws.unwrap_or(OracleConfig::default().n_draws);
            let mut out = Vec::with_capacity(points.len());
            for (i, p) in points.iter().enumerate() {
                let inputs = LscpInputs::new(p.q, ctx.alpha, ctx.alpha_tilde, p.norm_b, p.norm_lambda, p.psi)?;
                let v = lscp(&inputs, &ctx.spec)?.total;
                let point_seed = seed.wrapping_add(i as u64);
                let o = oracle_lscp(&inputs, &OracleConfig { n_draws, seed: point_seed }, exec)?;
                let standardized = if o.std_error > 0.0 { (o.estimate - v) / o.std_error } else { 0.0 };
                out.push(OracleCheckPoint { inputs, lscp: v, oracle: o, seed: point_seed, standardized });
            }
            let max_abs_standardized = out.iter().map(|p| p.standardized.abs()).fold(0.0, f64::max);
            json(&OracleCheckReport { points: out, max_abs_standardized, n_draws, seed })?
        }
    };
    Ok(Emitted { text, path: ctx.cfg.output })
}

/// Write an emitted report to its destination.
pub fn emit(e: &Emitted) -> Result<()> {
    match &e.path {
        Some(p) => fs::write(p, &e.text).map_err(|err| CliError::Core(err.into())),
        None => {
            print!("{}", e.text);
            Ok(())
        }
    }
}
