//! Contour grids over `(|lambda|, psi)`, the minimum-coverage search, the
//! parametric bootstrap of that minimum, and the finite-sample coverage
//! simulation of the post-selection interval.
//!
//! Every stochastic task owns a ChaCha stream derived from the master seed
//! and its index, and all reductions run in index order, so reports do not
//! depend on the worker count.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::distributions::{chisq_quantile, normal_quantile, std_normal_cdf};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::lscp::{default_spec, lscp, LscpInputs};
use crate::model::{
    derive_b, derive_lambda, fit_full, fit_models, intervals, BinomialLogit, Fits, Interval, ModelData,
};
use crate::quadrature::QuadratureSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    pub q: usize,
    pub alpha: f64,
    pub alpha_tilde: f64,
    pub norm_b: f64,
    pub spec: QuadratureSpec,
    pub version: String,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub lambda_index: usize,
    pub psi_index: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageGrid {
    pub norm_lambda: Vec<f64>,
    pub psi: Vec<f64>,
    /// `values[i][j]` is the coverage at `(norm_lambda[i], psi[j])`; `None`
    /// for cells whose evaluation failed.
    pub values: Vec<Vec<Option<f64>>>,
    pub failures: Vec<CellFailure>,
    pub meta: GridMeta,
}

impl CoverageGrid {
    pub fn min_value(&self) -> Option<f64> {
        self.values.iter().flatten().flatten().copied().reduce(f64::min)
    }
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Evaluate the coverage on the tensor grid `lambda_grid x psi_grid`.
/// `template` supplies `q`, `alpha`, `alpha_tilde` and `|b|`.
pub fn grid(
    template: &LscpInputs,
    lambda_grid: &[f64],
    psi_grid: &[f64],
    spec: &QuadratureSpec,
    exec: Exec,
) -> Result<CoverageGrid> {
    template.validate()?;
    spec.validate()?;
    if let Some(l) = lambda_grid.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
        return Err(Error::domain(format!("|lambda| grid values must be finite and >= 0, got {l}")));
    }
    if let Some(p) = psi_grid.iter().find(|p| !(-1.0..=1.0).contains(*p)) {
        return Err(Error::domain(format!("psi grid values must lie in [-1, 1], got {p}")));
    }
    // The coverage is even in psi: evaluate each |psi| once and mirror, which
    // also makes the +psi and -psi columns bit-identical.
    let mut abs_psi: Vec<f64> = psi_grid.iter().map(|p| p.abs()).collect();
    abs_psi.sort_by(f64::total_cmp);
    abs_psi.dedup();
    let na = abs_psi.len();
    let cells = exec.map(lambda_grid.len() * na, |k| {
        let (i, j) = (k / na, k % na);
        template
            .with_norm_lambda(lambda_grid[i])
            .and_then(|t| t.with_psi(abs_psi[j]))
            .and_then(|inp| lscp(&inp, spec))
            .map(|b| b.total)
    });
    let np = psi_grid.len();
    let mut values = vec![vec![None; np]; lambda_grid.len()];
    let mut failures = Vec::new();
    for (i, row) in values.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            let a = abs_psi.binary_search_by(|x| x.total_cmp(&psi_grid[j].abs())).expect("present");
            match &cells[i * na + a] {
                Ok(v) => *cell = Some(*v),
                Err(e) => failures.push(CellFailure { lambda_index: i, psi_index: j, error: e.to_string() }),
            }
        }
    }
    Ok(CoverageGrid {
        norm_lambda: lambda_grid.to_vec(),
        psi: psi_grid.to_vec(),
        values,
        failures,
        meta: GridMeta {
            q: template.q,
            alpha: template.alpha,
            alpha_tilde: template.alpha_tilde,
            norm_b: template.norm_b,
            spec: *spec,
            version: env!("CARGO_PKG_VERSION").to_string(),
            note: "grid ranges are user or default choices, not taken from any published figure".into(),
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub lambda_points: usize,
    pub psi_points: usize,
    /// Upper end of the coarse `|lambda|` range; `2 sqrt(chi2_{1-alpha_tilde,q}) + 10` when absent.
    pub lambda_max: Option<f64>,
    /// How many times the `|lambda|` range may be doubled while the best
    /// coarse cell sits on its upper edge.
    pub max_extensions: usize,
    /// Quadrature for the coarse scan.
    pub coarse_spec: QuadratureSpec,
    /// Quadrature for the Nelder-Mead refinement and the reported minimum.
    pub spec: QuadratureSpec,
    /// Nelder-Mead stops when the simplex values span at most this much.
    pub tol: f64,
    pub max_iterations: usize,
    /// Number of best coarse cells used as Nelder-Mead starting points.
    pub starts: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            lambda_points: 41,
            psi_points: 41,
            lambda_max: None,
            max_extensions: 4,
            coarse_spec: QuadratureSpec::fixed(16),
            spec: default_spec(),
            tol: 1e-5,
            max_iterations: 200,
            starts: 2,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_points < 2 || self.psi_points < 2 {
            return Err(Error::Argument("search grid needs at least 2 points per axis".into()));
        }
        if let Some(l) = self.lambda_max {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::Argument(format!("lambda_max must be positive, got {l}")));
            }
        }
        if !(self.tol > 0.0) || self.starts == 0 {
            return Err(Error::Argument("tol must be positive and starts >= 1".into()));
        }
        self.coarse_spec.validate()?;
        self.spec.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Coarse,
    Refine,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub norm_lambda: f64,
    pub psi: f64,
    pub value: f64,
    pub stage: Stage,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArgMin {
    pub norm_lambda: f64,
    pub psi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinCoverageResult {
    pub min_value: f64,
    pub argmin: ArgMin,
    pub norm_b: f64,
    pub q: usize,
    pub alpha: f64,
    pub alpha_tilde: f64,
    pub lambda_max: f64,
    /// False when no Nelder-Mead run met the tolerance; `min_value` is then
    /// the best value seen anywhere.
    pub converged: bool,
    pub evaluations: usize,
    pub search_trace: Vec<TracePoint>,
    pub config: SearchConfig,
}

/// Minimum over `|lambda| >= 0`, `psi in [0, 1]` of the coverage. The
/// coverage is even in `psi`, so the negative half is never visited.
pub fn minimize(
    norm_b: f64,
    q: usize,
    alpha: f64,
    alpha_tilde: f64,
    cfg: &SearchConfig,
    exec: Exec,
) -> Result<MinCoverageResult> {
    cfg.validate()?;
    let base = LscpInputs::new(q, alpha, alpha_tilde, norm_b, 0.0, 1.0)?;
    let crit = chisq_quantile(1.0 - alpha_tilde, q)?;
    let mut lambda_max = cfg.lambda_max.unwrap_or(2.0 * crit.sqrt() + 10.0);
    let mut result = MinCoverageResult {
        min_value: 1.0 - alpha,
        argmin: ArgMin { norm_lambda: 0.0, psi: 1.0 },
        norm_b,
        q,
        alpha,
        alpha_tilde,
        lambda_max,
        converged: true,
        evaluations: 0,
        search_trace: Vec::new(),
        config: *cfg,
    };
    if norm_b == 0.0 {
        return Ok(result);
    }

    let eval = |l: f64, psi: f64, spec: &QuadratureSpec| -> Result<f64> {
        Ok(lscp(&base.with_norm_lambda(l)?.with_psi(psi)?, spec)?.total)
    };
    let psis = linspace(0.0, 1.0, cfg.psi_points);
    let mut trace = Vec::new();
    let scan = |lams: &[f64], trace: &mut Vec<TracePoint>| -> Result<()> {
        let g = grid(&base, lams, &psis, &cfg.coarse_spec, exec)?;
        if let Some(f) = g.failures.first() {
            return Err(Error::Numerical(format!("coarse scan failed: {}", f.error)));
        }
        for (i, row) in g.values.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                trace.push(TracePoint { norm_lambda: lams[i], psi: psis[j], value: v.unwrap(), stage: Stage::Coarse });
            }
        }
        Ok(())
    };
    let best_of = |t: &[TracePoint]| *t.iter().min_by(|a, b| a.value.total_cmp(&b.value)).unwrap();

    scan(&linspace(0.0, lambda_max, cfg.lambda_points), &mut trace)?;
    let mut best = best_of(&trace);
    let dl = lambda_max / (cfg.lambda_points - 1) as f64;
    for _ in 0..cfg.max_extensions {
        if best.norm_lambda < lambda_max {
            break;
        }
        let lams: Vec<f64> = (1..cfg.lambda_points)
            .map(|i| lambda_max + i as f64 * lambda_max / (cfg.lambda_points - 1) as f64)
            .collect();
        lambda_max *= 2.0;
        scan(&lams, &mut trace)?;
        let nb = best_of(&trace);
        let improved = nb.value < best.value;
        best = nb;
        if !improved {
            break;
        }
    }

    // Distinct starting cells, best first.
    let mut order: Vec<usize> = (0..trace.len()).collect();
    order.sort_by(|&a, &b| trace[a].value.total_cmp(&trace[b].value));
    let mut starts: Vec<TracePoint> = Vec::new();
    for &k in &order {
        let c = trace[k];
        if starts.iter().all(|s| (s.norm_lambda - c.norm_lambda).abs() > 2.0 * dl || (s.psi - c.psi).abs() > 0.1) {
            starts.push(c);
        }
        if starts.len() == cfg.starts {
            break;
        }
    }

    let bounds = [(0.0, lambda_max), (0.0, 1.0)];
    let steps = [dl, 1.0 / (cfg.psi_points - 1) as f64];
    let runs = exec.try_map(starts.len(), |k| {
        let mut local = Vec::new();
        let r = nelder_mead(
            |x| {
                let v = eval(x[0], x[1], &cfg.spec)?;
                local.push(TracePoint { norm_lambda: x[0], psi: x[1], value: v, stage: Stage::Refine });
                Ok(v)
            },
            [starts[k].norm_lambda, starts[k].psi],
            steps,
            bounds,
            cfg.tol,
            cfg.max_iterations,
        );
        r.map(|r| (r, local))
    })?;

    let mut converged = false;
    for (r, local) in runs {
        converged |= r.converged;
        trace.extend(local);
    }
    let refined = trace.iter().filter(|t| t.stage == Stage::Refine).min_by(|a, b| a.value.total_cmp(&b.value)).copied();
    let chosen = match refined {
        Some(r) if r.value <= best.value + 10.0 * cfg.tol => r,
        // The refinement should never lose to the coarse scan by more than
        // quadrature noise; if it does, report the coarse cell re-evaluated.
        _ => {
            let v = eval(best.norm_lambda, best.psi, &cfg.spec)?;
            converged = false;
            TracePoint { value: v, stage: Stage::Refine, ..best }
        }
    };
    result.min_value = chosen.value;
    result.argmin = ArgMin { norm_lambda: chosen.norm_lambda, psi: chosen.psi };
    result.lambda_max = lambda_max;
    result.converged = converged;
    result.evaluations = trace.len();
    result.search_trace = trace;
    Ok(result)
}

struct NmResult {
    converged: bool,
}

/// Box-constrained Nelder-Mead in two dimensions; trial points are projected
/// onto the box.
fn nelder_mead<F>(
    mut f: F,
    x0: [f64; 2],
    steps: [f64; 2],
    bounds: [(f64, f64); 2],
    tol: f64,
    max_iterations: usize,
) -> Result<NmResult>
where
    F: FnMut([f64; 2]) -> Result<f64>,
{
    let clamp = |x: [f64; 2]| [x[0].clamp(bounds[0].0, bounds[0].1), x[1].clamp(bounds[1].0, bounds[1].1)];
    let mut simplex: Vec<([f64; 2], f64)> = Vec::with_capacity(3);
    for k in 0..3 {
        let mut x = x0;
        if k > 0 {
            let d = k - 1;
            x[d] += steps[d];
            if x[d] > bounds[d].1 {
                x[d] = x0[d] - steps[d];
            }
        }
        let x = clamp(x);
        simplex.push((x, f(x)?));
    }
    for _ in 0..max_iterations {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if simplex[2].1 - simplex[0].1 <= tol {
            return Ok(NmResult { converged: true });
        }
        let c = [(simplex[0].0[0] + simplex[1].0[0]) / 2.0, (simplex[0].0[1] + simplex[1].0[1]) / 2.0];
        let w = simplex[2].0;
        let along = |t: f64| clamp([c[0] + t * (w[0] - c[0]), c[1] + t * (w[1] - c[1])]);
        let xr = along(-1.0);
        let fr = f(xr)?;
        if fr < simplex[0].1 {
            let xe = along(-2.0);
            let fe = f(xe)?;
            simplex[2] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[1].1 {
            simplex[2] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[2].1 {
                let x = along(-0.5);
                (x, f(x)?)
            } else {
                let x = along(0.5);
                (x, f(x)?)
            };
            if fc < simplex[2].1.min(fr) {
                simplex[2] = (xc, fc);
            } else {
                let b = simplex[0].0;
                for k in 1..3 {
                    let x = clamp([(b[0] + simplex[k].0[0]) / 2.0, (b[1] + simplex[k].0[1]) / 2.0]);
                    simplex[k] = (x, f(x)?);
                }
            }
        }
    }
    Ok(NmResult { converged: false })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JackknifeUnit {
    /// Leave out one covariate-pattern row at a time.
    Pattern,
    /// Leave out one individual trial at a time (two distinct fits per row).
    Observation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapConfig {
    pub resamples: usize,
    /// Confidence level of the percentile and BCa intervals.
    pub level: f64,
    pub seed: u64,
    /// Fresh draws allowed for a resample whose refit fails.
    pub max_retries: usize,
    /// Abort when failed refits exceed this fraction of attempts.
    pub max_failure_rate: f64,
    pub jackknife: JackknifeUnit,
    pub search: SearchConfig,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            resamples: 1000,
            level: 0.95,
            seed: 0x5eed,
            max_retries: 10,
            max_failure_rate: 0.05,
            jackknife: JackknifeUnit::Pattern,
            search: SearchConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapReport {
    /// Minimum coverage for each resample.
    pub resamples: Vec<f64>,
    pub norm_b_resamples: Vec<f64>,
    /// Minimum coverage at the observed fit.
    pub observed: f64,
    pub observed_norm_b: f64,
    pub percentile_interval: Interval,
    pub bca_interval: Interval,
    pub bias_correction: f64,
    pub acceleration: f64,
    pub jackknife_unit: JackknifeUnit,
    pub jackknife_values: usize,
    #[serde(rename = "B")]
    pub b: usize,
    pub seed: u64,
    pub level: f64,
    pub alpha: f64,
    pub alpha_tilde: f64,
    pub failed_refits: usize,
    pub attempts: usize,
    pub warnings: Vec<String>,
}

/// Linear-interpolation sample quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Minimum coverage implied by the full fit on `data`.
fn min_for_data(data: &ModelData, q: usize, alpha: f64, alpha_tilde: f64, search: &SearchConfig) -> Result<(f64, f64)> {
    let (theta, _, _) = fit_full(data)?;
    let (_, nb) = derive_b(&theta, data)?;
    let m = minimize(nb, q, alpha, alpha_tilde, search, Exec::Sequential)?;
    Ok((m.min_value, nb))
}

/// Leave-one-out datasets with their jackknife weights.
fn jackknife_sets(data: &ModelData, unit: JackknifeUnit) -> Result<Vec<(ModelData, f64)>> {
    let mut out = Vec::new();
    for i in 0..data.n() {
        let (y, m) = (data.successes[i], data.trials[i]);
        if m <= 0.0 {
            continue;
        }
        match unit {
            JackknifeUnit::Pattern => {
                let keep: Vec<usize> = (0..data.n()).filter(|&k| k != i).collect();
                let d = ModelData {
                    design_theta: data.design_theta.select_rows(keep.iter()),
                    design_gamma: data.design_gamma.select_rows(keep.iter()),
                    successes: data.successes.select_rows(keep.iter()),
                    trials: data.trials.select_rows(keep.iter()),
                    a: data.a.clone(),
                    gamma_tilde: data.gamma_tilde.clone(),
                };
                d.validate()?;
                out.push((d, 1.0));
            }
            JackknifeUnit::Observation => {
                if m.fract() != 0.0 {
                    return Err(Error::Data("observation jackknife needs integer trial counts".into()));
                }
                for (dy, w) in [(1.0, y), (0.0, m - y)] {
                    if w > 0.0 {
                        let mut d = data.clone();
                        d.successes[i] -= dy;
                        d.trials[i] -= 1.0;
                        d.validate()?;
                        out.push((d, w));
                    }
                }
            }
        }
    }
    Ok(out)
}

fn jackknife_acceleration(values: &[(f64, f64)]) -> f64 {
    // The ratio below is scale free, so rounding noise in the mean of equal
    // values would otherwise produce an arbitrary acceleration.
    if values.iter().all(|v| v.0 == values[0].0) {
        return 0.0;
    }
    let wsum: f64 = values.iter().map(|v| v.1).sum();
    let mean = values.iter().map(|v| v.0 * v.1).sum::<f64>() / wsum;
    let (mut s2, mut s3) = (0.0, 0.0);
    for &(v, w) in values {
        let d = mean - v;
        s2 += w * d * d;
        s3 += w * d * d * d;
    }
    if s2 > 0.0 {
        s3 / (6.0 * s2.powf(1.5))
    } else {
        0.0
    }
}

pub struct BootstrapIntervals {
    pub percentile: Interval,
    pub bca: Interval,
    pub bias_correction: f64,
    pub acceleration: f64,
    pub warnings: Vec<String>,
}

/// Percentile and BCa intervals from resampled values, the observed value and
/// weighted jackknife values `(value, weight)`.
pub fn bootstrap_intervals(
    resamples: &[f64],
    observed: f64,
    jack: &[(f64, f64)],
    level: f64,
) -> Result<BootstrapIntervals> {
    if resamples.is_empty() || jack.is_empty() {
        return Err(Error::Argument("need resamples and jackknife values".into()));
    }
    let mut warnings = Vec::new();
    let mut sorted = resamples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let tail = 0.5 * (1.0 - level);
    let percentile = Interval { lower: quantile_sorted(&sorted, tail), upper: quantile_sorted(&sorted, 1.0 - tail) };

    let nb = resamples.len() as f64;
    let below = resamples.iter().filter(|&&v| v < observed).count() as f64;
    let ties = resamples.iter().filter(|&&v| v == observed).count() as f64;
    let mut frac = (below + 0.5 * ties) / nb;
    if frac <= 0.0 || frac >= 1.0 {
        warnings.push(format!(
            "all resamples on one side of the observed value; bias-correction fraction clamped from {frac}"
        ));
        frac = frac.clamp(0.5 / nb, 1.0 - 0.5 / nb);
    }
    let z0 = normal_quantile(frac)?;
    let acceleration = jackknife_acceleration(jack);
    let adjust = |zq: f64| std_normal_cdf(z0 + (z0 + zq) / (1.0 - acceleration * (z0 + zq)));
    let zl = normal_quantile(tail)?;
    let bca = Interval { lower: quantile_sorted(&sorted, adjust(zl)), upper: quantile_sorted(&sorted, adjust(-zl)) };
    Ok(BootstrapIntervals { percentile, bca, bias_correction: z0, acceleration, warnings })
}

/// Parametric bootstrap of the minimum coverage: responses are redrawn at the
/// observed full-model MLE, the full model is refit, and the minimum is
/// recomputed at the resampled `|b|`.
pub fn bootstrap_min(
    data: &ModelData,
    fits: &Fits,
    alpha: f64,
    alpha_tilde: f64,
    cfg: &BootstrapConfig,
    exec: Exec,
) -> Result<BootstrapReport> {
    if cfg.resamples < 100 {
        return Err(Error::Argument(format!("need at least 100 resamples, got {}", cfg.resamples)));
    }
    if !(cfg.level > 0.0 && cfg.level < 1.0) {
        return Err(Error::Argument(format!("level must lie in (0, 1), got {}", cfg.level)));
    }
    cfg.search.validate()?;
    let q = data.q();
    let (_, observed_norm_b) = derive_b(&fits.theta_hat, data)?;
    let observed = minimize(observed_norm_b, q, alpha, alpha_tilde, &cfg.search, exec)?.min_value;

    let draws = exec.map(cfg.resamples, |b| {
        let mut rng = stream_rng(cfg.seed, b as u64);
        let mut failures = 0;
        for _ in 0..=cfg.max_retries {
            let attempt =
                data.simulate_response(&BinomialLogit, &fits.theta_hat, &fits.gamma_hat, &mut rng).and_then(|y| {
                    let mut d = data.clone();
                    d.successes = y;
                    min_for_data(&d, q, alpha, alpha_tilde, &cfg.search)
                });
            match attempt {
                Ok(v) => return (Some(v), failures),
                Err(_) => failures += 1,
            }
        }
        (None, failures)
    });
    let failed_refits: usize = draws.iter().map(|d| d.1).sum();
    let attempts = cfg.resamples + failed_refits;
    if draws.iter().any(|d| d.0.is_none()) || failed_refits as f64 > cfg.max_failure_rate * attempts as f64 {
        return Err(Error::TooManyFailures { failed: failed_refits, attempted: attempts });
    }
    let (resamples, norm_b_resamples): (Vec<f64>, Vec<f64>) = draws.iter().map(|d| d.0.unwrap()).unzip();

    let mut warnings = Vec::new();
    let mut unit = cfg.jackknife;
    let jack = match jackknife_values(data, unit, q, alpha, alpha_tilde, &cfg.search, exec) {
        Ok(v) => v,
        Err(e) if unit == JackknifeUnit::Pattern => {
            warnings.push(format!("pattern jackknife failed ({e}); used the observation jackknife instead"));
            unit = JackknifeUnit::Observation;
            jackknife_values(data, unit, q, alpha, alpha_tilde, &cfg.search, exec)?
        }
        Err(e) => return Err(e),
    };
    let s = bootstrap_intervals(&resamples, observed, &jack, cfg.level)?;
    warnings.extend(s.warnings);

    Ok(BootstrapReport {
        resamples,
        norm_b_resamples,
        observed,
        observed_norm_b,
        percentile_interval: s.percentile,
        bca_interval: s.bca,
        bias_correction: s.bias_correction,
        acceleration: s.acceleration,
        jackknife_unit: unit,
        jackknife_values: jack.len(),
        b: cfg.resamples,
        seed: cfg.seed,
        level: cfg.level,
        alpha,
        alpha_tilde,
        failed_refits,
        attempts,
        warnings,
    })
}

fn jackknife_values(
    data: &ModelData,
    unit: JackknifeUnit,
    q: usize,
    alpha: f64,
    alpha_tilde: f64,
    search: &SearchConfig,
    exec: Exec,
) -> Result<Vec<(f64, f64)>> {
    let sets = jackknife_sets(data, unit)?;
    exec.try_map(sets.len(), |k| min_for_data(&sets[k].0, q, alpha, alpha_tilde, search).map(|(v, _)| (v, sets[k].1)))
}

/// Points at which the finite-sample coverage is estimated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaPath {
    pub points: Vec<Vec<f64>>,
    /// Common value when every coordinate of each point is equal.
    pub gamma_both: Option<Vec<f64>>,
}

impl GammaPath {
    /// `gamma_1 = ... = gamma_q = v` for each `v`.
    pub fn both(q: usize, values: &[f64]) -> Self {
        Self { points: values.iter().map(|&v| vec![v; q]).collect(), gamma_both: Some(values.to_vec()) }
    }

    pub fn explicit(points: Vec<Vec<f64>>) -> Self {
        Self { points, gamma_both: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    pub n_sims: usize,
    pub replication_factor: usize,
    pub seed: u64,
    /// Replicates per RNG stream.
    pub batch_size: usize,
    pub spec: QuadratureSpec,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self { n_sims: 40_000, replication_factor: 1, seed: 0x5eed, batch_size: 500, spec: default_spec() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationPoint {
    pub gamma: Vec<f64>,
    pub finite_sample_cp: f64,
    pub std_error: f64,
    pub covered: usize,
    pub kept: usize,
    pub discarded: usize,
    /// Fraction of kept replicates in which the pretest rejected.
    pub rejection_rate: f64,
    pub norm_lambda: f64,
    pub psi: f64,
    pub large_sample_cp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub gamma_path: GammaPath,
    pub points: Vec<SimulationPoint>,
    pub theta: Vec<f64>,
    pub norm_b: f64,
    pub n_sims: usize,
    pub replication_factor: usize,
    pub alpha: f64,
    pub alpha_tilde: f64,
    pub seed: u64,
    pub discard_rate: f64,
}

impl SimulationReport {
    pub fn max_abs_difference(&self) -> f64 {
        self.points.iter().map(|p| (p.finite_sample_cp - p.large_sample_cp).abs()).fold(0.0, f64::max)
    }
}

#[derive(Default, Clone, Copy)]
struct Tally {
    covered: usize,
    rejected: usize,
    kept: usize,
    discarded: usize,
}

/// Finite-sample coverage of the post-selection interval for `phi = a'theta`
/// with `theta` held fixed and `gamma` moving along `path`.
pub fn simulate_finite_sample(
    data: &ModelData,
    theta: &[f64],
    path: &GammaPath,
    alpha: f64,
    alpha_tilde: f64,
    cfg: &SimulationConfig,
    exec: Exec,
) -> Result<SimulationReport> {
    if cfg.n_sims == 0 || cfg.batch_size == 0 {
        return Err(Error::Argument("n_sims and batch_size must be positive".into()));
    }
    if theta.len() != data.p() {
        return Err(Error::DimensionMismatch { context: "theta", expected: data.p(), found: theta.len() });
    }
    if let Some(g) = path.points.iter().find(|g| g.len() != data.q()) {
        return Err(Error::DimensionMismatch { context: "gamma path point", expected: data.q(), found: g.len() });
    }
    if path.points.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::Argument("gamma path must be finite".into()));
    }
    let data = data.replicated(cfg.replication_factor)?;
    let theta = DVector::from_column_slice(theta);
    let phi = data.a.dot(&theta);
    let (_, norm_b) = derive_b(&theta, &data)?;

    let batches = cfg.n_sims.div_ceil(cfg.batch_size);
    let tasks = path.points.len() * batches;
    let tallies = exec.try_map(tasks, |k| -> Result<Tally> {
        let (point, batch) = (k / batches, k % batches);
        let gamma = DVector::from_column_slice(&path.points[point]);
        let mut rng = stream_rng(cfg.seed, ((point as u64) << 32) | batch as u64);
        let count = cfg.batch_size.min(cfg.n_sims - batch * cfg.batch_size);
        let mut t = Tally::default();
        let mut d = data.clone();
        for _ in 0..count {
            d.successes = data.simulate_response(&BinomialLogit, &theta, &gamma, &mut rng)?;
            match fit_models(&d).and_then(|f| intervals(&d, &f, alpha, alpha_tilde)) {
                Ok(iv) => {
                    t.kept += 1;
                    t.covered += usize::from(iv.post_selection.contains(phi));
                    t.rejected += usize::from(iv.wald > iv.critical_value);
                }
                Err(_) => t.discarded += 1,
            }
        }
        Ok(t)
    })?;

    let mut points = Vec::with_capacity(path.points.len());
    let (mut kept_all, mut discarded_all) = (0, 0);
    for (i, g) in path.points.iter().enumerate() {
        let t = tallies[i * batches..(i + 1) * batches].iter().fold(Tally::default(), |a, b| Tally {
            covered: a.covered + b.covered,
            rejected: a.rejected + b.rejected,
            kept: a.kept + b.kept,
            discarded: a.discarded + b.discarded,
        });
        kept_all += t.kept;
        discarded_all += t.discarded;
        let (cp, se, rej) = if t.kept > 0 {
            let n = t.kept as f64;
            let p = t.covered as f64 / n;
            (p, (p * (1.0 - p) / n).sqrt(), t.rejected as f64 / n)
        } else {
            (f64::NAN, f64::NAN, f64::NAN)
        };
        let lam = derive_lambda(&theta, &DVector::from_column_slice(g), &data)?;
        let large = lscp(&LscpInputs::new(data.q(), alpha, alpha_tilde, norm_b, lam.norm_lambda, lam.psi)?, &cfg.spec)?;
        points.push(SimulationPoint {
            gamma: g.clone(),
            finite_sample_cp: cp,
            std_error: se,
            covered: t.covered,
            kept: t.kept,
            discarded: t.discarded,
            rejection_rate: rej,
            norm_lambda: lam.norm_lambda,
            psi: lam.psi,
            large_sample_cp: large.total,
        });
    }
    Ok(SimulationReport {
        gamma_path: path.clone(),
        points,
        theta: theta.iter().copied().collect(),
        norm_b,
        n_sims: cfg.n_sims,
        replication_factor: cfg.replication_factor,
        alpha,
        alpha_tilde,
        seed: cfg.seed,
        discard_rate: discarded_all as f64 / (kept_all + discarded_all).max(1) as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn template(norm_b: f64) -> LscpInputs {
        LscpInputs::new(2, 0.05, 0.05, norm_b, 0.0, 1.0).unwrap()
    }

    #[test]
    fn grid_b_zero_is_constant() {
        let g = grid(&template(0.0), &[0.0, 1.0, 5.0], &[-0.5, 0.0, 0.7], &default_spec(), Exec::default()).unwrap();
        assert!(g.values.iter().flatten().all(|v| *v == Some(0.95)));
        assert!(g.failures.is_empty());
    }

    #[test]
    fn grid_is_even_in_psi_and_flat_at_lambda_zero() {
        let psi = [-0.9, -0.5, 0.0, 0.5, 0.9];
        let g = grid(&template(0.7), &[0.0, 0.8, 2.5, 6.0], &psi, &default_spec(), Exec::default()).unwrap();
        for row in &g.values {
            for j in 0..psi.len() {
                assert_eq!(row[j], row[psi.len() - 1 - j]);
            }
        }
        let first = g.values[0][0];
        assert!(g.values[0].iter().all(|v| *v == first));
    }

    #[test]
    fn grid_rejects_bad_axes() {
        assert!(grid(&template(0.5), &[-1.0], &[0.0], &default_spec(), Exec::default()).is_err());
        assert!(grid(&template(0.5), &[1.0], &[1.5], &default_spec(), Exec::default()).is_err());
    }

    #[test]
    fn grid_cells_reproducible_across_policies() {
        let a = grid(&template(0.6), &[0.5, 1.5, 3.0], &[0.0, 0.4, 1.0], &default_spec(), Exec::Sequential).unwrap();
        let b = grid(&template(0.6), &[0.5, 1.5, 3.0], &[0.0, 0.4, 1.0], &default_spec(), Exec::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn minimize_b_zero_is_nominal() {
        let m = minimize(0.0, 2, 0.05, 0.05, &SearchConfig::default(), Exec::default()).unwrap();
        assert_eq!(m.min_value, 0.95);
    }

    #[test]
    fn minimize_beats_every_grid_value() {
        let cfg = SearchConfig::default();
        let m = minimize(0.8, 2, 0.05, 0.05, &cfg, Exec::default()).unwrap();
        assert!(m.converged);
        assert!(m.min_value < 0.95);
        assert!((0.0..=1.0).contains(&m.argmin.psi));
        let g =
            grid(&template(0.8), &linspace(0.0, 15.0, 31), &linspace(-1.0, 1.0, 21), &default_spec(), Exec::default())
                .unwrap();
        assert!(m.min_value <= g.min_value().unwrap() + 1e-6, "{} vs {}", m.min_value, g.min_value().unwrap());
        let coarse_min =
            m.search_trace.iter().filter(|t| t.stage == Stage::Coarse).map(|t| t.value).fold(1.0, f64::min);
        assert!(m.min_value <= coarse_min + 1e-5);
        // Direct check that the point is a local minimum at the grid scale.
        let at = |l: f64, p: f64| {
            lscp(&template(0.8).with_norm_lambda(l).unwrap().with_psi(p).unwrap(), &default_spec()).unwrap().total
        };
        for (dl, dp) in [(0.05, 0.0), (-0.05, 0.0), (0.0, 0.02), (0.0, -0.02)] {
            let (l, p) = ((m.argmin.norm_lambda + dl).max(0.0), (m.argmin.psi + dp).clamp(0.0, 1.0));
            assert!(m.min_value <= at(l, p) + 1e-5);
        }
    }

    #[test]
    fn superset_grid_min_is_no_larger() {
        let small =
            grid(&template(0.6), &linspace(0.0, 6.0, 7), &linspace(0.0, 1.0, 5), &default_spec(), Exec::default())
                .unwrap();
        let big =
            grid(&template(0.6), &linspace(0.0, 6.0, 13), &linspace(0.0, 1.0, 9), &default_spec(), Exec::default())
                .unwrap();
        assert!(big.min_value().unwrap() <= small.min_value().unwrap());
    }

    #[test]
    fn lambda_range_extends_when_minimum_sits_on_edge() {
        let cfg = SearchConfig { lambda_max: Some(1.0), lambda_points: 6, psi_points: 6, ..Default::default() };
        let m = minimize(0.8, 2, 0.05, 0.05, &cfg, Exec::default()).unwrap();
        assert!(m.lambda_max > 1.0);
        assert!(m.argmin.norm_lambda > 1.0);
    }

    #[test]
    fn quantiles() {
        let s = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile_sorted(&s, 0.0), 1.0);
        assert_eq!(quantile_sorted(&s, 0.5), 3.0);
        assert_eq!(quantile_sorted(&s, 0.125), 1.5);
        assert_eq!(quantile_sorted(&[7.0], 0.3), 7.0);
    }

    #[test]
    fn acceleration_formula() {
        assert_eq!(jackknife_acceleration(&[(1.0, 1.0), (1.0, 2.0)]), 0.0);
        // symmetric values give zero skewness
        assert!(jackknife_acceleration(&[(0.0, 1.0), (1.0, 1.0), (2.0, 1.0)]).abs() < 1e-15);
        let a = jackknife_acceleration(&[(0.0, 1.0), (0.0, 1.0), (3.0, 1.0)]);
        // mean 1, d = (1, 1, -2): sum d^3 = -6, sum d^2 = 6
        assert!((a - (-6.0 / (6.0 * 6f64.powf(1.5)))).abs() < 1e-15);
    }

    fn small_design() -> ModelData {
        let mut xt = Vec::new();
        let mut xg = Vec::new();
        for x1 in 0..2 {
            for x2 in 0..3 {
                let (x1, x2) = (x1 as f64, x2 as f64);
                xt.extend([1.0, x1, x2]);
                xg.extend([x1 * x2, x2 * x2]);
            }
        }
        ModelData::new(
            DMatrix::from_row_slice(6, 3, &xt),
            DMatrix::from_row_slice(6, 2, &xg),
            DVector::from_column_slice(&[18.0, 30.0, 36.0, 34.0, 41.0, 55.0]),
            DVector::from_element(6, 70.0),
            DVector::from_column_slice(&[0.0, 1.0, 0.0]),
            DVector::zeros(2),
        )
        .unwrap()
    }

    fn cheap_search() -> SearchConfig {
        SearchConfig {
            lambda_points: 15,
            psi_points: 11,
            spec: QuadratureSpec::fixed(32),
            tol: 1e-4,
            ..Default::default()
        }
    }

    #[test]
    fn bootstrap_is_deterministic_and_ordered() {
        let d = small_design();
        let f = fit_models(&d).unwrap();
        let cfg = BootstrapConfig { resamples: 100, seed: 3, search: cheap_search(), ..Default::default() };
        let a = bootstrap_min(&d, &f, 0.05, 0.05, &cfg, Exec::default()).unwrap();
        let b = bootstrap_min(&d, &f, 0.05, 0.05, &cfg, Exec::Sequential).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.resamples.len(), 100);
        let p = a.percentile_interval;
        assert!(p.lower <= p.upper && a.bca_interval.lower <= a.bca_interval.upper);
        let mut s = a.resamples.clone();
        s.sort_by(f64::total_cmp);
        let med = quantile_sorted(&s, 0.5);
        assert!(p.contains(med));
        assert!(a.resamples.iter().all(|v| (0.0..=0.95 + 1e-9).contains(v)));
    }

    #[test]
    fn identical_resamples_collapse_both_intervals() {
        let r = bootstrap_intervals(&[0.4; 200], 0.4, &[(0.4, 1.0); 6], 0.95).unwrap();
        assert_eq!((r.percentile.lower, r.percentile.upper), (0.4, 0.4));
        assert_eq!((r.bca.lower, r.bca.upper), (0.4, 0.4));
        assert_eq!((r.bias_correction, r.acceleration), (0.0, 0.0));
        assert!(r.warnings.is_empty());
    }

    #[test]
    fn bca_without_bias_or_skew_matches_percentile() {
        let vals: Vec<f64> = (0..1001).map(|i| i as f64 / 1000.0).collect();
        let r = bootstrap_intervals(&vals, 0.5, &[(0.0, 1.0), (1.0, 1.0), (2.0, 1.0)], 0.9).unwrap();
        assert!((r.bca.lower - r.percentile.lower).abs() < 1e-12);
        assert!((r.bca.upper - r.percentile.upper).abs() < 1e-12);
        assert!((r.percentile.lower - 0.05).abs() < 1e-12);
    }

    #[test]
    fn bca_shifts_with_bias() {
        let vals: Vec<f64> = (0..1000).map(|i| i as f64 / 999.0).collect();
        let r = bootstrap_intervals(&vals, 0.7, &[(0.0, 1.0), (1.0, 1.0), (2.0, 1.0)], 0.9).unwrap();
        assert!(r.bias_correction > 0.0);
        assert!(r.bca.lower > r.percentile.lower && r.bca.upper > r.percentile.upper);
        let r = bootstrap_intervals(&vals, 2.0, &[(0.0, 1.0)], 0.9).unwrap();
        assert_eq!(r.warnings.len(), 1);
    }

    #[test]
    fn bootstrap_rejects_small_b() {
        let d = small_design();
        let f = fit_models(&d).unwrap();
        let cfg = BootstrapConfig { resamples: 50, ..Default::default() };
        assert!(matches!(bootstrap_min(&d, &f, 0.05, 0.05, &cfg, Exec::default()), Err(Error::Argument(_))));
    }

    #[test]
    fn jackknife_sets_weights() {
        let d = small_design();
        let obs = jackknife_sets(&d, JackknifeUnit::Observation).unwrap();
        assert_eq!(obs.len(), 12);
        assert_eq!(obs.iter().map(|s| s.1).sum::<f64>(), d.trials.sum());
        let pat = jackknife_sets(&d, JackknifeUnit::Pattern);
        // Six patterns and five parameters: dropping any pattern leaves a
        // square but still nonsingular design.
        assert_eq!(pat.unwrap().len(), 6);
    }

    #[test]
    fn simulation_reports_consistent_tallies() {
        let d = small_design();
        let f = fit_models(&d).unwrap();
        let theta: Vec<f64> = f.theta_hat.iter().copied().collect();
        let path = GammaPath::both(2, &[-0.1, 0.0, 0.1]);
        let cfg = SimulationConfig { n_sims: 2000, seed: 9, ..Default::default() };
        let a = simulate_finite_sample(&d, &theta, &path, 0.05, 0.05, &cfg, Exec::default()).unwrap();
        let b = simulate_finite_sample(&d, &theta, &path, 0.05, 0.05, &cfg, Exec::Sequential).unwrap();
        assert_eq!(a, b);
        for p in &a.points {
            assert_eq!(p.kept + p.discarded, 2000);
            let n = p.kept as f64;
            let cp = p.covered as f64 / n;
            assert_eq!(p.finite_sample_cp, cp);
            assert_eq!(p.std_error, (cp * (1.0 - cp) / n).sqrt());
            assert!(p.std_error <= 0.5 / n.sqrt());
            assert!((0.0..=1.0).contains(&p.finite_sample_cp));
        }
        assert_eq!(a.points[1].norm_lambda, 0.0);
        assert_eq!(a.points[1].psi, 1.0);
        let sym = (a.points[0].norm_lambda - a.points[2].norm_lambda).abs();
        assert!(sym < 1e-12);
    }

    #[test]
    fn replication_scales_lambda() {
        let d = small_design();
        let f = fit_models(&d).unwrap();
        let theta: Vec<f64> = f.theta_hat.iter().copied().collect();
        let path = GammaPath::both(2, &[0.2]);
        let one = SimulationConfig { n_sims: 10, ..Default::default() };
        let four = SimulationConfig { replication_factor: 4, ..one };
        let a = simulate_finite_sample(&d, &theta, &path, 0.05, 0.05, &one, Exec::default()).unwrap();
        let b = simulate_finite_sample(&d, &theta, &path, 0.05, 0.05, &four, Exec::default()).unwrap();
        assert!((b.points[0].norm_lambda - 2.0 * a.points[0].norm_lambda).abs() < 1e-10);
        assert!((a.norm_b - b.norm_b).abs() < 1e-12);
    }
}
