//! Full and restricted regression fits, the partitioned information matrix,
//! and the quantities the coverage formula is driven by: `b`, `lambda`, the
//! Wald pretest statistic and the intervals `J`, `J_r` and `K`.
//!
//! Parameters are split as `(theta, gamma)`; the restricted model fixes
//! `gamma = gamma_tilde`. The information used everywhere is the total
//! expected information `X' W X`, so `lambda` and the interval widths already
//! carry the sample size.

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::distributions::{chisq_quantile, normal_quantile};
use crate::error::{Error, Result};

pub const MAX_ITERATIONS: usize = 50;
pub const DEVIANCE_RTOL: f64 = 1e-10;
pub const SCORE_TOL: f64 = 1e-8;
/// Sup-norm of the coefficients beyond which the fit is declared separated.
pub const COEF_BOUND: f64 = 50.0;
/// Condition number above which inverses fall back to the eigen route.
pub const CONDITION_WARN: f64 = 1e12;

/// Seam for response distributions with a canonical link, where the score is
/// `X'(y - E y)` and the expected and observed information coincide.
pub trait Family: Send + Sync {
    fn name(&self) -> &'static str;
    /// Mean per trial at linear predictor `eta`.
    fn mean(&self, eta: f64) -> f64;
    /// Information weight of a row with `trials` trials.
    fn weight(&self, eta: f64, trials: f64) -> f64;
    /// Log-likelihood up to terms free of `eta`.
    fn log_lik(&self, y: f64, trials: f64, eta: f64) -> f64;
    fn deviance(&self, y: f64, trials: f64, eta: f64) -> f64;
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R, trials: f64, eta: f64) -> Result<f64>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BinomialLogit;

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

impl Family for BinomialLogit {
    fn name(&self) -> &'static str {
        "binomial-logit"
    }

    fn mean(&self, eta: f64) -> f64 {
        if eta >= 0.0 {
            1.0 / (1.0 + (-eta).exp())
        } else {
            let e = eta.exp();
            e / (1.0 + e)
        }
    }

    fn weight(&self, eta: f64, trials: f64) -> f64 {
        let p = self.mean(eta);
        trials * p * (1.0 - p)
    }

    fn log_lik(&self, y: f64, trials: f64, eta: f64) -> f64 {
        y * eta - trials * softplus(eta)
    }

    fn deviance(&self, y: f64, trials: f64, eta: f64) -> f64 {
        // 2 [y log(y / mu) + (m - y) log((m - y) / (m - mu))], 0 log 0 = 0
        let mut d = 0.0;
        if y > 0.0 {
            d += y * ((y / trials).ln() + softplus(-eta));
        }
        if trials - y > 0.0 {
            d += (trials - y) * (((trials - y) / trials).ln() + softplus(eta));
        }
        2.0 * d.max(0.0)
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R, trials: f64, eta: f64) -> Result<f64> {
        if trials.fract() != 0.0 || trials < 0.0 {
            return Err(Error::Data(format!("cannot simulate binomial response with {trials} trials")));
        }
        let d = Binomial::new(trials as u64, self.mean(eta)).map_err(|e| Error::Numerical(e.to_string()))?;
        Ok(d.sample(rng) as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelData {
    pub design_theta: DMatrix<f64>,
    pub design_gamma: DMatrix<f64>,
    pub successes: DVector<f64>,
    pub trials: DVector<f64>,
    pub a: DVector<f64>,
    pub gamma_tilde: DVector<f64>,
}

impl ModelData {
    pub fn new(
        design_theta: DMatrix<f64>,
        design_gamma: DMatrix<f64>,
        successes: DVector<f64>,
        trials: DVector<f64>,
        a: DVector<f64>,
        gamma_tilde: DVector<f64>,
    ) -> Result<Self> {
        let d = Self { design_theta, design_gamma, successes, trials, a, gamma_tilde };
        d.validate()?;
        Ok(d)
    }

    pub fn n(&self) -> usize {
        self.design_theta.nrows()
    }
    pub fn p(&self) -> usize {
        self.design_theta.ncols()
    }
    pub fn q(&self) -> usize {
        self.design_gamma.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        let check = |context, expected: usize, found: usize| {
            if expected == found {
                Ok(())
            } else {
                Err(Error::DimensionMismatch { context, expected, found })
            }
        };
        check("design_gamma rows", n, self.design_gamma.nrows())?;
        check("successes", n, self.successes.len())?;
        check("trials", n, self.trials.len())?;
        check("a_vector", self.p(), self.a.len())?;
        check("gamma_tilde", self.q(), self.gamma_tilde.len())?;
        if self.p() == 0 || self.q() == 0 {
            return Err(Error::Design("need at least one theta and one gamma column".into()));
        }
        if self.a.iter().all(|&x| x == 0.0) {
            return Err(Error::Argument("a_vector must be nonzero".into()));
        }
        let finite = |m: &DMatrix<f64>| m.iter().all(|x| x.is_finite());
        if !finite(&self.design_theta) || !finite(&self.design_gamma) {
            return Err(Error::Data("design contains non-finite entries".into()));
        }
        if !self.a.iter().chain(self.gamma_tilde.iter()).all(|x| x.is_finite()) {
            return Err(Error::Argument("a_vector and gamma_tilde must be finite".into()));
        }
        for i in 0..n {
            let (y, m) = (self.successes[i], self.trials[i]);
            if !(y >= 0.0 && m >= y && m.is_finite()) {
                return Err(Error::Data(format!("row {}: need trials >= successes >= 0, got {y}/{m}", i + 1)));
            }
        }
        if self.trials.sum() <= 0.0 {
            return Err(Error::Data("no trials".into()));
        }
        let x = self.active_design();
        let sv = x.clone().svd(false, false).singular_values;
        let (lo, hi) = (sv.min(), sv.max());
        if x.nrows() < x.ncols() || !(lo > 1e-10 * hi) {
            return Err(Error::Design(format!(
                "[theta | gamma] design is rank deficient (singular values {lo:.3e} .. {hi:.3e})"
            )));
        }
        Ok(())
    }

    /// `[design_theta | design_gamma]`.
    pub fn full_design(&self) -> DMatrix<f64> {
        let (n, p, q) = (self.n(), self.p(), self.q());
        let mut x = DMatrix::zeros(n, p + q);
        x.view_mut((0, 0), (n, p)).copy_from(&self.design_theta);
        x.view_mut((0, p), (n, q)).copy_from(&self.design_gamma);
        x
    }

    fn active_design(&self) -> DMatrix<f64> {
        let rows: Vec<usize> = (0..self.n()).filter(|&i| self.trials[i] > 0.0).collect();
        self.full_design().select_rows(rows.iter())
    }

    /// Same covariates with a new response vector.
    pub fn with_successes(&self, successes: DVector<f64>) -> Result<Self> {
        let mut d = self.clone();
        d.successes = successes;
        d.validate()?;
        Ok(d)
    }

    /// The design stacked `factor` times. For grouped binomial data this is
    /// the same as multiplying every trial count, which is what is stored.
    pub fn replicated(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::Argument("replication factor must be >= 1".into()));
        }
        let mut d = self.clone();
        d.successes *= factor as f64;
        d.trials *= factor as f64;
        Ok(d)
    }

    pub fn linear_predictor(&self, theta: &DVector<f64>, gamma: &DVector<f64>) -> DVector<f64> {
        &self.design_theta * theta + &self.design_gamma * gamma
    }

    /// Draw a fresh response vector at `(theta, gamma)`.
    pub fn simulate_response<F: Family, R: Rng + ?Sized>(
        &self,
        family: &F,
        theta: &DVector<f64>,
        gamma: &DVector<f64>,
        rng: &mut R,
    ) -> Result<DVector<f64>> {
        let eta = self.linear_predictor(theta, gamma);
        let mut y = DVector::zeros(self.n());
        for i in 0..self.n() {
            y[i] = family.sample(rng, self.trials[i], eta[i])?;
        }
        Ok(y)
    }
}

/// Information matrix at a parameter point together with its inverse.
#[derive(Debug, Clone)]
pub struct Information {
    pub p: usize,
    pub info: DMatrix<f64>,
    pub inverse: DMatrix<f64>,
    pub condition_number: f64,
}

impl Information {
    fn block(m: &DMatrix<f64>, p: usize, theta_rows: bool, theta_cols: bool) -> DMatrix<f64> {
        let k = m.nrows();
        let (r0, nr) = if theta_rows { (0, p) } else { (p, k - p) };
        let (c0, nc) = if theta_cols { (0, p) } else { (p, k - p) };
        m.view((r0, c0), (nr, nc)).into_owned()
    }
    pub fn theta_theta(&self) -> DMatrix<f64> {
        Self::block(&self.info, self.p, true, true)
    }
    pub fn theta_gamma(&self) -> DMatrix<f64> {
        Self::block(&self.info, self.p, true, false)
    }
    pub fn gamma_theta(&self) -> DMatrix<f64> {
        Self::block(&self.info, self.p, false, true)
    }
    pub fn gamma_gamma(&self) -> DMatrix<f64> {
        Self::block(&self.info, self.p, false, false)
    }
    pub fn inv_theta_theta(&self) -> DMatrix<f64> {
        Self::block(&self.inverse, self.p, true, true)
    }
    pub fn inv_theta_gamma(&self) -> DMatrix<f64> {
        Self::block(&self.inverse, self.p, true, false)
    }
    pub fn inv_gamma_theta(&self) -> DMatrix<f64> {
        Self::block(&self.inverse, self.p, false, true)
    }
    pub fn inv_gamma_gamma(&self) -> DMatrix<f64> {
        Self::block(&self.inverse, self.p, false, false)
    }

    pub fn report(&self) -> InformationReport {
        InformationReport {
            info: rows(&self.info),
            inverse: rows(&self.inverse),
            theta_theta: rows(&self.theta_theta()),
            theta_gamma: rows(&self.theta_gamma()),
            gamma_theta: rows(&self.gamma_theta()),
            gamma_gamma: rows(&self.gamma_gamma()),
            inv_theta_theta: rows(&self.inv_theta_theta()),
            inv_theta_gamma: rows(&self.inv_theta_gamma()),
            inv_gamma_theta: rows(&self.inv_gamma_theta()),
            inv_gamma_gamma: rows(&self.inv_gamma_gamma()),
            condition_number: self.condition_number,
        }
    }
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn to_vec(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

fn weighted_gram<F: Family>(family: &F, x: &DMatrix<f64>, eta: &DVector<f64>, trials: &DVector<f64>) -> DMatrix<f64> {
    let mut xw = x.clone();
    for (i, mut row) in xw.row_iter_mut().enumerate() {
        row *= family.weight(eta[i], trials[i]);
    }
    let g = x.transpose() * xw;
    (&g + g.transpose()) * 0.5
}

/// Inverse of a symmetric positive definite matrix, with its condition
/// number. Cholesky first; the eigen route is used when Cholesky fails or the
/// matrix is badly conditioned.
pub fn spd_inverse(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    let eig = m.clone().symmetric_eigen();
    let (lo, hi) = (eig.eigenvalues.min(), eig.eigenvalues.max());
    if !(lo > 0.0) || !hi.is_finite() {
        return Err(Error::Numerical(format!("matrix is not positive definite (eigenvalues {lo:.3e} .. {hi:.3e})")));
    }
    let cond = hi / lo;
    if cond <= CONDITION_WARN {
        if let Some(ch) = m.clone().cholesky() {
            return Ok((ch.inverse(), cond));
        }
    }
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v));
    let inv = &eig.eigenvectors * d * eig.eigenvectors.transpose();
    Ok(((&inv + inv.transpose()) * 0.5, cond))
}

/// Symmetric positive definite inverse square root `M^{-1/2}`.
pub fn inverse_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = m.clone().symmetric_eigen();
    if !(eig.eigenvalues.min() > 0.0) {
        return Err(Error::Numerical("inverse square root of a matrix that is not positive definite".into()));
    }
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v.sqrt()));
    let r = &eig.eigenvectors * d * eig.eigenvectors.transpose();
    Ok((&r + r.transpose()) * 0.5)
}

pub fn information_with<F: Family>(
    family: &F,
    data: &ModelData,
    theta: &DVector<f64>,
    gamma: &DVector<f64>,
) -> Result<Information> {
    let eta = data.linear_predictor(theta, gamma);
    let info = weighted_gram(family, &data.full_design(), &eta, &data.trials);
    let (inverse, condition_number) = spd_inverse(&info)?;
    Ok(Information { p: data.p(), info, inverse, condition_number })
}

pub fn information(data: &ModelData, theta: &DVector<f64>, gamma: &DVector<f64>) -> Result<Information> {
    information_with(&BinomialLogit, data, theta, gamma)
}

#[derive(Debug, Clone)]
pub struct GlmFit {
    pub coef: DVector<f64>,
    pub log_lik: f64,
    pub deviance: f64,
    pub iterations: usize,
    pub score_sup: f64,
}

/// Newton / IRLS with step halving for `eta = X beta + offset`.
pub fn irls<F: Family>(
    family: &F,
    x: &DMatrix<f64>,
    offset: &DVector<f64>,
    y: &DVector<f64>,
    m: &DVector<f64>,
) -> Result<GlmFit> {
    let dev_at = |eta: &DVector<f64>| (0..eta.len()).map(|i| family.deviance(y[i], m[i], eta[i])).sum::<f64>();
    let score_at = |eta: &DVector<f64>| {
        let r = DVector::from_fn(eta.len(), |i, _| y[i] - m[i] * family.mean(eta[i]));
        x.transpose() * r
    };
    let mut beta = DVector::zeros(x.ncols());
    let mut eta = offset.clone();
    let mut dev = dev_at(&eta);
    let mut score = score_at(&eta);
    for it in 1..=MAX_ITERATIONS {
        let info = weighted_gram(family, x, &eta, m);
        let step = match info.clone().cholesky() {
            Some(ch) => ch.solve(&score),
            None => spd_inverse(&info)?.0 * &score,
        };
        let mut t = 1.0;
        let (cand, eta_c, dev_c) = loop {
            let cand = &beta + &step * t;
            let eta_c = x * &cand + offset;
            let dev_c = dev_at(&eta_c);
            if dev_c.is_finite() && dev_c <= dev + 1e-12 * (1.0 + dev.abs()) {
                break (cand, eta_c, dev_c);
            }
            t *= 0.5;
            if t < 1e-10 {
                return Err(Error::Convergence {
                    what: "irls",
                    iterations: it,
                    detail: format!("step halving failed to reduce deviance {dev}"),
                });
            }
        };
        let rel = (dev - dev_c).abs() / (dev_c.abs() + 0.1);
        beta = cand;
        eta = eta_c;
        dev = dev_c;
        let max_abs = beta.amax();
        if max_abs > COEF_BOUND {
            return Err(Error::Separation { max_abs_coef: max_abs });
        }
        score = score_at(&eta);
        let score_sup = score.amax();
        if rel < DEVIANCE_RTOL && score_sup < SCORE_TOL {
            let log_lik = (0..eta.len()).map(|i| family.log_lik(y[i], m[i], eta[i])).sum();
            return Ok(GlmFit { coef: beta, log_lik, deviance: dev, iterations: it, score_sup });
        }
    }
    Err(Error::Convergence {
        what: "irls",
        iterations: MAX_ITERATIONS,
        detail: format!("deviance {dev}, score sup-norm {:.3e}", score.amax()),
    })
}

/// Full-model MLE `(theta_hat, gamma_hat)`.
pub fn fit_full_with<F: Family>(family: &F, data: &ModelData) -> Result<(DVector<f64>, DVector<f64>, GlmFit)> {
    let offset = DVector::zeros(data.n());
    let fit = irls(family, &data.full_design(), &offset, &data.successes, &data.trials)?;
    let theta = fit.coef.rows(0, data.p()).into_owned();
    let gamma = fit.coef.rows(data.p(), data.q()).into_owned();
    Ok((theta, gamma, fit))
}

/// MLE of `theta` with `gamma` held at `gamma_tilde`.
pub fn fit_restricted_with<F: Family>(family: &F, data: &ModelData) -> Result<(DVector<f64>, GlmFit)> {
    let offset = &data.design_gamma * &data.gamma_tilde;
    let fit = irls(family, &data.design_theta, &offset, &data.successes, &data.trials)?;
    Ok((fit.coef.clone(), fit))
}

pub fn fit_full(data: &ModelData) -> Result<(DVector<f64>, DVector<f64>, GlmFit)> {
    fit_full_with(&BinomialLogit, data)
}

pub fn fit_restricted(data: &ModelData) -> Result<(DVector<f64>, GlmFit)> {
    fit_restricted_with(&BinomialLogit, data)
}

/// `b(theta)`, with the information evaluated at `(theta, gamma_tilde)`.
pub fn derive_b_with<F: Family>(family: &F, theta: &DVector<f64>, data: &ModelData) -> Result<(DVector<f64>, f64)> {
    let inf = information_with(family, data, theta, &data.gamma_tilde)?;
    b_from_information(&inf, &data.a)
}

pub fn derive_b(theta: &DVector<f64>, data: &ModelData) -> Result<(DVector<f64>, f64)> {
    derive_b_with(&BinomialLogit, theta, data)
}

fn b_from_information(inf: &Information, a: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
    let var_phi = (a.transpose() * inf.inv_theta_theta() * a)[(0, 0)];
    if !(var_phi > 0.0) {
        return Err(Error::Numerical(format!("a' I^tt a = {var_phi} is not positive")));
    }
    let b = inverse_sqrt(&inf.inv_gamma_gamma())? * inf.inv_gamma_theta() * a / var_phi.sqrt();
    let nb = b.norm();
    if !(nb < 1.0) {
        return Err(Error::Numerical(format!("|b| = {nb} >= 1: information is numerically degenerate")));
    }
    Ok((b, nb))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaSummary {
    pub lambda: Vec<f64>,
    pub norm_lambda: f64,
    pub psi: f64,
}

/// `lambda = (I^gg(theta, gamma_tilde))^{-1/2} (gamma - gamma_tilde)` and the
/// cosine `psi` between `b` and `lambda` (1 when either vanishes).
pub fn derive_lambda_with<F: Family>(
    family: &F,
    theta: &DVector<f64>,
    gamma: &DVector<f64>,
    data: &ModelData,
) -> Result<LambdaSummary> {
    if gamma.len() != data.q() {
        return Err(Error::DimensionMismatch { context: "gamma", expected: data.q(), found: gamma.len() });
    }
    let inf = information_with(family, data, theta, &data.gamma_tilde)?;
    let (b, nb) = b_from_information(&inf, &data.a)?;
    let lambda = inverse_sqrt(&inf.inv_gamma_gamma())? * (gamma - &data.gamma_tilde);
    let nl = lambda.norm();
    let psi = if nb > 0.0 && nl > 0.0 { (b.dot(&lambda) / (nb * nl)).clamp(-1.0, 1.0) } else { 1.0 };
    Ok(LambdaSummary { lambda: to_vec(&lambda), norm_lambda: nl, psi })
}

pub fn derive_lambda(theta: &DVector<f64>, gamma: &DVector<f64>, data: &ModelData) -> Result<LambdaSummary> {
    derive_lambda_with(&BinomialLogit, theta, gamma, data)
}

/// `W = (g - g~)' (I^gg(theta_r, g~))^{-1} (g - g~)`.
pub fn wald_from(gamma_hat: &DVector<f64>, restricted_info: &Information, gamma_tilde: &DVector<f64>) -> Result<f64> {
    let d = gamma_hat - gamma_tilde;
    let (prec, _) = spd_inverse(&restricted_info.inv_gamma_gamma())?;
    Ok((d.transpose() * prec * &d)[(0, 0)].max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    fn centred(centre: f64, half: f64) -> Self {
        Self { lower: centre - half, upper: centre + half }
    }
    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
    pub fn exp(&self) -> Self {
        Self { lower: self.lower.exp(), upper: self.upper.exp() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selected {
    Restricted,
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceInfo {
    pub converged: bool,
    pub iterations: usize,
    pub score_sup: f64,
    pub log_lik: f64,
    pub deviance: f64,
}

impl From<&GlmFit> for ConvergenceInfo {
    fn from(f: &GlmFit) -> Self {
        Self {
            converged: true,
            iterations: f.iterations,
            score_sup: f.score_sup,
            log_lik: f.log_lik,
            deviance: f.deviance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InformationReport {
    pub info: Vec<Vec<f64>>,
    pub inverse: Vec<Vec<f64>>,
    pub theta_theta: Vec<Vec<f64>>,
    pub theta_gamma: Vec<Vec<f64>>,
    pub gamma_theta: Vec<Vec<f64>>,
    pub gamma_gamma: Vec<Vec<f64>>,
    pub inv_theta_theta: Vec<Vec<f64>>,
    pub inv_theta_gamma: Vec<Vec<f64>>,
    pub inv_gamma_theta: Vec<Vec<f64>>,
    pub inv_gamma_gamma: Vec<Vec<f64>>,
    pub condition_number: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub family: String,
    pub theta_hat: Vec<f64>,
    pub gamma_hat: Vec<f64>,
    pub theta_hat_restricted: Vec<f64>,
    /// Information at the full MLE.
    pub info: InformationReport,
    /// Information at `(theta_hat_restricted, gamma_tilde)`.
    pub restricted_info: InformationReport,
    pub wald: f64,
    /// `b(theta_hat)`.
    pub b: Vec<f64>,
    pub norm_b: f64,
    /// Plug-in `lambda` at `(theta_hat, gamma_hat)`.
    pub lambda_hat: LambdaSummary,
    pub full: ConvergenceInfo,
    pub restricted: ConvergenceInfo,
    pub warnings: Vec<String>,
}

/// Everything the post-selection interval needs, kept in nalgebra form.
#[derive(Debug, Clone)]
pub struct Fits {
    pub theta_hat: DVector<f64>,
    pub gamma_hat: DVector<f64>,
    pub theta_hat_restricted: DVector<f64>,
    pub full_info: Information,
    pub restricted_info: Information,
    pub wald: f64,
    pub full: GlmFit,
    pub restricted: GlmFit,
}

pub fn fit_models_with<F: Family>(family: &F, data: &ModelData) -> Result<Fits> {
    let (theta_hat, gamma_hat, full) = fit_full_with(family, data)?;
    let (theta_hat_restricted, restricted) = fit_restricted_with(family, data)?;
    let full_info = information_with(family, data, &theta_hat, &gamma_hat)?;
    let restricted_info = information_with(family, data, &theta_hat_restricted, &data.gamma_tilde)?;
    let wald = wald_from(&gamma_hat, &restricted_info, &data.gamma_tilde)?;
    Ok(Fits { theta_hat, gamma_hat, theta_hat_restricted, full_info, restricted_info, wald, full, restricted })
}

pub fn fit_models(data: &ModelData) -> Result<Fits> {
    fit_models_with(&BinomialLogit, data)
}

pub fn fit_with<F: Family>(family: &F, data: &ModelData) -> Result<FitResult> {
    let f = fit_models_with(family, data)?;
    let (b, norm_b) = derive_b_with(family, &f.theta_hat, data)?;
    let lambda_hat = derive_lambda_with(family, &f.theta_hat, &f.gamma_hat, data)?;
    let mut warnings = Vec::new();
    for (what, inf) in [("full", &f.full_info), ("restricted", &f.restricted_info)] {
        if inf.condition_number > CONDITION_WARN {
            warnings.push(format!("{what} information condition number {:.3e}", inf.condition_number));
        }
    }
    Ok(FitResult {
        family: family.name().to_string(),
        theta_hat: to_vec(&f.theta_hat),
        gamma_hat: to_vec(&f.gamma_hat),
        theta_hat_restricted: to_vec(&f.theta_hat_restricted),
        info: f.full_info.report(),
        restricted_info: f.restricted_info.report(),
        wald: f.wald,
        b: to_vec(&b),
        norm_b,
        lambda_hat,
        full: (&f.full).into(),
        restricted: (&f.restricted).into(),
        warnings,
    })
}

pub fn fit(data: &ModelData) -> Result<FitResult> {
    fit_with(&BinomialLogit, data)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Intervals {
    pub alpha: f64,
    pub alpha_tilde: f64,
    pub phi_hat: f64,
    pub phi_hat_restricted: f64,
    pub wald: f64,
    pub critical_value: f64,
    pub selected: Selected,
    /// `J`, from the full model.
    pub full: Interval,
    /// `J_r`, from the restricted model.
    pub restricted: Interval,
    /// `K`, the interval reported after the pretest.
    pub post_selection: Interval,
    pub odds_ratio_full: Interval,
    pub odds_ratio_restricted: Interval,
    pub odds_ratio_post_selection: Interval,
}

pub fn intervals(data: &ModelData, fits: &Fits, alpha: f64, alpha_tilde: f64) -> Result<Intervals> {
    if !(alpha > 0.0 && alpha < 1.0 && alpha_tilde > 0.0 && alpha_tilde < 1.0) {
        return Err(Error::domain("alpha and alpha_tilde must lie in (0, 1)"));
    }
    let z = normal_quantile(1.0 - 0.5 * alpha)?;
    let critical_value = chisq_quantile(1.0 - alpha_tilde, data.q())?;
    let a = &data.a;
    let phi_hat = a.dot(&fits.theta_hat);
    let phi_hat_restricted = a.dot(&fits.theta_hat_restricted);
    let var_full = (a.transpose() * fits.full_info.inv_theta_theta() * a)[(0, 0)];
    let (tt_inv, _) = spd_inverse(&fits.restricted_info.theta_theta())?;
    let var_restricted = (a.transpose() * tt_inv * a)[(0, 0)];
    let full = Interval::centred(phi_hat, z * var_full.sqrt());
    let restricted = Interval::centred(phi_hat_restricted, z * var_restricted.sqrt());
    let selected = if fits.wald <= critical_value { Selected::Restricted } else { Selected::Full };
    let post_selection = match selected {
        Selected::Restricted => restricted,
        Selected::Full => full,
    };
    Ok(Intervals {
        alpha,
        alpha_tilde,
        phi_hat,
        phi_hat_restricted,
        wald: fits.wald,
        critical_value,
        selected,
        full,
        restricted,
        post_selection,
        odds_ratio_full: full.exp(),
        odds_ratio_restricted: restricted.exp(),
        odds_ratio_post_selection: post_selection.exp(),
    })
}

/// Where a grouped-binomial CSV lives and which columns play which role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub path: PathBuf,
    /// Prepend a column of ones to the theta design.
    #[serde(default)]
    pub intercept: bool,
    pub theta_columns: Vec<String>,
    pub gamma_columns: Vec<String>,
    pub successes: String,
    /// Column of trial counts; 0/1 outcomes when absent.
    #[serde(default)]
    pub trials: Option<String>,
    pub a_vector: Vec<f64>,
    pub gamma_tilde: Vec<f64>,
}

pub fn load_dataset(spec: &DatasetSpec) -> Result<ModelData> {
    let mut rdr =
        csv::Reader::from_path(&spec.path).map_err(|e| Error::Data(format!("{}: {e}", spec.path.display())))?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Data(format!("{}: unknown column '{name}'", spec.path.display())))
    };
    let theta_idx: Vec<usize> = spec.theta_columns.iter().map(|c| col(c)).collect::<Result<_>>()?;
    let gamma_idx: Vec<usize> = spec.gamma_columns.iter().map(|c| col(c)).collect::<Result<_>>()?;
    let y_idx = col(&spec.successes)?;
    let m_idx = spec.trials.as_deref().map(col).transpose()?;

    let off = usize::from(spec.intercept);
    let (p, q) = (theta_idx.len() + off, gamma_idx.len());
    let (mut xt, mut xg, mut ys, mut ms) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |pos| pos.line());
        let field = |i: usize| -> Result<f64> {
            let raw = rec.get(i).unwrap_or("").trim();
            raw.parse::<f64>().map_err(|_| {
                Error::Data(format!(
                    "{} line {line}, column '{}': cannot parse '{raw}'",
                    spec.path.display(),
                    &headers[i]
                ))
            })
        };
        if spec.intercept {
            xt.push(1.0);
        }
        for &i in &theta_idx {
            xt.push(field(i)?);
        }
        for &i in &gamma_idx {
            xg.push(field(i)?);
        }
        ys.push(field(y_idx)?);
        ms.push(match m_idx {
            Some(i) => field(i)?,
            None => 1.0,
        });
    }
    let n = ys.len();
    if n == 0 {
        return Err(Error::Data(format!("{}: no data rows", spec.path.display())));
    }
    ModelData::new(
        DMatrix::from_row_slice(n, p, &xt),
        DMatrix::from_row_slice(n, q, &xg),
        DVector::from_vec(ys),
        DVector::from_vec(ms),
        DVector::from_column_slice(&spec.a_vector),
        DVector::from_column_slice(&spec.gamma_tilde),
    )
}
