//! Large-sample coverage probability (LSCP) of the post-model-selection
//! interval `K`.
//!
//! With `z = z_{1-alpha/2}`, `c = chi^2_{1-alpha_tilde, q}` and
//! `s = (1 - |b|^2)^{1/2}` the coverage is
//!
//! ```text
//! LSCP = P(|V2| <= z) P(||H||^2 <= c) + B_q
//! V2   ~ N(-psi |b| |lambda| / s, 1),   ||H||^2 ~ noncentral chi^2_q(|lambda|^2)
//! B_q  = 1 - alpha - E[ i(R |b| k(T); |b|) 1{R^2 + 2 R |lambda| cos(w T1) + |lambda|^2 <= c} ]
//! i(u; |b|) = Phi((z - u) / s) - Phi((-z - u) / s)
//! ```
//!
//! where `R ~ chi_q` and the angles `T1`, `T2` come from the spherical
//! representation of a uniform direction (`w = 2 pi` for q = 2, `pi`
//! otherwise). For each `t1` the indicator restricts `r` to the interval
//! between the roots of a quadratic, so `B_q` becomes a double integral for
//! q = 2 and a triple integral for q > 2.
//!
//! When `|lambda|^2 > c` the roots are real and non-negative only for `t1`
//! in a sub-interval whose ends are known in closed form; the outer
//! integral is restricted to it and integrated with the endpoint-smoothing
//! node map, since the inner interval length behaves like a square root at
//! those ends.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::distributions::{
    chisq_quantile, noncentral_chisq_cdf, normal_quantile, std_normal_cdf, AngleDensities, ChiDensity,
};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::quadrature::{integrate_nested, Axis, Estimate, QuadratureSpec};

/// `|b|` above this is rejected: `V3` would be (numerically) degenerate.
pub const NORM_B_MAX: f64 = 1.0 - 1e-9;

/// Upper tail probability at which the `r` axis is truncated.
pub const R_TAIL_EPS: f64 = 1e-12;

/// Quadrature settings used when callers do not supply their own. Starting
/// at 32 nodes means the first refinement check compares 32 against 64, which
/// is already well inside the tolerance for these smooth integrands; the
/// triple integral would otherwise pay for a 128^3 check.
pub fn default_spec() -> QuadratureSpec {
    QuadratureSpec { nodes_per_axis: 32, abs_tol: 1e-7, ..QuadratureSpec::default() }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LscpInputs {
    pub q: usize,
    pub alpha: f64,
    pub alpha_tilde: f64,
    pub norm_b: f64,
    pub norm_lambda: f64,
    pub psi: f64,
}

impl LscpInputs {
    /// Validates and canonicalizes: `psi` is forced to 1 whenever `b` or
    /// `lambda` vanishes, where the cosine is undefined.
    pub fn new(q: usize, alpha: f64, alpha_tilde: f64, norm_b: f64, norm_lambda: f64, psi: f64) -> Result<Self> {
        let mut inputs = Self { q, alpha, alpha_tilde, norm_b, norm_lambda, psi };
        inputs.validate()?;
        if norm_b == 0.0 || norm_lambda == 0.0 {
            inputs.psi = 1.0;
        }
        Ok(inputs)
    }

    pub fn validate(&self) -> Result<()> {
        if self.q < 2 {
            return Err(Error::UnsupportedDimension(self.q));
        }
        check_level("alpha", self.alpha)?;
        check_level("alpha_tilde", self.alpha_tilde)?;
        check_norm_b(self.norm_b)?;
        if !(self.norm_lambda >= 0.0 && self.norm_lambda.is_finite()) {
            return Err(Error::domain(format!("|lambda| must be finite and >= 0, got {}", self.norm_lambda)));
        }
        if !(-1.0..=1.0).contains(&self.psi) {
            return Err(Error::domain(format!("psi must lie in [-1, 1], got {}", self.psi)));
        }
        Ok(())
    }

    pub fn with_psi(self, psi: f64) -> Result<Self> {
        Self::new(self.q, self.alpha, self.alpha_tilde, self.norm_b, self.norm_lambda, psi)
    }

    pub fn with_norm_lambda(self, norm_lambda: f64) -> Result<Self> {
        Self::new(self.q, self.alpha, self.alpha_tilde, self.norm_b, norm_lambda, self.psi)
    }
}

fn check_level(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v < 1.0) {
        return Err(Error::domain(format!("{name} must lie in (0, 1), got {v}")));
    }
    Ok(())
}

fn check_norm_b(norm_b: f64) -> Result<()> {
    if !(norm_b >= 0.0) {
        return Err(Error::domain(format!("|b| must be >= 0, got {norm_b}")));
    }
    if norm_b > NORM_B_MAX {
        return Err(Error::domain(format!(
            "|b| = {norm_b} is too close to 1 (limit {NORM_B_MAX}); V3 variance 1 - |b|^2 degenerates"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    General,
    BZero,
    LambdaZero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LscpBreakdown {
    /// Coverage contribution when the pretest accepts.
    pub a_term: f64,
    /// Coverage contribution when the pretest rejects (`B_q`).
    pub b_term: f64,
    pub total: f64,
    pub branch: Branch,
    /// Absent on the `b = 0` branch, which needs no quadrature.
    pub quadrature: Option<Estimate>,
}

/// `i(u; |b|) = P(-z <= V3 + u <= z)`, `V3 ~ N(0, 1 - |b|^2)`.
pub fn i_fn(upsilon: f64, norm_b: f64, alpha: f64) -> Result<f64> {
    check_norm_b(norm_b)?;
    check_level("alpha", alpha)?;
    if upsilon.is_nan() {
        return Err(Error::domain("i(u) evaluated at NaN"));
    }
    let z = normal_quantile(1.0 - 0.5 * alpha)?;
    let s = (1.0 - norm_b * norm_b).sqrt();
    Ok(coverage_window(upsilon, z, s))
}

#[inline]
fn coverage_window(upsilon: f64, z: f64, s: f64) -> f64 {
    std_normal_cdf((z - upsilon) / s) - std_normal_cdf((-z - upsilon) / s)
}

/// The kernel `k` giving the `b`-direction component of the uniform
/// direction in terms of the angle variables.
pub fn kernel_k(t1: f64, t2: Option<f64>, psi: f64, q: usize) -> Result<f64> {
    if q < 2 {
        return Err(Error::UnsupportedDimension(q));
    }
    if !(0.0..=1.0).contains(&t1) {
        return Err(Error::domain(format!("t1 must lie in [0, 1], got {t1}")));
    }
    if !(-1.0..=1.0).contains(&psi) {
        return Err(Error::domain(format!("psi must lie in [-1, 1], got {psi}")));
    }
    let psi_c = (1.0 - psi * psi).sqrt();
    if q == 2 {
        if t2.is_some() {
            return Err(Error::Argument("kernel k takes no t2 for q = 2".into()));
        }
        return Ok(kernel_q2(t1, psi, psi_c));
    }
    let t2 = t2.ok_or_else(|| Error::Argument(format!("kernel k needs t2 for q = {q}")))?;
    if !(0.0..=1.0).contains(&t2) {
        return Err(Error::domain(format!("t2 must lie in [0, 1], got {t2}")));
    }
    Ok(kernel_q_gt2(t1, t2, psi, psi_c, q))
}

#[inline]
fn kernel_q2(t1: f64, psi: f64, psi_c: f64) -> f64 {
    let (s, c) = (2.0 * PI * t1).sin_cos();
    psi * c + psi_c * s
}

#[inline]
fn kernel_q_gt2(t1: f64, t2: f64, psi: f64, psi_c: f64, q: usize) -> f64 {
    let (s1, c1) = (PI * t1).sin_cos();
    let inner = if q == 3 { (2.0 * PI * t2).cos() } else { (PI * t2).cos() };
    psi * c1 + psi_c * s1 * inner
}

/// Angular frequency of the `t1` argument: `2 pi` for q = 2, `pi` above.
#[inline]
fn t1_frequency(q: usize) -> f64 {
    if q == 2 {
        2.0 * PI
    } else {
        PI
    }
}

/// `[l_q, u_q] ∩ [0, inf)` for the given `t1`, or `None` when that set is
/// empty or a single point.
pub fn r_interval(t1: f64, norm_lambda: f64, alpha_tilde: f64, q: usize) -> Result<Option<(f64, f64)>> {
    if q < 2 {
        return Err(Error::UnsupportedDimension(q));
    }
    if !(0.0..=1.0).contains(&t1) {
        return Err(Error::domain(format!("t1 must lie in [0, 1], got {t1}")));
    }
    if !(norm_lambda >= 0.0 && norm_lambda.is_finite()) {
        return Err(Error::domain(format!("|lambda| must be finite and >= 0, got {norm_lambda}")));
    }
    check_level("alpha_tilde", alpha_tilde)?;
    let crit = chisq_quantile(1.0 - alpha_tilde, q)?;
    Ok(quadratic_roots(t1_frequency(q) * t1, norm_lambda, crit))
}

#[inline]
fn quadratic_roots(angle: f64, norm_lambda: f64, crit: f64) -> Option<(f64, f64)> {
    let c = angle.cos();
    let disc = norm_lambda * norm_lambda * c * c + crit - norm_lambda * norm_lambda;
    if !(disc > 0.0) {
        return None;
    }
    let root = disc.sqrt();
    let lo = (-norm_lambda * c - root).max(0.0);
    let hi = -norm_lambda * c + root;
    (hi > lo).then_some((lo, hi))
}

/// Precomputed constants shared by every integrand evaluation.
struct Setup {
    q: usize,
    z: f64,
    s: f64,
    crit: f64,
    r_max: f64,
    norm_b: f64,
    norm_lambda: f64,
    psi: f64,
    psi_c: f64,
    chi: ChiDensity,
    angles: AngleDensities,
}

impl Setup {
    fn new(inputs: &LscpInputs) -> Result<Self> {
        let q = inputs.q;
        Ok(Self {
            q,
            z: normal_quantile(1.0 - 0.5 * inputs.alpha)?,
            s: (1.0 - inputs.norm_b * inputs.norm_b).sqrt(),
            crit: chisq_quantile(1.0 - inputs.alpha_tilde, q)?,
            r_max: chisq_quantile(1.0 - R_TAIL_EPS, q)?.sqrt(),
            norm_b: inputs.norm_b,
            norm_lambda: inputs.norm_lambda,
            psi: inputs.psi,
            psi_c: (1.0 - inputs.psi * inputs.psi).max(0.0).sqrt(),
            chi: ChiDensity::new(q)?,
            angles: AngleDensities::new(q)?,
        })
    }

    /// Range of `t1` on which the `r` interval can be non-empty, and whether
    /// its ends are square-root points of the inner interval length.
    fn t1_range(&self) -> Option<(f64, f64, bool)> {
        let l2 = self.norm_lambda * self.norm_lambda;
        if l2 <= self.crit {
            return Some((0.0, 1.0, false));
        }
        // Need cos(w t1) <= -rho.
        let rho = (1.0 - self.crit / l2).sqrt();
        let edge = (-rho).acos();
        if self.q == 2 {
            let lo = edge / (2.0 * PI);
            Some((lo, 1.0 - lo, true)).filter(|r| r.1 > r.0)
        } else {
            let lo = edge / PI;
            Some((lo, 1.0, true)).filter(|r| r.1 > r.0)
        }
    }

    fn r_bounds(&self, t1: f64) -> Option<(f64, f64)> {
        let (lo, hi) = quadratic_roots(t1_frequency(self.q) * t1, self.norm_lambda, self.crit)?;
        let hi = hi.min(self.r_max);
        (hi > lo).then_some((lo, hi))
    }

    /// `E[i(R |b| k) 1{...}]`, the integral subtracted from `1 - alpha`.
    fn acceptance_integral(&self, spec: &QuadratureSpec, exec: Exec) -> Result<Estimate> {
        let Some((t_lo, t_hi, sqrt_ends)) = self.t1_range() else {
            return Ok(Estimate { value: 0.0, change: 0.0, nodes_per_axis: 0, refinements: 0, converged: true });
        };
        let t1_axis = if sqrt_ends { Axis::fixed(t_lo, t_hi).smooth_endpoints() } else { Axis::fixed(t_lo, t_hi) };
        let nb = self.norm_b;
        if self.q == 2 {
            // f_T1 is identically one for q = 2.
            let bounds = |o: &[f64]| self.r_bounds(o[0]);
            let f = |x: &[f64]| {
                let (t1, r) = (x[0], x[1]);
                let k = kernel_q2(t1, self.psi, self.psi_c);
                coverage_window(r * nb * k, self.z, self.s) * self.chi.pdf(r)
            };
            integrate_nested(&f, &[t1_axis, Axis::dependent(&bounds)], spec, exec)
        } else {
            let bounds = |o: &[f64]| self.r_bounds(o[0]);
            let f = |x: &[f64]| {
                let (t1, t2, r) = (x[0], x[1], x[2]);
                let k = kernel_q_gt2(t1, t2, self.psi, self.psi_c, self.q);
                coverage_window(r * nb * k, self.z, self.s)
                    * self.chi.pdf(r)
                    * self.angles.t1_pdf(t1)
                    * self.angles.t2_pdf(t2)
            };
            integrate_nested(&f, &[t1_axis, Axis::fixed(0.0, 1.0), Axis::dependent(&bounds)], spec, exec)
        }
    }

    /// The `lambda = 0` integral `int int i(r |b| g(t1)) f_R f_T1` over
    /// `r` in `[0, sqrt(c)]`.
    fn null_integral(&self, spec: &QuadratureSpec, exec: Exec) -> Result<Estimate> {
        let w = t1_frequency(self.q);
        let r_hi = self.crit.sqrt().min(self.r_max);
        let nb = self.norm_b;
        let f = |x: &[f64]| {
            let (t1, r) = (x[0], x[1]);
            let g = (w * t1).cos();
            coverage_window(r * nb * g, self.z, self.s) * self.chi.pdf(r) * self.angles.t1_pdf(t1)
        };
        integrate_nested(&f, &[Axis::fixed(0.0, 1.0), Axis::fixed(0.0, r_hi)], spec, exec)
    }
}

/// Evaluate the large-sample coverage probability with sequential
/// quadrature (callers usually parallelize over parameter points instead).
pub fn lscp(inputs: &LscpInputs, spec: &QuadratureSpec) -> Result<LscpBreakdown> {
    lscp_with(inputs, spec, Exec::Sequential)
}

pub fn lscp_with(inputs: &LscpInputs, spec: &QuadratureSpec, exec: Exec) -> Result<LscpBreakdown> {
    inputs.validate()?;
    spec.validate()?;
    let mut inputs = *inputs;
    if inputs.norm_b == 0.0 || inputs.norm_lambda == 0.0 {
        inputs.psi = 1.0;
    }
    let setup = Setup::new(&inputs)?;
    let one_minus_alpha = 1.0 - inputs.alpha;
    let l2 = inputs.norm_lambda * inputs.norm_lambda;

    if inputs.norm_b == 0.0 {
        let total = one_minus_alpha;
        let a_term = one_minus_alpha * noncentral_chisq_cdf(setup.crit, inputs.q, l2)?;
        return Ok(LscpBreakdown { a_term, b_term: total - a_term, total, branch: Branch::BZero, quadrature: None });
    }

    if inputs.norm_lambda == 0.0 {
        let est = setup.null_integral(spec, exec)?;
        let a_term = one_minus_alpha * (1.0 - inputs.alpha_tilde);
        let b_term = one_minus_alpha - est.value;
        return Ok(LscpBreakdown {
            a_term,
            b_term,
            total: a_term + b_term,
            branch: Branch::LambdaZero,
            quadrature: Some(est),
        });
    }

    let v2_mean = -inputs.psi * inputs.norm_b * inputs.norm_lambda / setup.s;
    let p_v2 = std_normal_cdf(setup.z - v2_mean) - std_normal_cdf(-setup.z - v2_mean);
    let a_term = p_v2 * noncentral_chisq_cdf(setup.crit, inputs.q, l2)?;
    let est = setup.acceptance_integral(spec, exec)?;
    let b_term = one_minus_alpha - est.value;
    Ok(LscpBreakdown { a_term, b_term, total: a_term + b_term, branch: Branch::General, quadrature: Some(est) })
}
