//! Monte Carlo reference for the coverage, computed straight from the joint
//! normal law of `(V1, H)` without any of the spherical reductions used by
//! [`crate::lscp`].
//!
//! Each draw takes `H = lambda + Z`, `V1 = b'Z + (1 - |b|^2)^{1/2} e`. When
//! the pretest accepts (`||H||^2 <= c`) the draw scores the exact
//! probability `P(|V2| <= z)`, which does not depend on `H`; otherwise it
//! scores the indicator `|V1| <= z`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::distributions::{chisq_quantile, normal_quantile, std_normal_cdf, NormalParams};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::lscp::LscpInputs;

/// Draws per RNG stream. Each batch owns ChaCha stream `batch index`.
pub const BATCH_SIZE: u64 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub n_draws: u64,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { n_draws: 10_000_000, seed: 0x5eed }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_draws < 10_000 {
            return Err(Error::Argument(format!("oracle needs at least 10^4 draws, got {}", self.n_draws)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub n_draws: u64,
}

/// Conditional law of `V1` given `H = h`: `N(b'(h - lambda), 1 - |b|^2)`.
pub fn sample_conditional_v1(h: &[f64], b: &[f64], lambda: &[f64]) -> Result<NormalParams> {
    if b.len() != h.len() {
        return Err(Error::DimensionMismatch { context: "b vs h", expected: h.len(), found: b.len() });
    }
    if lambda.len() != h.len() {
        return Err(Error::DimensionMismatch { context: "lambda vs h", expected: h.len(), found: lambda.len() });
    }
    let nb2: f64 = b.iter().map(|x| x * x).sum();
    if nb2 >= 1.0 {
        return Err(Error::domain(format!("|b| must be < 1, got {}", nb2.sqrt())));
    }
    let mean = b.iter().zip(h).zip(lambda).map(|((bi, hi), li)| bi * (hi - li)).sum();
    NormalParams::new(mean, (1.0 - nb2).sqrt())
}

/// Canonical planar embedding: `lambda = |lambda| e1`,
/// `b = |b| (psi e1 + (1 - psi^2)^{1/2} e2)`.
pub fn planar_vectors(inputs: &LscpInputs) -> (Vec<f64>, Vec<f64>) {
    let q = inputs.q;
    let mut b = vec![0.0; q];
    let mut lambda = vec![0.0; q];
    lambda[0] = inputs.norm_lambda;
    b[0] = inputs.norm_b * inputs.psi;
    b[1] = inputs.norm_b * (1.0 - inputs.psi * inputs.psi).max(0.0).sqrt();
    (b, lambda)
}

pub fn oracle_lscp(inputs: &LscpInputs, cfg: &OracleConfig, exec: Exec) -> Result<OracleEstimate> {
    inputs.validate()?;
    let (b, lambda) = planar_vectors(inputs);
    oracle_lscp_vectors(&b, &lambda, inputs.alpha, inputs.alpha_tilde, cfg, exec)
}

/// Oracle for explicit `b` and `lambda` vectors of any orientation.
pub fn oracle_lscp_vectors(
    b: &[f64],
    lambda: &[f64],
    alpha: f64,
    alpha_tilde: f64,
    cfg: &OracleConfig,
    exec: Exec,
) -> Result<OracleEstimate> {
    cfg.validate()?;
    let q = b.len();
    if q < 2 {
        return Err(Error::UnsupportedDimension(q));
    }
    if lambda.len() != q {
        return Err(Error::DimensionMismatch { context: "lambda", expected: q, found: lambda.len() });
    }
    if !(alpha > 0.0 && alpha < 1.0 && alpha_tilde > 0.0 && alpha_tilde < 1.0) {
        return Err(Error::domain("alpha and alpha_tilde must lie in (0, 1)"));
    }
    let nb2: f64 = b.iter().map(|x| x * x).sum();
    if nb2 >= 1.0 {
        return Err(Error::domain(format!("|b| must be < 1, got {}", nb2.sqrt())));
    }
    let s = (1.0 - nb2).sqrt();
    let z = normal_quantile(1.0 - 0.5 * alpha)?;
    let crit = chisq_quantile(1.0 - alpha_tilde, q)?;
    let b_dot_lambda: f64 = b.iter().zip(lambda).map(|(x, y)| x * y).sum();
    let v2_mean = -b_dot_lambda / s;
    let p_accept_cover = std_normal_cdf(z - v2_mean) - std_normal_cdf(-z - v2_mean);

    let n_batches = cfg.n_draws.div_ceil(BATCH_SIZE);
    let partials = exec.map(n_batches as usize, |batch| {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(batch as u64);
        let start = batch as u64 * BATCH_SIZE;
        let count = BATCH_SIZE.min(cfg.n_draws - start);
        let mut zbuf = vec![0.0; q];
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for _ in 0..count {
            let mut h_norm2 = 0.0;
            let mut bz = 0.0;
            for i in 0..q {
                let zi: f64 = StandardNormal.sample(&mut rng);
                zbuf[i] = zi;
                let hi = lambda[i] + zi;
                h_norm2 += hi * hi;
                bz += b[i] * zi;
            }
            let score = if h_norm2 <= crit {
                p_accept_cover
            } else {
                let e: f64 = StandardNormal.sample(&mut rng);
                let v1 = bz + s * e;
                if v1.abs() <= z {
                    1.0
                } else {
                    0.0
                }
            };
            sum += score;
            sum_sq += score * score;
        }
        (sum, sum_sq)
    });
    let (sum, sum_sq) = partials.iter().fold((0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1));
    let n = cfg.n_draws as f64;
    let mean = sum / n;
    let var = ((sum_sq / n - mean * mean) * n / (n - 1.0)).max(0.0);
    Ok(OracleEstimate { estimate: mean, std_error: (var / n).sqrt(), n_draws: cfg.n_draws })
}
