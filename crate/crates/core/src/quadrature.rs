//! Tensor-product Gauss-Legendre quadrature with doubling refinement.
//!
//! Inner bounds may depend on the outer variables; a bound function that
//! returns `None` marks an empty interval, which contributes exactly zero.
//! Each axis can optionally be integrated through the endpoint-smoothing
//! substitution `t = lo + (hi - lo) (1 - cos(pi s)) / 2`, which turns
//! square-root endpoint behaviour (typical where a variable interval opens
//! or closes) into a smooth integrand.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadratureSpec {
    pub nodes_per_axis: usize,
    pub refinement_factor: usize,
    pub abs_tol: f64,
    pub max_refinements: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { nodes_per_axis: 64, refinement_factor: 2, abs_tol: 1e-8, max_refinements: 5 }
    }
}

impl QuadratureSpec {
    /// A single fixed rule with no convergence check. Cheap; used for coarse
    /// scans where the refinement happens elsewhere.
    pub fn fixed(nodes_per_axis: usize) -> Self {
        Self { nodes_per_axis, max_refinements: 0, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes_per_axis < 8 {
            return Err(Error::Argument(format!("nodes_per_axis must be at least 8, got {}", self.nodes_per_axis)));
        }
        if self.refinement_factor < 2 {
            return Err(Error::Argument("refinement_factor must be at least 2".into()));
        }
        if !(self.abs_tol > 0.0) {
            return Err(Error::Argument(format!("abs_tol must be positive, got {}", self.abs_tol)));
        }
        Ok(())
    }
}

/// Result of a refined quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    /// |last - previous| between the two finest rules (0 when only one rule
    /// was evaluated).
    pub change: f64,
    pub nodes_per_axis: usize,
    pub refinements: usize,
    /// False when `max_refinements` was exhausted before successive
    /// estimates agreed to `abs_tol`.
    pub converged: bool,
}

/// Gauss-Legendre nodes and weights on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Newton iteration on P_n from the Tricomi initial guesses.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let k = (i + 1) as f64;
            let theta = PI * (k - 0.25) / (nf + 0.5);
            let mut x = (1.0 - (nf - 1.0) / (8.0 * nf * nf * nf)) * theta.cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() <= 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d.is_finite() {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    /// Shared, lazily built rule of order `n`.
    pub fn cached(n: usize) -> Arc<GaussLegendre> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussLegendre>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
        guard.entry(n).or_insert_with(|| Arc::new(GaussLegendre::new(n))).clone()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    (p1, nf * (x * p1 - p0) / (x * x - 1.0))
}

/// How Gauss nodes on [-1, 1] are placed in an axis interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NodeMap {
    #[default]
    Affine,
    /// Cosine substitution clustering nodes at both ends.
    SmoothEndpoints,
}

impl NodeMap {
    /// Returns (abscissa, jacobian) for reference node `u` in [-1, 1].
    #[inline]
    fn place(self, u: f64, lo: f64, hi: f64) -> (f64, f64) {
        let half = 0.5 * (hi - lo);
        match self {
            NodeMap::Affine => (lo + half * (u + 1.0), half),
            NodeMap::SmoothEndpoints => {
                // s = (u + 1) / 2 in [0, 1]; t = lo + (hi - lo)(1 - cos(pi s))/2
                let s = 0.5 * (u + 1.0);
                let t = lo + half * (1.0 - (PI * s).cos());
                (t, half * 0.5 * PI * (PI * s).sin())
            }
        }
    }
}

/// Bound function for an axis: receives the values of all enclosing (outer)
/// variables and returns `Some((lo, hi))` or `None` for an empty interval.
pub type BoundFn<'a> = dyn Fn(&[f64]) -> Option<(f64, f64)> + Sync + 'a;

pub enum Bounds<'a> {
    Fixed(f64, f64),
    Dependent(&'a BoundFn<'a>),
}

pub struct Axis<'a> {
    pub bounds: Bounds<'a>,
    pub map: NodeMap,
}

impl<'a> Axis<'a> {
    pub fn fixed(lo: f64, hi: f64) -> Self {
        Self { bounds: Bounds::Fixed(lo, hi), map: NodeMap::Affine }
    }

    pub fn dependent(f: &'a BoundFn<'a>) -> Self {
        Self { bounds: Bounds::Dependent(f), map: NodeMap::Affine }
    }

    pub fn smooth_endpoints(mut self) -> Self {
        self.map = NodeMap::SmoothEndpoints;
        self
    }

    fn interval(&self, outer: &[f64]) -> Option<(f64, f64)> {
        match self.bounds {
            Bounds::Fixed(lo, hi) => Some((lo, hi)),
            Bounds::Dependent(f) => f(outer),
        }
    }
}

/// One-dimensional refined Gauss-Legendre estimate of `int_lo^hi f`.
pub fn integrate_1d<F>(f: F, lo: f64, hi: f64, spec: &QuadratureSpec) -> Result<Estimate>
where
    F: Fn(f64) -> f64 + Sync,
{
    if !(lo.is_finite() && hi.is_finite()) || lo > hi {
        return Err(Error::Argument(format!("invalid integration interval [{lo}, {hi}]")));
    }
    let g = |x: &[f64]| f(x[0]);
    integrate_nested(&g, &[Axis::fixed(lo, hi)], spec, Exec::Sequential)
}

/// Nested tensor Gauss-Legendre over `axes` (outermost first). Outer-axis
/// nodes may be evaluated concurrently under `exec`; their contributions are
/// summed in node order, so the result does not depend on the worker count.
pub fn integrate_nested(
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    axes: &[Axis<'_>],
    spec: &QuadratureSpec,
    exec: Exec,
) -> Result<Estimate> {
    spec.validate()?;
    if axes.is_empty() || axes.len() > 3 {
        return Err(Error::Argument(format!("expected 1 to 3 axes, got {}", axes.len())));
    }
    let mut n = spec.nodes_per_axis;
    let mut prev = tensor_rule(f, axes, n, exec)?;
    let mut refinements = 0;
    let mut change = 0.0;
    while refinements < spec.max_refinements {
        n *= spec.refinement_factor;
        let next = tensor_rule(f, axes, n, exec)?;
        refinements += 1;
        change = (next - prev).abs();
        prev = next;
        if change <= spec.abs_tol {
            return Ok(Estimate { value: prev, change, nodes_per_axis: n, refinements, converged: true });
        }
    }
    Ok(Estimate {
        value: prev,
        change,
        nodes_per_axis: n,
        refinements,
        converged: spec.max_refinements == 0 || change <= spec.abs_tol,
    })
}

fn tensor_rule(f: &(dyn Fn(&[f64]) -> f64 + Sync), axes: &[Axis<'_>], n: usize, exec: Exec) -> Result<f64> {
    let rule = GaussLegendre::cached(n);
    let Some((lo, hi)) = axes[0].interval(&[]) else {
        return Ok(0.0);
    };
    if !(hi > lo) {
        return Ok(0.0);
    }
    let parts = exec.try_map(n, |i| {
        let (x, jac) = axes[0].map.place(rule.nodes[i], lo, hi);
        let mut point = [x, 0.0, 0.0];
        let inner = integrate_from(f, axes, 1, &mut point, &rule)?;
        Ok::<f64, Error>(rule.weights[i] * jac * inner)
    })?;
    Ok(parts.iter().sum())
}

fn integrate_from(
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    axes: &[Axis<'_>],
    depth: usize,
    point: &mut [f64; 3],
    rule: &GaussLegendre,
) -> Result<f64> {
    if depth == axes.len() {
        let v = f(&point[..depth]);
        if !v.is_finite() {
            return Err(Error::NonFiniteIntegrand { abscissa: point[..depth].to_vec(), value: v });
        }
        return Ok(v);
    }
    let Some((lo, hi)) = axes[depth].interval(&point[..depth]) else {
        return Ok(0.0);
    };
    if !(hi > lo) {
        return Ok(0.0);
    }
    let mut acc = 0.0;
    for (&u, &w) in rule.nodes.iter().zip(&rule.weights) {
        let (x, jac) = axes[depth].map.place(u, lo, hi);
        point[depth] = x;
        acc += w * jac * integrate_from(f, axes, depth + 1, point, rule)?;
    }
    Ok(acc)
}
