//! Sequential against rayon execution for the three parallel hot spots:
//! a coverage grid, the Monte Carlo oracle and a finite-sample simulation.
//! Build with `--no-default-features` to time the sequential path alone.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::{DMatrix, DVector};

use lscp_core::analysis::{grid, linspace, simulate_finite_sample, GammaPath, SimulationConfig};
use lscp_core::lscp::{default_spec, LscpInputs};
use lscp_core::model::ModelData;
use lscp_core::oracle::{oracle_lscp, OracleConfig};
use lscp_core::quadrature::QuadratureSpec;
use lscp_core::Exec;

#[allow(unused_mut)]
fn policies() -> Vec<(&'static str, Exec)> {
    let mut v = vec![("sequential", Exec::Sequential)];
    #[cfg(feature = "parallel")]
    v.push(("parallel", Exec::Parallel));
    v
}

fn coverage_grid(c: &mut Criterion) {
    let mut g = c.benchmark_group("grid_21x21");
    g.sample_size(10);
    let lambda = linspace(0.0, 8.0, 21);
    let psi = linspace(-1.0, 1.0, 21);
    // Higher dimensions use the cheap rule of the minimizer's coarse scan.
    for (q, spec, rule) in [(2, default_spec(), "adaptive"), (4, QuadratureSpec::fixed(16), "fixed16")] {
        let template = LscpInputs::new(q, 0.05, 0.05, 0.7, 0.0, 1.0).unwrap();
        for (name, exec) in policies() {
            g.bench_with_input(BenchmarkId::new(name, format!("q={q},{rule}")), &template, |b, t| {
                b.iter(|| grid(black_box(t), &lambda, &psi, &spec, exec).unwrap())
            });
        }
    }
    g.finish();
}

fn oracle(c: &mut Criterion) {
    let mut g = c.benchmark_group("oracle_1e6");
    g.sample_size(10);
    let inp = LscpInputs::new(3, 0.05, 0.05, 0.6, 2.0, 0.4).unwrap();
    let cfg = OracleConfig { n_draws: 1_000_000, seed: 1 };
    for (name, exec) in policies() {
        g.bench_function(name, |b| b.iter(|| oracle_lscp(black_box(&inp), &cfg, exec).unwrap()));
    }
    g.finish();
}

fn simulation(c: &mut Criterion) {
    let mut g = c.benchmark_group("simulate_2000");
    g.sample_size(10);
    let mut xt = Vec::new();
    let mut xg = Vec::new();
    for x1 in 0..2 {
        for x2 in 0..3 {
            let (x1, x2) = (f64::from(x1), f64::from(x2));
            xt.extend([1.0, x1, x2]);
            xg.extend([x1 * x2, x2 * x2]);
        }
    }
    let data = ModelData::new(
        DMatrix::from_row_slice(6, 3, &xt),
        DMatrix::from_row_slice(6, 2, &xg),
        DVector::zeros(6),
        DVector::from_element(6, 60.0),
        DVector::from_column_slice(&[0.0, 1.0, 0.0]),
        DVector::zeros(2),
    )
    .unwrap();
    let path = GammaPath::both(2, &[-0.2, 0.0, 0.2]);
    let cfg = SimulationConfig { n_sims: 2000, batch_size: 250, ..Default::default() };
    for (name, exec) in policies() {
        g.bench_function(name, |b| {
            b.iter(|| simulate_finite_sample(&data, &[-0.4, 0.5, 0.3], &path, 0.05, 0.05, &cfg, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, coverage_grid, oracle, simulation);
criterion_main!(benches);
