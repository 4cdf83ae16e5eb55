use std::f64::consts::PI;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use hfwave::solvers::{init_envelope, init_reference, EnvelopeSolver, Problem, ReferenceSolver, SimConfig, Variant};
use hfwave::system::{find_dispersion, klein_gordon_default, BranchSelector, EnvelopeProfile};
use hfwave::Exec;

fn problem() -> Problem {
    let spec = klein_gordon_default();
    let disp = find_dispersion(&spec, &[1.0], BranchSelector::SmallestPositive).unwrap();
    let profile = EnvelopeProfile::gaussian(0.5, 0.0, 2.0, disp.kernel_vec.clone());
    Problem { spec, disp, profile }
}

fn config(exec: Exec) -> SimConfig {
    let mut cfg = SimConfig::new(0.1, 0.5, Variant::J3, 1.0, 64.0 * PI, 512);
    cfg.exec = exec;
    cfg
}

fn bench(c: &mut Criterion) {
    let p = problem();
    let mut g = c.benchmark_group("reference_step");
    g.sample_size(20);
    for exec in [Exec::Sequential, Exec::Parallel] {
        let cfg = config(exec);
        let mut solver = ReferenceSolver::new(&p.spec, &cfg).unwrap();
        let mut state = init_reference(&p, &cfg).unwrap();
        g.bench_function(BenchmarkId::new(format!("{exec:?}"), cfg.ref_modes), |b| b.iter(|| solver.step(black_box(&mut state)).unwrap()));
    }
    g.finish();

    let mut g = c.benchmark_group("envelope_rhs");
    g.sample_size(20);
    for exec in [Exec::Sequential, Exec::Parallel] {
        let cfg = config(exec);
        let solver = EnvelopeSolver::new(&p, &cfg).unwrap();
        let z = solver.to_z(&init_envelope(&p, &cfg).unwrap());
        g.bench_function(BenchmarkId::new(format!("{exec:?}"), cfg.env_modes), |b| b.iter(|| solver.rhs_z(black_box(1.0), black_box(&z))));
    }
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
