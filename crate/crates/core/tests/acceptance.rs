//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero if a non-experimental criterion fails. Reports of the main
//! sweep land in the cargo target tmpdir.

use std::path::{Path, PathBuf};
use std::time::Instant;

use hfwave::diagnostics::{dmu_norm, fine_modes, project_p_perp, reconstruct, z_fields};
use hfwave::eigen::check_nonresonance;
use hfwave::harness::{emit_reports, load_config, run_rows, run_sweep, LoadedConfig, SweepResult};
use hfwave::solvers::{enumerate_index_set, init_envelope, simulate_envelope, simulate_reference, symmetric_set, EnvelopeSolver, Variant, DEFAULT_ENV_STEPS};
use hfwave::spectral::{trilinear_conv, trilinear_conv_direct, wiener_norm, Grid, SpectralField};
use hfwave::system::{builtin_maxwell_lorentz_1d, klein_gordon_default, Trilinear};
use hfwave::C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    id: u32,
    title: &'static str,
    pass: bool,
    experimental: bool,
    detail: String,
}

impl Outcome {
    fn new(id: u32, title: &'static str, pass: bool, detail: String) -> Outcome {
        Outcome { id, title, pass, experimental: false, detail }
    }
}

fn kg_config() -> LoadedConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/klein_gordon.json");
    load_config(&path).expect("sample config")
}

fn with_variants(cfg: &LoadedConfig, variants: &[Variant]) -> LoadedConfig {
    let mut raw = cfg.raw.clone();
    raw.solver.variants = variants.to_vec();
    LoadedConfig::from_raw(raw).expect("valid config")
}

fn out_dir(name: &str) -> PathBuf {
    Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance").join(name)
}

fn epsilons(cfg: &LoadedConfig) -> Vec<f64> {
    let mut eps: Vec<f64> = cfg.raw.sweep.epsilons.iter().map(|&e| cfg.snap(e).unwrap()).collect();
    eps.sort_by(|a, b| b.total_cmp(a));
    eps
}

fn err_w(result: &SweepResult, v: Variant, eps: f64) -> Option<f64> {
    result.row(v, eps).and_then(|r| r.bounds.as_ref()).map(|b| b.err_w_max)
}

fn slope(result: &SweepResult, v: Variant) -> Option<f64> {
    result.rate(v, "err_W").map(|r| r.slope)
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or("n/a".into(), |x| format!("{x:.4}"))
}

/// Main sweep, purity check and runtime budget.
fn error_rate_j3(cfg: &LoadedConfig, result: &SweepResult) -> Outcome {
    let eps = epsilons(cfg);
    let seconds: f64 = result.rows.iter().filter(|r| r.variant == Variant::J3).map(|r| r.seconds_reference + r.seconds_envelope).sum();

    let mut raw = cfg.raw.clone();
    raw.solver.variants = vec![Variant::J3];
    raw.solver.h_ref_over_eps /= 2.0;
    let h_env = raw.solver.h_env.unwrap_or(raw.solver.t_end_slow / DEFAULT_ENV_STEPS as f64);
    raw.solver.h_env = Some(h_env / 2.0);
    let halved = LoadedConfig::from_raw(raw).expect("valid config");
    let rows = run_rows(&halved, &eps, &[Variant::J3]);
    let mut purity = Vec::new();
    for &e in &eps {
        let fine = rows.iter().find(|r| r.epsilon == e).and_then(|r| r.bounds.as_ref()).map(|b| b.err_w_max);
        let change = match (err_w(result, Variant::J3, e), fine) {
            (Some(a), Some(b)) => (a - b).abs() / b,
            _ => f64::INFINITY,
        };
        purity.push((e, change));
    }
    let s = slope(result, Variant::J3);
    let pure = purity.iter().all(|p| p.1 < 0.05);
    let pass = s.is_some_and(|s| s >= 1.7) && pure && seconds < 600.0;
    let changes: Vec<String> = purity.iter().map(|(e, c)| format!("{e:.4}: {:.2}%", 100.0 * c)).collect();
    Outcome::new(
        1,
        "O(eps^2) error of the j3 approximation",
        pass,
        format!("slope {} (>= 1.7); halving steps changes err_W by [{}] (< 5%); sweep time {seconds:.0} s (< 600 s)", fmt_opt(s), changes.join(", ")),
    )
}

fn svea_baseline(cfg: &LoadedConfig, result: &SweepResult) -> Outcome {
    let small = *epsilons(cfg).last().expect("non-empty");
    let s = slope(result, Variant::Svea1);
    let ratio = match (err_w(result, Variant::Svea1, small), err_w(result, Variant::J3, small)) {
        (Some(a), Some(b)) => Some(a / b),
        _ => None,
    };
    let pass = s.is_some_and(|s| (0.7..=1.4).contains(&s)) && ratio.is_some_and(|r| r >= 5.0);
    Outcome::new(
        2,
        "O(eps) single-harmonic baseline",
        pass,
        format!("slope {} (in [0.7, 1.4]); err_W(svea1)/err_W(j3) at eps {small:.4} = {} (>= 5)", fmt_opt(s), fmt_opt(ratio)),
    )
}

fn refined_bounds(result: &SweepResult) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for q in ["u3_over_eps", "dmu_u3_over_eps", "proj_perp_over_eps", "dmu_proj_perp_over_eps"] {
        match result.spread(Variant::J3, q) {
            Some(c) => {
                pass &= c.ratio <= 2.5;
                parts.push(format!("{q} {:.3e}..{:.3e} ratio {:.2}", c.min, c.max, c.ratio));
            }
            None => {
                pass = false;
                parts.push(format!("{q} missing"));
            }
        }
    }
    let mut growth = 0.0_f64;
    for row in result.rows.iter().filter(|r| r.variant == Variant::J3) {
        let Some(first) = row.records.first() else {
            pass = false;
            continue;
        };
        for r in &row.records {
            growth = growth.max(r.scaled_norm_z / first.scaled_norm_z);
        }
    }
    pass &= growth > 0.0 && growth <= 3.0;
    parts.push(format!("scaled norm growth {growth:.3} (<= 3)"));
    Outcome::new(3, "Refined bounds are eps-uniform (ratios <= 2.5)", pass, parts.join("; "))
}

fn slow_derivative(result: &SweepResult) -> Outcome {
    match result.spread(Variant::J3, "dt_pu1") {
        Some(c) => Outcome::new(
            4,
            "Slow derivative of the projected first harmonic",
            c.ratio <= 2.0,
            format!("sup ||d/dt P u_1|| in [{:.4e}, {:.4e}], ratio {:.3} (<= 2)", c.min, c.max, c.ratio),
        ),
        None => Outcome::new(4, "Slow derivative of the projected first harmonic", false, "no data".into()),
    }
}

fn random_field(rng: &mut ChaCha8Rng, grid: Grid, n: usize) -> SpectralField {
    let data = (0..grid.n() * n).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
    SpectralField::from_data(grid, n, data).expect("sizes match")
}

fn convolution_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0_f64;
    let mut count = 0;
    for spec in [klein_gordon_default(), builtin_maxwell_lorentz_1d()] {
        for n in [8usize, 16] {
            let grid = Grid::new(2.0 * std::f64::consts::PI, n).expect("grid");
            for _ in 0..50 {
                let (a, b, c) = (random_field(&mut rng, grid, spec.n), random_field(&mut rng, grid, spec.n), random_field(&mut rng, grid, spec.n));
                let fast = trilinear_conv(&spec, &a, &b, &c).expect("conv");
                let slow = trilinear_conv_direct(&spec, &a, &b, &c).expect("direct");
                let scale = slow.data.iter().fold(0.0_f64, |m, z| m.max(z.norm()));
                for (x, y) in fast.data.chunks(spec.n).zip(slow.data.chunks(spec.n)) {
                    let d = x.iter().zip(y).map(|(p, q)| (p - q).norm_sqr()).sum::<f64>().sqrt();
                    worst = worst.max(d / scale);
                }
                count += 1;
            }
        }
    }
    Outcome::new(5, "Pseudospectral convolution equals the direct triple sum", worst <= 1e-12, format!("{count} triples, worst per-mode error {worst:.2e} of the largest mode (<= 1e-12)"))
}

fn linear_isometry(cfg: &LoadedConfig) -> Outcome {
    let mut lin = cfg.clone();
    lin.problem.spec.t = Trilinear::Zero;
    let mut ref_drift = 0.0_f64;
    let mut env_drift = 0.0_f64;
    let mut z_drift = 0.0_f64;
    for e in epsilons(cfg) {
        let sim = lin.sim_config(e, Variant::J3);
        let r = simulate_reference(&lin.problem, &sim).expect("linear reference");
        let n0 = r.snapshots[0].state.norm();
        for s in &r.snapshots {
            ref_drift = ref_drift.max((s.state.norm() - n0).abs() / n0);
        }
        let solver = EnvelopeSolver::new(&lin.problem, &sim).expect("solver");
        let env = simulate_envelope(&lin.problem, &sim).expect("linear envelope");
        let n0 = env.snapshots[0].state.norm();
        let z0 = solver.to_z(&env.snapshots[0].state);
        let zmax = z0.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max);
        for s in &env.snapshots {
            env_drift = env_drift.max((s.state.norm() - n0).abs() / n0);
            let z = solver.to_z(&s.state);
            for (a, b) in z.iter().flatten().zip(z0.iter().flatten()) {
                z_drift = z_drift.max((a - b).norm() / zmax);
            }
        }
    }
    let pass = ref_drift <= 1e-10 && env_drift <= 1e-10 && z_drift <= 1e-12;
    Outcome::new(
        6,
        "Linear flows are isometries, z is constant without nonlinearity",
        pass,
        format!("norm drift reference {ref_drift:.2e}, envelope {env_drift:.2e} (<= 1e-10); z drift {z_drift:.2e} (<= 1e-12)"),
    )
}

fn closed_forms() -> Outcome {
    let spec = klein_gordon_default();
    let (nu, kappa) = (1.0_f64, 1.0_f64);
    let disp = hfwave::system::find_dispersion(&spec, &[kappa], hfwave::system::BranchSelector::SmallestPositive).expect("dispersion");
    let omega = (kappa * kappa + nu * nu).sqrt();
    let mut worst: f64 = (disp.omega - omega).abs() / omega;
    for j in [3.0_f64, 5.0] {
        let l = spec.assemble_l(j * disp.omega, &[j * kappa]);
        let det = l[(0, 0)] * l[(1, 1)] - l[(0, 1)] * l[(1, 0)];
        let want = (j * j - 1.0) * nu * nu;
        worst = worst.max((det - want).norm() / want);
    }
    // spectra of L(j omega, j kappa) are -j omega +- sqrt(j^2 kappa^2 + nu^2)
    let spectrum = |j: f64| [-j * omega - (j * j * kappa * kappa + nu * nu).sqrt(), -j * omega + (j * j * kappa * kappa + nu * nu).sqrt()];
    let closed_gap = spectrum(3.0).iter().flat_map(|a| spectrum(5.0).map(|b| (a - b).abs())).fold(f64::INFINITY, f64::min);
    let gap = check_nonresonance(&spec, &disp).min_gap;
    let pass = worst <= 1e-10 && (gap - closed_gap).abs() <= 1e-10 && (gap - 0.8916845).abs() <= 1e-6;
    Outcome::new(
        7,
        "Klein-Gordon closed forms",
        pass,
        format!("omega and det L(j omega, j kappa) worst relative error {worst:.2e} (<= 1e-10); gap {gap:.9} vs closed form {closed_gap:.9}, |gap - 0.8916845| = {:.1e} (<= 1e-6)", (gap - 0.8916845).abs()),
    )
}

fn structure(cfg: &LoadedConfig) -> Outcome {
    let eps = epsilons(cfg);
    let mut pass = true;
    let mut parts = Vec::new();

    // realness of the reconstruction along a full trajectory at the largest eps
    let sim = cfg.sim_config(eps[0], Variant::J3);
    let traj = simulate_envelope(&cfg.problem, &sim).expect("envelope");
    let mc = sim.carrier_mode(&cfg.problem.disp).expect("carrier");
    let fine = Grid::new(sim.length, fine_modes(mc, 3, sim.ref_modes)).expect("grid");
    let mut imag = 0.0_f64;
    for s in &traj.snapshots {
        let samples = reconstruct(&s.state, &cfg.problem.disp, sim.epsilon, fine).expect("reconstruct");
        let max = samples.iter().map(|z| z.norm()).fold(0.0, f64::max);
        imag = imag.max(samples.iter().map(|z| z.im.abs()).fold(0.0, f64::max) / max);
    }
    pass &= imag <= 1e-11;
    parts.push(format!("max |Im u~| / max |u~| = {imag:.1e} (<= 1e-11)"));

    let mut ratios = Vec::new();
    for &e in &eps {
        let sim = cfg.sim_config(e, Variant::J3);
        let s = init_envelope(&cfg.problem, &sim).expect("init");
        pass &= s.u_hat(3).is_some_and(|u| u.is_zero());
        let solver = EnvelopeSolver::new(&cfg.problem, &sim).expect("solver");
        let z = z_fields(&solver, &s);
        let z1 = &z.iter().find(|f| f.0 == 1).expect("z_1").1;
        let grad = dmu_norm(&s.u_hat(1).expect("u_1"));
        ratios.push(wiener_norm(&project_p_perp(z1)) / (e * grad));
    }
    let (lo, hi) = ratios.iter().fold((f64::INFINITY, 0.0_f64), |(l, h), &r| (l.min(r), h.max(r)));
    pass &= lo > 0.0 && hi / lo <= 2.5;
    parts.push(format!("u_3(0) = 0; ||P_perp z_1(0)|| / (eps ||grad p||_W) in [{lo:.4}, {hi:.4}]"));

    let set = symmetric_set(&[1, 3]);
    let (c1, c3) = (enumerate_index_set(1, &set).len(), enumerate_index_set(3, &set).len());
    pass &= c1 == 12 && c3 == 10;
    parts.push(format!("index sets {c1} (j=1), {c3} (j=3)"));
    Outcome::new(8, "Structure and symmetry", pass, parts.join("; "))
}

fn fifth_harmonic(result: &SweepResult) -> Outcome {
    let s = slope(result, Variant::J5);
    let mut o = Outcome::new(9, "j5 approximation (experimental)", s.is_some_and(|s| s >= 2.5), format!("slope {} (>= 2.5)", fmt_opt(s)));
    o.experimental = true;
    o
}

fn main() {
    // `cargo test -- --list` and friends pass flags we do not take
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let t0 = Instant::now();
    let base = kg_config();
    let cfg = with_variants(&base, &[Variant::Svea1, Variant::J3, Variant::J5]);
    let eps = epsilons(&cfg);
    let result = run_sweep(&cfg, &eps, &cfg.raw.solver.variants.clone()).expect("sweep");
    for f in result.failures() {
        eprintln!("run failed: {} at eps {}: {}", f.variant.name(), f.epsilon, f.failure.as_deref().unwrap_or(""));
    }
    let dir = out_dir("kg_sweep");
    emit_reports(&cfg.raw, &result, &dir).expect("reports");
    eprintln!("reports in {}", dir.display());

    let outcomes = vec![
        error_rate_j3(&cfg, &result),
        svea_baseline(&cfg, &result),
        refined_bounds(&result),
        slow_derivative(&result),
        convolution_oracle(),
        linear_isometry(&cfg),
        closed_forms(),
        structure(&cfg),
        fifth_harmonic(&result),
    ];
    let mut failed = 0;
    for o in &outcomes {
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        let tag = if o.experimental { " [experimental]" } else { "" };
        println!("{verdict} {}{tag} {}: {}", o.id, o.title, o.detail);
        if !o.pass && !o.experimental {
            failed += 1;
        }
    }
    println!("acceptance: {} of {} criteria passed ({:.0} s)", outcomes.iter().filter(|o| o.pass).count(), outcomes.len(), t0.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
