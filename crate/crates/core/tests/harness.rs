use std::path::Path;
use std::process::Command;

use hfwave::harness::{emit_reports, load_config, load_report, parse_config, refit_csv, run_sweep, summarize, LoadedConfig};
use hfwave::solvers::Variant;

fn configs_dir() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/configs"))
}

const TINY: &str = r#"{
    "system": {"klein_gordon": {}},
    "dispersion": {"kappa": [1.0]},
    "profile": {"gaussian": {"amplitude": 0.5, "width": 2.0}},
    "grid": {"length_over_pi": 16, "env_modes": 128},
    "solver": {"t_end_slow": 0.05, "h_env": 0.001, "snapshots": 2, "variants": ["svea1", "j3"]},
    "sweep": {"epsilons": [0.5, 0.25, 0.125]}
}"#;

fn tiny() -> LoadedConfig {
    parse_config(TINY).unwrap()
}

#[test]
fn sample_configs_parse() {
    for name in ["klein_gordon.json", "maxwell_lorentz_1d.json"] {
        let c = load_config(&configs_dir().join(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(c.raw.sweep.epsilons.len(), 3);
    }
    let ml = load_config(&configs_dir().join("maxwell_lorentz_1d.json")).unwrap();
    assert_eq!(ml.problem.spec.n, 4);
}

#[test]
fn empty_result_writes_headers_only() {
    let cfg = tiny();
    let result = summarize(&cfg, Vec::new(), &[]);
    let dir = tempfile::tempdir().unwrap();
    emit_reports(&cfg.raw, &result, dir.path()).unwrap();
    let sweep = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 1);
    assert!(sweep.starts_with("variant,epsilon,N,h_ref,h_env,t_end_slow,err_W,err_Linf,u3_W1_over_eps,projperp_over_eps,residual_W,rate_context"));
    let records = std::fs::read_to_string(dir.path().join("records.csv")).unwrap();
    assert_eq!(records.lines().count(), 1);
}

#[test]
fn sweep_reports_are_deterministic_and_round_trip() {
    let cfg = tiny();
    let variants = [Variant::Svea1, Variant::J3];
    let eps = cfg.raw.sweep.epsilons.clone();
    let a = run_sweep(&cfg, &eps, &variants).unwrap();
    let b = run_sweep(&cfg, &eps, &variants).unwrap();
    assert_eq!(a.rows.len(), 6);
    assert!(a.failures().next().is_none());
    assert!(a.rate(Variant::J3, "err_W").is_some());
    assert!(a.rate(Variant::Svea1, "err_Linf").is_some());
    assert!(a.spread(Variant::J3, "u3_over_eps").is_some());

    let (da, db) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    emit_reports(&cfg.raw, &a, da.path()).unwrap();
    emit_reports(&cfg.raw, &b, db.path()).unwrap();
    for f in ["sweep.csv", "records.csv", "plots/rates_j3.dat", "plots/history_svea1.dat"] {
        let x = std::fs::read(da.path().join(f)).unwrap();
        let y = std::fs::read(db.path().join(f)).unwrap();
        assert!(x == y, "{f} differs between identical runs");
    }

    let report = load_report(&da.path().join("report.json")).unwrap();
    assert_eq!(report.result, a);
    assert_eq!(report.config, cfg.raw);

    let refit = refit_csv(&da.path().join("sweep.csv")).unwrap();
    for r in &refit {
        let want = a.rate(r.variant, &r.metric).unwrap();
        assert!((r.fit.slope - want.slope).abs() < 1e-12, "{:?}", r);
    }
}

#[test]
fn refit_recovers_synthetic_slopes() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sweep.csv");
    let mut text = String::from("variant,epsilon,N,h_ref,h_env,t_end_slow,err_W,err_Linf,u3_W1_over_eps,projperp_over_eps,residual_W,rate_context\n");
    for e in [0.1f64, 0.05, 0.025] {
        text += &format!("j3,{e},1,1,1,1,{},{},0,0,0,\n", 3.0 * e * e, 0.5 * e * e);
        text += &format!("svea1,{e},1,1,1,1,{},{},0,0,0,\n", 2.0 * e, e);
    }
    text += "j5,0.1,1,1,1,1,,,,,,failed: blow-up\n";
    std::fs::write(&path, text).unwrap();
    let fits = refit_csv(&path).unwrap();
    let slope = |v: Variant, m: &str| fits.iter().find(|f| f.variant == v && f.metric == m).unwrap().fit.slope;
    assert!((slope(Variant::J3, "err_W") - 2.0).abs() < 1e-12);
    assert!((slope(Variant::Svea1, "err_Linf") - 1.0).abs() < 1e-12);
    assert!(fits.iter().all(|f| f.variant != Variant::J5));
}

#[test]
fn cli_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_hfwave");
    let status = Command::new(bin).args(["check", "--config"]).arg(configs_dir().join("klein_gordon.json")).status().unwrap();
    assert_eq!(status.code(), Some(0));
    let status = Command::new(bin).args(["check", "--config", "/nonexistent/config.json"]).status().unwrap();
    assert_eq!(status.code(), Some(1));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.json");
    std::fs::write(&cfg, TINY).unwrap();
    let out = dir.path().join("out");
    let status = Command::new(bin)
        .args(["sweep", "--variant", "j3", "--snapshots", "1", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let report = load_report(&out.join("report.json")).unwrap();
    assert_eq!(report.result.rows.len(), 3);
    assert_eq!(report.config.solver.snapshots, 1);
    let status = Command::new(bin).arg("fit").arg(out.join("sweep.csv")).status().unwrap();
    assert_eq!(status.code(), Some(0));

    let status = Command::new(bin).args(["run", "--eps", "0.25", "--config"]).arg(&cfg).arg("--out").arg(dir.path().join("one")).status().unwrap();
    assert_eq!(status.code(), Some(0));
}
