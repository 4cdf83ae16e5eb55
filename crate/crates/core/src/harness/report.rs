use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solvers::dump::csv_err;
use crate::solvers::Variant;

use super::config::RunConfig;
use super::fit::fit_rate;
use super::sweep::{SweepResult, VariantRate};

/// Columns of `sweep.csv`. `N` is the reference grid size.
pub const SWEEP_COLUMNS: [&str; 12] = [
    "variant",
    "epsilon",
    "N",
    "h_ref",
    "h_env",
    "t_end_slow",
    "err_W",
    "err_Linf",
    "u3_W1_over_eps",
    "projperp_over_eps",
    "residual_W",
    "rate_context",
];

/// Columns of `records.csv`, one row per snapshot.
pub const RECORD_COLUMNS: [&str; 17] = [
    "variant",
    "epsilon",
    "t",
    "err_W",
    "err_Linf",
    "u3_L1",
    "dmu_u3",
    "u3_W1",
    "projperp_u1",
    "dmu_projperp_u1",
    "scaled_norm_z",
    "residual_W",
    "residual_bound",
    "residual_dominant",
    "dt_pu1",
    "norm_defect",
    "failure",
];

/// Everything written to `report.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config: RunConfig,
    pub result: SweepResult,
}

/// Seventeen significant digits, so the text is deterministic and exact.
pub fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn rate_context(result: &SweepResult, variant: Variant, failure: Option<&str>) -> String {
    if let Some(f) = failure {
        return format!("failed: {f}");
    }
    match result.rate(variant, "err_W") {
        Some(r) => format!("slope_W={} over {} eps", fmt(r.slope), r.points),
        None => "no fit".into(),
    }
}

fn write_sweep_csv(result: &SweepResult, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(SWEEP_COLUMNS).map_err(csv_err)?;
    for row in &result.rows {
        let ctx = rate_context(result, row.variant, row.failure.as_deref());
        let head = [row.variant.name().to_string(), fmt(row.epsilon), row.ref_modes.to_string(), fmt(row.h_ref), fmt(row.h_env), fmt(row.t_end_slow)];
        let tail = match &row.bounds {
            Some(b) => [fmt(b.err_w_max), fmt(b.err_linf_max), fmt(b.u3_w1_over_eps), fmt(b.proj_perp_over_eps), fmt(b.residual_w_max)],
            None => Default::default(),
        };
        w.write_record(head.iter().chain(&tail).chain(std::iter::once(&ctx))).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn write_records_csv(result: &SweepResult, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(RECORD_COLUMNS).map_err(csv_err)?;
    for row in &result.rows {
        if let Some(f) = &row.failure {
            let mut rec = vec![String::new(); RECORD_COLUMNS.len()];
            rec[0] = row.variant.name().into();
            rec[1] = fmt(row.epsilon);
            rec[RECORD_COLUMNS.len() - 1] = f.clone();
            w.write_record(&rec).map_err(csv_err)?;
        }
        for r in &row.records {
            let nums = [
                r.epsilon,
                r.t,
                r.err_w,
                r.err_linf,
                r.u3_l1,
                r.dmu_u3,
                r.u3_w1,
                r.proj_perp_u1,
                r.dmu_proj_perp_u1,
                r.scaled_norm_z,
                r.residual_w,
                r.residual_bound,
                r.residual_dominant,
                r.dt_pu1,
                r.norm_defect,
            ];
            let rec: Vec<String> = std::iter::once(row.variant.name().to_string())
                .chain(nums.iter().map(|x| fmt(*x)))
                .chain(std::iter::once(String::new()))
                .collect();
            w.write_record(&rec).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_plots(result: &SweepResult, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut variants: Vec<Variant> = result.rows.iter().map(|r| r.variant).collect();
    variants.sort();
    variants.dedup();
    for v in variants {
        let rows: Vec<_> = result.rows.iter().filter(|r| r.variant == v && r.bounds.is_some()).collect();
        let mut text = String::from("# log10(eps) log10(sup err_W) log10(sup err_Linf) log10(sup residual_W)\n");
        for r in &rows {
            let b = r.bounds.as_ref().expect("filtered");
            text += &format!("{} {} {} {}\n", fmt(b.epsilon.log10()), fmt(b.err_w_max.log10()), fmt(b.err_linf_max.log10()), fmt(b.residual_w_max.log10()));
        }
        let p = dir.join(format!("rates_{}.dat", v.name()));
        fs::write(&p, text)?;
        written.push(p);

        let mut text = String::from("# epsilon t err_W err_Linf u3_L1 projperp_u1 scaled_norm_z dt_pu1\n");
        for r in &rows {
            for rec in &r.records {
                text += &format!(
                    "{} {} {} {} {} {} {} {}\n",
                    fmt(rec.epsilon),
                    fmt(rec.t),
                    fmt(rec.err_w),
                    fmt(rec.err_linf),
                    fmt(rec.u3_l1),
                    fmt(rec.proj_perp_u1),
                    fmt(rec.scaled_norm_z),
                    fmt(rec.dt_pu1)
                );
            }
            text += "\n\n";
        }
        let p = dir.join(format!("history_{}.dat", v.name()));
        fs::write(&p, text)?;
        written.push(p);
    }
    Ok(written)
}

/// Writes `sweep.csv`, `records.csv`, `report.json`, `config.json` and
/// `plots/*.dat` into `outdir`; returns the paths written.
pub fn emit_reports(config: &RunConfig, result: &SweepResult, outdir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(outdir)?;
    let mut written = Vec::new();
    let p = outdir.join("sweep.csv");
    write_sweep_csv(result, &p)?;
    written.push(p);
    let p = outdir.join("records.csv");
    write_records_csv(result, &p)?;
    written.push(p);
    let report = Report { config: config.clone(), result: result.clone() };
    let p = outdir.join("report.json");
    fs::write(&p, serde_json::to_string_pretty(&report)?)?;
    written.push(p);
    let p = outdir.join("config.json");
    fs::write(&p, serde_json::to_string_pretty(config)?)?;
    written.push(p);
    written.extend(write_plots(result, &outdir.join("plots"))?);
    Ok(written)
}

pub fn load_report(path: &Path) -> Result<Report> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Re-fits the rates from an existing `sweep.csv`; failed rows are skipped.
pub fn refit_csv(path: &Path) -> Result<Vec<VariantRate>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let headers = r.headers().map_err(csv_err)?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Config { path: path.display().to_string(), msg: format!("missing column `{name}`") })
    };
    let (cv, ce, cw, cl) = (col("variant")?, col("epsilon")?, col("err_W")?, col("err_Linf")?);
    let mut points: Vec<(Variant, f64, f64, f64)> = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        if rec[cw].is_empty() {
            continue;
        }
        let num = |i: usize| {
            rec[i].parse::<f64>().map_err(|_| Error::Config { path: path.display().to_string(), msg: format!("bad number `{}`", &rec[i]) })
        };
        points.push((rec[cv].parse()?, num(ce)?, num(cw)?, num(cl)?));
    }
    let mut variants: Vec<Variant> = points.iter().map(|p| p.0).collect();
    variants.sort();
    variants.dedup();
    let mut out = Vec::new();
    for v in variants {
        let sel: Vec<_> = points.iter().filter(|p| p.0 == v).collect();
        for (metric, idx) in [("err_W", 2), ("err_Linf", 3)] {
            let pts: Vec<(f64, f64)> = sel.iter().map(|p| (p.1, if idx == 2 { p.2 } else { p.3 })).collect();
            out.push(VariantRate { variant: v, metric: metric.into(), fit: fit_rate(&pts)? });
        }
    }
    Ok(out)
}
