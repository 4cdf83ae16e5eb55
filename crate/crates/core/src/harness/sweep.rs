use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::diagnostics::{diagnose, refined_bounds, DiagnosticsRecord, RefinedBounds};
use crate::eigen::{check_assumptions, check_nonresonance, AssumptionReport, NonResonanceReport};
use crate::error::{Error, Result};
use crate::solvers::{simulate_envelope_with, simulate_reference, EnvelopeSolver, ReferenceState, Trajectory, Variant};

use super::config::LoadedConfig;
use super::fit::{fit_rate, RateFit};

/// One (variant, epsilon) run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub variant: Variant,
    pub epsilon: f64,
    pub carrier_mode: i64,
    pub env_modes: usize,
    pub ref_modes: usize,
    /// Physical reference step.
    pub h_ref: f64,
    /// Slow envelope step.
    pub h_env: f64,
    pub t_end_slow: f64,
    pub env_steps: usize,
    pub records: Vec<DiagnosticsRecord>,
    pub bounds: Option<RefinedBounds>,
    pub failure: Option<String>,
    /// Wall-clock seconds; not part of the deterministic CSV.
    pub seconds_reference: f64,
    pub seconds_envelope: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantRate {
    pub variant: Variant,
    /// `err_W` or `err_Linf`.
    pub metric: String,
    pub fit: RateFit,
}

/// Spread of a per-epsilon constant across the sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantSpread {
    pub variant: Variant,
    pub quantity: String,
    pub min: f64,
    pub max: f64,
    /// `max / min`; 1 means perfectly epsilon-uniform.
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<RunRow>,
    pub rates: Vec<VariantRate>,
    pub constants: Vec<ConstantSpread>,
    pub assumptions: AssumptionReport,
    pub nonresonance: NonResonanceReport,
}

impl SweepResult {
    pub fn rate(&self, variant: Variant, metric: &str) -> Option<&RateFit> {
        self.rates.iter().find(|r| r.variant == variant && r.metric == metric).map(|r| &r.fit)
    }

    pub fn spread(&self, variant: Variant, quantity: &str) -> Option<&ConstantSpread> {
        self.constants.iter().find(|c| c.variant == variant && c.quantity == quantity)
    }

    pub fn row(&self, variant: Variant, epsilon: f64) -> Option<&RunRow> {
        self.rows.iter().find(|r| r.variant == variant && r.epsilon == epsilon)
    }

    pub fn failures(&self) -> impl Iterator<Item = &RunRow> {
        self.rows.iter().filter(|r| r.failure.is_some())
    }
}

/// Snaps, deduplicates and sorts (decreasing) the epsilon list.
pub fn prepare_epsilons(cfg: &LoadedConfig, eps_list: &[f64], min_len: usize) -> Result<Vec<f64>> {
    if eps_list.len() < min_len {
        return Err(Error::InvalidConfig(format!("need at least {min_len} epsilon values, got {}", eps_list.len())));
    }
    let mut eps = eps_list.iter().map(|&e| cfg.snap(e)).collect::<Result<Vec<_>>>()?;
    eps.sort_by(|a, b| b.total_cmp(a));
    if let Some(w) = eps.windows(2).find(|w| (w[0] - w[1]).abs() <= 1e-12 * w[0]) {
        return Err(Error::InvalidConfig(format!("duplicate epsilon {} (after snapping)", w[0])));
    }
    Ok(eps)
}

/// Reference plus every requested envelope variant at one epsilon. Failures
/// are recorded in the rows rather than returned.
pub fn run_epsilon(cfg: &LoadedConfig, eps: f64, variants: &[Variant]) -> Vec<RunRow> {
    let problem = &cfg.problem;
    let blank = |variant: Variant| {
        let sim = cfg.sim_config(eps, variant);
        RunRow {
            variant,
            epsilon: eps,
            carrier_mode: sim.carrier_mode(&problem.disp).unwrap_or(0),
            env_modes: sim.env_modes,
            ref_modes: sim.ref_modes,
            h_ref: sim.h_ref,
            h_env: sim.h_env,
            t_end_slow: sim.t_end_slow,
            env_steps: sim.env_schedule().0 * sim.n_snap,
            records: Vec::new(),
            bounds: None,
            failure: None,
            seconds_reference: 0.0,
            seconds_envelope: 0.0,
        }
    };
    // the reference does not depend on the variant; validate against the widest band
    let widest = variants.iter().copied().max().unwrap_or(Variant::J3);
    let t0 = Instant::now();
    let reference = simulate_reference(problem, &cfg.sim_config(eps, widest));
    let t_ref = t0.elapsed().as_secs_f64();
    let reference = match reference {
        Ok(r) => r,
        Err(e) => {
            log::error!("reference run failed at eps = {eps}: {e}");
            return variants
                .iter()
                .map(|&v| RunRow { failure: Some(format!("reference: {e}")), seconds_reference: t_ref, ..blank(v) })
                .collect();
        }
    };
    variants
        .iter()
        .map(|&v| {
            let t0 = Instant::now();
            let out = envelope_records(cfg, eps, v, &reference);
            let t_env = t0.elapsed().as_secs_f64();
            let row = RunRow { seconds_reference: t_ref, seconds_envelope: t_env, ..blank(v) };
            match out {
                Ok(records) => {
                    let bounds = refined_bounds(&records).ok();
                    RunRow { records, bounds, ..row }
                }
                Err(e) => {
                    log::error!("{} run failed at eps = {eps}: {e}", v.name());
                    RunRow { failure: Some(e.to_string()), ..row }
                }
            }
        })
        .collect()
}

fn envelope_records(cfg: &LoadedConfig, eps: f64, variant: Variant, reference: &Trajectory<ReferenceState>) -> Result<Vec<DiagnosticsRecord>> {
    let problem = &cfg.problem;
    let sim = cfg.sim_config(eps, variant);
    sim.validate(problem)?;
    let solver = EnvelopeSolver::new(problem, &sim)?;
    let env = simulate_envelope_with(&solver, problem, &sim)?;
    let pairs: Vec<usize> = (0..env.snapshots.len()).collect();
    sim.exec
        .map_items(&pairs, |&i| {
            let (r, e) = (&reference.snapshots[i], &env.snapshots[i]);
            if (r.t_slow - e.t_slow).abs() > 1e-12 * r.t_slow.max(1.0) {
                return Err(Error::TimeMismatch(r.t_slow, e.t_slow));
            }
            diagnose(&problem.spec, &problem.disp, &solver, e.t_slow, &r.state, &e.state)
        })
        .into_iter()
        .collect()
}

/// Runs every epsilon (in parallel when enabled) and fits the rates.
pub fn run_sweep(cfg: &LoadedConfig, eps_list: &[f64], variants: &[Variant]) -> Result<SweepResult> {
    let eps = prepare_epsilons(cfg, eps_list, 3)?;
    let rows = run_rows(cfg, &eps, variants);
    Ok(summarize(cfg, rows, variants))
}

/// Runs without the sweep-size requirement (single-epsilon `run`).
pub fn run_rows(cfg: &LoadedConfig, eps: &[f64], variants: &[Variant]) -> Vec<RunRow> {
    cfg.raw.solver.exec.map_items(eps, |&e| run_epsilon(cfg, e, variants)).into_iter().flatten().collect()
}

type Getter = fn(&RefinedBounds) -> f64;

pub fn summarize(cfg: &LoadedConfig, rows: Vec<RunRow>, variants: &[Variant]) -> SweepResult {
    let mut rates = Vec::new();
    let mut constants = Vec::new();
    for &v in variants {
        let bounds: Vec<&RefinedBounds> = rows.iter().filter(|r| r.variant == v).filter_map(|r| r.bounds.as_ref()).collect();
        for (metric, get) in [("err_W", (|b: &RefinedBounds| b.err_w_max) as Getter), ("err_Linf", |b| b.err_linf_max)] {
            let pts: Vec<(f64, f64)> = bounds.iter().map(|b| (b.epsilon, get(b))).collect();
            match fit_rate(&pts) {
                Ok(fit) => rates.push(VariantRate { variant: v, metric: metric.into(), fit }),
                Err(e) => log::warn!("no {metric} rate for {}: {e}", v.name()),
            }
        }
        let quantities: [(&str, Getter); 7] = [
            ("u3_over_eps", |b| b.u3_over_eps),
            ("dmu_u3_over_eps", |b| b.dmu_u3_over_eps),
            ("proj_perp_over_eps", |b| b.proj_perp_over_eps),
            ("dmu_proj_perp_over_eps", |b| b.dmu_proj_perp_over_eps),
            ("scaled_norm_growth", |b| b.scaled_norm_max / b.scaled_norm_initial),
            ("dt_pu1", |b| b.dt_pu1_max),
            ("err_w_over_eps2", |b| b.err_w_max / (b.epsilon * b.epsilon)),
        ];
        if bounds.is_empty() {
            continue;
        }
        for (name, get) in quantities {
            let vals: Vec<f64> = bounds.iter().map(|b| get(b)).collect();
            let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let max = vals.iter().copied().fold(0.0_f64, f64::max);
            if !(min > 0.0) {
                // identically zero for this variant (no third harmonic)
                continue;
            }
            constants.push(ConstantSpread { variant: v, quantity: name.into(), min, max, ratio: max / min });
        }
    }
    SweepResult {
        rows,
        rates,
        constants,
        assumptions: check_assumptions(&cfg.problem.spec, &cfg.problem.disp),
        nonresonance: check_nonresonance(&cfg.problem.spec, &cfg.problem.disp),
    }
}
