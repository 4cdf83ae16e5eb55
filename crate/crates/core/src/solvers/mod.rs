//! Time integration: the oscillation-resolving reference solver for the full
//! system and the multi-harmonic envelope solver in slow variables.

pub mod dump;
pub mod envelope;
pub mod index_set;
pub mod nonlinear;
pub mod reference;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::spectral::Grid;
use crate::system::{DispersionData, EnvelopeProfile, SystemSpec};

pub use envelope::{init_envelope, step_envelope, EnvelopeSolver, EnvelopeState, NegativeHarmonics};
pub use index_set::{enumerate_index_set, residual_harmonics, symmetric_set};
pub use reference::{init_reference, step_reference, ReferenceSolver, ReferenceState, Splitting};

/// Default reference steps per unit of epsilon in physical time, for the
/// default fourth-order splitting. Plain Strang at `eps / 40` leaves a
/// splitting error comparable to the model error at eps = 0.025.
pub const DEFAULT_REF_STEPS_PER_EPS: f64 = 20.0;
/// Default number of envelope steps over the slow horizon. RK4 in the slow
/// variables still sees phases turning at `|lambda_3| / eps`; this keeps the
/// self-error two orders below the model error down to eps = 0.025.
pub const DEFAULT_ENV_STEPS: usize = 16_000;
pub const DEFAULT_SNAPSHOTS: usize = 16;
/// Envelope norm may grow at most this much before the run is aborted.
pub const DEFAULT_BLOWUP_FACTOR: f64 = 10.0;
/// Largest phase (radians) the fastest linear mode may turn through in one
/// reference step.
pub const REF_PHASE_BUDGET: f64 = 1.0;
/// Minimum physical samples per carrier wavelength on the reference grid.
pub const MIN_POINTS_PER_WAVELENGTH: f64 = 8.0;

/// Which harmonics the envelope model keeps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// `{+-1}` only.
    Svea1,
    /// `{+-1, +-3}`.
    J3,
    /// `{+-1, +-3, +-5}`.
    J5,
}

impl Variant {
    pub fn harmonics(self) -> &'static [i32] {
        match self {
            Variant::Svea1 => &[1],
            Variant::J3 => &[1, 3],
            Variant::J5 => &[1, 3, 5],
        }
    }

    pub fn j_max(self) -> i32 {
        *self.harmonics().last().expect("nonempty")
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Svea1 => "svea1",
            Variant::J3 => "j3",
            Variant::J5 => "j5",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Variant> {
        match s {
            "svea1" => Ok(Variant::Svea1),
            "j3" => Ok(Variant::J3),
            "j5" => Ok(Variant::J5),
            other => Err(Error::InvalidConfig(format!("unknown variant `{other}` (expected svea1, j3 or j5)"))),
        }
    }
}

/// System, carrier and initial envelope.
#[derive(Clone, Debug)]
pub struct Problem {
    pub spec: SystemSpec,
    pub disp: DispersionData,
    pub profile: EnvelopeProfile,
}

/// Settings for one epsilon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub epsilon: f64,
    /// Horizon in slow time; the physical horizon is `t_end_slow / epsilon`.
    pub t_end_slow: f64,
    /// Reference step, physical time.
    pub h_ref: f64,
    /// Envelope step, slow time (so the step count does not depend on epsilon).
    pub h_env: f64,
    pub variant: Variant,
    pub n_snap: usize,
    /// Torus length.
    pub length: f64,
    pub env_modes: usize,
    pub ref_modes: usize,
    pub exec: Exec,
    pub blowup_factor: f64,
    #[serde(default)]
    pub splitting: Splitting,
}

impl SimConfig {
    /// Defaults for everything except the physics parameters. `epsilon` is
    /// used as given; see [`snap_epsilon`].
    pub fn new(epsilon: f64, t_end_slow: f64, variant: Variant, kappa: f64, length: f64, env_modes: usize) -> SimConfig {
        let k0 = 2.0 * std::f64::consts::PI / length;
        let mc = (kappa / (epsilon * k0)).round().abs() as usize;
        SimConfig {
            epsilon,
            t_end_slow,
            h_ref: epsilon / DEFAULT_REF_STEPS_PER_EPS,
            h_env: if t_end_slow > 0.0 { t_end_slow / DEFAULT_ENV_STEPS as f64 } else { 1.0 },
            variant,
            n_snap: DEFAULT_SNAPSHOTS,
            length,
            env_modes,
            ref_modes: default_ref_modes(mc, env_modes),
            exec: Exec::default(),
            blowup_factor: DEFAULT_BLOWUP_FACTOR,
            splitting: Splitting::default(),
        }
    }

    pub fn env_grid(&self) -> Result<Grid> {
        Grid::new(self.length, self.env_modes)
    }

    pub fn ref_grid(&self) -> Result<Grid> {
        Grid::new(self.length, self.ref_modes)
    }

    /// Mode number of the carrier `kappa / epsilon`.
    pub fn carrier_mode(&self, disp: &DispersionData) -> Result<i64> {
        crate::diagnostics::carrier_mode(disp, self.epsilon, self.length)
    }

    pub fn physical_horizon(&self) -> f64 {
        self.t_end_slow / self.epsilon
    }

    /// Checks commensurability, grid resolution and the step budget.
    pub fn validate(&self, problem: &Problem) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return bad(format!("epsilon must lie in (0, 1], got {}", self.epsilon));
        }
        if !(self.t_end_slow >= 0.0 && self.t_end_slow.is_finite()) {
            return bad(format!("t_end_slow must be finite and >= 0, got {}", self.t_end_slow));
        }
        if !(self.h_ref > 0.0 && self.h_env > 0.0) {
            return bad("step sizes must be positive".into());
        }
        if self.n_snap == 0 {
            return bad("n_snap must be >= 1".into());
        }
        if problem.spec.d != 1 {
            return bad(format!("only d = 1 is supported, got d = {}", problem.spec.d));
        }
        let env = self.env_grid()?;
        let rg = self.ref_grid()?;
        let mc = self.carrier_mode(&problem.disp)?.unsigned_abs() as usize;
        let ppw = self.ref_modes as f64 / mc as f64;
        if ppw < MIN_POINTS_PER_WAVELENGTH {
            return Err(Error::UnderResolved(format!(
                "{ppw:.2} points per carrier wavelength on the reference grid, need {MIN_POINTS_PER_WAVELENGTH}"
            )));
        }
        let top = self.variant.j_max() as usize * mc + self.env_modes / 2;
        if top >= self.ref_modes / 2 {
            return Err(Error::UnderResolved(format!(
                "harmonic {} band reaches mode {top}, reference grid keeps |m| < {}",
                self.variant.j_max(),
                self.ref_modes / 2
            )));
        }
        if self.env_modes > self.ref_modes {
            return bad("envelope grid must not be finer than the reference grid".into());
        }
        let kmax = rg.k0() * (rg.n() / 2) as f64;
        let radius = crate::system::singular_values(&problem.spec.assemble_l(0.0, &[kmax]))
            .last()
            .copied()
            .unwrap_or(0.0)
            .max(kmax)
            + problem.spec.e.abs().max() / self.epsilon;
        if self.h_ref * radius > REF_PHASE_BUDGET {
            return bad(format!(
                "h_ref = {} turns the fastest mode by {:.3} rad per step (budget {REF_PHASE_BUDGET})",
                self.h_ref,
                self.h_ref * radius
            ));
        }
        problem.profile.validate(&problem.disp, &env)
    }

    /// Snapshot interval in physical time.
    pub fn snapshot_interval(&self) -> f64 {
        self.physical_horizon() / self.n_snap as f64
    }

    /// `(steps per snapshot, physical step)` for the reference solver.
    pub fn ref_schedule(&self) -> (usize, f64) {
        schedule(self.snapshot_interval(), self.h_ref)
    }

    /// `(steps per snapshot, physical step)` for the envelope solver.
    pub fn env_schedule(&self) -> (usize, f64) {
        let (steps, _) = schedule(self.t_end_slow / self.n_snap as f64, self.h_env);
        (steps, if steps == 0 { 0.0 } else { self.snapshot_interval() / steps as f64 })
    }
}

fn schedule(interval: f64, h: f64) -> (usize, f64) {
    if interval <= 0.0 {
        return (0, 0.0);
    }
    let steps = ((interval / h) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    (steps, interval / steps as f64)
}

/// Smallest power of two keeping `5 mc + env_modes / 2` inside the band and
/// at least [`MIN_POINTS_PER_WAVELENGTH`] points per carrier wavelength.
pub fn default_ref_modes(carrier_mode: usize, env_modes: usize) -> usize {
    let band = 2 * (5 * carrier_mode + env_modes / 2) + 2;
    let ppw = (MIN_POINTS_PER_WAVELENGTH * carrier_mode as f64).ceil() as usize;
    band.max(ppw).max(env_modes).next_power_of_two()
}

/// Nearest commensurable epsilon `kappa / (m k0)` and its carrier mode `m`.
pub fn snap_epsilon(epsilon: f64, kappa: f64, length: f64) -> Result<(f64, i64)> {
    if !(epsilon > 0.0) || kappa == 0.0 {
        return Err(Error::InvalidConfig(format!("cannot snap epsilon = {epsilon} with kappa = {kappa}")));
    }
    let k0 = 2.0 * std::f64::consts::PI / length;
    let m = (kappa.abs() / (epsilon * k0)).round().max(1.0);
    Ok((kappa.abs() / (m * k0), m as i64 * kappa.signum() as i64))
}

/// Recorded state at slow time `t_slow`.
#[derive(Clone, Debug)]
pub struct Snapshot<S> {
    pub t_slow: f64,
    pub state: S,
}

#[derive(Clone, Debug)]
pub struct Trajectory<S> {
    pub snapshots: Vec<Snapshot<S>>,
    /// Physical step actually used.
    pub h: f64,
    pub total_steps: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverKind {
    Reference,
    Envelope,
}

#[derive(Clone, Debug)]
pub enum TrajectoryHandle {
    Reference(Trajectory<ReferenceState>),
    Envelope(Trajectory<EnvelopeState>),
}

pub fn simulate(kind: SolverKind, problem: &Problem, cfg: &SimConfig) -> Result<TrajectoryHandle> {
    Ok(match kind {
        SolverKind::Reference => TrajectoryHandle::Reference(simulate_reference(problem, cfg)?),
        SolverKind::Envelope => TrajectoryHandle::Envelope(simulate_envelope(problem, cfg)?),
    })
}

fn snapshot_times(cfg: &SimConfig) -> Vec<f64> {
    if cfg.t_end_slow == 0.0 {
        return vec![0.0];
    }
    (0..=cfg.n_snap).map(|s| cfg.t_end_slow * s as f64 / cfg.n_snap as f64).collect()
}

pub fn simulate_reference(problem: &Problem, cfg: &SimConfig) -> Result<Trajectory<ReferenceState>> {
    cfg.validate(problem)?;
    let mut solver = ReferenceSolver::new(&problem.spec, cfg)?;
    let mut state = init_reference(problem, cfg)?;
    let initial = state.norm();
    let (per_snap, h) = cfg.ref_schedule();
    let times = snapshot_times(cfg);
    let mut snaps = vec![Snapshot { t_slow: 0.0, state: state.clone() }];
    for (s, &ts) in times.iter().enumerate().skip(1) {
        solver.advance(&mut state, per_snap)?;
        // pin the clock to the exact snapshot time
        state.t = cfg.snapshot_interval() * s as f64;
        guard(state.norm(), initial, cfg.blowup_factor, state.t)?;
        snaps.push(Snapshot { t_slow: ts, state: state.clone() });
    }
    Ok(Trajectory { snapshots: snaps, h, total_steps: per_snap * (times.len() - 1) })
}

pub fn simulate_envelope(problem: &Problem, cfg: &SimConfig) -> Result<Trajectory<EnvelopeState>> {
    cfg.validate(problem)?;
    let solver = EnvelopeSolver::new(problem, cfg)?;
    simulate_envelope_with(&solver, problem, cfg)
}

/// Like [`simulate_envelope`] with a prebuilt solver (decompositions are
/// reused across runs with the same epsilon).
pub fn simulate_envelope_with(solver: &EnvelopeSolver, problem: &Problem, cfg: &SimConfig) -> Result<Trajectory<EnvelopeState>> {
    let state = init_envelope(problem, cfg)?;
    let initial = state.norm();
    let (per_snap, h) = cfg.env_schedule();
    let times = snapshot_times(cfg);
    let mut z = solver.to_z(&state);
    let mut t = 0.0;
    let mut snaps = vec![Snapshot { t_slow: 0.0, state }];
    for (s, &ts) in times.iter().enumerate().skip(1) {
        for _ in 0..per_snap {
            z = solver.step_z(t, &z, h);
            t += h;
        }
        t = cfg.snapshot_interval() * s as f64;
        let st = solver.from_z(t, &z);
        let norm = st.norm();
        if !norm.is_finite() {
            return Err(Error::NonFinite { t });
        }
        guard(norm, initial, cfg.blowup_factor, t)?;
        snaps.push(Snapshot { t_slow: ts, state: st });
    }
    Ok(Trajectory { snapshots: snaps, h, total_steps: per_snap * (times.len() - 1) })
}

fn guard(norm: f64, initial: f64, factor: f64, t: f64) -> Result<()> {
    if !norm.is_finite() {
        return Err(Error::NonFinite { t });
    }
    if initial > 0.0 && norm > factor * initial {
        return Err(Error::BlowUp { initial, current: norm, t });
    }
    Ok(())
}
