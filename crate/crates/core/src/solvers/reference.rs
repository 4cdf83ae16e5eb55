use serde::{Deserialize, Serialize};

use crate::eigen::hermitian_eigh;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::spectral::{forward_fft, wiener_norm, FftEngine, SpectralField};
use crate::system::{SystemSpec, C64};

use super::nonlinear::MAX_N;
use super::{Problem, SimConfig};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Full oscillatory solution on the reference grid at physical time `t`.
#[derive(Clone, Debug)]
pub struct ReferenceState {
    pub u_hat: SpectralField,
    pub t: f64,
}

impl ReferenceState {
    pub fn norm(&self) -> f64 {
        wiener_norm(&self.u_hat)
    }
}

/// Spectrum of the envelope `p` on the envelope grid, Nyquist mode zeroed.
pub fn profile_spectrum(problem: &Problem, cfg: &SimConfig) -> Result<SpectralField> {
    let grid = cfg.env_grid()?;
    let samples = problem.profile.samples(&grid)?;
    let mut p = forward_fft(grid, problem.spec.n, &samples)?;
    p.at_mut(grid.n() / 2).fill(ZERO);
    Ok(p)
}

/// `u(0) = p exp(i kappa x / eps) + c.c.`, built in Fourier space from the
/// band-limited spectrum of `p`.
pub fn init_reference(problem: &Problem, cfg: &SimConfig) -> Result<ReferenceState> {
    let mc = cfg.carrier_mode(&problem.disp)?;
    let rg = cfg.ref_grid()?;
    if (rg.n() as f64) < super::MIN_POINTS_PER_WAVELENGTH * mc.unsigned_abs() as f64 {
        return Err(Error::UnderResolved(format!("N = {} for carrier mode {mc}", rg.n())));
    }
    let p = profile_spectrum(problem, cfg)?;
    let mut u = SpectralField::zeros(rg, problem.spec.n);
    let one = C64::new(1.0, 0.0);
    let lost = p.add_shifted_into(&mut u, mc, one, false) + p.add_shifted_into(&mut u, -mc, one, true);
    if lost > 0.0 {
        return Err(Error::UnderResolved(format!("carrier band leaves the reference grid (lost {lost:.3e})")));
    }
    Ok(ReferenceState { u_hat: u, t: 0.0 })
}

/// Splitting of `u' = -(i/eps) L(0, eps k) u + eps T(u, u, u)` into the
/// exact per-mode linear flow and the pointwise nonlinear flow.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Splitting {
    /// Second order: half linear, full nonlinear, half linear.
    Strang,
    /// Fourth order: three Strang steps of sizes `w1 h, w0 h, w1 h` with
    /// `w1 = 1 / (2 - 2^(1/3))`, `w0 = 1 - 2 w1`.
    #[default]
    Yoshida4,
}

impl Splitting {
    pub fn order(self) -> u32 {
        match self {
            Splitting::Strang => 2,
            Splitting::Yoshida4 => 4,
        }
    }

    /// Linear weights `a_0..a_s` and nonlinear weights `b_0..b_{s-1}` of
    /// `L(a_0 h) N(b_0 h) L(a_1 h) ... N(b_{s-1} h) L(a_s h)`.
    fn weights(self) -> (Vec<f64>, Vec<f64>) {
        match self {
            Splitting::Strang => (vec![0.5, 0.5], vec![1.0]),
            Splitting::Yoshida4 => {
                let w1 = 1.0 / (2.0 - 2f64.cbrt());
                let w0 = 1.0 - 2.0 * w1;
                (vec![0.5 * w1, 0.5 * (w1 + w0), 0.5 * (w0 + w1), 0.5 * w1], vec![w1, w0, w1])
            }
        }
    }
}

impl std::str::FromStr for Splitting {
    type Err = Error;
    fn from_str(s: &str) -> Result<Splitting> {
        match s {
            "strang" => Ok(Splitting::Strang),
            "yoshida4" => Ok(Splitting::Yoshida4),
            other => Err(Error::InvalidConfig(format!("unknown splitting `{other}` (expected strang or yoshida4)"))),
        }
    }
}

/// Reference solver: exact per-mode linear flow composed with one classical
/// RK4 step of the pointwise nonlinear ODE on the `2N`-point dealiasing grid.
pub struct ReferenceSolver {
    spec: SystemSpec,
    eng: FftEngine,
    epsilon: f64,
    h: f64,
    exec: Exec,
    nonlinear_weights: Vec<f64>,
    /// Row-major `n x n` propagators per mode, one table per distinct linear
    /// substep; see [`ReferenceSolver::advance`] for the order.
    props: Vec<Vec<C64>>,
    /// Table index of `a_0`, `a_1..a_{s-1}`, `a_s`, and the fused `a_s + a_0`.
    linear_index: Vec<usize>,
    phys: Vec<f64>,
    buf: Vec<C64>,
}

impl ReferenceSolver {
    pub fn new(spec: &SystemSpec, cfg: &SimConfig) -> Result<ReferenceSolver> {
        let (_, h) = cfg.ref_schedule();
        Self::with_step(spec, cfg, if h > 0.0 { h } else { cfg.h_ref })
    }

    pub fn with_step(spec: &SystemSpec, cfg: &SimConfig, h: f64) -> Result<ReferenceSolver> {
        let grid = cfg.ref_grid()?;
        let n = spec.n;
        if n > MAX_N {
            return Err(Error::InvalidSystem(format!("state dimension {n} exceeds {MAX_N}")));
        }
        let eps = cfg.epsilon;
        let (a, b) = cfg.splitting.weights();
        let s = b.len();
        let mut wanted: Vec<f64> = a.clone();
        wanted.push(a[s] + a[0]);
        let mut taus: Vec<f64> = Vec::new();
        let linear_index = wanted
            .iter()
            .map(|w| match taus.iter().position(|t| (t - w).abs() < 1e-14) {
                Some(i) => i,
                None => {
                    taus.push(*w);
                    taus.len() - 1
                }
            })
            .collect();
        let blocks = cfg.exec.map_range(grid.n(), |i| {
            let (vals, vecs) = hermitian_eigh(&spec.assemble_l(0.0, &[eps * grid.k(i)]));
            taus.iter()
                .map(|w| {
                    let tau = w * h;
                    let mut out = vec![ZERO; n * n];
                    for r in 0..n {
                        for c in 0..n {
                            out[r * n + c] = (0..n)
                                .map(|l| vecs[(r, l)] * C64::from_polar(1.0, -tau * vals[l] / eps) * vecs[(c, l)].conj())
                                .sum();
                        }
                    }
                    out
                })
                .collect::<Vec<_>>()
        });
        let mut props = vec![Vec::with_capacity(grid.n() * n * n); taus.len()];
        for per_mode in blocks {
            for (table, p) in props.iter_mut().zip(per_mode) {
                table.extend(p);
            }
        }
        let m = 2 * grid.n();
        Ok(ReferenceSolver {
            spec: spec.clone(),
            eng: FftEngine::new(grid),
            epsilon: eps,
            h,
            exec: cfg.exec,
            nonlinear_weights: b,
            props,
            linear_index,
            phys: vec![0.0; m * n],
            buf: vec![ZERO; grid.n() + m],
        })
    }

    pub fn step_size(&self) -> f64 {
        self.h
    }

    fn linear(&self, u: &mut SpectralField, table: usize) {
        let n = u.n;
        let props = &self.props[self.linear_index[table]];
        self.exec.for_each_block_zip(&mut u.data, n, props, n * n, |_, v, p| {
            let mut tmp = [ZERO; MAX_N];
            let tmp = &mut tmp[..n];
            for r in 0..n {
                tmp[r] = (0..n).map(|c| p[r * n + c] * v[c]).sum();
            }
            v.copy_from_slice(tmp);
        });
    }

    /// Flow of `u' = eps T(u, u, u)` over `tau`, by RK4 pointwise on the
    /// dealiasing grid. The state is a real field, so its spectrum is
    /// Hermitian and two components share one transform.
    fn nonlinear(&mut self, u: &mut SpectralField, tau: f64) {
        if self.spec.t.is_zero() {
            return;
        }
        let n = u.n;
        self.eng.real_physical_into(&u.data, n, &mut self.phys, &mut self.buf, true);
        let spec = &self.spec;
        let a = tau * self.epsilon;
        let block = n * RK_BLOCK.min(self.eng.padded_len());
        self.exec.for_each_block(&mut self.phys, block, |_, v| rk4_cubic(spec, n, v, a));
        self.eng.real_spectral_into(&self.phys, n, &mut u.data, &mut self.buf, true);
        let nyq = u.grid.n() / 2;
        u.at_mut(nyq).fill(ZERO);
    }

    pub fn step(&mut self, state: &mut ReferenceState) -> Result<()> {
        self.advance(state, 1)
    }

    /// `steps` steps; the closing linear flow of each step is fused with the
    /// opening one of the next.
    pub fn advance(&mut self, state: &mut ReferenceState, steps: usize) -> Result<()> {
        if steps == 0 {
            return Ok(());
        }
        let s = self.nonlinear_weights.len();
        self.linear(&mut state.u_hat, 0);
        for step in 0..steps {
            for i in 0..s {
                let tau = self.nonlinear_weights[i] * self.h;
                self.nonlinear(&mut state.u_hat, tau);
                if i + 1 < s {
                    self.linear(&mut state.u_hat, i + 1);
                }
            }
            self.linear(&mut state.u_hat, if step + 1 < steps { s + 1 } else { s });
        }
        state.t += self.h * steps as f64;
        if state.u_hat.data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite { t: state.t });
        }
        Ok(())
    }
}

/// Points per block in the pointwise nonlinear flow.
const RK_BLOCK: usize = 512;

/// Classical RK4 step of `v' = T(v, v, v)` scaled by `a = h eps`, applied to
/// every point of the point-major block `v`.
fn rk4_cubic(spec: &SystemSpec, n: usize, v: &mut [f64], a: f64) {
    let len = v.len();
    let mut buf = vec![0.0; 3 * len];
    let (k, rest) = buf.split_at_mut(len);
    let (acc, w) = rest.split_at_mut(len);
    let t = &spec.t;
    t.eval_real_batch(n, v, k);
    for i in 0..len {
        acc[i] = k[i];
        w[i] = v[i] + 0.5 * a * k[i];
    }
    t.eval_real_batch(n, w, k);
    for i in 0..len {
        acc[i] += 2.0 * k[i];
        w[i] = v[i] + 0.5 * a * k[i];
    }
    t.eval_real_batch(n, w, k);
    for i in 0..len {
        acc[i] += 2.0 * k[i];
        w[i] = v[i] + a * k[i];
    }
    t.eval_real_batch(n, w, k);
    for i in 0..len {
        v[i] += (acc[i] + k[i]) * (a / 6.0);
    }
}

/// Advances a reference state by one step of size `cfg.h_ref`.
pub fn step_reference(state: &ReferenceState, spec: &SystemSpec, cfg: &SimConfig) -> Result<ReferenceState> {
    let mut solver = ReferenceSolver::with_step(spec, cfg, cfg.h_ref)?;
    let mut out = state.clone();
    solver.step(&mut out)?;
    Ok(out)
}

impl std::fmt::Debug for ReferenceSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ReferenceSolver(N = {}, h = {})", self.eng.grid().n(), self.h)
    }
}
