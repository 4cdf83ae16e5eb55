use crate::eigen::{decompose_grid, ModeDecomp};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::spectral::{trilinear_conv_with, wiener_norm, FftEngine, Grid, SpectralField};
use crate::system::{SystemSpec, C64};

use super::index_set::{enumerate_index_set, symmetric_set};
use super::nonlinear::{HarmonicSums, MAX_N};
use super::reference::profile_spectrum;
use super::{Problem, SimConfig};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Envelope harmonics `u_j^` at physical time `t`. Normally only `j > 0` is
/// stored and `u_{-j}^(k) = conj(u_j^(-k))` is implied.
#[derive(Clone, Debug)]
pub struct EnvelopeState {
    pub t: f64,
    pub harmonics: Vec<i32>,
    pub u: Vec<SpectralField>,
}

impl EnvelopeState {
    /// `u_j^`, mirrored from `u_{-j}^` when only that one is stored.
    pub fn u_hat(&self, j: i32) -> Option<SpectralField> {
        if let Some(i) = self.harmonics.iter().position(|&h| h == j) {
            return Some(self.u[i].clone());
        }
        self.harmonics.iter().position(|&h| h == -j).map(|i| self.u[i].conj_mirror())
    }

    /// `sum_j ||u_j||_W` over the stored harmonics.
    pub fn norm(&self) -> f64 {
        self.u.iter().map(wiener_norm).sum()
    }

    pub fn grid(&self) -> Grid {
        self.u[0].grid
    }

    pub fn n(&self) -> usize {
        self.u[0].n
    }
}

/// How the envelope equations for negative harmonics are handled.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NegativeHarmonics {
    /// Only `j > 0` is evolved; negative harmonics are conjugate mirrors.
    Implied,
    /// Every `+-j` is evolved with its own equation (slow; for consistency
    /// checks).
    Explicit,
}

/// `u_1^(0) = p^`, all higher harmonics zero.
pub fn init_envelope(problem: &Problem, cfg: &SimConfig) -> Result<EnvelopeState> {
    init_envelope_with(problem, cfg, NegativeHarmonics::Implied)
}

pub fn init_envelope_with(problem: &Problem, cfg: &SimConfig, neg: NegativeHarmonics) -> Result<EnvelopeState> {
    let grid = cfg.env_grid()?;
    problem.profile.validate(&problem.disp, &grid)?;
    let p = profile_spectrum(problem, cfg)?;
    let harmonics = stored_harmonics(cfg, neg);
    let u = harmonics
        .iter()
        .map(|&j| match j {
            1 => p.clone(),
            -1 => p.conj_mirror(),
            _ => SpectralField::zeros(grid, problem.spec.n),
        })
        .collect();
    Ok(EnvelopeState { t: 0.0, harmonics, u })
}

fn stored_harmonics(cfg: &SimConfig, neg: NegativeHarmonics) -> Vec<i32> {
    match neg {
        NegativeHarmonics::Implied => cfg.variant.harmonics().to_vec(),
        NegativeHarmonics::Explicit => symmetric_set(cfg.variant.harmonics()),
    }
}

/// Integrates the envelope equations in the slow variables
/// `z_j(t, k) = exp(i t Lambda_j(eps k) / eps) Psi_j(eps k)^* u_j^(t, k)`,
/// which removes the stiff `1/eps` term exactly, with classical RK4.
pub struct EnvelopeSolver {
    spec: SystemSpec,
    epsilon: f64,
    harmonics: Vec<i32>,
    decomps: Vec<ModeDecomp>,
    sums: HarmonicSums,
    mode: NegativeHarmonics,
    eng: FftEngine,
    exec: Exec,
}

impl EnvelopeSolver {
    pub fn new(problem: &Problem, cfg: &SimConfig) -> Result<EnvelopeSolver> {
        Self::with_mode(problem, cfg, NegativeHarmonics::Implied)
    }

    pub fn with_mode(problem: &Problem, cfg: &SimConfig, mode: NegativeHarmonics) -> Result<EnvelopeSolver> {
        let grid = cfg.env_grid()?;
        let harmonics = stored_harmonics(cfg, mode);
        let decomps = harmonics
            .iter()
            .map(|&j| decompose_grid(&problem.spec, &problem.disp, j, &grid, cfg.epsilon, cfg.exec))
            .collect::<Result<Vec<_>>>()?;
        let positive = cfg.variant.harmonics();
        Ok(EnvelopeSolver {
            spec: problem.spec.clone(),
            epsilon: cfg.epsilon,
            sums: HarmonicSums::new(grid, problem.spec.n, positive, positive),
            harmonics,
            decomps,
            mode,
            eng: FftEngine::new(grid),
            exec: cfg.exec,
        })
    }

    pub fn harmonics(&self) -> &[i32] {
        &self.harmonics
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn decomp(&self, j: i32) -> Result<&ModeDecomp> {
        self.harmonics
            .iter()
            .position(|&h| h == j)
            .map(|i| &self.decomps[i])
            .ok_or(Error::MissingDecomposition(j))
    }

    pub fn grid(&self) -> Grid {
        self.eng.grid()
    }

    fn check(&self, state: &EnvelopeState) -> Result<()> {
        if state.harmonics != self.harmonics {
            return Err(Error::MissingDecomposition(
                *state.harmonics.iter().find(|j| !self.harmonics.contains(j)).unwrap_or(&0),
            ));
        }
        if state.u.iter().any(|f| f.grid != self.grid() || f.n != self.spec.n) {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    /// `z_j = exp(i t Lambda / eps) Psi^* u_j^` for every stored harmonic.
    pub fn to_z(&self, state: &EnvelopeState) -> Vec<Vec<C64>> {
        let ph = self.phases(state.t);
        let u: Vec<Vec<C64>> = state.u.iter().map(|f| f.data.clone()).collect();
        self.project(&ph, &u, 1.0)
    }

    /// Inverse of [`EnvelopeSolver::to_z`].
    pub fn from_z(&self, t: f64, z: &[Vec<C64>]) -> EnvelopeState {
        let grid = self.grid();
        let ph = self.phases(t);
        let u = self
            .lift(&ph, z)
            .into_iter()
            .map(|data| SpectralField {
                grid,
                n: self.spec.n,
                data,
                repr: crate::spectral::Representation::UHat,
            })
            .collect();
        EnvelopeState { t, harmonics: self.harmonics.clone(), u }
    }

    /// `exp(-i t lambda_l(eps k) / eps)` per harmonic, mode-major.
    fn phases(&self, t: f64) -> Vec<Vec<C64>> {
        let s = -t / self.epsilon;
        self.decomps
            .iter()
            .map(|d| d.lambda.iter().map(|l| C64::from_polar(1.0, s * l)).collect())
            .collect()
    }

    /// `u_j = Psi (ph * z_j)`.
    fn lift(&self, ph: &[Vec<C64>], z: &[Vec<C64>]) -> Vec<Vec<C64>> {
        let n = self.spec.n;
        self.decomps
            .iter()
            .zip(ph.iter().zip(z))
            .map(|(d, (p, zj))| {
                let mut out = vec![ZERO; zj.len()];
                self.exec.for_each_block(&mut out, n, |m, o| {
                    let mut tmp = [ZERO; MAX_N];
                    let tmp = &mut tmp[..n];
                    for l in 0..n {
                        tmp[l] = p[m * n + l] * zj[m * n + l];
                    }
                    d.apply_psi(m, tmp, o);
                });
                out
            })
            .collect()
    }

    /// `scale * conj(ph) * Psi^* f_j`.
    fn project(&self, ph: &[Vec<C64>], f: &[Vec<C64>], scale: f64) -> Vec<Vec<C64>> {
        let n = self.spec.n;
        self.decomps
            .iter()
            .zip(ph.iter().zip(f))
            .map(|(d, (p, fj))| {
                let mut out = vec![ZERO; fj.len()];
                self.exec.for_each_block(&mut out, n, |m, o| {
                    d.apply_psi_star(m, &fj[m * n..(m + 1) * n], o);
                    for l in 0..n {
                        o[l] *= p[m * n + l].conj() * scale;
                    }
                });
                out
            })
            .collect()
    }

    /// `sum_{#J = j} T^(u_{j1}^, u_{j2}^, u_{j3}^)` for each stored `j`.
    pub fn nonlinear_sums(&self, u: &[Vec<C64>]) -> Vec<Vec<C64>> {
        match self.mode {
            NegativeHarmonics::Implied => {
                let refs: Vec<&[C64]> = u.iter().map(|v| v.as_slice()).collect();
                self.sums.eval(&self.spec, &refs, self.exec)
            }
            NegativeHarmonics::Explicit => self.explicit_sums(u),
        }
    }

    fn explicit_sums(&self, u: &[Vec<C64>]) -> Vec<Vec<C64>> {
        let grid = self.grid();
        let n = self.spec.n;
        let nyq = grid.n() / 2;
        let fields: Vec<SpectralField> = u
            .iter()
            .map(|v| {
                let mut f = SpectralField::from_data(grid, n, v.clone()).expect("sizes match");
                f.at_mut(nyq).fill(ZERO);
                f
            })
            .collect();
        let at = |j: i32| &fields[self.harmonics.iter().position(|&h| h == j).expect("stored")];
        self.harmonics
            .iter()
            .map(|&j| {
                let mut acc = vec![ZERO; grid.n() * n];
                for t in enumerate_index_set(j, &self.harmonics) {
                    let c = trilinear_conv_with(&self.eng, &self.spec, at(t[0]), at(t[1]), at(t[2]), self.exec)
                        .expect("consistent grids");
                    for (a, b) in acc.iter_mut().zip(&c.data) {
                        *a += b;
                    }
                }
                acc[nyq * n..(nyq + 1) * n].fill(ZERO);
                acc
            })
            .collect()
    }

    /// Right-hand side of the slow system at physical time `t`.
    pub fn rhs_z(&self, t: f64, z: &[Vec<C64>]) -> Vec<Vec<C64>> {
        self.rhs_with(&self.phases(t), z)
    }

    fn rhs_with(&self, ph: &[Vec<C64>], z: &[Vec<C64>]) -> Vec<Vec<C64>> {
        if self.spec.t.is_zero() {
            return z.iter().map(|v| vec![ZERO; v.len()]).collect();
        }
        let u = self.lift(ph, z);
        let f = self.nonlinear_sums(&u);
        self.project(ph, &f, self.epsilon)
    }

    /// One classical RK4 step of physical length `h` from time `t`.
    pub fn step_z(&self, t: f64, z: &[Vec<C64>], h: f64) -> Vec<Vec<C64>> {
        if self.spec.t.is_zero() {
            return z.to_vec();
        }
        let p0 = self.phases(t);
        let half = self.phases(0.5 * h);
        let advance = |p: &[Vec<C64>]| -> Vec<Vec<C64>> {
            p.iter().zip(&half).map(|(a, b)| a.iter().zip(b).map(|(x, y)| x * y).collect()).collect()
        };
        let p1 = advance(&p0);
        let p2 = advance(&p1);
        let axpy = |a: &[Vec<C64>], s: f64, b: &[Vec<C64>]| -> Vec<Vec<C64>> {
            a.iter()
                .zip(b)
                .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + q * s).collect())
                .collect()
        };
        let k1 = self.rhs_with(&p0, z);
        let k2 = self.rhs_with(&p1, &axpy(z, 0.5 * h, &k1));
        let k3 = self.rhs_with(&p1, &axpy(z, 0.5 * h, &k2));
        let k4 = self.rhs_with(&p2, &axpy(z, h, &k3));
        z.iter()
            .enumerate()
            .map(|(i, zi)| {
                zi.iter()
                    .enumerate()
                    .map(|(m, x)| x + (k1[i][m] + (k2[i][m] + k3[i][m]) * 2.0 + k4[i][m]) * (h / 6.0))
                    .collect()
            })
            .collect()
    }

    /// Advances `state` by one step of physical length `h`.
    pub fn step(&self, state: &EnvelopeState, h: f64) -> Result<EnvelopeState> {
        self.check(state)?;
        let z = self.step_z(state.t, &self.to_z(state), h);
        let out = self.from_z(state.t + h, &z);
        if out.u.iter().any(|f| f.data.iter().any(|c| !c.re.is_finite() || !c.im.is_finite())) {
            return Err(Error::NonFinite { t: out.t });
        }
        Ok(out)
    }
}

/// One envelope step of physical length `h`.
pub fn step_envelope(state: &EnvelopeState, solver: &EnvelopeSolver, h: f64) -> Result<EnvelopeState> {
    solver.step(state, h)
}
