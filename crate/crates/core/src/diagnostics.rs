//! Measurements on envelope and reference trajectories.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::eigen::ModeDecomp;
use crate::error::{Error, Result};
use crate::spectral::{physical_samples, trilinear_conv_with, wiener_norm, FftEngine, Grid, Representation, SpectralField};
use crate::solvers::{enumerate_index_set, residual_harmonics, symmetric_set, EnvelopeSolver, EnvelopeState, ReferenceState, Trajectory};
use crate::system::{DispersionData, SystemSpec, C64};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Points per shortest carrier wavelength for the `L^inf` grid.
pub const LINF_POINTS_PER_WAVELENGTH: usize = 8;

/// Carrier mode `kappa / (eps k0)` on a torus of length `length`.
pub fn carrier_mode(disp: &DispersionData, epsilon: f64, length: f64) -> Result<i64> {
    let k0 = 2.0 * PI / length;
    let carrier = disp.kappa[0] / epsilon;
    let m = (carrier / k0).round();
    if m == 0.0 || ((m * k0 - carrier) / carrier).abs() > 1e-9 {
        return Err(Error::Commensurability { carrier, k0 });
    }
    Ok(m as i64)
}

/// Spectrum of `u~ = sum_j exp(i j (kappa x - omega t) / eps) u_j + c.c.`
/// on `grid` (same torus, finer resolution).
pub fn reconstruct_spectrum(env: &EnvelopeState, disp: &DispersionData, epsilon: f64, grid: Grid) -> Result<SpectralField> {
    let env_grid = env.grid();
    if (grid.length() - env_grid.length()).abs() > 1e-12 * grid.length() {
        return Err(Error::GridMismatch);
    }
    let mc = carrier_mode(disp, epsilon, grid.length())?;
    let mut out = SpectralField::zeros(grid, env.n());
    let mut lost = 0.0;
    for &j in env.harmonics.iter().filter(|j| **j > 0) {
        let u = env.u_hat(j).expect("stored");
        let phase = C64::from_polar(1.0, -(j as f64) * disp.omega * env.t / epsilon);
        lost += u.add_shifted_into(&mut out, j as i64 * mc, phase, false);
        lost += u.add_shifted_into(&mut out, -(j as i64) * mc, phase.conj(), true);
    }
    if lost > 0.0 {
        return Err(Error::UnderResolved(format!(
            "harmonic bands leave the {}-mode grid (lost {lost:.3e})",
            grid.n()
        )));
    }
    Ok(out)
}

/// Number of samples for physical-space reconstructions: at least
/// [`LINF_POINTS_PER_WAVELENGTH`] per wavelength of the highest harmonic.
pub fn fine_modes(carrier_mode: i64, j_max: i32, at_least: usize) -> usize {
    (LINF_POINTS_PER_WAVELENGTH * j_max as usize * carrier_mode.unsigned_abs() as usize)
        .max(at_least)
        .next_power_of_two()
}

/// Physical samples of `u~` on `fine_grid`, mode-major `[x][component]`.
pub fn reconstruct(env: &EnvelopeState, disp: &DispersionData, epsilon: f64, fine_grid: Grid) -> Result<Vec<C64>> {
    let mc = carrier_mode(disp, epsilon, fine_grid.length())?;
    let jmax = env.harmonics.iter().copied().max().unwrap_or(1);
    let need = 2 * (jmax as usize * mc.unsigned_abs() as usize + env.grid().n() / 2);
    if fine_grid.n() < need {
        return Err(Error::UnderResolved(format!(
            "reconstruction grid has {} points, harmonic {jmax} needs {need}",
            fine_grid.n()
        )));
    }
    let s = reconstruct_spectrum(env, disp, epsilon, fine_grid)?;
    Ok(physical_samples(&s, fine_grid.n()))
}

/// `(||u - u~||_W, ||u - u~||_inf)`, the latter sampled on `fine_modes`
/// points.
pub fn error_norms(
    reference: &ReferenceState,
    env: &EnvelopeState,
    disp: &DispersionData,
    epsilon: f64,
    fine_modes: usize,
) -> Result<(f64, f64)> {
    let scale = reference.t.abs().max(env.t.abs()).max(1.0);
    if (reference.t - env.t).abs() > 1e-9 * scale {
        return Err(Error::TimeMismatch(reference.t, env.t));
    }
    let approx = reconstruct_spectrum(env, disp, epsilon, reference.u_hat.grid)?;
    let diff = reference.u_hat.sub(&approx)?;
    let w = wiener_norm(&diff);
    let samples = physical_samples(&diff, fine_modes.max(diff.grid.n()));
    let linf = samples
        .chunks(diff.n)
        .map(|v| v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt())
        .fold(0.0_f64, f64::max);
    Ok((w, linf))
}

/// Keeps only the first component (eigenbasis coordinates).
pub fn project_p(z: &SpectralField) -> SpectralField {
    let mut out = z.clone();
    for v in out.data.chunks_mut(z.n) {
        v[1..].fill(ZERO);
    }
    out
}

pub fn project_p_perp(z: &SpectralField) -> SpectralField {
    let mut out = z.clone();
    for v in out.data.chunks_mut(z.n) {
        v[0] = ZERO;
    }
    out
}

/// `psi_11(eps k) psi_11(eps k)^* u^(k)` per mode.
pub fn project_peps(u: &SpectralField, d1: &ModeDecomp) -> Result<SpectralField> {
    if d1.modes() != u.grid.n() || d1.n != u.n {
        return Err(Error::GridMismatch);
    }
    let mut out = u.clone();
    for (m, v) in out.data.chunks_mut(u.n).enumerate() {
        let psi = &d1.psi_at(m)[..u.n];
        let a: C64 = psi.iter().zip(v.iter()).map(|(p, x)| p.conj() * x).sum();
        for (x, p) in v.iter_mut().zip(psi) {
            *x = p * a;
        }
    }
    Ok(out)
}

pub fn project_peps_perp(u: &SpectralField, d1: &ModeDecomp) -> Result<SpectralField> {
    let p = project_peps(u, d1)?;
    u.sub(&p)
}

/// Discrete `L^1` norm of `|k| f(k)`, i.e. `||D f||_W`.
pub fn dmu_norm(f: &SpectralField) -> f64 {
    let dk = f.grid.dk();
    f.data
        .chunks(f.n)
        .enumerate()
        .map(|(i, v)| f.grid.k(i).abs() * v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt())
        .sum::<f64>()
        * dk
}

/// `2 ||P z_1|| + (2/eps) ||P^perp z_1|| + (2/eps) sum_{j >= 3} ||z_j||`.
pub fn scaled_norm(z: &[(i32, SpectralField)], epsilon: f64) -> f64 {
    let mut total = 0.0;
    for (j, f) in z {
        if *j == 1 {
            total += 2.0 * wiener_norm(&project_p(f)) + 2.0 / epsilon * wiener_norm(&project_p_perp(f));
        } else if *j > 1 {
            total += 2.0 / epsilon * wiener_norm(f);
        }
    }
    total
}

/// Slow variables of `env` as fields tagged with their harmonic.
pub fn z_fields(solver: &EnvelopeSolver, env: &EnvelopeState) -> Vec<(i32, SpectralField)> {
    let grid = env.grid();
    solver
        .to_z(env)
        .into_iter()
        .zip(&env.harmonics)
        .map(|(data, &j)| {
            (
                j,
                SpectralField { grid, n: env.n(), data, repr: Representation::Z },
            )
        })
        .collect()
}

/// `||d/dt P_eps u_1^||_{L^1}` from the right-hand side of the envelope
/// equation: `-(i/eps) lambda_11(eps k) P_eps u_1^ + eps P_eps F_1`.
pub fn slow_derivative(solver: &EnvelopeSolver, env: &EnvelopeState) -> Result<f64> {
    let d1 = solver.decomp(1)?;
    let eps = solver.epsilon();
    let u: Vec<Vec<C64>> = env.u.iter().map(|f| f.data.clone()).collect();
    let f = solver.nonlinear_sums(&u);
    let i1 = env.harmonics.iter().position(|&j| j == 1).ok_or(Error::MissingDecomposition(1))?;
    let n = env.n();
    let u1 = &env.u[i1];
    let mut total = 0.0;
    for m in 0..u1.grid.n() {
        let psi = &d1.psi_at(m)[..n];
        let a: C64 = psi.iter().zip(u1.at(m)).map(|(p, x)| p.conj() * x).sum();
        let b: C64 = psi.iter().zip(&f[i1][m * n..(m + 1) * n]).map(|(p, x)| p.conj() * x).sum();
        let lam = d1.lambda_at(m)[0];
        total += (C64::new(0.0, -lam / eps) * a + b * eps).norm();
    }
    Ok(total * u1.grid.dk())
}

/// Largest difference quotient `||P_eps u_1^(t') - P_eps u_1^(t)|| / (t' - t)`
/// over consecutive snapshots; bounded by the sup of [`slow_derivative`].
pub fn slow_derivative_fd(solver: &EnvelopeSolver, traj: &Trajectory<EnvelopeState>) -> Result<f64> {
    let snaps = &traj.snapshots;
    if snaps.len() < 2 {
        return Err(Error::TooFewSnapshots { needed: 2, got: snaps.len() });
    }
    let d1 = solver.decomp(1)?;
    let mut best = 0.0_f64;
    for w in snaps.windows(2) {
        let a = project_peps(&w[0].state.u_hat(1).expect("u_1"), d1)?;
        let b = project_peps(&w[1].state.u_hat(1).expect("u_1"), d1)?;
        let dt = w[1].state.t - w[0].state.t;
        best = best.max(wiener_norm(&b.sub(&a)?) / dt);
    }
    Ok(best)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    /// `eps sum_j sum_J ||T^(u_{j1}, u_{j2}, u_{j3})||`, over all residual
    /// harmonics `j` and both signs.
    pub triangle_bound: f64,
    /// `||R||_W` of the assembled harmonic sum.
    pub exact: f64,
    /// Contribution of the lowest residual harmonic (`|j| = 5` for `{1, 3}`).
    pub dominant: f64,
}

/// Size of the defect left when the truncated ansatz is inserted into the
/// full system. Its spectrum consists of the harmonics reachable by triples
/// of retained harmonics but not retained themselves.
pub fn residual_norm(spec: &SystemSpec, env: &EnvelopeState, disp: &DispersionData, epsilon: f64) -> Result<ResidualReport> {
    let positive: Vec<i32> = env.harmonics.iter().copied().filter(|j| *j > 0).collect();
    let set = symmetric_set(&positive);
    let grid = env.grid();
    let eng = FftEngine::new(grid);
    let exec = crate::exec::Exec::Sequential;
    let mc = carrier_mode(disp, epsilon, grid.length())?;
    let targets = residual_harmonics(&positive);
    let jtop = targets.iter().copied().max().unwrap_or(1);
    let fine = Grid::new(grid.length(), (2 * (jtop as usize * mc.unsigned_abs() as usize + grid.n())).next_power_of_two())?;
    let mut assembled = SpectralField::zeros(fine, env.n());
    let fields: Vec<(i32, SpectralField)> = set.iter().map(|&j| (j, env.u_hat(j).expect("stored or mirrored"))).collect();
    let field = |j: i32| &fields.iter().find(|f| f.0 == j).expect("in set").1;

    let mut triangle = 0.0;
    let mut dominant = 0.0;
    for (ti, &j) in targets.iter().enumerate() {
        let mut sum = SpectralField::zeros(grid, env.n());
        let mut bound = 0.0;
        for t in enumerate_index_set(j, &set) {
            let c = trilinear_conv_with(&eng, spec, field(t[0]), field(t[1]), field(t[2]), exec)?;
            bound += wiener_norm(&c);
            for (a, b) in sum.data.iter_mut().zip(&c.data) {
                *a += b;
            }
        }
        // the -j terms are conjugate mirrors with equal norms
        triangle += 2.0 * epsilon * bound;
        if ti == 0 {
            dominant = 2.0 * epsilon * wiener_norm(&sum);
        }
        let phase = C64::from_polar(epsilon, -(j as f64) * disp.omega * env.t / epsilon);
        sum.add_shifted_into(&mut assembled, j as i64 * mc, phase, false);
        sum.add_shifted_into(&mut assembled, -(j as i64) * mc, phase.conj(), true);
    }
    Ok(ResidualReport { triangle_bound: triangle, exact: wiener_norm(&assembled), dominant })
}

/// Everything measured at one snapshot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub epsilon: f64,
    /// Slow time.
    pub t: f64,
    pub err_w: f64,
    pub err_linf: f64,
    pub u3_l1: f64,
    pub dmu_u3: f64,
    /// `||u_3||_{W^1} = ||u_3^|| + ||D u_3^||`.
    pub u3_w1: f64,
    pub proj_perp_u1: f64,
    pub dmu_proj_perp_u1: f64,
    pub scaled_norm_z: f64,
    pub residual_w: f64,
    pub residual_bound: f64,
    pub residual_dominant: f64,
    /// `||d/dt P_eps u_1^||`, analytic, at this snapshot.
    pub dt_pu1: f64,
    /// Largest `| ||u_j^|| - ||z_j|| |` over harmonics.
    pub norm_defect: f64,
}

/// Diagnostics for one snapshot pair.
pub fn diagnose(
    spec: &SystemSpec,
    disp: &DispersionData,
    solver: &EnvelopeSolver,
    t_slow: f64,
    reference: &ReferenceState,
    env: &EnvelopeState,
) -> Result<DiagnosticsRecord> {
    let eps = solver.epsilon();
    let mc = carrier_mode(disp, eps, env.grid().length())?;
    let jmax = env.harmonics.iter().copied().max().unwrap_or(1);
    let fine = fine_modes(mc, jmax, reference.u_hat.grid.n());
    let (err_w, err_linf) = error_norms(reference, env, disp, eps, fine)?;
    let d1 = solver.decomp(1)?;
    let u1 = env.u_hat(1).ok_or(Error::MissingDecomposition(1))?;
    let perp = project_peps_perp(&u1, d1)?;
    let (u3_l1, dmu_u3) = match env.u_hat(3) {
        Some(u3) => (wiener_norm(&u3), dmu_norm(&u3)),
        None => (0.0, 0.0),
    };
    let z = z_fields(solver, env);
    let norm_defect = z
        .iter()
        .zip(&env.u)
        .map(|((_, zf), uf)| (wiener_norm(zf) - wiener_norm(uf)).abs())
        .fold(0.0_f64, f64::max);
    let res = residual_norm(spec, env, disp, eps)?;
    Ok(DiagnosticsRecord {
        epsilon: eps,
        t: t_slow,
        err_w,
        err_linf,
        u3_l1,
        dmu_u3,
        u3_w1: u3_l1 + dmu_u3,
        proj_perp_u1: wiener_norm(&perp),
        dmu_proj_perp_u1: dmu_norm(&perp),
        scaled_norm_z: scaled_norm(&z, eps),
        residual_w: res.exact,
        residual_bound: res.triangle_bound,
        residual_dominant: res.dominant,
        dt_pu1: slow_derivative(solver, env)?,
        norm_defect,
    })
}

/// Per-epsilon sup-over-snapshot constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefinedBounds {
    pub epsilon: f64,
    pub u3_over_eps: f64,
    pub dmu_u3_over_eps: f64,
    pub u3_w1_over_eps: f64,
    pub proj_perp_over_eps: f64,
    pub dmu_proj_perp_over_eps: f64,
    pub scaled_norm_max: f64,
    pub scaled_norm_initial: f64,
    pub dt_pu1_max: f64,
    pub err_w_max: f64,
    pub err_linf_max: f64,
    pub residual_w_max: f64,
}

pub fn refined_bounds(records: &[DiagnosticsRecord]) -> Result<RefinedBounds> {
    let first = records.first().ok_or(Error::TooFewSnapshots { needed: 1, got: 0 })?;
    let eps = first.epsilon;
    let sup = |f: fn(&DiagnosticsRecord) -> f64| records.iter().map(f).fold(0.0_f64, f64::max);
    Ok(RefinedBounds {
        epsilon: eps,
        u3_over_eps: sup(|r| r.u3_l1) / eps,
        dmu_u3_over_eps: sup(|r| r.dmu_u3) / eps,
        u3_w1_over_eps: sup(|r| r.u3_w1) / eps,
        proj_perp_over_eps: sup(|r| r.proj_perp_u1) / eps,
        dmu_proj_perp_over_eps: sup(|r| r.dmu_proj_perp_u1) / eps,
        scaled_norm_max: sup(|r| r.scaled_norm_z),
        scaled_norm_initial: first.scaled_norm_z,
        dt_pu1_max: sup(|r| r.dt_pu1),
        err_w_max: sup(|r| r.err_w),
        err_linf_max: sup(|r| r.err_linf),
        residual_w_max: sup(|r| r.residual_w),
    })
}

/// Embedding constant of `W` in `L^inf` in one dimension.
pub fn embedding_constant() -> f64 {
    (2.0 * PI).powf(-0.5)
}
