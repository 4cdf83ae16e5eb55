//! Per-mode Hermitian eigendecompositions `L_j(theta) = Psi Lambda Psi*`
//! with branches tracked continuously in `theta`, plus the assumption and
//! non-resonance checks.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::spectral::Grid;
use crate::system::{fix_phase, kernel_dimension, singular_values, DispersionData, SystemSpec, C64};

/// Matching scores below this flag a possible eigenvalue crossing.
pub const CROSSING_SCORE: f64 = 0.7;

/// Eigenvalues (ascending) and unit eigenvectors (columns) of a Hermitian
/// matrix.
pub fn hermitian_eigh(m: &DMatrix<C64>) -> (Vec<f64>, DMatrix<C64>) {
    let n = m.nrows();
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (vals, vecs)
}

/// `L_j(theta) = L(j omega, j kappa + theta)` in one space dimension.
pub fn harmonic_matrix(spec: &SystemSpec, disp: &DispersionData, j: i32, theta: f64) -> DMatrix<C64> {
    let jf = j as f64;
    let beta: Vec<f64> = disp.kappa.iter().map(|k| jf * k + theta).collect();
    spec.assemble_l(jf * disp.omega, &beta)
}

/// Eigendecompositions of `L_j(theta)` over a list of `theta` values.
///
/// `lambda[m * n + l]` is the `l`-th branch at `thetas[m]`; `psi` stores one
/// column-major `n x n` block per mode, so `psi[m * n * n + l * n + r]` is
/// component `r` of the `l`-th eigenvector.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeDecomp {
    pub j: i32,
    pub n: usize,
    pub thetas: Vec<f64>,
    pub lambda: Vec<f64>,
    pub psi: Vec<C64>,
    /// Worst continuation matching score between neighbouring modes.
    pub min_match_score: f64,
    /// Largest `max_l |lambda_l(theta') - lambda_l(theta)| / |theta' - theta|`
    /// over neighbouring modes.
    pub lambda_lipschitz: f64,
    /// Largest `||Psi(theta') - Psi(theta)||_max / |theta' - theta|`.
    pub psi_lipschitz: f64,
    pub warnings: Vec<String>,
}

impl ModeDecomp {
    pub fn modes(&self) -> usize {
        self.thetas.len()
    }

    #[inline]
    pub fn lambda_at(&self, m: usize) -> &[f64] {
        &self.lambda[m * self.n..(m + 1) * self.n]
    }

    #[inline]
    pub fn psi_at(&self, m: usize) -> &[C64] {
        let nn = self.n * self.n;
        &self.psi[m * nn..(m + 1) * nn]
    }

    /// `out = Psi(theta_m)^* u`.
    #[inline]
    pub fn apply_psi_star(&self, m: usize, u: &[C64], out: &mut [C64]) {
        let n = self.n;
        let p = self.psi_at(m);
        for l in 0..n {
            let col = &p[l * n..(l + 1) * n];
            out[l] = col.iter().zip(u).map(|(a, b)| a.conj() * b).sum();
        }
    }

    /// `out = Psi(theta_m) z`.
    #[inline]
    pub fn apply_psi(&self, m: usize, z: &[C64], out: &mut [C64]) {
        let n = self.n;
        let p = self.psi_at(m);
        out.iter_mut().for_each(|o| *o = C64::new(0.0, 0.0));
        for (l, zl) in z.iter().enumerate() {
            for r in 0..n {
                out[r] += p[l * n + r] * zl;
            }
        }
    }

    /// `Psi(theta_m)` as a matrix.
    pub fn psi_matrix(&self, m: usize) -> DMatrix<C64> {
        DMatrix::from_column_slice(self.n, self.n, self.psi_at(m))
    }

    /// `Psi diag(Lambda) Psi^*` at mode `m`.
    pub fn reconstruct(&self, m: usize) -> DMatrix<C64> {
        let p = self.psi_matrix(m);
        let d = DMatrix::from_fn(self.n, self.n, |r, c| {
            if r == c {
                C64::new(self.lambda_at(m)[r], 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        &p * d * p.adjoint()
    }
}

/// Decomposes `L_j(eps k)` at every mode of `grid`, in storage order.
pub fn decompose_grid(
    spec: &SystemSpec,
    disp: &DispersionData,
    j: i32,
    grid: &Grid,
    epsilon: f64,
    exec: Exec,
) -> Result<ModeDecomp> {
    let thetas: Vec<f64> = grid.k_values().iter().map(|k| epsilon * k).collect();
    decompose_thetas(spec, disp, j, &thetas, exec)
}

/// Decomposes `L_j(theta)` for each entry of `thetas` (any order).
///
/// Branches are fixed at the `theta` of smallest magnitude (ascending, except
/// that for `j = 1` the branch through the carrier's zero eigenvalue comes
/// first) and continued outward in both directions by maximal eigenvector
/// overlap. Each eigenvector's phase is transported along the way: at the
/// anchor its largest component is real positive, afterwards its overlap with
/// the neighbouring vector is.
pub fn decompose_thetas(
    spec: &SystemSpec,
    disp: &DispersionData,
    j: i32,
    thetas: &[f64],
    exec: Exec,
) -> Result<ModeDecomp> {
    if j == 0 {
        return Err(Error::InvalidSystem("harmonic index must be nonzero".into()));
    }
    if spec.d != 1 {
        return Err(Error::InvalidSystem(format!("grid decompositions need d = 1, got d = {}", spec.d)));
    }
    if thetas.is_empty() {
        return Err(Error::InvalidGrid("no modes to decompose".into()));
    }
    let n = spec.n;
    let raw = exec.map_range(thetas.len(), |m| hermitian_eigh(&harmonic_matrix(spec, disp, j, thetas[m])));

    let mut order: Vec<usize> = (0..thetas.len()).collect();
    order.sort_by(|&a, &b| thetas[a].total_cmp(&thetas[b]));
    let anchor_pos = (0..order.len())
        .min_by(|&a, &b| thetas[order[a]].abs().total_cmp(&thetas[order[b]].abs()))
        .expect("nonempty");

    let mut lambda = vec![0.0; thetas.len() * n];
    let mut psi = vec![C64::new(0.0, 0.0); thetas.len() * n * n];
    let mut min_score = 1.0_f64;
    let mut warnings = Vec::new();

    // anchor
    let a = order[anchor_pos];
    let (vals, vecs) = &raw[a];
    let mut perm: Vec<usize> = (0..n).collect();
    if j == 1 {
        let zero = (0..n).min_by(|&x, &y| vals[x].abs().total_cmp(&vals[y].abs())).expect("n > 0");
        perm.retain(|&i| i != zero);
        perm.insert(0, zero);
    }
    for (l, &src) in perm.iter().enumerate() {
        lambda[a * n + l] = vals[src];
        let mut v: Vec<C64> = vecs.column(src).iter().copied().collect();
        fix_phase(&mut v);
        psi[a * n * n + l * n..a * n * n + (l + 1) * n].copy_from_slice(&v);
    }

    // continuation in both directions
    let upward: Vec<(usize, usize)> = (anchor_pos + 1..order.len()).map(|p| (order[p - 1], order[p])).collect();
    let downward: Vec<(usize, usize)> = (0..anchor_pos).rev().map(|p| (order[p + 1], order[p])).collect();
    for (prev, cur) in upward.into_iter().chain(downward) {
        let (vals, vecs) = &raw[cur];
        let prev_psi: Vec<C64> = psi[prev * n * n..(prev + 1) * n * n].to_vec();
        let overlap = |l: usize, c: usize| -> C64 {
            (0..n).map(|r| prev_psi[l * n + r].conj() * vecs[(r, c)]).sum()
        };
        let mags: Vec<Vec<f64>> = (0..n).map(|l| (0..n).map(|c| overlap(l, c).norm()).collect()).collect();
        let (assign, score) = best_assignment(&mags);
        if score < CROSSING_SCORE {
            let msg = format!(
                "j = {j}: branch matching score {score:.3} between theta = {:.6e} and {:.6e} (possible crossing)",
                thetas[prev], thetas[cur]
            );
            log::warn!("{msg}");
            warnings.push(msg);
        }
        min_score = min_score.min(score);
        for l in 0..n {
            let c = assign[l];
            lambda[cur * n + l] = vals[c];
            let ov = overlap(l, c);
            let rot = if ov.norm() > 0.0 { ov.conj() / ov.norm() } else { C64::new(1.0, 0.0) };
            for r in 0..n {
                psi[cur * n * n + l * n + r] = vecs[(r, c)] * rot;
            }
        }
    }

    let mut out = ModeDecomp {
        j,
        n,
        thetas: thetas.to_vec(),
        lambda,
        psi,
        min_match_score: min_score,
        lambda_lipschitz: 0.0,
        psi_lipschitz: 0.0,
        warnings,
    };
    let (ll, pl) = lipschitz_estimates(&out, &order);
    out.lambda_lipschitz = ll;
    out.psi_lipschitz = pl;
    Ok(out)
}

/// Assignment `l -> column` maximising the summed overlap magnitudes, and
/// the smallest overlap in that assignment. Exhaustive for `n <= 6`, greedy
/// beyond.
fn best_assignment(mags: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let n = mags.len();
    if n <= 6 {
        let mut best: Option<(f64, Vec<usize>)> = None;
        let mut perm: Vec<usize> = (0..n).collect();
        permute(&mut perm, 0, &mut |p| {
            let s: f64 = p.iter().enumerate().map(|(l, &c)| mags[l][c]).sum();
            if best.as_ref().is_none_or(|(bs, _)| s > *bs + 1e-14) {
                best = Some((s, p.to_vec()));
            }
        });
        let (_, p) = best.expect("n >= 1");
        let score = p.iter().enumerate().map(|(l, &c)| mags[l][c]).fold(1.0_f64, f64::min);
        return (p, score);
    }
    let mut used = vec![false; n];
    let mut assign = vec![0; n];
    let mut score = 1.0_f64;
    for l in 0..n {
        let c = (0..n)
            .filter(|c| !used[*c])
            .max_by(|&x, &y| mags[l][x].total_cmp(&mags[l][y]))
            .expect("free column");
        used[c] = true;
        assign[l] = c;
        score = score.min(mags[l][c]);
    }
    (assign, score)
}

fn permute(p: &mut [usize], k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == p.len() {
        visit(p);
        return;
    }
    for i in k..p.len() {
        p.swap(k, i);
        permute(p, k + 1, visit);
        p.swap(k, i);
    }
}

fn lipschitz_estimates(d: &ModeDecomp, order: &[usize]) -> (f64, f64) {
    let n = d.n;
    let mut ll = 0.0_f64;
    let mut pl = 0.0_f64;
    for w in order.windows(2) {
        let dt = (d.thetas[w[1]] - d.thetas[w[0]]).abs();
        if dt == 0.0 {
            continue;
        }
        let dl = (0..n)
            .map(|l| (d.lambda_at(w[1])[l] - d.lambda_at(w[0])[l]).abs())
            .fold(0.0_f64, f64::max);
        let dp = d
            .psi_at(w[1])
            .iter()
            .zip(d.psi_at(w[0]))
            .map(|(a, b)| (a - b).norm())
            .fold(0.0_f64, f64::max);
        ll = ll.max(dl / dt);
        pl = pl.max(dp / dt);
    }
    (ll, pl)
}

/// Decomposition for `-j` from the one for `j`:
/// `Lambda_{-j}(theta) = -Lambda_j(-theta)`, `Psi_{-j}(theta) = -conj(Psi_j(-theta))`.
pub fn negative_harmonic(d: &ModeDecomp) -> Result<ModeDecomp> {
    let n = d.n;
    let scale = d.thetas.iter().fold(0.0_f64, |m, t| m.max(t.abs())).max(1.0);
    let mut partner = Vec::with_capacity(d.modes());
    for t in &d.thetas {
        let p = d
            .thetas
            .iter()
            .position(|s| (s + t).abs() <= 1e-12 * scale)
            .ok_or(Error::AsymmetricGrid)?;
        partner.push(p);
    }
    let mut lambda = vec![0.0; d.lambda.len()];
    let mut psi = vec![C64::new(0.0, 0.0); d.psi.len()];
    for (m, &p) in partner.iter().enumerate() {
        for l in 0..n {
            lambda[m * n + l] = -d.lambda_at(p)[l];
        }
        for (dst, src) in psi[m * n * n..(m + 1) * n * n].iter_mut().zip(d.psi_at(p)) {
            *dst = -src.conj();
        }
    }
    Ok(ModeDecomp {
        j: -d.j,
        n,
        thetas: d.thetas.clone(),
        lambda,
        psi,
        min_match_score: d.min_match_score,
        lambda_lipschitz: d.lambda_lipschitz,
        psi_lipschitz: d.psi_lipschitz,
        warnings: d.warnings.clone(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub kernel_dim: usize,
    pub kernel_singular_values: Vec<f64>,
    pub kernel_ok: bool,
    pub sigma_min_3: f64,
    pub invertible_3: bool,
    pub sigma_min_5: f64,
    pub invertible_5: bool,
    /// Sampled Lipschitz constant of the sorted eigenvalues of `L(0, beta)`.
    pub lipschitz_estimate: f64,
    /// Weyl bound `sum_l ||A_l||_2` the estimate must respect.
    pub lipschitz_bound: f64,
    pub lipschitz_ok: bool,
    pub passed: bool,
}

/// Range and spacing of the `beta` samples used for the Lipschitz check.
const LIPSCHITZ_BETA_MAX: f64 = 50.0;
const LIPSCHITZ_SAMPLES: usize = 4001;

pub fn check_assumptions(spec: &SystemSpec, disp: &DispersionData) -> AssumptionReport {
    let sv = singular_values(&spec.assemble_l(disp.omega, &disp.kappa));
    let kernel_dim = kernel_dimension(&sv);
    let sigma = |j: f64| {
        let beta: Vec<f64> = disp.kappa.iter().map(|k| j * k).collect();
        let s = singular_values(&spec.assemble_l(j * disp.omega, &beta));
        let smax = s.last().copied().unwrap_or(0.0);
        (s[0], s[0] > crate::system::KERNEL_RTOL * smax.max(1.0))
    };
    let (sigma_min_3, invertible_3) = sigma(3.0);
    let (sigma_min_5, invertible_5) = sigma(5.0);

    let mut est = 0.0_f64;
    let db = 2.0 * LIPSCHITZ_BETA_MAX / (LIPSCHITZ_SAMPLES - 1) as f64;
    let mut prev: Option<Vec<f64>> = None;
    for i in 0..LIPSCHITZ_SAMPLES {
        let b = -LIPSCHITZ_BETA_MAX + i as f64 * db;
        let beta = vec![b; spec.d];
        let (vals, _) = hermitian_eigh(&spec.assemble_l(0.0, &beta));
        if let Some(p) = &prev {
            let step = vals.iter().zip(p).map(|(a, c)| (a - c).abs()).fold(0.0, f64::max);
            est = est.max(step / db);
        }
        prev = Some(vals);
    }
    // beta moves along the diagonal direction, so |d beta| = sqrt(d) db
    let bound = spec
        .a
        .iter()
        .map(|a| hermitian_eigh(&a.map(|x| C64::new(x, 0.0))).0.iter().fold(0.0_f64, |m, v| m.max(v.abs())))
        .sum::<f64>();
    let lipschitz_ok = est.is_finite() && est <= bound * (1.0 + 1e-8) + 1e-12;
    let kernel_ok = kernel_dim == 1;
    AssumptionReport {
        kernel_dim,
        kernel_singular_values: sv,
        kernel_ok,
        sigma_min_3,
        invertible_3,
        sigma_min_5,
        invertible_5,
        lipschitz_estimate: est,
        lipschitz_bound: bound,
        lipschitz_ok,
        passed: kernel_ok && invertible_3 && invertible_5 && lipschitz_ok,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonResonanceReport {
    pub lambda3: Vec<f64>,
    pub lambda5: Vec<f64>,
    pub min_gap: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Spectra of `L(3 omega, 3 kappa)` and `L(5 omega, 5 kappa)` must be
/// disjoint.
pub fn check_nonresonance(spec: &SystemSpec, disp: &DispersionData) -> NonResonanceReport {
    let spectrum = |j: f64| {
        let beta: Vec<f64> = disp.kappa.iter().map(|k| j * k).collect();
        hermitian_eigh(&spec.assemble_l(j * disp.omega, &beta)).0
    };
    nonresonance_from_spectra(spectrum(3.0), spectrum(5.0))
}

pub fn nonresonance_from_spectra(lambda3: Vec<f64>, lambda5: Vec<f64>) -> NonResonanceReport {
    let mut gap = f64::INFINITY;
    for a in &lambda3 {
        for b in &lambda5 {
            gap = gap.min((a - b).abs());
        }
    }
    let scale = lambda3.iter().chain(&lambda5).fold(0.0_f64, |m, v| m.max(v.abs())).max(1.0);
    let tolerance = 1e-8 * scale;
    NonResonanceReport {
        passed: gap > tolerance,
        lambda3,
        lambda5,
        min_gap: gap,
        tolerance,
    }
}
