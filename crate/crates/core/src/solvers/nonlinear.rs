use crate::exec::Exec;
use crate::spectral::{FftEngine, Grid};
use crate::system::{SystemSpec, C64};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Evaluates `sum_{#J = j} T^(u_{j1}^, u_{j2}^, u_{j3}^)` for several target
/// harmonics `j` at once.
///
/// With `u_{-j} = conj(u_j)` pointwise, `U(x, phi) = sum_j u_j(x) exp(i j phi)`
/// is real and `T(U, U, U)` is a trigonometric polynomial in `phi` whose
/// `j`-th coefficient is exactly the sum above. Only odd harmonics up to
/// `3 j_max` occur. With `P` samples `phi_q = pi q / P`, harmonic `j` aliases
/// onto target `t` iff `(j - t) / 2` is a multiple of `P`, so
/// `P = (t_max + 3 j_max) / 2 + 1` keeps every target exact. Each sample costs one real evaluation of
/// `T` on the `2N`-point dealiasing grid; the targets are transformed back
/// and truncated, which equals the sum of the dealiased convolutions. The
/// Nyquist mode is treated as zero on input and output.
pub struct HarmonicSums {
    eng: FftEngine,
    n: usize,
    sources: Vec<i32>,
    targets: Vec<i32>,
    /// `exp(i j phi_p)` per source, then `exp(-i j phi_p) / P` per target.
    src_phase: Vec<C64>,
    tgt_phase: Vec<C64>,
    samples: usize,
}

impl HarmonicSums {
    pub fn new(grid: Grid, n: usize, sources: &[i32], targets: &[i32]) -> HarmonicSums {
        assert!(sources.iter().chain(targets).all(|j| *j > 0 && j % 2 == 1), "odd positive harmonics only");
        assert!(n <= MAX_N, "state dimension {n} exceeds {MAX_N}");
        let jmax = sources.iter().copied().max().unwrap_or(1);
        let tmax = targets.iter().copied().max().unwrap_or(1);
        let p = ((tmax + 3 * jmax) / 2 + 1) as usize;
        let phi = |q: usize| std::f64::consts::PI * q as f64 / p as f64;
        let src_phase = sources
            .iter()
            .flat_map(|&j| (0..p).map(move |q| C64::from_polar(1.0, j as f64 * phi(q))))
            .collect();
        let tgt_phase = targets
            .iter()
            .flat_map(|&j| (0..p).map(move |q| C64::from_polar(1.0 / p as f64, -(j as f64) * phi(q))))
            .collect();
        HarmonicSums {
            eng: FftEngine::new(grid),
            n,
            sources: sources.to_vec(),
            targets: targets.to_vec(),
            src_phase,
            tgt_phase,
            samples: p,
        }
    }

    pub fn grid(&self) -> Grid {
        self.eng.grid()
    }

    pub fn targets(&self) -> &[i32] {
        &self.targets
    }

    /// `fields[i]` is the mode-major spectrum of harmonic `sources[i]`;
    /// returns one mode-major spectrum per target.
    pub fn eval(&self, spec: &SystemSpec, fields: &[&[C64]], exec: Exec) -> Vec<Vec<C64>> {
        let n = self.n;
        let nm = self.eng.grid().n();
        let m = self.eng.padded_len();
        let ns = self.sources.len();
        let nt = self.targets.len();
        let p = self.samples;
        debug_assert_eq!(fields.len(), ns);
        let nyq = nm / 2;

        // physical values, point-major: phys[x * ns * n + s * n + c]
        let mut phys = vec![ZERO; m * ns * n];
        let mut spec_buf = vec![ZERO; nm * n];
        let mut cm = vec![ZERO; m * n];
        let mut scratch = vec![ZERO; nm];
        for (s, f) in fields.iter().enumerate() {
            spec_buf.copy_from_slice(f);
            spec_buf[nyq * n..(nyq + 1) * n].fill(ZERO);
            self.eng.physical_into(&spec_buf, n, &mut cm, &mut scratch, true);
            for c in 0..n {
                for x in 0..m {
                    phys[x * ns * n + s * n + c] = cm[c * m + x];
                }
            }
        }

        let mut out_pt = vec![ZERO; m * nt * n];
        let blk = BLOCK.min(m);
        exec.for_each_block(&mut out_pt, blk * nt * n, |b, out| {
            let here = &phys[b * blk * ns * n..(b + 1) * blk * ns * n];
            let mut big_u = vec![0.0; blk * n];
            let mut f = vec![0.0; blk * n];
            for q in 0..p {
                big_u.fill(0.0);
                for s in 0..ns {
                    let e = self.src_phase[s * p + q] * 2.0;
                    for (x, bu) in big_u.chunks_exact_mut(n).enumerate() {
                        let src = &here[x * ns * n + s * n..x * ns * n + (s + 1) * n];
                        for (d, v) in bu.iter_mut().zip(src) {
                            *d += v.re * e.re - v.im * e.im;
                        }
                    }
                }
                spec.t.eval_real_batch(n, &big_u, &mut f);
                for t in 0..nt {
                    let e = self.tgt_phase[t * p + q];
                    for (x, fx) in f.chunks_exact(n).enumerate() {
                        let dst = &mut out[x * nt * n + t * n..x * nt * n + (t + 1) * n];
                        for (d, v) in dst.iter_mut().zip(fx) {
                            *d += e * v;
                        }
                    }
                }
            }
        });

        let mut results = Vec::with_capacity(nt);
        for t in 0..nt {
            for c in 0..n {
                for x in 0..m {
                    cm[c * m + x] = out_pt[x * nt * n + t * n + c];
                }
            }
            let mut res = vec![ZERO; nm * n];
            self.eng.spectral_into(&mut cm, n, &mut res, &mut scratch, true);
            res[nyq * n..(nyq + 1) * n].fill(ZERO);
            results.push(res);
        }
        results
    }
}

/// Points per block in the sampled evaluation.
const BLOCK: usize = 256;

/// Largest state dimension handled with stack buffers.
pub const MAX_N: usize = 16;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::index_set::enumerate_index_set;
    use crate::spectral::{trilinear_conv_direct, SpectralField};
    use crate::system::{builtin_maxwell_lorentz_1d, klein_gordon_default};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matches_sum_of_direct_convolutions() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for spec in [klein_gordon_default(), builtin_maxwell_lorentz_1d()] {
            let g = Grid::new(11.0, 16).unwrap();
            let n = spec.n;
            let mut fields: Vec<SpectralField> = (0..2)
                .map(|_| {
                    let d = (0..16 * n).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
                    SpectralField::from_data(g, n, d).unwrap()
                })
                .collect();
            for f in &mut fields {
                f.at_mut(8).fill(ZERO);
            }
            let hs = HarmonicSums::new(g, n, &[1, 3], &[1, 3, 5, 9]);
            let got = hs.eval(&spec, &[&fields[0].data, &fields[1].data], Exec::Parallel);
            let field_of = |j: i32| {
                let f = &fields[if j.abs() == 1 { 0 } else { 1 }];
                if j > 0 {
                    f.clone()
                } else {
                    f.conj_mirror()
                }
            };
            for (ti, j) in [1, 3, 5, 9].iter().enumerate() {
                let mut want = SpectralField::zeros(g, n);
                for t in enumerate_index_set(*j, &[-3, -1, 1, 3]) {
                    let c = trilinear_conv_direct(&spec, &field_of(t[0]), &field_of(t[1]), &field_of(t[2])).unwrap();
                    for (w, v) in want.data.iter_mut().zip(&c.data) {
                        *w += v;
                    }
                }
                want.at_mut(8).fill(ZERO);
                let scale = want.data.iter().fold(0.0_f64, |a, z| a.max(z.norm()));
                for (a, b) in got[ti].iter().zip(&want.data) {
                    assert!((a - b).norm() <= 1e-12 * scale, "j = {j}");
                }
            }
        }
    }
}
