//! Execution strategy for the data-parallel inner loops.
//!
//! Every hot loop in the crate (per-mode linear flows, per-mode
//! eigendecompositions, pointwise nonlinear evaluation, the epsilon sweep)
//! goes through [`Exec`]. With the `parallel` feature the loops run on the
//! rayon pool; without it, or with [`Exec::Sequential`], they run inline and
//! produce bitwise-identical results.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Minimum number of items handed to one rayon task.
#[cfg(feature = "parallel")]
const MIN_CHUNK: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    /// Whether this strategy actually fans out to worker threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }

    /// Applies `f` to consecutive blocks of `block` elements of `data`,
    /// passing the block index.
    pub fn for_each_block<T, F>(self, data: &mut [T], block: usize, f: F)
    where
        T: Send,
        F: Fn(usize, &mut [T]) + Sync + Send,
    {
        debug_assert!(block > 0 && data.len().is_multiple_of(block));
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            data.par_chunks_mut(block)
                .with_min_len(MIN_CHUNK)
                .enumerate()
                .for_each(|(i, c)| f(i, c));
            return;
        }
        data.chunks_mut(block).enumerate().for_each(|(i, c)| f(i, c));
    }

    /// Like [`Exec::for_each_block`] but walks two buffers in lockstep.
    pub fn for_each_block_zip<T, U, F>(self, a: &mut [T], ba: usize, b: &[U], bb: usize, f: F)
    where
        T: Send,
        U: Sync,
        F: Fn(usize, &mut [T], &[U]) + Sync + Send,
    {
        debug_assert_eq!(a.len() / ba, b.len() / bb);
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            a.par_chunks_mut(ba)
                .zip(b.par_chunks(bb))
                .with_min_len(MIN_CHUNK)
                .enumerate()
                .for_each(|(i, (x, y))| f(i, x, y));
            return;
        }
        a.chunks_mut(ba)
            .zip(b.chunks(bb))
            .enumerate()
            .for_each(|(i, (x, y))| f(i, x, y));
    }

    /// Maps `0..len` through `f`, preserving order.
    pub fn map_range<R, F>(self, len: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return (0..len).into_par_iter().with_min_len(16).map(f).collect();
        }
        (0..len).map(f).collect()
    }

    /// Maps a slice of coarse work items (one per sweep entry, one per
    /// field component) without a minimum chunk size.
    pub fn map_items<I, R, F>(self, items: &[I], f: F) -> Vec<R>
    where
        I: Sync,
        R: Send,
        F: Fn(&I) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategies_agree() {
        let mut a: Vec<f64> = (0..10_000).map(|i| i as f64).collect();
        let mut b = a.clone();
        let f = |i: usize, c: &mut [f64]| {
            for x in c.iter_mut() {
                *x = (*x * 1.5 + i as f64).sin();
            }
        };
        Exec::Sequential.for_each_block(&mut a, 4, f);
        Exec::Parallel.for_each_block(&mut b, 4, f);
        assert_eq!(a, b);
        let s = Exec::Sequential.map_range(1000, |i| i * i);
        let p = Exec::Parallel.map_range(1000, |i| i * i);
        assert_eq!(s, p);
    }
}
