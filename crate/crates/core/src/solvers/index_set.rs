/// Harmonic set `{+-j : j in positive}`, ascending.
pub fn symmetric_set(positive: &[i32]) -> Vec<i32> {
    let mut s: Vec<i32> = positive.iter().flat_map(|&j| [-j, j]).collect();
    s.sort_unstable();
    s.dedup();
    s
}

/// All ordered triples `(j1, j2, j3)` from `set` with `j1 + j2 + j3 = j`,
/// in lexicographic order.
pub fn enumerate_index_set(j: i32, set: &[i32]) -> Vec<[i32; 3]> {
    let mut s = set.to_vec();
    s.sort_unstable();
    s.dedup();
    let mut out = Vec::new();
    for &a in &s {
        for &b in &s {
            let c = j - a - b;
            if s.binary_search(&c).is_ok() {
                out.push([a, b, c]);
            }
        }
    }
    out
}

/// Harmonics outside `positive` (and their negatives) reached by some
/// triple from the symmetric set, positive ones only, ascending.
pub fn residual_harmonics(positive: &[i32]) -> Vec<i32> {
    let set = symmetric_set(positive);
    let max = 3 * set.iter().copied().max().unwrap_or(0);
    (1..=max)
        .filter(|j| !positive.contains(j) && !enumerate_index_set(*j, &set).is_empty())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cardinalities() {
        let set = symmetric_set(&[1, 3]);
        assert_eq!(set, vec![-3, -1, 1, 3]);
        assert_eq!(enumerate_index_set(1, &set).len(), 12);
        assert_eq!(enumerate_index_set(3, &set).len(), 10);
        assert_eq!(enumerate_index_set(9, &set), vec![[3, 3, 3]]);
        assert!(enumerate_index_set(2, &set).is_empty());
        assert_eq!(enumerate_index_set(1, &symmetric_set(&[1])), vec![[-1, 1, 1], [1, -1, 1], [1, 1, -1]]);
    }

    #[test]
    fn residual_sets() {
        assert_eq!(residual_harmonics(&[1, 3]), vec![5, 7, 9]);
        assert_eq!(residual_harmonics(&[1]), vec![3]);
        assert_eq!(residual_harmonics(&[1, 3, 5]), vec![7, 9, 11, 13, 15]);
    }

    #[test]
    fn mirrored_sets_match() {
        let set = symmetric_set(&[1, 3, 5]);
        for j in -15..=15 {
            let a = enumerate_index_set(j, &set);
            let b = enumerate_index_set(-j, &set);
            assert_eq!(a.len(), b.len());
            for t in &a {
                assert!(b.contains(&[-t[0], -t[1], -t[2]]));
            }
        }
    }
}
