use alloc::vec::Vec;

/// `enc(a) − enc(b) + enc(c) ≈ enc(d)` over genre indices.
///
/// Canonical form keeps `a < c` and `b < d`; swapping `a↔c` or `b↔d`
/// describes the same equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenreEquation {
    pub a: usize,
    pub b: usize,
    pub c: usize,
    pub d: usize,
    /// `‖a − b + c − d‖₂` divided by the mean encoding norm.
    pub residual: f64,
}

fn norm(v: &[f64]) -> f64 {
    libm::sqrt(v.iter().map(|x| x * x).sum())
}

/// Relative residual of `a − b + c = d` for raw vectors.
pub fn equation_residual(a: &[f64], b: &[f64], c: &[f64], d: &[f64], scale: f64) -> f64 {
    let mut acc = 0.0;
    for i in 0..a.len() {
        let r = a[i] - b[i] + c[i] - d[i];
        acc += r * r;
    }
    libm::sqrt(acc) / scale
}

/// Enumerates every canonical equation over distinct genres, sorted by
/// residual (then by genre indices). `encodings[g]` is genre `g`'s vector.
/// Keeps at most `max_results` equations, and only those with residual
/// at or below `threshold` when one is given.
pub fn find_genre_equations(encodings: &[Vec<f64>], max_results: usize, threshold: Option<f64>) -> Vec<GenreEquation> {
    let n = encodings.len();
    if n < 4 {
        return Vec::new();
    }
    let mean_norm = encodings.iter().map(|e| norm(e)).sum::<f64>() / n as f64;
    let scale = if mean_norm > 0.0 { mean_norm } else { 1.0 };
    let mut found = Vec::with_capacity(n * (n - 1) * (n - 2) * (n - 3) / 4);
    for a in 0..n {
        for c in a + 1..n {
            for b in 0..n {
                if b == a || b == c {
                    continue;
                }
                for d in b + 1..n {
                    if d == a || d == c {
                        continue;
                    }
                    let residual = equation_residual(&encodings[a], &encodings[b], &encodings[c], &encodings[d], scale);
                    found.push(GenreEquation { a, b, c, d, residual });
                }
            }
        }
    }
    found.sort_by(|x, y| x.residual.total_cmp(&y.residual).then((x.a, x.b, x.c, x.d).cmp(&(y.a, y.b, y.c, y.d))));
    if let Some(t) = threshold {
        found.retain(|e| e.residual <= t);
    }
    found.truncate(max_results);
    found
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn counts_canonical_candidates() {
        let enc: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, (i * i) as f64]).collect();
        assert_eq!(find_genre_equations(&enc, usize::MAX, None).len(), 1260);
        assert_eq!(find_genre_equations(&enc[..4], usize::MAX, None).len(), 6);
    }

    #[test]
    fn planted_parallelogram_ranks_first() {
        let mut enc = vec![vec![1.0, 0.0], vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]];
        for i in 0..6 {
            enc.push(vec![50.0 + 17.0 * i as f64, -40.0 * i as f64 - 90.0]);
        }
        let top = find_genre_equations(&enc, 10, None);
        assert_eq!((top[0].a, top[0].b, top[0].c, top[0].d), (0, 1, 2, 3));
        assert_eq!(top[0].residual, 0.0);
    }

    #[test]
    fn threshold_filters() {
        let enc: Vec<Vec<f64>> = (0..6).map(|i| vec![(i * i) as f64]).collect();
        let all = find_genre_equations(&enc, usize::MAX, None);
        let cut = all[all.len() / 2].residual;
        let kept = find_genre_equations(&enc, usize::MAX, Some(cut));
        assert!(kept.iter().all(|e| e.residual <= cut));
        assert!(kept.len() >= all.len() / 2);
    }
}
