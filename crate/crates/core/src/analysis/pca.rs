use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Eigen-decomposition of a symmetric `n×n` matrix (row-major) by cyclic
/// Jacobi rotations.
///
/// Returns eigenvalues and eigenvectors (as rows) sorted by eigenvalue,
/// largest first. Sweeps stop once the off-diagonal Frobenius norm falls to
/// `tol` relative to the full norm.
pub fn jacobi_eigen(matrix: &[f64], n: usize, tol: f64) -> (Vec<f64>, Vec<Vec<f64>>) {
    assert_eq!(matrix.len(), n * n, "jacobi_eigen: matrix is not n x n");
    let mut a = matrix.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let total: f64 = libm::sqrt(a.iter().map(|x| x * x).sum());
    const MAX_SWEEPS: usize = 100;
    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j] * a[i * n + j])
            .sum();
        if libm::sqrt(off) <= tol * total.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = libm::copysign(1.0, theta) / (libm::fabs(theta) + libm::sqrt(theta * theta + 1.0));
                let c = 1.0 / libm::sqrt(t * t + 1.0);
                let s = t * c;
                // A ← Jᵀ A J, touching rows/columns p and q only.
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j * n + j].total_cmp(&a[i * n + i]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| a[i * n + i]).collect();
    let vectors = order.iter().map(|&i| (0..n).map(|k| v[k * n + i]).collect()).collect();
    (values, vectors)
}

/// Principal axes of a point set.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// Orthonormal rows, largest variance first. Each row's largest-magnitude
    /// coordinate is positive.
    pub components: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
    pub explained_ratio: Vec<f64>,
}

impl PcaModel {
    /// Fits `components` axes to `vectors` using the sample covariance
    /// (divisor `n − 1`).
    pub fn fit(vectors: &[Vec<f64>], components: usize) -> Result<Self> {
        let n = vectors.len();
        if n < 2 {
            return Err(Error::TooFewVectors { found: n, required: 2 });
        }
        let d = vectors[0].len();
        if vectors.iter().any(|v| v.len() != d) {
            return Err(Error::shape("fit_pca", "vectors differ in length".into()));
        }
        if components == 0 || components > d.min(n - 1) {
            return Err(Error::InvalidArgument(format!(
                "{components} components requested from {n} vectors of dimension {d}"
            )));
        }
        let mut mean = vec![0.0; d];
        for v in vectors {
            for (m, x) in mean.iter_mut().zip(v) {
                *m += x;
            }
        }
        for m in &mut mean {
            *m /= n as f64;
        }
        let mut cov = vec![0.0; d * d];
        let mut centered = vec![0.0; d];
        for v in vectors {
            for ((c, x), m) in centered.iter_mut().zip(v).zip(&mean) {
                *c = x - m;
            }
            for i in 0..d {
                let ci = centered[i];
                if ci == 0.0 {
                    continue;
                }
                for j in i..d {
                    cov[i * d + j] += ci * centered[j];
                }
            }
        }
        let denom = (n - 1) as f64;
        for i in 0..d {
            for j in i..d {
                let val = cov[i * d + j] / denom;
                cov[i * d + j] = val;
                cov[j * d + i] = val;
            }
        }
        let total_variance: f64 = (0..d).map(|i| cov[i * d + i]).sum();
        let (values, vectors) = jacobi_eigen(&cov, d, 1e-12);
        let mut comps = Vec::with_capacity(components);
        for mut axis in vectors.into_iter().take(components) {
            let mut pivot = 0;
            for (i, x) in axis.iter().enumerate() {
                if libm::fabs(*x) > libm::fabs(axis[pivot]) {
                    pivot = i;
                }
            }
            if axis[pivot] < 0.0 {
                axis.iter_mut().for_each(|x| *x = -*x);
            }
            comps.push(axis);
        }
        let explained_variance: Vec<f64> = values.iter().take(components).map(|&v| v.max(0.0)).collect();
        let explained_ratio =
            explained_variance.iter().map(|v| if total_variance > 0.0 { v / total_variance } else { 0.0 }).collect();
        Ok(PcaModel { mean, components: comps, explained_variance, explained_ratio })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Coordinates `components · (v − mean)`.
    pub fn project(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.mean.len() {
            return Err(Error::shape("pca_project", format!("{} values for dimension {}", v.len(), self.dim())));
        }
        Ok(self
            .components
            .iter()
            .map(|c| c.iter().zip(v).zip(&self.mean).map(|((ci, x), m)| ci * (x - m)).sum())
            .collect())
    }

    /// Maps coordinates back into the embedding space.
    pub fn reconstruct(&self, coords: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (c, &w) in self.components.iter().zip(coords) {
            for (o, ci) in out.iter_mut().zip(c) {
                *o += w * ci;
            }
        }
        out
    }
}
