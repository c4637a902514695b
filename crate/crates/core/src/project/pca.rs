use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{column_means, fix_sign, rows_to_matrix, symmetrize};

/// Principal components of centred (not rescaled) data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// One orthonormal direction per row, strongest first.
    pub components: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
    /// Trace of the sample covariance.
    pub total_variance: f64,
}

pub fn pca_fit(vectors: &[Vec<f64>], n_components: usize) -> Result<PcaModel> {
    let n = vectors.len();
    if n < 2 {
        return Err(Error::InsufficientData("PCA needs at least 2 samples".into()));
    }
    let x = rows_to_matrix(vectors)?;
    let d = x.ncols();
    let max = d.min(n - 1);
    if n_components == 0 || n_components > max {
        return Err(Error::invalid(format!(
            "n_components {n_components} outside 1..={max}"
        )));
    }
    let mean = column_means(&x);
    let mut centred = x;
    for mut row in centred.row_iter_mut() {
        row -= mean.transpose();
    }
    let total_variance = centred.iter().map(|v| v * v).sum::<f64>() / (n - 1) as f64;

    // nalgebra's SVD mis-reports singular values on some near-rank-deficient
    // inputs, so work from the symmetric eigendecomposition of whichever of
    // the covariance (d x d) or Gram (n x n) matrix is smaller.
    let scale = 1.0 / (n - 1) as f64;
    let (values, directions) = if d <= n {
        let mut cov = centred.transpose() * &centred * scale;
        symmetrize(&mut cov);
        let eig = cov.symmetric_eigen();
        (eig.eigenvalues, eig.eigenvectors)
    } else {
        let mut gram = &centred * centred.transpose() * scale;
        symmetrize(&mut gram);
        let eig = gram.symmetric_eigen();
        let dirs = centred.transpose() * &eig.eigenvectors;
        (eig.eigenvalues, dirs)
    };
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap_or(std::cmp::Ordering::Equal));

    let mut components: Vec<Vec<f64>> = Vec::with_capacity(n_components);
    let mut explained_variance = Vec::with_capacity(n_components);
    for &i in order.iter().take(n_components) {
        let mut c: Vec<f64> = directions.column(i).iter().copied().collect();
        orthonormalize(&mut c, &components);
        if c.iter().all(|x| *x == 0.0) {
            c = complete_basis(&components, d);
        }
        fix_sign(&mut c);
        components.push(c);
        explained_variance.push(values[i].max(0.0));
    }
    Ok(PcaModel {
        mean: mean.iter().copied().collect(),
        components,
        explained_variance,
        total_variance,
    })
}

/// Gram-Schmidt against `basis`, then unit-normalise. Leaves a zero vector
/// when `v` lies (numerically) in the span of `basis`.
fn orthonormalize(v: &mut [f64], basis: &[Vec<f64>]) {
    let start = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    for _ in 0..2 {
        for b in basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
        }
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm <= 1e-10 * start.max(f64::MIN_POSITIVE) || norm == 0.0 {
        v.iter_mut().for_each(|x| *x = 0.0);
    } else {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

fn complete_basis(basis: &[Vec<f64>], d: usize) -> Vec<f64> {
    for j in 0..d {
        let mut e = vec![0.0; d];
        e[j] = 1.0;
        orthonormalize(&mut e, basis);
        if e.iter().any(|x| *x != 0.0) {
            return e;
        }
    }
    vec![0.0; d]
}

impl PcaModel {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn explained_variance_ratio(&self) -> Vec<f64> {
        self.explained_variance
            .iter()
            .map(|v| if self.total_variance > 0.0 { v / self.total_variance } else { 0.0 })
            .collect()
    }

    fn basis(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_components(), self.dim(), |i, j| self.components[i][j])
    }

    pub fn transform(&self, vectors: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let basis = self.basis();
        vectors
            .iter()
            .map(|v| {
                if v.len() != self.dim() {
                    return Err(Error::DimensionMismatch {
                        id: None,
                        expected: self.dim(),
                        got: v.len(),
                    });
                }
                let centred =
                    nalgebra::DVector::from_iterator(v.len(), v.iter().zip(&self.mean).map(|(a, m)| a - m));
                Ok((&basis * centred).iter().copied().collect())
            })
            .collect()
    }

    pub fn inverse_transform(&self, scores: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let basis = self.basis();
        scores
            .iter()
            .map(|s| {
                if s.len() != self.n_components() {
                    return Err(Error::DimensionMismatch {
                        id: None,
                        expected: self.n_components(),
                        got: s.len(),
                    });
                }
                let s = nalgebra::DVector::from_column_slice(s);
                let x = basis.transpose() * s;
                Ok(x.iter().zip(&self.mean).map(|(a, m)| a + m).collect())
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| (0..d).map(|j| Distribution::<f64>::sample(&StandardNormal, &mut rng) * (1.0 + j as f64 * 0.1)).collect())
            .collect()
    }

    /// Cyclic Jacobi eigenvalues of a small symmetric matrix.
    fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
        let n = a.len();
        for _ in 0..100 {
            let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
            if off < 1e-22 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    if a[p][q].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let (akp, akq) = (a[k][p], a[k][q]);
                        a[k][p] = c * akp - s * akq;
                        a[k][q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let (apk, aqk) = (a[p][k], a[q][k]);
                        a[p][k] = c * apk - s * aqk;
                        a[q][k] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
        ev.sort_by(|a, b| b.partial_cmp(a).unwrap());
        ev
    }

    #[test]
    fn rank_one_data_has_full_ratio() {
        let dir = [1.0, -2.0, 0.5, 3.0, 1.0];
        let pts: Vec<Vec<f64>> = (0..100).map(|i| dir.iter().map(|d| d * (i as f64 - 30.0) * 0.1 + 4.0).collect()).collect();
        let m = pca_fit(&pts, 1).unwrap();
        assert!((m.explained_variance_ratio()[0] - 1.0).abs() < 1e-9, "{:?} {}", m.explained_variance, m.total_variance);
    }

    #[test]
    fn full_rank_round_trip() {
        let pts = gaussian(40, 6, 1);
        let m = pca_fit(&pts, 6).unwrap();
        let back = m.inverse_transform(&m.transform(&pts).unwrap()).unwrap();
        let err = pts.iter().zip(&back).flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs())).fold(0.0, f64::max);
        assert!(err <= 1e-8, "{err}");
    }

    #[test]
    fn components_orthonormal_and_variance_sorted() {
        let m = pca_fit(&gaussian(50, 8, 2), 5).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let dot: f64 = m.components[i].iter().zip(&m.components[j]).map(|(a, b)| a * b).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-8);
            }
        }
        assert!(m.explained_variance.windows(2).all(|w| w[0] >= w[1] && w[1] >= 0.0));
    }

    #[test]
    fn high_dimensional_variances_match_gram_eigenvalues() {
        // n << d: the nonzero spectrum of the d x d covariance equals that of
        // the n x n Gram matrix of centred data.
        let n = 40;
        let pts = gaussian(n, 512, 3);
        let m = pca_fit(&pts, 10).unwrap();
        let d = 512;
        let mean: Vec<f64> = (0..d).map(|j| pts.iter().map(|p| p[j]).sum::<f64>() / n as f64).collect();
        let c: Vec<Vec<f64>> = pts.iter().map(|p| p.iter().zip(&mean).map(|(a, b)| a - b).collect()).collect();
        let gram: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| c[i].iter().zip(&c[j]).map(|(a, b)| a * b).sum::<f64>() / (n - 1) as f64).collect())
            .collect();
        let ev = jacobi_eigenvalues(gram);
        for k in 0..10 {
            assert!((m.explained_variance[k] - ev[k]).abs() <= 1e-6 * ev[k].max(1.0), "{k}: {} vs {}", m.explained_variance[k], ev[k]);
        }
    }

    #[test]
    fn transformed_training_data_is_decorrelated() {
        let pts = gaussian(200, 6, 4);
        let m = pca_fit(&pts, 6).unwrap();
        let y = m.transform(&pts).unwrap();
        let n = y.len() as f64;
        let trace: f64 = m.explained_variance.iter().sum();
        for a in 0..6 {
            for b in 0..a {
                let cov: f64 = y.iter().map(|r| r[a] * r[b]).sum::<f64>() / (n - 1.0);
                assert!(cov.abs() <= 1e-6 * trace);
            }
        }
    }

    #[test]
    fn invalid_arguments() {
        let pts = gaussian(5, 3, 5);
        assert!(pca_fit(&pts[..1], 1).is_err());
        assert!(pca_fit(&pts, 0).is_err());
        assert!(pca_fit(&pts, 4).is_err());
        let m = pca_fit(&pts, 2).unwrap();
        assert!(m.transform(&[vec![1.0; 4]]).is_err());
    }
}
