use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{column_means, fix_sign, rows_to_matrix, symmetrize};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LdaConfig {
    /// Ridge added to the within-class scatter, relative to its mean
    /// diagonal: `S_w + eps * trace(S_w) / d * I`.
    pub regularizer: f64,
}

impl Default for LdaConfig {
    fn default() -> Self {
        Self { regularizer: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaModel {
    pub global_mean: Vec<f64>,
    pub class_means: BTreeMap<String, Vec<f64>>,
    /// Unit-norm discriminant directions, one per row, best first.
    pub projection: Vec<Vec<f64>>,
    pub fisher_ratios: Vec<f64>,
    pub within_scatter_regularizer: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl LdaModel {
    pub fn dim(&self) -> usize {
        self.global_mean.len()
    }

    pub fn n_axes(&self) -> usize {
        self.projection.len()
    }
}

struct Scatter {
    global_mean: DVector<f64>,
    class_means: BTreeMap<String, DVector<f64>>,
    within: DMatrix<f64>,
    between: DMatrix<f64>,
    counts: BTreeMap<String, usize>,
}

fn scatter(vectors: &[Vec<f64>], labels: &[String]) -> Result<Scatter> {
    if vectors.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            id: Some("labels".into()),
            expected: vectors.len(),
            got: labels.len(),
        });
    }
    let x = rows_to_matrix(vectors)?;
    let d = x.ncols();
    let global_mean = column_means(&x);
    let mut sums: BTreeMap<String, (DVector<f64>, usize)> = BTreeMap::new();
    for (row, label) in x.row_iter().zip(labels) {
        let e = sums
            .entry(label.clone())
            .or_insert_with(|| (DVector::zeros(d), 0));
        e.0 += row.transpose();
        e.1 += 1;
    }
    let class_means: BTreeMap<String, DVector<f64>> = sums
        .iter()
        .map(|(k, (s, n))| (k.clone(), s / *n as f64))
        .collect();
    let counts = sums.iter().map(|(k, (_, n))| (k.clone(), *n)).collect();

    let mut centred = x;
    for (mut row, label) in centred.row_iter_mut().zip(labels) {
        row -= class_means[label].transpose();
    }
    let mut within = centred.transpose() * &centred;
    symmetrize(&mut within);

    let mut between = DMatrix::zeros(d, d);
    for (label, mu) in &class_means {
        let diff = mu - &global_mean;
        between += (&diff * diff.transpose()) * sums[label].1 as f64;
    }
    Ok(Scatter {
        global_mean,
        class_means,
        within,
        between,
        counts,
    })
}

/// Pooled within-class covariance, `S_w / (n - K)`.
pub fn pooled_covariance(vectors: &[Vec<f64>], labels: &[String]) -> Result<DMatrix<f64>> {
    let s = scatter(vectors, labels)?;
    let dof = vectors.len().saturating_sub(s.class_means.len());
    if dof == 0 {
        return Err(Error::InsufficientData(
            "pooled covariance needs more samples than classes".into(),
        ));
    }
    Ok(s.within / dof as f64)
}

/// Fits Fisher discriminant directions by solving the generalised symmetric
/// eigenproblem `S_b v = lambda (S_w + ridge) v` through a Cholesky
/// whitening of the regularised within-class scatter.
pub fn lda_fit(
    vectors: &[Vec<f64>],
    labels: &[String],
    n_axes: usize,
    config: &LdaConfig,
) -> Result<LdaModel> {
    let s = scatter(vectors, labels)?;
    let k = s.class_means.len();
    if k < 2 {
        return Err(Error::InsufficientData("LDA needs at least 2 classes".into()));
    }
    if n_axes == 0 || n_axes > k - 1 {
        return Err(Error::invalid(format!(
            "requested {n_axes} axes; {k} classes allow 1..={}",
            k - 1
        )));
    }
    if config.regularizer < 0.0 {
        return Err(Error::invalid("regularizer must be non-negative"));
    }
    if config.regularizer == 0.0 {
        if let Some((label, _)) = s.counts.iter().find(|(_, &n)| n < 2) {
            return Err(Error::InsufficientData(format!(
                "class `{label}` has fewer than 2 samples and no regularizer is set"
            )));
        }
    }
    let d = s.global_mean.len();
    let mut sw = s.within.clone();
    let mut ridge = config.regularizer * sw.trace() / d as f64;
    if ridge == 0.0 && config.regularizer > 0.0 {
        ridge = config.regularizer;
    }
    for i in 0..d {
        sw[(i, i)] += ridge;
    }
    let sw_trace = sw.trace();
    let chol = sw.cholesky().ok_or_else(|| {
        Error::numerical("within-class scatter is singular; increase the regularizer")
    })?;
    let l = chol.l();
    let l_inv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::numerical("cannot invert Cholesky factor"))?;
    let mut m = &l_inv * &s.between * l_inv.transpose();
    symmetrize(&mut m);
    let eig = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    let mut projection = Vec::with_capacity(n_axes);
    let mut fisher_ratios = Vec::with_capacity(n_axes);
    let l_inv_t = l_inv.transpose();
    for &i in order.iter().take(n_axes) {
        let u = eig.eigenvectors.column(i);
        let v = &l_inv_t * u;
        let norm = v.norm();
        let mut v: Vec<f64> = v.iter().map(|x| x / norm).collect();
        fix_sign(&mut v);
        projection.push(v);
        fisher_ratios.push(eig.eigenvalues[i].max(0.0));
    }
    let mut warnings = Vec::new();
    let scale = s.between.trace().abs() + sw_trace.abs();
    if fisher_ratios[0] <= 1e-12 * scale.max(1.0) || s.between.trace() <= f64::EPSILON * scale {
        let msg = "class means coincide; discriminant directions are arbitrary".to_string();
        log::warn!("{msg}");
        warnings.push(msg);
    }
    Ok(LdaModel {
        global_mean: s.global_mean.iter().copied().collect(),
        class_means: s
            .class_means
            .into_iter()
            .map(|(k, v)| (k, v.iter().copied().collect()))
            .collect(),
        projection,
        fisher_ratios,
        within_scatter_regularizer: config.regularizer,
        warnings,
    })
}

/// Projects vectors: `y = W (x - global_mean)`.
pub fn lda_apply(model: &LdaModel, vectors: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    vectors
        .iter()
        .map(|x| {
            if x.len() != model.dim() {
                return Err(Error::DimensionMismatch {
                    id: None,
                    expected: model.dim(),
                    got: x.len(),
                });
            }
            Ok(model
                .projection
                .iter()
                .map(|w| {
                    w.iter()
                        .zip(x.iter().zip(&model.global_mean))
                        .map(|(w, (x, m))| w * (x - m))
                        .sum()
                })
                .collect())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn clusters(centres: &[Vec<f64>], per: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<String>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (k, c) in centres.iter().enumerate() {
            for _ in 0..per {
                xs.push(c.iter().map(|m| m + Distribution::<f64>::sample(&StandardNormal, &mut rng)).collect());
                ys.push(format!("c{k}"));
            }
        }
        (xs, ys)
    }

    fn e(d: usize, i: usize, s: f64) -> Vec<f64> {
        let mut v = vec![0.0; d];
        v[i] = s;
        v
    }

    #[test]
    fn three_classes_give_at_most_two_axes() {
        let (x, y) = clusters(&[e(5, 0, 3.0), e(5, 1, 3.0), e(5, 2, 3.0)], 20, 1);
        assert_eq!(lda_fit(&x, &y, 2, &LdaConfig::default()).unwrap().n_axes(), 2);
        assert!(lda_fit(&x, &y, 3, &LdaConfig::default()).is_err());
    }

    #[test]
    fn separated_clusters_align_with_offset_axis() {
        let (x, y) = clusters(&[e(10, 0, 5.0), e(10, 0, -5.0)], 1000, 2);
        let m = lda_fit(&x, &y, 1, &LdaConfig::default()).unwrap();
        assert!(m.projection[0][0].abs() > 0.99, "{:?} {:?}", m.projection, m.fisher_ratios);
        assert!(m.warnings.is_empty());
    }

    #[test]
    fn identical_means_warn_but_return() {
        let base: Vec<Vec<f64>> = (0..20).map(|i| vec![(i % 5) as f64, (i / 5) as f64, 0.5 * i as f64]).collect();
        let mut x = base.clone();
        x.extend(base.iter().cloned());
        let y: Vec<String> = (0..40).map(|i| if i < 20 { "a".into() } else { "b".into() }).collect();
        let m = lda_fit(&x, &y, 1, &LdaConfig::default()).unwrap();
        assert!(m.fisher_ratios[0] < 1e-9);
        assert!(!m.warnings.is_empty());
    }

    #[test]
    fn singleton_class_needs_regularizer() {
        let x = vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![2.0, 2.0], vec![5.0, 5.0]];
        let y: Vec<String> = ["a", "a", "a", "b"].iter().map(|s| s.to_string()).collect();
        assert!(lda_fit(&x, &y, 1, &LdaConfig { regularizer: 0.0 }).is_err());
        assert!(lda_fit(&x, &y, 1, &LdaConfig::default()).is_ok());
    }

    #[test]
    fn two_class_direction_matches_closed_form() {
        let (x, y) = clusters(&[vec![1.0, 0.0, 2.0, 0.0], vec![0.0, 1.0, 0.0, -1.0]], 30, 3);
        let cfg = LdaConfig::default();
        let m = lda_fit(&x, &y, 1, &cfg).unwrap();
        let s = scatter(&x, &y).unwrap();
        let d = 4;
        let mut sw = s.within.clone();
        let ridge = cfg.regularizer * sw.trace() / d as f64;
        for i in 0..d {
            sw[(i, i)] += ridge;
        }
        let diff = &s.class_means["c0"] - &s.class_means["c1"];
        let w = sw.lu().solve(&diff).unwrap();
        let w = w.normalize();
        let dot: f64 = w.iter().zip(&m.projection[0]).map(|(a, b)| a * b).sum();
        assert!(1.0 - dot.abs() < 1e-12);
    }

    #[test]
    fn translation_invariant_outputs() {
        let (x, y) = clusters(&[e(6, 0, 2.0), e(6, 1, 2.0), e(6, 2, -2.0)], 15, 4);
        let m = lda_fit(&x, &y, 2, &LdaConfig::default()).unwrap();
        let shift: Vec<f64> = (0..6).map(|i| 3.0 - i as f64).collect();
        let xs: Vec<Vec<f64>> = x.iter().map(|r| r.iter().zip(&shift).map(|(a, b)| a + b).collect()).collect();
        let ms = lda_fit(&xs, &y, 2, &LdaConfig::default()).unwrap();
        let a = lda_apply(&m, &x).unwrap();
        let b = lda_apply(&ms, &xs).unwrap();
        for (ra, rb) in a.iter().zip(&b) {
            for (u, v) in ra.iter().zip(rb) {
                assert!((u - v).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn class_means_stay_distinct_after_projection() {
        let (x, y) = clusters(&[e(8, 0, 4.0), e(8, 1, 4.0), e(8, 2, 4.0)], 25, 5);
        let m = lda_fit(&x, &y, 2, &LdaConfig::default()).unwrap();
        let means: Vec<Vec<f64>> = m.class_means.values().cloned().collect();
        let p = lda_apply(&m, &means).unwrap();
        for i in 0..3 {
            for j in 0..i {
                let dist: f64 = p[i].iter().zip(&p[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                assert!(dist > 1.0);
            }
        }
    }

    #[test]
    fn zero_mean_model_maps_zero_to_zero() {
        let x = vec![vec![1.0, 1.0], vec![2.0, 1.5], vec![-1.0, -1.0], vec![-2.0, -1.5]];
        let y: Vec<String> = ["a", "a", "b", "b"].iter().map(|s| s.to_string()).collect();
        let m = lda_fit(&x, &y, 1, &LdaConfig::default()).unwrap();
        assert_eq!(lda_apply(&m, &[vec![0.0, 0.0]]).unwrap()[0][0], 0.0);
        assert!(lda_apply(&m, &[vec![0.0; 3]]).is_err());
    }

    #[test]
    fn cross_application_on_shifted_data() {
        let (x, y) = clusters(&[e(4, 0, 3.0), e(4, 0, -3.0)], 20, 6);
        let m = lda_fit(&x, &y, 1, &LdaConfig::default()).unwrap();
        let (other, _) = clusters(&[vec![10.0, -4.0, 2.0, 7.0]], 30, 7);
        let out = lda_apply(&m, &other).unwrap();
        assert_eq!(out.len(), 30);
        assert!(out.iter().all(|r| r[0].is_finite()));
    }
}
