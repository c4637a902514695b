use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use super::svm::encode_labels;
use crate::error::{Error, Result};

pub const DEFAULT_RIDGE: f64 = 1e-8;

/// Gaussian discriminant with one covariance shared by every class, so the
/// boundaries between regions are straight lines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearRegionClassifier {
    pub classes: Vec<String>,
    pub means: Vec<[f64; 2]>,
    /// Row-major 2x2.
    pub pooled_covariance: [[f64; 2]; 2],
    pub priors: Vec<f64>,
    #[serde(skip)]
    weights: Vec<([f64; 2], f64)>,
}

impl LinearRegionClassifier {
    pub fn from_parts(
        classes: Vec<String>,
        means: Vec<[f64; 2]>,
        pooled_covariance: [[f64; 2]; 2],
        priors: Vec<f64>,
    ) -> Result<Self> {
        let k = classes.len();
        if k < 2 || means.len() != k || priors.len() != k {
            return Err(Error::invalid("need matching classes, means and priors for at least 2 classes"));
        }
        if priors.iter().any(|p| !(*p > 0.0 && p.is_finite())) {
            return Err(Error::invalid("class priors must be positive"));
        }
        let mut m = Self {
            classes,
            means,
            pooled_covariance,
            priors,
            weights: Vec::new(),
        };
        m.weights = m.discriminants()?;
        Ok(m)
    }

    fn discriminants(&self) -> Result<Vec<([f64; 2], f64)>> {
        let c = self.pooled_covariance;
        let cov = Matrix2::new(c[0][0], c[0][1], c[1][0], c[1][1]);
        let inv = cov
            .cholesky()
            .ok_or_else(|| Error::numerical("pooled covariance is not positive definite"))?
            .inverse();
        Ok(self
            .means
            .iter()
            .zip(&self.priors)
            .map(|(mu, p)| {
                let mu = Vector2::new(mu[0], mu[1]);
                let w = inv * mu;
                ([w[0], w[1]], -0.5 * mu.dot(&w) + p.ln())
            })
            .collect())
    }

    /// Linear discriminant score per class.
    pub fn scores(&self, point: [f64; 2]) -> Vec<f64> {
        let weights = if self.weights.is_empty() {
            // deserialized models carry no cache
            self.discriminants().unwrap_or_default()
        } else {
            self.weights.clone()
        };
        weights.iter().map(|(w, b)| w[0] * point[0] + w[1] * point[1] + b).collect()
    }

    /// Index of the highest score; exact ties go to the lowest index.
    pub fn predict_index(&self, point: [f64; 2]) -> usize {
        let s = self.scores(point);
        let mut best = 0;
        for (i, v) in s.iter().enumerate().skip(1) {
            if *v > s[best] {
                best = i;
            }
        }
        best
    }

    pub fn predict(&self, point: [f64; 2]) -> &str {
        &self.classes[self.predict_index(point)]
    }

    /// Rebuilds the score cache after deserialization.
    pub fn ready(mut self) -> Result<Self> {
        self.weights = self.discriminants()?;
        Ok(self)
    }

    /// Region labels over a regular `nx` x `ny` grid spanning the box.
    pub fn raster(&self, x_range: (f64, f64), y_range: (f64, f64), nx: usize, ny: usize) -> RegionRaster {
        let axis = |(lo, hi): (f64, f64), n: usize| -> Vec<f64> {
            if n <= 1 {
                vec![0.5 * (lo + hi)]
            } else {
                (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
            }
        };
        let xs = axis(x_range, nx);
        let ys = axis(y_range, ny);
        let labels = ys
            .iter()
            .map(|&y| xs.iter().map(|&x| self.predict_index([x, y])).collect())
            .collect();
        RegionRaster {
            classes: self.classes.clone(),
            xs,
            ys,
            labels,
        }
    }
}

/// Grid of region indices; `labels[j][i]` belongs to `(xs[i], ys[j])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionRaster {
    pub classes: Vec<String>,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub labels: Vec<Vec<usize>>,
}

impl RegionRaster {
    /// CSV with header `x,y,label`.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["x", "y", "label"])?;
        for (j, y) in self.ys.iter().enumerate() {
            for (i, x) in self.xs.iter().enumerate() {
                out.write_record([x.to_string(), y.to_string(), self.classes[self.labels[j][i]].clone()])?;
            }
        }
        out.flush().map_err(|e| Error::io("<output>", e))?;
        Ok(())
    }
}

/// Fits class means, empirical priors and the pooled covariance, with
/// `ridge` added to its diagonal.
pub fn linear_regions_fit(points: &[[f64; 2]], labels: &[String], ridge: f64) -> Result<LinearRegionClassifier> {
    if points.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            id: Some("labels".into()),
            expected: points.len(),
            got: labels.len(),
        });
    }
    let (classes, y) = encode_labels(labels);
    let k = classes.len();
    if k < 2 {
        return Err(Error::InsufficientData("need at least 2 classes".into()));
    }
    let n = points.len();
    if n <= k {
        return Err(Error::InsufficientData("too few points for a pooled covariance".into()));
    }
    let mut means = vec![[0.0; 2]; k];
    let mut counts = vec![0usize; k];
    for (p, &c) in points.iter().zip(&y) {
        means[c][0] += p[0];
        means[c][1] += p[1];
        counts[c] += 1;
    }
    for (m, &c) in means.iter_mut().zip(&counts) {
        m[0] /= c as f64;
        m[1] /= c as f64;
    }
    let mut cov = [[0.0; 2]; 2];
    for (p, &c) in points.iter().zip(&y) {
        let d = [p[0] - means[c][0], p[1] - means[c][1]];
        for a in 0..2 {
            for b in 0..2 {
                cov[a][b] += d[a] * d[b];
            }
        }
    }
    for (a, row) in cov.iter_mut().enumerate() {
        for v in row.iter_mut() {
            *v /= (n - k) as f64;
        }
        row[a] += ridge;
    }
    let priors = counts.iter().map(|&c| c as f64 / n as f64).collect();
    LinearRegionClassifier::from_parts(classes, means, cov, priors)
}

pub fn linear_regions_predict(model: &LinearRegionClassifier, point: [f64; 2]) -> &str {
    model.predict(point)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_class(p0: f64) -> LinearRegionClassifier {
        LinearRegionClassifier::from_parts(
            vec!["a".into(), "b".into()],
            vec![[-1.0, 0.0], [1.0, 0.0]],
            [[1.0, 0.0], [0.0, 1.0]],
            vec![p0, 1.0 - p0],
        )
        .unwrap()
    }

    /// x1 where the two scores meet, solving the linear equation directly.
    fn boundary(m: &LinearRegionClassifier) -> f64 {
        let s0 = m.scores([0.0, 0.0]);
        let s1 = m.scores([1.0, 0.0]);
        let slope = (s1[1] - s1[0]) - (s0[1] - s0[0]);
        -(s0[1] - s0[0]) / slope
    }

    #[test]
    fn symmetric_boundary_at_origin() {
        let m = two_class(0.5);
        assert_eq!(m.predict([-0.5, 0.0]), "a");
        assert_eq!(m.predict([0.5, 3.0]), "b");
        assert!(boundary(&m).abs() < 1e-12);
    }

    #[test]
    fn tie_goes_to_lowest_index() {
        let m = two_class(0.5);
        let s = m.scores([0.0, 7.0]);
        assert_eq!(s[0], s[1]);
        assert_eq!(m.predict_index([0.0, 7.0]), 0);
    }

    #[test]
    fn larger_prior_pushes_boundary_away() {
        // tripling a's prior relative to b: boundary at ln(3)/2 toward b
        let m = two_class(0.75);
        assert!((boundary(&m) - 3f64.ln() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn fit_recovers_means_and_priors() {
        let pts = [[-1.0, 1.0], [-1.0, -1.0], [1.0, 1.0], [1.0, -1.0], [3.0, 0.0], [5.0, 0.0]];
        let labels: Vec<String> = ["a", "a", "b", "b", "b", "b"].iter().map(|s| s.to_string()).collect();
        let m = linear_regions_fit(&pts, &labels, DEFAULT_RIDGE).unwrap();
        assert_eq!(m.means[0], [-1.0, 0.0]);
        assert_eq!(m.means[1], [2.5, 0.0]);
        assert!((m.priors[0] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.predict([-2.0, 0.0]), "a");
    }

    #[test]
    fn singular_without_ridge() {
        let pts = [[0.0, 0.0], [1.0, 0.0], [5.0, 0.0], [6.0, 0.0]];
        let labels: Vec<String> = ["a", "a", "b", "b"].iter().map(|s| s.to_string()).collect();
        assert!(linear_regions_fit(&pts, &labels, 0.0).is_err());
        assert!(linear_regions_fit(&pts, &labels, DEFAULT_RIDGE).is_ok());
    }

    #[test]
    fn raster_and_serde_round_trip() {
        let m = two_class(0.5);
        let r = m.raster((-2.0, 2.0), (-1.0, 1.0), 5, 3);
        assert_eq!(r.labels.len(), 3);
        assert_eq!(r.labels[0], vec![0, 0, 0, 1, 1]);
        let back: LinearRegionClassifier = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(back.ready().unwrap().predict([0.3, 0.0]), "b");
    }

    proptest::proptest! {
        #[test]
        fn decisions_invariant_to_score_scaling(x in -5.0..5.0f64, y in -5.0..5.0f64, c in 0.01..100.0f64) {
            let m = LinearRegionClassifier::from_parts(
                vec!["c".into(), "e".into(), "t".into()],
                vec![[-2.0, 0.0], [1.0, -0.5], [2.0, 2.0]],
                [[0.5, 0.1], [0.1, 0.4]],
                vec![0.5, 0.3, 0.2],
            ).unwrap();
            let s = m.scores([x, y]);
            let scaled: Vec<f64> = s.iter().map(|v| v * c).collect();
            let arg = |v: &[f64]| (1..v.len()).fold(0, |b, i| if v[i] > v[b] { i } else { b });
            proptest::prop_assert_eq!(arg(&scaled), m.predict_index([x, y]));
        }
    }
}
