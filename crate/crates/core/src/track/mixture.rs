use nalgebra::{Matrix2, Vector2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::model::CategoryModel;
use crate::error::{Error, Result};

pub(crate) fn mat2(c: &[[f64; 2]; 2]) -> Matrix2<f64> {
    Matrix2::new(c[0][0], c[0][1], c[1][0], c[1][1])
}

pub(crate) fn arr2(m: &Matrix2<f64>) -> [[f64; 2]; 2] {
    [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]]
}

/// Bivariate normal with an SPD covariance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaussian2 {
    pub mean: [f64; 2],
    pub cov: [[f64; 2]; 2],
}

impl Gaussian2 {
    pub fn new(mean: [f64; 2], cov: [[f64; 2]; 2]) -> Result<Self> {
        let g = Self { mean, cov };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if (self.cov[0][1] - self.cov[1][0]).abs() > 1e-12 * (self.cov[0][0].abs() + self.cov[1][1].abs()) {
            return Err(Error::invalid("covariance is not symmetric"));
        }
        let finite = self.mean.iter().chain(self.cov.iter().flatten()).all(|v| v.is_finite());
        if !finite || mat2(&self.cov).cholesky().is_none() {
            return Err(Error::invalid("covariance is not positive definite"));
        }
        Ok(())
    }

    pub fn log_pdf(&self, x: [f64; 2]) -> f64 {
        let c = &self.cov;
        let det = c[0][0] * c[1][1] - c[0][1] * c[1][0];
        let d = [x[0] - self.mean[0], x[1] - self.mean[1]];
        let maha = (c[1][1] * d[0] * d[0] - (c[0][1] + c[1][0]) * d[0] * d[1] + c[0][0] * d[1] * d[1]) / det;
        -0.5 * maha - 0.5 * det.ln() - (2.0 * std::f64::consts::PI).ln()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 2] {
        let l = mat2(&self.cov).cholesky().expect("validated covariance").l();
        let e = Vector2::new(
            Distribution::<f64>::sample(&StandardNormal, rng),
            Distribution::<f64>::sample(&StandardNormal, rng),
        );
        let v = l * e;
        [self.mean[0] + v[0], self.mean[1] + v[1]]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture2D {
    pub weights: Vec<f64>,
    pub components: Vec<Gaussian2>,
}

impl GaussianMixture2D {
    pub fn new(weights: Vec<f64>, components: Vec<Gaussian2>) -> Result<Self> {
        if weights.is_empty() || weights.len() != components.len() {
            return Err(Error::invalid("mixture needs one weight per component"));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::invalid("mixture weights must be non-negative"));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("mixture weights sum to {sum}")));
        }
        for c in &components {
            c.validate()?;
        }
        Ok(Self { weights, components })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 2] {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (w, c) in self.weights.iter().zip(&self.components) {
            acc += w;
            if u < acc {
                return c.sample(rng);
            }
        }
        let last = self.weights.iter().rposition(|w| *w > 0.0).unwrap_or(0);
        self.components[last].sample(rng)
    }
}

/// Single Gaussian with the mixture's mean and covariance.
pub fn reduce_mixture(m: &GaussianMixture2D) -> Gaussian2 {
    let mut mean = Vector2::zeros();
    for (w, c) in m.weights.iter().zip(&m.components) {
        mean += *w * Vector2::new(c.mean[0], c.mean[1]);
    }
    let mut cov = Matrix2::zeros();
    for (w, c) in m.weights.iter().zip(&m.components) {
        let d = Vector2::new(c.mean[0], c.mean[1]) - mean;
        cov += *w * (mat2(&c.cov) + d * d.transpose());
    }
    cov = 0.5 * (cov + cov.transpose());
    Gaussian2 {
        mean: [mean[0], mean[1]],
        cov: arr2(&cov),
    }
}

/// Normalised statement-type weights at state position `x`, plus whether
/// they fell back to p(s) because every weight underflowed.
///
/// The unnormalised weight of type s is
/// `p(x|s) p(s) * sum_k p(x|k) p(k)`; the k sum does not depend on s and so
/// drops out after normalisation, but it is evaluated as written.
pub fn statement_weights(x: [f64; 2], model: &CategoryModel) -> ([f64; 3], bool) {
    let t = &model.tables;
    let g = &model.gaussians;
    let k_terms: Vec<f64> = (0..3).map(|k| g.x_given_k[k].log_pdf(x) + t.p_k[k].ln()).collect();
    let k_log = log_sum_exp(&k_terms);
    let mut log_w = [0.0; 3];
    for (s, lw) in log_w.iter_mut().enumerate() {
        *lw = g.x_given_s[s].log_pdf(x) + t.p_s[s].ln() + k_log;
    }
    let max = log_w.iter().copied().filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    if max.is_finite() {
        let mut w = [0.0; 3];
        for s in 0..3 {
            w[s] = if log_w[s].is_nan() { 0.0 } else { (log_w[s] - max).exp() };
        }
        let sum: f64 = w.iter().sum();
        if sum > 0.0 && sum.is_finite() {
            w.iter_mut().for_each(|v| *v /= sum);
            return (w, false);
        }
    }
    log::warn!("measurement mixture weights underflowed at {x:?}; using p(s)");
    let sum: f64 = t.p_s.iter().sum();
    let mut w = t.p_s;
    w.iter_mut().for_each(|v| *v /= sum);
    (w, true)
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Distribution of a measurement z given state position `x`: one
/// component per statement type, all sharing the measurement covariance.
pub fn measurement_mixture(x: [f64; 2], model: &CategoryModel) -> GaussianMixture2D {
    let (w, _) = statement_weights(x, model);
    let g = &model.gaussians;
    GaussianMixture2D {
        weights: w.to_vec(),
        components: (0..3)
            .map(|s| Gaussian2 {
                mean: g.mu_z[s],
                cov: g.sigma_z,
            })
            .collect(),
    }
}
