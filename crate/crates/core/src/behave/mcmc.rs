use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synth::normal;

pub const TARGET_ACCEPTANCE: f64 = 0.23;

/// A log density that can be updated one coordinate at a time.
pub trait ComponentTarget {
    fn dim(&self) -> usize;
    /// Sets the full state and returns its log density.
    fn reset(&mut self, theta: &[f64]) -> f64;
    /// Log density with coordinate `j` moved to `value`; the move is held
    /// pending until [`ComponentTarget::settle`].
    fn propose(&mut self, j: usize, value: f64) -> f64;
    fn settle(&mut self, accept: bool);
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub warmup: usize,
    pub samples: usize,
    pub initial_step: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            warmup: 12_000,
            samples: 12_000,
            initial_step: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutput {
    /// Post-warm-up draws, one row per iteration.
    pub draws: Vec<Vec<f64>>,
    /// Post-warm-up acceptance rate over all coordinate updates.
    pub acceptance: f64,
    pub steps: Vec<f64>,
}

/// Random-walk Metropolis, one coordinate at a time. During warm-up each
/// coordinate's step size follows a Robbins-Monro recursion toward
/// [`TARGET_ACCEPTANCE`]; steps are frozen afterwards.
pub fn run_chain<T: ComponentTarget>(
    target: &mut T,
    init: &[f64],
    config: &SamplerConfig,
    rng: &mut ChaCha8Rng,
) -> Result<ChainOutput> {
    let d = target.dim();
    let mut theta = init.to_vec();
    let mut logp = target.reset(&theta);
    if !logp.is_finite() {
        return Err(Error::numerical(format!("log density not finite at initial point: {logp}")));
    }
    let mut log_step = vec![config.initial_step.ln(); d];
    let mut accepted = 0usize;
    let mut draws = Vec::with_capacity(config.samples);
    for it in 0..config.warmup + config.samples {
        let warm = it < config.warmup;
        for j in 0..d {
            let proposal = theta[j] + log_step[j].exp() * normal(rng);
            let lp = target.propose(j, proposal);
            let log_ratio = lp - logp;
            let alpha = if log_ratio.is_nan() { 0.0 } else { log_ratio.min(0.0).exp() };
            let accept = rng.random::<f64>() < alpha;
            target.settle(accept);
            if accept {
                theta[j] = proposal;
                logp = lp;
            }
            if warm {
                let gain = ((it + 1) as f64).powf(-0.6);
                log_step[j] += gain * (alpha - TARGET_ACCEPTANCE);
            } else if accept {
                accepted += 1;
            }
        }
        if !warm {
            draws.push(theta.clone());
        }
    }
    let acceptance = if config.samples == 0 || d == 0 {
        0.0
    } else {
        accepted as f64 / (config.samples * d) as f64
    };
    Ok(ChainOutput {
        draws,
        acceptance,
        steps: log_step.iter().map(|s| s.exp()).collect(),
    })
}

/// Split-R-hat of one scalar quantity over several equal-length chains.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let half = chains.iter().map(Vec::len).min().unwrap_or(0) / 2;
    if half < 2 {
        return f64::NAN;
    }
    let mut parts: Vec<&[f64]> = Vec::new();
    for c in chains {
        parts.push(&c[..half]);
        parts.push(&c[c.len() - half..]);
    }
    let n = half as f64;
    let means: Vec<f64> = parts.iter().map(|p| p.iter().sum::<f64>() / n).collect();
    let within: f64 = parts
        .iter()
        .zip(&means)
        .map(|(p, m)| p.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0))
        .sum::<f64>()
        / parts.len() as f64;
    let grand = means.iter().sum::<f64>() / means.len() as f64;
    let between = n * means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (means.len() as f64 - 1.0);
    if within <= 0.0 {
        return if between <= 0.0 { 1.0 } else { f64::INFINITY };
    }
    let var_plus = (n - 1.0) / n * within + between / n;
    (var_plus / within).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    /// Two independent means with N(0, tau^2) priors and Gaussian data of
    /// known variance: the posterior is Gaussian in closed form.
    struct Conjugate {
        sums: [f64; 2],
        n: f64,
        noise_var: f64,
        prior_var: f64,
        theta: [f64; 2],
        pending: Option<(usize, f64)>,
    }

    impl Conjugate {
        fn logp(&self, t: &[f64; 2]) -> f64 {
            (0..2)
                .map(|j| {
                    // sum (y - t)^2 up to a constant in t
                    let lik = -(self.n * t[j] * t[j] - 2.0 * t[j] * self.sums[j]) / (2.0 * self.noise_var);
                    lik - t[j] * t[j] / (2.0 * self.prior_var)
                })
                .sum()
        }
    }

    impl ComponentTarget for Conjugate {
        fn dim(&self) -> usize {
            2
        }
        fn reset(&mut self, theta: &[f64]) -> f64 {
            self.theta = [theta[0], theta[1]];
            self.logp(&self.theta)
        }
        fn propose(&mut self, j: usize, value: f64) -> f64 {
            let mut t = self.theta;
            t[j] = value;
            self.pending = Some((j, value));
            self.logp(&t)
        }
        fn settle(&mut self, accept: bool) {
            if let (true, Some((j, v))) = (accept, self.pending.take()) {
                self.theta[j] = v;
            }
            self.pending = None;
        }
    }

    /// Standard error of a chain mean from non-overlapping batch means.
    fn batch_se(x: &[f64]) -> f64 {
        let b = 50;
        let size = x.len() / b;
        let means: Vec<f64> = x.chunks(size).take(b).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
        let m = means.iter().sum::<f64>() / b as f64;
        (means.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (b as f64 - 1.0) / b as f64).sqrt()
    }

    #[test]
    fn conjugate_posterior_matches_closed_form() {
        let (n, noise_var, prior_var) = (20.0, 4.0, 1.0);
        let sums = [20.0 * 1.3, 20.0 * -0.7];
        let mut target = Conjugate {
            sums,
            n,
            noise_var,
            prior_var,
            theta: [0.0; 2],
            pending: None,
        };
        let config = SamplerConfig {
            warmup: 2000,
            samples: 40_000,
            initial_step: 1.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let out = run_chain(&mut target, &[0.0, 0.0], &config, &mut rng).unwrap();
        let post_var = 1.0 / (n / noise_var + 1.0 / prior_var);
        for j in 0..2 {
            let post_mean = post_var * sums[j] / noise_var;
            let x: Vec<f64> = out.draws.iter().map(|d| d[j]).collect();
            let mean = x.iter().sum::<f64>() / x.len() as f64;
            let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (x.len() - 1) as f64;
            let se = batch_se(&x);
            assert!((mean - post_mean).abs() < 3.0 * se, "mean {mean} vs {post_mean} (se {se})");
            let sq: Vec<f64> = x.iter().map(|v| (v - mean).powi(2)).collect();
            let var_se = batch_se(&sq);
            assert!((var - post_var).abs() < 3.0 * var_se, "var {var} vs {post_var} (se {var_se})");
        }
        assert!((out.acceptance - TARGET_ACCEPTANCE).abs() < 0.1, "{}", out.acceptance);
    }

    #[test]
    fn rhat_detects_disagreement() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let good: Vec<Vec<f64>> = (0..4).map(|_| (0..500).map(|_| normal(&mut rng)).collect()).collect();
        assert!(split_rhat(&good) < 1.05);
        let mut bad = good.clone();
        bad[0].iter_mut().for_each(|v| *v += 3.0);
        assert!(split_rhat(&bad) > 1.1);
    }
}
