use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::data::{BehaveRecord, BehaveSchema};
use super::mcmc::{run_chain, split_rhat, ComponentTarget, SamplerConfig};
use crate::error::{Error, Result};
use crate::synth::normal;

pub const BRANCHES: [&str; 3] = ["m", "o", "c"];

/// Branch weights (bias last) and the branch mixing simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BnParams {
    pub w_m: Vec<f64>,
    pub w_o: Vec<f64>,
    pub w_c: Vec<f64>,
    pub w_b: [f64; 3],
}

impl BnParams {
    pub fn zeros(dims: [usize; 3]) -> Self {
        Self {
            w_m: vec![0.0; dims[0] + 1],
            w_o: vec![0.0; dims[1] + 1],
            w_c: vec![0.0; dims[2] + 1],
            w_b: [1.0 / 3.0; 3],
        }
    }

    pub fn branch(&self, b: usize) -> &[f64] {
        match b {
            0 => &self.w_m,
            1 => &self.w_o,
            _ => &self.w_c,
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.w_m.len() - 1, self.w_o.len() - 1, self.w_c.len() - 1]
    }

    /// Flat layout used by posterior draws: branch weights with biases,
    /// then the three mixing weights.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.w_m.iter().chain(&self.w_o).chain(&self.w_c).copied().collect();
        v.extend(self.w_b);
        v
    }

    pub fn from_vec(dims: [usize; 3], v: &[f64]) -> Result<Self> {
        let want = dims.iter().map(|d| d + 1).sum::<usize>() + 3;
        if v.len() != want {
            return Err(Error::DimensionMismatch {
                id: Some("parameters".into()),
                expected: want,
                got: v.len(),
            });
        }
        let (m, rest) = v.split_at(dims[0] + 1);
        let (o, rest) = rest.split_at(dims[1] + 1);
        let (c, b) = rest.split_at(dims[2] + 1);
        Ok(Self {
            w_m: m.to_vec(),
            w_o: o.to_vec(),
            w_c: c.to_vec(),
            w_b: [b[0], b[1], b[2]],
        })
    }

    pub fn names(schema: &BehaveSchema) -> Vec<String> {
        let mut out = Vec::new();
        for (b, names) in [&schema.motivation, &schema.opportunity, &schema.capability].iter().enumerate() {
            out.extend(names.iter().map(|n| format!("w_{}[{n}]", BRANCHES[b])));
            out.push(format!("w_{}[bias]", BRANCHES[b]));
        }
        out.extend(BRANCHES.iter().map(|b| format!("w_b[{b}]")));
        out
    }
}

fn logistic(l: f64) -> f64 {
    1.0 / (1.0 + (-l).exp())
}

/// Pre-logistic branch scores `l_B = w_B . [x_B, 1]`.
pub fn branch_logits(params: &BnParams, record: &BehaveRecord) -> Result<[f64; 3]> {
    let mut l = [0.0; 3];
    for (b, lb) in l.iter_mut().enumerate() {
        let w = params.branch(b);
        let x = record.branch(b);
        if w.len() != x.len() + 1 {
            return Err(Error::DimensionMismatch {
                id: Some(format!("{} branch {}", record.person_id, BRANCHES[b])),
                expected: w.len() - 1,
                got: x.len(),
            });
        }
        *lb = w[..x.len()].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + w[x.len()];
    }
    Ok(l)
}

/// Probability of voting for Brexit: `sum_B w_b[B] * logistic(l_B)`.
pub fn bn_forward(params: &BnParams, record: &BehaveRecord) -> Result<f64> {
    let l = branch_logits(params, record)?;
    Ok((0..3).map(|b| params.w_b[b] * logistic(l[b])).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    /// Relative branch importances; normalised before use.
    pub alpha_prime: [f64; 3],
    pub kappa: f64,
    pub weight_sd: f64,
    /// 1 for the posterior, 0 to sample the prior alone.
    pub likelihood_weight: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            alpha_prime: [0.787, 0.039, 0.012],
            kappa: 10.0,
            weight_sd: 1.0,
            likelihood_weight: 1.0,
        }
    }
}

impl PriorConfig {
    pub fn dirichlet(&self) -> [f64; 3] {
        let s: f64 = self.alpha_prime.iter().sum();
        self.alpha_prime.map(|a| self.kappa * a / s)
    }

    fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0) || self.alpha_prime.iter().any(|a| !(*a > 0.0)) || !(self.weight_sd > 0.0) {
            return Err(Error::invalid("prior concentrations and scales must be positive"));
        }
        if !(self.likelihood_weight >= 0.0) {
            return Err(Error::invalid("likelihood weight must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BnFitConfig {
    pub chains: usize,
    pub sampler: SamplerConfig,
    pub seed: u64,
    pub prior: PriorConfig,
    pub rhat_threshold: f64,
}

impl Default for BnFitConfig {
    fn default() -> Self {
        Self {
            chains: 4,
            sampler: SamplerConfig::default(),
            seed: 0,
            prior: PriorConfig::default(),
            rhat_threshold: 1.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSamples {
    pub dims: [usize; 3],
    pub names: Vec<String>,
    /// One row per draw in [`BnParams::to_vec`] layout.
    pub draws: Vec<Vec<f64>>,
    pub chain: Vec<usize>,
    pub acceptance: Vec<f64>,
    pub rhat: Vec<f64>,
    pub converged: bool,
}

impl PosteriorSamples {
    pub fn params(&self, i: usize) -> Result<BnParams> {
        BnParams::from_vec(self.dims, &self.draws[i])
    }

    pub fn mean(&self) -> Vec<f64> {
        let n = self.draws.len() as f64;
        (0..self.names.len())
            .map(|j| self.draws.iter().map(|d| d[j]).sum::<f64>() / n)
            .collect()
    }

    /// Central credible interval of parameter `j`.
    pub fn interval(&self, j: usize, mass: f64) -> (f64, f64) {
        let mut v: Vec<f64> = self.draws.iter().map(|d| d[j]).collect();
        v.sort_by(f64::total_cmp);
        let tail = (1.0 - mass) / 2.0;
        (quantile(&v, tail), quantile(&v, 1.0 - tail))
    }
}

/// Linear-interpolated quantile of sorted data.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Posterior of the branch model. Internally each branch bias is
/// reparameterised around the feature means, which leaves the target
/// unchanged but removes most bias/weight correlation.
struct BnTarget {
    dims: [usize; 3],
    /// Centred features per branch: x[b][i][j].
    x: [Vec<Vec<f64>>; 3],
    means: [Vec<f64>; 3],
    n_v: Vec<f64>,
    n_b: Vec<f64>,
    prior: PriorConfig,
    alpha: [f64; 3],
    theta: Vec<f64>,
    l: [Vec<f64>; 3],
    h: [Vec<f64>; 3],
    wb: [f64; 3],
    loglik: f64,
    logprior: f64,
    pending: Option<Pending>,
}

struct Pending {
    j: usize,
    value: f64,
    branch: Option<(usize, Vec<f64>, Vec<f64>)>,
    wb: [f64; 3],
    loglik: f64,
    logprior: f64,
}

impl BnTarget {
    fn new(records: &[&BehaveRecord], prior: PriorConfig) -> Self {
        let dims = [records[0].x_m.len(), records[0].x_o.len(), records[0].x_c.len()];
        let n = records.len() as f64;
        let means: [Vec<f64>; 3] =
            std::array::from_fn(|b| (0..dims[b]).map(|j| records.iter().map(|r| r.branch(b)[j]).sum::<f64>() / n).collect());
        let x = std::array::from_fn(|b| {
            records
                .iter()
                .map(|r| r.branch(b).iter().zip(&means[b]).map(|(v, m)| v - m).collect())
                .collect()
        });
        Self {
            dims,
            x,
            means,
            n_v: records.iter().map(|r| r.n_v as f64).collect(),
            n_b: records.iter().map(|r| r.n_b as f64).collect(),
            alpha: prior.dirichlet(),
            prior,
            theta: Vec::new(),
            l: Default::default(),
            h: Default::default(),
            wb: [0.0; 3],
            loglik: 0.0,
            logprior: 0.0,
            pending: None,
        }
    }

    fn offset(&self, b: usize) -> usize {
        (0..b).map(|c| self.dims[c] + 1).sum()
    }

    /// Maps internal coordinates to (branch, feature index or bias).
    fn locate(&self, j: usize) -> Option<(usize, usize)> {
        let mut start = 0;
        for b in 0..3 {
            if j < start + self.dims[b] + 1 {
                return Some((b, j - start));
            }
            start += self.dims[b] + 1;
        }
        None
    }

    fn simplex(eta: [f64; 2]) -> [f64; 3] {
        let m = eta[0].max(eta[1]).max(0.0);
        let e = [(eta[0] - m).exp(), (eta[1] - m).exp(), (-m).exp()];
        let s = e[0] + e[1] + e[2];
        e.map(|v| v / s)
    }

    fn eta_of(wb: [f64; 3]) -> [f64; 2] {
        [(wb[0] / wb[2]).ln(), (wb[1] / wb[2]).ln()]
    }

    fn branch_prior(&self, theta: &[f64], b: usize) -> f64 {
        let o = self.offset(b);
        let w = &theta[o..o + self.dims[b]];
        let bias = theta[o + self.dims[b]] - w.iter().zip(&self.means[b]).map(|(a, m)| a * m).sum::<f64>();
        let var = self.prior.weight_sd * self.prior.weight_sd;
        -0.5 * (w.iter().map(|v| v * v).sum::<f64>() + bias * bias) / var
    }

    /// Dirichlet log density on the simplex plus the log Jacobian of the
    /// additive log-ratio map.
    fn simplex_prior(&self, wb: [f64; 3]) -> f64 {
        (0..3).map(|i| self.alpha[i] * wb[i].ln()).sum()
    }

    fn loglik_with(&self, h: [&[f64]; 3], wb: [f64; 3]) -> f64 {
        if self.prior.likelihood_weight == 0.0 {
            return 0.0;
        }
        let mut ll = 0.0;
        for i in 0..self.n_v.len() {
            let p: f64 = (0..3).map(|b| wb[b] * h[b][i]).sum();
            let q: f64 = (0..3).map(|b| wb[b] * (1.0 - h[b][i])).sum();
            if self.n_b[i] > 0.0 {
                ll += self.n_b[i] * p.ln();
            }
            let rest = self.n_v[i] - self.n_b[i];
            if rest > 0.0 {
                ll += rest * q.ln();
            }
        }
        self.prior.likelihood_weight * ll
    }

    fn branch_scores(&self, theta: &[f64], b: usize) -> (Vec<f64>, Vec<f64>) {
        let o = self.offset(b);
        let w = &theta[o..o + self.dims[b]];
        let bias = theta[o + self.dims[b]];
        let l: Vec<f64> = self.x[b]
            .iter()
            .map(|x| x.iter().zip(w).map(|(a, c)| a * c).sum::<f64>() + bias)
            .collect();
        let h = l.iter().map(|v| logistic(*v)).collect();
        (l, h)
    }

    /// Internal coordinates from model parameters.
    fn internal(&self, p: &BnParams) -> Vec<f64> {
        let mut v = Vec::new();
        for b in 0..3 {
            let w = p.branch(b);
            let d = self.dims[b];
            v.extend_from_slice(&w[..d]);
            v.push(w[d] + w[..d].iter().zip(&self.means[b]).map(|(a, m)| a * m).sum::<f64>());
        }
        v.extend(Self::eta_of(p.w_b));
        v
    }

    fn external(&self, theta: &[f64]) -> Vec<f64> {
        let mut v = Vec::with_capacity(theta.len() + 1);
        for b in 0..3 {
            let o = self.offset(b);
            let d = self.dims[b];
            let w = &theta[o..o + d];
            v.extend_from_slice(w);
            v.push(theta[o + d] - w.iter().zip(&self.means[b]).map(|(a, m)| a * m).sum::<f64>());
        }
        let n = theta.len();
        v.extend(Self::simplex([theta[n - 2], theta[n - 1]]));
        v
    }

    fn total(&self) -> f64 {
        self.loglik + self.logprior
    }
}

impl ComponentTarget for BnTarget {
    fn dim(&self) -> usize {
        self.dims.iter().map(|d| d + 1).sum::<usize>() + 2
    }

    fn reset(&mut self, theta: &[f64]) -> f64 {
        self.theta = theta.to_vec();
        for b in 0..3 {
            let (l, h) = self.branch_scores(theta, b);
            self.l[b] = l;
            self.h[b] = h;
        }
        let n = theta.len();
        self.wb = Self::simplex([theta[n - 2], theta[n - 1]]);
        self.loglik = self.loglik_with([&self.h[0], &self.h[1], &self.h[2]], self.wb);
        self.logprior = (0..3).map(|b| self.branch_prior(theta, b)).sum::<f64>() + self.simplex_prior(self.wb);
        self.total()
    }

    fn propose(&mut self, j: usize, value: f64) -> f64 {
        let delta = value - self.theta[j];
        let old = self.theta[j];
        self.theta[j] = value;
        let pending = match self.locate(j) {
            Some((b, k)) => {
                let l: Vec<f64> = if k < self.dims[b] {
                    self.l[b].iter().zip(&self.x[b]).map(|(l, x)| l + delta * x[k]).collect()
                } else {
                    self.l[b].iter().map(|l| l + delta).collect()
                };
                let h: Vec<f64> = l.iter().map(|v| logistic(*v)).collect();
                let mut hs: [&[f64]; 3] = [&self.h[0], &self.h[1], &self.h[2]];
                hs[b] = &h;
                let loglik = self.loglik_with(hs, self.wb);
                let logprior = self.logprior - self.branch_prior_at(b, j, old) + self.branch_prior(&self.theta, b);
                Pending {
                    j,
                    value,
                    branch: Some((b, l, h)),
                    wb: self.wb,
                    loglik,
                    logprior,
                }
            }
            None => {
                let n = self.theta.len();
                let wb = Self::simplex([self.theta[n - 2], self.theta[n - 1]]);
                let loglik = self.loglik_with([&self.h[0], &self.h[1], &self.h[2]], wb);
                let logprior = self.logprior - self.simplex_prior(self.wb) + self.simplex_prior(wb);
                Pending {
                    j,
                    value,
                    branch: None,
                    wb,
                    loglik,
                    logprior,
                }
            }
        };
        self.theta[j] = old;
        let total = pending.loglik + pending.logprior;
        self.pending = Some(pending);
        if total.is_nan() {
            f64::NEG_INFINITY
        } else {
            total
        }
    }

    fn settle(&mut self, accept: bool) {
        let Some(p) = self.pending.take() else { return };
        if !accept {
            return;
        }
        self.theta[p.j] = p.value;
        if let Some((b, l, h)) = p.branch {
            self.l[b] = l;
            self.h[b] = h;
        }
        self.wb = p.wb;
        self.loglik = p.loglik;
        self.logprior = p.logprior;
    }
}

impl BnTarget {
    /// Branch prior with coordinate `j` temporarily set to `value`.
    fn branch_prior_at(&mut self, b: usize, j: usize, value: f64) -> f64 {
        let cur = self.theta[j];
        self.theta[j] = value;
        let v = self.branch_prior(&self.theta, b);
        self.theta[j] = cur;
        v
    }
}

/// Samples the posterior of the branch model with independent adaptive
/// Metropolis chains run in parallel.
pub fn bn_fit(records: &[BehaveRecord], config: &BnFitConfig) -> Result<PosteriorSamples> {
    config.prior.validate()?;
    if config.chains == 0 || config.sampler.samples < 4 {
        return Err(Error::invalid("need at least one chain and four draws"));
    }
    let used: Vec<&BehaveRecord> = records.iter().filter(|r| r.n_v > 0).collect();
    if used.is_empty() {
        return Err(Error::InsufficientData("no record has any votes".into()));
    }
    let dims = [used[0].x_m.len(), used[0].x_o.len(), used[0].x_c.len()];
    for r in &used {
        r.validate()?;
        if [r.x_m.len(), r.x_o.len(), r.x_c.len()] != dims {
            return Err(Error::DimensionMismatch {
                id: Some(r.person_id.clone()),
                expected: dims.iter().sum(),
                got: r.x_m.len() + r.x_o.len() + r.x_c.len(),
            });
        }
    }
    let alpha = config.prior.dirichlet();
    let outputs: Vec<Result<(Vec<Vec<f64>>, f64)>> = (0..config.chains)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(c as u64 + 1);
            let mut target = BnTarget::new(&used, config.prior);
            // dispersed start: weights around zero, mixing near its prior mean
            let mut start = BnParams::zeros(dims);
            for b in 0..3 {
                let w = match b {
                    0 => &mut start.w_m,
                    1 => &mut start.w_o,
                    _ => &mut start.w_c,
                };
                w.iter_mut().for_each(|v| *v = 0.5 * normal(&mut rng));
            }
            let s: f64 = alpha.iter().sum();
            let eta0 = BnTarget::eta_of(alpha.map(|a| a / s));
            let eta = [eta0[0] + 0.5 * normal(&mut rng), eta0[1] + 0.5 * normal(&mut rng)];
            start.w_b = BnTarget::simplex(eta);
            let init = target.internal(&start);
            let out = run_chain(&mut target, &init, &config.sampler, &mut rng)?;
            let draws = out.draws.iter().map(|d| target.external(d)).collect();
            Ok((draws, out.acceptance))
        })
        .collect();
    let mut per_chain = Vec::new();
    let mut acceptance = Vec::new();
    for o in outputs {
        let (d, a) = o?;
        per_chain.push(d);
        acceptance.push(a);
    }
    let n_params = per_chain[0][0].len();
    let rhat: Vec<f64> = (0..n_params)
        .map(|j| {
            let chains: Vec<Vec<f64>> = per_chain.iter().map(|c| c.iter().map(|d| d[j]).collect()).collect();
            split_rhat(&chains)
        })
        .collect();
    let converged = config.chains > 1 && rhat.iter().all(|r| *r < config.rhat_threshold);
    if !converged {
        log::warn!("posterior not converged: max split-R-hat {:.3}", rhat.iter().copied().fold(0.0, f64::max));
    }
    let mut draws = Vec::new();
    let mut chain = Vec::new();
    for (c, d) in per_chain.into_iter().enumerate() {
        chain.extend(std::iter::repeat_n(c, d.len()));
        draws.extend(d);
    }
    let schema = BehaveSchema {
        motivation: (0..dims[0]).map(|i| format!("x{i}")).collect(),
        opportunity: (0..dims[1]).map(|i| format!("x{i}")).collect(),
        capability: (0..dims[2]).map(|i| format!("x{i}")).collect(),
    };
    Ok(PosteriorSamples {
        dims,
        names: BnParams::names(&schema),
        draws,
        chain,
        acceptance,
        rhat,
        converged,
    })
}

/// Posterior predictive summary of P_b for one person.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub mean: f64,
    /// Central 90% interval.
    pub lower: f64,
    pub upper: f64,
}

pub fn bn_predict(samples: &PosteriorSamples, record: &BehaveRecord) -> Result<Prediction> {
    if samples.draws.is_empty() {
        return Err(Error::InsufficientData("no posterior draws".into()));
    }
    let mut p = samples
        .draws
        .iter()
        .map(|d| bn_forward(&BnParams::from_vec(samples.dims, d)?, record))
        .collect::<Result<Vec<f64>>>()?;
    let mean = p.iter().sum::<f64>() / p.len() as f64;
    p.sort_by(f64::total_cmp);
    Ok(Prediction {
        mean,
        lower: quantile(&p, 0.05),
        upper: quantile(&p, 0.95),
    })
}

pub fn rmse(predictions: &[f64], truths: &[f64]) -> Result<f64> {
    if predictions.is_empty() || predictions.len() != truths.len() {
        return Err(Error::invalid("rmse needs equal-length, non-empty inputs"));
    }
    let mse = predictions.iter().zip(truths).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / predictions.len() as f64;
    Ok(mse.sqrt())
}

/// Draws records from the branch model with the given parameters:
/// standard-normal motivation and capability features, Bernoulli(0.5)
/// trust indicators and `n_v` votes each.
pub fn simulate_records(params: &BnParams, n: usize, n_v: u32, seed: u64) -> Vec<BehaveRecord> {
    use rand::Rng;
    let dims = params.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let mut r = BehaveRecord {
                person_id: format!("person_{i:04}"),
                x_m: (0..dims[0]).map(|_| normal(&mut rng)).collect(),
                x_o: (0..dims[1]).map(|_| if rng.random::<bool>() { 1.0 } else { 0.0 }).collect(),
                x_c: (0..dims[2]).map(|_| normal(&mut rng)).collect(),
                n_w: rng.random_range(100..5000),
                n_v,
                n_b: 0,
            };
            let p = bn_forward(params, &r).expect("matching dimensions");
            r.n_b = (0..n_v).filter(|_| rng.random::<f64>() < p).count() as u32;
            r
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(dims: [usize; 3]) -> BehaveRecord {
        BehaveRecord {
            person_id: "p".into(),
            x_m: (0..dims[0]).map(|i| 0.1 * i as f64 - 0.3).collect(),
            x_o: (0..dims[1]).map(|i| (i % 2) as f64).collect(),
            x_c: (0..dims[2]).map(|i| 0.5 - 0.2 * i as f64).collect(),
            n_w: 10,
            n_v: 24,
            n_b: 3,
        }
    }

    #[test]
    fn zero_weights_give_half() {
        let p = BnParams::zeros([13, 27, 3]);
        assert_eq!(bn_forward(&p, &record([13, 27, 3])).unwrap(), 0.5);
    }

    #[test]
    fn bias_limit_is_monotone() {
        let mut p = BnParams::zeros([2, 2, 1]);
        p.w_b = [1.0, 0.0, 0.0];
        let r = record([2, 2, 1]);
        let mut last = 0.0;
        for bias in [0.0, 1.0, 5.0, 20.0, 40.0] {
            p.w_m[2] = bias;
            let v = bn_forward(&p, &r).unwrap();
            assert!(v > last || v == 1.0);
            last = v;
        }
        assert!(last > 1.0 - 1e-12);
    }

    #[test]
    fn hand_evaluated_fixture() {
        let p = BnParams {
            w_m: vec![0.5, -1.0, 0.2],
            w_o: vec![1.5, 0.0, -0.5],
            w_c: vec![2.0, 0.1],
            w_b: [0.6, 0.3, 0.1],
        };
        let r = BehaveRecord {
            person_id: "h".into(),
            x_m: vec![1.0, 0.5],
            x_o: vec![1.0, 0.0],
            x_c: vec![-0.25],
            n_w: 0,
            n_v: 1,
            n_b: 0,
        };
        // l_m = 0.5 - 0.5 + 0.2 = 0.2; l_o = 1.5 - 0.5 = 1.0; l_c = -0.5 + 0.1 = -0.4
        let s = |x: f64| 1.0 / (1.0 + (-x).exp());
        let want = 0.6 * s(0.2) + 0.3 * s(1.0) + 0.1 * s(-0.4);
        assert!((bn_forward(&p, &r).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch() {
        let p = BnParams::zeros([13, 27, 3]);
        assert!(bn_forward(&p, &record([13, 26, 3])).is_err());
    }

    #[test]
    fn flat_layout_round_trip() {
        let p = BnParams {
            w_m: vec![1.0, 2.0],
            w_o: vec![3.0, 4.0, 5.0],
            w_c: vec![6.0],
            w_b: [0.2, 0.3, 0.5],
        };
        assert_eq!(BnParams::from_vec([1, 2, 0], &p.to_vec()).unwrap(), p);
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[0.3, 0.4], &[0.3, 0.4]).unwrap(), 0.0);
        assert!((rmse(&[0.5; 4], &[0.0, 1.0, 0.0, 1.0]).unwrap() - 0.5).abs() < 1e-15);
        assert!(rmse(&[], &[]).is_err());
    }

    #[test]
    fn incremental_target_matches_full_evaluation() {
        let truth = BnParams {
            w_m: vec![0.4, -0.3, 0.1],
            w_o: vec![0.8, -0.2, 0.0],
            w_c: vec![0.5, 0.2],
            w_b: [0.5, 0.3, 0.2],
        };
        let recs = simulate_records(&truth, 30, 10, 1);
        let refs: Vec<&BehaveRecord> = recs.iter().collect();
        let mut t = BnTarget::new(&refs, PriorConfig::default());
        let mut theta = t.internal(&truth);
        t.reset(&theta);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for step in 0..50 {
            let j = step % t.dim();
            let v = theta[j] + 0.3 * normal(&mut rng);
            let lp = t.propose(j, v);
            let accept = step % 3 != 0;
            t.settle(accept);
            if accept {
                theta[j] = v;
            }
            let mut fresh = BnTarget::new(&refs, PriorConfig::default());
            let full = fresh.reset(&theta);
            if accept {
                assert!((lp - full).abs() < 1e-9 * full.abs().max(1.0), "{lp} vs {full}");
            }
            assert!((t.total() - full).abs() < 1e-9 * full.abs().max(1.0));
        }
        // external/internal maps are inverse
        let back = BnParams::from_vec([2, 2, 1], &t.external(&t.internal(&truth))).unwrap();
        for (a, b) in back.to_vec().iter().zip(truth.to_vec()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn single_draw_prediction_equals_forward() {
        let p = BnParams::zeros([2, 2, 1]);
        let samples = PosteriorSamples {
            dims: [2, 2, 1],
            names: vec![],
            draws: vec![p.to_vec()],
            chain: vec![0],
            acceptance: vec![0.2],
            rhat: vec![],
            converged: false,
        };
        let r = record([2, 2, 1]);
        let pred = bn_predict(&samples, &r).unwrap();
        assert_eq!(pred.mean, bn_forward(&p, &r).unwrap());
        assert_eq!((pred.lower, pred.upper), (pred.mean, pred.mean));
    }

    proptest::proptest! {
        #[test]
        fn forward_monotone_in_positive_weight(x0 in -3.0..3.0f64, h in 0.01..1.0f64, w in 0.01..3.0f64) {
            let mut p = BnParams::zeros([1, 1, 1]);
            p.w_m[0] = w;
            p.w_b = [0.5, 0.3, 0.2];
            let mut r = record([1, 1, 1]);
            r.x_m[0] = x0;
            let a = bn_forward(&p, &r).unwrap();
            r.x_m[0] = x0 + h;
            let b = bn_forward(&p, &r).unwrap();
            proptest::prop_assert!(b > a);
            proptest::prop_assert!(a > 0.0 && a < 1.0);
        }
    }
}
