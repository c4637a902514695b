//! C-support vector classification trained by SMO with second-order working
//! set selection, combined one-vs-one for multi-class problems.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TAU: f64 = 1e-12;
const DIAG_JITTER: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Kernel {
    Rbf { gamma: f64 },
    Linear,
}

impl Kernel {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            Kernel::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            Kernel::Rbf { gamma } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-gamma * d2).exp()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SvmConfig {
    pub kernel: Kernel,
    pub c: f64,
    /// KKT violation tolerance.
    pub tol: f64,
    /// Iteration cap per binary problem; `None` scales with problem size.
    pub max_iter: Option<usize>,
}

impl SvmConfig {
    pub fn new(kernel: Kernel, c: f64) -> Self {
        Self {
            kernel,
            c,
            tol: 1e-3,
            max_iter: None,
        }
    }
}

/// One binary machine separating `positive` (decision > 0) from `negative`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryMachine {
    pub positive: usize,
    pub negative: usize,
    pub support_vectors: Vec<Vec<f64>>,
    /// `alpha_i * y_i` for each support vector.
    pub dual_coef: Vec<f64>,
    pub rho: f64,
    /// Indices of the support vectors in the training set.
    pub support_indices: Vec<usize>,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelClassifier {
    pub kernel: Kernel,
    pub c: f64,
    pub classes: Vec<String>,
    pub machines: Vec<BinaryMachine>,
}

struct BinarySolution {
    alpha: Vec<f64>,
    rho: f64,
    iterations: usize,
}

/// Solves the binary C-SVC dual on a precomputed kernel matrix.
fn solve_binary(k: &[Vec<f64>], y: &[f64], c: f64, tol: f64, max_iter: usize) -> Result<BinarySolution> {
    let n = y.len();
    let q = |i: usize, j: usize| y[i] * y[j] * k[i][j];
    let qd: Vec<f64> = (0..n).map(|i| k[i][i]).collect();
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let upper = |a: f64| a >= c;
    let lower = |a: f64| a <= 0.0;

    let mut iter = 0;
    loop {
        // i: maximal violation among the "up" set
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = None;
        for t in 0..n {
            let v = -y[t] * grad[t];
            let ok = if y[t] > 0.0 { !upper(alpha[t]) } else { !lower(alpha[t]) };
            if ok && v >= gmax {
                gmax = v;
                i_sel = Some(t);
            }
        }
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j_sel = None;
        let mut obj_min = f64::INFINITY;
        if let Some(i) = i_sel {
            for t in 0..n {
                let ok = if y[t] > 0.0 { !lower(alpha[t]) } else { !upper(alpha[t]) };
                if !ok {
                    continue;
                }
                let v = y[t] * grad[t];
                gmax2 = gmax2.max(v);
                let grad_diff = gmax + v;
                if grad_diff > 0.0 {
                    let quad = qd[i] + qd[t] - 2.0 * k[i][t];
                    let quad = if quad > 0.0 { quad } else { TAU };
                    let obj = -(grad_diff * grad_diff) / quad;
                    if obj <= obj_min {
                        obj_min = obj;
                        j_sel = Some(t);
                    }
                }
            }
        }
        let (Some(i), Some(j)) = (i_sel, j_sel) else {
            break;
        };
        if gmax + gmax2 < tol {
            break;
        }
        if iter >= max_iter {
            return Err(Error::numerical(format!(
                "SMO did not converge after {iter} iterations (violation {:.3e}, n = {n}, C = {c})",
                gmax + gmax2
            )));
        }
        iter += 1;

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let qij = q(i, j);
        if y[i] != y[j] {
            let quad = qd[i] + qd[j] + 2.0 * qij;
            let quad = if quad > 0.0 { quad } else { TAU };
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = qd[i] + qd[j] - 2.0 * qij;
            let quad = if quad > 0.0 { quad } else { TAU };
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += q(i, t) * di + q(j, t) * dj;
        }
    }

    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum_free, mut n_free) = (0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if upper(alpha[t]) {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if lower(alpha[t]) {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 {
        sum_free / n_free as f64
    } else {
        (ub + lb) / 2.0
    };
    Ok(BinarySolution {
        alpha,
        rho,
        iterations: iter,
    })
}

/// Sorted distinct labels and each sample's class index.
pub fn encode_labels(labels: &[String]) -> (Vec<String>, Vec<usize>) {
    let mut classes: Vec<String> = labels.to_vec();
    classes.sort();
    classes.dedup();
    let idx = labels
        .iter()
        .map(|l| classes.binary_search(l).expect("label present"))
        .collect();
    (classes, idx)
}

pub fn svm_fit(vectors: &[Vec<f64>], labels: &[String], config: &SvmConfig) -> Result<KernelClassifier> {
    let (classes, y) = encode_labels(labels);
    svm_fit_indexed(vectors, &y, classes, config)
}

/// Fits on pre-encoded class indices `0..classes.len()`.
pub fn svm_fit_indexed(
    vectors: &[Vec<f64>],
    y: &[usize],
    classes: Vec<String>,
    config: &SvmConfig,
) -> Result<KernelClassifier> {
    if vectors.len() != y.len() {
        return Err(Error::DimensionMismatch {
            id: Some("labels".into()),
            expected: vectors.len(),
            got: y.len(),
        });
    }
    if !(config.c > 0.0) {
        return Err(Error::invalid("C must be positive"));
    }
    if let Kernel::Rbf { gamma } = config.kernel {
        if !(gamma > 0.0) {
            return Err(Error::invalid("gamma must be positive"));
        }
    }
    let k = classes.len();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &c) in y.iter().enumerate() {
        members[c].push(i);
    }
    let present = members.iter().filter(|m| !m.is_empty()).count();
    if present < 2 {
        return Err(Error::InsufficientData("need at least 2 classes with samples".into()));
    }
    let d = vectors[0].len();
    if let Some(v) = vectors.iter().find(|v| v.len() != d) {
        return Err(Error::DimensionMismatch {
            id: None,
            expected: d,
            got: v.len(),
        });
    }

    let n = vectors.len();
    let mut gram = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let v = config.kernel.eval(&vectors[i], &vectors[j]);
            gram[i][j] = v;
            gram[j][i] = v;
        }
        gram[i][i] += DIAG_JITTER;
    }

    let mut machines = Vec::new();
    for a in 0..k {
        for b in a + 1..k {
            if members[a].is_empty() || members[b].is_empty() {
                continue;
            }
            let idx: Vec<usize> = members[a].iter().chain(&members[b]).copied().collect();
            let sub: Vec<Vec<f64>> = idx
                .iter()
                .map(|&i| idx.iter().map(|&j| gram[i][j]).collect())
                .collect();
            let ys: Vec<f64> = idx.iter().map(|&i| if y[i] == a { 1.0 } else { -1.0 }).collect();
            let max_iter = config.max_iter.unwrap_or(100_000.max(100 * idx.len()));
            let sol = solve_binary(&sub, &ys, config.c, config.tol, max_iter)?;
            let mut m = BinaryMachine {
                positive: a,
                negative: b,
                support_vectors: Vec::new(),
                dual_coef: Vec::new(),
                rho: sol.rho,
                support_indices: Vec::new(),
                iterations: sol.iterations,
            };
            for (t, &alpha) in sol.alpha.iter().enumerate() {
                if alpha > 0.0 {
                    m.support_vectors.push(vectors[idx[t]].clone());
                    m.dual_coef.push(alpha * ys[t]);
                    m.support_indices.push(idx[t]);
                }
            }
            machines.push(m);
        }
    }
    Ok(KernelClassifier {
        kernel: config.kernel,
        c: config.c,
        classes,
        machines,
    })
}

impl KernelClassifier {
    pub fn decision_values(&self, x: &[f64]) -> Vec<f64> {
        self.machines
            .iter()
            .map(|m| {
                m.support_vectors
                    .iter()
                    .zip(&m.dual_coef)
                    .map(|(sv, c)| c * self.kernel.eval(sv, x))
                    .sum::<f64>()
                    - m.rho
            })
            .collect()
    }

    /// Class index by one-vs-one voting; ties go to the lowest index.
    pub fn predict_index(&self, x: &[f64]) -> usize {
        let mut votes = vec![0usize; self.classes.len()];
        for (m, f) in self.machines.iter().zip(self.decision_values(x)) {
            if f > 0.0 {
                votes[m.positive] += 1;
            } else {
                votes[m.negative] += 1;
            }
        }
        let best = *votes.iter().max().unwrap_or(&0);
        votes.iter().position(|&v| v == best).unwrap_or(0)
    }

    pub fn predict(&self, x: &[f64]) -> &str {
        &self.classes[self.predict_index(x)]
    }

    pub fn predict_all(&self, xs: &[Vec<f64>]) -> Vec<usize> {
        xs.iter().map(|x| self.predict_index(x)).collect()
    }
}
