use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which version of the published p(s|k) table to load.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableVariant {
    /// As printed: p(s=e|k=c) = 0.168, so column c sums to 1.151.
    Printed,
    /// p(s=e|k=c) = 0.017, the value consistent with the marginals.
    Corrected,
}

/// Statement-type / person-category statistics, indices ordered c, e, t.
///
/// Both matrices are stored `[s][k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryTables {
    /// Columns (fixed k) sum to one.
    pub p_s_given_k: [[f64; 3]; 3],
    /// Rows (fixed s) sum to one.
    pub p_k_given_s: [[f64; 3]; 3],
    pub p_s: [f64; 3],
    pub p_k: [f64; 3],
}

impl CategoryTables {
    pub fn builtin(variant: TableVariant) -> Self {
        let e_given_c = match variant {
            TableVariant::Printed => 0.168,
            TableVariant::Corrected => 0.017,
        };
        Self {
            p_s_given_k: [
                [0.983, 0.293, 0.356],
                [e_given_c, 0.707, 0.475],
                [0.0, 0.0, 0.169],
            ],
            p_k_given_s: [
                [0.926, 0.014, 0.060],
                [0.122, 0.259, 0.620],
                [0.0, 0.0, 1.0],
            ],
            p_s: [0.863, 0.112, 0.025],
            p_k: [0.813, 0.04, 0.146],
        }
    }

    /// p(s) implied by p(s|k) and p(k).
    pub fn implied_p_s(&self) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (s, o) in out.iter_mut().enumerate() {
            *o = (0..3).map(|k| self.p_s_given_k[s][k] * self.p_k[k]).sum();
        }
        out
    }

    /// p(k|s) implied by Bayes' rule from p(s|k) and p(k). Rows with no
    /// probability mass fall back to p(k).
    pub fn implied_p_k_given_s(&self) -> [[f64; 3]; 3] {
        let mut out = [[0.0; 3]; 3];
        for s in 0..3 {
            let joint: Vec<f64> = (0..3).map(|k| self.p_s_given_k[s][k] * self.p_k[k]).collect();
            let total: f64 = joint.iter().sum();
            for k in 0..3 {
                out[s][k] = if total > 0.0 { joint[k] / total } else { self.p_k[k] };
            }
        }
        out
    }

    pub fn check(&self) -> TableCheck {
        let mut c = TableCheck::default();
        for k in 0..3 {
            let col: f64 = (0..3).map(|s| self.p_s_given_k[s][k]).sum();
            c.column_sum = c.column_sum.max((col - 1.0).abs());
        }
        for s in 0..3 {
            let row: f64 = self.p_k_given_s[s].iter().sum();
            c.row_sum = c.row_sum.max((row - 1.0).abs());
        }
        c.p_s_sum = (self.p_s.iter().sum::<f64>() - 1.0).abs();
        c.p_k_sum = (self.p_k.iter().sum::<f64>() - 1.0).abs();
        for (a, b) in self.implied_p_s().iter().zip(&self.p_s) {
            c.marginal = c.marginal.max((a - b).abs());
        }
        let bayes = self.implied_p_k_given_s();
        for s in 0..3 {
            for k in 0..3 {
                c.bayes = c.bayes.max((bayes[s][k] - self.p_k_given_s[s][k]).abs());
            }
        }
        c.negative = self
            .p_s_given_k
            .iter()
            .chain(&self.p_k_given_s)
            .chain([&self.p_s, &self.p_k])
            .flatten()
            .any(|v| !(*v >= 0.0));
        c
    }

    /// Fails when any consistency measure exceeds `tol`.
    pub fn validate(&self, tol: f64) -> Result<TableCheck> {
        let c = self.check();
        if c.negative {
            return Err(Error::invalid("category tables contain negative or non-finite entries"));
        }
        let named = [
            ("p(s|k) column sum", c.column_sum),
            ("p(k|s) row sum", c.row_sum),
            ("p(s) sum", c.p_s_sum),
            ("p(k) sum", c.p_k_sum),
            ("marginal p(s) = p(s|k) p(k)", c.marginal),
            ("Bayes p(k|s)", c.bayes),
        ];
        let failed: Vec<String> = named
            .iter()
            .filter(|(_, v)| *v > tol)
            .map(|(n, v)| format!("{n} off by {v:.6}"))
            .collect();
        if failed.is_empty() {
            Ok(c)
        } else {
            Err(Error::invalid(format!(
                "category tables inconsistent (tolerance {tol}): {}",
                failed.join("; ")
            )))
        }
    }

    /// Builds consistent tables from a count matrix `counts[s][k]` of
    /// statements of type s made by persons of category k.
    ///
    /// With `laplace`, one pseudo-count is added to every cell.
    pub fn from_counts(counts: [[f64; 3]; 3], laplace: bool) -> Result<Self> {
        let mut n = counts;
        if laplace {
            n.iter_mut().flatten().for_each(|v| *v += 1.0);
        }
        let total: f64 = n.iter().flatten().sum();
        let mut p_k = [0.0; 3];
        for (k, pk) in p_k.iter_mut().enumerate() {
            let col: f64 = (0..3).map(|s| n[s][k]).sum();
            if col <= 0.0 {
                return Err(Error::InsufficientData(format!(
                    "person category {} has no statements",
                    ["c", "e", "t"][k]
                )));
            }
            *pk = col / total;
        }
        let mut p_s_given_k = [[0.0; 3]; 3];
        let mut p_s = [0.0; 3];
        for s in 0..3 {
            for k in 0..3 {
                p_s_given_k[s][k] = n[s][k] / (total * p_k[k]);
            }
            p_s[s] = n[s].iter().sum::<f64>() / total;
        }
        let mut t = Self {
            p_s_given_k,
            p_k_given_s: [[0.0; 3]; 3],
            p_s,
            p_k,
        };
        t.p_k_given_s = t.implied_p_k_given_s();
        Ok(t)
    }
}

/// Largest absolute deviation found by each consistency check.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TableCheck {
    pub column_sum: f64,
    pub row_sum: f64,
    pub p_s_sum: f64,
    pub p_k_sum: f64,
    pub marginal: f64,
    pub bayes: f64,
    pub negative: bool,
}
