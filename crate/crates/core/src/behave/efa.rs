use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::data::DataTable;
use crate::error::{Error, Result};
use crate::linalg::fix_sign;

/// Principal-component factor extraction without rotation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorLoadings {
    pub variables: Vec<String>,
    /// Correlation-matrix eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    /// `loadings[v][f]`.
    pub loadings: Vec<Vec<f64>>,
    /// Factor with the largest absolute loading, per variable.
    pub assignment: Vec<Option<usize>>,
    pub warnings: Vec<String>,
}

impl FactorLoadings {
    pub fn n_factors(&self) -> usize {
        self.loadings.first().map_or(0, Vec::len)
    }
}

pub fn correlation_matrix(data: &DataTable) -> Result<DMatrix<f64>> {
    let n = data.n_rows();
    if n < 2 {
        return Err(Error::InsufficientData("need at least 2 persons".into()));
    }
    let p = data.n_vars();
    let mut z = DMatrix::zeros(n, p);
    for (j, col) in data.columns.iter().enumerate() {
        let mean = col.iter().sum::<f64>() / n as f64;
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        if !(sd > 0.0) {
            return Err(Error::invalid(format!("column `{}` is constant", data.names[j])));
        }
        for (i, v) in col.iter().enumerate() {
            z[(i, j)] = (v - mean) / sd;
        }
    }
    let mut r = z.transpose() * &z / (n - 1) as f64;
    for j in 0..p {
        r[(j, j)] = 1.0;
        for k in 0..j {
            let v = 0.5 * (r[(j, k)] + r[(k, j)]);
            r[(j, k)] = v;
            r[(k, j)] = v;
        }
    }
    Ok(r)
}

/// Keeps factors whose eigenvalue exceeds one; loadings are eigenvectors
/// scaled by the square root of their eigenvalue.
pub fn efa_fit(data: &DataTable) -> Result<FactorLoadings> {
    if data.n_vars() < 2 {
        return Err(Error::InsufficientData("need at least 2 variables".into()));
    }
    let r = correlation_matrix(data)?;
    let eig = r.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let kept: Vec<usize> = order.iter().copied().filter(|&i| eig.eigenvalues[i] > 1.0).collect();
    let mut warnings = Vec::new();
    if kept.is_empty() {
        warnings.push("no eigenvalue exceeds 1: no factors retained".to_string());
    }
    let p = data.n_vars();
    let mut loadings = vec![Vec::with_capacity(kept.len()); p];
    for &i in &kept {
        let mut v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
        fix_sign(&mut v);
        let s = eig.eigenvalues[i].sqrt();
        for (row, x) in loadings.iter_mut().zip(v) {
            row.push(x * s);
        }
    }
    let assignment = loadings
        .iter()
        .map(|row| {
            (!row.is_empty()).then(|| {
                (1..row.len()).fold(0, |b, f| if row[f].abs() > row[b].abs() { f } else { b })
            })
        })
        .collect();
    Ok(FactorLoadings {
        variables: data.names.clone(),
        eigenvalues,
        loadings,
        assignment,
        warnings,
    })
}
