//! Linear dimensionality reduction: PCA for denoising, LDA for
//! label-aware projections.

mod lda;
mod pca;

pub use lda::{lda_apply, lda_fit, pooled_covariance, LdaConfig, LdaModel};
pub use pca::{pca_fit, PcaModel};

use serde::{Deserialize, Serialize};

/// Either projection model, as persisted to JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ProjectionModel {
    Pca(PcaModel),
    Lda(LdaModel),
}

impl ProjectionModel {
    pub fn apply(&self, vectors: &[Vec<f64>]) -> crate::Result<Vec<Vec<f64>>> {
        match self {
            ProjectionModel::Pca(m) => m.transform(vectors),
            ProjectionModel::Lda(m) => lda_apply(m, vectors),
        }
    }
}
