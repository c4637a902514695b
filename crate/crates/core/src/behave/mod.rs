//! Behaviour models: a branch-structured Bayesian network fitted by
//! Metropolis sampling, BIC hill-climbing structure learning, DAG import
//! and exploratory factor analysis.

mod bn;
mod data;
mod efa;
mod mcmc;
mod structure;

pub use bn::{
    bn_fit, bn_forward, bn_predict, branch_logits, quantile, rmse, simulate_records, BnFitConfig, BnParams,
    PosteriorSamples, Prediction, PriorConfig, BRANCHES,
};
pub use data::{
    parse_behave_csv, read_behave_csv, write_behave_csv, BehaveRecord, BehaveSchema, DataTable, CAPABILITY, MOTIVATION,
};
pub use efa::{correlation_matrix, efa_fit, FactorLoadings};
pub use mcmc::{run_chain, split_rhat, ChainOutput, ComponentTarget, SamplerConfig, TARGET_ACCEPTANCE};
pub use structure::{
    bic_score, hc_search, import_dag, node_score, skeleton_f1, Dag, EdgeConstraints, HcConfig, LinearGaussianBn, RIDGE,
};
