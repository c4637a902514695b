//! Kernel classification, cross-validation and 2D region classifiers.

mod cv;
mod metrics;
mod regions;
mod svm;

pub use cv::{cross_validate, stratified_folds, CvConfig, CvReport, FoldReport, Grid, Hyperparameters};
pub use metrics::{balanced_accuracy, ConfusionMatrix};
pub use regions::{linear_regions_fit, DEFAULT_RIDGE as REGION_RIDGE, linear_regions_predict, LinearRegionClassifier, RegionRaster};
pub use svm::{encode_labels, svm_fit, svm_fit_indexed, BinaryMachine, Kernel, KernelClassifier, SvmConfig};
