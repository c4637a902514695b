//! Kalman tracking of a person's 2D mind-state with measurement noise that
//! depends on the state through category statistics.

mod filter;
mod mixture;
mod model;
mod tables;

pub use filter::{
    kalman_step, kalman_step_detailed, predict, predict_future, track_person, update, write_track_csv, years_between,
    MeasurementNoise, MotionModel, NoiseIntegration, StateEstimate, Track, TrackStep, DAYS_PER_YEAR,
};
pub use mixture::{measurement_mixture, reduce_mixture, statement_weights, Gaussian2, GaussianMixture2D};
pub use model::{
    estimate_category_model, labelled_points, person_categories, CategoryGaussians, CategoryModel, LabelledPoint,
};
pub use tables::{CategoryTables, TableCheck, TableVariant};
