//! Statement analytics: ingest labelled, time-stamped statements, embed and
//! project them, classify them, track each speaker's latent state over time
//! and fit Bayesian-network behaviour models.

pub mod behave;
pub mod classify;
pub mod corpus;
pub mod embed;
mod error;
mod linalg;
pub mod project;
pub mod synth;
pub mod track;

pub use error::{Error, ErrorKind, Result};
