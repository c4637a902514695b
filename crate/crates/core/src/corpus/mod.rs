//! Statements, persons and votes: ingestion, rater-label handling, vote
//! scoring and attitude/behaviour correlation.

mod analysis;
mod ingest;
mod model;

pub use analysis::{attitude_score, correlate, export_scatter, write_scatter_csv, ScatterPoint, ScatterRow};
pub use ingest::{
    ingest_quotes, parse_date, parse_quotes, parse_votes, read_persons, read_votes, write_quotes,
    Corpus, IngestConfig, IngestReport, PersonFilter, Rejection,
};
pub use model::{
    combine_rater_labels, vote_score, Axis, AxisLabel, BrexitLabel, CorpusStats, Person,
    PersonCategory, Quote, TerrorismLabel, Vote, VoteRecord,
};
