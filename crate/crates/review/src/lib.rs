//! Expert review of generated pairs: worklists, verdict log, the exclusion
//! rule and an HTTP API over them.
//!
//! Positives are reviewed by every expert; negatives are split among them.
//! A sample judged not acceptable by any expert is dropped from the export.

pub mod assign;
pub mod export;
pub mod samples;
pub mod server;
pub mod store;

pub use assign::{assign_samples, Worklists};
pub use export::{export_filtered, render_report, AcceptanceReport, Export, Rate, Rates};
pub use samples::{load_samples, Sample};
pub use server::{router, serve, ReviewState};
pub use store::{Decision, Verdict, VerdictMap, VerdictStore};

#[derive(Debug, thiserror::Error)]
pub enum ReviewError {
    #[error("at least one expert is required")]
    NoExperts,
    #[error("expert ids must be unique")]
    DuplicateExpert,
    #[error("pair refers to study `{0}`, which is not in the manifest")]
    UnknownStudy(String),
    #[error("verdict log: {0}")]
    Log(String),
    #[error(transparent)]
    Format(#[from] ils_core::io::FormatError),
}
