//! Homography-supervised matching evaluation: reprojection, mutual
//! nearest-neighbor matching, MMA over 1-10 px thresholds, AUC from the
//! pooled-error empirical CDF, HPatches-style dataset ingestion and
//! deterministic report emission.

mod homography;
mod image_io;
mod matching;
mod metrics;
mod report;
mod sequences;

pub use homography::{Homography, HomographyError};
pub use image_io::load_grayscale;
pub use matching::{match_errors, nn_match, Match, MatchSet};
pub use metrics::{auc, mma, MMA_THRESHOLDS};
pub use report::{AggregateReport, EvalReport, PairReport, PlotRow};
pub use sequences::{load_sequences, SequencePair, SequenceScan};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Homography(#[from] HomographyError),
    #[error("descriptor dimension mismatch: {a} vs {b}")]
    DimMismatch { a: usize, b: usize },
    #[error("match references invalid index {index} (set size {size})")]
    BadIndex { index: usize, size: usize },
    #[error("unreadable dataset root {0}")]
    BadRoot(String),
    #[error("image decode failed: {0}")]
    Image(String),
}
