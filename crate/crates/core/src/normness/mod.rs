//! Normness scales from pairwise judgments.
//!
//! Comments are sampled per Likert stratum, paired, judged by a
//! [`PairwiseJudge`](crate::gateway::PairwiseJudge), and aggregated into
//! win-rates `Φ′ = wins / comparisons`.

mod agreement;
mod dimension;
mod graph;
mod labeling;
mod sampling;

pub use agreement::{fleiss_kappa, majority_label, Vote};
pub use dimension::{NormDimension, UnknownDimension};
pub use graph::{
    verbosity_scale, verbosity_scale_texts, win_rate, ComparisonGraph, NormnessScore,
    PairwiseLabel, WinRates,
};
pub use labeling::{
    label_pairs, place_against_reference, JudgeFailure, LabelConfig, LabelOutcome, Placement,
};
pub use sampling::{sample_pairs, stratified_sample, LikertRating, Shortfall, StratifiedSample};

use crate::gateway::GatewayError;

/// Default minimum number of comparisons before a score counts as reliable.
pub const DEFAULT_MIN_COMPARISONS: usize = 30;

#[derive(Debug, thiserror::Error)]
pub enum NormnessError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("comment {0} is not a member of the comparison graph")]
    UnknownComment(String),
    #[error("no context for comment {0}")]
    MissingContext(String),
    #[error("agreement undefined: {0}")]
    Degenerate(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}
