//! Quantitative social-norm analytics for online community comment corpora.
//!
//! The crate turns dump-shaped comment data into continuous normness scales
//! (pairwise win-rates), controlled rewrites filtered for quality, distilled
//! community-preference deltas, Return Potential curves, and norm-dynamics
//! statistics. Every model interaction goes through the narrow contracts in
//! [`gateway`]; offline stub and planted-truth backends ship in-tree so the
//! whole pipeline runs without network access.
//!
//! Module map:
//!
//! * [`corpus`] parses dump files, applies preprocessing exclusions and
//!   half-year time binning.
//! * [`gateway`] holds prompt templates, response parsing, retries, cost
//!   accounting and backend contracts.
//! * [`normness`] samples and labels comment pairs and aggregates win-rates.
//! * [`simulation`] generates controlled rewrites and runs the filter pipeline.
//! * [`preference`] builds predictor inputs, evaluates pairwise accuracy and
//!   distills preference deltas.
//! * [`rpm`] bins deltas into Return Potential curves with PMR and PRD.
//! * [`dynamics`] computes norm intensity, crystallization, temporal change,
//!   regressions and user-level shift tests.
//! * [`synthbench`] plants worlds with known ground truth for recovery checks.
//! * [`runner`] is the stage orchestration behind the `valuescope` CLI.

pub mod corpus;
pub mod dynamics;
pub mod gateway;
pub mod normness;
pub mod preference;
pub mod rpm;
pub mod runner;
pub mod seed;
pub mod simulation;
pub mod synthbench;

pub use normness::NormDimension;
