//! Stage orchestration behind the command-line tool.
//!
//! Each stage reads its predecessors' artifacts from the run directory and
//! registers what it writes, with SHA-256 digests, in `manifest.json`.

mod backends;
pub mod config;
pub mod manifest;
mod stages;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use thiserror::Error;

pub use backends::Backends;
pub use config::{Overrides, RunConfig};
pub use manifest::{RunDir, RunManifest, StageRecord};

use crate::gateway::{GatewayError, PriceSheet};
use crate::normness::NormnessError;
use crate::preference::PreferenceError;
use crate::simulation::SimulationError;
use crate::NormDimension;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("stage `{stage}` has not produced {path}; run it first")]
    MissingArtifact { stage: String, path: String },
    #[error("input error: {0}")]
    Input(String),
    #[error("backend error: {0}")]
    Backend(String),
    #[error("run directory integrity check failed:\n  {}", .0.join("\n  "))]
    IntegrityList(Vec<String>),
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Other(String),
}

impl RunError {
    /// Process exit status. 2 is left to argument parsing.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 3,
            RunError::MissingArtifact { .. } => 4,
            RunError::Input(_) => 5,
            RunError::Backend(_) => 6,
            RunError::Integrity(_) | RunError::IntegrityList(_) => 7,
            RunError::Io(_) | RunError::Other(_) => 1,
        }
    }
}

impl From<GatewayError> for RunError {
    fn from(e: GatewayError) -> Self {
        match e {
            GatewayError::Config(m) => RunError::Config(m),
            e => RunError::Backend(e.to_string()),
        }
    }
}

macro_rules! via_gateway {
    ($($t:ident),*) => {$(
        impl From<$t> for RunError {
            fn from(e: $t) -> Self {
                match e {
                    $t::Gateway(g) => g.into(),
                    e => RunError::Other(e.to_string()),
                }
            }
        }
    )*};
}

via_gateway!(NormnessError, SimulationError, PreferenceError);

impl From<crate::rpm::RpmError> for RunError {
    fn from(e: crate::rpm::RpmError) -> Self {
        RunError::Other(e.to_string())
    }
}

impl From<crate::dynamics::DynamicsError> for RunError {
    fn from(e: crate::dynamics::DynamicsError) -> Self {
        RunError::Other(e.to_string())
    }
}

impl From<crate::corpus::CorpusError> for RunError {
    fn from(e: crate::corpus::CorpusError) -> Self {
        RunError::Input(e.to_string())
    }
}

impl From<crate::synthbench::SynthError> for RunError {
    fn from(e: crate::synthbench::SynthError) -> Self {
        match e {
            crate::synthbench::SynthError::InvalidConfig(m) => RunError::Config(m),
            e => RunError::Other(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Ingest,
    Sample,
    Label,
    Winrate,
    Simulate,
    Filter,
    ScorePreference,
    Rpm,
    Dynamics,
    Synthbench,
    Report,
}

impl Stage {
    /// Pipeline order.
    pub const ALL: [Stage; 11] = [
        Stage::Ingest,
        Stage::Sample,
        Stage::Label,
        Stage::Winrate,
        Stage::Simulate,
        Stage::Filter,
        Stage::ScorePreference,
        Stage::Rpm,
        Stage::Dynamics,
        Stage::Synthbench,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Sample => "sample",
            Stage::Label => "label",
            Stage::Winrate => "winrate",
            Stage::Simulate => "simulate",
            Stage::Filter => "filter",
            Stage::ScorePreference => "score-preference",
            Stage::Rpm => "rpm",
            Stage::Dynamics => "dynamics",
            Stage::Synthbench => "synthbench",
            Stage::Report => "report",
        }
    }

    /// Whether outputs are keyed by community (and dimension), so that
    /// `--community` and `--dimension` narrow the work.
    pub fn is_keyed(self) -> bool {
        matches!(
            self,
            Stage::Sample
                | Stage::Label
                | Stage::Winrate
                | Stage::Simulate
                | Stage::Filter
                | Stage::ScorePreference
                | Stage::Rpm
        )
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = RunError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| RunError::Config(format!("unknown stage `{s}`")))
    }
}

/// Narrows keyed stages to one community and/or dimension.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Scope {
    pub community: Option<String>,
    pub dimension: Option<NormDimension>,
}

impl Scope {
    pub fn all() -> Self {
        Scope::default()
    }

    pub fn communities(&self, cfg: &RunConfig) -> Result<Vec<String>, RunError> {
        let all = cfg.community_list();
        match &self.community {
            None => Ok(all),
            Some(c) if all.contains(c) => Ok(vec![c.clone()]),
            Some(c) => Err(RunError::Config(format!(
                "community `{c}` is not configured"
            ))),
        }
    }

    pub fn dimensions(&self, cfg: &RunConfig) -> Result<Vec<NormDimension>, RunError> {
        let all = cfg.dimension_list();
        match self.dimension {
            None => Ok(all),
            Some(d) if all.contains(&d) => Ok(vec![d]),
            Some(d) => Err(RunError::Config(format!(
                "dimension `{d}` is not configured"
            ))),
        }
    }

    fn labels(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Some(c) = &self.community {
            out.push(format!("community={c}"));
        }
        if let Some(d) = self.dimension {
            out.push(format!("dimension={d}"));
        }
        out
    }
}

/// Directory-safe form of a community name.
pub fn slug(community: &str) -> String {
    community
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// What one stage invocation did.
#[derive(Debug, Clone, PartialEq)]
pub struct StageSummary {
    pub stage: Stage,
    pub seconds: f64,
    pub artifacts: usize,
    pub notes: Vec<String>,
}

/// Caps the global rayon pool. Only the first call in a process takes effect.
pub fn init_workers(workers: usize) {
    if workers > 0 {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global();
    }
}

/// Output prefixes a keyed stage owns under `scope`; `None` means the whole stage.
fn owned_prefixes(
    stage: Stage,
    cfg: &RunConfig,
    scope: &Scope,
) -> Result<Option<Vec<String>>, RunError> {
    if !stage.is_keyed() || *scope == Scope::all() {
        return Ok(None);
    }
    let mut out = Vec::new();
    for c in scope.communities(cfg)? {
        let base = format!("{}/{}", stage.name(), slug(&c));
        match scope.dimension {
            None => out.push(format!("{base}/")),
            Some(d) => {
                out.push(format!("{base}/{d}/"));
                if stage == Stage::ScorePreference {
                    out.push(format!("{base}/scores.jsonl"));
                    out.push(format!("{base}/accuracy.json"));
                }
            }
        }
    }
    Ok(Some(out))
}

/// Runs one stage and records it in the manifest.
pub fn run_stage(stage: Stage, cfg: &RunConfig, scope: &Scope) -> Result<StageSummary, RunError> {
    cfg.validate()?;
    let mut dir = RunDir::open(cfg)?;
    let prefixes = owned_prefixes(stage, cfg, scope)?;
    let mut record = dir.clear(stage, prefixes.as_deref())?;
    let started = Instant::now();
    let mut io = manifest::StageIo::new(&dir, stage);
    let result = stages::execute(stage, cfg, scope, &mut io);
    let manifest::StageIo {
        written,
        inputs,
        mut notes,
        usage,
        ..
    } = io;
    let price = PriceSheet::new(cfg.backend.input_price, cfg.backend.output_price);
    if let Err(e) = result {
        for path in written.keys() {
            let _ = std::fs::remove_file(dir.root().join(path));
        }
        if !record.artifacts.is_empty() {
            dir.register(stage, record);
        }
        dir.save(&price)?;
        return Err(e);
    }
    if !stage.is_keyed() && *scope != Scope::all() {
        notes.insert(0, format!("{stage} ignores --community and --dimension"));
    }
    let artifacts = written.len();
    record.seconds = started.elapsed().as_secs_f64();
    record.scope = scope.labels();
    record.artifacts.extend(written);
    if prefixes.is_none() {
        record.inputs = inputs;
    } else {
        record.inputs.extend(inputs);
    }
    record.usage = usage;
    record.notes = notes.clone();
    dir.register(stage, record.clone());
    dir.save(&price)?;
    Ok(StageSummary {
        stage,
        seconds: record.seconds,
        artifacts,
        notes,
    })
}

/// Runs every stage in order, stopping at the first failure.
pub fn run_all(cfg: &RunConfig, scope: &Scope) -> Result<Vec<StageSummary>, RunError> {
    Stage::ALL
        .into_iter()
        .map(|s| run_stage(s, cfg, scope))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_names_round_trip() {
        for s in Stage::ALL {
            assert_eq!(s.name().parse::<Stage>().unwrap(), s);
        }
        assert_eq!("nope".parse::<Stage>().unwrap_err().exit_code(), 3);
    }

    #[test]
    fn exit_codes_are_distinct() {
        let codes = [
            RunError::Config(String::new()).exit_code(),
            RunError::MissingArtifact {
                stage: "x".into(),
                path: "y".into(),
            }
            .exit_code(),
            RunError::Input(String::new()).exit_code(),
            RunError::Backend(String::new()).exit_code(),
            RunError::Integrity(String::new()).exit_code(),
            RunError::Other(String::new()).exit_code(),
        ];
        let set: std::collections::BTreeSet<_> = codes.iter().collect();
        assert_eq!(set.len(), codes.len());
        assert!(!codes.contains(&0) && !codes.contains(&2));
    }

    #[test]
    fn slugs() {
        assert_eq!(slug("r/AskHistorians"), "r_AskHistorians");
        assert_eq!(slug("plain-name_1.x"), "plain-name_1.x");
    }
}
