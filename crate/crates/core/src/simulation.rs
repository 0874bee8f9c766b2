//! Controlled rewrites and the four-stage filter pipeline.
//!
//! Each seed comment is rewritten at five target levels of one dimension.
//! Rewrites then pass, in order, a preprocessing check, a lexical check
//! (abstains, leading markers, unchanged text), a fluency check against the
//! perplexity spread of original comments, and a content-preservation check.

use std::collections::{BTreeMap, HashMap};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{is_url_only, Comment, Partition};
use crate::gateway::{
    CommentContext, GatewayError, PerplexityScorer, RewriteGenerator, SimilarityScorer,
};
use crate::normness::NormDimension;
use crate::seed::text_hash;

pub const LEVELS: [u8; 5] = [1, 2, 3, 4, 5];

#[derive(Debug, thiserror::Error)]
pub enum SimulationError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("verbosity is measured from text length and is never rewritten")]
    VerbosityNotRewritten,
    #[error("pipeline order violated: {0}")]
    PipelineOrder(String),
    #[error("fluency statistics need at least 2 scored originals, got {0}")]
    TooFewOriginals(usize),
    #[error("perplexity scorer failed on {failed} of {total} originals")]
    ScorerFailureRate { failed: usize, total: usize },
    #[error("no origin comment {0}")]
    MissingOrigin(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Generation,
    Preprocessing,
    Lexical,
    Fluency,
    Content,
}

impl Stage {
    pub const FILTERS: [Stage; 4] = [
        Stage::Preprocessing,
        Stage::Lexical,
        Stage::Fluency,
        Stage::Content,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub stage: Stage,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticComment {
    pub synthetic_id: String,
    pub origin_id: String,
    pub community: String,
    pub dimension: NormDimension,
    pub target_level: u8,
    pub text: String,
    pub perplexity: Option<f64>,
    pub similarity: Option<f64>,
    /// Filter verdicts in pipeline order, up to the first failure.
    pub verdicts: Vec<Verdict>,
}

impl SyntheticComment {
    pub fn make_id(origin_id: &str, dimension: NormDimension, level: u8) -> String {
        format!("{origin_id}:{dimension}:L{level}")
    }

    /// True when all four filters ran and passed.
    pub fn passed_all(&self) -> bool {
        self.verdicts.len() == Stage::FILTERS.len()
            && self
                .verdicts
                .iter()
                .zip(Stage::FILTERS)
                .all(|(v, s)| v.stage == s && v.pass)
    }

    fn record(&mut self, stage: Stage, pass: bool, note: Option<String>) -> bool {
        self.verdicts.push(Verdict { stage, pass, note });
        pass
    }
}

/// A level the generator could not produce.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationFailure {
    pub origin_id: String,
    pub level: u8,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generated {
    pub dimension: NormDimension,
    /// Rewrites asked for: seeds × levels.
    pub requested: usize,
    /// Seeds skipped because they belong to the predictor training split.
    pub excluded_seeds: usize,
    pub rewrites: Vec<SyntheticComment>,
    pub failures: Vec<GenerationFailure>,
}

/// Rewrites one comment at each level 1..5. Failed levels are reported, not fatal.
pub fn generate_rewrites(
    comment: &Comment,
    dimension: NormDimension,
    generator: &dyn RewriteGenerator,
) -> Result<(Vec<SyntheticComment>, Vec<GenerationFailure>), SimulationError> {
    if dimension.is_measured() {
        return Err(SimulationError::VerbosityNotRewritten);
    }
    let ctx = CommentContext::from(comment);
    let mut rewrites = Vec::new();
    let mut failures = Vec::new();
    for level in LEVELS {
        match generator.rewrite(&ctx, dimension, level) {
            Ok(text) => rewrites.push(SyntheticComment {
                synthetic_id: SyntheticComment::make_id(&comment.comment_id, dimension, level),
                origin_id: comment.comment_id.clone(),
                community: comment.community.clone(),
                dimension,
                target_level: level,
                text,
                perplexity: None,
                similarity: None,
                verdicts: Vec::new(),
            }),
            Err(e) if e.is_fatal() => return Err(e.into()),
            Err(e) => failures.push(GenerationFailure {
                origin_id: comment.comment_id.clone(),
                level,
                reason: e.to_string(),
            }),
        }
    }
    Ok((rewrites, failures))
}

/// Rewrites every held-out seed. Seeds in the predictor training split are
/// skipped and counted.
pub fn generate_all(
    seeds: &[Comment],
    dimension: NormDimension,
    generator: &dyn RewriteGenerator,
    train_fraction: f64,
) -> Result<Generated, SimulationError> {
    if dimension.is_measured() {
        return Err(SimulationError::VerbosityNotRewritten);
    }
    let (usable, held_back): (Vec<&Comment>, Vec<&Comment>) = seeds
        .iter()
        .partition(|c| Partition::assign(&c.comment_id, train_fraction) == Partition::Heldout);
    let per_seed = usable
        .par_iter()
        .map(|c| generate_rewrites(c, dimension, generator))
        .collect::<Result<Vec<_>, _>>()?;
    let mut rewrites = Vec::new();
    let mut failures = Vec::new();
    for (r, f) in per_seed {
        rewrites.extend(r);
        failures.extend(f);
    }
    Ok(Generated {
        dimension,
        requested: usable.len() * LEVELS.len(),
        excluded_seeds: held_back.len(),
        rewrites,
        failures,
    })
}

/// Abstain phrases and strippable leading markers, both matched
/// case-insensitively.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexicalPatterns {
    pub abstain: Vec<String>,
    pub prefixes: Vec<String>,
}

fn pattern_lines(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

impl LexicalPatterns {
    pub fn from_text(abstain: &str, prefixes: &str) -> Self {
        let mut prefixes = pattern_lines(prefixes);
        prefixes.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
        LexicalPatterns {
            abstain: pattern_lines(abstain),
            prefixes,
        }
    }
}

impl Default for LexicalPatterns {
    fn default() -> Self {
        LexicalPatterns::from_text(
            include_str!("../assets/abstain_patterns.txt"),
            include_str!("../assets/strip_prefixes.txt"),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexicalVerdict {
    pub pass: bool,
    pub text: String,
    pub reason: Option<&'static str>,
}

fn normalize(text: &str) -> String {
    text.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Strips leading markers, then fails abstains, empty text, and text that is
/// unchanged from the origin up to case and whitespace.
pub fn lexical_filter(text: &str, origin: &str, patterns: &LexicalPatterns) -> LexicalVerdict {
    let mut cleaned = text.trim();
    'strip: loop {
        for p in &patterns.prefixes {
            let head = cleaned.get(..p.len()).map(str::to_lowercase);
            if head.as_deref() == Some(p.as_str()) {
                cleaned = cleaned[p.len()..].trim_start();
                continue 'strip;
            }
        }
        break;
    }
    let cleaned = cleaned.trim().to_owned();
    let lower = cleaned.to_lowercase();
    let reason = if cleaned.is_empty() {
        Some("empty after stripping")
    } else if patterns.abstain.iter().any(|p| lower.contains(p.as_str())) {
        Some("abstain phrase")
    } else if normalize(&cleaned) == normalize(origin) {
        Some("identical to origin")
    } else {
        None
    };
    LexicalVerdict {
        pass: reason.is_none(),
        text: cleaned,
        reason,
    }
}

/// The rewrite must still look like a keepable comment: non-empty, not a
/// deletion sentinel, not a bare URL.
pub fn preprocessing_filter(text: &str) -> Result<(), &'static str> {
    let t = text.trim();
    if t.is_empty() {
        Err("empty")
    } else if t == "[deleted]" || t == "[removed]" {
        Err("deletion sentinel")
    } else if is_url_only(t) {
        Err("url only")
    } else {
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluencyStats {
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

impl FluencyStats {
    pub fn contains(&self, perplexity: f64, sigma_multiplier: f64) -> bool {
        let half = sigma_multiplier * self.sd;
        self.mean - half <= perplexity && perplexity <= self.mean + half
    }
}

/// Sample mean and sample sd over the successfully scored texts.
///
/// Fails when more than `max_failure_rate` of the texts cannot be scored.
pub fn fluency_stats_texts(
    texts: &[&str],
    scorer: &dyn PerplexityScorer,
    cache: &ScoreCache,
    max_failure_rate: f64,
) -> Result<FluencyStats, SimulationError> {
    let results: Vec<Result<f64, GatewayError>> = texts
        .par_iter()
        .map(|t| cache.perplexity(scorer, t))
        .collect();
    let mut scores = Vec::with_capacity(results.len());
    for r in results {
        match r {
            Ok(p) => scores.push(p),
            Err(e) if e.is_fatal() => return Err(e.into()),
            Err(_) => {}
        }
    }
    let failed = texts.len() - scores.len();
    if !texts.is_empty() && failed as f64 / texts.len() as f64 > max_failure_rate {
        return Err(SimulationError::ScorerFailureRate {
            failed,
            total: texts.len(),
        });
    }
    if scores.len() < 2 {
        return Err(SimulationError::TooFewOriginals(scores.len()));
    }
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(FluencyStats {
        mean,
        sd: var.sqrt(),
        n: scores.len(),
    })
}

pub fn fluency_stats(
    originals: &[Comment],
    scorer: &dyn PerplexityScorer,
    cache: &ScoreCache,
    max_failure_rate: f64,
) -> Result<FluencyStats, SimulationError> {
    let texts: Vec<&str> = originals.iter().map(|c| c.body.as_str()).collect();
    fluency_stats_texts(&texts, scorer, cache, max_failure_rate)
}

/// Passes iff the perplexity lies in the closed interval `μ ± kσ`.
pub fn fluency_filter(
    synth: &SyntheticComment,
    stats: &FluencyStats,
    sigma_multiplier: f64,
) -> Result<bool, SimulationError> {
    let ppl = synth.perplexity.ok_or_else(|| {
        SimulationError::PipelineOrder(format!("{} has no perplexity", synth.synthetic_id))
    })?;
    Ok(stats.contains(ppl, sigma_multiplier))
}

/// Passes iff similarity to the origin is at least `threshold`.
pub fn content_filter(
    origin: &str,
    text: &str,
    scorer: &dyn SimilarityScorer,
    cache: &ScoreCache,
    threshold: f64,
) -> Result<(bool, f64), GatewayError> {
    let s = cache.similarity(scorer, origin, text)?;
    Ok((s >= threshold, s))
}

/// Memoized scorer outputs keyed by text hash.
#[derive(Debug, Default)]
pub struct ScoreCache {
    perplexity: Mutex<HashMap<u64, f64>>,
    similarity: Mutex<HashMap<(u64, u64), f64>>,
}

impl ScoreCache {
    pub fn perplexity(
        &self,
        scorer: &dyn PerplexityScorer,
        text: &str,
    ) -> Result<f64, GatewayError> {
        let key = text_hash(text);
        if let Some(&v) = self.perplexity.lock().expect("cache poisoned").get(&key) {
            return Ok(v);
        }
        let v = scorer.perplexity(text)?;
        self.perplexity
            .lock()
            .expect("cache poisoned")
            .insert(key, v);
        Ok(v)
    }

    pub fn similarity(
        &self,
        scorer: &dyn SimilarityScorer,
        reference: &str,
        candidate: &str,
    ) -> Result<f64, GatewayError> {
        let key = (text_hash(reference), text_hash(candidate));
        if let Some(&v) = self.similarity.lock().expect("cache poisoned").get(&key) {
            return Ok(v);
        }
        let v = scorer.similarity(reference, candidate)?;
        self.similarity
            .lock()
            .expect("cache poisoned")
            .insert(key, v);
        Ok(v)
    }
}

/// Where the fluency interval comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum FluencySource {
    /// Originals of each community separately.
    PerCommunity,
    /// All originals together.
    Pooled,
    /// Fixed constants.
    Fixed { mean: f64, sd: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub similarity_threshold: f64,
    pub sigma_multiplier: f64,
    pub fluency: FluencySource,
    pub max_scorer_failure_rate: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            similarity_threshold: 0.5,
            sigma_multiplier: 1.0,
            fluency: FluencySource::PerCommunity,
            max_scorer_failure_rate: 0.1,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), SimulationError> {
        let bad = |m: String| Err(SimulationError::InvalidConfig(m));
        if !(-1.0..=1.0).contains(&self.similarity_threshold) {
            return bad(format!(
                "similarity threshold {} outside [-1, 1]",
                self.similarity_threshold
            ));
        }
        if !(self.sigma_multiplier.is_finite() && self.sigma_multiplier >= 0.0) {
            return bad(format!(
                "sigma multiplier {} must be a non-negative number",
                self.sigma_multiplier
            ));
        }
        if !(0.0..=1.0).contains(&self.max_scorer_failure_rate) {
            return bad(format!(
                "failure ceiling {} outside [0, 1]",
                self.max_scorer_failure_rate
            ));
        }
        if let FluencySource::Fixed { mean, sd } = self.fluency {
            if !(mean.is_finite() && sd.is_finite() && sd >= 0.0) {
                return bad(format!("fixed fluency stats ({mean}, {sd}) are invalid"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCount {
    pub stage: Stage,
    pub count_in: usize,
    pub count_out: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub dimension: NormDimension,
    pub stages: Vec<StageCount>,
    pub initial: usize,
    pub kept: usize,
    pub retention: f64,
    pub fluency: BTreeMap<String, FluencyStats>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutput {
    /// Every rewrite with the verdicts it collected.
    pub all: Vec<SyntheticComment>,
    pub report: FilterReport,
}

impl FilterOutput {
    pub fn kept(&self) -> impl Iterator<Item = &SyntheticComment> {
        self.all.iter().filter(|s| s.passed_all())
    }
}

pub struct Scorers<'a> {
    pub perplexity: &'a dyn PerplexityScorer,
    pub similarity: &'a dyn SimilarityScorer,
}

fn resolve_stats(
    origins: &BTreeMap<&str, &Comment>,
    rewrites: &[SyntheticComment],
    config: &FilterConfig,
    scorer: &dyn PerplexityScorer,
    cache: &ScoreCache,
) -> Result<BTreeMap<String, FluencyStats>, SimulationError> {
    let mut by_community: BTreeMap<String, Vec<&str>> = BTreeMap::new();
    for c in origins.values() {
        by_community
            .entry(c.community.clone())
            .or_default()
            .push(&c.body);
    }
    let communities = rewrites.iter().map(|s| s.community.clone());
    match &config.fluency {
        FluencySource::Fixed { mean, sd } => Ok(communities
            .map(|c| {
                (
                    c,
                    FluencyStats {
                        mean: *mean,
                        sd: *sd,
                        n: 0,
                    },
                )
            })
            .collect()),
        FluencySource::Pooled => {
            let texts: Vec<&str> = origins.values().map(|c| c.body.as_str()).collect();
            let stats = fluency_stats_texts(&texts, scorer, cache, config.max_scorer_failure_rate)?;
            Ok(communities.map(|c| (c, stats)).collect())
        }
        FluencySource::PerCommunity => by_community
            .into_iter()
            .map(|(c, texts)| {
                Ok((
                    c,
                    fluency_stats_texts(&texts, scorer, cache, config.max_scorer_failure_rate)?,
                ))
            })
            .collect(),
    }
}

/// Applies the four filters in order. Each rewrite stops at its first failed
/// stage. Existing perplexity and similarity values on a rewrite are reused.
pub fn filter_all(
    generated: &Generated,
    origins: &[Comment],
    scorers: &Scorers<'_>,
    patterns: &LexicalPatterns,
    config: &FilterConfig,
    cache: &ScoreCache,
) -> Result<FilterOutput, SimulationError> {
    config.validate()?;
    let origin_map: BTreeMap<&str, &Comment> =
        origins.iter().map(|c| (c.comment_id.as_str(), c)).collect();
    let seed_origins: BTreeMap<&str, &Comment> = generated
        .rewrites
        .iter()
        .map(|s| {
            origin_map
                .get(s.origin_id.as_str())
                .map(|c| (c.comment_id.as_str(), *c))
                .ok_or_else(|| SimulationError::MissingOrigin(s.origin_id.clone()))
        })
        .collect::<Result<_, _>>()?;
    let stats = resolve_stats(
        &seed_origins,
        &generated.rewrites,
        config,
        scorers.perplexity,
        cache,
    )?;

    let all = generated
        .rewrites
        .par_iter()
        .map(|s| {
            let mut s = s.clone();
            s.verdicts.clear();
            let origin = seed_origins[s.origin_id.as_str()];
            let pre = preprocessing_filter(&s.text);
            if !s.record(
                Stage::Preprocessing,
                pre.is_ok(),
                pre.err().map(str::to_owned),
            ) {
                return Ok(s);
            }
            let lex = lexical_filter(&s.text, &origin.body, patterns);
            s.text = lex.text;
            if !s.record(Stage::Lexical, lex.pass, lex.reason.map(str::to_owned)) {
                return Ok(s);
            }
            if s.perplexity.is_none() {
                match cache.perplexity(scorers.perplexity, &s.text) {
                    Ok(p) => s.perplexity = Some(p),
                    Err(e) if e.is_fatal() => return Err(SimulationError::from(e)),
                    Err(e) => {
                        s.record(Stage::Fluency, false, Some(format!("scorer failed: {e}")));
                        return Ok(s);
                    }
                }
            }
            let fluent = fluency_filter(&s, &stats[&s.community], config.sigma_multiplier)?;
            if !s.record(Stage::Fluency, fluent, None) {
                return Ok(s);
            }
            let sim = match s.similarity {
                Some(v) => Ok(v),
                None => cache.similarity(scorers.similarity, &origin.body, &s.text),
            };
            match sim {
                Ok(v) => {
                    s.similarity = Some(v);
                    s.record(Stage::Content, v >= config.similarity_threshold, None);
                }
                Err(e) if e.is_fatal() => return Err(e.into()),
                Err(e) => {
                    s.record(Stage::Content, false, Some(format!("scorer failed: {e}")));
                }
            }
            Ok(s)
        })
        .collect::<Result<Vec<_>, SimulationError>>()?;

    let mut stages = vec![StageCount {
        stage: Stage::Generation,
        count_in: generated.requested,
        count_out: generated.rewrites.len(),
    }];
    let mut alive = generated.rewrites.len();
    for (k, stage) in Stage::FILTERS.into_iter().enumerate() {
        let out = all
            .iter()
            .filter(|s| s.verdicts.len() > k && s.verdicts[k].pass)
            .count();
        stages.push(StageCount {
            stage,
            count_in: alive,
            count_out: out,
        });
        alive = out;
    }
    let kept = alive;
    let retention = if generated.requested == 0 {
        0.0
    } else {
        kept as f64 / generated.requested as f64
    };
    Ok(FilterOutput {
        all,
        report: FilterReport {
            dimension: generated.dimension,
            stages,
            initial: generated.requested,
            kept,
            retention,
            fluency: stats,
        },
    })
}

/// Generation followed by filtering.
pub fn run_pipeline(
    seeds: &[Comment],
    dimension: NormDimension,
    generator: &dyn RewriteGenerator,
    scorers: &Scorers<'_>,
    patterns: &LexicalPatterns,
    config: &FilterConfig,
    train_fraction: f64,
) -> Result<(Generated, FilterOutput), SimulationError> {
    config.validate()?;
    if !(0.0..1.0).contains(&train_fraction) {
        return Err(SimulationError::InvalidConfig(format!(
            "train fraction {train_fraction} outside [0, 1)"
        )));
    }
    let generated = generate_all(seeds, dimension, generator, train_fraction)?;
    let cache = ScoreCache::default();
    let filtered = filter_all(&generated, seeds, scorers, patterns, config, &cache)?;
    Ok((generated, filtered))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::stubs::{HashNoisePerplexity, TokenOverlapSimilarity};

    pub(crate) fn seed_comment(id: &str, body: &str) -> Comment {
        Comment {
            comment_id: id.into(),
            parent_id: "p1".into(),
            post_id: "p1".into(),
            community: "r/test".into(),
            author: "u".into(),
            body: body.into(),
            created_at: 1_600_000_000,
            retrieved_at: None,
            net_votes: 3,
            post_title: "A title".into(),
            post_body: String::new(),
        }
    }

    /// The echo generator from the contract examples.
    struct Tagger;

    impl RewriteGenerator for Tagger {
        fn rewrite(
            &self,
            c: &CommentContext,
            _: NormDimension,
            level: u8,
        ) -> Result<String, GatewayError> {
            Ok(format!("[L{level}] {}", c.body))
        }
    }

    /// Abstains at level 1.
    struct ShyAtOne;

    impl RewriteGenerator for ShyAtOne {
        fn rewrite(
            &self,
            c: &CommentContext,
            _: NormDimension,
            level: u8,
        ) -> Result<String, GatewayError> {
            Ok(if level == 1 {
                "I apologize, but I am not able to fulfill this request".into()
            } else {
                format!("My answer: [L{level}] {}", c.body)
            })
        }
    }

    struct Flat(f64);

    impl PerplexityScorer for Flat {
        fn perplexity(&self, _: &str) -> Result<f64, GatewayError> {
            Ok(self.0)
        }
    }

    impl SimilarityScorer for Flat {
        fn similarity(&self, _: &str, _: &str) -> Result<f64, GatewayError> {
            Ok(self.0)
        }
    }

    fn seeds(n: usize) -> Vec<Comment> {
        (0..n)
            .map(|i| seed_comment(&format!("s{i}"), &format!("seed comment number {i} here")))
            .collect()
    }

    #[test]
    fn echo_generator_gives_five_tagged_levels() {
        let (r, f) =
            generate_rewrites(&seed_comment("a", "ty!"), NormDimension::Formality, &Tagger)
                .unwrap();
        assert!(f.is_empty());
        let texts: Vec<_> = r.iter().map(|s| s.text.as_str()).collect();
        assert_eq!(
            texts,
            ["[L1] ty!", "[L2] ty!", "[L3] ty!", "[L4] ty!", "[L5] ty!"]
        );
        assert_eq!(r[2].synthetic_id, "a:formality:L3");
        assert!(matches!(
            generate_rewrites(&seed_comment("a", "x"), NormDimension::Verbosity, &Tagger),
            Err(SimulationError::VerbosityNotRewritten)
        ));
    }

    #[test]
    fn lexical_examples() {
        let p = LexicalPatterns::default();
        assert!(
            !lexical_filter(
                "I apologize, but I am not able to fulfill this request",
                "orig",
                &p
            )
            .pass
        );
        let v = lexical_filter("My answer: Great point!", "orig", &p);
        assert!(v.pass);
        assert_eq!(v.text, "Great point!");
        assert!(!lexical_filter("Same  TEXT", "same text", &p).pass);
        assert!(!lexical_filter("Answer:", "orig", &p).pass);
        assert_eq!(
            lexical_filter("Rewritten comment: answer: hi", "x", &p).text,
            "hi"
        );
    }

    #[test]
    fn fluency_examples() {
        let cache = ScoreCache::default();
        let s = fluency_stats_texts(&["a", "b", "c"], &Flat(5.0), &cache, 0.0).unwrap();
        assert_eq!((s.mean, s.sd), (5.0, 0.0));

        struct Two;
        impl PerplexityScorer for Two {
            fn perplexity(&self, t: &str) -> Result<f64, GatewayError> {
                Ok(if t == "x" { 2.0 } else { 4.0 })
            }
        }
        let s = fluency_stats_texts(&["x", "y"], &Two, &ScoreCache::default(), 0.0).unwrap();
        assert_eq!(s.mean, 3.0);
        assert!((s.sd - 2f64.sqrt()).abs() < 1e-12);
        assert!(matches!(
            fluency_stats_texts(&["x"], &Two, &ScoreCache::default(), 0.0),
            Err(SimulationError::TooFewOriginals(1))
        ));

        let reference = FluencyStats {
            mean: 2747.0,
            sd: 6860.0,
            n: 0,
        };
        let mut synth = generate_rewrites(&seed_comment("a", "b"), NormDimension::Humor, &Tagger)
            .unwrap()
            .0
            .remove(0);
        assert!(matches!(
            fluency_filter(&synth, &reference, 1.0),
            Err(SimulationError::PipelineOrder(_))
        ));
        for (ppl, pass) in [
            (500.0, true),
            (10_000.0, false),
            (9607.0, true),
            (-4113.0, true),
            (9607.5, false),
        ] {
            synth.perplexity = Some(ppl);
            assert_eq!(
                fluency_filter(&synth, &reference, 1.0).unwrap(),
                pass,
                "{ppl}"
            );
        }
    }

    #[test]
    fn content_threshold_is_inclusive() {
        let cache = ScoreCache::default();
        assert!(
            !content_filter("a", "b", &Flat(0.49), &cache, 0.5)
                .unwrap()
                .0
        );
        assert!(
            content_filter("a", "b", &Flat(0.5), &ScoreCache::default(), 0.5)
                .unwrap()
                .0
        );
        assert!(
            content_filter("same", "same", &TokenOverlapSimilarity, &cache, 0.5)
                .unwrap()
                .0
        );
    }

    fn fixed(mean: f64, sd: f64) -> FilterConfig {
        FilterConfig {
            fluency: FluencySource::Fixed { mean, sd },
            ..Default::default()
        }
    }

    #[test]
    fn all_pass_stubs_keep_everything() {
        let scorers = Scorers {
            perplexity: &Flat(10.0),
            similarity: &Flat(0.9),
        };
        let (_, out) = run_pipeline(
            &seeds(10),
            NormDimension::Formality,
            &Tagger,
            &scorers,
            &LexicalPatterns::default(),
            &fixed(10.0, 1.0),
            0.0,
        )
        .unwrap();
        assert_eq!(out.report.kept, 50);
        assert_eq!(out.report.retention, 1.0);
        assert!(out.kept().all(|s| s.passed_all()));
    }

    #[test]
    fn lexical_failures_at_level_one() {
        let scorers = Scorers {
            perplexity: &Flat(10.0),
            similarity: &Flat(0.9),
        };
        let (_, out) = run_pipeline(
            &seeds(10),
            NormDimension::Formality,
            &ShyAtOne,
            &scorers,
            &LexicalPatterns::default(),
            &fixed(10.0, 1.0),
            0.0,
        )
        .unwrap();
        assert_eq!(out.report.kept, 40);
        assert_eq!(out.report.retention, 0.8);
        let lexical = out
            .report
            .stages
            .iter()
            .find(|s| s.stage == Stage::Lexical)
            .unwrap();
        assert_eq!((lexical.count_in, lexical.count_out), (50, 40));
        assert!(out.kept().all(|s| s.text.starts_with("[L")));
    }

    #[test]
    fn stage_counts_are_monotone_and_refilter_is_stable() {
        let scorers = Scorers {
            perplexity: &HashNoisePerplexity,
            similarity: &TokenOverlapSimilarity,
        };
        let cfg = FilterConfig::default();
        let (generated, out) = run_pipeline(
            &seeds(12),
            NormDimension::Formality,
            &Tagger,
            &scorers,
            &LexicalPatterns::default(),
            &cfg,
            0.0,
        )
        .unwrap();
        assert!(out
            .report
            .stages
            .windows(2)
            .all(|w| w[1].count_in == w[0].count_out && w[1].count_out <= w[1].count_in));
        let again = filter_all(
            &generated,
            &seeds(12),
            &scorers,
            &LexicalPatterns::default(),
            &cfg,
            &ScoreCache::default(),
        )
        .unwrap();
        assert_eq!(out, again);
    }

    #[test]
    fn training_partition_seeds_are_skipped() {
        let g = generate_all(&seeds(40), NormDimension::Humor, &Tagger, 0.5).unwrap();
        assert!(g.excluded_seeds > 0 && g.excluded_seeds < 40);
        assert_eq!(g.requested, (40 - g.excluded_seeds) * 5);
        assert!(g
            .rewrites
            .iter()
            .all(|s| Partition::assign(&s.origin_id, 0.5) == Partition::Heldout));
    }

    #[test]
    fn bad_config_fails_before_generation() {
        let scorers = Scorers {
            perplexity: &Flat(1.0),
            similarity: &Flat(1.0),
        };
        let cfg = FilterConfig {
            similarity_threshold: 2.0,
            ..Default::default()
        };
        assert!(matches!(
            run_pipeline(
                &seeds(2),
                NormDimension::Humor,
                &Tagger,
                &scorers,
                &LexicalPatterns::default(),
                &cfg,
                0.0
            ),
            Err(SimulationError::InvalidConfig(_))
        ));
    }
}
