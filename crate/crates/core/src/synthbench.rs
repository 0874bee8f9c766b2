//! Planted-truth worlds and oracle backends for offline end-to-end checks.
//!
//! Every comment text carries its true normness as a `phi=` token, and every
//! rewrite also carries its origin's as `origin=`. The oracle backends read
//! those tokens, so the whole pipeline can run and be scored against ground
//! truth without any model.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::corpus::Comment;
use crate::gateway::{
    CommentContext, GatewayError, PairChoice, PairwiseJudge, PerplexityScorer, PreferenceBackend,
    RewriteGenerator, SimilarityScorer,
};
use crate::normness::{
    label_pairs, place_against_reference, sample_pairs, win_rate, LabelConfig, NormDimension,
    WinRates,
};
use crate::preference::{distill, InputVariant, Standardizer};
use crate::rpm::{build_curve, build_curve_points, pmr, prd, CurveConfig, RpmCurve};
use crate::seed;
use crate::simulation::{
    run_pipeline, FilterConfig, FluencySource, LexicalPatterns, Scorers, LEVELS,
};

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid synthbench config: {0}")]
    InvalidConfig(String),
    #[error("stage `{0}` produced no output")]
    MissingStage(&'static str),
    #[error("{0}")]
    Undefined(String),
    #[error("stage `{stage}` failed: {message}")]
    Stage {
        stage: &'static str,
        message: String,
    },
}

fn stage<E: std::fmt::Display>(stage: &'static str) -> impl Fn(E) -> SynthError {
    move |e| SynthError::Stage {
        stage,
        message: e.to_string(),
    }
}

/// Community response to a normness value or delta.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Response {
    /// `offset + height * exp(-((x - peak) / width)² / 2)`.
    Unimodal {
        peak: f64,
        width: f64,
        height: f64,
        offset: f64,
    },
    Linear {
        slope: f64,
        intercept: f64,
    },
}

impl Default for Response {
    fn default() -> Self {
        Response::Unimodal {
            peak: 0.7,
            width: 0.3,
            height: 2.0,
            offset: 0.0,
        }
    }
}

impl Response {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Response::Unimodal {
                peak,
                width,
                height,
                offset,
            } => offset + height * (-0.5 * ((x - peak) / width).powi(2)).exp(),
            Response::Linear { slope, intercept } => intercept + slope * x,
        }
    }

    /// Location of the maximum on `[lo, hi]`.
    pub fn argmax(&self, lo: f64, hi: f64) -> f64 {
        match *self {
            Response::Unimodal { peak, height, .. } if height >= 0.0 => peak.clamp(lo, hi),
            Response::Unimodal { peak, .. } => {
                if (peak - lo).abs() > (hi - peak).abs() {
                    lo
                } else {
                    hi
                }
            }
            Response::Linear { slope, .. } => {
                if slope >= 0.0 {
                    hi
                } else {
                    lo
                }
            }
        }
    }

    /// Composite Simpson integral over `[lo, hi]`.
    pub fn integral(&self, lo: f64, hi: f64) -> f64 {
        const STEPS: usize = 2000;
        let h = (hi - lo) / STEPS as f64;
        let mut s = self.eval(lo) + self.eval(hi);
        for i in 1..STEPS {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * self.eval(lo + h * i as f64);
        }
        s * h / 3.0
    }

    fn validate(&self) -> Result<(), SynthError> {
        let finite = match *self {
            Response::Unimodal {
                peak,
                width,
                height,
                offset,
            } => {
                if width <= 0.0 {
                    return Err(SynthError::InvalidConfig(format!(
                        "unimodal width must be positive, got {width}"
                    )));
                }
                [peak, width, height, offset].iter().all(|v| v.is_finite())
            }
            Response::Linear { slope, intercept } => slope.is_finite() && intercept.is_finite(),
        };
        if finite {
            Ok(())
        } else {
            Err(SynthError::InvalidConfig(
                "response parameters must be finite".into(),
            ))
        }
    }
}

/// Whether preference responds to normness deltas or to absolute normness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Space {
    Delta,
    Absolute,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub n: usize,
    pub epsilon: f64,
    pub sigma: f64,
    pub comparisons: usize,
    /// Label every pair instead of sampling `n * comparisons / 2`.
    pub complete: bool,
    pub response: Response,
    pub space: Space,
    pub dimension: NormDimension,
    pub n_bins: usize,
    pub min_count: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 42,
            n: 500,
            epsilon: 0.1,
            sigma: 0.5,
            comparisons: 30,
            complete: false,
            response: Response::default(),
            space: Space::Delta,
            dimension: NormDimension::Politeness,
            n_bins: 10,
            min_count: 50,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidConfig(m));
        if self.n < 2 {
            return bad(format!("need at least 2 comments, got {}", self.n));
        }
        if !(0.0..0.5).contains(&self.epsilon) {
            return bad(format!("judge error {} must be in [0, 0.5)", self.epsilon));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad(format!("vote noise {} must be non-negative", self.sigma));
        }
        if self.comparisons == 0 {
            return bad("comparisons per comment must be positive".into());
        }
        if self.dimension.is_measured() {
            return bad(format!("{} is not judged pairwise", self.dimension));
        }
        if self.n_bins < 2 {
            return bad(format!("need at least 2 bins, got {}", self.n_bins));
        }
        self.response.validate()
    }

    fn curve(&self) -> CurveConfig {
        let (lo, hi) = self.range();
        CurveConfig {
            n_bins: self.n_bins,
            lo,
            hi,
            min_count: self.min_count,
        }
    }

    fn range(&self) -> (f64, f64) {
        match self.space {
            Space::Delta => (-1.0, 1.0),
            Space::Absolute => (0.0, 1.0),
        }
    }
}

pub const COMMUNITY: &str = "synthetic";
const CREATED_AT: i64 = 1_600_000_000;

/// Rewrite level `k` (1..=5) targets the midpoint of the `k`-th fifth of `[0, 1]`.
pub fn level_midpoint(level: u8) -> f64 {
    (level as f64 - 0.5) / LEVELS.len() as f64
}

/// Reads a `key=value` token from a planted text.
pub fn planted_value(text: &str, key: &str) -> Option<f64> {
    text.split_whitespace()
        .find_map(|tok| tok.strip_prefix(key)?.strip_prefix('=')?.parse().ok())
}

fn original_text(index: usize, phi: f64) -> String {
    format!("[o{index}] phi={phi}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedWorld {
    pub seed: u64,
    pub n: usize,
    pub phi_star: BTreeMap<String, f64>,
    pub response: Response,
    pub space: Space,
    pub sigma: f64,
    pub epsilon: f64,
    pub comments: Vec<Comment>,
}

pub struct OracleBindings {
    pub judge: OracleJudge,
    pub rewriter: OracleRewriter,
    pub preference: OraclePreference,
    pub perplexity: ConstantPerplexity,
    pub similarity: ConstantSimilarity,
}

pub fn plant_world(config: &SynthConfig) -> Result<(PlantedWorld, OracleBindings), SynthError> {
    config.validate()?;
    let mut rng = seed::rng(config.seed, "world/phi", 0);
    let mut phi_star = BTreeMap::new();
    let mut comments = Vec::with_capacity(config.n);
    for i in 0..config.n {
        let phi: f64 = rng.random();
        let id = format!("o{i}");
        comments.push(Comment {
            comment_id: id.clone(),
            parent_id: format!("t3_p{}", i % 50),
            post_id: format!("p{}", i % 50),
            community: COMMUNITY.into(),
            author: format!("user{}", i % 97),
            body: original_text(i, phi),
            created_at: CREATED_AT,
            retrieved_at: None,
            net_votes: 0,
            post_title: format!("post {}", i % 50),
            post_body: String::new(),
        });
        phi_star.insert(id, phi);
    }
    let world = PlantedWorld {
        seed: config.seed,
        n: config.n,
        phi_star,
        response: config.response.clone(),
        space: config.space,
        sigma: config.sigma,
        epsilon: config.epsilon,
        comments,
    };
    let bindings = OracleBindings {
        judge: OracleJudge::new(config.seed, config.epsilon),
        rewriter: OracleRewriter,
        preference: OraclePreference {
            seed: config.seed,
            sigma: config.sigma,
            response: config.response.clone(),
            space: config.space,
        },
        perplexity: ConstantPerplexity(ORACLE_PERPLEXITY),
        similarity: ConstantSimilarity(1.0),
    };
    Ok((world, bindings))
}

/// Answers correctly except on a seeded `epsilon` fraction of ordered pairs.
pub struct OracleJudge {
    seed: u64,
    epsilon: f64,
    flips: AtomicUsize,
}

impl OracleJudge {
    pub fn new(seed: u64, epsilon: f64) -> Self {
        OracleJudge {
            seed,
            epsilon,
            flips: AtomicUsize::new(0),
        }
    }

    /// Answers flipped so far.
    pub fn flips(&self) -> usize {
        self.flips.load(Ordering::Relaxed)
    }
}

impl PairwiseJudge for OracleJudge {
    fn judge(
        &self,
        first: &CommentContext,
        second: &CommentContext,
        _dimension: NormDimension,
    ) -> Result<PairChoice, GatewayError> {
        let read = |c: &CommentContext| {
            planted_value(&c.body, "phi")
                .ok_or_else(|| GatewayError::Parse(format!("no planted value in `{}`", c.body)))
        };
        let (a, b) = (read(first)?, read(second)?);
        let h = seed::derive(
            self.seed,
            &format!("judge/{}\u{1f}{}", first.body, second.body),
            0,
        );
        let second_higher = if a == b { h & 1 == 1 } else { b > a };
        let flip = seed::unit_interval(h) < self.epsilon;
        if flip {
            self.flips.fetch_add(1, Ordering::Relaxed);
        }
        Ok(if second_higher != flip {
            PairChoice::Second
        } else {
            PairChoice::First
        })
    }

    fn is_deterministic(&self) -> bool {
        true
    }
}

/// Rewrites to the level midpoint, keeping a pointer to the origin's value.
pub struct OracleRewriter;

impl RewriteGenerator for OracleRewriter {
    fn rewrite(
        &self,
        comment: &CommentContext,
        _dimension: NormDimension,
        level: u8,
    ) -> Result<String, GatewayError> {
        if !(1..=5).contains(&level) {
            return Err(GatewayError::Invalid(format!(
                "level {level} outside 1..=5"
            )));
        }
        let origin = planted_value(&comment.body, "phi").ok_or_else(|| {
            GatewayError::Invalid(format!("no planted value in `{}`", comment.body))
        })?;
        let tag = comment
            .body
            .split_whitespace()
            .next()
            .unwrap_or("[?]")
            .trim_end_matches(']');
        Ok(format!(
            "{tag}:L{level}] phi={} origin={origin}",
            level_midpoint(level)
        ))
    }

    fn is_deterministic(&self) -> bool {
        true
    }
}

/// Response to the planted delta (or value) plus seeded Gaussian noise.
pub struct OraclePreference {
    seed: u64,
    sigma: f64,
    response: Response,
    space: Space,
}

impl OraclePreference {
    fn noise(&self, input: &str) -> f64 {
        if self.sigma == 0.0 {
            return 0.0;
        }
        let mut rng = seed::rng(self.seed, "pref-noise", seed::text_hash(input));
        Normal::new(0.0, self.sigma)
            .expect("sigma validated")
            .sample(&mut rng)
    }
}

impl PreferenceBackend for OraclePreference {
    fn score(&self, input: &str) -> Result<f64, GatewayError> {
        let phi = planted_value(input, "phi")
            .ok_or_else(|| GatewayError::Invalid("input has no planted value".into()))?;
        let signal = match self.space {
            Space::Absolute => self.response.eval(phi),
            Space::Delta => match planted_value(input, "origin") {
                Some(origin) => self.response.eval(phi - origin),
                None => return Ok(0.0),
            },
        };
        Ok(signal + self.noise(input))
    }

    fn is_deterministic(&self) -> bool {
        true
    }
}

const ORACLE_PERPLEXITY: f64 = 20.0;

pub struct ConstantPerplexity(pub f64);

impl PerplexityScorer for ConstantPerplexity {
    fn perplexity(&self, _text: &str) -> Result<f64, GatewayError> {
        Ok(self.0)
    }

    fn is_deterministic(&self) -> bool {
        true
    }
}

pub struct ConstantSimilarity(pub f64);

impl SimilarityScorer for ConstantSimilarity {
    fn similarity(&self, _reference: &str, _candidate: &str) -> Result<f64, GatewayError> {
        Ok(self.0)
    }

    fn is_deterministic(&self) -> bool {
        true
    }
}

fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut r = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, SynthError> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(SynthError::Undefined(format!(
            "spearman needs two equal series of 2+, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let mean = (x.len() as f64 + 1.0) / 2.0;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mean) * (b - mean);
        sxx += (a - mean).powi(2);
        syy += (b - mean).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(SynthError::Undefined(
            "spearman of a constant series".into(),
        ));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// What the pipeline produced, stage by stage.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageOutputs {
    pub winrate: Option<WinRates>,
    pub curve: Option<RpmCurve>,
    pub pairs: usize,
    pub labels: usize,
    pub judge_flips: usize,
    pub rewrites_kept: usize,
    pub deltas: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub dimension: NormDimension,
    pub spearman: f64,
    pub pmr_bin_error: usize,
    pub prd_sign_match: bool,
    pub pmr_bin: usize,
    pub target_bin: usize,
    pub prd: f64,
    /// Integral of the response over the reliable bins.
    pub response_integral: f64,
    pub scored: usize,
}

fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

pub fn recovery_report(
    world: &PlantedWorld,
    config: &SynthConfig,
    outputs: &StageOutputs,
) -> Result<RecoveryReport, SynthError> {
    let rates = outputs
        .winrate
        .as_ref()
        .ok_or(SynthError::MissingStage("winrate"))?;
    let curve = outputs
        .curve
        .as_ref()
        .ok_or(SynthError::MissingStage("rpm"))?;
    let (est, truth): (Vec<f64>, Vec<f64>) = rates
        .scores
        .iter()
        .filter_map(|s| world.phi_star.get(&s.comment_id).map(|t| (s.value, *t)))
        .unzip();
    let rho = spearman(&est, &truth)?;
    let peak = pmr(curve).map_err(stage("rpm"))?;
    let (lo, hi) = config.range();
    let cc = config.curve();
    let target_bin = cc
        .bin_of(world.response.argmax(lo, hi))
        .expect("argmax lies in range");
    let total = prd(curve).map_err(stage("rpm"))?;
    let integral: f64 = curve
        .reliable()
        .map(|b| world.response.integral(b.lo, b.hi))
        .sum();
    Ok(RecoveryReport {
        dimension: curve.dimension,
        spearman: rho,
        pmr_bin_error: peak.index.abs_diff(target_bin),
        prd_sign_match: sign(total) == sign(integral),
        pmr_bin: peak.index,
        target_bin,
        prd: total,
        response_integral: integral,
        scored: est.len(),
    })
}

/// Runs labeling, win-rates, simulation, placement, distillation and the
/// curve on a planted world.
pub fn run_stages(
    world: &PlantedWorld,
    oracles: &OracleBindings,
    config: &SynthConfig,
) -> Result<StageOutputs, SynthError> {
    let dim = config.dimension;
    let ids: Vec<String> = world
        .comments
        .iter()
        .map(|c| c.comment_id.clone())
        .collect();
    let contexts: BTreeMap<String, CommentContext> = world
        .comments
        .iter()
        .map(|c| (c.comment_id.clone(), CommentContext::from(c)))
        .collect();

    let pairs = if config.complete {
        let mut all = Vec::with_capacity(ids.len() * (ids.len() - 1) / 2);
        for i in 0..ids.len() {
            for j in i + 1..ids.len() {
                all.push((ids[i].clone(), ids[j].clone()));
            }
        }
        all
    } else {
        let total = ids.len() * (ids.len() - 1) / 2;
        let m = (ids.len() * config.comparisons / 2).min(total);
        sample_pairs(&ids, m, seed::derive(config.seed, "pairs", 0)).map_err(stage("sample"))?
    };
    let label_cfg = LabelConfig {
        seed: seed::derive(config.seed, "label", 0),
        ..LabelConfig::default()
    };
    let labeled =
        label_pairs(&pairs, dim, &oracles.judge, &contexts, &label_cfg).map_err(stage("label"))?;
    let rates = win_rate(&labeled.graph, config.comparisons);
    let mut out = StageOutputs {
        pairs: pairs.len(),
        labels: labeled.graph.labels().len(),
        ..Default::default()
    };
    let phi_orig: BTreeMap<String, f64> = rates
        .scores
        .iter()
        .map(|s| (s.comment_id.clone(), s.value))
        .collect();
    out.winrate = Some(rates);

    let curve = match config.space {
        Space::Delta => {
            let scorers = Scorers {
                perplexity: &oracles.perplexity,
                similarity: &oracles.similarity,
            };
            let filter = FilterConfig {
                fluency: FluencySource::Fixed {
                    mean: ORACLE_PERPLEXITY,
                    sd: 1.0,
                },
                ..FilterConfig::default()
            };
            let (_, filtered) = run_pipeline(
                &world.comments,
                dim,
                &oracles.rewriter,
                &scorers,
                &LexicalPatterns::default(),
                &filter,
                0.0,
            )
            .map_err(stage("simulate"))?;
            let kept: Vec<_> = filtered.kept().cloned().collect();
            out.rewrites_kept = kept.len();

            let items: Vec<(String, CommentContext)> = kept
                .iter()
                .map(|r| {
                    (
                        r.synthetic_id.clone(),
                        CommentContext::new(r.text.clone(), String::new(), String::new()),
                    )
                })
                .collect();
            let reference: Vec<(String, CommentContext)> = contexts.into_iter().collect();
            let placed = place_against_reference(
                &items,
                &reference,
                config.comparisons,
                config.comparisons,
                dim,
                &oracles.judge,
                &label_cfg,
            )
            .map_err(stage("winrate"))?;
            let mut phi = phi_orig;
            phi.extend(placed.scores.into_iter().map(|s| (s.comment_id, s.value)));

            let distilled = distill(
                &world.comments,
                &kept,
                &phi,
                &oracles.preference,
                InputVariant::Comment,
            )
            .map_err(stage("score-preference"))?;
            out.deltas = distilled.deltas.len();
            build_curve(&distilled.deltas, &config.curve()).map_err(stage("rpm"))?
        }
        Space::Absolute => {
            let mut points = Vec::new();
            let mut raw = Vec::new();
            for c in &world.comments {
                raw.push(
                    oracles
                        .preference
                        .score(&c.body)
                        .map_err(stage("score-preference"))?,
                );
            }
            let z = Standardizer::fit(&raw).map_err(stage("score-preference"))?;
            for (c, r) in world.comments.iter().zip(&raw) {
                if let Some(p) = phi_orig.get(&c.comment_id) {
                    points.push((*p, z.apply(*r)));
                }
            }
            out.deltas = points.len();
            build_curve_points(COMMUNITY, dim, &points, false, &config.curve())
                .map_err(stage("rpm"))?
        }
    };
    out.curve = Some(curve);
    out.judge_flips = oracles.judge.flips();
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthRun {
    pub config: SynthConfig,
    pub report: RecoveryReport,
    pub outputs: StageOutputs,
}

/// Plants a world from `config`, runs every stage on it and scores recovery.
pub fn run(config: &SynthConfig) -> Result<SynthRun, SynthError> {
    let (world, oracles) = plant_world(config)?;
    let outputs = run_stages(&world, &oracles, config)?;
    let report = recovery_report(&world, config, &outputs)?;
    Ok(SynthRun {
        config: config.clone(),
        report,
        outputs,
    })
}

impl RecoveryReport {
    pub fn summary(&self) -> String {
        format!(
            "{}: spearman {:.4}, PMR bin {} (target {}, off by {}), PRD {:.4} vs integral {:.4} ({})",
            self.dimension,
            self.spearman,
            self.pmr_bin,
            self.target_bin,
            self.pmr_bin_error,
            self.prd,
            self.response_integral,
            if self.prd_sign_match { "sign matches" } else { "sign differs" },
        )
    }
}
