use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::backends::Backends;
use super::config::{RunConfig, TableFormat};
use super::manifest::StageIo;
use super::{slug, RunError, Scope, Stage};
use crate::corpus::{self, Comment, DropReason, ParsedDump, Partition};
use crate::dynamics::{self, DynamicsConfig, ScoredItem, Span};
use crate::gateway::{CommentContext, GatewayError};
use crate::normness::{
    label_pairs, place_against_reference, sample_pairs, stratified_sample, verbosity_scale,
    win_rate, ComparisonGraph, LabelConfig, LikertRating, NormnessScore, StratifiedSample,
};
use crate::preference::{binary_accuracy, distill, label_transform, InputVariant, PreferenceScore};
use crate::rpm::{
    build_curve, build_curve_points, summarize, write_curve_csv, CurveConfig, RpmError,
};
use crate::seed;
use crate::simulation::{
    filter_all, generate_all, FilterReport, Generated, LexicalPatterns, ScoreCache, Scorers,
    SyntheticComment,
};
use crate::synthbench;
use crate::NormDimension;

const COMMENTS: &str = "ingest/comments.jsonl";

/// Cap on same-post pairs used for the preference accuracy check.
const MAX_ACCURACY_PAIRS: usize = 20_000;

pub fn execute(
    stage: Stage,
    cfg: &RunConfig,
    scope: &Scope,
    io: &mut StageIo<'_>,
) -> Result<(), RunError> {
    match stage {
        Stage::Ingest => ingest(cfg, io),
        Stage::Dynamics => run_dynamics(cfg, io),
        Stage::Synthbench => run_synthbench(cfg, io),
        Stage::Report => report(cfg, io),
        Stage::Rpm => keyed(stage, cfg, scope, io, None),
        _ => {
            let backends = Backends::from_config(cfg)?;
            let r = keyed(stage, cfg, scope, io, Some(&backends));
            io.usage = backends.usage();
            r
        }
    }
}

fn key(stage: &str, community: &str, dimension: NormDimension) -> String {
    format!("{stage}/{}/{dimension}", slug(community))
}

fn by_community(comments: Vec<Comment>) -> BTreeMap<String, Vec<Comment>> {
    let mut out: BTreeMap<String, Vec<Comment>> = BTreeMap::new();
    for c in comments {
        out.entry(c.community.clone()).or_default().push(c);
    }
    out
}

fn contexts(comments: &[Comment]) -> BTreeMap<String, CommentContext> {
    comments
        .iter()
        .map(|c| (c.comment_id.clone(), CommentContext::from(c)))
        .collect()
}

fn keyed(
    stage: Stage,
    cfg: &RunConfig,
    scope: &Scope,
    io: &mut StageIo<'_>,
    b: Option<&Backends>,
) -> Result<(), RunError> {
    let communities = scope.communities(cfg)?;
    let dimensions = scope.dimensions(cfg)?;
    let mut grouped = if stage == Stage::Rpm {
        BTreeMap::new()
    } else {
        by_community(io.read_jsonl(COMMENTS)?)
    };
    let b = || b.expect("stage binds backends");
    for c in &communities {
        let comments = grouped.remove(c).unwrap_or_default();
        if stage != Stage::Rpm && comments.is_empty() {
            io.note(format!("{c}: no comments survived ingest"));
            continue;
        }
        if stage == Stage::ScorePreference {
            score_community(cfg, c, &comments, &dimensions, b(), io)?;
            continue;
        }
        for &d in &dimensions {
            if d.is_measured() && !matches!(stage, Stage::Winrate | Stage::Rpm) {
                continue;
            }
            match stage {
                Stage::Sample => sample(cfg, c, d, &comments, b(), io)?,
                Stage::Label => label(cfg, c, d, &comments, b(), io)?,
                Stage::Winrate => winrate(cfg, c, d, &comments, b(), io)?,
                Stage::Simulate => simulate(cfg, c, d, &comments, b(), io)?,
                Stage::Filter => filter(cfg, c, d, &comments, b(), io)?,
                Stage::Rpm => rpm(cfg, c, d, io)?,
                _ => unreachable!("not a keyed stage"),
            }
        }
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct IngestSummary {
    posts: usize,
    raw_comments: usize,
    skipped_lines: usize,
    kept: usize,
    dropped: BTreeMap<DropReason, usize>,
    heldout: usize,
    predictor_train: usize,
}

fn read_dump(path: &Path) -> Result<ParsedDump, RunError> {
    let f = File::open(path).map_err(|e| RunError::Input(format!("{}: {e}", path.display())))?;
    corpus::parse_dump(BufReader::new(f))
        .map_err(|e| RunError::Input(format!("{}: {e}", path.display())))
}

fn ingest(cfg: &RunConfig, io: &mut StageIo<'_>) -> Result<(), RunError> {
    if cfg.inputs.is_empty() {
        return Err(RunError::Config("no [[inputs]] configured".into()));
    }
    let mut all = Vec::new();
    let mut summary = BTreeMap::new();
    for src in &cfg.inputs {
        let posts_path = cfg.resolve(&src.posts);
        let comments_path = cfg.resolve(&src.comments);
        let mut dump = read_dump(&posts_path)?;
        if comments_path != posts_path {
            let more = read_dump(&comments_path)?;
            dump.posts.extend(more.posts);
            dump.comments.extend(more.comments);
            dump.skipped += more.skipped;
        }
        for p in &mut dump.posts {
            p.community.clone_from(&src.community);
        }
        for c in &mut dump.comments {
            c.community.clone_from(&src.community);
        }
        let scrape_time = match src.scrape_time.or(cfg.ingest.scrape_time) {
            Some(t) => t,
            // Every comment carries its own retrieval time, so no fallback is consulted.
            None if dump.comments.iter().all(|c| c.retrieved_at.is_some()) => i64::MAX,
            None => {
                return Err(RunError::Config(format!(
                    "{}: comments without a retrieval time need scrape_time",
                    src.community
                )))
            }
        };
        let pre = corpus::preprocess(&dump.comments, &dump.posts, scrape_time)?;
        let heldout = pre
            .comments
            .iter()
            .filter(|c| {
                Partition::assign(&c.comment_id, cfg.ingest.train_fraction) == Partition::Heldout
            })
            .count();
        summary.insert(
            src.community.clone(),
            IngestSummary {
                posts: dump.posts.len(),
                raw_comments: dump.comments.len(),
                skipped_lines: dump.skipped,
                kept: pre.comments.len(),
                dropped: pre.dropped.clone(),
                heldout,
                predictor_train: pre.comments.len() - heldout,
            },
        );
        all.extend(pre.comments);
    }
    all.sort_by(|a, b| (&a.community, &a.comment_id).cmp(&(&b.community, &b.comment_id)));
    io.write_jsonl(COMMENTS, &all)?;
    if cfg.ingest.format != TableFormat::Jsonl {
        let tf = cfg.ingest.train_fraction;
        io.write_with("ingest/comments.csv", |w| {
            corpus::write_comments_csv(w, &all, tf)
        })?;
    }
    io.write_json("ingest/summary.json", &summary)
}

fn fatal_or_count<T>(
    results: Vec<Result<T, GatewayError>>,
    what: &str,
    io: &mut StageIo<'_>,
) -> Result<Vec<T>, RunError> {
    let mut ok = Vec::new();
    let mut failed = 0;
    for r in results {
        match r {
            Ok(v) => ok.push(v),
            Err(e) if e.is_fatal() => return Err(e.into()),
            Err(_) => failed += 1,
        }
    }
    if failed > 0 {
        io.note(format!("{what}: {failed} requests failed and were dropped"));
    }
    Ok(ok)
}

fn sample(
    cfg: &RunConfig,
    c: &str,
    d: NormDimension,
    comments: &[Comment],
    b: &Backends,
    io: &mut StageIo<'_>,
) -> Result<(), RunError> {
    let k = key("sample", c, d);
    let rated: Vec<Result<LikertRating, GatewayError>> = comments
        .par_iter()
        .map(|cm| {
            let r = b.rater.rate(&CommentContext::from(cm), d)?;
            LikertRating::new(&cm.comment_id, c, d, r)
                .map_err(|e| GatewayError::Parse(e.to_string()))
        })
        .collect();
    let ratings = fatal_or_count(rated, &k, io)?;
    io.write_jsonl(&format!("{k}/likert.jsonl"), &ratings)?;
    let s = stratified_sample(
        &ratings,
        cfg.sampling.likert_per_scale,
        seed::derive(cfg.seed, &format!("sample/{c}/{d}"), 0),
    )?;
    for sf in &s.shortfalls {
        io.note(format!(
            "{k}: scale {} had {} of {} comments",
            sf.scale, sf.available, sf.requested
        ));
    }
    let n = s.ids.len();
    let m = (n * cfg.sampling.comparisons / 2).min(n * n.saturating_sub(1) / 2);
    let pairs = sample_pairs(
        &s.ids,
        m,
        seed::derive(cfg.seed, &format!("pairs/{c}/{d}"), 0),
    )?;
    io.write_json(&format!("{k}/sample.json"), &s)?;
    io.write_jsonl(&format!("{k}/pairs.jsonl"), &pairs)
}

fn label_config(cfg: &RunConfig, tag: &str) -> LabelConfig {
    LabelConfig {
        seed: seed::derive(cfg.seed, tag, 0),
        max_asks: cfg.sampling.max_asks,
        randomize_orientation: true,
    }
}

fn label(
    cfg: &RunConfig,
    c: &str,
    d: NormDimension,
    comments: &[Comment],
    b: &Backends,
    io: &mut StageIo<'_>,
) -> Result<(), RunError> {
    let k = key("label", c, d);
    let pairs: Vec<(String, String)> =
        io.read_jsonl(&format!("{}/pairs.jsonl", key("sample", c, d)))?;
    let out = label_pairs(
        &pairs,
        d,
        b.judge.as_ref(),
        &contexts(comments),
        &label_config(cfg, &format!("label/{c}/{d}")),
    )?;
    if let Some(w) = out.warning {
        io.note(format!("{k}: {w}"));
    }
    let rate = out.graph.contradiction_rate();
    if rate > 0.0 {
        io.note(format!("{k}: contradiction rate {rate:.4}"));
    }
    io.write_json(&format!("{k}/graph.json"), &out.graph)?;
    io.write_jsonl(&format!("{k}/failures.jsonl"), &out.failures)
}

/// Sampled comments as placement opponents.
fn reference(
    sample: &StratifiedSample,
    ctx: &BTreeMap<String, CommentContext>,
) -> Vec<(String, CommentContext)> {
    sample
        .ids
        .iter()
        .filter_map(|id| ctx.get(id).map(|x| (id.clone(), x.clone())))
        .collect()
}

fn winrate(
    cfg: &RunConfig,
    c: &str,
    d: NormDimension,
    comments: &[Comment],
    b: &Backends,
    io: &mut StageIo<'_>,
) -> Result<(), RunError> {
    let k = key("winrate", c, d);
    if d.is_measured() {
        let scores = verbosity_scale(comments);
        io.write_jsonl(&format!("{k}/scores.jsonl"), &scores)?;
        return io.write_jsonl(&format!("{k}/placed.jsonl"), &scores);
    }
    let graph: ComparisonGraph = io.read_json(&format!("{}/graph.json", key("label", c, d)))?;
    let sample: StratifiedSample = io.read_json(&format!("{}/sample.json", key("sample", c, d)))?;
    let rates = win_rate(&graph, cfg.sampling.min_comparisons);
    if !rates.excluded.is_empty() {
        io.note(format!(
            "{k}: {} sampled comments had no comparisons",
            rates.excluded.len()
        ));
    }
    io.write_jsonl(&format!("{k}/scores.jsonl"), &rates.scores)?;

    let ctx = contexts(comments);
    let refs = reference(&sample, &ctx);
    if refs.len() < 2 {
        io.note(format!(
            "{k}: fewer than 2 sampled comments; nothing placed"
        ));
        return io.write_jsonl::<NormnessScore>(&format!("{k}/placed.jsonl"), &[]);
    }
    let items: Vec<(String, CommentContext)> = ctx.into_iter().collect();
    let placed = place_against_reference(
        &items,
        &refs,
        cfg.sampling.comparisons,
        cfg.sampling.min_comparisons,
        d,
        b.judge.as_ref(),
        &label_config(cfg, &format!("place/{c}/{d}")),
    )?;
    io.write_jsonl(&format!("{k}/placed.jsonl"), &placed.scores)?;
    io.write_jsonl(&format!("{k}/failures.jsonl"), &placed.failures)
}

fn simulate(
    cfg: &RunConfig,
    c: &str,
    d: NormDimension,
    comments: &[Comment],
    b: &Backends,
    io: &mut StageIo<'_>,
) -> Result<(), RunError> {
    let k = key("simulate", c, d);
    let tf = cfg.ingest.train_fraction;
    let heldout: Vec<&Comment> = comments
        .iter()
        .filter(|cm| Partition::assign(&cm.comment_id, tf) == Partition::Heldout)
        .collect();
    let n = cfg.simulation.rewrite_seeds.min(heldout.len());
    if n < cfg.simulation.rewrite_seeds {
        io.note(format!(
            "{k}: {} held-out comments for {} requested seeds",
            heldout.len(),
            cfg.simulation.rewrite_seeds
        ));
    }
    let mut rng = seed::rng(cfg.seed, &format!("seeds/{c}/{d}"), 0);
    let mut picks = rand::seq::index::sample(&mut rng, heldout.len(), n).into_vec();
    picks.sort_unstable();
    let seeds: Vec<Comment> = picks.into_iter().map(|i| heldout[i].clone()).collect();
    let generated = generate_all(&seeds, d, b.rewriter.as_ref(), tf)?;
    if !generated.failures.is_empty() {
        io.note(format!("{k}: {} rewrites failed", generated.failures.len()));
    }
    io.write_json(&format!("{k}/generated.json"), &generated)
}

fn filter(
    cfg: &RunConfig,
    c: &str,
    d: NormDimension,
    comments: &[Comment],
    b: &Backends,
    io: &mut StageIo<'_>,
) -> Result<(), RunError> {
    let k = key("filter", c, d);
    let generated: Generated =
        io.read_json(&format!("{}/generated.json", key("simulate", c, d)))?;
    let scorers = Scorers {
        perplexity: b.perplexity.as_ref(),
        similarity: b.similarity.as_ref(),
    };
    let out = filter_all(
        &generated,
        comments,
        &scorers,
        &LexicalPatterns::default(),
        &cfg.filter,
        &ScoreCache::default(),
    )?;
    let kept: Vec<SyntheticComment> = out.kept().cloned().collect();
    io.write_jsonl(&format!("{k}/all.jsonl"), &out.all)?;
    io.write_jsonl(&format!("{k}/kept.jsonl"), &kept)?;
    io.write_json(&format!("{k}/report.json"), &out.report)
}

#[derive(Debug, Serialize, Deserialize)]
struct Accuracy {
    community: String,
    variant: InputVariant,
    pairs: usize,
    accuracy: Option<f64>,
    note: Option<String>,
}

/// Same-post comment pairs with different vote labels, capped by a seeded draw.
fn same_post_pairs(comments: &[Comment], seed: u64) -> Vec<(String, String)> {
    let mut posts: BTreeMap<&str, Vec<&Comment>> = BTreeMap::new();
    for c in comments {
        posts.entry(&c.post_id).or_default().push(c);
    }
    let mut pairs = Vec::new();
    for group in posts.values() {
        for (i, a) in group.iter().enumerate() {
            for b in &group[i + 1..] {
                if label_transform(a.net_votes) != label_transform(b.net_votes) {
                    pairs.push((a.comment_id.clone(), b.comment_id.clone()));
                }
            }
        }
    }
    if pairs.len() > MAX_ACCURACY_PAIRS {
        let mut rng = seed::rng(seed, "accuracy-pairs", 0);
        let mut picks =
            rand::seq::index::sample(&mut rng, pairs.len(), MAX_ACCURACY_PAIRS).into_vec();
        picks.sort_unstable();
        pairs = picks.into_iter().map(|i| pairs[i].clone()).collect();
    }
    pairs
}

fn score_community(
    cfg: &RunConfig,
    c: &str,
    comments: &[Comment],
    dimensions: &[NormDimension],
    b: &Backends,
    io: &mut StageIo<'_>,
) -> Result<(), RunError> {
    let base = format!("score-preference/{}", slug(c));
    let variant = cfg.preference.variant;
    let originals = distill(
        comments,
        &[],
        &BTreeMap::new(),
        b.preference.as_ref(),
        variant,
    )?;
    io.write_jsonl(&format!("{base}/scores.jsonl"), &originals.scores)?;

    let pairs = same_post_pairs(
        comments,
        seed::derive(cfg.seed, &format!("accuracy/{c}"), 0),
    );
    let raw: BTreeMap<String, f64> = originals
        .scores
        .iter()
        .map(|s| (s.id.clone(), s.raw))
        .collect();
    let truths: BTreeMap<String, f64> = comments
        .iter()
        .map(|x| (x.comment_id.clone(), label_transform(x.net_votes)))
        .collect();
    let (accuracy, note) = match binary_accuracy(&raw, &truths, &pairs) {
        Ok(a) => (Some(a), None),
        Err(e) => (None, Some(e.to_string())),
    };
    io.write_json(
        &format!("{base}/accuracy.json"),
        &Accuracy {
            community: c.to_owned(),
            variant,
            pairs: pairs.len(),
            accuracy,
            note,
        },
    )?;

    let ctx = contexts(comments);
    for &d in dimensions.iter().filter(|d| !d.is_measured()) {
        let k = key("score-preference", c, d);
        let kept: Vec<SyntheticComment> =
            io.read_jsonl(&format!("{}/kept.jsonl", key("filter", c, d)))?;
        let sample: StratifiedSample =
            io.read_json(&format!("{}/sample.json", key("sample", c, d)))?;
        let origin_phi: Vec<NormnessScore> =
            io.read_jsonl(&format!("{}/placed.jsonl", key("winrate", c, d)))?;
        let refs = reference(&sample, &ctx);
        let items: Vec<(String, CommentContext)> = kept
            .iter()
            .filter_map(|s| {
                ctx.get(&s.origin_id).map(|o| {
                    (
                        s.synthetic_id.clone(),
                        CommentContext::new(&s.text, &o.post_title, &o.post_body),
                    )
                })
            })
            .collect();
        let placed = if refs.len() < 2 || items.is_empty() {
            Vec::new()
        } else {
            place_against_reference(
                &items,
                &refs,
                cfg.sampling.comparisons,
                cfg.sampling.min_comparisons,
                d,
                b.judge.as_ref(),
                &label_config(cfg, &format!("place-rewrite/{c}/{d}")),
            )?
            .scores
        };
        let phi: BTreeMap<String, f64> = origin_phi
            .iter()
            .chain(&placed)
            .map(|s| (s.comment_id.clone(), s.value))
            .collect();
        let distilled = distill(comments, &kept, &phi, b.preference.as_ref(), variant)?;
        if distilled.missing_phi > 0 {
            io.note(format!(
                "{k}: {} rewrites lacked a normness score",
                distilled.missing_phi
            ));
        }
        let rewrite_scores: Vec<&PreferenceScore> = distilled
            .scores
            .iter()
            .filter(|s| kept.iter().any(|k| k.synthetic_id == s.id))
            .collect();
        io.write_jsonl(&format!("{k}/rewrite_phi.jsonl"), &placed)?;
        io.write_jsonl(&format!("{k}/rewrite_scores.jsonl"), &rewrite_scores)?;
        io.write_jsonl(&format!("{k}/deltas.jsonl"), &distilled.deltas)?;
    }
    Ok(())
}

fn rpm(cfg: &RunConfig, c: &str, d: NormDimension, io: &mut StageIo<'_>) -> Result<(), RunError> {
    let k = key("rpm", c, d);
    let mut curve_cfg = CurveConfig {
        n_bins: cfg.rpm.bins,
        lo: -1.0,
        hi: 1.0,
        min_count: cfg.rpm.min_count,
    };
    // Measured dimensions have no rewrites, so their curve is preference
    // against normness of the original comments.
    let built = if d.is_measured() {
        curve_cfg.lo = 0.0;
        let phi: Vec<NormnessScore> =
            io.read_jsonl(&format!("{}/placed.jsonl", key("winrate", c, d)))?;
        let psi: Vec<PreferenceScore> =
            io.read_jsonl(&format!("score-preference/{}/scores.jsonl", slug(c)))?;
        let psi: BTreeMap<String, f64> = psi.into_iter().map(|s| (s.id, s.z)).collect();
        let points: Vec<(f64, f64)> = phi
            .iter()
            .filter_map(|p| psi.get(&p.comment_id).map(|z| (p.value, *z)))
            .collect();
        build_curve_points(c, d, &points, false, &curve_cfg)
    } else {
        let deltas = io.read_jsonl(&format!("{}/deltas.jsonl", key("score-preference", c, d)))?;
        build_curve(&deltas, &curve_cfg)
    };
    let curve = match built {
        Ok(curve) => curve,
        Err(RpmError::NoDeltas) => {
            io.note(format!("{k}: no deltas; curve skipped"));
            return Ok(());
        }
        Err(e) => return Err(e.into()),
    };
    io.write_with(&format!("{k}/curve.csv"), |w| write_curve_csv(w, &curve))?;
    match summarize(&curve) {
        Ok(s) => io.write_json(&format!("{k}/summary.json"), &s),
        Err(e) => {
            io.note(format!("{k}: {e}; no PMR or PRD"));
            Ok(())
        }
    }
}

#[derive(Debug, Serialize)]
struct DynamicsNotes {
    notes: Vec<String>,
    empty: Vec<dynamics::Cell>,
    cr_excluded: Vec<dynamics::Cell>,
    user_shift_skipped: Vec<String>,
}

#[derive(Serialize)]
struct SeriesRow<'a> {
    community: &'a str,
    dimension: NormDimension,
    time_bin: &'a str,
    start: i64,
    end: i64,
    bin: usize,
    bin_lo: f64,
    bin_hi: f64,
    ni: f64,
    n: usize,
    low_n: bool,
}

fn run_dynamics(cfg: &RunConfig, io: &mut StageIo<'_>) -> Result<(), RunError> {
    let communities = cfg.community_list();
    let dimensions = cfg.dimension_list();
    let mut grouped = by_community(io.read_jsonl(COMMENTS)?);
    let mut items: Vec<ScoredItem> = Vec::new();
    let mut all_comments = Vec::new();
    for c in &communities {
        let comments = grouped.remove(c).unwrap_or_default();
        if comments.is_empty() {
            continue;
        }
        let psi: Vec<PreferenceScore> =
            io.read_jsonl(&format!("score-preference/{}/scores.jsonl", slug(c)))?;
        let psi: BTreeMap<String, f64> = psi.into_iter().map(|s| (s.id, s.z)).collect();
        for &d in &dimensions {
            let phi: Vec<NormnessScore> =
                io.read_jsonl(&format!("{}/placed.jsonl", key("winrate", c, d)))?;
            let phi: BTreeMap<String, f64> =
                phi.into_iter().map(|s| (s.comment_id, s.value)).collect();
            for cm in &comments {
                if let (Some(&p), Some(&z)) = (phi.get(&cm.comment_id), psi.get(&cm.comment_id)) {
                    items.push(ScoredItem {
                        id: cm.comment_id.clone(),
                        community: c.clone(),
                        dimension: d,
                        author: cm.author.clone(),
                        created_at: cm.created_at,
                        phi: p,
                        psi: z,
                    });
                }
            }
        }
        all_comments.extend(comments);
    }
    let (s1, s2) = cfg.periods()?;
    let dcfg = DynamicsConfig {
        n_bins: cfg.dynamics.bins,
        s1,
        s2,
        seed: seed::derive(cfg.seed, "dynamics", 0),
    };
    let report = dynamics::analyze(&items, &dcfg)?;

    let pairs: Vec<(String, String)> = if cfg.dynamics.user_pairs.is_empty() {
        communities
            .iter()
            .flat_map(|a| {
                communities
                    .iter()
                    .filter(move |b| *b != a)
                    .map(move |b| (a.clone(), b.clone()))
            })
            .collect()
    } else {
        for (a, b) in &cfg.dynamics.user_pairs {
            for x in [a, b] {
                if !communities.contains(x) {
                    return Err(RunError::Config(format!(
                        "dynamics.user_pairs names unknown community `{x}`"
                    )));
                }
            }
        }
        cfg.dynamics.user_pairs.clone()
    };
    let mut shifts = Vec::new();
    let mut skipped = Vec::new();
    for (a, b) in &pairs {
        for &d in &dimensions {
            let pick = |c: &str| -> Vec<ScoredItem> {
                items
                    .iter()
                    .filter(|it| it.community == c && it.dimension == d)
                    .cloned()
                    .collect()
            };
            match dynamics::user_shift(
                a,
                b,
                &pick(a),
                &pick(b),
                cfg.dynamics.min_user_comments,
                cfg.dynamics.alpha,
            ) {
                Ok(r) => shifts.push(r),
                Err(e) => skipped.push(format!("{a}->{b}/{d}: {e}")),
            }
        }
    }

    io.write_with("dynamics/cells.csv", |w| {
        dynamics::write_cells_csv(w, &report.intensity, &report.crystallization)
    })?;
    io.write_with("dynamics/temporal.csv", |w| {
        dynamics::write_temporal_csv(w, &report.temporal)
    })?;
    io.write_with("dynamics/regression.csv", |w| {
        dynamics::write_regression_csv(w, &report.regression)
    })?;
    io.write_json("dynamics/regression.json", &report.regression)?;
    io.write_with("dynamics/user_shift.csv", |w| {
        dynamics::write_user_shift_csv(w, &shifts)
    })?;

    let series = match all_comments.iter().map(|c| c.created_at).min() {
        Some(t) => {
            let year = chrono::DateTime::from_timestamp(t, 0).map_or(1970, |d| d.year());
            let origin = NaiveDate::from_ymd_opt(year, 1, 1).expect("january first");
            let bins: Vec<corpus::TimeBin> =
                corpus::time_bin(&all_comments, cfg.dynamics.series_months, origin)?
                    .into_keys()
                    .collect();
            dynamics::intensity_series(&items, &bins, cfg.dynamics.bins)?
        }
        None => Vec::new(),
    };
    io.write_with("dynamics/series.csv", |w| {
        let mut out = csv::Writer::from_writer(w);
        for r in &series {
            let Span { label, start, end } = &r.cell.period;
            out.serialize(SeriesRow {
                community: &r.cell.community,
                dimension: r.cell.dimension,
                time_bin: label,
                start: *start,
                end: *end,
                bin: r.cell.bin,
                bin_lo: r.cell.bin_lo,
                bin_hi: r.cell.bin_hi,
                ni: r.ni,
                n: r.n,
                low_n: r.low_n,
            })?;
        }
        out.flush()?;
        Ok::<_, csv::Error>(())
    })?;
    io.write_json(
        "dynamics/notes.json",
        &DynamicsNotes {
            notes: report.notes,
            empty: report.empty,
            cr_excluded: report.cr_excluded,
            user_shift_skipped: skipped,
        },
    )
}

fn run_synthbench(cfg: &RunConfig, io: &mut StageIo<'_>) -> Result<(), RunError> {
    let run = synthbench::run(&cfg.synthbench)?;
    io.write_jsonl("synthbench/report.jsonl", &[&run.report])?;
    if let Some(curve) = &run.outputs.curve {
        io.write_with("synthbench/curve.csv", |w| write_curve_csv(w, curve))?;
    }
    let mut text = run.report.summary();
    text.push_str(&format!(
        "\npairs {}, labels {}, judge flips {} (labeling and placement), rewrites kept {}, deltas {}\n",
        run.outputs.pairs,
        run.outputs.labels,
        run.outputs.judge_flips,
        run.outputs.rewrites_kept,
        run.outputs.deltas
    ));
    io.write("synthbench/summary.txt", text.as_bytes())
}

#[derive(Serialize)]
struct RetentionRow<'a> {
    community: &'a str,
    dimension: NormDimension,
    stage: String,
    count_in: usize,
    count_out: usize,
}

#[derive(Serialize)]
struct ReportSummary {
    run_id: String,
    /// Stages with a manifest record. Timings stay in the manifest so this file is reproducible.
    stages: Vec<String>,
    artifacts: usize,
    rpm_curves: usize,
    requests: u64,
    cost_usd: f64,
}

/// Community name from a path component, when configured.
fn community_of(cfg: &RunConfig, component: &str) -> String {
    cfg.community_list()
        .into_iter()
        .find(|c| slug(c) == component)
        .unwrap_or_else(|| component.to_owned())
}

fn report(cfg: &RunConfig, io: &mut StageIo<'_>) -> Result<(), RunError> {
    let problems = io.dir().problems()?;
    if !problems.is_empty() {
        return Err(RunError::IntegrityList(problems));
    }

    let curves = io.registered("rpm/", "/curve.csv");
    let mut joined = csv::Writer::from_writer(Vec::new());
    let mut header_done = false;
    for path in &curves {
        let parts: Vec<&str> = path.split('/').collect();
        let (community, dimension) = (community_of(cfg, parts[1]), parts[2].to_owned());
        let space = match dimension.parse::<NormDimension>() {
            Ok(d) if d.is_measured() => "absolute",
            _ => "delta",
        };
        let bytes = io.read(path)?;
        let mut rdr = csv::Reader::from_reader(&bytes[..]);
        if !header_done {
            let mut h = csv::StringRecord::from(vec!["community", "dimension", "space"]);
            h.extend(
                rdr.headers()
                    .map_err(|e| RunError::Integrity(format!("{path}: {e}")))?
                    .iter(),
            );
            joined
                .write_record(&h)
                .map_err(|e| RunError::Other(e.to_string()))?;
            header_done = true;
        }
        for rec in rdr.records() {
            let rec = rec.map_err(|e| RunError::Integrity(format!("{path}: {e}")))?;
            let mut row =
                csv::StringRecord::from(vec![community.as_str(), dimension.as_str(), space]);
            row.extend(rec.iter());
            joined
                .write_record(&row)
                .map_err(|e| RunError::Other(e.to_string()))?;
        }
    }
    let joined = joined
        .into_inner()
        .map_err(|e| RunError::Other(e.to_string()))?;
    io.write("report/curves.csv", &joined)?;

    let mut summaries = Vec::new();
    for path in io.registered("rpm/", "/summary.json") {
        summaries.push(io.read_json::<serde_json::Value>(&path)?);
    }
    io.write_jsonl("report/rpm_summary.jsonl", &summaries)?;

    let mut retention = Vec::new();
    for path in io.registered("filter/", "/report.json") {
        let community = community_of(cfg, path.split('/').nth(1).unwrap_or_default());
        let r: FilterReport = io.read_json(&path)?;
        retention.push((community, r));
    }
    io.write_with("report/filter_retention.csv", |w| {
        let mut out = csv::Writer::from_writer(w);
        for (community, r) in &retention {
            for s in &r.stages {
                out.serialize(RetentionRow {
                    community,
                    dimension: r.dimension,
                    stage: serde_json::to_value(s.stage)
                        .ok()
                        .and_then(|v| v.as_str().map(str::to_owned))
                        .unwrap_or_default(),
                    count_in: s.count_in,
                    count_out: s.count_out,
                })?;
            }
        }
        out.flush()?;
        Ok::<_, csv::Error>(())
    })?;

    let mut accuracy = Vec::new();
    for path in io.registered("score-preference/", "/accuracy.json") {
        accuracy.push(io.read_json::<Accuracy>(&path)?);
    }
    io.write_jsonl("report/accuracy.jsonl", &accuracy)?;

    for (from, to) in [
        ("dynamics/regression.csv", "report/regression.csv"),
        ("dynamics/user_shift.csv", "report/user_shift.csv"),
        ("synthbench/summary.txt", "report/synthbench.txt"),
    ] {
        if io.exists(from) {
            let bytes = io.read(from)?;
            io.write(to, &bytes)?;
        }
    }

    let m = &io.dir().manifest;
    let summary = ReportSummary {
        run_id: m.run_id.clone(),
        stages: Stage::ALL
            .iter()
            .map(|s| s.name())
            .filter(|n| m.stages.contains_key(*n))
            .map(str::to_owned)
            .collect(),
        artifacts: m.artifacts().len(),
        rpm_curves: curves.len(),
        requests: m.usage.requests,
        cost_usd: m.cost_usd,
    };
    io.write_json("report/summary.json", &summary)
}
