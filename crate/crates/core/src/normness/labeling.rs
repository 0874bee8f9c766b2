use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ComparisonGraph, NormDimension, NormnessError, NormnessScore, PairwiseLabel};
use crate::gateway::{CommentContext, GatewayError, PairChoice, PairwiseJudge};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelConfig {
    pub seed: u64,
    /// Total judge calls per pair when responses do not parse.
    pub max_asks: usize,
    /// Swap each pair with probability 1/2 before judging.
    pub randomize_orientation: bool,
}

impl Default for LabelConfig {
    fn default() -> Self {
        LabelConfig {
            seed: 0,
            max_asks: 2,
            randomize_orientation: true,
        }
    }
}

/// A pair dropped after its ask budget ran out or the backend gave up.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeFailure {
    pub first: String,
    pub second: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelOutcome {
    pub graph: ComparisonGraph,
    pub failures: Vec<JudgeFailure>,
    /// Set when no pair could be labeled.
    pub warning: Option<String>,
}

fn swapped(seed: u64, a: &str, b: &str) -> bool {
    seed::derive(seed, &format!("orient/{a}/{b}"), 0) & 1 == 1
}

/// Asks the judge up to `max_asks` times. The outer error is fatal; the inner
/// one is a per-pair failure.
fn ask(
    judge: &dyn PairwiseJudge,
    first: &CommentContext,
    second: &CommentContext,
    dimension: NormDimension,
    max_asks: usize,
) -> Result<Result<PairChoice, String>, GatewayError> {
    let mut last = String::from("no asks allowed");
    for _ in 0..max_asks {
        match judge.judge(first, second, dimension) {
            Ok(choice) => return Ok(Ok(choice)),
            Err(GatewayError::Parse(m)) => last = format!("unparsable response: {m}"),
            Err(e) if e.is_fatal() => return Err(e),
            Err(e) => return Ok(Err(e.to_string())),
        }
    }
    Ok(Err(last))
}

fn lookup<'a>(
    contexts: &'a BTreeMap<String, CommentContext>,
    id: &str,
) -> Result<&'a CommentContext, NormnessError> {
    contexts
        .get(id)
        .ok_or_else(|| NormnessError::MissingContext(id.to_owned()))
}

/// Judges every pair and collects the labels into a graph over all pair members.
///
/// Labels are stored in the orientation that was shown to the judge. Pairs
/// whose responses never parse are dropped and reported in `failures`.
pub fn label_pairs(
    pairs: &[(String, String)],
    dimension: NormDimension,
    judge: &dyn PairwiseJudge,
    contexts: &BTreeMap<String, CommentContext>,
    config: &LabelConfig,
) -> Result<LabelOutcome, NormnessError> {
    for (a, b) in pairs {
        lookup(contexts, a)?;
        lookup(contexts, b)?;
    }
    let results: Vec<Result<PairwiseLabel, JudgeFailure>> = pairs
        .par_iter()
        .map(|(a, b)| {
            let (first, second) = if config.randomize_orientation && swapped(config.seed, a, b) {
                (b, a)
            } else {
                (a, b)
            };
            let verdict = ask(
                judge,
                &contexts[first],
                &contexts[second],
                dimension,
                config.max_asks,
            )?;
            Ok(match verdict {
                Ok(choice) => Ok(PairwiseLabel::new(
                    first.clone(),
                    second.clone(),
                    dimension,
                    choice == PairChoice::Second,
                )),
                Err(reason) => Err(JudgeFailure {
                    first: first.clone(),
                    second: second.clone(),
                    reason,
                }),
            })
        })
        .collect::<Result<_, GatewayError>>()?;

    let members = pairs.iter().flat_map(|(a, b)| [a.clone(), b.clone()]);
    let mut graph = ComparisonGraph::new(dimension, members);
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(label) => graph.add_label(label)?,
            Err(f) => failures.push(f),
        }
    }
    let warning = (graph.labels().is_empty() && !pairs.is_empty()).then(|| {
        format!(
            "all {} pairs failed to label; the graph is empty",
            pairs.len()
        )
    });
    Ok(LabelOutcome {
        graph,
        failures,
        warning,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Placement {
    pub scores: Vec<NormnessScore>,
    pub failures: Vec<JudgeFailure>,
}

/// Places each item on a reference scale by judging it against up to
/// `opponents` reference comments drawn without replacement.
///
/// The score is the item's win-rate over its successfully judged comparisons.
/// An item never faces itself when it is also in the reference set. Items
/// with no successful comparison get no score.
#[allow(clippy::too_many_arguments)]
pub fn place_against_reference(
    items: &[(String, CommentContext)],
    reference: &[(String, CommentContext)],
    opponents: usize,
    min_comparisons: usize,
    dimension: NormDimension,
    judge: &dyn PairwiseJudge,
    config: &LabelConfig,
) -> Result<Placement, NormnessError> {
    if opponents == 0 {
        return Err(NormnessError::InvalidParameter(
            "opponents must be positive".into(),
        ));
    }
    let position: BTreeMap<&str, usize> = reference
        .iter()
        .enumerate()
        .map(|(i, (r, _))| (r.as_str(), i))
        .collect();
    let per_item: Vec<(Option<NormnessScore>, Vec<JudgeFailure>)> = items
        .par_iter()
        .map(|(id, ctx)| {
            // Draw from the reference with the item's own slot removed.
            let own = position.get(id.as_str()).copied();
            let pool = reference.len() - usize::from(own.is_some());
            let mut rng = seed::rng(config.seed, &format!("place/{id}"), 0);
            let mut picks =
                rand::seq::index::sample(&mut rng, pool, opponents.min(pool)).into_vec();
            picks.sort_unstable();
            let (mut wins, mut judged) = (0usize, 0usize);
            let mut failures = Vec::new();
            for k in picks {
                let k = match own {
                    Some(o) if k >= o => k + 1,
                    _ => k,
                };
                let (rid, rctx) = &reference[k];
                let item_first = !(config.randomize_orientation && swapped(config.seed, id, rid));
                let (first, second) = if item_first { (ctx, rctx) } else { (rctx, ctx) };
                match ask(judge, first, second, dimension, config.max_asks)? {
                    Ok(choice) => {
                        judged += 1;
                        if (choice == PairChoice::First) == item_first {
                            wins += 1;
                        }
                    }
                    Err(reason) => failures.push(JudgeFailure {
                        first: id.clone(),
                        second: rid.clone(),
                        reason,
                    }),
                }
            }
            let score = (judged > 0).then(|| NormnessScore {
                comment_id: id.clone(),
                dimension,
                value: wins as f64 / judged as f64,
                comparisons: judged,
                reliable: judged >= min_comparisons,
            });
            Ok((score, failures))
        })
        .collect::<Result<_, GatewayError>>()?;

    let mut scores = Vec::new();
    let mut failures = Vec::new();
    for (s, f) in per_item {
        scores.extend(s);
        failures.extend(f);
    }
    Ok(Placement { scores, failures })
}
