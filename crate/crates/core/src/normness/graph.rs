use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{NormDimension, NormnessError};
use crate::corpus::Comment;

/// One judged pair. `beta == 1` means `second` was judged higher.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PairwiseLabel {
    pub first: String,
    pub second: String,
    pub dimension: NormDimension,
    pub beta: u8,
}

impl PairwiseLabel {
    pub fn new(
        first: impl Into<String>,
        second: impl Into<String>,
        dimension: NormDimension,
        second_higher: bool,
    ) -> Self {
        PairwiseLabel {
            first: first.into(),
            second: second.into(),
            dimension,
            beta: u8::from(second_higher),
        }
    }

    pub fn winner(&self) -> &str {
        if self.beta == 1 {
            &self.second
        } else {
            &self.first
        }
    }

    pub fn loser(&self) -> &str {
        if self.beta == 1 {
            &self.first
        } else {
            &self.second
        }
    }

    fn unordered(&self) -> (&str, &str) {
        if self.first <= self.second {
            (&self.first, &self.second)
        } else {
            (&self.second, &self.first)
        }
    }
}

/// A comment set plus the multiset of labels judged over it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonGraph {
    dimension: NormDimension,
    comments: BTreeSet<String>,
    labels: Vec<PairwiseLabel>,
}

impl ComparisonGraph {
    pub fn new(dimension: NormDimension, comments: impl IntoIterator<Item = String>) -> Self {
        ComparisonGraph {
            dimension,
            comments: comments.into_iter().collect(),
            labels: Vec::new(),
        }
    }

    pub fn dimension(&self) -> NormDimension {
        self.dimension
    }

    pub fn comments(&self) -> &BTreeSet<String> {
        &self.comments
    }

    pub fn labels(&self) -> &[PairwiseLabel] {
        &self.labels
    }

    pub fn add_label(&mut self, label: PairwiseLabel) -> Result<(), NormnessError> {
        if label.first == label.second {
            return Err(NormnessError::InvalidParameter(format!(
                "self-pair on {}",
                label.first
            )));
        }
        if label.beta > 1 {
            return Err(NormnessError::InvalidParameter(format!(
                "beta {} is not binary",
                label.beta
            )));
        }
        if label.dimension != self.dimension {
            return Err(NormnessError::InvalidParameter(format!(
                "label for {} in a {} graph",
                label.dimension, self.dimension
            )));
        }
        for id in [&label.first, &label.second] {
            if !self.comments.contains(id) {
                return Err(NormnessError::UnknownComment(id.clone()));
            }
        }
        self.labels.push(label);
        Ok(())
    }

    /// Re-checks every label after deserialization.
    pub fn validate(&self) -> Result<(), NormnessError> {
        let mut fresh = ComparisonGraph::new(self.dimension, self.comments.iter().cloned());
        self.labels
            .iter()
            .try_for_each(|l| fresh.add_label(l.clone()))
    }

    /// `(wins, comparisons)` per member comment, including zero rows.
    pub fn counts(&self) -> BTreeMap<&str, (usize, usize)> {
        let mut counts: BTreeMap<&str, (usize, usize)> =
            self.comments.iter().map(|c| (c.as_str(), (0, 0))).collect();
        for l in &self.labels {
            for id in [&l.first, &l.second] {
                counts.get_mut(id.as_str()).expect("validated on insert").1 += 1;
            }
            counts.get_mut(l.winner()).expect("validated on insert").0 += 1;
        }
        counts
    }

    pub fn comparisons(&self, id: &str) -> usize {
        self.labels
            .iter()
            .filter(|l| l.first == id || l.second == id)
            .count()
    }

    /// Fraction of repeatedly judged unordered pairs whose judgments disagree.
    /// Zero when no pair was judged twice.
    pub fn contradiction_rate(&self) -> f64 {
        let mut winners: BTreeMap<(&str, &str), BTreeSet<&str>> = BTreeMap::new();
        let mut seen: BTreeMap<(&str, &str), usize> = BTreeMap::new();
        for l in &self.labels {
            winners.entry(l.unordered()).or_default().insert(l.winner());
            *seen.entry(l.unordered()).or_default() += 1;
        }
        let repeated: Vec<_> = seen
            .iter()
            .filter(|(_, &n)| n > 1)
            .map(|(k, _)| k)
            .collect();
        if repeated.is_empty() {
            return 0.0;
        }
        let contradicted = repeated.iter().filter(|k| winners[*k].len() > 1).count();
        contradicted as f64 / repeated.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormnessScore {
    pub comment_id: String,
    pub dimension: NormDimension,
    pub value: f64,
    pub comparisons: usize,
    pub reliable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinRates {
    pub scores: Vec<NormnessScore>,
    /// Members with no comparisons at all.
    pub excluded: Vec<String>,
}

/// `Φ′ = wins / comparisons` for every member with at least one comparison.
///
/// Scores with fewer than `min_comparisons` comparisons are kept but flagged
/// unreliable. Output is sorted by comment id.
pub fn win_rate(graph: &ComparisonGraph, min_comparisons: usize) -> WinRates {
    let mut scores = Vec::new();
    let mut excluded = Vec::new();
    for (id, (wins, comparisons)) in graph.counts() {
        if comparisons == 0 {
            excluded.push(id.to_owned());
            continue;
        }
        scores.push(NormnessScore {
            comment_id: id.to_owned(),
            dimension: graph.dimension,
            value: wins as f64 / comparisons as f64,
            comparisons,
            reliable: comparisons >= min_comparisons,
        });
    }
    WinRates { scores, excluded }
}

/// Character-count win-rate of each comment against all others in the set,
/// with half credit for equal lengths.
pub fn verbosity_scale(comments: &[Comment]) -> Vec<NormnessScore> {
    let texts: Vec<(&str, &str)> = comments
        .iter()
        .map(|c| (c.comment_id.as_str(), c.body.as_str()))
        .collect();
    verbosity_scale_texts(&texts)
}

/// [`verbosity_scale`] over `(id, text)` pairs. A lone comment scores 0.5.
pub fn verbosity_scale_texts(texts: &[(&str, &str)]) -> Vec<NormnessScore> {
    let n = texts.len();
    let lengths: Vec<usize> = texts.iter().map(|(_, t)| t.chars().count()).collect();
    let mut sorted = lengths.clone();
    sorted.sort_unstable();
    let mut out: Vec<NormnessScore> = texts
        .iter()
        .zip(&lengths)
        .map(|((id, _), &len)| {
            let shorter = sorted.partition_point(|&l| l < len);
            let equal = sorted.partition_point(|&l| l <= len) - shorter - 1;
            let value = if n == 1 {
                0.5
            } else {
                (shorter as f64 + 0.5 * equal as f64) / (n - 1) as f64
            };
            NormnessScore {
                comment_id: (*id).to_owned(),
                dimension: NormDimension::Verbosity,
                value,
                comparisons: n - 1,
                reliable: true,
            }
        })
        .collect();
    out.sort_by(|a, b| a.comment_id.cmp(&b.comment_id));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const D: NormDimension = NormDimension::Formality;

    fn graph(n: usize, labels: &[(usize, usize, bool)]) -> ComparisonGraph {
        let mut g = ComparisonGraph::new(D, (1..=n).map(|i| format!("a{i}")));
        for &(i, j, hi) in labels {
            g.add_label(PairwiseLabel::new(format!("a{i}"), format!("a{j}"), D, hi))
                .unwrap();
        }
        g
    }

    fn values(w: &WinRates) -> Vec<f64> {
        w.scores.iter().map(|s| s.value).collect()
    }

    #[test]
    fn single_label() {
        let w = win_rate(&graph(2, &[(1, 2, true)]), 1);
        assert_eq!(values(&w), vec![0.0, 1.0]);
    }

    #[test]
    fn complete_total_order() {
        let labels: Vec<_> = (1..=4)
            .flat_map(|i| (i + 1..=4).map(move |j| (i, j, true)))
            .collect();
        let w = win_rate(&graph(4, &labels), 3);
        assert_eq!(values(&w), vec![0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0]);
        assert!(w.scores.iter().all(|s| s.reliable));
    }

    #[test]
    fn partial_graph() {
        let w = win_rate(
            &graph(4, &[(1, 2, true), (2, 3, true), (1, 3, true), (3, 4, true)]),
            30,
        );
        assert_eq!(values(&w), vec![0.0, 0.5, 2.0 / 3.0, 1.0]);
        assert!(w.scores.iter().all(|s| !s.reliable));
    }

    #[test]
    fn zero_comparison_members_are_excluded() {
        let w = win_rate(&graph(3, &[(1, 2, false)]), 1);
        assert_eq!(w.excluded, vec!["a3".to_string()]);
        assert_eq!(values(&w), vec![1.0, 0.0]);
    }

    #[test]
    fn membership_is_enforced() {
        let mut g = graph(2, &[]);
        assert!(matches!(
            g.add_label(PairwiseLabel::new("a1", "zz", D, true)),
            Err(NormnessError::UnknownComment(_))
        ));
        assert!(g
            .add_label(PairwiseLabel::new("a1", "a1", D, true))
            .is_err());
        assert!(g
            .add_label(PairwiseLabel::new("a1", "a2", NormDimension::Humor, true))
            .is_err());
    }

    #[test]
    fn contradictions() {
        let g = graph(3, &[(1, 2, true), (2, 1, true), (1, 3, true), (1, 3, true)]);
        assert_eq!(g.contradiction_rate(), 0.5);
        assert_eq!(graph(2, &[(1, 2, true)]).contradiction_rate(), 0.0);
    }

    #[test]
    fn verbosity_examples() {
        let v = |lens: &[usize]| {
            let texts: Vec<(String, String)> = lens
                .iter()
                .enumerate()
                .map(|(i, &l)| (format!("v{i}"), "x".repeat(l)))
                .collect();
            let refs: Vec<(&str, &str)> = texts
                .iter()
                .map(|(a, b)| (a.as_str(), b.as_str()))
                .collect();
            verbosity_scale_texts(&refs)
                .into_iter()
                .map(|s| s.value)
                .collect::<Vec<_>>()
        };
        assert_eq!(v(&[1, 5, 10]), vec![0.0, 0.5, 1.0]);
        assert_eq!(v(&[4, 4]), vec![0.5, 0.5]);
        assert_eq!(v(&[3, 3, 9]), vec![0.25, 0.25, 1.0]);
        assert_eq!(v(&[7]), vec![0.5]);
        assert!(v(&[]).is_empty());
    }

    proptest! {
        #[test]
        fn complete_graph_mean_is_half(perm in Just((0..7usize).collect::<Vec<_>>()).prop_shuffle()) {
            let n = perm.len();
            let mut labels = Vec::new();
            for i in 0..n {
                for j in i + 1..n {
                    labels.push((i + 1, j + 1, perm[i] < perm[j]));
                }
            }
            let w = win_rate(&graph(n, &labels), 1);
            let mean = values(&w).iter().sum::<f64>() / n as f64;
            prop_assert!((mean - 0.5).abs() < 1e-12);
        }

        #[test]
        fn range_and_extremes(labels in proptest::collection::vec((1usize..=6, 1usize..=6, any::<bool>()), 1..40)) {
            let labels: Vec<_> = labels.into_iter().filter(|(i, j, _)| i != j).collect();
            let g = graph(6, &labels);
            for s in win_rate(&g, 1).scores {
                let (wins, comps) = g.counts()[s.comment_id.as_str()];
                prop_assert!((0.0..=1.0).contains(&s.value));
                prop_assert_eq!(s.value == 0.0, wins == 0);
                prop_assert_eq!(s.value == 1.0, wins == comps);
            }
        }

        #[test]
        fn verbosity_matches_brute_force(lens in proptest::collection::vec(0usize..8, 2..12)) {
            let texts: Vec<(String, String)> = lens.iter().enumerate().map(|(i, &l)| (format!("v{i:02}"), "y".repeat(l))).collect();
            let refs: Vec<(&str, &str)> = texts.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
            let got = verbosity_scale_texts(&refs);
            for (i, s) in got.iter().enumerate() {
                let mut credit = 0.0;
                for (j, &l) in lens.iter().enumerate() {
                    if i != j {
                        credit += if lens[i] > l { 1.0 } else if lens[i] == l { 0.5 } else { 0.0 };
                    }
                }
                prop_assert!((s.value - credit / (lens.len() - 1) as f64).abs() < 1e-12);
            }
        }
    }
}
