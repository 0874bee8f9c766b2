//! Community preference: label transform, predictor inputs, pairwise
//! accuracy, z-scoring, and distilled preference deltas.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, SecondsFormat};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Comment;
use crate::gateway::{GatewayError, PreferenceBackend};
use crate::normness::NormDimension;
use crate::simulation::SyntheticComment;

/// Separator between input fields.
pub const SEPARATOR: &str = " <|endoftext|> ";

#[derive(Debug, thiserror::Error)]
pub enum PreferenceError {
    #[error("input variant {variant} needs a non-empty {field}")]
    MissingField {
        variant: InputVariant,
        field: &'static str,
    },
    #[error("no value for id {0}")]
    MissingId(String),
    #[error("undefined: {0}")]
    Undefined(String),
    #[error("rewrite {0} has not passed every filter")]
    Unfiltered(String),
    #[error("unknown input variant `{0}`")]
    UnknownVariant(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// `sign(x) · ln(1 + |x|)`.
pub fn label_transform(net_votes: i64) -> f64 {
    let x = net_votes as f64;
    if x == 0.0 {
        0.0
    } else {
        x.signum() * x.abs().ln_1p()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceLabel {
    pub comment_id: String,
    pub net_votes: i64,
    pub label: f64,
}

impl PreferenceLabel {
    pub fn of(comment: &Comment) -> Self {
        PreferenceLabel {
            comment_id: comment.comment_id.clone(),
            net_votes: comment.net_votes,
            label: label_transform(comment.net_votes),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InputVariant {
    #[serde(rename = "comment")]
    Comment,
    #[serde(rename = "comment+post")]
    CommentPost,
    #[serde(rename = "comment+post+time")]
    #[default]
    CommentPostTime,
    #[serde(rename = "comment+post+time+author")]
    CommentPostTimeAuthor,
}

impl InputVariant {
    pub const ALL: [InputVariant; 4] = [
        InputVariant::Comment,
        InputVariant::CommentPost,
        InputVariant::CommentPostTime,
        InputVariant::CommentPostTimeAuthor,
    ];

    pub fn name(self) -> &'static str {
        match self {
            InputVariant::Comment => "comment",
            InputVariant::CommentPost => "comment+post",
            InputVariant::CommentPostTime => "comment+post+time",
            InputVariant::CommentPostTimeAuthor => "comment+post+time+author",
        }
    }
}

impl fmt::Display for InputVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InputVariant {
    type Err = PreferenceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        InputVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| PreferenceError::UnknownVariant(s.to_owned()))
    }
}

/// Context shared by an original comment and its rewrites.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputContext<'a> {
    pub post_title: Option<&'a str>,
    pub created_at: Option<i64>,
    pub author: Option<&'a str>,
}

impl<'a> InputContext<'a> {
    pub fn of(comment: &'a Comment) -> Self {
        InputContext {
            post_title: Some(&comment.post_title),
            created_at: Some(comment.created_at),
            author: Some(&comment.author),
        }
    }
}

/// Joins body, title, ISO-8601 UTC time and author, as far as the variant asks.
pub fn build_input(
    variant: InputVariant,
    body: &str,
    context: &InputContext<'_>,
) -> Result<String, PreferenceError> {
    let need = |field: &'static str, value: Option<&str>| -> Result<String, PreferenceError> {
        value
            .filter(|v| !v.trim().is_empty())
            .map(str::to_owned)
            .ok_or(PreferenceError::MissingField { variant, field })
    };
    let mut parts = vec![need("comment body", Some(body))?];
    if variant != InputVariant::Comment {
        parts.push(need("post title", context.post_title)?);
    }
    if matches!(
        variant,
        InputVariant::CommentPostTime | InputVariant::CommentPostTimeAuthor
    ) {
        let time = context
            .created_at
            .and_then(|t| DateTime::from_timestamp(t, 0))
            .ok_or(PreferenceError::MissingField {
                variant,
                field: "timestamp",
            })?;
        parts.push(time.to_rfc3339_opts(SecondsFormat::Secs, true));
    }
    if variant == InputVariant::CommentPostTimeAuthor {
        parts.push(need("author", context.author)?);
    }
    Ok(parts.join(SEPARATOR))
}

/// Fraction of pairs whose score order agrees with their truth order.
///
/// Pairs with tied truths are left out of the denominator. Tied scores on an
/// untied pair count as wrong.
pub fn binary_accuracy(
    scores: &BTreeMap<String, f64>,
    truths: &BTreeMap<String, f64>,
    pairs: &[(String, String)],
) -> Result<f64, PreferenceError> {
    let get = |m: &BTreeMap<String, f64>, id: &str| {
        m.get(id)
            .copied()
            .ok_or_else(|| PreferenceError::MissingId(id.to_owned()))
    };
    let (mut correct, mut counted) = (0usize, 0usize);
    for (a, b) in pairs {
        let (sa, sb, ta, tb) = (
            get(scores, a)?,
            get(scores, b)?,
            get(truths, a)?,
            get(truths, b)?,
        );
        let truth = ta
            .partial_cmp(&tb)
            .ok_or_else(|| PreferenceError::Undefined(format!("NaN truth on ({a}, {b})")))?;
        if truth.is_eq() {
            continue;
        }
        counted += 1;
        if sa.partial_cmp(&sb) == Some(truth) {
            correct += 1;
        }
    }
    if counted == 0 {
        return Err(PreferenceError::Undefined(
            "every pair has tied truths".into(),
        ));
    }
    Ok(correct as f64 / counted as f64)
}

/// Mean and sample sd of a population.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: f64,
    pub sd: f64,
    /// True when the sd is zero; every standardized value is then 0.
    pub degenerate: bool,
}

impl Standardizer {
    pub fn identity() -> Self {
        Standardizer {
            mean: 0.0,
            sd: 1.0,
            degenerate: false,
        }
    }

    pub fn fit(values: &[f64]) -> Result<Self, PreferenceError> {
        if values.len() < 2 {
            return Err(PreferenceError::Undefined(format!(
                "z-score needs at least 2 values, got {}",
                values.len()
            )));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        Ok(Standardizer {
            mean,
            sd,
            degenerate: sd == 0.0,
        })
    }

    pub fn apply(&self, v: f64) -> f64 {
        if self.degenerate {
            0.0
        } else {
            (v - self.mean) / self.sd
        }
    }
}

/// Standardizes with the sample sd. Constant input gives zeros and a
/// degenerate flag.
pub fn zscore(values: &[f64]) -> Result<(Vec<f64>, Standardizer), PreferenceError> {
    let s = Standardizer::fit(values)?;
    Ok((values.iter().map(|&v| s.apply(v)).collect(), s))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceScore {
    pub id: String,
    pub community: String,
    pub raw: f64,
    pub z: f64,
    pub variant: InputVariant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceDelta {
    pub origin_id: String,
    pub synthetic_id: String,
    pub community: String,
    pub dimension: NormDimension,
    pub d_phi: f64,
    pub d_psi: f64,
}

/// `(Φ′(b) − Φ′(a), Ψ(b) − Ψ(a))`.
pub fn delta(phi_a: f64, phi_b: f64, psi_a: f64, psi_b: f64) -> (f64, f64) {
    (phi_b - phi_a, psi_b - psi_a)
}

/// Scores one origin/rewrite pair under identical context and returns the
/// standardized delta.
#[allow(clippy::too_many_arguments)]
pub fn preference_delta(
    origin: &Comment,
    rewrite: &SyntheticComment,
    backend: &dyn PreferenceBackend,
    variant: InputVariant,
    phi_origin: f64,
    phi_rewrite: f64,
    standardizer: &Standardizer,
) -> Result<PreferenceDelta, PreferenceError> {
    if !rewrite.passed_all() {
        return Err(PreferenceError::Unfiltered(rewrite.synthetic_id.clone()));
    }
    let ctx = InputContext::of(origin);
    let psi_o = backend.score(&build_input(variant, &origin.body, &ctx)?)?;
    let psi_r = backend.score(&build_input(variant, &rewrite.text, &ctx)?)?;
    let (d_phi, d_psi) = delta(
        phi_origin,
        phi_rewrite,
        standardizer.apply(psi_o),
        standardizer.apply(psi_r),
    );
    Ok(PreferenceDelta {
        origin_id: origin.comment_id.clone(),
        synthetic_id: rewrite.synthetic_id.clone(),
        community: origin.community.clone(),
        dimension: rewrite.dimension,
        d_phi,
        d_psi,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Distilled {
    /// Originals then rewrites, each sorted by id.
    pub scores: Vec<PreferenceScore>,
    pub deltas: Vec<PreferenceDelta>,
    pub standardizers: BTreeMap<String, Standardizer>,
    /// Kept rewrites skipped because either side had no normness score.
    pub missing_phi: usize,
}

/// Scores every origin and kept rewrite, z-scores per community over both
/// populations together, and forms one delta per rewrite.
pub fn distill(
    origins: &[Comment],
    rewrites: &[SyntheticComment],
    phi: &BTreeMap<String, f64>,
    backend: &dyn PreferenceBackend,
    variant: InputVariant,
) -> Result<Distilled, PreferenceError> {
    let by_id: BTreeMap<&str, &Comment> =
        origins.iter().map(|c| (c.comment_id.as_str(), c)).collect();
    for r in rewrites {
        if !r.passed_all() {
            return Err(PreferenceError::Unfiltered(r.synthetic_id.clone()));
        }
        if !by_id.contains_key(r.origin_id.as_str()) {
            return Err(PreferenceError::MissingId(r.origin_id.clone()));
        }
    }
    let mut inputs: Vec<(String, String, String)> = Vec::new();
    for c in by_id.values() {
        inputs.push((
            c.comment_id.clone(),
            c.community.clone(),
            build_input(variant, &c.body, &InputContext::of(c))?,
        ));
    }
    let mut sorted_rw: Vec<&SyntheticComment> = rewrites.iter().collect();
    sorted_rw.sort_by(|a, b| a.synthetic_id.cmp(&b.synthetic_id));
    for r in &sorted_rw {
        let origin = by_id[r.origin_id.as_str()];
        inputs.push((
            r.synthetic_id.clone(),
            origin.community.clone(),
            build_input(variant, &r.text, &InputContext::of(origin))?,
        ));
    }
    let raw: Vec<f64> = inputs
        .par_iter()
        .map(|(_, _, text)| backend.score(text))
        .collect::<Result<_, _>>()?;

    let mut per_community: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for ((_, community, _), &v) in inputs.iter().zip(&raw) {
        per_community.entry(community).or_default().push(v);
    }
    let standardizers: BTreeMap<String, Standardizer> = per_community
        .into_iter()
        .map(|(c, v)| Ok((c.to_owned(), Standardizer::fit(&v)?)))
        .collect::<Result<_, PreferenceError>>()?;

    let scores: Vec<PreferenceScore> = inputs
        .into_iter()
        .zip(raw)
        .map(|((id, community, _), raw)| {
            let z = standardizers[&community].apply(raw);
            PreferenceScore {
                id,
                community,
                raw,
                z,
                variant,
            }
        })
        .collect();
    let z: BTreeMap<&str, f64> = scores.iter().map(|s| (s.id.as_str(), s.z)).collect();

    let mut deltas = Vec::new();
    let mut missing_phi = 0;
    for r in sorted_rw {
        let (Some(&phi_o), Some(&phi_r)) = (phi.get(&r.origin_id), phi.get(&r.synthetic_id)) else {
            missing_phi += 1;
            continue;
        };
        let (d_phi, d_psi) = delta(
            phi_o,
            phi_r,
            z[r.origin_id.as_str()],
            z[r.synthetic_id.as_str()],
        );
        deltas.push(PreferenceDelta {
            origin_id: r.origin_id.clone(),
            synthetic_id: r.synthetic_id.clone(),
            community: r.community.clone(),
            dimension: r.dimension,
            d_phi,
            d_psi,
        });
    }
    Ok(Distilled {
        scores,
        deltas,
        standardizers,
        missing_phi,
    })
}

/// Binary accuracy of a backend against transformed net votes on `pairs`.
pub fn evaluate_backend(
    comments: &[Comment],
    pairs: &[(String, String)],
    backend: &dyn PreferenceBackend,
    variant: InputVariant,
) -> Result<f64, PreferenceError> {
    let scores: BTreeMap<String, f64> = comments
        .par_iter()
        .map(|c| {
            Ok((
                c.comment_id.clone(),
                backend.score(&build_input(variant, &c.body, &InputContext::of(c))?)?,
            ))
        })
        .collect::<Result<_, PreferenceError>>()?;
    let truths: BTreeMap<String, f64> = comments
        .iter()
        .map(|c| (c.comment_id.clone(), label_transform(c.net_votes)))
        .collect();
    binary_accuracy(&scores, &truths, pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::stubs::LengthPreference;
    use crate::simulation::{Stage, Verdict};
    use proptest::prelude::*;

    fn comment(id: &str, body: &str, votes: i64) -> Comment {
        Comment {
            comment_id: id.into(),
            parent_id: "p".into(),
            post_id: "p".into(),
            community: "r/x".into(),
            author: "alice".into(),
            body: body.into(),
            created_at: 1_600_000_000,
            retrieved_at: None,
            net_votes: votes,
            post_title: "Weekly thread".into(),
            post_body: String::new(),
        }
    }

    fn rewrite(origin: &str, level: u8, text: &str, filtered: bool) -> SyntheticComment {
        SyntheticComment {
            synthetic_id: SyntheticComment::make_id(origin, NormDimension::Formality, level),
            origin_id: origin.into(),
            community: "r/x".into(),
            dimension: NormDimension::Formality,
            target_level: level,
            text: text.into(),
            perplexity: Some(10.0),
            similarity: Some(0.9),
            verdicts: if filtered {
                Stage::FILTERS
                    .iter()
                    .map(|&stage| Verdict {
                        stage,
                        pass: true,
                        note: None,
                    })
                    .collect()
            } else {
                vec![]
            },
        }
    }

    #[test]
    fn label_examples() {
        assert_eq!(label_transform(0), 0.0);
        assert!((label_transform(9) - 10f64.ln()).abs() < 1e-12);
        assert!((label_transform(-9) + std::f64::consts::LN_10).abs() < 1e-12);
    }

    #[test]
    fn inputs() {
        let c = comment("a", "Nice work.", 1);
        let ctx = InputContext::of(&c);
        assert_eq!(
            build_input(InputVariant::Comment, "Nice work.", &ctx).unwrap(),
            "Nice work."
        );
        assert_eq!(
            build_input(InputVariant::CommentPostTimeAuthor, "Nice work.", &ctx).unwrap(),
            "Nice work. <|endoftext|> Weekly thread <|endoftext|> 2020-09-13T12:26:40Z <|endoftext|> alice"
        );
        let empty = InputContext {
            post_title: Some(""),
            ..ctx
        };
        assert!(matches!(
            build_input(InputVariant::CommentPost, "x", &empty),
            Err(PreferenceError::MissingField {
                field: "post title",
                ..
            })
        ));
        assert!(build_input(
            InputVariant::CommentPostTime,
            "x",
            &InputContext {
                created_at: None,
                ..ctx
            }
        )
        .is_err());
        assert_eq!(
            "comment+post".parse::<InputVariant>().unwrap(),
            InputVariant::CommentPost
        );
        assert!("post".parse::<InputVariant>().is_err());
    }

    fn map(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn accuracy_examples() {
        let truths = map(&[("a", 1.0), ("b", 2.0), ("c", 2.0)]);
        let scores = map(&[("a", 0.0), ("b", 5.0), ("c", 1.0)]);
        let pairs: Vec<(String, String)> = [("a", "b"), ("b", "c"), ("a", "c")]
            .iter()
            .map(|(x, y)| (x.to_string(), y.to_string()))
            .collect();
        assert_eq!(binary_accuracy(&scores, &truths, &pairs).unwrap(), 1.0);
        assert_eq!(binary_accuracy(&truths, &truths, &pairs).unwrap(), 1.0);

        let t = map(&[("a", 1.0), ("b", 2.0), ("c", 3.0), ("d", 4.0)]);
        let neg: BTreeMap<String, f64> = t.iter().map(|(k, v)| (k.clone(), -v)).collect();
        let p: Vec<(String, String)> = [("a", "b"), ("b", "c"), ("c", "d"), ("a", "d")]
            .iter()
            .map(|(x, y)| (x.to_string(), y.to_string()))
            .collect();
        assert_eq!(binary_accuracy(&neg, &t, &p).unwrap(), 0.0);

        let tied = vec![("b".to_string(), "c".to_string())];
        assert!(matches!(
            binary_accuracy(&scores, &truths, &tied),
            Err(PreferenceError::Undefined(_))
        ));
        assert!(matches!(
            binary_accuracy(&scores, &truths, &[("a".into(), "zz".into())]),
            Err(PreferenceError::MissingId(_))
        ));
    }

    #[test]
    fn zscore_examples() {
        let (z, _) = zscore(&[1.0, 3.0]).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((z[0] + h).abs() < 1e-12 && (z[1] - h).abs() < 1e-12);
        let (z, s) = zscore(&[4.0, 4.0, 4.0]).unwrap();
        assert!(s.degenerate && z.iter().all(|&v| v == 0.0));
        assert!(zscore(&[1.0]).is_err());
    }

    #[test]
    fn delta_closed_form() {
        let origin = comment("o", "ty!", 2);
        let rw = rewrite("o", 4, "thank you", true);
        let d = preference_delta(
            &origin,
            &rw,
            &LengthPreference,
            InputVariant::CommentPostTime,
            0.2,
            0.4,
            &Standardizer::identity(),
        )
        .unwrap();
        assert!((d.d_psi - 0.6).abs() < 1e-12);
        assert!((d.d_phi - 0.2).abs() < 1e-12);
        let unfiltered = rewrite("o", 4, "thank you", false);
        assert!(matches!(
            preference_delta(
                &origin,
                &unfiltered,
                &LengthPreference,
                InputVariant::Comment,
                0.2,
                0.4,
                &Standardizer::identity()
            ),
            Err(PreferenceError::Unfiltered(_))
        ));
    }

    #[test]
    fn distill_standardizes_over_both_populations() {
        let origins = vec![comment("o1", "ty!", 1), comment("o2", "ok then", 5)];
        let rewrites = vec![
            rewrite("o1", 5, "thank you kindly", true),
            rewrite("o2", 1, "k", true),
        ];
        let phi = map(&[("o1", 0.2), ("o2", 0.5), ("o1:formality:L5", 0.9)]);
        let out = distill(
            &origins,
            &rewrites,
            &phi,
            &LengthPreference,
            InputVariant::Comment,
        )
        .unwrap();
        assert_eq!(out.scores.len(), 4);
        assert_eq!(out.missing_phi, 1);
        let zs: Vec<f64> = out.scores.iter().map(|s| s.z).collect();
        assert!(zs.iter().sum::<f64>().abs() < 1e-12);
        let s = out.standardizers["r/x"];
        assert!((out.deltas[0].d_psi - 1.3 / s.sd).abs() < 1e-12);
        assert!((out.deltas[0].d_phi - 0.7).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn label_is_odd_and_increasing(x in -1_000_000i64..1_000_000, y in -1_000_000i64..1_000_000) {
            prop_assert_eq!(label_transform(-x), -label_transform(x));
            if x < y {
                prop_assert!(label_transform(x) < label_transform(y));
            }
        }

        #[test]
        fn zscore_is_standard(v in proptest::collection::vec(-1e3f64..1e3, 2..50)) {
            let (z, s) = zscore(&v).unwrap();
            prop_assume!(!s.degenerate && s.sd > 1e-6);
            let n = z.len() as f64;
            let mean = z.iter().sum::<f64>() / n;
            let sd = (z.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            prop_assert!(mean.abs() < 1e-9);
            prop_assert!((sd - 1.0).abs() < 1e-9);
        }

        #[test]
        fn delta_is_antisymmetric(a in -1.0f64..1.0, b in -1.0f64..1.0, c in -5.0f64..5.0, d in -5.0f64..5.0) {
            let (p1, q1) = delta(a, b, c, d);
            let (p2, q2) = delta(b, a, d, c);
            prop_assert_eq!(p1, -p2);
            prop_assert_eq!(q1, -q2);
        }
    }
}
