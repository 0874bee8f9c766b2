//! Deterministic offline backends.
//!
//! These satisfy every backend contract without a network or model weights.
//! Their outputs are pure functions of their inputs, which makes any pipeline
//! run on them bit-reproducible.

use std::collections::BTreeSet;

use super::backends::{
    CommentContext, LikertRater, PairChoice, PairwiseJudge, PerplexityScorer, PreferenceBackend,
    RewriteGenerator, SimilarityScorer,
};
use super::GatewayError;
use crate::normness::NormDimension;
use crate::seed::{text_hash, unit_interval};

fn lexicon(dimension: NormDimension) -> (&'static [&'static str], &'static [&'static str]) {
    // (high pole, low pole)
    match dimension {
        NormDimension::Formality => (
            &[
                "therefore",
                "however",
                "appreciate",
                "thank you",
                "regards",
                "furthermore",
                "indeed",
                "certainly",
            ],
            &[
                "lol", "lmao", "ty", "thx", "gonna", "wanna", "u", "ur", "omg", "tbh", "yeah",
                "dude",
            ],
        ),
        NormDimension::Politeness => (
            &[
                "please",
                "thank you",
                "appreciate",
                "kindly",
                "sorry",
                "would you",
                "grateful",
                "respectfully",
            ],
            &[
                "shut up", "idiot", "stupid", "dumb", "get out", "whatever", "moron", "nonsense",
            ],
        ),
        NormDimension::Supportiveness => (
            &[
                "great",
                "love",
                "awesome",
                "proud",
                "glad",
                "good luck",
                "helpful",
                "you got this",
            ],
            &[
                "terrible", "hate", "worst", "pathetic", "loser", "trash", "garbage", "useless",
            ],
        ),
        NormDimension::Sarcasm => (
            &[
                "yeah right",
                "totally",
                "obviously",
                "oh great",
                "wow",
                "/s",
                "genius",
                "sure thing",
            ],
            &[
                "honestly",
                "sincerely",
                "genuinely",
                "truly",
                "frankly",
                "in earnest",
            ],
        ),
        NormDimension::Humor => (
            &[
                "lol",
                "haha",
                "lmao",
                "joke",
                "funny",
                "hilarious",
                "punchline",
                "kidding",
            ],
            &[
                "seriously",
                "important",
                "concern",
                "unfortunately",
                "carefully",
                "gravely",
            ],
        ),
        NormDimension::Verbosity => (&[], &[]),
    }
}

fn normalized_tokens(text: &str) -> String {
    let mut out = String::from(" ");
    for tok in text
        .to_lowercase()
        .split(|c: char| !(c.is_alphanumeric() || c == '/' || c == '\''))
        .filter(|t| !t.is_empty())
    {
        out.push_str(tok);
        out.push(' ');
    }
    out
}

/// Lexicon score: high-pole phrase hits minus low-pole phrase hits.
pub fn lexicon_score(text: &str, dimension: NormDimension) -> f64 {
    if dimension.is_measured() {
        return text.chars().count() as f64;
    }
    let norm = normalized_tokens(text);
    let (high, low) = lexicon(dimension);
    let hits = |words: &[&str]| {
        words
            .iter()
            .map(|w| norm.matches(&format!(" {w} ")).count())
            .sum::<usize>() as f64
    };
    let mut score = hits(high) - hits(low);
    if dimension == NormDimension::Formality {
        let trimmed = text.trim();
        if trimmed.chars().next().is_some_and(char::is_uppercase) {
            score += 0.25;
        }
        if trimmed.ends_with('.') {
            score += 0.25;
        }
        if trimmed.contains("!!") {
            score -= 0.25;
        }
    }
    score
}

/// Rates by character count: under 20 → 1, under 50 → 2, under 100 → 3,
/// under 200 → 4, otherwise 5.
#[derive(Debug, Clone, Copy, Default)]
pub struct CharCountRater;

impl LikertRater for CharCountRater {
    fn rate(
        &self,
        comment: &CommentContext,
        _dimension: NormDimension,
    ) -> Result<u8, GatewayError> {
        Ok(match comment.body.chars().count() {
            0..20 => 1,
            20..50 => 2,
            50..100 => 3,
            100..200 => 4,
            _ => 5,
        })
    }

    fn is_deterministic(&self) -> bool {
        true
    }
}

/// Judges by [`lexicon_score`]; equal scores are broken by a text hash, so the
/// winner does not depend on presentation order.
#[derive(Debug, Clone, Copy, Default)]
pub struct LexiconJudge;

impl PairwiseJudge for LexiconJudge {
    fn judge(
        &self,
        first: &CommentContext,
        second: &CommentContext,
        dimension: NormDimension,
    ) -> Result<PairChoice, GatewayError> {
        let (a, b) = (
            lexicon_score(&first.body, dimension),
            lexicon_score(&second.body, dimension),
        );
        let first_higher = if a != b {
            a > b
        } else {
            (text_hash(&first.body), &first.body) > (text_hash(&second.body), &second.body)
        };
        Ok(if first_higher {
            PairChoice::First
        } else {
            PairChoice::Second
        })
    }

    fn is_deterministic(&self) -> bool {
        true
    }
}

/// Rewrites by prepending pole-lexicon phrases: two low-pole phrases at
/// level 1, one at level 2, a neutral opener at 3, one high-pole phrase at 4
/// and two at 5.
#[derive(Debug, Clone, Copy, Default)]
pub struct LexiconRewriter;

impl RewriteGenerator for LexiconRewriter {
    fn rewrite(
        &self,
        comment: &CommentContext,
        dimension: NormDimension,
        level: u8,
    ) -> Result<String, GatewayError> {
        if dimension.is_measured() {
            return Err(GatewayError::Invalid("verbosity is not rewritten".into()));
        }
        let (high, low) = lexicon(dimension);
        let h = text_hash(&comment.body) as usize;
        let pick = |words: &[&'static str], k: usize| words[(h + k) % words.len()];
        let body = comment.body.trim();
        Ok(match level {
            1 => format!("{} {} {body}", pick(low, 0), pick(low, 1)),
            2 => format!("{} {body}", pick(low, 0)),
            3 => format!("well, {body}"),
            4 => format!("{}, {body}", pick(high, 0)),
            5 => format!("{} {}, {body}", pick(high, 0), pick(high, 1)),
            other => return Err(GatewayError::Invalid(format!("level {other} outside 1..5"))),
        })
    }

    fn is_deterministic(&self) -> bool {
        true
    }
}

/// Perplexity that grows with length and carries hash noise:
/// `exp(2 + ln(1 + words) + u)` with `u` in `[0, 1)` from the text hash.
#[derive(Debug, Clone, Copy, Default)]
pub struct HashNoisePerplexity;

impl PerplexityScorer for HashNoisePerplexity {
    fn perplexity(&self, text: &str) -> Result<f64, GatewayError> {
        let words = text.split_whitespace().count() as f64;
        Ok((2.0 + (1.0 + words).ln() + unit_interval(text_hash(text))).exp())
    }

    fn is_deterministic(&self) -> bool {
        true
    }
}

/// Jaccard overlap of lowercase word sets; two empty texts score 1.
#[derive(Debug, Clone, Copy, Default)]
pub struct TokenOverlapSimilarity;

impl SimilarityScorer for TokenOverlapSimilarity {
    fn similarity(&self, reference: &str, candidate: &str) -> Result<f64, GatewayError> {
        let set = |t: &str| -> BTreeSet<String> {
            normalized_tokens(t)
                .split_whitespace()
                .map(str::to_owned)
                .collect()
        };
        let (a, b) = (set(reference), set(candidate));
        if a.is_empty() && b.is_empty() {
            return Ok(1.0);
        }
        Ok(a.intersection(&b).count() as f64 / a.union(&b).count() as f64)
    }

    fn is_deterministic(&self) -> bool {
        true
    }
}

/// Preference proportional to input length: `0.1 * chars`.
#[derive(Debug, Clone, Copy, Default)]
pub struct LengthPreference;

impl PreferenceBackend for LengthPreference {
    fn score(&self, input: &str) -> Result<f64, GatewayError> {
        Ok(0.1 * input.chars().count() as f64)
    }

    fn is_deterministic(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(body: &str) -> CommentContext {
        CommentContext::new(body, "title", "")
    }

    #[test]
    fn judge_is_order_free() {
        let a = ctx("ty lol");
        let b = ctx("Thank you, I appreciate it.");
        let d = NormDimension::Formality;
        assert_eq!(LexiconJudge.judge(&a, &b, d).unwrap(), PairChoice::Second);
        assert_eq!(LexiconJudge.judge(&b, &a, d).unwrap(), PairChoice::First);
        let (x, y) = (ctx("alpha"), ctx("beta"));
        let xy = LexiconJudge.judge(&x, &y, d).unwrap();
        let yx = LexiconJudge.judge(&y, &x, d).unwrap();
        assert_ne!(xy, yx);
    }

    #[test]
    fn rewriter_levels_are_ordered_by_judge() {
        let d = NormDimension::Supportiveness;
        let original = ctx("the sample size looks small to me");
        let texts: Vec<String> = (1..=5)
            .map(|k| LexiconRewriter.rewrite(&original, d, k).unwrap())
            .collect();
        let scores: Vec<f64> = texts.iter().map(|t| lexicon_score(t, d)).collect();
        assert!(scores.windows(2).all(|w| w[0] < w[1]), "{scores:?}");
        assert!(texts.iter().all(|t| t != &original.body));
        assert!(LexiconRewriter.rewrite(&original, d, 6).is_err());
    }

    #[test]
    fn rater_buckets() {
        assert_eq!(
            CharCountRater
                .rate(&ctx("short"), NormDimension::Humor)
                .unwrap(),
            1
        );
        assert_eq!(
            CharCountRater
                .rate(&ctx(&"x".repeat(250)), NormDimension::Humor)
                .unwrap(),
            5
        );
    }

    #[test]
    fn similarity_and_perplexity() {
        let s = TokenOverlapSimilarity;
        assert_eq!(
            s.similarity("Same words here", "same words here").unwrap(),
            1.0
        );
        assert_eq!(s.similarity("a b", "c d").unwrap(), 0.0);
        assert_eq!(s.similarity("a b c", "a b d").unwrap(), 0.5);
        let p = HashNoisePerplexity.perplexity("hello there").unwrap();
        assert!(p > 0.0);
        assert_eq!(p, HashNoisePerplexity.perplexity("hello there").unwrap());
    }

    #[test]
    fn length_preference() {
        assert!((LengthPreference.score("thank you").unwrap() - 0.9).abs() < 1e-12);
    }
}
