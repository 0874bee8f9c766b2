use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{
    parse_likert, parse_pairwise, ChatMessage, ChatRequest, Gateway, GatewayError, PromptTemplate,
    Templates,
};
use crate::normness::NormDimension;

/// What a model sees of a comment: its text and the post it answers.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommentContext {
    pub body: String,
    pub post_title: String,
    pub post_body: String,
}

impl CommentContext {
    pub fn new(
        body: impl Into<String>,
        post_title: impl Into<String>,
        post_body: impl Into<String>,
    ) -> Self {
        CommentContext {
            body: body.into(),
            post_title: post_title.into(),
            post_body: post_body.into(),
        }
    }
}

impl From<&crate::corpus::Comment> for CommentContext {
    fn from(c: &crate::corpus::Comment) -> Self {
        CommentContext::new(c.body.clone(), c.post_title.clone(), c.post_body.clone())
    }
}

/// Which of two presented comments shows more of a dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairChoice {
    First,
    Second,
}

pub trait LikertRater: Send + Sync {
    fn rate(&self, comment: &CommentContext, dimension: NormDimension) -> Result<u8, GatewayError>;

    fn is_deterministic(&self) -> bool {
        false
    }
}

pub trait PairwiseJudge: Send + Sync {
    fn judge(
        &self,
        first: &CommentContext,
        second: &CommentContext,
        dimension: NormDimension,
    ) -> Result<PairChoice, GatewayError>;

    fn is_deterministic(&self) -> bool {
        false
    }
}

pub trait RewriteGenerator: Send + Sync {
    /// Rewrites `comment` at Likert `level` (1..=5) of `dimension`.
    fn rewrite(
        &self,
        comment: &CommentContext,
        dimension: NormDimension,
        level: u8,
    ) -> Result<String, GatewayError>;

    fn is_deterministic(&self) -> bool {
        false
    }
}

pub trait PerplexityScorer: Send + Sync {
    /// A positive perplexity.
    fn perplexity(&self, text: &str) -> Result<f64, GatewayError>;

    fn is_deterministic(&self) -> bool {
        false
    }
}

pub trait SimilarityScorer: Send + Sync {
    /// Content similarity in `[-1, 1]`.
    fn similarity(&self, reference: &str, candidate: &str) -> Result<f64, GatewayError>;

    fn is_deterministic(&self) -> bool {
        false
    }
}

pub trait PreferenceBackend: Send + Sync {
    /// Predicted community preference for a constructed predictor input.
    fn score(&self, input: &str) -> Result<f64, GatewayError>;

    fn is_deterministic(&self) -> bool {
        false
    }
}

fn require_judged(dimension: NormDimension) -> Result<(), GatewayError> {
    if dimension.is_measured() {
        Err(GatewayError::Invalid(format!(
            "{dimension} is measured from text length, not by a model"
        )))
    } else {
        Ok(())
    }
}

/// Likert rating through a chat model.
pub struct LlmLikertRater {
    pub gateway: Arc<Gateway>,
    pub template: PromptTemplate,
    pub temperature: f64,
}

impl LlmLikertRater {
    pub fn new(gateway: Arc<Gateway>, temperature: f64) -> Self {
        LlmLikertRater {
            gateway,
            template: Templates::default().likert,
            temperature,
        }
    }
}

impl LikertRater for LlmLikertRater {
    fn rate(&self, comment: &CommentContext, dimension: NormDimension) -> Result<u8, GatewayError> {
        require_judged(dimension)?;
        let upper = dimension.name().to_uppercase();
        let scale = dimension.rating_definition().unwrap_or_default();
        let prompt = self.template.render(&BTreeMap::from([
            ("DIMENSION", upper.as_str()),
            ("DIMENSION-5POINT-LIKERT-SCALE", scale),
            ("TITLE", comment.post_title.as_str()),
            ("DESCRIPTION", comment.post_body.as_str()),
            ("COMMENT", comment.body.as_str()),
        ]))?;
        let ex = self.gateway.complete(&ChatRequest::new(
            vec![ChatMessage::user(prompt)],
            self.temperature,
        ))?;
        parse_likert(&ex.response)
    }
}

/// Pairwise judging through a chat model, with optional self-consistency voting.
pub struct LlmPairwiseJudge {
    pub gateway: Arc<Gateway>,
    pub system: String,
    pub template: PromptTemplate,
    /// Worked examples for the few-shot template; `None` selects the zero-shot prompt.
    pub examples: Option<String>,
    pub temperature: f64,
    /// Number of sampled answers combined by majority; 1 disables voting.
    pub votes: usize,
}

impl LlmPairwiseJudge {
    pub fn new(
        gateway: Arc<Gateway>,
        examples: Option<String>,
        temperature: f64,
        votes: usize,
    ) -> Self {
        let templates = Templates::default();
        let template = if examples.is_some() {
            templates.pairwise_fewshot
        } else {
            templates.pairwise_zeroshot
        };
        LlmPairwiseJudge {
            gateway,
            system: templates.pairwise_system,
            template,
            examples,
            temperature,
            votes: votes.max(1),
        }
    }

    fn prompt(
        &self,
        first: &CommentContext,
        second: &CommentContext,
        dimension: NormDimension,
    ) -> Result<String, GatewayError> {
        let pairwise = dimension.pairwise_phrase();
        let upper = dimension.name().to_uppercase();
        let mut slots = BTreeMap::from([
            ("DIMENSION_PAIRWISE", pairwise.as_str()),
            ("DIMENSION", upper.as_str()),
            (
                "DIMENSION_DEFINITION",
                dimension.rating_definition().unwrap_or_default(),
            ),
            ("TITLE1", first.post_title.as_str()),
            ("DESCRIPTION1", first.post_body.as_str()),
            ("COMMENT1", first.body.as_str()),
            ("TITLE2", second.post_title.as_str()),
            ("DESCRIPTION2", second.post_body.as_str()),
            ("COMMENT2", second.body.as_str()),
        ]);
        if let Some(examples) = &self.examples {
            slots.insert("EXAMPLES", examples.as_str());
        }
        self.template.render(&slots)
    }
}

impl PairwiseJudge for LlmPairwiseJudge {
    fn judge(
        &self,
        first: &CommentContext,
        second: &CommentContext,
        dimension: NormDimension,
    ) -> Result<PairChoice, GatewayError> {
        require_judged(dimension)?;
        let request = ChatRequest::new(
            vec![
                ChatMessage::system(self.system.clone()),
                ChatMessage::user(self.prompt(first, second, dimension)?),
            ],
            self.temperature,
        );
        let (mut firsts, mut seconds) = (0usize, 0usize);
        let mut last_err = None;
        for _ in 0..self.votes {
            match parse_pairwise(&self.gateway.complete(&request)?.response) {
                Ok(PairChoice::First) => firsts += 1,
                Ok(PairChoice::Second) => seconds += 1,
                Err(e) => last_err = Some(e),
            }
        }
        match firsts.cmp(&seconds) {
            std::cmp::Ordering::Greater => Ok(PairChoice::First),
            std::cmp::Ordering::Less => Ok(PairChoice::Second),
            std::cmp::Ordering::Equal => Err(last_err
                .unwrap_or_else(|| GatewayError::Parse("self-consistency vote tied".into()))),
        }
    }
}

/// Controlled rewriting through a chat model.
pub struct LlmRewriteGenerator {
    pub gateway: Arc<Gateway>,
    pub template: PromptTemplate,
    pub temperature: f64,
}

impl LlmRewriteGenerator {
    pub fn new(gateway: Arc<Gateway>, temperature: f64) -> Self {
        LlmRewriteGenerator {
            gateway,
            template: Templates::default().rewrite,
            temperature,
        }
    }
}

impl RewriteGenerator for LlmRewriteGenerator {
    fn rewrite(
        &self,
        comment: &CommentContext,
        dimension: NormDimension,
        level: u8,
    ) -> Result<String, GatewayError> {
        require_judged(dimension)?;
        let phrase = dimension
            .level_phrase(level)
            .ok_or_else(|| GatewayError::Invalid(format!("level {level} outside 1..5")))?;
        let prompt = self.template.render(&BTreeMap::from([
            (
                "RATING DEFINITION",
                dimension.rating_definition().unwrap_or_default(),
            ),
            ("LIKERT SCALE NORMNESS", phrase),
            ("NORM DIMENSION", dimension.name()),
            ("POST TITLE", comment.post_title.as_str()),
            ("COMMENT BODY", comment.body.as_str()),
        ]))?;
        let ex = self.gateway.complete(&ChatRequest::new(
            vec![ChatMessage::user(prompt)],
            self.temperature,
        ))?;
        Ok(ex.response.trim().to_owned())
    }
}
