use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use regex::Regex;

use super::GatewayError;
use crate::normness::NormDimension;

fn slot_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{\{([^{}]+)\}\}").expect("valid slot regex"))
}

/// A text template with `{{NAME}}` slots.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    pub name: String,
    pub body: String,
    pub slots: BTreeSet<String>,
    pub dimension: Option<NormDimension>,
}

impl PromptTemplate {
    /// Builds a template whose declared slots are exactly those referenced in `body`.
    pub fn new(name: impl Into<String>, body: impl Into<String>) -> Self {
        let body = body.into();
        let slots = Self::referenced(&body);
        PromptTemplate {
            name: name.into(),
            body,
            slots,
            dimension: None,
        }
    }

    /// Builds a template with an explicit slot declaration, checking that
    /// every referenced slot is declared.
    pub fn with_slots<I, S>(
        name: impl Into<String>,
        body: impl Into<String>,
        slots: I,
    ) -> Result<Self, GatewayError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let name = name.into();
        let body = body.into();
        let slots: BTreeSet<String> = slots.into_iter().map(Into::into).collect();
        if let Some(slot) = Self::referenced(&body)
            .into_iter()
            .find(|s| !slots.contains(s))
        {
            return Err(GatewayError::UndeclaredSlot {
                template: name,
                slot,
            });
        }
        Ok(PromptTemplate {
            name,
            body,
            slots,
            dimension: None,
        })
    }

    pub fn for_dimension(mut self, dimension: NormDimension) -> Self {
        self.dimension = Some(dimension);
        self
    }

    fn referenced(body: &str) -> BTreeSet<String> {
        slot_regex()
            .captures_iter(body)
            .map(|c| c[1].to_owned())
            .collect()
    }

    /// Substitutes every slot in one pass; substituted values are not rescanned.
    pub fn render(&self, slots: &BTreeMap<&str, &str>) -> Result<String, GatewayError> {
        if let Some(missing) = self.slots.iter().find(|s| !slots.contains_key(s.as_str())) {
            return Err(GatewayError::MissingSlot(missing.clone()));
        }
        let mut out = String::with_capacity(self.body.len());
        let mut last = 0;
        for cap in slot_regex().captures_iter(&self.body) {
            let whole = cap.get(0).expect("match");
            out.push_str(&self.body[last..whole.start()]);
            out.push_str(slots[&cap[1]]);
            last = whole.end();
        }
        out.push_str(&self.body[last..]);
        Ok(out)
    }
}

/// The shipped prompt assets.
#[derive(Debug, Clone)]
pub struct Templates {
    pub likert: PromptTemplate,
    pub pairwise_system: String,
    pub pairwise_fewshot: PromptTemplate,
    pub pairwise_zeroshot: PromptTemplate,
    pub rewrite: PromptTemplate,
}

impl Default for Templates {
    fn default() -> Self {
        Templates {
            likert: PromptTemplate::new(
                "likert_rating",
                include_str!("../../assets/prompts/likert_rating.txt"),
            ),
            pairwise_system: include_str!("../../assets/prompts/pairwise_system.txt")
                .trim()
                .to_owned(),
            pairwise_fewshot: PromptTemplate::new(
                "pairwise_fewshot",
                include_str!("../../assets/prompts/pairwise_fewshot.txt"),
            ),
            pairwise_zeroshot: PromptTemplate::new(
                "pairwise_zeroshot",
                include_str!("../../assets/prompts/pairwise_zeroshot.txt"),
            ),
            rewrite: PromptTemplate::new(
                "rewrite",
                include_str!("../../assets/prompts/rewrite.txt"),
            ),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_slots_is_identity() {
        let t = PromptTemplate::new("plain", "Nothing to fill {1} here.");
        assert_eq!(
            t.render(&BTreeMap::new()).unwrap(),
            "Nothing to fill {1} here."
        );
    }

    #[test]
    fn rewrite_template_renders_inputs() {
        let t = Templates::default().rewrite;
        let slots = BTreeMap::from([
            (
                "RATING DEFINITION",
                NormDimension::Formality.rating_definition().unwrap(),
            ),
            ("LIKERT SCALE NORMNESS", "Very Formal"),
            ("NORM DIMENSION", "formality"),
            ("POST TITLE", "What do you do on a rainy day?"),
            ("COMMENT BODY", "ty!"),
        ]);
        let text = t.render(&slots).unwrap();
        assert!(text.contains("POST TITLE (context): What do you do on a rainy day?"));
        assert!(text.contains("COMMENT: ty!"));
        assert!(text.contains("to make it Very Formal in the context"));
        assert!(!slot_regex().is_match(&text));
    }

    #[test]
    fn missing_slot_is_named() {
        let t = PromptTemplate::new("t", "COMMENT: {{COMMENT}}");
        let err = t.render(&BTreeMap::new()).unwrap_err();
        assert_eq!(err.to_string(), "missing slot COMMENT");
    }

    #[test]
    fn undeclared_slot_rejected() {
        let err = PromptTemplate::with_slots("t", "{{A}} {{B}}", ["A"]).unwrap_err();
        assert!(matches!(err, GatewayError::UndeclaredSlot { slot, .. } if slot == "B"));
    }

    #[test]
    fn values_are_not_rescanned() {
        let t = PromptTemplate::new("t", "{{A}}/{{B}}");
        let out = t
            .render(&BTreeMap::from([("A", "{{B}}"), ("B", "b")]))
            .unwrap();
        assert_eq!(out, "{{B}}/b");
    }

    #[test]
    fn shipped_templates_declare_expected_slots() {
        let t = Templates::default();
        assert!(t.likert.slots.contains("COMMENT"));
        assert!(t.pairwise_fewshot.slots.contains("EXAMPLES"));
        assert!(!t.pairwise_zeroshot.slots.contains("EXAMPLES"));
        assert_eq!(t.rewrite.slots.len(), 5);
    }
}
