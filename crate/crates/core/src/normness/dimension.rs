use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// A bidirectional behavioural axis along which comments are compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormDimension {
    Politeness,
    Supportiveness,
    Sarcasm,
    Humor,
    Formality,
    Verbosity,
}

impl NormDimension {
    pub const ALL: [NormDimension; 6] = [
        NormDimension::Politeness,
        NormDimension::Supportiveness,
        NormDimension::Sarcasm,
        NormDimension::Humor,
        NormDimension::Formality,
        NormDimension::Verbosity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NormDimension::Politeness => "politeness",
            NormDimension::Supportiveness => "supportiveness",
            NormDimension::Sarcasm => "sarcasm",
            NormDimension::Humor => "humor",
            NormDimension::Formality => "formality",
            NormDimension::Verbosity => "verbosity",
        }
    }

    pub fn pole_low(self) -> &'static str {
        match self {
            NormDimension::Politeness => "rude",
            NormDimension::Supportiveness => "toxic",
            NormDimension::Sarcasm => "genuine",
            NormDimension::Humor => "serious",
            NormDimension::Formality => "casual",
            NormDimension::Verbosity => "concise",
        }
    }

    pub fn pole_high(self) -> &'static str {
        match self {
            NormDimension::Politeness => "polite",
            NormDimension::Supportiveness => "supportive",
            NormDimension::Sarcasm => "sarcastic",
            NormDimension::Humor => "humorous",
            NormDimension::Formality => "formal",
            NormDimension::Verbosity => "verbose",
        }
    }

    /// Verbosity is measured from character counts, never judged or rewritten.
    pub fn is_measured(self) -> bool {
        self == NormDimension::Verbosity
    }

    /// Likert level phrases, level 1 first.
    pub fn level_phrases(self) -> Option<[&'static str; 5]> {
        Some(match self {
            NormDimension::Formality => [
                "Very Casual",
                "Somewhat Casual",
                "Neutral",
                "Somewhat Formal",
                "Very Formal",
            ],
            NormDimension::Supportiveness => [
                "Very Unsupportive",
                "Somewhat Unsupportive",
                "Neutral",
                "Somewhat Supportive",
                "Very Supportive",
            ],
            NormDimension::Sarcasm => [
                "Very Genuine",
                "Somewhat Genuine",
                "Neutral",
                "Somewhat Sarcastic",
                "Very Sarcastic",
            ],
            NormDimension::Politeness => [
                "Very Rude",
                "Somewhat Rude",
                "Neutral",
                "Somewhat Polite",
                "Very Polite",
            ],
            NormDimension::Humor => [
                "Very Serious",
                "Somewhat Serious",
                "Neutral",
                "Somewhat Humorous",
                "Very Humorous",
            ],
            NormDimension::Verbosity => return None,
        })
    }

    pub fn level_phrase(self, level: u8) -> Option<&'static str> {
        let phrases = self.level_phrases()?;
        phrases.get(usize::from(level).checked_sub(1)?).copied()
    }

    /// Phrase used by the pairwise prompt, e.g. `MORE FORMAL (or LESS CASUAL)`.
    pub fn pairwise_phrase(self) -> String {
        format!(
            "MORE {} (or LESS {})",
            self.pole_high().to_uppercase(),
            self.pole_low().to_uppercase()
        )
    }

    /// The five-point rating definitions shipped as text assets.
    pub fn rating_definition(self) -> Option<&'static str> {
        Some(match self {
            NormDimension::Formality => include_str!("../../assets/definitions/formality.txt"),
            NormDimension::Supportiveness => {
                include_str!("../../assets/definitions/supportiveness.txt")
            }
            NormDimension::Sarcasm => include_str!("../../assets/definitions/sarcasm.txt"),
            NormDimension::Politeness => include_str!("../../assets/definitions/politeness.txt"),
            NormDimension::Humor => include_str!("../../assets/definitions/humor.txt"),
            NormDimension::Verbosity => return None,
        })
    }
}

impl fmt::Display for NormDimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, thiserror::Error)]
#[error("unknown norm dimension `{0}`")]
pub struct UnknownDimension(pub String);

impl FromStr for NormDimension {
    type Err = UnknownDimension;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        NormDimension::ALL
            .into_iter()
            .find(|d| d.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| UnknownDimension(s.to_owned()))
    }
}
