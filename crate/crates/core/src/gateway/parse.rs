use std::sync::OnceLock;

use regex::Regex;

use super::{GatewayError, PairChoice};

/// Extracts the first bracketed integer, which must lie in `1..=5`.
pub fn parse_likert(response: &str) -> Result<u8, GatewayError> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"\[\s*(-?\d+)\s*\]").expect("valid likert regex"));
    let cap = re
        .captures(response)
        .ok_or_else(|| GatewayError::Parse("no bracketed rating".into()))?;
    match cap[1].parse::<i64>() {
        Ok(r @ 1..=5) => Ok(r as u8),
        _ => Err(GatewayError::Parse(format!(
            "rating {} outside 1..5",
            &cap[1]
        ))),
    }
}

/// Reads a leading `{1}` or `{2}` answer token.
pub fn parse_pairwise(response: &str) -> Result<PairChoice, GatewayError> {
    let trimmed = response.trim_start().trim_start_matches(['"', '\'']);
    if trimmed.starts_with("{1}") {
        Ok(PairChoice::First)
    } else if trimmed.starts_with("{2}") {
        Ok(PairChoice::Second)
    } else {
        Err(GatewayError::Parse(
            "response does not start with {1} or {2}".into(),
        ))
    }
}
