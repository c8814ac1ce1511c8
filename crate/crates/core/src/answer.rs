//! Parsing of the `(k),(j),...` answer grammar.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseMode {
    Strict,
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedAnswer {
    pub indices: BTreeSet<u32>,
    pub mode: ParseMode,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("no valid class index in answer ({})", .warnings.join("; "))]
pub struct ParseFailure {
    pub warnings: Vec<String>,
}

fn token_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\(([0-9]+)\)").unwrap())
}

fn strict_tokens(text: &str) -> Option<Vec<&str>> {
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return None;
    }
    trimmed
        .split(',')
        .map(|tok| {
            let digits = tok.trim().strip_prefix('(')?.strip_suffix(')')?;
            (!digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit())).then_some(digits)
        })
        .collect()
}

/// Keeps in-range indices in order of appearance, deduplicated.
fn admit(tokens: &[&str], n_classes: u32, warnings: &mut Vec<String>) -> Vec<u32> {
    let mut out = Vec::new();
    for tok in tokens {
        match tok.parse::<u32>() {
            Ok(k) if (1..=n_classes).contains(&k) => {
                if !out.contains(&k) {
                    out.push(k);
                }
            }
            _ => warnings.push(format!("index ({tok}) outside 1..={n_classes} dropped")),
        }
    }
    out
}

/// Parses a model answer, falling back from the strict grammar to extracting
/// every `(k)` substring.
pub fn parse_answer(text: &str, n_classes: u32, multi_label: bool) -> Result<ParsedAnswer, ParseFailure> {
    let mut warnings = Vec::new();

    let mut parsed = strict_tokens(text).and_then(|tokens| {
        let kept = admit(&tokens, n_classes, &mut warnings);
        (!kept.is_empty()).then_some((kept, ParseMode::Strict))
    });
    if parsed.is_none() {
        let tokens: Vec<&str> = token_re()
            .captures_iter(text)
            .map(|c| c.get(1).unwrap().as_str())
            .collect();
        let mut lenient_warnings = Vec::new();
        let kept = admit(&tokens, n_classes, &mut lenient_warnings);
        if !kept.is_empty() {
            warnings.clear();
            warnings.push("answer did not match the strict format; used lenient extraction".into());
            warnings.extend(lenient_warnings);
            parsed = Some((kept, ParseMode::Lenient));
        } else if warnings.is_empty() {
            warnings = lenient_warnings;
        }
    }
    let Some((mut kept, mode)) = parsed else {
        if warnings.is_empty() {
            warnings.push("no (k) token found".into());
        }
        return Err(ParseFailure { warnings });
    };
    if !multi_label && kept.len() > 1 {
        warnings.push(format!(
            "single-label task got {} indices; kept the first ({})",
            kept.len(),
            kept[0]
        ));
        kept.truncate(1);
    }
    Ok(ParsedAnswer {
        indices: kept.into_iter().collect(),
        mode,
        warnings,
    })
}

/// Renders an index set in the answer grammar, e.g. `(1),(3)`.
pub fn format_answer<'a>(indices: impl IntoIterator<Item = &'a u32>) -> String {
    indices
        .into_iter()
        .map(|k| format!("({k})"))
        .collect::<Vec<_>>()
        .join(",")
}
