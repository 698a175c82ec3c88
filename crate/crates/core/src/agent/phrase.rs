//! Rendering training phrases into user messages and matching user messages
//! back against training phrases.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use thiserror::Error;

use super::model::{AgentDefinition, Intent, Part, TrainingPhrase};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RenderError {
    #[error("no fill for slot `{0}`")]
    MissingFill(String),
}

/// Concatenates literals and slot fills, normalizing runs of whitespace to
/// single spaces.
pub fn render_phrase(
    phrase: &TrainingPhrase,
    fills: &BTreeMap<String, String>,
) -> Result<String, RenderError> {
    let mut raw = String::new();
    for part in &phrase.parts {
        match part {
            Part::Literal(text) => raw.push_str(text),
            Part::Slot(name) => match fills.get(name) {
                Some(v) => raw.push_str(v),
                None => return Err(RenderError::MissingFill(name.clone())),
            },
        }
    }
    Ok(raw.split_whitespace().collect::<Vec<_>>().join(" "))
}

const TERMINAL_PUNCTUATION: &[char] = &['.', '!', '?', ',', ';', ':'];

/// Case-folds, trims, collapses whitespace and strips terminal punctuation.
pub fn normalize_utterance(text: &str) -> String {
    let folded = text
        .split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ");
    folded.trim_end_matches(TERMINAL_PUNCTUATION).trim_end().to_string()
}

/// A value recognized for a slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotFill {
    pub entity: String,
    /// Canonical value (or normalized system-entity literal).
    pub value: String,
    /// The words of the user message that produced the value.
    pub raw: String,
}

/// A successful match of one training phrase.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhraseMatch {
    pub phrase_index: usize,
    /// Total length of the phrase's literal words, the first tie-break key.
    pub literal_len: usize,
    pub fills: BTreeMap<String, SlotFill>,
}

enum Element<'a> {
    Word(String),
    Slot(&'a str),
}

fn elements(phrase: &TrainingPhrase) -> Vec<Element<'_>> {
    let mut out = Vec::new();
    let last = phrase.parts.len().saturating_sub(1);
    for (idx, part) in phrase.parts.iter().enumerate() {
        match part {
            Part::Literal(text) => {
                let text = if idx == last {
                    normalize_utterance(text)
                } else {
                    text.to_lowercase()
                };
                out.extend(text.split_whitespace().map(|w| Element::Word(w.to_string())));
            }
            Part::Slot(name) => out.push(Element::Slot(name)),
        }
    }
    out
}

pub fn literal_len(phrase: &TrainingPhrase) -> usize {
    elements(phrase)
        .iter()
        .map(|e| match e {
            Element::Word(w) => w.chars().count(),
            Element::Slot(_) => 0,
        })
        .sum()
}

/// Matches an already-normalized utterance against one phrase of `intent`.
///
/// Literal words must match verbatim; each slot consumes one or more words
/// that parse as its parameter's entity (shortest span first).
pub fn match_phrase(
    agent: &AgentDefinition,
    intent: &Intent,
    phrase_index: usize,
    normalized: &str,
    reference: NaiveDate,
) -> Option<PhraseMatch> {
    let phrase = &intent.training_phrases[phrase_index];
    let elems = elements(phrase);
    let words: Vec<&str> = normalized.split_whitespace().collect();
    let mut fills = BTreeMap::new();
    if match_from(agent, intent, &elems, 0, &words, 0, reference, &mut fills) {
        Some(PhraseMatch { phrase_index, literal_len: literal_len(phrase), fills })
    } else {
        None
    }
}

#[allow(clippy::too_many_arguments)]
fn match_from(
    agent: &AgentDefinition,
    intent: &Intent,
    elems: &[Element<'_>],
    ei: usize,
    words: &[&str],
    wi: usize,
    reference: NaiveDate,
    fills: &mut BTreeMap<String, SlotFill>,
) -> bool {
    if ei == elems.len() {
        return wi == words.len();
    }
    match &elems[ei] {
        Element::Word(w) => {
            wi < words.len()
                && words[wi] == w
                && match_from(agent, intent, elems, ei + 1, words, wi + 1, reference, fills)
        }
        Element::Slot(name) => {
            let Some(param) = intent.parameter(name) else { return false };
            let Some(kind) = agent.entity_kind(&param.entity) else { return false };
            // leave at least one word for every remaining literal word
            let min_rest = elems[ei + 1..].len();
            for end in (wi + 1)..=words.len() {
                if words.len() - end < min_rest {
                    break;
                }
                let raw = words[wi..end].join(" ");
                let Some(value) = kind.parse(&raw, reference) else { continue };
                let previous = fills.insert(
                    name.to_string(),
                    SlotFill { entity: param.entity.clone(), value, raw },
                );
                if match_from(agent, intent, elems, ei + 1, words, end, reference, fills) {
                    return true;
                }
                match previous {
                    Some(p) => fills.insert(name.to_string(), p),
                    None => fills.remove(*name),
                };
            }
            false
        }
    }
}

/// The best phrase match of `intent`: longest literal length, then
/// declaration order.
pub fn best_match(
    agent: &AgentDefinition,
    intent: &Intent,
    normalized: &str,
    reference: NaiveDate,
) -> Option<PhraseMatch> {
    let mut best: Option<PhraseMatch> = None;
    for idx in 0..intent.training_phrases.len() {
        if let Some(m) = match_phrase(agent, intent, idx, normalized, reference) {
            if best.as_ref().is_none_or(|b| m.literal_len > b.literal_len) {
                best = Some(m);
            }
        }
    }
    best
}

/// Picks the winning intent among `candidates` for a normalized utterance:
/// longest literal length, then highest priority, then smallest name.
pub fn select_intent<'a>(
    agent: &'a AgentDefinition,
    candidates: impl IntoIterator<Item = &'a Intent>,
    normalized: &str,
    reference: NaiveDate,
) -> Option<(&'a Intent, PhraseMatch)> {
    let mut best: Option<(&Intent, PhraseMatch)> = None;
    for intent in candidates {
        if intent.is_fallback {
            continue;
        }
        let Some(m) = best_match(agent, intent, normalized, reference) else { continue };
        let better = match &best {
            None => true,
            Some((b, bm)) => {
                (m.literal_len, intent.priority, std::cmp::Reverse(&intent.name))
                    > (bm.literal_len, b.priority, std::cmp::Reverse(&b.name))
            }
        };
        if better {
            best = Some((intent, m));
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::entity::default_reference_date;
    use crate::agent::model::{EntityType, EntityValue, Parameter, ResponseVariantSet};

    fn convert_phrase() -> TrainingPhrase {
        TrainingPhrase::new([
            Part::Literal("Convert ".into()),
            Part::Slot("amount".into()),
            Part::Literal(" Dollars".into()),
        ])
    }

    #[test]
    fn render_convert_phrase() {
        let fills = BTreeMap::from([("amount".to_string(), "30".to_string())]);
        assert_eq!(render_phrase(&convert_phrase(), &fills).unwrap(), "Convert 30 Dollars");
    }

    #[test]
    fn render_literal_is_identity() {
        let p = TrainingPhrase::literal("hello");
        assert_eq!(render_phrase(&p, &BTreeMap::new()).unwrap(), "hello");
    }

    #[test]
    fn render_missing_fill() {
        assert_eq!(
            render_phrase(&convert_phrase(), &BTreeMap::new()),
            Err(RenderError::MissingFill("amount".into()))
        );
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize_utterance("  Now   INTO Euros?! "), "now into euros");
        assert_eq!(normalize_utterance("..."), "");
    }

    fn agent() -> AgentDefinition {
        let mut intent = Intent::new("Book");
        intent.parameters = vec![
            Parameter { name: "kind".into(), entity: "Kind".into(), required: false, prompts: vec![] },
            Parameter { name: "time".into(), entity: "sys.time".into(), required: false, prompts: vec![] },
        ];
        intent.training_phrases = vec![TrainingPhrase::new([
            Part::Literal("book a ".into()),
            Part::Slot("kind".into()),
            Part::Literal(" at ".into()),
            Part::Slot("time".into()),
        ])];
        intent.responses = vec![ResponseVariantSet { variants: vec!["ok".into()] }];
        AgentDefinition {
            name: "t".into(),
            entities: vec![EntityType {
                name: "Kind".into(),
                values: vec![
                    EntityValue { value: "driver license".into(), synonyms: vec![] },
                    EntityValue { value: "at".into(), synonyms: vec![] },
                ],
            }],
            intents: vec![intent],
        }
    }

    #[test]
    fn multiword_slots_and_backtracking() {
        let a = agent();
        let intent = &a.intents[0];
        let m = match_phrase(&a, intent, 0, "book a driver license at 3 pm", default_reference_date())
            .unwrap();
        assert_eq!(m.fills["kind"].value, "driver license");
        assert_eq!(m.fills["time"].value, "15:00");
        // "at" is itself a Kind value; the matcher must backtrack past it
        let m = match_phrase(&a, intent, 0, "book a at at 9am", default_reference_date()).unwrap();
        assert_eq!(m.fills["kind"].value, "at");
        assert_eq!(m.fills["time"].value, "09:00");
        assert!(match_phrase(&a, intent, 0, "book a boat at 9am", default_reference_date()).is_none());
    }
}
