//! Alternative user messages at a point of a conversation: other training
//! phrases of the same intent, or entity values when the bot prompts for one.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use thiserror::Error;

use crate::agent::phrase::{normalize_utterance, select_intent};
use crate::agent::{default_reference_date, render_phrase, AgentDefinition, Part};
use crate::convo::{Convo, Step};

pub const DEFAULT_MAX_COMBINATIONS: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpandOptions {
    /// Cap on entity-value combinations for multi-entity prompts.
    pub max_combinations: usize,
    pub reference_date: NaiveDate,
}

impl Default for ExpandOptions {
    fn default() -> Self {
        ExpandOptions {
            max_combinations: DEFAULT_MAX_COMBINATIONS,
            reference_date: default_reference_date(),
        }
    }
}

/// A bot reply received while walking a seed.
#[derive(Debug, Clone, Copy)]
pub struct BotMessage<'a> {
    pub text: &'a str,
    /// Non-prompt replies received so far in this conversation, this one
    /// included. Locates the seed's next intent-level user message.
    pub completed: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExpandError {
    #[error("user message {0:?} matches no intent")]
    UnknownIntent(String),
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '-'
}

/// Entities named by `@Name` references in `text`, in first-occurrence order.
///
/// A reference needs a known entity name right after the `@`, not preceded by
/// an alphanumeric character (so e-mail addresses are plain text) and not
/// followed by an identifier character.
pub fn entity_references(text: &str, agent: &AgentDefinition) -> Vec<String> {
    let mut names = agent.referenceable_entities();
    names.sort_by_key(|n| std::cmp::Reverse(n.len()));
    let mut out: Vec<String> = Vec::new();
    for (i, c) in text.char_indices() {
        if c != '@' {
            continue;
        }
        if text[..i].chars().next_back().is_some_and(|p| p.is_alphanumeric()) {
            continue;
        }
        let rest = &text[i + 1..];
        let found = names.iter().find(|name| {
            rest.starts_with(name.as_str())
                && !rest[name.len()..].chars().next().is_some_and(is_ident_char)
        });
        if let Some(name) = found {
            if !out.contains(name) {
                out.push(name.clone());
            }
        }
    }
    out
}

/// Row-major cartesian product of entity values, joined by single spaces.
pub fn entity_value_combinations(
    entities: &[String],
    agent: &AgentDefinition,
    max_combinations: usize,
) -> Vec<String> {
    let value_lists: Vec<Vec<String>> = entities.iter().map(|e| agent.entity_values(e)).collect();
    if value_lists.is_empty() || value_lists.iter().any(Vec::is_empty) {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut odometer = vec![0usize; value_lists.len()];
    'outer: while out.len() < max_combinations {
        out.push(
            odometer
                .iter()
                .zip(&value_lists)
                .map(|(&i, values)| values[i].as_str())
                .collect::<Vec<_>>()
                .join(" "),
        );
        for pos in (0..odometer.len()).rev() {
            odometer[pos] += 1;
            if odometer[pos] < value_lists[pos].len() {
                continue 'outer;
            }
            odometer[pos] = 0;
        }
        break;
    }
    out
}

/// Whether each user step of `t` answers a bot prompt (`@` reference).
fn intent_level_me_steps<'a>(t: &'a Convo, agent: &AgentDefinition) -> Vec<&'a str> {
    let mut out = Vec::new();
    for (i, step) in t.steps.iter().enumerate() {
        let Step::Me(text) = step else { continue };
        let answers_prompt = i > 0
            && matches!(&t.steps[i - 1], Step::Bot(b) if !entity_references(b, agent).is_empty());
        if !answers_prompt {
            out.push(text.as_str());
        }
    }
    out
}

/// All training phrases of the intent owning `user_msg`, rendered.
///
/// `user_msg` itself comes first; slots it fills keep its values in the other
/// phrases, remaining slots take the entity's first value.
pub fn utterance_alternatives(
    user_msg: &str,
    agent: &AgentDefinition,
    opts: &ExpandOptions,
) -> Result<Vec<String>, ExpandError> {
    let normalized = normalize_utterance(user_msg);
    let Some((intent, m)) = select_intent(agent, &agent.intents, &normalized, opts.reference_date)
    else {
        return Err(ExpandError::UnknownIntent(user_msg.to_string()));
    };
    let mut out = vec![user_msg.to_string()];
    let mut seen = vec![normalized];
    for (idx, phrase) in intent.training_phrases.iter().enumerate() {
        if idx == m.phrase_index {
            continue;
        }
        let mut fills = BTreeMap::new();
        for part in &phrase.parts {
            let Part::Slot(name) = part else { continue };
            let value = match m.fills.get(name) {
                Some(f) => Some(f.raw.clone()),
                None => intent
                    .parameter(name)
                    .and_then(|p| agent.entity_kind(&p.entity))
                    .and_then(|k| k.first_value()),
            };
            if let Some(v) = value {
                fills.insert(name.clone(), v);
            }
        }
        let Ok(text) = render_phrase(phrase, &fills) else { continue };
        let norm = normalize_utterance(&text);
        if !seen.contains(&norm) {
            seen.push(norm);
            out.push(text);
        }
    }
    Ok(out)
}

/// Alternatives for the next user message of `t`.
///
/// * no bot message: the conversation starts; alternatives of `t`'s first user message.
/// * a bot message referencing `@Entity`: entity-value combinations.
/// * otherwise: alternatives of `t`'s next intent-level user message, or none
///   when `t` has no further one (the conversation is complete).
pub fn expand(
    t: &Convo,
    bot_msg: Option<BotMessage<'_>>,
    agent: &AgentDefinition,
    opts: &ExpandOptions,
) -> Result<Vec<String>, ExpandError> {
    let intent_steps = intent_level_me_steps(t, agent);
    match bot_msg {
        None => match intent_steps.first() {
            Some(first) => utterance_alternatives(first, agent, opts),
            None => Ok(Vec::new()),
        },
        Some(msg) => {
            let entities = entity_references(msg.text, agent);
            if !entities.is_empty() {
                return Ok(entity_value_combinations(&entities, agent, opts.max_combinations));
            }
            match intent_steps.get(msg.completed) {
                Some(next) => utterance_alternatives(next, agent, opts),
                None => Ok(Vec::new()),
            }
        }
    }
}
