use std::collections::BTreeSet;
use std::fmt;

use super::entity::SystemEntity;
use super::model::{template_segments, AgentDefinition, Part, Placeholder, TemplateSegment};

/// How strictly an agent is checked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Validation {
    /// Every invariant of the agent model.
    #[default]
    Strict,
    /// Structural checks only; accepts the degenerate agents mutation
    /// operators produce (several fallback flags, dangling placeholders,
    /// prompts naming unknown entities).
    Lenient,
}

/// An agent invariant violation, naming the offending element.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationError {
    pub element: String,
    pub message: String,
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (at `{}`)", self.message, self.element)
    }
}

impl std::error::Error for ValidationError {}

fn fail(element: &str, message: impl Into<String>) -> Result<(), ValidationError> {
    Err(ValidationError { element: element.to_string(), message: message.into() })
}

pub fn validate(agent: &AgentDefinition, mode: Validation) -> Result<(), ValidationError> {
    let strict = mode == Validation::Strict;

    let mut entity_names = BTreeSet::new();
    for entity in &agent.entities {
        if entity.name.is_empty() {
            return fail(&agent.name, "entity with empty name");
        }
        if SystemEntity::from_name(&entity.name).is_some() || entity.name.starts_with("sys.") {
            return fail(&entity.name, "custom entity uses the reserved sys. prefix");
        }
        if !entity_names.insert(entity.name.as_str()) {
            return fail(&entity.name, "duplicate entity name");
        }
        if entity.values.is_empty() {
            return fail(&entity.name, "entity has no values");
        }
        let mut seen = BTreeSet::new();
        for v in &entity.values {
            if v.value.trim().is_empty() {
                return fail(&entity.name, "empty entity value");
            }
            if !seen.insert(v.value.as_str()) {
                return fail(&v.value, format!("duplicate value in entity `{}`", entity.name));
            }
        }
    }

    let mut intent_names = BTreeSet::new();
    for intent in &agent.intents {
        if intent.name.is_empty() {
            return fail(&agent.name, "intent with empty name");
        }
        if !intent_names.insert(intent.name.as_str()) {
            return fail(&intent.name, "duplicate intent name");
        }
    }

    let fallbacks = agent.intents.iter().filter(|i| i.is_fallback).count();
    if fallbacks == 0 {
        return fail(&agent.name, "no fallback intent");
    }
    if strict && fallbacks > 1 {
        let second = agent.intents.iter().filter(|i| i.is_fallback).nth(1).unwrap();
        return fail(&second.name, "more than one fallback intent");
    }

    for intent in &agent.intents {
        if strict && intent.is_fallback {
            if !intent.training_phrases.is_empty() {
                return fail(&intent.name, "fallback intent has training phrases");
            }
            if !intent.parameters.is_empty() {
                return fail(&intent.name, "fallback intent has parameters");
            }
        }
        for ctx in &intent.output_contexts {
            if ctx.lifespan < 1 {
                return fail(&ctx.name, format!("lifespan must be >= 1 in intent `{}`", intent.name));
            }
        }

        let mut param_names = BTreeSet::new();
        for param in &intent.parameters {
            if !param_names.insert(param.name.as_str()) {
                return fail(&param.name, format!("duplicate parameter in intent `{}`", intent.name));
            }
            if agent.entity_kind(&param.entity).is_none() {
                return fail(
                    &param.entity,
                    format!(
                        "parameter `{}` of intent `{}` references unknown entity",
                        param.name, intent.name
                    ),
                );
            }
            if param.required && param.prompts.is_empty() {
                return fail(&param.name, "required parameter has no prompt");
            }
            if !param.required && !param.prompts.is_empty() {
                return fail(&param.name, "optional parameter carries prompts");
            }
            if strict {
                let marker = format!("@{}", param.entity);
                if let Some(p) = param.prompts.iter().find(|p| !p.contains(&marker)) {
                    return fail(&param.name, format!("prompt {p:?} does not reference {marker}"));
                }
            }
        }

        for phrase in &intent.training_phrases {
            if phrase.parts.is_empty() {
                return fail(&intent.name, "empty training phrase");
            }
            let has_slot = phrase.parts.iter().any(|p| matches!(p, Part::Slot(_)));
            let has_text = phrase
                .parts
                .iter()
                .any(|p| matches!(p, Part::Literal(t) if !t.trim().is_empty()));
            if !has_slot && !has_text {
                return fail(&intent.name, "training phrase renders to empty text");
            }
            for window in phrase.parts.windows(2) {
                if let [Part::Literal(_), Part::Literal(_)] = window {
                    return fail(&intent.name, "adjacent literals are not merged");
                }
            }
            for slot in phrase.slots() {
                if intent.parameter(slot).is_none() {
                    return fail(
                        slot,
                        format!("training phrase slot is not a parameter of `{}`", intent.name),
                    );
                }
            }
        }

        if strict && intent.responses.is_empty() {
            return fail(&intent.name, "intent has no responses");
        }
        for set in &intent.responses {
            if set.variants.is_empty() {
                return fail(&intent.name, "response set has no variants");
            }
            if !strict {
                continue;
            }
            for variant in &set.variants {
                for seg in template_segments(variant) {
                    match seg {
                        TemplateSegment::Placeholder(Placeholder::Parameter(name))
                            if intent.parameter(name).is_none() =>
                        {
                            return fail(
                                name,
                                format!("response placeholder is not a parameter of `{}`", intent.name),
                            );
                        }
                        TemplateSegment::Placeholder(Placeholder::ActionResult(name))
                            if intent.action.is_none() =>
                        {
                            return fail(
                                name,
                                format!("%-placeholder in intent `{}` without action", intent.name),
                            );
                        }
                        _ => {}
                    }
                }
            }
        }
    }
    Ok(())
}
