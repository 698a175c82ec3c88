use std::collections::BTreeMap;

use super::entity::{EntityKind, SystemEntity};

/// Dialogflow's "normal" intent priority.
pub const DEFAULT_PRIORITY: i64 = 500_000;

/// Dialogflow's "low" priority tier, the lowest tier that still matches.
pub const MIN_PRIORITY_TIER: i64 = 250_000;

/// The declarative model of a task-based chatbot.
///
/// Immutable once loaded; share it behind an `Arc` across sessions.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentDefinition {
    pub name: String,
    pub entities: Vec<EntityType>,
    pub intents: Vec<Intent>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntityType {
    pub name: String,
    pub values: Vec<EntityValue>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntityValue {
    pub value: String,
    pub synonyms: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Intent {
    pub name: String,
    pub priority: i64,
    pub is_fallback: bool,
    pub input_contexts: Vec<String>,
    pub output_contexts: Vec<OutputContext>,
    pub training_phrases: Vec<TrainingPhrase>,
    pub parameters: Vec<Parameter>,
    pub responses: Vec<ResponseVariantSet>,
    pub action: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputContext {
    pub name: String,
    pub lifespan: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Part {
    Literal(String),
    Slot(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingPhrase {
    pub parts: Vec<Part>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Parameter {
    pub name: String,
    pub entity: String,
    pub required: bool,
    pub prompts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResponseVariantSet {
    pub variants: Vec<String>,
}

impl AgentDefinition {
    pub fn intent(&self, name: &str) -> Option<&Intent> {
        self.intents.iter().find(|i| i.name == name)
    }

    pub fn entity(&self, name: &str) -> Option<&EntityType> {
        self.entities.iter().find(|e| e.name == name)
    }

    /// Resolves an entity reference to a custom entity or a system entity.
    pub fn entity_kind(&self, name: &str) -> Option<EntityKind<'_>> {
        if let Some(sys) = SystemEntity::from_name(name) {
            return Some(EntityKind::System(sys));
        }
        self.entity(name).map(EntityKind::Custom)
    }

    /// The intent answering unmatched input: the first one flagged fallback.
    pub fn default_fallback(&self) -> Option<&Intent> {
        self.intents.iter().find(|i| i.is_fallback)
    }

    pub fn non_fallback_intents(&self) -> impl Iterator<Item = &Intent> {
        self.intents.iter().filter(|i| !i.is_fallback)
    }

    /// Canonical values of a custom entity, or the sample literals of a system entity.
    pub fn entity_values(&self, name: &str) -> Vec<String> {
        match self.entity_kind(name) {
            Some(kind) => kind.values(),
            None => Vec::new(),
        }
    }

    /// All entity names an "@" reference may name: custom entities and system entities.
    pub fn referenceable_entities(&self) -> Vec<String> {
        let mut names: Vec<String> = self.entities.iter().map(|e| e.name.clone()).collect();
        names.extend(SystemEntity::ALL.iter().map(|s| s.name().to_string()));
        names
    }
}

impl EntityType {
    pub fn canonical_values(&self) -> impl Iterator<Item = &str> {
        self.values.iter().map(|v| v.value.as_str())
    }
}

impl Intent {
    /// An intent with default priority and no contexts, phrases, parameters or action.
    pub fn new(name: impl Into<String>) -> Self {
        Intent {
            name: name.into(),
            priority: DEFAULT_PRIORITY,
            is_fallback: false,
            input_contexts: Vec::new(),
            output_contexts: Vec::new(),
            training_phrases: Vec::new(),
            parameters: Vec::new(),
            responses: Vec::new(),
            action: None,
        }
    }

    pub fn parameter(&self, name: &str) -> Option<&Parameter> {
        self.parameters.iter().find(|p| p.name == name)
    }
}

impl TrainingPhrase {
    /// Builds a phrase, merging adjacent literals and dropping empty ones.
    pub fn new(parts: impl IntoIterator<Item = Part>) -> Self {
        let mut merged: Vec<Part> = Vec::new();
        for part in parts {
            match part {
                Part::Literal(text) if text.is_empty() => {}
                Part::Literal(text) => match merged.last_mut() {
                    Some(Part::Literal(prev)) => prev.push_str(&text),
                    _ => merged.push(Part::Literal(text)),
                },
                slot => merged.push(slot),
            }
        }
        TrainingPhrase { parts: merged }
    }

    pub fn literal(text: impl Into<String>) -> Self {
        TrainingPhrase::new([Part::Literal(text.into())])
    }

    pub fn slots(&self) -> impl Iterator<Item = &str> {
        self.parts.iter().filter_map(|p| match p {
            Part::Slot(name) => Some(name.as_str()),
            Part::Literal(_) => None,
        })
    }
}

/// Placeholder found in a response template.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Placeholder<'a> {
    /// `$name`: a parameter value.
    Parameter(&'a str),
    /// `%name`: a key produced by the intent's action handler.
    ActionResult(&'a str),
}

/// Segment of a response template.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TemplateSegment<'a> {
    Text(&'a str),
    Placeholder(Placeholder<'a>),
}

fn is_name_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_name_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '-'
}

/// Splits a response template into text and `$`/`%` placeholders.
///
/// A sigil not followed by a name start (`50%`, `$5`) is kept as text.
pub fn template_segments(template: &str) -> Vec<TemplateSegment<'_>> {
    let mut out = Vec::new();
    let mut text_start = 0;
    let mut iter = template.char_indices().peekable();
    while let Some((i, c)) = iter.next() {
        if c != '$' && c != '%' {
            continue;
        }
        match iter.peek() {
            Some(&(_, next)) if is_name_start(next) => {}
            _ => continue,
        }
        let name_start = i + 1;
        let mut end = name_start;
        while let Some(&(j, ch)) = iter.peek() {
            if is_name_char(ch) {
                end = j + ch.len_utf8();
                iter.next();
            } else {
                break;
            }
        }
        // a trailing '-' belongs to the text ("$time-")
        let mut name = &template[name_start..end];
        while name.ends_with('-') {
            name = &name[..name.len() - 1];
        }
        let name_end = name_start + name.len();
        if text_start < i {
            out.push(TemplateSegment::Text(&template[text_start..i]));
        }
        out.push(TemplateSegment::Placeholder(if c == '$' {
            Placeholder::Parameter(name)
        } else {
            Placeholder::ActionResult(name)
        }));
        text_start = name_end;
    }
    if text_start < template.len() {
        out.push(TemplateSegment::Text(&template[text_start..]));
    }
    out
}

/// Renders a template, looking placeholders up in `params` and `results`.
///
/// Unresolved placeholders are left as written when `keep_unresolved` is set,
/// otherwise they render as empty text.
pub fn interpolate(
    template: &str,
    params: &BTreeMap<String, String>,
    results: &BTreeMap<String, String>,
    keep_unresolved: bool,
) -> String {
    let mut out = String::with_capacity(template.len());
    for seg in template_segments(template) {
        match seg {
            TemplateSegment::Text(t) => out.push_str(t),
            TemplateSegment::Placeholder(Placeholder::Parameter(name)) => match params.get(name) {
                Some(v) => out.push_str(v),
                None if keep_unresolved => {
                    out.push('$');
                    out.push_str(name);
                }
                None => {}
            },
            TemplateSegment::Placeholder(Placeholder::ActionResult(name)) => {
                match results.get(name) {
                    Some(v) => out.push_str(v),
                    None if keep_unresolved => {
                        out.push('%');
                        out.push_str(name);
                    }
                    None => {}
                }
            }
        }
    }
    out
}
