//! The on-disk agent format: one JSON document approximating a flattened
//! Dialogflow export. Unknown keys are rejected.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{
    AgentDefinition, EntityType, EntityValue, Intent, OutputContext, Parameter, Part,
    ResponseVariantSet, TrainingPhrase, DEFAULT_PRIORITY,
};
use super::validate::{validate, Validation};
use super::AgentError;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AgentFile {
    name: String,
    #[serde(default)]
    entities: Vec<EntityFile>,
    #[serde(default)]
    intents: Vec<IntentFile>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EntityFile {
    name: String,
    values: Vec<ValueFile>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ValueFile {
    value: String,
    #[serde(default)]
    synonyms: Vec<String>,
}

fn default_priority() -> i64 {
    DEFAULT_PRIORITY
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IntentFile {
    name: String,
    #[serde(default = "default_priority")]
    priority: i64,
    #[serde(default)]
    is_fallback: bool,
    #[serde(default)]
    input_contexts: Vec<String>,
    #[serde(default)]
    output_contexts: Vec<OutputContextFile>,
    #[serde(default)]
    training_phrases: Vec<PhraseFile>,
    #[serde(default)]
    parameters: Vec<ParameterFile>,
    #[serde(default)]
    responses: Vec<Vec<String>>,
    #[serde(default)]
    action: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputContextFile {
    name: String,
    lifespan: u32,
}

/// A training phrase: either a plain string or a list of text/slot parts.
#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum PhraseFile {
    Plain(String),
    Parts(Vec<PartFile>),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum PartFile {
    Text(TextPart),
    Slot(SlotPart),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TextPart {
    text: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SlotPart {
    slot: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParameterFile {
    name: String,
    entity: String,
    #[serde(default)]
    required: bool,
    #[serde(default)]
    prompts: Vec<String>,
}

impl From<AgentFile> for AgentDefinition {
    fn from(file: AgentFile) -> Self {
        AgentDefinition {
            name: file.name,
            entities: file
                .entities
                .into_iter()
                .map(|e| EntityType {
                    name: e.name,
                    values: e
                        .values
                        .into_iter()
                        .map(|v| EntityValue { value: v.value, synonyms: v.synonyms })
                        .collect(),
                })
                .collect(),
            intents: file.intents.into_iter().map(Intent::from).collect(),
        }
    }
}

impl From<IntentFile> for Intent {
    fn from(i: IntentFile) -> Self {
        Intent {
            name: i.name,
            priority: i.priority,
            is_fallback: i.is_fallback,
            input_contexts: i.input_contexts,
            output_contexts: i
                .output_contexts
                .into_iter()
                .map(|c| OutputContext { name: c.name, lifespan: c.lifespan })
                .collect(),
            training_phrases: i
                .training_phrases
                .into_iter()
                .map(|p| match p {
                    PhraseFile::Plain(text) => TrainingPhrase::literal(text),
                    PhraseFile::Parts(parts) => TrainingPhrase::new(parts.into_iter().map(
                        |part| match part {
                            PartFile::Text(t) => Part::Literal(t.text),
                            PartFile::Slot(s) => Part::Slot(s.slot),
                        },
                    )),
                })
                .collect(),
            parameters: i
                .parameters
                .into_iter()
                .map(|p| Parameter {
                    name: p.name,
                    entity: p.entity,
                    required: p.required,
                    prompts: p.prompts,
                })
                .collect(),
            responses: i
                .responses
                .into_iter()
                .map(|variants| ResponseVariantSet { variants })
                .collect(),
            action: i.action,
        }
    }
}

impl From<&AgentDefinition> for AgentFile {
    fn from(agent: &AgentDefinition) -> Self {
        AgentFile {
            name: agent.name.clone(),
            entities: agent
                .entities
                .iter()
                .map(|e| EntityFile {
                    name: e.name.clone(),
                    values: e
                        .values
                        .iter()
                        .map(|v| ValueFile { value: v.value.clone(), synonyms: v.synonyms.clone() })
                        .collect(),
                })
                .collect(),
            intents: agent
                .intents
                .iter()
                .map(|i| IntentFile {
                    name: i.name.clone(),
                    priority: i.priority,
                    is_fallback: i.is_fallback,
                    input_contexts: i.input_contexts.clone(),
                    output_contexts: i
                        .output_contexts
                        .iter()
                        .map(|c| OutputContextFile { name: c.name.clone(), lifespan: c.lifespan })
                        .collect(),
                    training_phrases: i
                        .training_phrases
                        .iter()
                        .map(|p| {
                            PhraseFile::Parts(
                                p.parts
                                    .iter()
                                    .map(|part| match part {
                                        Part::Literal(t) => PartFile::Text(TextPart { text: t.clone() }),
                                        Part::Slot(s) => PartFile::Slot(SlotPart { slot: s.clone() }),
                                    })
                                    .collect(),
                            )
                        })
                        .collect(),
                    parameters: i
                        .parameters
                        .iter()
                        .map(|p| ParameterFile {
                            name: p.name.clone(),
                            entity: p.entity.clone(),
                            required: p.required,
                            prompts: p.prompts.clone(),
                        })
                        .collect(),
                    responses: i.responses.iter().map(|r| r.variants.clone()).collect(),
                    action: i.action.clone(),
                })
                .collect(),
        }
    }
}

/// Parses and validates an agent document.
pub fn parse_agent(text: &str, validation: Validation) -> Result<AgentDefinition, AgentError> {
    let file: AgentFile = serde_json::from_str(text).map_err(|e| AgentError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let agent = AgentDefinition::from(file);
    validate(&agent, validation)?;
    Ok(agent)
}

/// Loads and fully validates an agent file.
pub fn load_agent(path: impl AsRef<Path>) -> Result<AgentDefinition, AgentError> {
    load_agent_with(path, Validation::Strict)
}

pub fn load_agent_with(
    path: impl AsRef<Path>,
    validation: Validation,
) -> Result<AgentDefinition, AgentError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| AgentError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_agent(&text, validation)
}

/// Serializes an agent into the canonical (pretty-printed) JSON document.
pub fn agent_to_json(agent: &AgentDefinition) -> String {
    let mut text =
        serde_json::to_string_pretty(&AgentFile::from(agent)).expect("agent serializes");
    text.push('\n');
    text
}

pub fn save_agent(agent: &AgentDefinition, path: impl AsRef<Path>) -> Result<(), AgentError> {
    let path = path.as_ref();
    fs::write(path, agent_to_json(agent)).map_err(|source| AgentError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "name": "mini",
        "intents": [
            {"name": "Fallback", "is_fallback": true, "responses": [["Sorry?"]]},
            {"name": "Hi", "training_phrases": ["hello", [{"text": "hey "}, {"text": "there"}]],
             "responses": [["Hi!"]]}
        ]
    }"#;

    #[test]
    fn plain_strings_are_single_literal_phrases() {
        let agent = parse_agent(MINIMAL, Validation::Strict).unwrap();
        let hi = agent.intent("Hi").unwrap();
        assert_eq!(hi.training_phrases[0], TrainingPhrase::literal("hello"));
        assert_eq!(hi.training_phrases[1], TrainingPhrase::literal("hey there"));
        assert_eq!(hi.priority, DEFAULT_PRIORITY);
    }

    #[test]
    fn unknown_keys_are_rejected_with_locus() {
        let text = "{\n  \"name\": \"x\",\n  \"colour\": 1\n}";
        match parse_agent(text, Validation::Strict) {
            Err(AgentError::Parse { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("colour"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_json_reports_line() {
        let text = "{\n  \"name\": \"x\",\n  \"intents\": [\n}";
        assert!(matches!(
            parse_agent(text, Validation::Strict),
            Err(AgentError::Parse { line: 4, .. })
        ));
    }

    #[test]
    fn saved_document_reloads_identically() {
        let agent = parse_agent(MINIMAL, Validation::Strict).unwrap();
        let again = parse_agent(&agent_to_json(&agent), Validation::Strict).unwrap();
        assert_eq!(agent, again);
    }
}
