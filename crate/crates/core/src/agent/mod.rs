//! The declarative chatbot model and its on-disk format.

pub mod entity;
pub mod file;
pub mod model;
pub mod phrase;
pub mod validate;

use thiserror::Error;

pub use entity::{default_reference_date, EntityKind, SystemEntity};
pub use file::{agent_to_json, load_agent, load_agent_with, parse_agent, save_agent};
pub use model::{
    AgentDefinition, EntityType, EntityValue, Intent, OutputContext, Parameter, Part,
    ResponseVariantSet, TrainingPhrase, DEFAULT_PRIORITY, MIN_PRIORITY_TIER,
};
pub use phrase::{normalize_utterance, render_phrase, RenderError};
pub use validate::{Validation, ValidationError};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("validation error: {0}")]
    Validation(#[from] ValidationError),
}
