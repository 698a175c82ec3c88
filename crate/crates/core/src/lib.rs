//! Dynamic test generation for task-based chatbots.
//!
//! Seed conversations are replayed against a live (here: simulated) bot; the
//! bot's actual replies become the test oracles, and every alternative user
//! utterance or entity value found along the way spawns a new test. The crate
//! also runs convo suites repeatedly to classify flaky tests, measures intent
//! and entity-value coverage, and scores suites against agent mutants.

pub mod agent;
pub mod bundled;
pub mod coverage;
pub mod cleaner;
pub mod convo;
pub mod executor;
pub mod expander;
pub mod generator;
pub mod mutation;
pub mod seedgen;
pub mod sim;

pub use agent::{load_agent, AgentDefinition, AgentError};
pub use convo::{parse_convo, serialize_convo, Convo, Origin, Step};
pub use sim::{open_session, BotReply, ResponseMode, Session};
