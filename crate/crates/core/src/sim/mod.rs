//! A deterministic local stand-in for a deployed Dialogflow agent.

pub mod actions;
pub mod session;
pub mod store;

pub use actions::{ActionCall, ActionHandler, ActionRegistry, DuplicateHandler};
pub use session::{
    fresh_namespace, open_session, ActiveContext, BotReply, ExtractedValue, PendingSlot,
    ResponseMode, Session, SessionError, SessionState, SimConfig, FALLBACK_INTENT,
};
pub use store::{PersistenceStore, StoreItem, StoreView};
