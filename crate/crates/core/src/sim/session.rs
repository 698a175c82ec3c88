use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::model::interpolate;
use crate::agent::phrase::{normalize_utterance, select_intent};
use crate::agent::{default_reference_date, AgentDefinition, Intent};

use super::actions::{ActionCall, ActionRegistry};
use super::store::{PersistenceStore, StoreView};

/// `matched_intent` of replies produced by the fallback intent.
pub const FALLBACK_INTENT: &str = "fallback";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResponseMode {
    /// Always the first response variant.
    #[default]
    Deterministic,
    /// Variants drawn uniformly from a seeded stream.
    SeededRandom,
}

impl std::str::FromStr for ResponseMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "deterministic" => Ok(ResponseMode::Deterministic),
            "seeded-random" => Ok(ResponseMode::SeededRandom),
            other => Err(format!("unknown mode `{other}` (deterministic|seeded-random)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimConfig {
    pub mode: ResponseMode,
    pub seed: u64,
    /// Date weekday words resolve against.
    pub reference_date: NaiveDate,
}

impl SimConfig {
    pub fn new(mode: ResponseMode, seed: u64) -> Self {
        SimConfig { mode, seed, reference_date: default_reference_date() }
    }
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig::new(ResponseMode::Deterministic, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ExtractedValue {
    pub entity: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BotReply {
    pub text: String,
    pub matched_intent: String,
    pub extracted: BTreeMap<String, ExtractedValue>,
    pub is_prompt: bool,
}

impl BotReply {
    pub fn is_fallback(&self) -> bool {
        self.matched_intent == FALLBACK_INTENT
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActiveContext {
    pub lifespan: u32,
    /// Parameter values of the intent that set the context.
    pub params: BTreeMap<String, ExtractedValue>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PendingSlot {
    pub intent: String,
    pub parameter: String,
    pub collected: BTreeMap<String, ExtractedValue>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionState {
    pub active_contexts: BTreeMap<String, ActiveContext>,
    pub pending_slot: Option<PendingSlot>,
    pub rng_seed: u64,
    pub turn_counter: u64,
    pub store_namespace: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SessionError {
    #[error("session is closed")]
    SessionClosed,
}

static NEXT_NAMESPACE: AtomicU64 = AtomicU64::new(1);

/// A fresh, process-unique store namespace.
pub fn fresh_namespace() -> String {
    format!("session-{}", NEXT_NAMESPACE.fetch_add(1, Ordering::Relaxed))
}

/// One conversation with the simulated bot.
#[derive(Debug)]
pub struct Session {
    agent: Arc<AgentDefinition>,
    actions: Arc<ActionRegistry>,
    store: StoreView,
    config: SimConfig,
    state: SessionState,
    rng: ChaCha8Rng,
    closed: bool,
}

/// Opens a session on a private in-memory store with the built-in actions.
pub fn open_session(agent: Arc<AgentDefinition>, seed: u64, mode: ResponseMode) -> Session {
    Session::open(
        agent,
        Arc::new(ActionRegistry::with_builtins()),
        StoreView::new(PersistenceStore::in_memory(), fresh_namespace()),
        SimConfig::new(mode, seed),
    )
}

type Fills = BTreeMap<String, ExtractedValue>;

impl Session {
    pub fn open(
        agent: Arc<AgentDefinition>,
        actions: Arc<ActionRegistry>,
        store: StoreView,
        config: SimConfig,
    ) -> Session {
        let state = SessionState {
            active_contexts: BTreeMap::new(),
            pending_slot: None,
            rng_seed: config.seed,
            turn_counter: 0,
            store_namespace: store.namespace().to_string(),
        };
        Session {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            agent,
            actions,
            store,
            config,
            state,
            closed: false,
        }
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn store(&self) -> &StoreView {
        &self.store
    }

    pub fn agent(&self) -> &Arc<AgentDefinition> {
        &self.agent
    }

    pub fn close(&mut self) {
        self.closed = true;
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    /// Advances the conversation by one user message.
    pub fn send_message(&mut self, user_text: &str) -> Result<BotReply, SessionError> {
        if self.closed {
            return Err(SessionError::SessionClosed);
        }
        self.state.turn_counter += 1;
        let agent = Arc::clone(&self.agent);
        let normalized = normalize_utterance(user_text);

        if let Some(pending) = self.state.pending_slot.take() {
            if let Some(reply) = self.resume_pending(&agent, pending, &normalized) {
                return Ok(reply);
            }
        }

        let active = &self.state.active_contexts;
        let candidates = agent
            .intents
            .iter()
            .filter(|i| i.input_contexts.iter().all(|c| active.contains_key(c)));
        match select_intent(&agent, candidates, &normalized, self.config.reference_date) {
            Some((intent, m)) => {
                let mut fills: Fills = m
                    .fills
                    .into_iter()
                    .map(|(k, f)| (k, ExtractedValue { entity: f.entity, value: f.value }))
                    .collect();
                self.inherit_context_params(intent, &mut fills);
                Ok(self.advance(intent, fills))
            }
            None => Ok(self.complete_fallback(&agent)),
        }
    }

    fn resume_pending(
        &mut self,
        agent: &AgentDefinition,
        pending: PendingSlot,
        normalized: &str,
    ) -> Option<BotReply> {
        let intent = agent.intent(&pending.intent)?;
        let param = intent.parameter(&pending.parameter)?;
        let kind = agent.entity_kind(&param.entity)?;
        let value = kind.parse(normalized, self.config.reference_date)?;
        let mut fills = pending.collected;
        fills.insert(param.name.clone(), ExtractedValue { entity: param.entity.clone(), value });
        Some(self.advance(intent, fills))
    }

    fn inherit_context_params(&self, intent: &Intent, fills: &mut Fills) {
        for ctx in &intent.input_contexts {
            let Some(active) = self.state.active_contexts.get(ctx) else { continue };
            for (name, value) in &active.params {
                if intent.parameter(name).is_some() && !fills.contains_key(name) {
                    fills.insert(name.clone(), value.clone());
                }
            }
        }
    }

    /// Prompts for the first missing required parameter, or completes the intent.
    fn advance(&mut self, intent: &Intent, fills: Fills) -> BotReply {
        let missing = intent.parameters.iter().find(|p| p.required && !fills.contains_key(&p.name));
        match missing {
            Some(param) => {
                let text = param.prompts.first().cloned().unwrap_or_default();
                self.state.pending_slot = Some(PendingSlot {
                    intent: intent.name.clone(),
                    parameter: param.name.clone(),
                    collected: fills.clone(),
                });
                BotReply {
                    text,
                    matched_intent: intent.name.clone(),
                    extracted: fills,
                    is_prompt: true,
                }
            }
            None => self.complete(intent, fills),
        }
    }

    fn complete_fallback(&mut self, agent: &AgentDefinition) -> BotReply {
        match agent.default_fallback() {
            Some(fallback) => self.complete(fallback, Fills::new()),
            None => BotReply {
                text: String::new(),
                matched_intent: FALLBACK_INTENT.to_string(),
                extracted: Fills::new(),
                is_prompt: false,
            },
        }
    }

    fn complete(&mut self, intent: &Intent, fills: Fills) -> BotReply {
        let values: BTreeMap<String, String> =
            fills.iter().map(|(k, v)| (k.clone(), v.value.clone())).collect();

        let results = match intent.action.as_deref().and_then(|id| self.actions.get(id)) {
            Some(handler) => handler(&ActionCall {
                fills: &values,
                store: &self.store,
                turn: self.state.turn_counter,
            }),
            None => BTreeMap::new(),
        };

        self.state.active_contexts.retain(|_, ctx| {
            ctx.lifespan -= 1;
            ctx.lifespan > 0
        });
        for out in &intent.output_contexts {
            self.state.active_contexts.insert(
                out.name.clone(),
                ActiveContext { lifespan: out.lifespan, params: fills.clone() },
            );
        }

        let mut parts = Vec::with_capacity(intent.responses.len());
        for set in &intent.responses {
            let idx = match self.config.mode {
                ResponseMode::SeededRandom if set.variants.len() > 1 => {
                    self.rng.gen_range(0..set.variants.len())
                }
                _ => 0,
            };
            if let Some(variant) = set.variants.get(idx) {
                parts.push(interpolate(variant, &values, &results, false));
            }
        }
        let text = parts.join(" ").trim().to_string();

        BotReply {
            text,
            matched_intent: if intent.is_fallback {
                FALLBACK_INTENT.to_string()
            } else {
                intent.name.clone()
            },
            extracted: fills,
            is_prompt: false,
        }
    }
}
