//! Shared fixtures, strategies and independent oracles for the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use convogen::agent::{
    parse_agent, AgentDefinition, EntityType, EntityValue, Intent, OutputContext, Parameter, Part,
    ResponseVariantSet, TrainingPhrase, Validation,
};
use convogen::convo::{Convo, Origin, Step};
use convogen::executor::{ExecutionRecord, Verdict};
use convogen::sim::{open_session, ResponseMode, FALLBACK_INTENT};
use proptest::prelude::*;

/// One intent, three opening phrases, one required entity of two values
/// that no phrase fills.
pub const PIZZA_AGENT: &str = r#"{
  "name": "pizza",
  "entities": [
    {"name": "Size", "values": [{"value": "small"}, {"value": "large", "synonyms": ["big"]}]}
  ],
  "intents": [
    {"name": "Fallback", "is_fallback": true, "responses": [["Sorry?"]]},
    {
      "name": "Order",
      "training_phrases": ["i want a pizza", "order a pizza please", "get me a pizza"],
      "parameters": [
        {"name": "size", "entity": "Size", "required": true, "prompts": ["Which @Size pizza?"]}
      ],
      "responses": [["One $size pizza coming up."]]
    }
  ]
}"#;

pub fn pizza_agent() -> AgentDefinition {
    parse_agent(PIZZA_AGENT, Validation::Strict).unwrap()
}

/// Leaves of the conversation tree rooted at `intent`: each training phrase
/// (slots filled with first values) opens a path, each prompt forks once per
/// value of the prompted entity, a non-prompt reply ends the path.
pub fn count_conversation_leaves(agent: &AgentDefinition, intent: &str) -> usize {
    let agent = Arc::new(agent.clone());
    let intent = agent.intent(intent).unwrap();
    let mut leaves = 0;
    for phrase in &intent.training_phrases {
        let mut text = String::new();
        for part in &phrase.parts {
            match part {
                Part::Literal(l) => text.push_str(l),
                Part::Slot(s) => {
                    let p = intent.parameter(s).unwrap();
                    text.push_str(&agent.entity_values(&p.entity)[0]);
                }
            }
        }
        leaves += walk(&agent, vec![text]);
    }
    leaves
}

fn walk(agent: &Arc<AgentDefinition>, messages: Vec<String>) -> usize {
    let mut session = open_session(Arc::clone(agent), 0, ResponseMode::Deterministic);
    let mut last = None;
    for m in &messages {
        last = Some(session.send_message(m).unwrap());
    }
    let reply = last.unwrap();
    if !reply.is_prompt {
        return 1;
    }
    let pending = session.state().pending_slot.clone().unwrap();
    let param = agent.intent(&pending.intent).unwrap().parameter(&pending.parameter).unwrap();
    agent
        .entity_values(&param.entity)
        .into_iter()
        .map(|v| {
            let mut next = messages.clone();
            next.push(v);
            walk(agent, next)
        })
        .sum()
}

/// Independent coverage recount: (intent %, entity % or None, covered pairs).
pub fn recount_coverage(
    records: &[ExecutionRecord],
    agent: &AgentDefinition,
    include_flaky: bool,
) -> (f64, Option<f64>, BTreeSet<(String, String)>) {
    let custom: BTreeMap<&str, Vec<&str>> = agent
        .entities
        .iter()
        .map(|e| (e.name.as_str(), e.values.iter().map(|v| v.value.as_str()).collect()))
        .collect();
    let intent_total = agent.intents.iter().filter(|i| !i.is_fallback).count();
    let value_total: usize = custom.values().map(Vec::len).sum();

    let mut intents = BTreeSet::new();
    let mut pairs = BTreeSet::new();
    for rec in records {
        let counted = rec.verdict == Verdict::Correct || (include_flaky && rec.verdict == Verdict::Flaky);
        if !counted {
            continue;
        }
        for run in &rec.runs {
            if rec.verdict == Verdict::Flaky && !run.turns.iter().all(|t| t.pass) {
                continue;
            }
            for t in &run.turns {
                let is_real_intent = agent.intents.iter().any(|i| i.name == t.intent && !i.is_fallback);
                if is_real_intent {
                    intents.insert(t.intent.clone());
                }
                for e in &t.entities {
                    if custom.contains_key(e.entity.as_str()) {
                        pairs.insert((e.entity.clone(), e.value.clone()));
                    }
                }
            }
        }
    }
    let intent_pct = if intent_total == 0 { 0.0 } else { intents.len() as f64 * 100.0 / intent_total as f64 };
    let entity_pct = (!custom.is_empty()).then(|| {
        if value_total == 0 {
            0.0
        } else {
            pairs.len() as f64 * 100.0 / value_total as f64
        }
    });
    (intent_pct, entity_pct, pairs)
}

pub fn fallback_name() -> &'static str {
    FALLBACK_INTENT
}

// ---- strategies -------------------------------------------------------------

fn word() -> impl Strategy<Value = String> {
    "[a-z]{1,7}"
}

fn words(max: usize) -> impl Strategy<Value = String> {
    prop::collection::vec(word(), 1..=max).prop_map(|w| w.join(" "))
}

fn distinct_words(min: usize, max: usize) -> impl Strategy<Value = Vec<String>> {
    prop::collection::btree_set(word(), min..=max).prop_map(|s| s.into_iter().collect())
}

fn arb_entity(index: usize) -> impl Strategy<Value = EntityType> {
    ("[A-Z][a-z]{0,5}", distinct_words(1, 4), prop::collection::vec(distinct_words(0, 2), 4)).prop_map(
        move |(suffix, values, synonyms)| EntityType {
            name: format!("E{index}{suffix}"),
            values: values
                .into_iter()
                .zip(synonyms)
                .map(|(value, synonyms)| EntityValue { value, synonyms })
                .collect(),
        },
    )
}

const SYS: [&str; 3] = ["sys.number", "sys.date", "sys.time"];
const CONTEXTS: [&str; 3] = ["ctx-a", "ctx-b", "ctx-c"];

#[derive(Debug, Clone)]
struct IntentShape {
    priority: i64,
    inputs: Vec<usize>,
    outputs: Vec<(usize, u32)>,
    params: Vec<(usize, bool, String)>,
    phrases: Vec<Vec<(String, Option<usize>)>>,
    responses: Vec<Vec<(String, Option<usize>, bool)>>,
    action: bool,
}

fn arb_intent_shape() -> impl Strategy<Value = IntentShape> {
    (
        prop_oneof![Just(500_000i64), Just(250_000), 0i64..1_000_000],
        prop::collection::btree_set(0usize..3, 0..=2),
        prop::collection::vec((0usize..3, 1u32..6), 0..=2),
        prop::collection::vec((0usize..16, any::<bool>(), words(3)), 0..=3),
        prop::collection::vec(prop::collection::vec((words(3), prop::option::of(0usize..3)), 1..=3), 1..=3),
        prop::collection::vec(
            prop::collection::vec((words(4), prop::option::of(0usize..3), any::<bool>()), 1..=3),
            1..=2,
        ),
        any::<bool>(),
    )
        .prop_map(|(priority, inputs, outputs, params, phrases, responses, action)| IntentShape {
            priority,
            inputs: inputs.into_iter().collect(),
            outputs,
            params,
            phrases,
            responses,
            action,
        })
}

fn build_intent(name: String, shape: IntentShape, entities: &[EntityType]) -> Intent {
    let mut intent = Intent::new(name);
    intent.priority = shape.priority;
    intent.input_contexts = shape.inputs.iter().map(|&i| CONTEXTS[i].to_string()).collect();
    let mut seen = BTreeSet::new();
    for (c, lifespan) in shape.outputs {
        if seen.insert(c) {
            intent.output_contexts.push(OutputContext { name: CONTEXTS[c].to_string(), lifespan });
        }
    }
    for (j, (entity_pick, required, prompt)) in shape.params.into_iter().enumerate() {
        let choices = entities.len() + SYS.len();
        let entity = match entity_pick % choices {
            k if k < entities.len() => entities[k].name.clone(),
            k => SYS[k - entities.len()].to_string(),
        };
        let prompts = if required { vec![format!("{prompt} @{entity}?")] } else { Vec::new() };
        intent.parameters.push(Parameter { name: format!("p{j}"), entity, required, prompts });
    }
    let n_params = intent.parameters.len();
    for parts in shape.phrases {
        let mut out = Vec::new();
        for (i, (text, slot)) in parts.into_iter().enumerate() {
            out.push(Part::Literal(if i == 0 { text } else { format!(" {text}") }));
            if let Some(s) = slot.filter(|_| n_params > 0) {
                out.push(Part::Literal(" ".into()));
                out.push(Part::Slot(format!("p{}", s % n_params)));
            }
        }
        intent.training_phrases.push(TrainingPhrase::new(out));
    }
    intent.action = shape.action.then(|| "act".to_string());
    for set in shape.responses {
        let variants = set
            .into_iter()
            .map(|(text, param, result)| {
                let mut v = text;
                if let Some(p) = param.filter(|_| n_params > 0) {
                    v.push_str(&format!(" $p{}", p % n_params));
                }
                if result && intent.action.is_some() {
                    v.push_str(" %result");
                }
                v
            })
            .collect();
        intent.responses.push(ResponseVariantSet { variants });
    }
    intent
}

/// Random agents satisfying every strict invariant.
pub fn arb_agent() -> impl Strategy<Value = AgentDefinition> {
    let entities = (0usize..=3).prop_flat_map(|n| {
        (0..n).map(arb_entity).collect::<Vec<_>>()
    });
    (
        "[a-z][a-z0-9-]{0,10}",
        entities,
        prop::collection::vec(arb_intent_shape(), 1..=4),
        any::<prop::sample::Index>(),
        words(4),
        prop::collection::btree_set(0usize..3, 0..=1),
    )
        .prop_map(|(name, entities, shapes, fallback_at, fallback_text, fb_inputs)| {
            let mut intents: Vec<Intent> = shapes
                .into_iter()
                .enumerate()
                .map(|(i, s)| build_intent(format!("Intent{i}"), s, &entities))
                .collect();
            let mut fallback = Intent::new("Fallback");
            fallback.is_fallback = true;
            fallback.input_contexts = fb_inputs.into_iter().map(|c| CONTEXTS[c].to_string()).collect();
            fallback.responses.push(ResponseVariantSet { variants: vec![fallback_text] });
            let at = fallback_at.index(intents.len() + 1);
            intents.insert(at, fallback);
            AgentDefinition { name, entities, intents }
        })
}

fn arb_block() -> impl Strategy<Value = String> {
    prop::collection::vec("[A-Za-z0-9@$%][A-Za-z0-9 ,.!?'@$%-]{0,20}[A-Za-z0-9.!?]", 1..=3)
        .prop_map(|lines| lines.join("\n"))
}

/// Random well-formed convos (name, optional origin header, alternating steps).
pub fn arb_convo() -> impl Strategy<Value = Convo> {
    (
        "[A-Za-z0-9_][A-Za-z0-9_ -]{0,15}[A-Za-z0-9_]",
        prop::collection::vec(arb_block(), 1..=8),
        prop::option::of(prop_oneof![
            Just(Origin::Seedgen),
            Just(Origin::GeneratorSeed),
            Just(Origin::GeneratorBranch)
        ]),
        any::<(bool, bool, bool)>(),
    )
        .prop_map(|(name, blocks, origin, (seed, unreachable, dynamic))| {
            let mut c = Convo::new(name);
            c.steps = blocks
                .into_iter()
                .enumerate()
                .map(|(i, b)| if i % 2 == 0 { Step::Me(b) } else { Step::Bot(b) })
                .collect();
            if origin.is_some() {
                c.origin = origin;
                c.seed = seed;
                c.flags.unreachable = unreachable;
                c.flags.dynamic = dynamic;
            }
            c
        })
}
