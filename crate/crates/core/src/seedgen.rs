//! Static seed tests: one convo per non-fallback intent, built from the agent
//! definition alone, the way a static generator guesses conversations.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fs;
use std::io;
use std::path::Path;

use crate::agent::model::{interpolate, template_segments, Placeholder, TemplateSegment};
use crate::agent::{default_reference_date, render_phrase, AgentDefinition, Intent, Part};
use crate::convo::{serialize_convo, Convo, Origin};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedOptions {
    /// Prepend the shortest intent chain establishing a seed intent's input
    /// contexts. Without it context-gated intents open the conversation
    /// directly, as a context-unaware static generator would.
    pub context_chains: bool,
}

impl Default for SeedOptions {
    fn default() -> Self {
        SeedOptions { context_chains: true }
    }
}

pub fn generate_seeds(agent: &AgentDefinition) -> Vec<Convo> {
    generate_seeds_with(agent, SeedOptions::default())
}

pub fn generate_seeds_with(agent: &AgentDefinition, opts: SeedOptions) -> Vec<Convo> {
    agent.non_fallback_intents().map(|intent| seed_for(agent, intent, opts)).collect()
}

fn seed_for(agent: &AgentDefinition, intent: &Intent, opts: SeedOptions) -> Convo {
    let mut convo = Convo::new(&intent.name);
    convo.seed = true;
    convo.origin = Some(Origin::Seedgen);

    let mut carried = BTreeMap::new();
    if !intent.input_contexts.is_empty() {
        match opts.context_chains.then(|| context_chain(agent, intent)).flatten() {
            Some(chain) => {
                for link in chain {
                    let dynamic = append_intent_steps(agent, link, &mut convo, &mut carried);
                    convo.flags.dynamic |= dynamic;
                }
            }
            None => convo.flags.unreachable = true,
        }
    }
    let dynamic = append_intent_steps(agent, intent, &mut convo, &mut carried);
    convo.flags.dynamic |= dynamic;
    if intent.training_phrases.is_empty() {
        convo.flags.unreachable = true;
    }
    convo
}

/// Shortest sequence of intents whose output contexts establish all of
/// `target`'s input contexts, breadth-first over established context sets.
pub fn context_chain<'a>(agent: &'a AgentDefinition, target: &Intent) -> Option<Vec<&'a Intent>> {
    let goal: BTreeSet<&str> = target.input_contexts.iter().map(String::as_str).collect();
    let mut queue: VecDeque<(BTreeSet<&str>, Vec<&Intent>)> = VecDeque::new();
    let mut visited: BTreeSet<BTreeSet<&str>> = BTreeSet::new();
    queue.push_back((BTreeSet::new(), Vec::new()));
    visited.insert(BTreeSet::new());
    while let Some((active, path)) = queue.pop_front() {
        if goal.is_subset(&active) {
            return Some(path);
        }
        for intent in agent.non_fallback_intents() {
            if intent.name == target.name || intent.training_phrases.is_empty() {
                continue;
            }
            if !intent.input_contexts.iter().all(|c| active.contains(c.as_str())) {
                continue;
            }
            let mut next = active.clone();
            next.extend(intent.output_contexts.iter().map(|c| c.name.as_str()));
            if visited.insert(next.clone()) {
                let mut p = path.clone();
                p.push(intent);
                queue.push_back((next, p));
            }
        }
    }
    None
}

/// Appends the static exchange for `intent`; returns whether its expected
/// response keeps placeholders only known at run time.
fn append_intent_steps(
    agent: &AgentDefinition,
    intent: &Intent,
    convo: &mut Convo,
    carried: &mut BTreeMap<String, String>,
) -> bool {
    let reference = default_reference_date();
    let canonical = |entity: &str, raw: &str| {
        agent.entity_kind(entity).and_then(|k| k.parse(raw, reference)).unwrap_or_else(|| raw.to_string())
    };

    let mut fills: BTreeMap<String, String> = BTreeMap::new();
    if let Some(phrase) = intent.training_phrases.first() {
        let mut raw = BTreeMap::new();
        for part in &phrase.parts {
            let Part::Slot(name) = part else { continue };
            let Some(param) = intent.parameter(name) else { continue };
            let Some(value) = agent.entity_kind(&param.entity).and_then(|k| k.first_value()) else {
                continue;
            };
            fills.insert(name.clone(), canonical(&param.entity, &value));
            raw.insert(name.clone(), value);
        }
        convo.push_me(render_phrase(phrase, &raw).unwrap_or_else(|_| intent.name.clone()));
    } else {
        // untriggerable; keep the convo well-formed
        convo.push_me(intent.name.clone());
    }
    for param in &intent.parameters {
        if !fills.contains_key(&param.name) {
            if let Some(v) = carried.get(&param.name) {
                fills.insert(param.name.clone(), v.clone());
            }
        }
    }
    for param in intent.parameters.iter().filter(|p| p.required) {
        if fills.contains_key(&param.name) {
            continue;
        }
        let Some(value) = agent.entity_kind(&param.entity).and_then(|k| k.first_value()) else {
            continue;
        };
        convo.push_bot(param.prompts.first().cloned().unwrap_or_default());
        convo.push_me(value.clone());
        fills.insert(param.name.clone(), canonical(&param.entity, &value));
    }

    let mut dynamic = false;
    let mut parts = Vec::new();
    for set in &intent.responses {
        let Some(variant) = set.variants.first() else { continue };
        dynamic |= template_segments(variant).iter().any(|seg| match seg {
            TemplateSegment::Placeholder(Placeholder::ActionResult(_)) => true,
            TemplateSegment::Placeholder(Placeholder::Parameter(p)) => !fills.contains_key(*p),
            TemplateSegment::Text(_) => false,
        });
        parts.push(interpolate(variant, &fills, &BTreeMap::new(), true));
    }
    convo.push_bot(parts.join(" ").trim().to_string());
    carried.extend(fills);
    dynamic
}

/// Writes `<dir>/<intent-name>.convo.txt` for every seed.
pub fn write_seeds(seeds: &[Convo], dir: &Path) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    for seed in seeds {
        fs::write(dir.join(format!("{}.convo.txt", seed.name)), serialize_convo(seed))?;
    }
    Ok(())
}
