//! Agent mutants for the seven conversational mutation operators, an
//! equivalence pre-filter backed by a brute-force probe, and suite scoring.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::thread;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::phrase::{best_match, normalize_utterance};
use crate::agent::{
    agent_to_json, default_reference_date, load_agent_with, render_phrase, AgentDefinition,
    AgentError, Part, TrainingPhrase, Validation, MIN_PRIORITY_TIER,
};
use crate::cleaner::{Cleaner, CleaningRoutine, ConnectError, ConnectorRegistry};
use crate::convo::Convo;
use crate::executor::{run_suite, run_test, ExecuteError, Verdict};
use crate::sim::{ActionRegistry, PersistenceStore, ResponseMode, Session, SimConfig, StoreView};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Operator {
    IntentRemoval,
    EntityRemoval,
    IntentParameterRemoval,
    IntentPriorityChange,
    IntentFallbackFlag,
    EntityRename,
    EntityValueChange,
}

impl Operator {
    pub const ALL: [Operator; 7] = [
        Operator::IntentRemoval,
        Operator::EntityRemoval,
        Operator::IntentParameterRemoval,
        Operator::IntentPriorityChange,
        Operator::IntentFallbackFlag,
        Operator::EntityRename,
        Operator::EntityValueChange,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Operator::IntentRemoval => "intent-removal",
            Operator::EntityRemoval => "entity-removal",
            Operator::IntentParameterRemoval => "intent-parameter-removal",
            Operator::IntentPriorityChange => "intent-priority-change",
            Operator::IntentFallbackFlag => "intent-fallback-flag",
            Operator::EntityRename => "entity-rename",
            Operator::EntityValueChange => "entity-value-change",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MutantDescriptor {
    pub id: String,
    pub operator: Operator,
    /// Element path, e.g. `intents/ScheduleAppointment/parameters/service`.
    pub target: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<String>,
    pub equivalent: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equivalence_reason: Option<String>,
    /// Not flagged, yet indistinguishable from the original on the probe set.
    #[serde(default)]
    pub suspected_equivalent: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mutant {
    pub descriptor: MutantDescriptor,
    pub agent: AgentDefinition,
}

fn fresh_name(base: &str, taken: impl Fn(&str) -> bool) -> String {
    let mut n = 1;
    loop {
        let name = if n == 1 { base.to_string() } else { format!("{base}{n}") };
        if !taken(&name) {
            return name;
        }
        n += 1;
    }
}

fn slug(text: &str) -> String {
    text.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect()
}

struct Builder<'a> {
    original: &'a AgentDefinition,
    out: Vec<Mutant>,
}

impl Builder<'_> {
    fn push(&mut self, operator: Operator, target: String, payload: Option<String>, agent: AgentDefinition) {
        let label: Vec<&str> = target.split('/').skip(1).step_by(2).collect();
        let id = format!("{:02}-{}-{}", self.out.len() + 1, operator.as_str(), slug(&label.join(".")));
        self.out.push(Mutant {
            descriptor: MutantDescriptor {
                id,
                operator,
                target,
                payload,
                equivalent: false,
                equivalence_reason: None,
                suspected_equivalent: false,
            },
            agent,
        });
    }

    fn clone_agent(&self) -> AgentDefinition {
        self.original.clone()
    }
}

/// Every first-order mutant of `agent`, equivalence flags and probe results
/// filled in (probed with the built-in actions).
pub fn generate_mutants(agent: &AgentDefinition) -> Vec<Mutant> {
    generate_mutants_with(agent, &Arc::new(ActionRegistry::with_builtins()))
}

pub fn generate_mutants_with(agent: &AgentDefinition, actions: &Arc<ActionRegistry>) -> Vec<Mutant> {
    let mut b = Builder { original: agent, out: Vec::new() };
    let reference = default_reference_date();

    for intent in agent.non_fallback_intents() {
        let mut m = b.clone_agent();
        m.intents.retain(|i| i.name != intent.name);
        b.push(Operator::IntentRemoval, format!("intents/{}", intent.name), None, m);
    }

    for entity in &agent.entities {
        let mut m = b.clone_agent();
        m.entities.retain(|e| e.name != entity.name);
        for p in m.intents.iter_mut().flat_map(|i| i.parameters.iter_mut()) {
            if p.entity == entity.name {
                p.entity = "sys.any".into();
            }
        }
        b.push(Operator::EntityRemoval, format!("entities/{}", entity.name), Some("sys.any".into()), m);
    }

    for (ii, intent) in agent.intents.iter().enumerate() {
        for param in &intent.parameters {
            let literal = agent
                .entity_kind(&param.entity)
                .and_then(|k| k.first_value())
                .unwrap_or_default();
            let mut m = b.clone_agent();
            let target = &mut m.intents[ii];
            target.parameters.retain(|p| p.name != param.name);
            for phrase in &mut target.training_phrases {
                let parts = phrase.parts.drain(..).map(|part| match part {
                    Part::Slot(s) if s == param.name => Part::Literal(literal.clone()),
                    other => other,
                });
                *phrase = TrainingPhrase::new(parts.collect::<Vec<_>>());
            }
            b.push(
                Operator::IntentParameterRemoval,
                format!("intents/{}/parameters/{}", intent.name, param.name),
                Some(literal),
                m,
            );
        }
    }

    let probes = probe_utterances(agent);
    for (ii, intent) in agent.intents.iter().enumerate() {
        if intent.is_fallback {
            continue;
        }
        let mut m = b.clone_agent();
        m.intents[ii].priority = MIN_PRIORITY_TIER;
        b.push(
            Operator::IntentPriorityChange,
            format!("intents/{}/priority", intent.name),
            Some(MIN_PRIORITY_TIER.to_string()),
            m,
        );
        let reason = if intent.priority == MIN_PRIORITY_TIER {
            Some("already at the minimum priority tier".to_string())
        } else if !has_competitor(agent, ii, &probes, reference) {
            Some("no other intent competes for its utterances".to_string())
        } else {
            None
        };
        if let Some(reason) = reason {
            let d = &mut b.out.last_mut().expect("just pushed").descriptor;
            d.equivalent = true;
            d.equivalence_reason = Some(reason);
        }
    }

    for (ii, intent) in agent.intents.iter().enumerate() {
        if intent.is_fallback {
            continue;
        }
        let mut m = b.clone_agent();
        let target = &mut m.intents[ii];
        target.is_fallback = true;
        target.training_phrases.clear();
        target.parameters.clear();
        b.push(Operator::IntentFallbackFlag, format!("intents/{}/is_fallback", intent.name), None, m);
    }

    for (ei, entity) in agent.entities.iter().enumerate() {
        let new_name = fresh_name(&format!("{}Renamed", entity.name), |n| {
            agent.entity_kind(n).is_some()
        });
        let mut m = b.clone_agent();
        m.entities[ei].name = new_name.clone();
        for p in m.intents.iter_mut().flat_map(|i| i.parameters.iter_mut()) {
            if p.entity == entity.name {
                p.entity = new_name.clone();
            }
        }
        b.push(Operator::EntityRename, format!("entities/{}/name", entity.name), Some(new_name), m);
    }

    for (ei, entity) in agent.entities.iter().enumerate() {
        let Some(first) = entity.values.first() else { continue };
        let token = fresh_name("mutatedvalue", |n| {
            entity.values.iter().any(|v| {
                v.value.eq_ignore_ascii_case(n) || v.synonyms.iter().any(|s| s.eq_ignore_ascii_case(n))
            })
        });
        let mut m = b.clone_agent();
        m.entities[ei].values[0].value = token.clone();
        b.push(
            Operator::EntityValueChange,
            format!("entities/{}/values/{}", entity.name, first.value),
            Some(token),
            m,
        );
    }

    let mut mutants = b.out;
    for m in &mut mutants {
        if !m.descriptor.equivalent && probe_identical(agent, &m.agent, actions, &probes) {
            m.descriptor.suspected_equivalent = true;
        }
    }
    mutants
}

/// Every training phrase rendered with first entity values, then every
/// custom entity value; duplicates (after normalization) dropped.
pub fn probe_utterances(agent: &AgentDefinition) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let mut push = |text: String| {
        let norm = normalize_utterance(&text);
        if !norm.is_empty() && !out.iter().any(|o| normalize_utterance(o) == norm) {
            out.push(text);
        }
    };
    for intent in &agent.intents {
        for phrase in &intent.training_phrases {
            let fills: BTreeMap<String, String> = phrase
                .slots()
                .filter_map(|s| {
                    let p = intent.parameter(s)?;
                    Some((s.to_string(), agent.entity_kind(&p.entity)?.first_value()?))
                })
                .collect();
            if let Ok(text) = render_phrase(phrase, &fills) {
                push(text);
            }
        }
    }
    for entity in &agent.entities {
        for v in entity.canonical_values() {
            push(v.to_string());
        }
    }
    out
}

/// Whether another intent matches one of the probe utterances the intent at
/// `index` matches, with the same literal length (so priority decides).
fn has_competitor(
    agent: &AgentDefinition,
    index: usize,
    probes: &[String],
    reference: chrono::NaiveDate,
) -> bool {
    let intent = &agent.intents[index];
    probes.iter().any(|u| {
        let norm = normalize_utterance(u);
        let Some(own) = best_match(agent, intent, &norm, reference) else { return false };
        agent.non_fallback_intents().any(|other| {
            other.name != intent.name
                && best_match(agent, other, &norm, reference)
                    .is_some_and(|m| m.literal_len == own.literal_len)
        })
    })
}

type Outcome = Vec<(String, String, bool)>;

fn converse(agent: &Arc<AgentDefinition>, actions: &Arc<ActionRegistry>, messages: &[&str]) -> Outcome {
    let mut session = Session::open(
        Arc::clone(agent),
        Arc::clone(actions),
        StoreView::new(PersistenceStore::in_memory(), "probe"),
        SimConfig::new(ResponseMode::Deterministic, 0),
    );
    messages
        .iter()
        .map(|m| {
            let r = session.send_message(m).expect("session is open");
            (r.text, r.matched_intent, r.is_prompt)
        })
        .collect()
}

/// Whether `mutant` answers every one- and two-message probe conversation
/// exactly like `original` (text, matched intent, prompt flag).
pub fn probe_identical(
    original: &AgentDefinition,
    mutant: &AgentDefinition,
    actions: &Arc<ActionRegistry>,
    probes: &[String],
) -> bool {
    let a = Arc::new(original.clone());
    let b = Arc::new(mutant.clone());
    for first in probes {
        if converse(&a, actions, &[first]) != converse(&b, actions, &[first]) {
            return false;
        }
        for second in probes {
            let msgs = [first.as_str(), second.as_str()];
            if converse(&a, actions, &msgs) != converse(&b, actions, &msgs) {
                return false;
            }
        }
    }
    true
}

#[derive(Debug, Error)]
pub enum MutationError {
    #[error("baseline unstable: not correct on the original agent: {}", .0.join(", "))]
    BaselineUnstable(Vec<String>),
    #[error(transparent)]
    Execute(#[from] ExecuteError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Index { path: PathBuf, message: String },
    #[error(transparent)]
    Agent(#[from] AgentError),
}

impl From<ConnectError> for MutationError {
    fn from(e: ConnectError) -> Self {
        MutationError::Execute(e.into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MutationReport {
    pub total: usize,
    pub equivalent: usize,
    pub killed: usize,
    pub survived: Vec<String>,
    /// `None` when every mutant is equivalent (0/0).
    pub score: Option<f64>,
    pub killed_ids: Vec<String>,
    pub suspected_equivalent: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct ScoreOptions {
    pub routine: CleaningRoutine,
    pub registry: Arc<ConnectorRegistry>,
    pub repeats: u32,
    pub jobs: usize,
}

impl ScoreOptions {
    pub fn new(routine: CleaningRoutine, repeats: u32) -> Self {
        ScoreOptions {
            routine,
            registry: Arc::new(ConnectorRegistry::with_local_sim()),
            repeats,
            jobs: 1,
        }
    }
}

fn kills(
    mutant: &Mutant,
    tests: &[Convo],
    routine: CleaningRoutine,
    opts: &ScoreOptions,
) -> Result<bool, ExecuteError> {
    let mut cleaner = Cleaner::new(routine, opts.registry.clone(), Arc::new(mutant.agent.clone()));
    for test in tests {
        let rec = run_test(test, &mut cleaner, opts.repeats)?;
        let killed = match opts.routine.mode {
            ResponseMode::Deterministic => rec.pass_count == 0,
            ResponseMode::SeededRandom => rec.fail_count > 0,
        };
        if killed {
            return Ok(true);
        }
    }
    Ok(false)
}

pub fn mutation_score(
    original: &AgentDefinition,
    mutants: &[Mutant],
    tests: &[Convo],
    opts: &ScoreOptions,
) -> Result<MutationReport, MutationError> {
    let mut baseline = Cleaner::new(opts.routine.clone(), opts.registry.clone(), Arc::new(original.clone()));
    let unstable: Vec<String> = run_suite(tests, &mut baseline, opts.repeats)?
        .into_iter()
        .filter(|r| r.verdict != Verdict::Correct)
        .map(|r| r.name)
        .collect();
    if !unstable.is_empty() {
        return Err(MutationError::BaselineUnstable(unstable));
    }
    drop(baseline);

    let live: Vec<&Mutant> = mutants.iter().filter(|m| !m.descriptor.equivalent).collect();
    let jobs = opts.jobs.clamp(1, live.len().max(1));
    let next = Mutex::new(0usize);
    let verdicts: Mutex<Vec<Option<Result<bool, ExecuteError>>>> =
        Mutex::new((0..live.len()).map(|_| None).collect());
    thread::scope(|scope| {
        for w in 0..jobs {
            let (next, verdicts, live) = (&next, &verdicts, &live);
            let routine = if jobs == 1 { opts.routine.clone() } else { opts.routine.for_worker(w) };
            scope.spawn(move || loop {
                let i = {
                    let mut n = next.lock().unwrap_or_else(|e| e.into_inner());
                    *n += 1;
                    *n - 1
                };
                let Some(m) = live.get(i) else { break };
                let v = kills(m, tests, routine.clone(), opts);
                verdicts.lock().unwrap_or_else(|e| e.into_inner())[i] = Some(v);
            });
        }
    });

    let mut report = MutationReport {
        total: mutants.len(),
        equivalent: mutants.len() - live.len(),
        killed: 0,
        survived: Vec::new(),
        score: None,
        killed_ids: Vec::new(),
        suspected_equivalent: mutants
            .iter()
            .filter(|m| m.descriptor.suspected_equivalent)
            .map(|m| m.descriptor.id.clone())
            .collect(),
    };
    let verdicts = verdicts.into_inner().unwrap_or_else(|e| e.into_inner());
    for (m, v) in live.iter().zip(verdicts) {
        if v.expect("every mutant was run")? {
            report.killed_ids.push(m.descriptor.id.clone());
        } else {
            report.survived.push(m.descriptor.id.clone());
        }
    }
    report.killed = report.killed_ids.len();
    if !live.is_empty() {
        report.score = Some(report.killed as f64 / live.len() as f64);
    }
    Ok(report)
}

pub const INDEX_FILE: &str = "index.json";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> MutationError + '_ {
    move |source| MutationError::Io { path: path.to_path_buf(), source }
}

/// Writes `<dir>/<id>.agent.json` per mutant plus `<dir>/index.json`.
pub fn write_mutants(mutants: &[Mutant], dir: &Path) -> Result<(), MutationError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for m in mutants {
        let path = dir.join(format!("{}.agent.json", m.descriptor.id));
        fs::write(&path, agent_to_json(&m.agent)).map_err(io_err(&path))?;
    }
    let index: Vec<&MutantDescriptor> = mutants.iter().map(|m| &m.descriptor).collect();
    let path = dir.join(INDEX_FILE);
    let text = serde_json::to_string_pretty(&index).expect("descriptors serialize") + "\n";
    fs::write(&path, text).map_err(io_err(&path))
}

/// Reads mutants written by [`write_mutants`].
pub fn load_mutants(dir: &Path) -> Result<Vec<Mutant>, MutationError> {
    let path = dir.join(INDEX_FILE);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let index: Vec<MutantDescriptor> = serde_json::from_str(&text)
        .map_err(|e| MutationError::Index { path: path.clone(), message: e.to_string() })?;
    index
        .into_iter()
        .map(|descriptor| {
            let agent = load_agent_with(dir.join(format!("{}.agent.json", descriptor.id)), Validation::Lenient)?;
            Ok(Mutant { descriptor, agent })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::Intent;
    use crate::bundled;

    fn count(mutants: &[Mutant], op: Operator) -> usize {
        mutants.iter().filter(|m| m.descriptor.operator == op).count()
    }

    #[test]
    fn dmv_operator_counts() {
        let ms = generate_mutants(&bundled::dmv_scheduler());
        assert_eq!(count(&ms, Operator::IntentRemoval), 2);
        assert_eq!(count(&ms, Operator::EntityRemoval), 1);
        assert_eq!(count(&ms, Operator::IntentParameterRemoval), 3);
        assert_eq!(count(&ms, Operator::IntentPriorityChange), 2);
        assert_eq!(count(&ms, Operator::IntentFallbackFlag), 2);
        assert_eq!(count(&ms, Operator::EntityRename), 1);
        assert_eq!(count(&ms, Operator::EntityValueChange), 1);
        assert_eq!(ms.len(), 12);
    }

    #[test]
    fn single_intent_priority_mutant_is_equivalent() {
        let mut agent = bundled::dmv_scheduler();
        agent.intents.retain(|i| i.is_fallback || i.name == "Welcome");
        agent.entities.clear();
        let ms = generate_mutants(&agent);
        let prio: Vec<&Mutant> =
            ms.iter().filter(|m| m.descriptor.operator == Operator::IntentPriorityChange).collect();
        assert_eq!(prio.len(), 1);
        assert!(prio[0].descriptor.equivalent);
    }

    #[test]
    fn competing_intents_keep_priority_mutants_live() {
        let mut agent = bundled::dmv_scheduler();
        let mut hey = Intent::new("Hey");
        hey.training_phrases.push(TrainingPhrase::literal("hello"));
        hey.responses = agent.intents[1].responses.clone();
        hey.responses[0].variants[0] = "Hey!".into();
        agent.intents.push(hey);
        let ms = generate_mutants(&agent);
        let welcome = ms
            .iter()
            .find(|m| m.descriptor.target == "intents/Welcome/priority")
            .unwrap();
        assert!(!welcome.descriptor.equivalent);
    }

    #[test]
    fn mutants_differ_from_original() {
        let agent = bundled::currency_converter();
        for m in generate_mutants(&agent) {
            assert_ne!(m.agent, agent, "{}", m.descriptor.id);
        }
    }

    #[test]
    fn empty_mutant_set_scores_undefined() {
        let agent = bundled::dmv_scheduler();
        let opts = ScoreOptions::new(CleaningRoutine::local_sim(ResponseMode::Deterministic, 0), 1);
        let r = mutation_score(&agent, &[], &[], &opts).unwrap();
        assert_eq!((r.total, r.killed, r.score), (0, 0, None));
    }
}
