//! Intent and entity-value coverage from execution traces.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{AgentDefinition, EntityKind};
use crate::executor::{ExecutionRecord, Verdict};
use crate::sim::FALLBACK_INTENT;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CoverageError {
    #[error("trace of `{test}` names {kind} `{name}`, which the agent does not define")]
    UnknownAgentElement { test: String, kind: &'static str, name: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CoverageOptions {
    /// Also count the passing runs of flaky tests.
    pub include_flaky: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub intent_pct: f64,
    /// `None` when the agent has no custom entities.
    pub entity_pct: Option<f64>,
    pub covered_intents: Vec<String>,
    pub uncovered_intents: Vec<String>,
    pub covered_values: Vec<(String, String)>,
    pub uncovered_values: Vec<(String, String)>,
}

fn pct(covered: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        (100 * covered) as f64 / total as f64
    }
}

pub fn compute_coverage(
    records: &[ExecutionRecord],
    agent: &AgentDefinition,
    opts: CoverageOptions,
) -> Result<CoverageReport, CoverageError> {
    let mut intents: BTreeSet<&str> = BTreeSet::new();
    let mut values: BTreeSet<(String, String)> = BTreeSet::new();

    for rec in records {
        let runs: Vec<_> = match rec.verdict {
            Verdict::Correct => rec.runs.iter().collect(),
            Verdict::Flaky if opts.include_flaky => rec.runs.iter().filter(|r| r.passed()).collect(),
            _ => continue,
        };
        let unknown = |kind, name: &str| CoverageError::UnknownAgentElement {
            test: rec.name.clone(),
            kind,
            name: name.to_string(),
        };
        for turn in runs.iter().flat_map(|r| &r.turns) {
            if !turn.intent.is_empty() && turn.intent != FALLBACK_INTENT {
                let intent = agent.intent(&turn.intent).ok_or_else(|| unknown("intent", &turn.intent))?;
                if !intent.is_fallback {
                    intents.insert(&intent.name);
                }
            }
            for e in &turn.entities {
                match agent.entity_kind(&e.entity) {
                    None => return Err(unknown("entity", &e.entity)),
                    Some(EntityKind::Custom(entity)) => {
                        if !entity.canonical_values().any(|v| v == e.value) {
                            return Err(unknown("entity value", &format!("{}:{}", e.entity, e.value)));
                        }
                        values.insert((e.entity.clone(), e.value.clone()));
                    }
                    Some(EntityKind::System(_)) => {}
                }
            }
        }
    }

    let mut report = CoverageReport {
        intent_pct: 0.0,
        entity_pct: None,
        covered_intents: Vec::new(),
        uncovered_intents: Vec::new(),
        covered_values: Vec::new(),
        uncovered_values: Vec::new(),
    };
    for intent in agent.non_fallback_intents() {
        if intents.contains(intent.name.as_str()) {
            report.covered_intents.push(intent.name.clone());
        } else {
            report.uncovered_intents.push(intent.name.clone());
        }
    }
    for entity in &agent.entities {
        for value in entity.canonical_values() {
            let pair = (entity.name.clone(), value.to_string());
            if values.contains(&pair) {
                report.covered_values.push(pair);
            } else {
                report.uncovered_values.push(pair);
            }
        }
    }
    report.intent_pct = pct(
        report.covered_intents.len(),
        report.covered_intents.len() + report.uncovered_intents.len(),
    );
    if !agent.entities.is_empty() {
        report.entity_pct = Some(pct(
            report.covered_values.len(),
            report.covered_values.len() + report.uncovered_values.len(),
        ));
    }
    Ok(report)
}
