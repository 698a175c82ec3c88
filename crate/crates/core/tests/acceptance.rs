//! Acceptance suite: one PASS/FAIL line per criterion, then a single assertion.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use convogen::agent::{agent_to_json, parse_agent, AgentDefinition, EntityValue, Validation};
use convogen::bundled;
use convogen::cleaner::{Cleaner, CleaningRoutine};
use convogen::convo::{parse_convo, serialize_convo, Convo};
use convogen::coverage::{compute_coverage, CoverageOptions};
use convogen::executor::{run_suite, run_test, EntityTrace, ExecutionRecord, RunTrace, TurnTrace, Verdict};
use convogen::generator::{generate_tests, write_tests, GenerateOptions, Generated};
use convogen::mutation::{generate_mutants, mutation_score, probe_identical, probe_utterances, ScoreOptions};
use convogen::seedgen::{generate_seeds, generate_seeds_with, SeedOptions};
use convogen::sim::{ActionRegistry, ResponseMode};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn cleaner(agent: &AgentDefinition, mode: ResponseMode, seed: u64) -> Cleaner {
    Cleaner::local(CleaningRoutine::local_sim(mode, seed), Arc::new(agent.clone()))
}

fn generate(agent: &AgentDefinition) -> Generated {
    let seeds = generate_seeds(agent);
    generate_tests(&seeds, &mut cleaner(agent, ResponseMode::Deterministic, 0), &GenerateOptions::default())
        .expect("generation succeeds")
}

fn generated_tests(agent: &AgentDefinition) -> Vec<Convo> {
    generate(agent).all_tests().cloned().collect()
}

fn verdicts(records: &[ExecutionRecord]) -> BTreeMap<String, Verdict> {
    records.iter().map(|r| (r.name.clone(), r.verdict)).collect()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut summary = Vec::new();
    for (name, agent) in bundled::all() {
        let tests = generated_tests(&agent);
        ensure(!tests.is_empty(), || format!("{name}: no tests generated"))?;
        let records = run_suite(&tests, &mut cleaner(&agent, ResponseMode::Deterministic, 0), 15)
            .map_err(|e| e.to_string())?;
        let bad: Vec<_> = records.iter().filter(|r| r.verdict != Verdict::Correct).map(|r| &r.name).collect();
        ensure(bad.is_empty(), || format!("{name}: not correct: {bad:?}"))?;
        summary.push(format!("{name} {}/{}", records.len(), records.len()));
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(10), || format!("took {elapsed:?}"))?;
    Ok(format!("{} correct in {elapsed:.2?}", summary.join(", ")))
}

fn criterion_2() -> Outcome {
    // (1) variant sets: static oracle flaky, dynamic oracle correct
    let room = bundled::room_reservation();
    let welcome_seed = generate_seeds(&room).into_iter().find(|s| s.name == "Welcome").unwrap();
    let rec = run_test(&welcome_seed, &mut cleaner(&room, ResponseMode::SeededRandom, 42), 15)
        .map_err(|e| e.to_string())?;
    ensure(rec.verdict == Verdict::Flaky, || format!("(1) static greeting verdict {:?}", rec.verdict))?;
    let gen = run_suite(&generated_tests(&room), &mut cleaner(&room, ResponseMode::Deterministic, 0), 15)
        .map_err(|e| e.to_string())?;
    ensure(gen.iter().all(|r| r.verdict == Verdict::Correct), || "(1) generated room suite not correct".into())?;

    // (2) dirty environment
    let dmv = bundled::dmv_scheduler();
    let booking = generated_tests(&dmv)
        .into_iter()
        .find(|t| t.steps.last().is_some_and(|s| s.text().ends_with("Yes It is fine!")))
        .ok_or("(2) no booking test generated")?;
    let mut dirty = cleaner(&dmv, ResponseMode::Deterministic, 0);
    dirty.routine_mut().cleaning = false;
    let rec = run_test(&booking, &mut dirty, 2).map_err(|e| e.to_string())?;
    ensure(rec.runs[0].passed() && !rec.runs[1].passed(), || "(2) dirty run did not fail on run 2".into())?;
    let rec = run_test(&booking, &mut cleaner(&dmv, ResponseMode::Deterministic, 0), 2).map_err(|e| e.to_string())?;
    ensure(rec.verdict == Verdict::Correct, || "(2) cleaned runs not correct".into())?;

    // (3) dynamic responses recorded
    let static_seed = generate_seeds(&dmv).into_iter().find(|s| s.name == "ScheduleAppointment").unwrap();
    ensure(static_seed.steps.last().unwrap().text().contains("%result"), || {
        "(3) static oracle unexpectedly resolved".into()
    })?;
    let last = booking.steps.last().unwrap().text();
    ensure(last == "Let me see if we can fit you in on 2024-05-07 at 15:00! Yes It is fine!", || {
        format!("(3) recorded {last:?}")
    })?;

    // (4) context-gated follow-up
    let cur = bundled::currency_converter();
    let bare = generate_seeds_with(&cur, SeedOptions { context_chains: false })
        .into_iter()
        .find(|s| s.name == "ConvertTo")
        .unwrap();
    let rec = run_test(&bare, &mut cleaner(&cur, ResponseMode::Deterministic, 0), 15).map_err(|e| e.to_string())?;
    ensure(rec.verdict == Verdict::Wrong, || format!("(4) context-less verdict {:?}", rec.verdict))?;
    let actual = &rec.runs[0].turns[0].actual;
    ensure(actual == "Invalid currency conversion parameters", || format!("(4) actual {actual:?}"))?;
    let g = generate(&cur);
    let follow: Vec<Convo> = g.suites.iter().find(|s| s.seed == "ConvertTo").unwrap().tests.iter().map(|(_, t)| t.clone()).collect();
    ensure(!follow.is_empty(), || "(4) no generated ConvertTo tests".into())?;
    let recs = run_suite(&follow, &mut cleaner(&cur, ResponseMode::Deterministic, 0), 15).map_err(|e| e.to_string())?;
    ensure(recs.iter().all(|r| r.verdict == Verdict::Correct), || "(4) generated follow-up not correct".into())?;
    Ok(format!("flaky static greeting, dirty run 2 fails, dynamic oracle {last:?}, context-less follow-up wrong vs {} correct", recs.len()))
}

fn criterion_3() -> Outcome {
    let agent = common::pizza_agent();
    let g = generate(&agent);
    let oracle = common::count_conversation_leaves(&agent, "Order");
    ensure(g.len() == 6 && oracle == 6, || format!("generated {} oracle {oracle}", g.len()))?;
    Ok(format!("generated {} = brute force {oracle}", g.len()))
}

fn arb_records(agent: AgentDefinition) -> impl Strategy<Value = Vec<ExecutionRecord>> {
    let mut intents: Vec<String> = agent.intents.iter().map(|i| i.name.clone()).collect();
    intents.push(common::fallback_name().into());
    let mut values: Vec<(String, String)> = agent
        .entities
        .iter()
        .flat_map(|e| e.values.iter().map(move |v| (e.name.clone(), v.value.clone())))
        .collect();
    values.push(("sys.number".into(), "30".into()));
    let turn = (
        prop::sample::select(intents),
        prop::collection::vec(prop::sample::select(values), 0..3),
        prop::bool::weighted(0.8),
    )
        .prop_map(|(intent, entities, pass)| TurnTrace {
            me: "m".into(),
            expected: Some("e".into()),
            actual: "a".into(),
            intent,
            entities: entities
                .into_iter()
                .enumerate()
                .map(|(i, (entity, value))| EntityTrace { parameter: format!("p{i}"), entity, value })
                .collect(),
            pass,
        });
    let run = prop::collection::vec(turn, 0..4).prop_map(|turns| RunTrace { turns });
    let record = prop::collection::vec(run, 1..4).prop_map(|runs| ExecutionRecord::from_runs("t", runs));
    prop::collection::vec(record, 0..12)
}

fn criterion_4() -> Outcome {
    let mut runner = TestRunner::new(Config { cases: 100, failure_persistence: None, ..Config::default() });
    for (name, agent) in bundled::all() {
        let strategy = (arb_records(agent.clone()), any::<bool>());
        runner
            .run(&strategy, |(records, include_flaky)| {
                let report = compute_coverage(&records, &agent, CoverageOptions { include_flaky }).unwrap();
                let (ip, ep, pairs) = common::recount_coverage(&records, &agent, include_flaky);
                prop_assert_eq!(report.intent_pct, ip);
                prop_assert_eq!(report.entity_pct, ep);
                let covered: std::collections::BTreeSet<_> = report.covered_values.iter().cloned().collect();
                prop_assert_eq!(covered, pairs);
                Ok(())
            })
            .map_err(|e| format!("{name}: {e}"))?;
    }

    let dmv = bundled::dmv_scheduler();
    let suite = generated_tests(&dmv);
    let mut ten = dmv.clone();
    let entity = ten.entities.iter_mut().find(|e| e.name == "AppointmentType").unwrap();
    for extra in ["learner permit", "road test", "id card", "title transfer", "plate renewal", "address change", "vision test", "real id"] {
        entity.values.push(EntityValue { value: extra.into(), synonyms: vec![] });
    }
    let records = run_suite(&suite, &mut cleaner(&ten, ResponseMode::Deterministic, 0), 1).map_err(|e| e.to_string())?;
    let report = compute_coverage(&records, &ten, CoverageOptions::default()).map_err(|e| e.to_string())?;
    ensure(report.entity_pct == Some(20.0), || format!("dmv entity coverage {:?}", report.entity_pct))?;
    Ok("3 x 100 randomized suites agree with recount; dmv 2/10 values = 20%".into())
}

fn correct_only(agent: &AgentDefinition, tests: Vec<Convo>) -> Vec<Convo> {
    let records = run_suite(&tests, &mut cleaner(agent, ResponseMode::Deterministic, 0), 1).unwrap();
    tests
        .into_iter()
        .zip(records)
        .filter(|(_, r)| r.verdict == Verdict::Correct)
        .map(|(t, _)| t)
        .collect()
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let actions = Arc::new(ActionRegistry::with_builtins());
    let mut strict = false;
    let mut lines = Vec::new();
    for (name, agent) in bundled::all() {
        let mutants = generate_mutants(&agent);
        let probes = probe_utterances(&agent);
        for m in mutants.iter().filter(|m| m.descriptor.equivalent) {
            ensure(probe_identical(&agent, &m.agent, &actions, &probes), || {
                format!("{name}: equivalent mutant {} differs on the probe set", m.descriptor.id)
            })?;
        }
        let opts = ScoreOptions::new(CleaningRoutine::local_sim(ResponseMode::Deterministic, 0), 1);
        let generated = generated_tests(&agent);
        let seeds = correct_only(&agent, generate_seeds(&agent));
        let g = mutation_score(&agent, &mutants, &generated, &opts).map_err(|e| e.to_string())?;
        let s = mutation_score(&agent, &mutants, &seeds, &opts).map_err(|e| e.to_string())?;
        let (gs, ss) = (g.score.unwrap_or(0.0), s.score.unwrap_or(0.0));
        ensure(gs >= ss, || format!("{name}: generated {gs} < seedgen {ss}"))?;
        strict |= gs > ss;
        lines.push(format!(
            "{name} generated {}/{} seedgen {}/{}",
            g.killed,
            g.total - g.equivalent,
            s.killed,
            s.total - s.equivalent
        ));
    }
    ensure(strict, || format!("no agent with a strictly higher score: {}", lines.join("; ")))?;
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!("{} in {elapsed:.2?}", lines.join("; ")))
}

fn dir_contents(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn criterion_6() -> Outcome {
    let mut files = 0;
    for (name, agent) in bundled::all() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        write_tests(&generate(&agent), a.path()).unwrap();
        write_tests(&generate(&agent), b.path()).unwrap();
        let (ca, cb) = (dir_contents(a.path()), dir_contents(b.path()));
        ensure(!ca.is_empty() && ca == cb, || format!("{name}: generated files differ"))?;
        files += ca.len();

        let mut tests = generated_tests(&agent);
        tests.extend(generate_seeds(&agent));
        let base = verdicts(&run_suite(&tests, &mut cleaner(&agent, ResponseMode::Deterministic, 0), 3).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            tests.shuffle(&mut rng);
            let shuffled =
                verdicts(&run_suite(&tests, &mut cleaner(&agent, ResponseMode::Deterministic, 0), 3).unwrap());
            ensure(shuffled == base, || format!("{name}: verdicts changed under shuffling"))?;
        }
    }
    Ok(format!("{files} files byte-identical across two runs; 5 shuffles per agent keep verdicts"))
}

fn criterion_7() -> Outcome {
    let mut runner = TestRunner::new(Config { cases: 1000, failure_persistence: None, ..Config::default() });
    runner
        .run(&common::arb_convo(), |c| {
            let text = serialize_convo(&c);
            let back = parse_convo(&text).unwrap();
            prop_assert_eq!(&back, &c);
            prop_assert_eq!(serialize_convo(&back), text);
            Ok(())
        })
        .map_err(|e| format!("convo: {e}"))?;
    runner
        .run(&common::arb_agent(), |a| {
            let text = agent_to_json(&a);
            let back = parse_agent(&text, Validation::Strict).unwrap();
            prop_assert_eq!(&back, &a);
            prop_assert_eq!(agent_to_json(&back), text);
            Ok(())
        })
        .map_err(|e| format!("agent: {e}"))?;
    Ok("1000 convos and 1000 agents round-trip".into())
}

#[test]
fn acceptance() {
    let criteria: [Criterion; 7] = [
        ("oracle fidelity", criterion_1),
        ("flakiness classes", criterion_2),
        ("count law", criterion_3),
        ("coverage oracle", criterion_4),
        ("mutation ordering", criterion_5),
        ("hermeticity", criterion_6),
        ("format round-trips", criterion_7),
    ];
    let mut failed = Vec::new();
    for (i, (label, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        // straight to the stream so the verdicts show without --nocapture
        let line = match outcome {
            Ok(detail) => format!("criterion {} ({label}): PASS - {detail}", i + 1),
            Err(detail) => {
                failed.push(i + 1);
                format!("criterion {} ({label}): FAIL - {detail}", i + 1)
            }
        };
        let _ = writeln!(std::io::stderr().lock(), "{line}");
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
