//! Repeated suite execution with text-match oracles and a correct / flaky /
//! wrong verdict per test.

use std::fmt::Write as _;
use std::sync::Mutex;
use std::thread;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cleaner::{Cleaner, ConnectError};
use crate::convo::Convo;

pub const DEFAULT_REPEATS: u32 = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Correct,
    Flaky,
    Wrong,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Correct => "correct",
            Verdict::Flaky => "flaky",
            Verdict::Wrong => "wrong",
        }
    }

    pub fn from_counts(pass: usize, fail: usize) -> Verdict {
        match (pass, fail) {
            (_, 0) => Verdict::Correct,
            (0, _) => Verdict::Wrong,
            _ => Verdict::Flaky,
        }
    }
}

impl std::str::FromStr for Verdict {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "correct" => Ok(Verdict::Correct),
            "flaky" => Ok(Verdict::Flaky),
            "wrong" => Ok(Verdict::Wrong),
            other => Err(format!("unknown verdict `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntityTrace {
    pub parameter: String,
    pub entity: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnTrace {
    pub me: String,
    /// `None` when the convo ends with a user step.
    pub expected: Option<String>,
    pub actual: String,
    pub intent: String,
    pub entities: Vec<EntityTrace>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunTrace {
    pub turns: Vec<TurnTrace>,
}

impl RunTrace {
    pub fn passed(&self) -> bool {
        self.turns.iter().all(|t| t.pass)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionRecord {
    pub name: String,
    pub verdict: Verdict,
    pub pass_count: usize,
    pub fail_count: usize,
    pub runs: Vec<RunTrace>,
}

impl ExecutionRecord {
    pub fn from_runs(name: impl Into<String>, runs: Vec<RunTrace>) -> Self {
        let pass_count = runs.iter().filter(|r| r.passed()).count();
        let fail_count = runs.len() - pass_count;
        ExecutionRecord {
            name: name.into(),
            verdict: Verdict::from_counts(pass_count, fail_count),
            pass_count,
            fail_count,
            runs,
        }
    }
}

#[derive(Debug, Error)]
pub enum ExecuteError {
    #[error("repeats must be at least 1")]
    NoRepeats,
    #[error(transparent)]
    Connect(#[from] ConnectError),
}

/// Trim plus collapse of internal whitespace.
pub fn normalize_text(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn texts_match(expected: &str, actual: &str) -> bool {
    normalize_text(expected) == normalize_text(actual)
}

/// Runs `test` once on a fresh connection.
pub fn run_once(test: &Convo, cleaner: &mut Cleaner) -> Result<RunTrace, ConnectError> {
    let conn = cleaner.set_up()?;
    let mut turns = Vec::new();
    let mut broken = false;
    for (me, expected) in test.turns() {
        let turn = if broken {
            None
        } else {
            match conn.send(me) {
                Ok(reply) => Some(reply),
                Err(e) => {
                    log::warn!("`{}`: bot error: {e}", test.name);
                    broken = true;
                    None
                }
            }
        };
        turns.push(match turn {
            Some(reply) => TurnTrace {
                me: me.to_string(),
                expected: expected.map(str::to_string),
                pass: expected.is_none_or(|e| texts_match(e, &reply.text)),
                intent: reply.matched_intent,
                entities: reply
                    .extracted
                    .into_iter()
                    .map(|(parameter, v)| EntityTrace { parameter, entity: v.entity, value: v.value })
                    .collect(),
                actual: reply.text,
            },
            None => TurnTrace {
                me: me.to_string(),
                expected: expected.map(str::to_string),
                actual: String::new(),
                intent: String::new(),
                entities: Vec::new(),
                pass: false,
            },
        });
    }
    cleaner.tear_down();
    Ok(RunTrace { turns })
}

/// Runs `test` `repeats` times; run `r` uses seed `base + r`.
pub fn run_test(test: &Convo, cleaner: &mut Cleaner, repeats: u32) -> Result<ExecutionRecord, ExecuteError> {
    if repeats == 0 {
        return Err(ExecuteError::NoRepeats);
    }
    let base = cleaner.routine().seed;
    let mut runs = Vec::with_capacity(repeats as usize);
    let mut outcome = Ok(());
    for r in 0..repeats {
        cleaner.routine_mut().seed = base.wrapping_add(u64::from(r));
        match run_once(test, cleaner) {
            Ok(run) => runs.push(run),
            Err(e) => {
                outcome = Err(e);
                break;
            }
        }
    }
    cleaner.routine_mut().seed = base;
    outcome?;
    Ok(ExecutionRecord::from_runs(&test.name, runs))
}

pub fn run_suite(tests: &[Convo], cleaner: &mut Cleaner, repeats: u32) -> Result<Vec<ExecutionRecord>, ExecuteError> {
    tests.iter().map(|t| run_test(t, cleaner, repeats)).collect()
}

/// Like [`run_suite`] over `jobs` worker threads, each with its own cleaner
/// and store namespace. Records keep the order of `tests`.
pub fn run_suite_parallel(
    tests: &[Convo],
    cleaner: &Cleaner,
    repeats: u32,
    jobs: usize,
) -> Result<Vec<ExecutionRecord>, ExecuteError> {
    if repeats == 0 {
        return Err(ExecuteError::NoRepeats);
    }
    let jobs = jobs.clamp(1, tests.len().max(1));
    let next = Mutex::new(0usize);
    let results: Mutex<Vec<Option<Result<ExecutionRecord, ExecuteError>>>> =
        Mutex::new((0..tests.len()).map(|_| None).collect());
    thread::scope(|scope| {
        for w in 0..jobs {
            let (next, results) = (&next, &results);
            let routine = cleaner.routine().for_worker(w);
            let mut worker =
                Cleaner::new(routine, cleaner.registry().clone(), cleaner.agent().clone());
            scope.spawn(move || loop {
                let i = {
                    let mut n = next.lock().unwrap_or_else(|e| e.into_inner());
                    let i = *n;
                    *n += 1;
                    i
                };
                let Some(test) = tests.get(i) else { break };
                let rec = run_test(test, &mut worker, repeats);
                results.lock().unwrap_or_else(|e| e.into_inner())[i] = Some(rec);
            });
        }
    });
    results
        .into_inner()
        .unwrap_or_else(|e| e.into_inner())
        .into_iter()
        .map(|r| r.expect("every test was run"))
        .collect()
}

fn quoted(text: &str) -> String {
    serde_json::to_string(text).expect("string serializes")
}

/// Verbose textual log of the runs, parseable by [`parse_log`].
pub fn verbose_log(records: &[ExecutionRecord]) -> String {
    let mut out = String::new();
    for rec in records {
        for (r, run) in rec.runs.iter().enumerate() {
            let _ = writeln!(out, "test {} run {}", quoted(&rec.name), r + 1);
            for turn in &run.turns {
                let _ = writeln!(out, "  me: {}", quoted(&turn.me));
                if let Some(e) = &turn.expected {
                    let _ = writeln!(out, "  expected: {}", quoted(e));
                }
                let _ = writeln!(out, "  actual: {}", quoted(&turn.actual));
                let _ = writeln!(out, "  intent: {}", quoted(&turn.intent));
                for e in &turn.entities {
                    let _ = writeln!(
                        out,
                        "  entity: {} {} {}",
                        quoted(&e.parameter),
                        quoted(&e.entity),
                        quoted(&e.value)
                    );
                }
                let _ = writeln!(out, "  pass: {}", turn.pass);
            }
        }
        let _ = writeln!(out, "verdict {} {}", quoted(&rec.name), rec.verdict.as_str());
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("log line {line}: {message}")]
pub struct LogError {
    pub line: usize,
    pub message: String,
}

/// Splits a line into JSON string literals and bare words.
fn tokens(line: &str) -> Result<Vec<String>, String> {
    let mut out = Vec::new();
    let mut rest = line.trim_start();
    while !rest.is_empty() {
        if rest.starts_with('"') {
            let mut stream = serde_json::Deserializer::from_str(rest).into_iter::<String>();
            let s = stream.next().ok_or("unterminated string")?.map_err(|e| e.to_string())?;
            rest = &rest[stream.byte_offset()..];
            out.push(s);
        } else {
            let end = rest.find(char::is_whitespace).unwrap_or(rest.len());
            out.push(rest[..end].to_string());
            rest = &rest[end..];
        }
        rest = rest.trim_start();
    }
    Ok(out)
}

/// Reads records back from a [`verbose_log`].
pub fn parse_log(text: &str) -> Result<Vec<ExecutionRecord>, LogError> {
    let mut records = Vec::new();
    let mut runs: Vec<RunTrace> = Vec::new();
    let mut name: Option<String> = None;
    for (idx, line) in text.lines().enumerate() {
        let err = |message: String| LogError { line: idx + 1, message };
        if line.trim().is_empty() {
            continue;
        }
        let toks = tokens(line).map_err(err)?;
        let field = |i: usize| toks.get(i).cloned().ok_or_else(|| err("missing field".into()));
        match toks[0].as_str() {
            "test" => {
                let n = field(1)?;
                if name.as_ref().is_some_and(|cur| *cur != n) {
                    return Err(err(format!("runs of `{n}` before verdict of previous test")));
                }
                name = Some(n);
                runs.push(RunTrace { turns: Vec::new() });
            }
            "me:" => {
                let run = runs.last_mut().ok_or_else(|| err("turn outside a run".into()))?;
                run.turns.push(TurnTrace {
                    me: field(1)?,
                    expected: None,
                    actual: String::new(),
                    intent: String::new(),
                    entities: Vec::new(),
                    pass: false,
                });
            }
            key @ ("expected:" | "actual:" | "intent:" | "entity:" | "pass:") => {
                let values: Vec<String> = toks[1..].to_vec();
                let t = runs.last_mut().and_then(|r| r.turns.last_mut()).ok_or_else(|| err(format!("`{key}` outside a turn")))?;
                match (key, values.as_slice()) {
                    ("expected:", [v]) => t.expected = Some(v.clone()),
                    ("actual:", [v]) => t.actual = v.clone(),
                    ("intent:", [v]) => t.intent = v.clone(),
                    ("entity:", [p, e, v]) => t.entities.push(EntityTrace {
                        parameter: p.clone(),
                        entity: e.clone(),
                        value: v.clone(),
                    }),
                    ("pass:", [v]) => {
                        t.pass = v.parse().map_err(|_| err(format!("bad pass flag `{v}`")))?
                    }
                    _ => return Err(err(format!("malformed `{key}` line"))),
                }
            }
            "verdict" => {
                let n = field(1)?;
                let verdict: Verdict = field(2)?.parse().map_err(err)?;
                if name.as_ref().is_some_and(|cur| *cur != n) {
                    return Err(err(format!("verdict for `{n}` does not match its runs")));
                }
                let mut rec = ExecutionRecord::from_runs(n, std::mem::take(&mut runs));
                if rec.runs.is_empty() {
                    rec.verdict = verdict;
                }
                records.push(rec);
                name = None;
            }
            other => return Err(err(format!("unexpected `{other}`"))),
        }
    }
    if name.is_some() {
        return Err(LogError { line: text.lines().count(), message: "missing final verdict".into() });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::bundled;
    use crate::cleaner::CleaningRoutine;
    use crate::convo::parse_convo;
    use crate::sim::ResponseMode;

    fn room_cleaner(mode: ResponseMode) -> Cleaner {
        Cleaner::local(CleaningRoutine::local_sim(mode, 7), Arc::new(bundled::room_reservation()))
    }

    const GREET: &str = "greet\n\n#me\nhello\n\n#bot\nHi! I'm your room booking bot. I can help you to find a perfect room for your meeting and manage your reservations.";

    #[test]
    fn normalization_trims_and_collapses() {
        assert!(texts_match("  a \n b ", "a b"));
        assert!(!texts_match("a b", "ab"));
    }

    #[test]
    fn verdicts_partition_counts() {
        assert_eq!(Verdict::from_counts(3, 0), Verdict::Correct);
        assert_eq!(Verdict::from_counts(0, 3), Verdict::Wrong);
        assert_eq!(Verdict::from_counts(1, 2), Verdict::Flaky);
    }

    #[test]
    fn greeting_is_flaky_only_in_random_mode() {
        let test = parse_convo(GREET).unwrap();
        let det = run_test(&test, &mut room_cleaner(ResponseMode::Deterministic), 15).unwrap();
        assert_eq!(det.verdict, Verdict::Correct);
        let rnd = run_test(&test, &mut room_cleaner(ResponseMode::SeededRandom), 15).unwrap();
        assert_eq!(rnd.verdict, Verdict::Flaky);
        assert_eq!(rnd.pass_count + rnd.fail_count, 15);
    }

    #[test]
    fn zero_repeats_is_rejected() {
        let test = parse_convo(GREET).unwrap();
        assert!(run_test(&test, &mut room_cleaner(ResponseMode::Deterministic), 0).is_err());
    }

    #[test]
    fn log_round_trips() {
        let test = parse_convo(
            "book\n\n#me\nreserve a room\n\n#bot\nWhat \"size\"?\n\n#me\nsmall\n",
        )
        .unwrap();
        let records = run_suite(&[test], &mut room_cleaner(ResponseMode::Deterministic), 2).unwrap();
        let log = verbose_log(&records);
        assert_eq!(parse_log(&log).unwrap(), records);
    }

    #[test]
    fn parallel_matches_sequential() {
        let tests: Vec<Convo> = (0..6)
            .map(|i| {
                let mut c = parse_convo(GREET).unwrap();
                c.name = format!("greet{i}");
                c
            })
            .collect();
        let mut c = room_cleaner(ResponseMode::SeededRandom);
        let seq = run_suite(&tests, &mut c, 4).unwrap();
        let par = run_suite_parallel(&tests, &c, 4, 3).unwrap();
        assert_eq!(seq, par);
    }
}
