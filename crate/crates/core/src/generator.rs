//! Dynamic test generation: seeds are replayed against the live bot, its
//! actual replies become the expected bot steps, and every alternative the
//! expander offers spawns a branch test.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::agent::AgentDefinition;
use crate::cleaner::{BotConnection, Cleaner, ConnectError};
use crate::convo::{serialize_convo, Convo, Origin};
use crate::expander::{expand, BotMessage, ExpandError, ExpandOptions};
use crate::sim::SessionError;

pub const DEFAULT_MAX_TESTS_PER_SEED: usize = 256;
pub const DEFAULT_MAX_TURNS: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenerateOptions {
    pub expand: ExpandOptions,
    pub max_tests_per_seed: usize,
    /// User messages per test before generation gives up on it.
    pub max_turns: usize,
    /// Branch tests stop after replaying their inherited messages.
    pub truncate_branches: bool,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        GenerateOptions {
            expand: ExpandOptions::default(),
            max_tests_per_seed: DEFAULT_MAX_TESTS_PER_SEED,
            max_turns: DEFAULT_MAX_TURNS,
            truncate_branches: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AbortCause {
    #[error("bot fell back on {0:?}")]
    Fallback(String),
    #[error("more than {0} user messages")]
    TurnLimit(usize),
    #[error(transparent)]
    Session(#[from] SessionError),
}

/// A test dropped during generation.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("generation of `{test}` aborted: {cause}")]
pub struct GenerationAborted {
    pub test: String,
    pub cause: AbortCause,
}

#[derive(Debug, Error)]
pub enum GenerateError {
    #[error(transparent)]
    Connect(#[from] ConnectError),
    #[error("seed `{seed}`: {source}")]
    Expand {
        seed: String,
        #[source]
        source: ExpandError,
    },
}

/// Generated tests of one seed, in creation order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedSuite {
    pub seed: String,
    /// `(index, test)`; indices of aborted tests are missing.
    pub tests: Vec<(usize, Convo)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Generated {
    pub suites: Vec<SeedSuite>,
    pub aborted: Vec<GenerationAborted>,
}

impl Generated {
    pub fn all_tests(&self) -> impl Iterator<Item = &Convo> {
        self.suites.iter().flat_map(|s| s.tests.iter().map(|(_, t)| t))
    }

    pub fn len(&self) -> usize {
        self.suites.iter().map(|s| s.tests.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

struct Pending {
    seed_flagged: bool,
    /// Start message for seed-flagged tests, inherited prefix otherwise.
    messages: Vec<String>,
}

pub fn generate_tests(
    seeds: &[Convo],
    cleaner: &mut Cleaner,
    opts: &GenerateOptions,
) -> Result<Generated, GenerateError> {
    let mut out = Generated::default();
    for seed in seeds {
        let suite = generate_for_seed(seed, cleaner, opts, &mut out.aborted)?;
        out.suites.push(suite);
    }
    Ok(out)
}

fn expand_err(seed: &Convo) -> impl Fn(ExpandError) -> GenerateError + '_ {
    move |source| GenerateError::Expand { seed: seed.name.clone(), source }
}

fn generate_for_seed(
    seed: &Convo,
    cleaner: &mut Cleaner,
    opts: &GenerateOptions,
    aborted: &mut Vec<GenerationAborted>,
) -> Result<SeedSuite, GenerateError> {
    let agent = cleaner.agent().clone();
    let starts = expand(seed, None, &agent, &opts.expand).map_err(expand_err(seed))?;
    let mut pending: Vec<Pending> = starts
        .into_iter()
        .take(opts.max_tests_per_seed)
        .map(|m| Pending { seed_flagged: true, messages: vec![m] })
        .collect();

    let mut suite = SeedSuite { seed: seed.name.clone(), tests: Vec::new() };
    let mut i = 0;
    while i < pending.len() {
        let name = format!("{}_{i:03}", seed.name);
        let seed_flagged = pending[i].seed_flagged;
        let messages = pending[i].messages.clone();
        let conn = cleaner.set_up()?;
        let mut walk = Walk { seed, agent: &agent, conn, opts, test: Convo::new(&name), completed: 0 };
        let result = if seed_flagged {
            walk.run_seed(&messages[0], &mut pending)
        } else {
            walk.run_branch(&messages)
        };
        let mut test = walk.test;
        cleaner.tear_down();
        match result {
            Ok(()) => {
                test.seed = seed_flagged;
                test.origin =
                    Some(if seed_flagged { Origin::GeneratorSeed } else { Origin::GeneratorBranch });
                suite.tests.push((i, test));
            }
            Err(Stop::Abort(cause)) => {
                log::warn!("dropping generated test `{name}`: {cause}");
                aborted.push(GenerationAborted { test: name, cause });
            }
            Err(Stop::Expand(e)) => return Err(expand_err(seed)(e)),
        }
        i += 1;
    }
    Ok(suite)
}

enum Stop {
    Abort(AbortCause),
    Expand(ExpandError),
}

impl From<AbortCause> for Stop {
    fn from(c: AbortCause) -> Self {
        Stop::Abort(c)
    }
}

struct Walk<'a> {
    seed: &'a Convo,
    agent: &'a AgentDefinition,
    conn: &'a mut dyn BotConnection,
    opts: &'a GenerateOptions,
    test: Convo,
    completed: usize,
}

impl Walk<'_> {
    /// Sends one user message, records the actual reply and returns the
    /// alternatives for the next message.
    fn step(&mut self, msg: &str) -> Result<Vec<String>, Stop> {
        if self.test.me_steps().count() >= self.opts.max_turns {
            return Err(AbortCause::TurnLimit(self.opts.max_turns).into());
        }
        self.test.push_me(msg);
        let reply = self.conn.send(msg).map_err(AbortCause::from)?;
        if reply.is_fallback() {
            return Err(AbortCause::Fallback(msg.to_string()).into());
        }
        if !reply.is_prompt {
            self.completed += 1;
        }
        let cursor = BotMessage { text: &reply.text, completed: self.completed };
        let alts = expand(self.seed, Some(cursor), self.agent, &self.opts.expand).map_err(Stop::Expand);
        self.test.push_bot(reply.text);
        alts
    }

    /// Follows the first alternative to the end, queueing a branch test for
    /// every other alternative met on the way.
    fn run_seed(&mut self, start: &str, pending: &mut Vec<Pending>) -> Result<(), Stop> {
        let mut msg = start.to_string();
        loop {
            let alts = self.step(&msg)?;
            let Some((first, rest)) = alts.split_first() else { return Ok(()) };
            for alt in rest {
                if pending.len() >= self.opts.max_tests_per_seed {
                    log::warn!(
                        "seed `{}` reached {} tests; further branches dropped",
                        self.seed.name,
                        self.opts.max_tests_per_seed
                    );
                    break;
                }
                let mut messages: Vec<String> = self.test.me_steps().map(str::to_string).collect();
                messages.push(alt.clone());
                pending.push(Pending { seed_flagged: false, messages });
            }
            msg = first.clone();
        }
    }

    /// Replays the inherited messages, then completes the conversation along
    /// first alternatives without branching.
    fn run_branch(&mut self, messages: &[String]) -> Result<(), Stop> {
        let mut alts = Vec::new();
        for msg in messages {
            alts = self.step(msg)?;
        }
        if self.opts.truncate_branches {
            return Ok(());
        }
        while let Some(next) = alts.first().cloned() {
            alts = self.step(&next)?;
        }
        Ok(())
    }
}

/// Writes `<dir>/<seed>/<index>.convo.txt` for every generated test.
pub fn write_tests(generated: &Generated, dir: &Path) -> io::Result<()> {
    for suite in &generated.suites {
        let sub = dir.join(&suite.seed);
        fs::create_dir_all(&sub)?;
        for (i, test) in &suite.tests {
            fs::write(sub.join(format!("{i:03}.convo.txt")), serialize_convo(test))?;
        }
    }
    Ok(())
}
