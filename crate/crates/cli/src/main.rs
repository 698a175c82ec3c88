use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use convogen::agent::AgentDefinition;
use convogen::cleaner::{Cleaner, CleaningRoutine};
use convogen::convo::read_convo_dir;
use convogen::coverage::{compute_coverage, CoverageOptions, CoverageReport};
use convogen::executor::{parse_log, run_suite_parallel, verbose_log, ExecutionRecord, Verdict, DEFAULT_REPEATS};
use convogen::expander::DEFAULT_MAX_COMBINATIONS;
use convogen::generator::{
    generate_tests, write_tests, GenerateOptions, DEFAULT_MAX_TESTS_PER_SEED, DEFAULT_MAX_TURNS,
};
use convogen::mutation::{generate_mutants, load_mutants, mutation_score, write_mutants, MutationReport, ScoreOptions};
use convogen::seedgen::{generate_seeds_with, write_seeds, SeedOptions};
use convogen::{load_agent, ResponseMode};

const SEED_ENV: &str = "CONVOGEN_SEED";

#[derive(Parser)]
#[command(name = "convogen", version, about = "Generate, run and score conversational test suites")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write one seed convo per intent.
    Seedgen {
        #[arg(long)]
        agent: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Do not prefix seeds with the turns that open their input contexts.
        #[arg(long)]
        no_context_chains: bool,
    },
    /// Replay seeds against the bot and write the augmented suite.
    Generate {
        #[arg(long)]
        agent: PathBuf,
        #[arg(long)]
        seeds: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        bot: BotArgs,
        #[arg(long, default_value_t = DEFAULT_MAX_COMBINATIONS)]
        max_combinations: usize,
        #[arg(long, default_value_t = DEFAULT_MAX_TESTS_PER_SEED)]
        max_tests_per_seed: usize,
        #[arg(long, default_value_t = DEFAULT_MAX_TURNS)]
        max_turns: usize,
        /// End branch tests right after the branching message.
        #[arg(long)]
        truncate_branches: bool,
    },
    /// Execute a suite repeatedly and classify every test.
    Run {
        #[arg(long)]
        agent: PathBuf,
        #[arg(long)]
        tests: PathBuf,
        #[arg(long, default_value_t = DEFAULT_REPEATS)]
        repeats: u32,
        #[arg(long)]
        report: PathBuf,
        /// Also write the verbose per-turn log.
        #[arg(long)]
        log: Option<PathBuf>,
        #[command(flatten)]
        bot: BotArgs,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        pretty: bool,
    },
    /// Intent and entity-value coverage of an execution report.
    Coverage {
        #[arg(long)]
        agent: PathBuf,
        #[arg(long, required_unless_present = "from_log", conflicts_with = "from_log")]
        report: Option<PathBuf>,
        /// Read a verbose log instead of a JSON report.
        #[arg(long)]
        from_log: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        include_flaky: bool,
        #[arg(long)]
        pretty: bool,
    },
    /// Write every mutant of an agent plus an index.
    Mutate {
        #[arg(long)]
        agent: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Mutation score of a suite.
    Score {
        #[arg(long)]
        agent: PathBuf,
        #[arg(long)]
        mutants: PathBuf,
        #[arg(long)]
        tests: PathBuf,
        #[arg(long, default_value_t = DEFAULT_REPEATS)]
        repeats: u32,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        bot: BotArgs,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        pretty: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Deterministic,
    SeededRandom,
}

#[derive(Args)]
struct BotArgs {
    #[arg(long, value_enum, default_value_t = Mode::Deterministic)]
    mode: Mode,
    /// Base seed for response variants (CONVOGEN_SEED wins when set).
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl BotArgs {
    fn routine(&self) -> Result<CleaningRoutine> {
        let seed = match std::env::var(SEED_ENV) {
            Ok(v) => v.trim().parse().with_context(|| format!("{SEED_ENV}={v:?} is not an unsigned integer"))?,
            Err(_) => self.seed,
        };
        let mode = match self.mode {
            Mode::Deterministic => ResponseMode::Deterministic,
            Mode::SeededRandom => ResponseMode::SeededRandom,
        };
        Ok(CleaningRoutine::local_sim(mode, seed))
    }
}

fn agent(path: &Path) -> Result<AgentDefinition> {
    load_agent(path).with_context(|| format!("cannot load agent {}", path.display()))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("cannot create {}", parent.display()))?;
    }
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn print_run_table(records: &[ExecutionRecord]) {
    let width = records.iter().map(|r| r.name.len()).max().unwrap_or(4).max(4);
    println!("{:<width$}  {:<7}  pass  fail", "test", "verdict");
    for r in records {
        println!("{:<width$}  {:<7}  {:>4}  {:>4}", r.name, r.verdict.as_str(), r.pass_count, r.fail_count);
    }
    let count = |v| records.iter().filter(|r| r.verdict == v).count();
    println!(
        "{} tests: {} correct, {} flaky, {} wrong",
        records.len(),
        count(Verdict::Correct),
        count(Verdict::Flaky),
        count(Verdict::Wrong)
    );
}

fn print_coverage(report: &CoverageReport) {
    println!("intent coverage: {:.1}%", report.intent_pct);
    match report.entity_pct {
        Some(p) => println!("entity coverage: {p:.1}%"),
        None => println!("entity coverage: n/a"),
    }
    if !report.uncovered_intents.is_empty() {
        println!("uncovered intents: {}", report.uncovered_intents.join(", "));
    }
    for (entity, value) in &report.uncovered_values {
        println!("uncovered value: {entity} = {value}");
    }
}

fn print_score(report: &MutationReport) {
    let live = report.total - report.equivalent;
    match report.score {
        Some(s) => println!("killed {}/{} ({:.0}%)", report.killed, live, s * 100.0),
        None => println!("killed 0/0"),
    }
    println!("equivalent: {}", report.equivalent);
    for id in &report.survived {
        println!("survived: {id}");
    }
    for id in &report.suspected_equivalent {
        println!("suspected equivalent: {id}");
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Seedgen { agent: path, out, no_context_chains } => {
            let agent = agent(&path)?;
            let seeds = generate_seeds_with(&agent, SeedOptions { context_chains: !no_context_chains });
            for s in seeds.iter().filter(|s| s.flags.any()) {
                log::warn!("seed {} is flagged ({:?})", s.name, s.flags);
            }
            write_seeds(&seeds, &out).with_context(|| format!("cannot write seeds to {}", out.display()))?;
            log::info!("wrote {} seeds to {}", seeds.len(), out.display());
        }
        Command::Generate { agent: path, seeds, out, bot, max_combinations, max_tests_per_seed, max_turns, truncate_branches } => {
            let agent = Arc::new(agent(&path)?);
            let seeds = read_convo_dir(&seeds)?;
            let mut opts = GenerateOptions { max_tests_per_seed, max_turns, truncate_branches, ..Default::default() };
            opts.expand.max_combinations = max_combinations;
            let mut cleaner = Cleaner::local(bot.routine()?, agent);
            let generated = generate_tests(&seeds, &mut cleaner, &opts)?;
            for a in &generated.aborted {
                log::warn!("dropped {}: {:?}", a.test, a.cause);
            }
            write_tests(&generated, &out).with_context(|| format!("cannot write tests to {}", out.display()))?;
            log::info!("wrote {} tests to {}", generated.len(), out.display());
        }
        Command::Run { agent: path, tests, repeats, report, log: log_path, bot, jobs, pretty } => {
            let agent = Arc::new(agent(&path)?);
            let tests = read_convo_dir(&tests)?;
            let cleaner = Cleaner::local(bot.routine()?, agent);
            let records = run_suite_parallel(&tests, &cleaner, repeats, jobs)?;
            write_json(&report, &records)?;
            if let Some(p) = log_path {
                fs::write(&p, verbose_log(&records)).with_context(|| format!("cannot write {}", p.display()))?;
            }
            if pretty {
                print_run_table(&records);
            }
            if records.iter().any(|r| r.verdict != Verdict::Correct) {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Coverage { agent: path, report, from_log, out, include_flaky, pretty } => {
            let agent = agent(&path)?;
            let records: Vec<ExecutionRecord> = match (report, from_log) {
                (Some(p), _) => {
                    let text = fs::read_to_string(&p).with_context(|| format!("cannot read {}", p.display()))?;
                    serde_json::from_str(&text).with_context(|| format!("{} is not an execution report", p.display()))?
                }
                (None, Some(p)) => {
                    let text = fs::read_to_string(&p).with_context(|| format!("cannot read {}", p.display()))?;
                    parse_log(&text).with_context(|| format!("{}", p.display()))?
                }
                (None, None) => bail!("one of --report or --from-log is required"),
            };
            let cov = compute_coverage(&records, &agent, CoverageOptions { include_flaky })?;
            write_json(&out, &cov)?;
            if pretty {
                print_coverage(&cov);
            }
        }
        Command::Mutate { agent: path, out } => {
            let agent = agent(&path)?;
            let mutants = generate_mutants(&agent);
            write_mutants(&mutants, &out)?;
            log::info!("wrote {} mutants to {}", mutants.len(), out.display());
        }
        Command::Score { agent: path, mutants, tests, repeats, out, bot, jobs, pretty } => {
            let agent = agent(&path)?;
            let mutants = load_mutants(&mutants)?;
            let tests = read_convo_dir(&tests)?;
            let opts = ScoreOptions { jobs, ..ScoreOptions::new(bot.routine()?, repeats) };
            let report = mutation_score(&agent, &mutants, &tests, &opts)?;
            write_json(&out, &report)?;
            if pretty {
                print_score(&report);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
