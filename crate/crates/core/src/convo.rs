//! Botium-style `.convo.txt` files: a name line, an optional
//! `-- origin: ...` metadata line, then alternating `#me` / `#bot` blocks.

use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Step {
    Me(String),
    Bot(String),
}

impl Step {
    pub fn text(&self) -> &str {
        match self {
            Step::Me(t) | Step::Bot(t) => t,
        }
    }

    pub fn is_me(&self) -> bool {
        matches!(self, Step::Me(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Origin {
    Seedgen,
    GeneratorSeed,
    GeneratorBranch,
}

impl Origin {
    pub fn as_str(self) -> &'static str {
        match self {
            Origin::Seedgen => "seedgen",
            Origin::GeneratorSeed => "generator-seed",
            Origin::GeneratorBranch => "generator-branch",
        }
    }
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Origin {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "seedgen" => Ok(Origin::Seedgen),
            "generator-seed" => Ok(Origin::GeneratorSeed),
            "generator-branch" => Ok(Origin::GeneratorBranch),
            _ => Err(()),
        }
    }
}

/// Why a statically generated seed's oracle cannot be trusted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SeedFlags {
    /// No intent chain establishes the seed intent's input contexts.
    pub unreachable: bool,
    /// The expected response keeps an action-result placeholder.
    pub dynamic: bool,
}

impl SeedFlags {
    pub fn any(&self) -> bool {
        self.unreachable || self.dynamic
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Convo {
    pub name: String,
    pub steps: Vec<Step>,
    pub seed: bool,
    pub origin: Option<Origin>,
    pub flags: SeedFlags,
}

impl Convo {
    pub fn new(name: impl Into<String>) -> Self {
        Convo {
            name: name.into(),
            steps: Vec::new(),
            seed: false,
            origin: None,
            flags: SeedFlags::default(),
        }
    }

    pub fn push_me(&mut self, text: impl Into<String>) {
        self.steps.push(Step::Me(text.into()));
    }

    pub fn push_bot(&mut self, text: impl Into<String>) {
        self.steps.push(Step::Bot(text.into()));
    }

    pub fn me_steps(&self) -> impl Iterator<Item = &str> {
        self.steps.iter().filter_map(|s| match s {
            Step::Me(t) => Some(t.as_str()),
            Step::Bot(_) => None,
        })
    }

    /// Each user message paired with the bot text expected after it.
    pub fn turns(&self) -> Vec<(&str, Option<&str>)> {
        let mut out = Vec::new();
        let mut iter = self.steps.iter().peekable();
        while let Some(step) = iter.next() {
            if let Step::Me(me) = step {
                let expected = match iter.peek() {
                    Some(Step::Bot(b)) => {
                        iter.next();
                        Some(b.as_str())
                    }
                    _ => None,
                };
                out.push((me.as_str(), expected));
            }
        }
        out
    }

    /// Checks the structural invariant: non-empty, starts with `#me`, alternates.
    pub fn check(&self) -> Result<(), String> {
        if self.steps.is_empty() {
            return Err("convo has no steps".into());
        }
        for (i, step) in self.steps.iter().enumerate() {
            if step.is_me() != (i % 2 == 0) {
                return Err(format!("step {} breaks #me/#bot alternation", i + 1));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormatError {
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
}

impl FormatError {
    pub fn line(&self) -> usize {
        match self {
            FormatError::Format { line, .. } => *line,
        }
    }
}

fn format_error(line: usize, message: impl Into<String>) -> FormatError {
    FormatError::Format { line, message: message.into() }
}

const ORIGIN_PREFIX: &str = "-- origin:";

fn parse_header(line: &str, convo: &mut Convo, line_no: usize) -> Result<(), FormatError> {
    let body = line[ORIGIN_PREFIX.len()..].trim();
    let mut tokens = body.split(';').map(str::trim).filter(|t| !t.is_empty());
    let origin = tokens.next().ok_or_else(|| format_error(line_no, "empty origin header"))?;
    convo.origin = Some(
        origin
            .parse()
            .map_err(|_| format_error(line_no, format!("unknown origin `{origin}`")))?,
    );
    for token in tokens {
        match token {
            "seed" => convo.seed = true,
            "unreachable" => convo.flags.unreachable = true,
            "dynamic" => convo.flags.dynamic = true,
            other => return Err(format_error(line_no, format!("unknown origin flag `{other}`"))),
        }
    }
    Ok(())
}

pub fn parse_convo(text: &str) -> Result<Convo, FormatError> {
    let lines: Vec<&str> = text.lines().collect();
    let mut idx = 0;
    while idx < lines.len() && lines[idx].trim().is_empty() {
        idx += 1;
    }
    let Some(name_line) = lines.get(idx) else {
        return Err(format_error(1, "missing convo name"));
    };
    let name = name_line.trim();
    if name.starts_with('#') {
        return Err(format_error(idx + 1, "missing convo name"));
    }
    let mut convo = Convo::new(name);
    idx += 1;
    if let Some(line) = lines.get(idx) {
        if line.trim_start().starts_with(ORIGIN_PREFIX) {
            parse_header(line.trim(), &mut convo, idx + 1)?;
            idx += 1;
        }
    }

    // (tag, tag line number, text lines)
    let mut current: Option<(bool, usize, Vec<&str>)> = None;
    let finish = |block: Option<(bool, usize, Vec<&str>)>,
                      convo: &mut Convo|
     -> Result<(), FormatError> {
        let Some((is_me, line_no, body)) = block else { return Ok(()) };
        let text = body
            .iter()
            .map(|l| l.trim())
            .filter(|l| !l.is_empty())
            .collect::<Vec<_>>()
            .join("\n");
        if text.is_empty() {
            return Err(format_error(line_no, "empty block"));
        }
        convo.steps.push(if is_me { Step::Me(text) } else { Step::Bot(text) });
        Ok(())
    };

    for (offset, line) in lines[idx..].iter().enumerate() {
        let line_no = idx + offset + 1;
        let trimmed = line.trim();
        if trimmed.starts_with('#') {
            let is_me = match trimmed {
                "#me" => true,
                "#bot" => false,
                other => return Err(format_error(line_no, format!("unknown tag `{other}`"))),
            };
            finish(current.take(), &mut convo)?;
            let expect_me = convo.steps.len().is_multiple_of(2);
            if is_me != expect_me {
                return Err(format_error(line_no, "tags must alternate #me, #bot starting with #me"));
            }
            current = Some((is_me, line_no, Vec::new()));
        } else if let Some((_, _, body)) = current.as_mut() {
            body.push(line);
        } else if !trimmed.is_empty() {
            return Err(format_error(line_no, "text outside a #me/#bot block"));
        }
    }
    finish(current.take(), &mut convo)?;
    if convo.steps.is_empty() {
        return Err(format_error(lines.len().max(1), "convo has no steps"));
    }
    Ok(convo)
}

/// Canonical form: name, optional origin header, blank line, then each step
/// as tag line and text, steps separated by a blank line; LF endings.
pub fn serialize_convo(c: &Convo) -> String {
    let mut out = String::new();
    out.push_str(&c.name);
    out.push('\n');
    if let Some(origin) = c.origin {
        out.push_str(ORIGIN_PREFIX);
        out.push(' ');
        out.push_str(origin.as_str());
        for (on, flag) in [(c.seed, "seed"), (c.flags.unreachable, "unreachable"), (c.flags.dynamic, "dynamic")] {
            if on {
                out.push_str("; ");
                out.push_str(flag);
            }
        }
        out.push('\n');
    }
    for step in &c.steps {
        out.push('\n');
        out.push_str(if step.is_me() { "#me" } else { "#bot" });
        out.push('\n');
        out.push_str(step.text());
        out.push('\n');
    }
    out
}

pub const CONVO_SUFFIX: &str = ".convo.txt";

#[derive(Debug, Error)]
pub enum ConvoDirError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Format {
        path: PathBuf,
        #[source]
        source: FormatError,
    },
}

fn collect_convo_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), ConvoDirError> {
    let io_err = |source| ConvoDirError::Io { path: dir.to_path_buf(), source };
    for entry in fs::read_dir(dir).map_err(io_err)? {
        let path = entry.map_err(io_err)?.path();
        if path.is_dir() {
            collect_convo_files(&path, out)?;
        } else if path.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.ends_with(CONVO_SUFFIX)) {
            out.push(path);
        }
    }
    Ok(())
}

/// Every `*.convo.txt` below `dir`, recursively, in path order.
pub fn read_convo_dir(dir: &Path) -> Result<Vec<Convo>, ConvoDirError> {
    let mut paths = Vec::new();
    collect_convo_files(dir, &mut paths)?;
    paths.sort();
    paths
        .into_iter()
        .map(|path| {
            let text = fs::read_to_string(&path).map_err(|source| ConvoDirError::Io { path: path.clone(), source })?;
            parse_convo(&text).map_err(|source| ConvoDirError::Format { path, source })
        })
        .collect()
}
