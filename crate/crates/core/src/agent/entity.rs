//! Entity value recognition: custom entities match canonical values and
//! synonyms case-insensitively, system entities match fixed literal patterns.

use chrono::{Datelike, NaiveDate, Weekday};

use super::model::EntityType;

/// Monday 2024-05-06; "Tuesday" resolves to 2024-05-07.
pub fn default_reference_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2024, 5, 6).expect("valid date")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SystemEntity {
    Number,
    Date,
    Time,
    /// Accepts any non-empty text. Only produced by entity-removal mutants.
    Any,
}

impl SystemEntity {
    pub const ALL: [SystemEntity; 4] = [
        SystemEntity::Number,
        SystemEntity::Date,
        SystemEntity::Time,
        SystemEntity::Any,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SystemEntity::Number => "sys.number",
            SystemEntity::Date => "sys.date",
            SystemEntity::Time => "sys.time",
            SystemEntity::Any => "sys.any",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        SystemEntity::ALL.into_iter().find(|s| s.name() == name)
    }

    /// Literals used wherever a "first declared value" is needed.
    pub fn samples(self) -> &'static [&'static str] {
        match self {
            SystemEntity::Number => &["30"],
            SystemEntity::Date => &["Tuesday"],
            SystemEntity::Time => &["3pm"],
            SystemEntity::Any => &["anything"],
        }
    }

    /// Parses `text` (already case-folded and trimmed) into a canonical literal.
    pub fn parse(self, text: &str, reference: NaiveDate) -> Option<String> {
        match self {
            SystemEntity::Number => parse_number(text),
            SystemEntity::Date => parse_date(text, reference),
            SystemEntity::Time => parse_time(text),
            SystemEntity::Any => (!text.is_empty()).then(|| text.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum EntityKind<'a> {
    Custom(&'a EntityType),
    System(SystemEntity),
}

impl<'a> EntityKind<'a> {
    pub fn name(&self) -> &str {
        match self {
            EntityKind::Custom(e) => &e.name,
            EntityKind::System(s) => s.name(),
        }
    }

    /// Canonical values for a custom entity, sample literals for a system one.
    pub fn values(&self) -> Vec<String> {
        match self {
            EntityKind::Custom(e) => e.canonical_values().map(str::to_string).collect(),
            EntityKind::System(s) => s.samples().iter().map(|v| v.to_string()).collect(),
        }
    }

    pub fn first_value(&self) -> Option<String> {
        self.values().into_iter().next()
    }

    /// Recognizes `text` as a value of this entity, returning the canonical value.
    pub fn parse(&self, text: &str, reference: NaiveDate) -> Option<String> {
        let folded = fold(text);
        if folded.is_empty() {
            return None;
        }
        match self {
            EntityKind::Custom(e) => e
                .values
                .iter()
                .find(|v| {
                    fold(&v.value) == folded || v.synonyms.iter().any(|s| fold(s) == folded)
                })
                .map(|v| v.value.clone()),
            EntityKind::System(s) => s.parse(&folded, reference),
        }
    }
}

/// Case-folds and collapses whitespace.
pub fn fold(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

fn parse_number(text: &str) -> Option<String> {
    let body = text.strip_prefix('-').unwrap_or(text);
    let (int, frac) = match body.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (body, None),
    };
    let digits = |s: &str| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit());
    if !digits(int) || frac.is_some_and(|f| !digits(f)) {
        return None;
    }
    Some(text.to_string())
}

fn parse_weekday(text: &str) -> Option<Weekday> {
    Some(match text {
        "monday" => Weekday::Mon,
        "tuesday" => Weekday::Tue,
        "wednesday" => Weekday::Wed,
        "thursday" => Weekday::Thu,
        "friday" => Weekday::Fri,
        "saturday" => Weekday::Sat,
        "sunday" => Weekday::Sun,
        _ => return None,
    })
}

fn parse_date(text: &str, reference: NaiveDate) -> Option<String> {
    if let Some(day) = parse_weekday(text) {
        let ahead = (7 + day.num_days_from_monday() as i64
            - reference.weekday().num_days_from_monday() as i64)
            % 7;
        let date = reference + chrono::Duration::days(ahead);
        return Some(date.format("%Y-%m-%d").to_string());
    }
    let bytes = text.as_bytes();
    if bytes.len() == 10 && bytes[4] == b'-' && bytes[7] == b'-' {
        let date = NaiveDate::parse_from_str(text, "%Y-%m-%d").ok()?;
        return Some(date.format("%Y-%m-%d").to_string());
    }
    None
}

fn parse_time(text: &str) -> Option<String> {
    let compact: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    let (clock, meridiem) = if let Some(rest) = compact.strip_suffix("am") {
        (rest, Some(false))
    } else if let Some(rest) = compact.strip_suffix("pm") {
        (rest, Some(true))
    } else {
        (compact.as_str(), None)
    };
    // whitespace is only allowed between the clock and am/pm
    if meridiem.is_none() && compact.len() != text.len() {
        return None;
    }
    let (hour_text, minute_text) = match clock.split_once(':') {
        Some((h, m)) => (h, Some(m)),
        None if meridiem.is_some() => (clock, None),
        None => return None,
    };
    let all_digits = |s: &str| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit());
    if !all_digits(hour_text) || hour_text.len() > 2 {
        return None;
    }
    let mut hour: u32 = hour_text.parse().ok()?;
    let minute: u32 = match minute_text {
        Some(m) if m.len() == 2 && all_digits(m) => m.parse().ok()?,
        Some(_) => return None,
        None => 0,
    };
    if minute > 59 {
        return None;
    }
    match meridiem {
        Some(pm) => {
            if !(1..=12).contains(&hour) {
                return None;
            }
            hour %= 12;
            if pm {
                hour += 12;
            }
        }
        None if hour > 23 => return None,
        None => {}
    }
    Some(format!("{hour:02}:{minute:02}"))
}
