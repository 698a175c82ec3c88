use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use super::store::StoreView;

/// What an action handler sees when its intent completes.
pub struct ActionCall<'a> {
    /// Canonical parameter values of the completing intent.
    pub fills: &'a BTreeMap<String, String>,
    pub store: &'a StoreView,
    pub turn: u64,
}

pub type ActionHandler = dyn Fn(&ActionCall<'_>) -> BTreeMap<String, String> + Send + Sync;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("action handler `{0}` is already registered")]
pub struct DuplicateHandler(pub String);

/// Action handlers by id.
#[derive(Clone, Default)]
pub struct ActionRegistry {
    handlers: BTreeMap<String, Arc<ActionHandler>>,
}

impl fmt::Debug for ActionRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.handlers.keys()).finish()
    }
}

impl ActionRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// The handlers used by the bundled example agents.
    pub fn with_builtins() -> Self {
        let mut reg = Self::new();
        reg.register("check_slot", check_slot).unwrap();
        reg.register("convert_currency", convert_currency).unwrap();
        reg.register("book_room", book_room).unwrap();
        reg.register("list_reservations", list_reservations).unwrap();
        reg
    }

    pub fn register<F>(&mut self, id: impl Into<String>, handler: F) -> Result<(), DuplicateHandler>
    where
        F: Fn(&ActionCall<'_>) -> BTreeMap<String, String> + Send + Sync + 'static,
    {
        let id = id.into();
        if self.handlers.contains_key(&id) {
            return Err(DuplicateHandler(id));
        }
        self.handlers.insert(id, Arc::new(handler));
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&Arc<ActionHandler>> {
        self.handlers.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.handlers.contains_key(id)
    }
}

fn fill<'a>(call: &'a ActionCall<'_>, name: &str) -> &'a str {
    call.fills.get(name).map(String::as_str).unwrap_or("")
}

fn result(text: impl Into<String>) -> BTreeMap<String, String> {
    BTreeMap::from([("result".to_string(), text.into())])
}

/// Books the (date, time) slot on first use; later requests find it taken.
pub fn check_slot(call: &ActionCall<'_>) -> BTreeMap<String, String> {
    let key = format!("{} {}", fill(call, "date"), fill(call, "time"));
    if call.store.contains(&key) {
        result("I'm sorry, there are no slots available")
    } else {
        call.store.put(&key, fill(call, "service"));
        result("Yes It is fine!")
    }
}

pub fn book_room(call: &ActionCall<'_>) -> BTreeMap<String, String> {
    let key = format!("{}|{}|{}", fill(call, "size"), fill(call, "date"), fill(call, "time"));
    if call.store.contains(&key) {
        result("Sorry, that room is already taken.")
    } else {
        call.store.put(&key, "booked");
        result("Your room is booked!")
    }
}

pub fn list_reservations(call: &ActionCall<'_>) -> BTreeMap<String, String> {
    match call.store.items().len() {
        0 => result("You have no reservations."),
        1 => result("You have 1 reservation."),
        n => result(format!("You have {n} reservations.")),
    }
}

fn currency_code(name: &str) -> Option<&'static str> {
    match name.to_lowercase().as_str() {
        "dollars" | "usd" => Some("USD"),
        "euros" | "eur" => Some("EUR"),
        "pounds" | "gbp" => Some("GBP"),
        _ => None,
    }
}

/// Exchange rate in units of 1e-4.
fn rate(from: &str, to: &str) -> Option<i128> {
    Some(match (from, to) {
        (a, b) if a == b => 10_000,
        ("USD", "EUR") => 9_214,
        ("EUR", "USD") => 10_853,
        ("USD", "GBP") => 7_980,
        ("GBP", "USD") => 12_531,
        ("EUR", "GBP") => 8_661,
        ("GBP", "EUR") => 11_546,
        _ => return None,
    })
}

/// Parses a decimal literal into (mantissa, scale).
fn parse_decimal(text: &str) -> Option<(i128, u32)> {
    let (negative, body) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text),
    };
    let (int, frac) = body.split_once('.').unwrap_or((body, ""));
    if int.is_empty() || !int.bytes().chain(frac.bytes()).all(|b| b.is_ascii_digit()) {
        return None;
    }
    let mantissa: i128 = format!("{int}{frac}").parse().ok()?;
    Some((if negative { -mantissa } else { mantissa }, frac.len() as u32))
}

fn format_decimal(mantissa: i128, scale: u32) -> String {
    let negative = mantissa < 0;
    let digits = mantissa.unsigned_abs().to_string();
    let scale = scale as usize;
    let padded = if digits.len() <= scale {
        format!("{}{}", "0".repeat(scale - digits.len() + 1), digits)
    } else {
        digits
    };
    let (int, frac) = padded.split_at(padded.len() - scale);
    let frac = frac.trim_end_matches('0');
    let sign = if negative { "-" } else { "" };
    if frac.is_empty() {
        format!("{sign}{int}")
    } else {
        format!("{sign}{int}.{frac}")
    }
}

/// Converts `amount` between currencies with a fixed rate table.
///
/// Returns `from` and `to` currency codes plus the converted `result`.
pub fn convert_currency(call: &ActionCall<'_>) -> BTreeMap<String, String> {
    let (Some(from), Some(to)) = (currency_code(fill(call, "from")), currency_code(fill(call, "to")))
    else {
        return BTreeMap::new();
    };
    let Some((mantissa, scale)) = parse_decimal(fill(call, "amount")) else {
        return BTreeMap::new();
    };
    let Some(r) = rate(from, to) else { return BTreeMap::new() };
    BTreeMap::from([
        ("from".to_string(), from.to_string()),
        ("to".to_string(), to.to_string()),
        ("result".to_string(), format_decimal(mantissa * r, scale + 4)),
    ])
}
