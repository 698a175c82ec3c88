//! Example agents shipped with the crate.

use crate::agent::{parse_agent, AgentDefinition, Validation};

pub const DMV_SCHEDULER: &str = include_str!("../agents/dmv-scheduler.agent.json");
pub const CURRENCY_CONVERTER: &str = include_str!("../agents/currency-converter.agent.json");
pub const ROOM_RESERVATION: &str = include_str!("../agents/room-reservation.agent.json");

fn load(text: &str) -> AgentDefinition {
    parse_agent(text, Validation::Strict).expect("bundled agent is valid")
}

pub fn dmv_scheduler() -> AgentDefinition {
    load(DMV_SCHEDULER)
}

pub fn currency_converter() -> AgentDefinition {
    load(CURRENCY_CONVERTER)
}

pub fn room_reservation() -> AgentDefinition {
    load(ROOM_RESERVATION)
}

/// `(file stem, agent)` for every bundled agent.
pub fn all() -> Vec<(&'static str, AgentDefinition)> {
    vec![
        ("dmv-scheduler", dmv_scheduler()),
        ("currency-converter", currency_converter()),
        ("room-reservation", room_reservation()),
    ]
}
