
use std::collections::BTreeMap;
use std::sync::Arc;

use convogen::agent::AgentDefinition;
use convogen::bundled;
use convogen::sim::{
    open_session, ActionCall, ActionRegistry, BotReply, PersistenceStore, ResponseMode, Session,
    SimConfig, StoreView,
};
use proptest::prelude::*;

fn session(agent: AgentDefinition) -> Session {
    open_session(Arc::new(agent), 7, ResponseMode::Deterministic)
}

const SERVICE_PROMPT: &str =
    "What services are you looking to get? DMV offers Driver license and vehicle registration services.";

#[test]
fn booking_conversation_prompts_then_confirms() {
    let mut s = session(bundled::dmv_scheduler());
    assert!(s.state().active_contexts.is_empty());
    let prompt = s.send_message("I would like to set an appointment for 3pm on Tuesday").unwrap();
    assert!(prompt.is_prompt);
    assert!(prompt.text.starts_with(SERVICE_PROMPT), "{}", prompt.text);
    assert!(prompt.text.contains("@AppointmentType"));
    let done = s.send_message("Driver License").unwrap();
    assert_eq!(done.text, "Let me see if we can fit you in on 2024-05-07 at 15:00! Yes It is fine!");
    assert_eq!(done.matched_intent, "ScheduleAppointment");
    assert_eq!(done.extracted["service"].value, "driver license");
}

#[test]
fn second_booking_of_a_slot_is_refused() {
    let mut s = session(bundled::dmv_scheduler());
    s.send_message("book an appointment at 3pm on Tuesday").unwrap();
    s.send_message("vehicle registration").unwrap();
    s.send_message("book an appointment at 3pm on Tuesday").unwrap();
    let again = s.send_message("driver license").unwrap();
    assert!(again.text.ends_with("I'm sorry, there are no slots available"));
}

#[test]
fn gibberish_falls_back() {
    let mut s = session(bundled::dmv_scheduler());
    let r = s.send_message("xyzzy").unwrap();
    assert_eq!(r.matched_intent, "fallback");
    assert!(!r.is_prompt);
}

#[test]
fn follow_up_without_context_falls_back() {
    let mut s = session(bundled::currency_converter());
    let r = s.send_message("now into Euros").unwrap();
    assert!(r.is_fallback());
    assert_eq!(r.text, "Invalid currency conversion parameters");
}

#[test]
fn currency_follow_up_converts() {
    let mut s = session(bundled::currency_converter());
    assert_eq!(s.send_message("Convert 30 Dollars").unwrap().text, "What is the currency-to?");
    let r = s.send_message("now into Euros").unwrap();
    assert_eq!(r.matched_intent, "ConvertTo");
    assert!(r.text.contains("27.642"), "{}", r.text);
}

#[test]
fn sessions_get_distinct_namespaces() {
    let a = session(bundled::dmv_scheduler());
    let b = session(bundled::dmv_scheduler());
    assert_ne!(a.state().store_namespace, b.state().store_namespace);
}

#[test]
fn closed_session_rejects_messages() {
    let mut s = session(bundled::dmv_scheduler());
    s.close();
    assert!(s.send_message("hello").is_err());
}

#[test]
fn duplicate_action_handler_is_rejected() {
    let mut reg = ActionRegistry::with_builtins();
    assert!(reg.register("check_slot", |_: &ActionCall<'_>| BTreeMap::new()).is_err());
    assert!(reg.register("noop", |_: &ActionCall<'_>| BTreeMap::new()).is_ok());
}

#[test]
fn room_booking_prompts_for_each_missing_parameter_in_order() {
    let mut s = session(bundled::room_reservation());
    let replies: Vec<BotReply> = ["reserve a room", "Tuesday", "3pm", "small"]
        .iter()
        .map(|m| s.send_message(m).unwrap())
        .collect();
    assert!(replies[..3].iter().all(|r| r.is_prompt));
    assert!(replies[0].text.contains("@sys.date"));
    assert!(replies[1].text.contains("@sys.time"));
    assert!(replies[2].text.contains("@RoomSize"));
    assert!(!replies[3].is_prompt);
    assert!(replies[3].text.contains("Your room is booked!"));
}

#[test]
fn store_namespaces_are_isolated() {
    let store = PersistenceStore::in_memory();
    let agent = Arc::new(bundled::dmv_scheduler());
    let actions = Arc::new(ActionRegistry::with_builtins());
    let open = |ns: &str| {
        Session::open(
            agent.clone(),
            actions.clone(),
            StoreView::new(store.clone(), ns),
            SimConfig::new(ResponseMode::Deterministic, 0),
        )
    };
    let mut a = open("a");
    a.send_message("book an appointment at 3pm on Tuesday").unwrap();
    a.send_message("driver license").unwrap();
    assert_eq!(store.items("a").len(), 1);
    assert!(store.items("b").is_empty());
    let mut b = open("b");
    b.send_message("book an appointment at 3pm on Tuesday").unwrap();
    assert!(b.send_message("driver license").unwrap().text.ends_with("Yes It is fine!"));
}

fn transcript(agent: &Arc<AgentDefinition>, seed: u64, mode: ResponseMode, msgs: &[String]) -> Vec<BotReply> {
    let mut s = open_session(agent.clone(), seed, mode);
    msgs.iter().map(|m| s.send_message(m).unwrap()).collect()
}

fn message() -> impl Strategy<Value = String> {
    prop_oneof![
        Just("hello".to_string()),
        Just("good day".to_string()),
        Just("reserve a room".to_string()),
        Just("Tuesday".to_string()),
        Just("3pm".to_string()),
        Just("big".to_string()),
        Just("show my reservations".to_string()),
        Just("Convert 30 Dollars".to_string()),
        Just("now into Euros".to_string()),
        "\\PC{0,20}",
    ]
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, ..ProptestConfig::default() })]

    #[test]
    fn replies_are_reproducible(msgs in prop::collection::vec(message(), 1..8), seed in any::<u64>()) {
        for (_, agent) in bundled::all() {
            let agent = Arc::new(agent);
            for mode in [ResponseMode::Deterministic, ResponseMode::SeededRandom] {
                prop_assert_eq!(transcript(&agent, seed, mode, &msgs), transcript(&agent, seed, mode, &msgs));
            }
        }
    }

    #[test]
    fn any_text_gets_a_reply_and_context_gates_hold(msgs in prop::collection::vec(message(), 1..8)) {
        let agent = Arc::new(bundled::currency_converter());
        let mut s = open_session(agent.clone(), 0, ResponseMode::Deterministic);
        for m in &msgs {
            let active: Vec<String> = s.state().active_contexts.keys().cloned().collect();
            let pending = s.state().pending_slot.is_some();
            let r = s.send_message(m).unwrap();
            if let Some(intent) = agent.intent(&r.matched_intent) {
                if !pending {
                    prop_assert!(intent.input_contexts.iter().all(|c| active.contains(c)));
                }
            }
            if r.is_prompt {
                let p = s.state().pending_slot.clone().unwrap();
                let param = agent.intent(&p.intent).unwrap().parameter(&p.parameter).unwrap();
                prop_assert!(param.required);
                let marker = format!("@{}", param.entity);
                prop_assert!(r.text.contains(&marker));
            }
            prop_assert!(s.state().active_contexts.values().all(|c| c.lifespan > 0));
        }
        prop_assert_eq!(s.state().turn_counter, msgs.len() as u64);
    }
}
