//! States, events and the transition table.

use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FsmState {
    Idle,
    RelevanceCheck,
    ConfidenceCheck,
    Decomposition,
    SelfEvaluation,
    SearchOnline,
    Answer,
    Done,
}

impl FsmState {
    pub const ALL: [FsmState; 8] = [
        FsmState::Idle,
        FsmState::RelevanceCheck,
        FsmState::ConfidenceCheck,
        FsmState::Decomposition,
        FsmState::SelfEvaluation,
        FsmState::SearchOnline,
        FsmState::Answer,
        FsmState::Done,
    ];

    pub fn is_terminal(self) -> bool {
        self == FsmState::Done
    }
}

impl fmt::Display for FsmState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StateEvent {
    Start,
    Irrelevant,
    Relevant,
    Confident,
    NotConfident,
    Decomposed,
    AllConfident,
    NeedsSearch,
    BudgetExhausted,
    SearchComplete,
    Answered,
    /// The drafted answer failed the citation check; start over once.
    CitationRetry,
}

impl StateEvent {
    pub const ALL: [StateEvent; 12] = [
        StateEvent::Start,
        StateEvent::Irrelevant,
        StateEvent::Relevant,
        StateEvent::Confident,
        StateEvent::NotConfident,
        StateEvent::Decomposed,
        StateEvent::AllConfident,
        StateEvent::NeedsSearch,
        StateEvent::BudgetExhausted,
        StateEvent::SearchComplete,
        StateEvent::Answered,
        StateEvent::CitationRetry,
    ];

    /// Every event has exactly one destination.
    pub fn target(self) -> FsmState {
        TRANSITIONS
            .iter()
            .find(|(_, e, _)| *e == self)
            .map(|(_, _, to)| *to)
            .expect("every event appears in the table")
    }
}

impl fmt::Display for StateEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// The complete edge list. Nothing leaves `Done`.
pub const TRANSITIONS: [(FsmState, StateEvent, FsmState); 12] = {
    use FsmState::*;
    use StateEvent as E;
    [
        (Idle, E::Start, RelevanceCheck),
        (RelevanceCheck, E::Irrelevant, Done),
        (RelevanceCheck, E::Relevant, ConfidenceCheck),
        (ConfidenceCheck, E::Confident, Answer),
        (ConfidenceCheck, E::NotConfident, Decomposition),
        (Decomposition, E::Decomposed, SelfEvaluation),
        (SelfEvaluation, E::AllConfident, Answer),
        (SelfEvaluation, E::NeedsSearch, SearchOnline),
        (SelfEvaluation, E::BudgetExhausted, Answer),
        (SearchOnline, E::SearchComplete, SelfEvaluation),
        (Answer, E::Answered, Done),
        (Answer, E::CitationRetry, RelevanceCheck),
    ]
};

pub fn next_state(from: FsmState, event: StateEvent) -> Option<FsmState> {
    TRANSITIONS
        .iter()
        .find(|(f, e, _)| *f == from && *e == event)
        .map(|(_, _, to)| *to)
}

pub fn is_legal_edge(from: FsmState, to: FsmState) -> bool {
    TRANSITIONS.iter().any(|(f, _, t)| *f == from && *t == to)
}

/// One line of the exported trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub from: FsmState,
    pub to: FsmState,
    pub event: StateEvent,
    pub timestamp: DateTime<Utc>,
    pub iteration_i: u32,
}

/// Newline-delimited JSON, one record per transition.
pub fn export_trace(trace: &[TransitionRecord]) -> String {
    trace
        .iter()
        .map(|r| serde_json::to_string(r).expect("trace records serialize") + "\n")
        .collect()
}

pub fn parse_trace(text: &str) -> Result<Vec<TransitionRecord>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_edges() {
        assert_eq!(
            next_state(FsmState::RelevanceCheck, StateEvent::Irrelevant),
            Some(FsmState::Done)
        );
        assert_eq!(
            next_state(FsmState::ConfidenceCheck, StateEvent::NotConfident),
            Some(FsmState::Decomposition)
        );
        for e in StateEvent::ALL {
            assert_eq!(next_state(FsmState::Done, e), None);
        }
        assert!(!is_legal_edge(FsmState::Decomposition, FsmState::Answer));
    }

    #[test]
    fn events_have_unique_targets() {
        for e in StateEvent::ALL {
            let targets: Vec<_> = TRANSITIONS.iter().filter(|t| t.1 == e).map(|t| t.2).collect();
            assert!(targets.iter().all(|t| *t == targets[0]), "{e}");
            assert_eq!(e.target(), targets[0]);
        }
    }

    #[test]
    fn trace_round_trip() {
        let r = TransitionRecord {
            from: FsmState::Idle,
            to: FsmState::RelevanceCheck,
            event: StateEvent::Start,
            timestamp: Utc::now(),
            iteration_i: 0,
        };
        let text = export_trace(&[r.clone(), r.clone()]);
        assert_eq!(text.lines().count(), 2);
        assert_eq!(parse_trace(&text).unwrap(), vec![r.clone(), r]);
        let v: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        let mut keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(keys, ["event", "from", "iteration_i", "timestamp", "to"]);
    }
}
