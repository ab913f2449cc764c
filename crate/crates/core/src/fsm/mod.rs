//! Question-processing state machine.
//!
//! A run moves through relevance and confidence gates, optionally splits the
//! question into subtopics, and refines evidence for weak subtopics for a
//! bounded number of rounds before composing a cited answer.

mod controller;
mod search;
mod session;
mod state;

pub use controller::{
    advance, render_evidence, AnswerRecord, Engine, FsmError, RunOutcome, ABSTAIN_TEXT, CITATION_ABSTAIN_TEXT,
    REFUSAL_TEXT,
};
pub use search::{HttpSearch, LocalIndexSearch, SearchError, SearchProvider, SEARCH_URL_ENV};
pub use session::{merge_evidence, SessionContext, Subtopic};
pub use state::{
    export_trace, is_legal_edge, next_state, parse_trace, FsmState, StateEvent, TransitionRecord, TRANSITIONS,
};
