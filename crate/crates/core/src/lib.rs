//! Confidence-gated retrieval-augmented research assistant.
//!
//! The crate is organized around the life of a question:
//!
//! - [`fsm`] drives a question through relevance, confidence, decomposition,
//!   bounded self-evaluation/search rounds, and answer composition.
//! - [`gateway`] renders role-specific prompts, talks to model providers and
//!   validates their strict output formats with abort-and-retry.
//! - [`retrieval`] embeds text and serves dynamic-k cosine retrieval over one
//!   or more named vector indexes.
//! - [`citation`] enforces the closed-world citation policy and computes
//!   fidelity metrics.
//! - [`ingest`] crawls tiered sources, snowballs the citation graph, gates
//!   duplicates, extracts metrics and writes to both stores transactionally.
//! - [`store`] holds the relational metrics table and session logs.
//! - [`eval`] builds factorial run manifests and computes calibration,
//!   citation alignment and efficiency aggregates.
//! - [`service`] exposes the HTTP endpoints; [`assistant`] is the facade both
//!   the service and the command line go through.
//!
//! Everything runs offline against the scripted or simulated backends in
//! [`gateway`], and [`fixtures`] generates deterministic synthetic corpora.

pub mod assistant;
pub mod citation;
pub mod clock;
pub mod config;
pub mod eval;
pub mod fixtures;
pub mod fsm;
pub mod gateway;
pub mod ingest;
pub mod retrieval;
pub mod service;
pub mod store;

pub use assistant::{AskRequest, AskResponse, Assistant};
pub use citation::CanonicalId;
pub use config::{RunConfig, ServiceConfig};
pub use fsm::{AnswerRecord, Engine, FsmState, RunOutcome, SessionContext};
pub use retrieval::{Chunk, EvidenceItem, RetrievalConfig};
