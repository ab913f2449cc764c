//! Shared builders for the integration tests.
#![allow(dead_code)]

use std::sync::{Arc, Mutex, OnceLock};

use gated_rag::config::EngineConfig;
use gated_rag::fixtures;
use gated_rag::fsm::{is_legal_edge, Engine, FsmState, SearchError, SearchProvider, TransitionRecord};
use gated_rag::gateway::{
    render_decomposition, tags, CompletionRequest, ConfidenceScore, ConfidenceVerdict, Gateway, Provider, RateTable,
    ScriptedProvider, SimulatedProvider,
};
use gated_rag::retrieval::Retriever;
use gated_rag::Chunk;

/// The fixture corpus, ingested once per test binary.
pub fn corpus_retriever() -> Retriever {
    static R: OnceLock<Retriever> = OnceLock::new();
    R.get_or_init(|| {
        let (pipeline, _) = fixtures::ingest_fixture_corpus().expect("fixture corpus ingests");
        pipeline.stores().retriever.clone()
    })
    .clone()
}

/// Draft that cites the first evidence blocks of the prompt, as a grounded
/// model would.
pub fn grounded_answer(req: &CompletionRequest) -> String {
    SimulatedProvider::default()
        .complete(req)
        .expect("simulated reply")
        .text
}

pub fn verdict(score: ConfidenceScore) -> String {
    ConfidenceVerdict {
        confidence_score: score,
        confident: score >= ConfidenceScore::THREE_QUARTERS,
        reasoning: "scripted".into(),
    }
    .to_reply()
}

pub fn subtopics(n: usize) -> String {
    let items: Vec<String> = (0..n).map(|i| format!("facet {i} of the device")).collect();
    render_decomposition(&items)
}

/// A scripted provider that answers the housekeeping tags (drafts, titles)
/// and grounds every answer in the evidence it is shown.
pub fn base_script() -> ScriptedProvider {
    ScriptedProvider::new()
        .always(tags::FAST_DRAFT, "provisional")
        .always(tags::TITLE, "Scripted Research Session Notes")
        .respond(tags::ANSWER, grounded_answer)
}

pub fn engine_with(provider: Arc<ScriptedProvider>, config: EngineConfig) -> Engine {
    let gateway = Arc::new(Gateway::new(provider, RateTable::builtin()));
    Engine::new(gateway, corpus_retriever(), config).with_clock(fixtures::fixture_clock())
}

/// Every step follows the table, starts in `Idle`, ends in `Done`, and
/// consecutive records chain.
pub fn trace_is_legal(trace: &[TransitionRecord]) -> bool {
    let chained = trace.windows(2).all(|w| w[0].to == w[1].from);
    let edges = trace.iter().all(|t| is_legal_edge(t.from, t.to));
    chained
        && edges
        && trace.first().is_some_and(|t| t.from == FsmState::Idle)
        && trace.last().is_some_and(|t| t.to == FsmState::Done)
}

/// Records every sub-question and answers with nothing.
#[derive(Default)]
pub struct RecordingSearch {
    pub queries: Mutex<Vec<String>>,
}

impl SearchProvider for RecordingSearch {
    fn name(&self) -> &str {
        "recording"
    }

    fn search(&self, query: &str, _k: usize) -> Result<Vec<Chunk>, SearchError> {
        self.queries.lock().unwrap().push(query.to_string());
        Ok(Vec::new())
    }
}

/// One run of a randomly generated script: relevance, confidence, 2–3
/// subtopics, per-call self-evaluation scores, occasional malformed replies
/// and an occasional fabricated first draft.
pub struct RandomRun {
    pub ctx: gated_rag::SessionContext,
    pub outcome: gated_rag::RunOutcome,
    pub provider: Arc<ScriptedProvider>,
}

pub fn random_run(seed: u64) -> Result<RandomRun, gated_rag::fsm::FsmError> {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pick = |rng: &mut ChaCha8Rng| ConfidenceScore::ALL[rng.random_range(0..5)];
    let relevant = rng.random_bool(0.85);
    let initial = pick(&mut rng);
    let n_topics = rng.random_range(2..=3);

    let mut script = base_script()
        .always(tags::RELEVANCE, if relevant { "Relevant: Yes" } else { "Relevant: No" })
        .always(tags::CONFIDENCE, verdict(initial))
        .always(tags::DECOMPOSITION, subtopics(n_topics));
    // A malformed reply costs one attempt of the schema budget.
    if rng.random_bool(0.1) {
        script = script.push(tags::RELEVANCE, "Relevant? maybe");
    }
    if rng.random_bool(0.1) {
        script = script.push(tags::CONFIDENCE, "{\"confidence_score\": 0.6}");
    }
    if rng.random_bool(0.2) {
        script = script.push(
            tags::ANSWER,
            "- Unsupported claim. [[cite: doi:10.9999/fabricated.1 # 0]]",
        );
    }
    let eval_rng = Mutex::new(ChaCha8Rng::seed_from_u64(seed ^ 0x5e1f));
    let script = script.respond(tags::SELF_EVALUATION, move |_| {
        let s = ConfidenceScore::ALL[eval_rng.lock().unwrap().random_range(0..5)];
        s.to_string()
    });

    let provider = Arc::new(script);
    let engine = engine_with(provider.clone(), EngineConfig::default());
    let mut ctx = engine.start_session(
        "How does the lithium niobate modulator bandwidth compare at 200G?",
        false,
    )?;
    let outcome = engine.run_question(&mut ctx)?;
    Ok(RandomRun { ctx, outcome, provider })
}
