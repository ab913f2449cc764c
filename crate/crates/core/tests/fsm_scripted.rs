//! The question engine under scripted backends.

mod common;

use std::sync::Arc;

use common::*;
use gated_rag::config::EngineConfig;
use gated_rag::fixtures;
use gated_rag::fsm::{FsmError, FsmState, StateEvent, CITATION_ABSTAIN_TEXT, REFUSAL_TEXT};
use gated_rag::gateway::{tags, ConfidenceScore};
use gated_rag::RunOutcome;

const Q: &str = "What bandwidth do lithium niobate modulators reach for 200G links?";

fn events(ctx: &gated_rag::SessionContext) -> Vec<StateEvent> {
    ctx.trace.iter().map(|t| t.event).collect()
}

#[test]
fn irrelevant_question_is_refused_without_citations() {
    let p = Arc::new(base_script().push(tags::RELEVANCE, "Relevant: No"));
    let engine = engine_with(p.clone(), EngineConfig::default());
    let mut ctx = engine.start_session("Best pizza dough hydration?", false).unwrap();
    let out = engine.run_question(&mut ctx).unwrap();
    match out {
        RunOutcome::Irrelevant { refusal, .. } => assert_eq!(refusal, REFUSAL_TEXT),
        other => panic!("expected a refusal, got {other:?}"),
    }
    assert_eq!(events(&ctx), [StateEvent::Start, StateEvent::Irrelevant]);
    assert_eq!(p.calls_for(tags::CONFIDENCE), 0);
    assert!(trace_is_legal(&ctx.trace));
}

#[test]
fn confident_question_skips_decomposition() {
    let p = Arc::new(
        base_script()
            .push(tags::RELEVANCE, "Relevant: Yes")
            .push(tags::CONFIDENCE, verdict(ConfidenceScore::ONE)),
    );
    let engine = engine_with(p.clone(), EngineConfig::default());
    let mut ctx = engine.start_session(Q, false).unwrap();
    let a = engine.run_question(&mut ctx).unwrap().answer().cloned().unwrap();
    assert_eq!(
        events(&ctx),
        [
            StateEvent::Start,
            StateEvent::Relevant,
            StateEvent::Confident,
            StateEvent::Answered
        ]
    );
    assert_eq!(a.iterations, 0);
    assert!(!a.abstained && a.disclaimer.is_none());
    assert!(!a.citations.is_empty());
    assert_eq!(p.calls_for(tags::DECOMPOSITION), 0);
}

#[test]
fn pinned_half_spends_the_whole_budget_and_warns() {
    let p = Arc::new(
        base_script()
            .always(tags::RELEVANCE, "Relevant: Yes")
            .always(tags::CONFIDENCE, verdict(ConfidenceScore::HALF))
            .always(tags::DECOMPOSITION, subtopics(2))
            .always(tags::SELF_EVALUATION, "0.5"),
    );
    let engine = engine_with(p.clone(), EngineConfig::default());
    let mut ctx = engine.start_session(Q, false).unwrap();
    let a = engine.run_question(&mut ctx).unwrap().answer().cloned().unwrap();
    assert_eq!(a.iterations, 5);
    let disclaimer = a.disclaimer.expect("budget exhaustion is disclosed");
    assert!(disclaimer.contains("facet 0"));
    // 0.5 meets the gate, so the answer is still given.
    assert!(!a.abstained);
    assert_eq!(a.final_confidence, ConfidenceScore::HALF);
    // Initial evaluation plus one per round.
    assert_eq!(p.calls_for(tags::SELF_EVALUATION), 2 * 6);
    assert_eq!(
        events(&ctx)
            .iter()
            .filter(|e| **e == StateEvent::SearchComplete)
            .count(),
        5
    );
    assert_eq!(
        events(&ctx)
            .iter()
            .filter(|e| **e == StateEvent::BudgetExhausted)
            .count(),
        1
    );
    assert!(trace_is_legal(&ctx.trace));
}

#[test]
fn three_low_subtopics_issue_three_sub_questions() {
    let search = Arc::new(RecordingSearch::default());
    let p = Arc::new(
        base_script()
            .always(tags::RELEVANCE, "Relevant: Yes")
            .always(tags::CONFIDENCE, verdict(ConfidenceScore::QUARTER))
            .always(tags::DECOMPOSITION, subtopics(3))
            .push_many(tags::SELF_EVALUATION, ["0.25", "0.0", "0.25"])
            .always(tags::SELF_EVALUATION, "1.0"),
    );
    let config = EngineConfig {
        allow_online_search: true,
        ..Default::default()
    };
    let engine = engine_with(p, config).with_search(search.clone());
    let a = engine.ask(Q, false).unwrap().answer().cloned().unwrap();
    let queries = search.queries.lock().unwrap().clone();
    assert_eq!(queries.len(), 3);
    for (i, q) in queries.iter().enumerate() {
        assert!(q.starts_with(&format!("facet {i} of the device")), "{q}");
        assert!(q.ends_with(Q));
    }
    assert_eq!(a.iterations, 1);
    assert!(a.disclaimer.is_none());
}

#[test]
fn medium_subtopics_are_searched_and_high_ones_are_not() {
    let search = Arc::new(RecordingSearch::default());
    let p = Arc::new(
        base_script()
            .always(tags::RELEVANCE, "Relevant: Yes")
            .always(tags::CONFIDENCE, verdict(ConfidenceScore::HALF))
            .always(tags::DECOMPOSITION, subtopics(3))
            .push_many(tags::SELF_EVALUATION, ["0.75", "0.5", "1.0"])
            .always(tags::SELF_EVALUATION, "0.75"),
    );
    let config = EngineConfig {
        allow_online_search: true,
        ..Default::default()
    };
    let engine = engine_with(p, config).with_search(search.clone());
    engine.ask(Q, false).unwrap();
    let queries = search.queries.lock().unwrap().clone();
    assert_eq!(queries.len(), 1);
    assert!(queries[0].starts_with("facet 1"));
}

#[test]
fn fabricated_drafts_retry_once_then_abstain() {
    let fake = "- Unsupported claim. [[cite: doi:10.9999/fabricated.1 # 0]]";
    let p = Arc::new(
        base_script()
            .always(tags::RELEVANCE, "Relevant: Yes")
            .always(tags::CONFIDENCE, verdict(ConfidenceScore::ONE))
            .push_many(tags::ANSWER, [fake, fake]),
    );
    let engine = engine_with(p.clone(), EngineConfig::default());
    let mut ctx = engine.start_session(Q, false).unwrap();
    let a = engine.run_question(&mut ctx).unwrap().answer().cloned().unwrap();
    assert_eq!(a.answer_text, CITATION_ABSTAIN_TEXT);
    assert!(a.abstained && a.citations.is_empty());
    assert_eq!(a.final_confidence, ConfidenceScore::ZERO);
    assert_eq!(
        events(&ctx).iter().filter(|e| **e == StateEvent::CitationRetry).count(),
        1
    );
    assert_eq!(p.calls_for(tags::ANSWER), 2);
    assert_eq!(p.calls_for(tags::RELEVANCE), 2);
    assert!(trace_is_legal(&ctx.trace));
}

#[test]
fn one_fabricated_draft_recovers_on_retry() {
    let p = Arc::new(
        base_script()
            .always(tags::RELEVANCE, "Relevant: Yes")
            .always(tags::CONFIDENCE, verdict(ConfidenceScore::ONE))
            .push(
                tags::ANSWER,
                "- Unsupported claim. [[cite: doi:10.9999/fabricated.1 # 0]]",
            ),
    );
    let engine = engine_with(p, EngineConfig::default());
    let a = engine.ask(Q, false).unwrap().answer().cloned().unwrap();
    assert!(!a.abstained);
    assert!(!a.citations.is_empty());
}

#[test]
fn exhausted_schema_budget_aborts_with_the_trace() {
    let p = Arc::new(base_script().always(tags::RELEVANCE, "Probably relevant"));
    let engine = engine_with(p.clone(), EngineConfig::default());
    match engine.ask(Q, false) {
        Err(FsmError::Aborted { state, trace, .. }) => {
            assert_eq!(state, FsmState::RelevanceCheck);
            assert_eq!(trace.len(), 1);
        }
        other => panic!("expected an abort, got {other:?}"),
    }
    assert_eq!(p.calls_for(tags::RELEVANCE), 3);
}

#[test]
fn empty_question_is_rejected() {
    let engine = engine_with(Arc::new(base_script()), EngineConfig::default());
    assert!(matches!(engine.ask("   ", false), Err(FsmError::EmptyQuestion)));
}

#[test]
fn randomized_runs_stay_on_legal_edges() {
    for seed in 0..300 {
        let run = random_run(seed).unwrap_or_else(|e| panic!("seed {seed}: {e}"));
        assert!(trace_is_legal(&run.ctx.trace), "seed {seed}: {:?}", run.ctx.trace);
        assert!(run.ctx.iteration_i <= 5, "seed {seed}");
        let retries = run
            .ctx
            .trace
            .iter()
            .filter(|t| t.event == StateEvent::CitationRetry)
            .count();
        assert!(retries <= 1, "seed {seed}");
        if let Some(a) = run.outcome.answer() {
            assert_eq!(
                a.abstained,
                a.final_confidence.value() < 0.5 || a.answer_text == CITATION_ABSTAIN_TEXT
            );
        }
    }
}

#[test]
fn gate_splits_the_scripted_distribution() {
    let script = fixtures::gate_script();
    let (mut answered, mut abstained) = (0, 0);
    for score in &script {
        let p = Arc::new(
            base_script()
                .always(tags::RELEVANCE, "Relevant: Yes")
                .always(tags::CONFIDENCE, verdict(*score))
                .always(tags::DECOMPOSITION, subtopics(2))
                .always(tags::SELF_EVALUATION, score.to_string()),
        );
        let a = engine_with(p, EngineConfig::default())
            .ask(Q, false)
            .unwrap()
            .answer()
            .cloned()
            .unwrap();
        assert_eq!(a.final_confidence, *score);
        if a.abstained {
            abstained += 1;
        } else {
            answered += 1;
        }
    }
    assert_eq!((answered, abstained), (43, 17));
}
