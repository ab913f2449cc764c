//! Built-in prompt templates, one per state tag.

use std::collections::BTreeMap;

use super::{PromptTemplate, Role};

pub mod tags {
    pub const RELEVANCE: &str = "relevance";
    pub const CONFIDENCE: &str = "confidence";
    pub const FAST_DRAFT: &str = "fast_draft";
    pub const DECOMPOSITION: &str = "decomposition";
    pub const SELF_EVALUATION: &str = "self_evaluation";
    pub const ANSWER: &str = "answer";
    pub const TITLE: &str = "title";
    pub const JUDGE: &str = "judge";
    pub const EXTRACTION: &str = "extraction";
}

const RELEVANCE_SYSTEM: &str = "You are the intake filter of a research assistant whose knowledge base covers \
integrated photonics and optical communication devices. You never answer questions; you only classify them.";

const RELEVANCE_BODY: &str = "Decide whether the question below falls inside the knowledge base's research domain.

Closest indexed material:
{summaries_text}

That material has a mean similarity score of {sim_score:.2f} to the question. Treat it as a hint, not a verdict.

Question: {question}

Reply with exactly one line and nothing else, either
Relevant: Yes
or
Relevant: No";

const CONFIDENCE_SYSTEM: &str = "You assess answerability for a research assistant. Do not answer the question itself.";

const CONFIDENCE_BODY: &str =
    "Judge whether the question can be answered well from your own knowledge together with the retrieved context.

Mean similarity of the retrieved context: {sim_score:.2f}

Context:
{base_context}

Question: {question}

Return a single JSON object with exactly these three keys and no surrounding text:
- \"confidence_score\": one of 0.0, 0.25, 0.5, 0.75, 1.0
- \"confident\": true when confidence_score is 0.75 or higher, otherwise false
- \"reasoning\": one sentence of at most 25 words, without line breaks";

const FAST_DRAFT_BODY: &str = "In two sentences, give a provisional answer to the question below. \
It is kept for reference only.

Question: {question}";

const KNOWLEDGE_SYSTEM: &str = "You are the knowledge stage of a research assistant for integrated photonics. \
Be precise and never invent facts, numbers or sources.";

const DECOMPOSITION_BODY: &str = "Split the research question into two or three narrowly scoped subtopics that an \
answer has to establish. Use concrete angles such as the underlying device physics, the effect on the overall \
system, or practical implementation hurdles. Do not add generic headings.

Question: \"{question}\"

Output a Python list literal of 2 or 3 strings and nothing else, for example:
['first subtopic', 'second subtopic']";

const SELF_EVAL_SYSTEM: &str = "You rate your own readiness to cover one subtopic of a research question.";

const SELF_EVAL_BODY: &str = "Subtopic: \"{topic}\"

Using only the context below, how confident are you that you can cover this subtopic accurately? \
The context has a mean similarity of {mean_sim:.2f} to the subtopic.

Reply with a single number from [0.0, 0.25, 0.5, 0.75, 1.0] and nothing else:
1.0 full command of the subtopic; 0.75 solid with small gaps; 0.5 partial, needs checking; \
0.25 fragmentary; 0.0 nothing usable. Any missing detail means a score below 0.5.

Context:
{base_context}";

const ANSWER_BODY: &str = "Answer the research question from the evidence passages below. Each passage starts \
with its citation marker.

Internal notes, do not repeat them: confidence {confidence:.2f}; mean context similarity {mean_sim:.2f}.
{scaffold}

Rules:
- End every factual sentence with the marker of each passage that supports it, copied exactly.
- Only use markers that appear in the evidence list; never construct new ones.
- Organise the answer as bold key points, each followed by a short explanation.

Question: {question}

Evidence:
{base_context}";

const TITLE_BODY: &str = "Write a title of three to six words for a conversation that starts like this. \
Reply with the title only.

{question}";

const JUDGE_SYSTEM: &str = "You grade answers against a reference.";

const JUDGE_BODY: &str = "Question: {question}

Reference answer: {gold}

Candidate answer: {answer}

Is the candidate answer correct and consistent with the reference? Reply YES or NO.";

const EXTRACTION_BODY: &str = "Read the excerpt from a device paper and fill in the metrics listed in the template. \
Return one JSON object that uses only the template's keys, with plain numbers in the stated units (strings for text \
fields). Leave out anything the excerpt does not state or clearly imply.

Template:
{schema}

Excerpt:
{excerpt}";

pub fn builtin_templates() -> BTreeMap<String, PromptTemplate> {
    let list = [
        PromptTemplate::new(Role::Relevance, tags::RELEVANCE, RELEVANCE_SYSTEM, RELEVANCE_BODY),
        PromptTemplate::new(Role::Confidence, tags::CONFIDENCE, CONFIDENCE_SYSTEM, CONFIDENCE_BODY),
        PromptTemplate::new(Role::FastTitle, tags::FAST_DRAFT, "", FAST_DRAFT_BODY),
        PromptTemplate::new(
            Role::Knowledge,
            tags::DECOMPOSITION,
            KNOWLEDGE_SYSTEM,
            DECOMPOSITION_BODY,
        ),
        PromptTemplate::new(
            Role::Confidence,
            tags::SELF_EVALUATION,
            SELF_EVAL_SYSTEM,
            SELF_EVAL_BODY,
        ),
        PromptTemplate::new(Role::Knowledge, tags::ANSWER, KNOWLEDGE_SYSTEM, ANSWER_BODY),
        PromptTemplate::new(Role::FastTitle, tags::TITLE, "", TITLE_BODY),
        PromptTemplate::new(Role::Judge, tags::JUDGE, JUDGE_SYSTEM, JUDGE_BODY),
        PromptTemplate::new(Role::Knowledge, tags::EXTRACTION, KNOWLEDGE_SYSTEM, EXTRACTION_BODY),
    ];
    list.into_iter().map(|t| (t.state_tag.clone(), t)).collect()
}

/// Extra instruction appended to the answer prompt per reasoning level.
pub(crate) fn scaffold(level: super::ReasoningLevel) -> &'static str {
    match level {
        super::ReasoningLevel::Low => "Keep it brief: state the key facts directly.",
        super::ReasoningLevel::Medium => "Explain the main mechanisms behind each key fact.",
        super::ReasoningLevel::High => {
            "Reason step by step: state assumptions and boundary conditions, compare alternatives, \
             and note where the evidence is thin."
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_state_has_one_role() {
        let t = builtin_templates();
        assert_eq!(t.len(), 9);
        assert_eq!(t[tags::RELEVANCE].role, Role::Relevance);
        assert_eq!(t[tags::SELF_EVALUATION].role, Role::Confidence);
        assert_eq!(t[tags::ANSWER].role, Role::Knowledge);
    }

    #[test]
    fn placeholders_are_declared() {
        let t = builtin_templates();
        assert_eq!(
            t[tags::RELEVANCE].placeholders(),
            vec!["summaries_text", "sim_score", "question"]
        );
        assert_eq!(
            t[tags::ANSWER].placeholders(),
            vec!["confidence", "mean_sim", "scaffold", "question", "base_context"]
        );
        assert_eq!(
            t[tags::SELF_EVALUATION].placeholders(),
            vec!["topic", "mean_sim", "base_context"]
        );
    }
}
