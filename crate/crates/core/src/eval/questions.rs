//! Benchmark questions with reference answers and gold sources.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionCategory {
    AnalyticalReasoning,
    NumericalAnalysis,
    MethodologicalCritique,
    ComparativeSynthesis,
    FactualExtraction,
    ApplicationDesign,
}

impl QuestionCategory {
    pub const ALL: [QuestionCategory; 6] = [
        QuestionCategory::AnalyticalReasoning,
        QuestionCategory::NumericalAnalysis,
        QuestionCategory::MethodologicalCritique,
        QuestionCategory::ComparativeSynthesis,
        QuestionCategory::FactualExtraction,
        QuestionCategory::ApplicationDesign,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            QuestionCategory::AnalyticalReasoning => "analytical_reasoning",
            QuestionCategory::NumericalAnalysis => "numerical_analysis",
            QuestionCategory::MethodologicalCritique => "methodological_critique",
            QuestionCategory::ComparativeSynthesis => "comparative_synthesis",
            QuestionCategory::FactualExtraction => "factual_extraction",
            QuestionCategory::ApplicationDesign => "application_design",
        }
    }
}

impl std::str::FromStr for QuestionCategory {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|c| c.as_str() == s.trim())
            .ok_or_else(|| EvalError::Parse(format!("unknown question category {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub category: QuestionCategory,
    pub question: String,
    pub gold_answer: String,
    /// Titles or file names of the documents a good answer cites.
    #[serde(default)]
    pub gold_sources: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QuestionSet {
    pub questions: Vec<Question>,
}

impl QuestionSet {
    /// Rejects empty sets, blank fields and duplicate ids.
    pub fn new(questions: Vec<Question>) -> Result<Self, EvalError> {
        if questions.is_empty() {
            return Err(EvalError::Invalid("question set is empty".into()));
        }
        let mut ids = BTreeSet::new();
        for q in &questions {
            if q.id.trim().is_empty() || q.question.trim().is_empty() {
                return Err(EvalError::Invalid(format!(
                    "question {:?} has a blank id or text",
                    q.id
                )));
            }
            if !ids.insert(q.id.as_str()) {
                return Err(EvalError::Invalid(format!("duplicate question id {:?}", q.id)));
            }
        }
        Ok(Self { questions })
    }

    /// One JSON object per line; blank lines are skipped.
    pub fn from_jsonl(text: &str) -> Result<Self, EvalError> {
        let qs = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| EvalError::Parse(format!("line {}: {e}", i + 1))))
            .collect::<Result<Vec<Question>, _>>()?;
        Self::new(qs)
    }

    pub fn to_jsonl(&self) -> String {
        self.questions
            .iter()
            .map(|q| serde_json::to_string(q).expect("question serializes") + "\n")
            .collect()
    }

    pub fn load(path: &Path) -> Result<Self, EvalError> {
        Self::from_jsonl(&std::fs::read_to_string(path)?)
    }

    pub fn len(&self) -> usize {
        self.questions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.questions.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Question> {
        self.questions.iter().find(|q| q.id == id)
    }

    pub fn by_category(&self) -> BTreeMap<QuestionCategory, usize> {
        let mut m = BTreeMap::new();
        for q in &self.questions {
            *m.entry(q.category).or_insert(0) += 1;
        }
        m
    }

    /// Every category present with exactly `per_category` questions.
    pub fn is_balanced(&self, per_category: usize) -> bool {
        let m = self.by_category();
        QuestionCategory::ALL.iter().all(|c| m.get(c) == Some(&per_category))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_round_trip_and_duplicates() {
        let line = r#"{"id":"q1","category":"numerical_analysis","question":"How fast?","gold_answer":"67 GHz"}"#;
        let set = QuestionSet::from_jsonl(&format!("{line}\n\n")).unwrap();
        assert_eq!(set.questions[0].category, QuestionCategory::NumericalAnalysis);
        assert_eq!(QuestionSet::from_jsonl(&set.to_jsonl()).unwrap(), set);
        assert!(QuestionSet::from_jsonl(&format!("{line}\n{line}")).is_err());
        assert!("numerical_analysis".parse::<QuestionCategory>().is_ok());
    }
}
