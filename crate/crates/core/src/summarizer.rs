//! Extractive answers: the top-n candidates by score, with n fixed per
//! question type, plus the lead (firstn) baseline.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::corpus::{CandidateSentence, Question, QuestionType};
use crate::error::{Error, Result};
use crate::labeling::top_k_indices;
use crate::rouge::rouge_su4_multi;

/// Number of sentences extracted for each question type.
pub fn n_for_type(qtype: QuestionType) -> usize {
    match qtype {
        QuestionType::Summary => 6,
        QuestionType::Factoid => 2,
        QuestionType::Yesno => 2,
        QuestionType::List => 3,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryResult {
    pub question_id: String,
    /// 1-based candidate positions, ascending.
    pub selected: Vec<usize>,
    pub text: String,
    pub n_used: usize,
}

impl SummaryResult {
    fn from_indices(question_id: &str, pool: &[CandidateSentence], mut indices: Vec<usize>, n: usize) -> Self {
        indices.sort_unstable();
        SummaryResult {
            question_id: question_id.to_string(),
            selected: indices.iter().map(|&i| pool[i].position).collect(),
            text: indices
                .iter()
                .map(|&i| pool[i].text.as_str())
                .collect::<Vec<_>>()
                .join(" "),
            n_used: n,
        }
    }

    /// Tokens of the selected sentences in order.
    pub fn tokens<'a>(&self, pool: &'a [CandidateSentence]) -> Vec<&'a str> {
        self.selected
            .iter()
            .flat_map(|&p| pool[p - 1].tokens.iter().map(String::as_str))
            .collect()
    }
}

/// The `n` highest-scoring candidates (equal scores prefer the smaller
/// position), reported in position order.
pub fn select_top_n(question_id: &str, scores: &[f64], pool: &[CandidateSentence], n: usize) -> Result<SummaryResult> {
    if scores.len() != pool.len() {
        return Err(Error::shape("select_top_n", &[pool.len()], &[scores.len()]));
    }
    if let Some(bad) = scores.iter().position(|s| s.is_nan()) {
        return Err(Error::Numerical(format!(
            "question {question_id}: score of candidate {} is NaN",
            bad + 1
        )));
    }
    Ok(SummaryResult::from_indices(question_id, pool, top_k_indices(scores, n), n))
}

pub fn firstn(question: &Question, pool: &[CandidateSentence]) -> SummaryResult {
    let n = n_for_type(question.qtype);
    SummaryResult::from_indices(&question.id, pool, (0..n.min(pool.len())).collect(), n)
}

/// ROUGE-SU4 F1 of a summary against the question's ideal answers.
pub fn score_summary(question: &Question, pool: &[CandidateSentence], summary: &SummaryResult) -> Result<f64> {
    Ok(rouge_su4_multi(&summary.tokens(pool), &question.reference_tokens())?.f1)
}

#[derive(Serialize)]
struct AnswerEntry<'a> {
    id: &'a str,
    ideal_answer: &'a str,
}

#[derive(Serialize)]
struct AnswerFile<'a> {
    questions: Vec<AnswerEntry<'a>>,
}

/// BioASQ-style answer file: `{"questions": [{"id", "ideal_answer"}]}`.
pub fn write_answers<W: Write>(summaries: &[SummaryResult], out: W) -> Result<()> {
    let file = AnswerFile {
        questions: summaries
            .iter()
            .map(|s| AnswerEntry {
                id: &s.question_id,
                ideal_answer: &s.text,
            })
            .collect(),
    };
    serde_json::to_writer_pretty(out, &file)?;
    Ok(())
}

/// One audit line per question: selected positions and every candidate score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub question_id: String,
    pub selected: Vec<usize>,
    pub scores: Vec<f64>,
}

pub fn write_audit<W: Write>(records: &[AuditRecord], mut out: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
