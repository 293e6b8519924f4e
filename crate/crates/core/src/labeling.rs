//! Regression targets (ROUGE-SU4 F1 against the ideal answers) and top-k
//! classification labels for candidate sentences.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::corpus::{build_candidates, CandidateSentence, Question};
use crate::error::{Error, Result};
use crate::rouge::rouge_su4_multi;

/// Number of candidates labelled positive per question.
pub const DEFAULT_POSITIVES: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledCandidate {
    pub candidate: CandidateSentence,
    pub target: f64,
    pub label: u8,
}

pub fn label_regression(q: &Question, pool: &[CandidateSentence]) -> Result<Vec<f64>> {
    if pool.is_empty() {
        return Ok(Vec::new());
    }
    if q.ideal_answers.is_empty() {
        return Err(Error::Validation(format!(
            "question {} has no ideal answers",
            q.id
        )));
    }
    let references = q.reference_tokens();
    pool.iter()
        .map(|c| rouge_su4_multi(&c.tokens, &references).map(|s| s.f1))
        .collect()
}

/// Indices of the `k` largest values; equal values prefer the lower index.
pub(crate) fn top_k_indices(values: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order.truncate(k);
    order
}

pub fn label_classification(targets: &[f64], k: usize) -> Vec<u8> {
    assert!(k >= 1, "k must be at least 1");
    let mut labels = vec![0u8; targets.len()];
    for i in top_k_indices(targets, k) {
        labels[i] = 1;
    }
    labels
}

/// Label a question's pool in one pass.
pub fn label_pool(q: &Question, pool: &[CandidateSentence], k: usize) -> Result<Vec<LabeledCandidate>> {
    let targets = label_regression(q, pool)?;
    let labels = label_classification(&targets, k);
    Ok(pool
        .iter()
        .cloned()
        .zip(targets.into_iter().zip(labels))
        .map(|(candidate, (target, label))| LabeledCandidate {
            candidate,
            target,
            label,
        })
        .collect())
}

/// A question with its candidate pool and aligned targets and labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledQuestion {
    pub question: Question,
    pub pool: Vec<CandidateSentence>,
    pub targets: Vec<f64>,
    pub labels: Vec<u8>,
}

fn usable(q: &Question, pool: &[CandidateSentence]) -> bool {
    if pool.is_empty() {
        log::warn!("question {}: no candidate sentences, skipped", q.id);
        return false;
    }
    if q.ideal_answers.iter().all(|a| a.trim().is_empty()) {
        log::warn!("question {}: no ideal answer, skipped", q.id);
        return false;
    }
    true
}

/// Label every usable question; questions without candidates or ideal
/// answers are skipped with a warning.
pub fn label_corpus(questions: &[Question], cap: usize, k: usize) -> Result<Vec<LabeledQuestion>> {
    let mut out = Vec::with_capacity(questions.len());
    for q in questions {
        let pool = build_candidates(q, cap);
        if !usable(q, &pool) {
            continue;
        }
        let record = LabelRecord::compute(q, &pool, k)?;
        out.push(LabeledQuestion {
            question: q.clone(),
            pool,
            targets: record.targets,
            labels: record.labels,
        });
    }
    Ok(out)
}

/// Same as [`label_corpus`], reading targets and labels from a cache.
pub fn label_corpus_cached(questions: &[Question], cache: &LabelCache, cap: usize) -> Result<Vec<LabeledQuestion>> {
    let mut out = Vec::with_capacity(questions.len());
    for q in questions {
        let pool = build_candidates(q, cap);
        if !usable(q, &pool) {
            continue;
        }
        let record = cache.get(&q.id).ok_or_else(|| {
            Error::Validation(format!("label cache has no entry for question {}", q.id))
        })?;
        if record.targets.len() != pool.len() {
            return Err(Error::Validation(format!(
                "label cache entry {} has {} targets for {} candidates",
                q.id,
                record.targets.len(),
                pool.len()
            )));
        }
        out.push(LabeledQuestion {
            question: q.clone(),
            pool,
            targets: record.targets.clone(),
            labels: record.labels.clone(),
        });
    }
    Ok(out)
}

/// One line of the label cache.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub question_id: String,
    pub targets: Vec<f64>,
    pub labels: Vec<u8>,
}

impl LabelRecord {
    pub fn compute(q: &Question, pool: &[CandidateSentence], k: usize) -> Result<Self> {
        let targets = label_regression(q, pool)?;
        let labels = label_classification(&targets, k);
        Ok(LabelRecord {
            question_id: q.id.clone(),
            targets,
            labels,
        })
    }
}

/// Label cache keyed by question id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabelCache {
    records: BTreeMap<String, LabelRecord>,
}

impl LabelCache {
    pub fn insert(&mut self, record: LabelRecord) {
        self.records.insert(record.question_id.clone(), record);
    }

    pub fn get(&self, question_id: &str) -> Option<&LabelRecord> {
        self.records.get(question_id)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        for record in self.records.values() {
            serde_json::to_writer(&mut out, record)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(input: R) -> Result<Self> {
        let mut cache = LabelCache::default();
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: LabelRecord = serde_json::from_str(&line)
                .map_err(|e| Error::parse(format!("label cache line {}", lineno + 1), e.to_string()))?;
            if record.targets.len() != record.labels.len() {
                return Err(Error::Validation(format!(
                    "label cache entry {} has {} targets but {} labels",
                    record.question_id,
                    record.targets.len(),
                    record.labels.len()
                )));
            }
            cache.insert(record);
        }
        Ok(cache)
    }
}
