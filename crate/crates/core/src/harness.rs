//! Evaluation protocols: seeded k-fold cross-validation and seeded 5:1
//! holdout splits, with per-fold ROUGE-SU4 F1 summarised as mean ± stdev.

use std::collections::HashSet;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embeddings::EmbeddingSource;
use crate::error::{Error, Result};
use crate::labeling::LabeledQuestion;
use crate::rl::{rl_train, summarize_with_policy, PpoConfig};
use crate::scorer::{train, ScorerConfig};
use crate::summarizer::{firstn, n_for_type, score_summary, select_top_n, SummaryResult};

fn shuffled_ids(ids: &[String], seed: u64) -> Vec<String> {
    let mut sorted = ids.to_vec();
    sorted.sort();
    sorted.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    sorted
}

/// `k` disjoint folds of question ids. Ids are sorted before the seeded
/// shuffle, so input order does not matter; the first `N mod k` folds hold
/// one extra id.
pub fn kfold_split(ids: &[String], k: usize, seed: u64) -> Result<Vec<Vec<String>>> {
    if k < 2 {
        return Err(Error::Validation(format!("k must be at least 2, got {k}")));
    }
    if ids.len() < k {
        return Err(Error::Validation(format!(
            "{} questions cannot fill {k} folds",
            ids.len()
        )));
    }
    let order = shuffled_ids(ids, seed);
    let (base, extra) = (ids.len() / k, ids.len() % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        folds.push(order[start..start + size].to_vec());
        start += size;
    }
    Ok(folds)
}

/// Train/test sizes of a 5:1 split: the test side gets `⌈N/6⌉`.
pub fn split_sizes(n: usize) -> (usize, usize) {
    let test = n.div_ceil(6);
    (n - test, test)
}

/// Seeded 5:1 split of question ids into (train, test).
pub fn split_ratio(ids: &[String], seed: u64) -> Result<(Vec<String>, Vec<String>)> {
    if ids.len() < 6 {
        return Err(Error::Validation(format!(
            "a 5:1 split needs at least 6 questions, got {}",
            ids.len()
        )));
    }
    let mut order = shuffled_ids(ids, seed);
    let (train, _) = split_sizes(ids.len());
    let test = order.split_off(train);
    Ok((order, test))
}

/// How a fold's held-out questions get their summaries.
pub enum Method<'a> {
    Firstn,
    /// Uniformly random scores, then top-n.
    Random,
    Scorer {
        config: ScorerConfig,
        source: &'a dyn EmbeddingSource,
    },
    Policy {
        config: PpoConfig,
        source: &'a dyn EmbeddingSource,
    },
}

impl Method<'_> {
    pub fn name(&self) -> String {
        match self {
            Method::Firstn => "firstn".into(),
            Method::Random => "random".into(),
            Method::Scorer { config, .. } => config.variant.to_string(),
            Method::Policy { .. } => "ppo".into(),
        }
    }
}

/// Summaries of one evaluation set and their ROUGE-SU4 F1, in input order.
#[derive(Debug, Clone)]
pub struct MethodRun {
    pub summaries: Vec<SummaryResult>,
    pub scores: Vec<f64>,
}

impl MethodRun {
    pub fn mean(&self) -> f64 {
        self.scores.iter().sum::<f64>() / self.scores.len() as f64
    }
}

/// Fit `method` on `train` (if it learns) and summarise `test`.
/// `seed` drives the random baseline and the learners.
pub fn run_method(method: &Method<'_>, train_set: &[LabeledQuestion], test: &[LabeledQuestion], seed: u64) -> Result<MethodRun> {
    let mut summaries = Vec::with_capacity(test.len());
    match method {
        Method::Firstn => {
            for lq in test {
                summaries.push(firstn(&lq.question, &lq.pool));
            }
        }
        Method::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for lq in test {
                let scores: Vec<f64> = (0..lq.pool.len()).map(|_| rng.gen()).collect();
                summaries.push(select_top_n(&lq.question.id, &scores, &lq.pool, n_for_type(lq.question.qtype))?);
            }
        }
        Method::Scorer { config, source } => {
            let config = ScorerConfig { seed, ..config.clone() };
            let (model, _) = train(train_set, *source, &config)?;
            for lq in test {
                let scores = model.predict_scores(&lq.question, &lq.pool, *source)?;
                summaries.push(select_top_n(&lq.question.id, &scores, &lq.pool, n_for_type(lq.question.qtype))?);
            }
        }
        Method::Policy { config, source } => {
            let config = PpoConfig { seed, ..config.clone() };
            let train_q: Vec<_> = train_set.iter().map(|lq| lq.question.clone()).collect();
            let test_q: Vec<_> = test.iter().map(|lq| lq.question.clone()).collect();
            let outcome = rl_train(&train_q, &test_q, *source, &config)?;
            let runs = summarize_with_policy(&outcome.best, &test_q, *source, &config)?;
            summaries.extend(runs.into_iter().map(|(s, _)| s));
        }
    }
    if summaries.len() != test.len() {
        return Err(Error::Validation(format!(
            "{} of {} evaluation questions were summarised",
            summaries.len(),
            test.len()
        )));
    }
    let scores = test
        .iter()
        .zip(&summaries)
        .map(|(lq, s)| score_summary(&lq.question, &lq.pool, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(MethodRun { summaries, scores })
}

/// Per-fold (or per-run) scores with their mean and sample stdev.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub entries: Vec<f64>,
    pub mean: f64,
    pub stdev: f64,
}

impl EvalReport {
    pub fn from_entries(method: impl Into<String>, entries: Vec<f64>) -> Self {
        let n = entries.len() as f64;
        let mean = if entries.is_empty() { 0.0 } else { entries.iter().sum::<f64>() / n };
        let stdev = if entries.len() < 2 {
            0.0
        } else {
            (entries.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        EvalReport {
            method: method.into(),
            entries,
            mean,
            stdev,
        }
    }
}

fn select(corpus: &[LabeledQuestion], ids: &HashSet<&str>, inside: bool) -> Vec<LabeledQuestion> {
    corpus
        .iter()
        .filter(|lq| ids.contains(lq.question.id.as_str()) == inside)
        .cloned()
        .collect()
}

fn check_unique_ids(corpus: &[LabeledQuestion]) -> Result<Vec<String>> {
    let ids: Vec<String> = corpus.iter().map(|lq| lq.question.id.clone()).collect();
    let mut seen = HashSet::new();
    for id in &ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::Validation(format!("duplicate question id {id}")));
        }
    }
    Ok(ids)
}

/// Train on k−1 folds, score the held-out fold; one entry per fold.
pub fn cross_validate(method: &Method<'_>, corpus: &[LabeledQuestion], k: usize, seed: u64) -> Result<EvalReport> {
    let ids = check_unique_ids(corpus)?;
    let folds = kfold_split(&ids, k, seed)?;
    let mut entries = Vec::with_capacity(k);
    for (f, fold) in folds.iter().enumerate() {
        let held: HashSet<&str> = fold.iter().map(String::as_str).collect();
        let test = select(corpus, &held, true);
        let train_set = select(corpus, &held, false);
        assert!(
            train_set.iter().all(|lq| !held.contains(lq.question.id.as_str())),
            "fold {f}: train and evaluation sets overlap"
        );
        if test.is_empty() {
            return Err(Error::Validation(format!("fold {} has no evaluable questions", f + 1)));
        }
        let run = run_method(method, &train_set, &test, seed.wrapping_add(f as u64))?;
        log::info!("{} fold {}: {:.4}", method.name(), f + 1, run.mean());
        entries.push(run.mean());
    }
    Ok(EvalReport::from_entries(method.name(), entries))
}

/// One seeded 5:1 split; the report has a single entry.
pub fn holdout(method: &Method<'_>, corpus: &[LabeledQuestion], seed: u64) -> Result<(EvalReport, MethodRun)> {
    let ids = check_unique_ids(corpus)?;
    let (_, test_ids) = split_ratio(&ids, seed)?;
    let held: HashSet<&str> = test_ids.iter().map(String::as_str).collect();
    let test = select(corpus, &held, true);
    let train_set = select(corpus, &held, false);
    let run = run_method(method, &train_set, &test, seed)?;
    Ok((EvalReport::from_entries(method.name(), vec![run.mean()]), run))
}

/// Aligned text table: method, mean ± stdev at three decimals.
pub fn report_table(reports: &[EvalReport]) -> String {
    let width = reports
        .iter()
        .map(|r| r.method.len())
        .chain(std::iter::once("method".len()))
        .max()
        .unwrap_or(0);
    let mut out = String::new();
    let _ = writeln!(out, "{:<width$}  ROUGE-SU4 F1", "method");
    for r in reports {
        let _ = writeln!(out, "{:<width$}  {:.3} ± {:.3}", r.method, r.mean, r.stdev);
    }
    out
}
