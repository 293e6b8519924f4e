//! Seeded synthetic corpora with a planted relevance signal.
//!
//! Every question owns a set of topic words. Relevant sentences are dense in
//! them, the rest are drawn mostly from a shared filler vocabulary, and the
//! ideal answer is the concatenation of the relevant sentences. Relevant
//! sentences sit at random positions, so a lead baseline only gets the base
//! rate while a scorer that compares sentence and question can do better.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::corpus::{tokenize, Question, QuestionType, SourceSnippet};
use crate::embeddings::{ContextualStore, EmbeddingTable, Slot};
use crate::corpus::build_candidates;
use crate::error::Result;

const FILLER_WORDS: usize = 300;
const TOPIC_WORDS: usize = 8;
const SENTENCES_PER_SNIPPET: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyntheticSpec {
    pub questions: usize,
    pub sentences: usize,
    pub relevant: usize,
    pub dim: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            questions: 120,
            sentences: 20,
            relevant: 6,
            dim: 32,
            seed: 0,
        }
    }
}

pub struct SyntheticData {
    pub questions: Vec<Question>,
    pub table: EmbeddingTable,
}

fn filler(i: usize) -> String {
    format!("w{i}")
}

fn topic(q: usize, i: usize) -> String {
    format!("t{}", q * TOPIC_WORDS + i)
}

fn capitalise(words: &[String]) -> String {
    let mut s = words.join(" ");
    if let Some(first) = s.get(..1) {
        let upper = first.to_uppercase();
        s.replace_range(..1, &upper);
    }
    s.push('.');
    s
}

fn sentence<R: Rng>(rng: &mut R, q: usize, topic_rate: f64) -> String {
    let len = rng.gen_range(8..=12);
    let words: Vec<String> = (0..len)
        .map(|_| {
            if rng.gen_bool(topic_rate) {
                topic(q, rng.gen_range(0..TOPIC_WORDS))
            } else {
                filler(rng.gen_range(0..FILLER_WORDS))
            }
        })
        .collect();
    capitalise(&words)
}

/// Word vectors for the filler words, then topic words of questions
/// `0..questions`. A table for more questions extends one for fewer.
pub fn word_table(questions: usize, dim: usize, seed: u64) -> Result<EmbeddingTable> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7ab1e);
    let mut table = EmbeddingTable::new(dim)?;
    let scale = 1.0 / (dim as f64).sqrt();
    let words = (0..FILLER_WORDS)
        .map(filler)
        .chain((0..questions).flat_map(|q| (0..TOPIC_WORDS).map(move |i| topic(q, i))));
    for word in words {
        let v: Vec<f32> = (0..dim)
            .map(|_| (rng.sample::<f64, _>(StandardNormal) * scale) as f32)
            .collect();
        table.insert(&word, &v)?;
    }
    Ok(table)
}

pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticData> {
    assert!(spec.relevant <= spec.sentences, "more relevant sentences than sentences");
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut questions = Vec::with_capacity(spec.questions);
    for q in 0..spec.questions {
        let relevant = sample(&mut rng, spec.sentences, spec.relevant).into_vec();
        let mut texts = Vec::with_capacity(spec.sentences);
        let mut ideal = Vec::new();
        for s in 0..spec.sentences {
            let text = if relevant.contains(&s) {
                let t = sentence(&mut rng, q, 0.5);
                ideal.push(t.clone());
                t
            } else {
                sentence(&mut rng, q, 0.05)
            };
            texts.push(text);
        }
        let snippets = texts
            .chunks(SENTENCES_PER_SNIPPET)
            .enumerate()
            .map(|(d, chunk)| SourceSnippet {
                document_id: format!("doc{q}-{d}"),
                text: chunk.join(" "),
            })
            .collect();
        let body_words: Vec<String> = (0..4).map(|_| topic(q, rng.gen_range(0..TOPIC_WORDS))).collect();
        questions.push(Question {
            id: format!("syn{q:04}"),
            qtype: QuestionType::ALL[q % QuestionType::ALL.len()],
            body: format!("What about {}?", body_words.join(" ")),
            snippets,
            ideal_answers: vec![ideal.join(" ")],
        });
    }
    Ok(SyntheticData {
        questions,
        table: word_table(spec.questions, spec.dim, spec.seed)?,
    })
}

/// Contextual store built from static vectors: one row per token, or one
/// mean row per text when `sentence_level`. Texts without tokens get one
/// zero row.
pub fn contextual_store(
    questions: &[Question],
    table: &EmbeddingTable,
    sentence_level: bool,
    cap: usize,
) -> Result<ContextualStore> {
    let dim = table.dim();
    let model = if sentence_level { "synthetic-sentence" } else { "synthetic-token" };
    let mut store = ContextualStore::new(dim, model)?;
    let rows_of = |tokens: &[String]| -> (usize, Vec<f32>) {
        let mut rows: Vec<Vec<f32>> = tokens
            .iter()
            .map(|t| table.get(t).map_or_else(|| vec![0.0; dim], <[f32]>::to_vec))
            .collect();
        if rows.is_empty() {
            rows.push(vec![0.0; dim]);
        }
        if sentence_level {
            let n = rows.len() as f32;
            let mean = (0..dim).map(|j| rows.iter().map(|r| r[j]).sum::<f32>() / n).collect();
            (1, mean)
        } else {
            (rows.len(), rows.concat())
        }
    };
    for q in questions {
        let (l, data) = rows_of(&tokenize(&q.body));
        store.insert(&q.id, Slot::Question, l, data)?;
        for c in build_candidates(q, cap) {
            let (l, data) = rows_of(&c.tokens);
            store.insert(&q.id, Slot::Candidate(c.position), l, data)?;
        }
    }
    Ok(store)
}
