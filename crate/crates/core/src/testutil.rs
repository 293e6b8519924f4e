use crate::corpus::DEFAULT_CANDIDATE_CAP;
use crate::embeddings::{ContextualStore, EmbeddingTable};
use crate::labeling::{label_corpus, LabeledQuestion, DEFAULT_POSITIVES};
use crate::synthetic::{contextual_store, generate, word_table, SyntheticSpec};

const SEED: u64 = 17;

pub fn tiny_corpus(questions: usize, sentences: usize) -> Vec<LabeledQuestion> {
    let spec = SyntheticSpec {
        questions,
        sentences,
        relevant: 2.min(sentences),
        dim: 4,
        seed: SEED,
    };
    let data = generate(&spec).unwrap();
    label_corpus(&data.questions, DEFAULT_CANDIDATE_CAP, DEFAULT_POSITIVES).unwrap()
}

pub fn tiny_table(dim: usize) -> EmbeddingTable {
    word_table(8, dim, SEED).unwrap()
}

pub fn tiny_store(corpus: &[LabeledQuestion], dim: usize, sentence_level: bool) -> ContextualStore {
    let questions: Vec<_> = corpus.iter().map(|lq| lq.question.clone()).collect();
    contextual_store(&questions, &tiny_table(dim), sentence_level, DEFAULT_CANDIDATE_CAP).unwrap()
}
