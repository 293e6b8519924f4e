//! Supervised sentence scorers: the sentence/question network in its
//! regression, classification, contextual and Siamese forms, and the
//! sentence-embedding heads.

mod fig1;
mod sbert;
mod train;

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{CandidateSentence, Question};
use crate::embeddings::{mean_reduce, EmbeddingSource, Slot, SourceKind, TokenMatrix};
use crate::error::{Error, Result};
use crate::neural::{read_checkpoint, write_checkpoint, BiLstm, ParamSet};

use fig1::{Fig1Batch, Fig1Net, Reductor};
use sbert::SbertNet;

pub use sbert::SbertOutput;
pub use train::{train, EpochLog};

/// Candidates processed per forward/backward call.
pub(crate) const SUB_BATCH: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Nnr,
    Nnc,
    MeanContextual,
    ContextualLstm,
    SiameseLstm,
    SbertR,
    SbertC,
    SbertMR,
    SbertMC,
}

impl Variant {
    pub const ALL: [Variant; 9] = [
        Variant::Nnr,
        Variant::Nnc,
        Variant::MeanContextual,
        Variant::ContextualLstm,
        Variant::SiameseLstm,
        Variant::SbertR,
        Variant::SbertC,
        Variant::SbertMR,
        Variant::SbertMC,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Nnr => "nnr",
            Variant::Nnc => "nnc",
            Variant::MeanContextual => "mean-contextual",
            Variant::ContextualLstm => "contextual-lstm",
            Variant::SiameseLstm => "siamese-lstm",
            Variant::SbertR => "sbert-r",
            Variant::SbertC => "sbert-c",
            Variant::SbertMR => "sbert-m-r",
            Variant::SbertMC => "sbert-m-c",
        }
    }

    pub fn is_sbert(self) -> bool {
        matches!(
            self,
            Variant::SbertR | Variant::SbertC | Variant::SbertMR | Variant::SbertMC
        )
    }

    fn needs_contextual(self) -> bool {
        matches!(self, Variant::MeanContextual | Variant::ContextualLstm) || self.is_sbert()
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == norm)
            .ok_or_else(|| Error::Validation(format!("unknown scorer variant {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerConfig {
    pub variant: Variant,
    pub batch_size: usize,
    pub dropout: f64,
    pub epochs: usize,
    pub max_sentence_len: usize,
    pub hidden_dim: usize,
    pub share_reductor: bool,
    pub learning_rate: f64,
    pub seed: u64,
}

impl ScorerConfig {
    /// Per-variant defaults for batch size, dropout, epochs and sentence
    /// length.
    pub fn defaults(variant: Variant, seed: u64) -> Self {
        let (batch_size, dropout, epochs, max_sentence_len) = match variant {
            Variant::Nnr | Variant::Nnc => (1024, 0.3, 10, 300),
            Variant::MeanContextual => (32, 0.0, 50, 250),
            Variant::ContextualLstm => (1024, 0.6, 10, 250),
            Variant::SiameseLstm => (1024, 0.2, 10, 300),
            Variant::SbertR | Variant::SbertC | Variant::SbertMR | Variant::SbertMC => (32, 0.0, 10, 250),
        };
        ScorerConfig {
            variant,
            batch_size,
            dropout,
            epochs,
            max_sentence_len,
            hidden_dim: 100,
            share_reductor: variant == Variant::SiameseLstm,
            learning_rate: 1e-3,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Validation(m));
        if self.batch_size == 0 || self.epochs == 0 || self.max_sentence_len == 0 || self.hidden_dim == 0 {
            return fail("batch size, epochs, sentence length and hidden size must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if self.share_reductor != (self.variant == Variant::SiameseLstm) {
            return fail("share_reductor must be set exactly for the siamese-lstm variant".into());
        }
        Ok(())
    }

    /// Check that an embedding source can feed this variant.
    pub fn check_source(&self, kind: SourceKind) -> Result<()> {
        match kind {
            SourceKind::Contextual { sentence_level } if self.variant.is_sbert() && !sentence_level => {
                Err(Error::Validation(format!(
                    "{} needs sentence-level (single-row) contextual embeddings",
                    self.variant
                )))
            }
            SourceKind::WordVectors if self.variant.needs_contextual() => Err(Error::Validation(format!(
                "{} needs a contextual embedding store",
                self.variant
            ))),
            _ => Ok(()),
        }
    }
}

enum Net {
    Fig1(Fig1Net),
    Sbert(SbertNet),
}

fn build_net(config: &ScorerConfig, input_dim: usize) -> Net {
    let lstm = |prefix: &str| BiLstm::new(prefix, input_dim, config.hidden_dim);
    let (sentence, question) = match config.variant {
        Variant::Nnr | Variant::Nnc | Variant::ContextualLstm => (
            Reductor::Lstm(lstm("sentence_reductor")),
            Reductor::Lstm(lstm("question_reductor")),
        ),
        Variant::SiameseLstm => (Reductor::Lstm(lstm("reductor")), Reductor::Lstm(lstm("reductor"))),
        Variant::MeanContextual => (Reductor::Mean, Reductor::Mean),
        Variant::SbertR => {
            return Net::Sbert(SbertNet {
                dim: input_dim,
                regression: true,
                classification: false,
            })
        }
        Variant::SbertC => {
            return Net::Sbert(SbertNet {
                dim: input_dim,
                regression: false,
                classification: true,
            })
        }
        Variant::SbertMR | Variant::SbertMC => {
            return Net::Sbert(SbertNet {
                dim: input_dim,
                regression: true,
                classification: true,
            })
        }
    };
    Net::Fig1(Fig1Net {
        sentence,
        question,
        input_dim,
        hidden: config.hidden_dim,
        sigmoid_head: config.variant != Variant::Nnr,
    })
}

#[derive(Serialize, Deserialize)]
struct CheckpointMeta {
    config: ScorerConfig,
    input_dim: usize,
}

/// A scorer configuration with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ScorerModel {
    pub config: ScorerConfig,
    pub params: ParamSet,
    input_dim: usize,
}

impl ScorerModel {
    /// Freshly initialised model for embeddings of width `input_dim`.
    pub fn new(config: ScorerConfig, input_dim: usize) -> Result<Self> {
        config.validate()?;
        if input_dim == 0 {
            return Err(Error::Validation("embedding dimension must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamSet::new(config.seed);
        match build_net(&config, input_dim) {
            Net::Fig1(n) => n.init(&mut params, &mut rng),
            Net::Sbert(n) => n.init(&mut params, &mut rng),
        }
        Ok(ScorerModel {
            config,
            params,
            input_dim,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn net(&self) -> Net {
        build_net(&self.config, self.input_dim)
    }

    /// Score one candidate (sentence/question network variants only).
    pub fn forward_fig1(&self, sentence: &TokenMatrix, question: &TokenMatrix, position: usize) -> Result<f64> {
        let Net::Fig1(net) = self.net() else {
            return Err(Error::Validation(format!(
                "{} is not a sentence/question network variant",
                self.config.variant
            )));
        };
        let batch = Fig1Batch {
            sentences: vec![sentence],
            questions: vec![question],
            question_of: vec![0],
            positions: vec![position as f64],
        };
        let cache = net.forward::<ChaCha8Rng>(&self.params, &batch, None)?;
        Ok(cache.scores[0])
    }

    /// Both heads for a sentence vector `u` and question vector `v`.
    pub fn forward_sbert(&self, u: &[f64], v: &[f64]) -> Result<SbertOutput> {
        let Net::Sbert(net) = self.net() else {
            return Err(Error::Validation(format!(
                "{} is not a sentence-embedding head variant",
                self.config.variant
            )));
        };
        net.forward(&self.params, u, v)
    }

    /// One score per candidate, in pool order, with dropout disabled.
    pub fn predict_scores(
        &self,
        question: &Question,
        pool: &[CandidateSentence],
        source: &dyn EmbeddingSource,
    ) -> Result<Vec<f64>> {
        self.config.check_source(source.kind())?;
        if source.dim() != self.input_dim {
            return Err(Error::shape("embedding dim", &[self.input_dim], &[source.dim()]));
        }
        let max_len = self.config.max_sentence_len;
        let q_tokens = crate::corpus::tokenize(&question.body);
        let q_matrix = source.token_matrix(&question.id, Slot::Question, &q_tokens, max_len)?;

        match self.net() {
            Net::Fig1(net) => {
                let mut scores = Vec::with_capacity(pool.len());
                for chunk in pool.chunks(SUB_BATCH) {
                    let matrices = chunk
                        .iter()
                        .map(|c| source.token_matrix(&question.id, Slot::Candidate(c.position), &c.tokens, max_len))
                        .collect::<Result<Vec<_>>>()?;
                    let batch = Fig1Batch {
                        sentences: matrices.iter().collect(),
                        questions: vec![&q_matrix],
                        question_of: vec![0; chunk.len()],
                        positions: chunk.iter().map(|c| c.position as f64).collect(),
                    };
                    scores.extend(net.forward::<ChaCha8Rng>(&self.params, &batch, None)?.scores);
                }
                Ok(scores)
            }
            Net::Sbert(net) => {
                let v = mean_reduce(&q_matrix);
                pool.iter()
                    .map(|c| {
                        let m = source.token_matrix(&question.id, Slot::Candidate(c.position), &c.tokens, max_len)?;
                        let out = net.forward(&self.params, &mean_reduce(&m), &v)?;
                        Ok(match self.config.variant {
                            Variant::SbertR | Variant::SbertMR => out.reg,
                            _ => out.cls[1],
                        })
                    })
                    .collect()
            }
        }
    }

    pub fn save<W: Write>(&self, out: W) -> Result<()> {
        let meta = serde_json::to_string(&CheckpointMeta {
            config: self.config.clone(),
            input_dim: self.input_dim,
        })?;
        write_checkpoint(&self.params, &meta, out)
    }

    pub fn load<R: Read>(input: R) -> Result<Self> {
        let (params, meta) = read_checkpoint(input)?;
        let meta: CheckpointMeta = serde_json::from_str(&meta)
            .map_err(|e| Error::parse("checkpoint metadata", e.to_string()))?;
        let expected = ScorerModel::new(meta.config.clone(), meta.input_dim)?;
        if !expected.params.same_layout(&params) {
            return Err(Error::Validation(
                "checkpoint parameters do not match the configured architecture".into(),
            ));
        }
        Ok(ScorerModel {
            config: meta.config,
            params,
            input_dim: meta.input_dim,
        })
    }
}
