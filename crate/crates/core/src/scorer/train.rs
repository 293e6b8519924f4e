use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::fig1::{Fig1Batch, Fig1Net};
use super::sbert::SbertNet;
use super::{Net, ScorerConfig, ScorerModel, Variant, SUB_BATCH};
use crate::corpus::tokenize;
use crate::embeddings::{mean_reduce, EmbeddingSource, Slot, TokenMatrix};
use crate::error::{Error, Result};
use crate::labeling::LabeledQuestion;
use crate::neural::ops::{bce, mse};
use crate::neural::{adam_step, AdamConfig, AdamState, ParamSet};

/// Mean training loss of one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
}

/// (question index, candidate index) into a labeled corpus.
pub type ExampleRef = (usize, usize);

struct Context<'a> {
    corpus: &'a [LabeledQuestion],
    question_tokens: Vec<Vec<String>>,
    source: &'a dyn EmbeddingSource,
    max_len: usize,
}

impl Context<'_> {
    fn sentence(&self, (qi, ci): ExampleRef) -> Result<TokenMatrix> {
        let lq = &self.corpus[qi];
        let c = &lq.pool[ci];
        self.source
            .token_matrix(&lq.question.id, Slot::Candidate(c.position), &c.tokens, self.max_len)
    }

    fn question(&self, qi: usize) -> Result<TokenMatrix> {
        self.source.token_matrix(
            &self.corpus[qi].question.id,
            Slot::Question,
            &self.question_tokens[qi],
            self.max_len,
        )
    }
}

/// Summed loss over `examples`, adding `scale × ∂loss/∂θ` into `grads`.
fn accumulate(
    model: &ScorerModel,
    net: &Net,
    ctx: &Context<'_>,
    examples: &[ExampleRef],
    scale: f64,
    dropout: Option<&mut ChaCha8Rng>,
    grads: &mut ParamSet,
) -> Result<f64> {
    match net {
        Net::Fig1(n) => fig1_accumulate(model, n, ctx, examples, scale, dropout, grads),
        Net::Sbert(n) => sbert_accumulate(model, n, ctx, examples, scale, grads),
    }
}

fn fig1_accumulate(
    model: &ScorerModel,
    net: &Fig1Net,
    ctx: &Context<'_>,
    examples: &[ExampleRef],
    scale: f64,
    mut dropout: Option<&mut ChaCha8Rng>,
    grads: &mut ParamSet,
) -> Result<f64> {
    let mut total = 0.0;
    for chunk in examples.chunks(SUB_BATCH) {
        let sentences = chunk
            .iter()
            .map(|&e| ctx.sentence(e))
            .collect::<Result<Vec<_>>>()?;
        let mut local: HashMap<usize, usize> = HashMap::new();
        let mut question_ids = Vec::new();
        let question_of: Vec<usize> = chunk
            .iter()
            .map(|&(qi, _)| {
                *local.entry(qi).or_insert_with(|| {
                    question_ids.push(qi);
                    question_ids.len() - 1
                })
            })
            .collect();
        let questions = question_ids
            .iter()
            .map(|&qi| ctx.question(qi))
            .collect::<Result<Vec<_>>>()?;
        let batch = Fig1Batch {
            sentences: sentences.iter().collect(),
            questions: questions.iter().collect(),
            question_of,
            positions: chunk
                .iter()
                .map(|&(qi, ci)| ctx.corpus[qi].pool[ci].position as f64)
                .collect(),
        };
        let train = dropout
            .as_deref_mut()
            .filter(|_| model.config.dropout > 0.0)
            .map(|rng| (rng, model.config.dropout));
        let cache = net.forward(&model.params, &batch, train)?;
        let mut d_scores = Vec::with_capacity(chunk.len());
        for (&(qi, ci), &score) in chunk.iter().zip(&cache.scores) {
            let lq = &ctx.corpus[qi];
            let (loss, grad) = if model.config.variant == Variant::Nnr {
                mse(score, lq.targets[ci])
            } else {
                bce(score, f64::from(lq.labels[ci]))
            };
            total += loss;
            d_scores.push(grad * scale);
        }
        net.backward(&model.params, &cache, &d_scores, grads)?;
    }
    Ok(total)
}

fn sbert_accumulate(
    model: &ScorerModel,
    net: &SbertNet,
    ctx: &Context<'_>,
    examples: &[ExampleRef],
    scale: f64,
    grads: &mut ParamSet,
) -> Result<f64> {
    let mut question_vecs: HashMap<usize, Vec<f64>> = HashMap::new();
    let mut total = 0.0;
    for &(qi, ci) in examples {
        if let std::collections::hash_map::Entry::Vacant(e) = question_vecs.entry(qi) {
            e.insert(mean_reduce(&ctx.question(qi)?));
        }
        let u = mean_reduce(&ctx.sentence((qi, ci))?);
        let label = ctx.corpus[qi].labels[ci];
        let out = net.loss_and_grad(&model.params, &u, &question_vecs[&qi], label, scale, grads)?;
        total += out.loss;
    }
    Ok(total)
}

impl ScorerModel {
    /// Mean training loss over `examples` (dropout off) and its gradient.
    pub fn loss_and_gradient(
        &self,
        corpus: &[LabeledQuestion],
        examples: &[ExampleRef],
        source: &dyn EmbeddingSource,
    ) -> Result<(f64, ParamSet)> {
        if examples.is_empty() {
            return Err(Error::Validation("no examples".into()));
        }
        let ctx = Context {
            corpus,
            question_tokens: corpus.iter().map(|q| tokenize(&q.question.body)).collect(),
            source,
            max_len: self.config.max_sentence_len,
        };
        let scale = 1.0 / examples.len() as f64;
        let mut grads = self.params.zeros_like();
        let total = accumulate(self, &self.net(), &ctx, examples, scale, None, &mut grads)?;
        Ok((total * scale, grads))
    }
}

/// Mini-batch Adam training. Returns the model and one log row per epoch.
pub fn train(
    corpus: &[LabeledQuestion],
    source: &dyn EmbeddingSource,
    config: &ScorerConfig,
) -> Result<(ScorerModel, Vec<EpochLog>)> {
    config.validate()?;
    config.check_source(source.kind())?;
    let mut examples: Vec<ExampleRef> = corpus
        .iter()
        .enumerate()
        .flat_map(|(qi, lq)| (0..lq.pool.len()).map(move |ci| (qi, ci)))
        .collect();
    if examples.is_empty() {
        return Err(Error::Validation("training set is empty".into()));
    }

    let mut model = ScorerModel::new(config.clone(), source.dim())?;
    let net = model.net();
    let ctx = Context {
        corpus,
        question_tokens: corpus.iter().map(|q| tokenize(&q.question.body)).collect(),
        source,
        max_len: config.max_sentence_len,
    };
    let adam = AdamConfig::with_learning_rate(config.learning_rate);
    let mut state = AdamState::new(&model.params);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(2));

    let mut log = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        examples.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for batch in examples.chunks(config.batch_size) {
            let scale = 1.0 / batch.len() as f64;
            let mut grads = model.params.zeros_like();
            let loss = accumulate(&model, &net, &ctx, batch, scale, Some(&mut dropout_rng), &mut grads)?;
            if !loss.is_finite() {
                return Err(Error::Numerical(format!("non-finite training loss in epoch {epoch}")));
            }
            epoch_loss += loss;
            adam_step(&mut model.params, &grads, &mut state, &adam)?;
        }
        let mean_loss = epoch_loss / examples.len() as f64;
        log::info!("{} epoch {epoch}: loss {mean_loss:.6}", config.variant);
        log.push(EpochLog { epoch, mean_loss });
    }
    Ok((model, log))
}
