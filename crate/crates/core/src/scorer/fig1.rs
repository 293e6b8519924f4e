//! Sentence/question scorer: reduce both token matrices to sentence
//! vectors, concatenate `[position; sentence; sentence ⊙ question]`, apply
//! one relu layer and a scalar output (sigmoid or linear).

use rand::Rng;

use crate::embeddings::{mean_reduce, TokenMatrix};
use crate::error::{Error, Result};
use crate::neural::ops::{relu, relu_grad, sigmoid, sigmoid_grad};
use crate::neural::{dense, dense_backward, dropout, BiLstm, LstmCache, ParamSet, Tensor};

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Reductor {
    Mean,
    Lstm(BiLstm),
}

impl Reductor {
    fn output_dim(&self, input_dim: usize) -> usize {
        match self {
            Reductor::Mean => input_dim,
            Reductor::Lstm(l) => l.hidden(),
        }
    }

    pub fn forward(&self, params: &ParamSet, seqs: &[&TokenMatrix]) -> Result<(Tensor, Option<LstmCache>)> {
        match self {
            Reductor::Mean => {
                let rows: Vec<Vec<f64>> = seqs.iter().map(|m| mean_reduce(m)).collect();
                let dim = seqs.first().map_or(0, |m| m.dim());
                let flat = rows.into_iter().flatten().collect();
                Ok((Tensor::from_vec(&[seqs.len(), dim], flat)?, None))
            }
            Reductor::Lstm(l) => {
                let (out, cache) = l.forward(params, seqs)?;
                Ok((out, Some(cache)))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Fig1Net {
    pub sentence: Reductor,
    pub question: Reductor,
    pub input_dim: usize,
    pub hidden: usize,
    pub sigmoid_head: bool,
}

pub(crate) const HIDDEN_W: &str = "hidden.w";
pub(crate) const HIDDEN_B: &str = "hidden.b";
pub(crate) const OUTPUT_W: &str = "output.w";
pub(crate) const OUTPUT_B: &str = "output.b";

/// A batch of examples; `question_of[i]` indexes into `questions`.
pub(crate) struct Fig1Batch<'a> {
    pub sentences: Vec<&'a TokenMatrix>,
    pub questions: Vec<&'a TokenMatrix>,
    pub question_of: Vec<usize>,
    pub positions: Vec<f64>,
}

pub(crate) struct Fig1Cache {
    sent: Tensor,
    quest: Tensor,
    sent_cache: Option<LstmCache>,
    quest_cache: Option<LstmCache>,
    question_of: Vec<usize>,
    features: Tensor,
    dropout_mask: Option<Vec<f64>>,
    pre_hidden: Tensor,
    hidden: Tensor,
    pub scores: Vec<f64>,
}

impl Fig1Net {
    pub fn sentence_dim(&self) -> usize {
        self.sentence.output_dim(self.input_dim)
    }

    pub fn feature_dim(&self) -> usize {
        1 + 2 * self.sentence_dim()
    }

    pub fn init<R: Rng>(&self, params: &mut ParamSet, rng: &mut R) {
        if let Reductor::Lstm(l) = &self.sentence {
            l.init(params, rng);
        }
        if let Reductor::Lstm(l) = &self.question {
            if self.question != self.sentence {
                l.init(params, rng);
            }
        }
        let (f, h) = (self.feature_dim(), self.hidden);
        params.insert(HIDDEN_W, Tensor::glorot_uniform(&[f, h], f, h, rng));
        params.insert(HIDDEN_B, Tensor::zeros(&[h]));
        params.insert(OUTPUT_W, Tensor::glorot_uniform(&[h, 1], h, 1, rng));
        params.insert(OUTPUT_B, Tensor::zeros(&[1]));
    }

    /// Scores for a batch. `train` carries the dropout rng and rate.
    pub fn forward<R: Rng>(
        &self,
        params: &ParamSet,
        batch: &Fig1Batch<'_>,
        train: Option<(&mut R, f64)>,
    ) -> Result<Fig1Cache> {
        for m in batch.sentences.iter().chain(&batch.questions) {
            if m.dim() != self.input_dim {
                return Err(Error::shape("scorer input", &[self.input_dim], &[m.dim()]));
            }
        }
        let n = batch.sentences.len();
        let (sent, sent_cache) = self.sentence.forward(params, &batch.sentences)?;
        let (quest, quest_cache) = self.question.forward(params, &batch.questions)?;
        let d = self.sentence_dim();

        let f = self.feature_dim();
        let mut features = Tensor::zeros(&[n, f]);
        for i in 0..n {
            let s = sent.row(i);
            let q = quest.row(batch.question_of[i]);
            let row = features.row_mut(i);
            row[0] = batch.positions[i];
            row[1..1 + d].copy_from_slice(s);
            for j in 0..d {
                row[1 + d + j] = s[j] * q[j];
            }
        }
        let (features, dropout_mask) = match train {
            Some((rng, rate)) => dropout(&features, rate, rng, true)?,
            None => (features, None),
        };

        let pre_hidden = dense(&features, params.get(HIDDEN_W), params.get(HIDDEN_B))?;
        let hidden = crate::neural::ops::map(&pre_hidden, relu);
        let out = dense(&hidden, params.get(OUTPUT_W), params.get(OUTPUT_B))?;
        let scores = out
            .data()
            .iter()
            .map(|&z| if self.sigmoid_head { sigmoid(z) } else { z })
            .collect();

        Ok(Fig1Cache {
            sent,
            quest,
            sent_cache,
            quest_cache,
            question_of: batch.question_of.clone(),
            features,
            dropout_mask,
            pre_hidden,
            hidden,
            scores,
        })
    }

    /// Accumulate parameter gradients for upstream gradients on the scores.
    pub fn backward(&self, params: &ParamSet, cache: &Fig1Cache, d_scores: &[f64], grads: &mut ParamSet) -> Result<()> {
        let n = cache.scores.len();
        let d = self.sentence_dim();
        let d_out: Vec<f64> = cache
            .scores
            .iter()
            .zip(d_scores)
            .map(|(&y, &g)| if self.sigmoid_head { g * sigmoid_grad(y) } else { g })
            .collect();
        let d_out = Tensor::from_vec(&[n, 1], d_out)?;

        let g2 = dense_backward(&cache.hidden, params.get(OUTPUT_W), &d_out)?;
        grads.get_mut(OUTPUT_W).add_assign(&g2.weights)?;
        grads.get_mut(OUTPUT_B).add_assign(&g2.bias)?;

        let mut d_pre = g2.input;
        for (g, &z) in d_pre.data_mut().iter_mut().zip(cache.pre_hidden.data()) {
            *g *= relu_grad(z);
        }
        let g1 = dense_backward(&cache.features, params.get(HIDDEN_W), &d_pre)?;
        grads.get_mut(HIDDEN_W).add_assign(&g1.weights)?;
        grads.get_mut(HIDDEN_B).add_assign(&g1.bias)?;

        let mut d_feat = g1.input;
        if let Some(mask) = &cache.dropout_mask {
            for (g, m) in d_feat.data_mut().iter_mut().zip(mask) {
                *g *= m;
            }
        }

        let mut d_sent = Tensor::zeros(&[n, d]);
        let mut d_quest = Tensor::zeros(&[cache.quest.rows(), d]);
        for i in 0..n {
            let qi = cache.question_of[i];
            let df = d_feat.row(i);
            let s = cache.sent.row(i);
            let q = cache.quest.row(qi).to_vec();
            let ds = d_sent.row_mut(i);
            for j in 0..d {
                ds[j] = df[1 + j] + df[1 + d + j] * q[j];
            }
            let dq = d_quest.row_mut(qi);
            for j in 0..d {
                dq[j] += df[1 + d + j] * s[j];
            }
        }

        if let (Reductor::Lstm(l), Some(c)) = (&self.sentence, &cache.sent_cache) {
            l.backward(params, c, &d_sent, grads, false)?;
        }
        if let (Reductor::Lstm(l), Some(c)) = (&self.question, &cache.quest_cache) {
            l.backward(params, c, &d_quest, grads, false)?;
        }
        Ok(())
    }
}
