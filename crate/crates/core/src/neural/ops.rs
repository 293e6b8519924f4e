//! Layers, activations and losses with their analytic gradients.

use rand::Rng;

use super::tensor::{gemm, Tensor};
use crate::error::{Error, Result};

/// Probability clamp used by [`bce`].
pub const BCE_EPSILON: f64 = 1e-7;

/// `input(B×I) · weights(I×O) + bias(O)`.
pub fn dense(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (b, i) = (input.rows(), input.cols());
    let ws = weights.shape();
    if ws.len() != 2 || ws[0] != i {
        return Err(Error::shape("dense", input.shape(), ws));
    }
    let o = ws[1];
    if bias.len() != o {
        return Err(Error::shape("dense bias", ws, bias.shape()));
    }
    let mut out = Tensor::zeros(&[b, o]);
    for r in 0..b {
        out.row_mut(r).copy_from_slice(bias.data());
    }
    gemm(b, i, o, input.data(), false, weights.data(), false, 1.0, out.data_mut());
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct DenseGrads {
    pub input: Tensor,
    pub weights: Tensor,
    pub bias: Tensor,
}

/// Gradients of [`dense`] given the upstream gradient `grad_out(B×O)`.
pub fn dense_backward(input: &Tensor, weights: &Tensor, grad_out: &Tensor) -> Result<DenseGrads> {
    let (b, i) = (input.rows(), input.cols());
    let ws = weights.shape();
    if ws.len() != 2 || ws[0] != i || grad_out.rows() != b || grad_out.cols() != ws[1] {
        return Err(Error::shape("dense_backward", input.shape(), grad_out.shape()));
    }
    let o = ws[1];
    let mut g_in = Tensor::zeros(&[b, i]);
    gemm(b, o, i, grad_out.data(), false, weights.data(), true, 0.0, g_in.data_mut());
    let mut g_w = Tensor::zeros(&[i, o]);
    gemm(i, b, o, input.data(), true, grad_out.data(), false, 0.0, g_w.data_mut());
    let mut g_b = Tensor::zeros(&[o]);
    for r in 0..b {
        for (acc, g) in g_b.data_mut().iter_mut().zip(grad_out.row(r)) {
            *acc += g;
        }
    }
    Ok(DenseGrads {
        input: g_in,
        weights: g_w,
        bias: g_b,
    })
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Derivative of the sigmoid expressed through its output.
pub fn sigmoid_grad(y: f64) -> f64 {
    y * (1.0 - y)
}

pub fn tanh(x: f64) -> f64 {
    x.tanh()
}

/// Derivative of tanh expressed through its output.
pub fn tanh_grad(y: f64) -> f64 {
    1.0 - y * y
}

pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

/// Derivative of relu at its input (0 at the kink).
pub fn relu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        0.0
    }
}

pub fn map(t: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    let mut out = t.clone();
    out.data_mut().iter_mut().for_each(|x| *x = f(*x));
    out
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|&z| z - lse).collect()
}

/// Vector-Jacobian product of softmax: `y ⊙ (dy − ⟨dy, y⟩)`.
pub fn softmax_backward(probs: &[f64], grad_out: &[f64]) -> Vec<f64> {
    let dot: f64 = probs.iter().zip(grad_out).map(|(p, g)| p * g).sum();
    probs
        .iter()
        .zip(grad_out)
        .map(|(p, g)| p * (g - dot))
        .collect()
}

/// Binary cross-entropy of one prediction, with its derivative w.r.t. the
/// prediction. The prediction is clamped to `[ε, 1 − ε]`.
pub fn bce(prediction: f64, label: f64) -> (f64, f64) {
    let clamped = prediction.clamp(BCE_EPSILON, 1.0 - BCE_EPSILON);
    let loss = -(label * clamped.ln() + (1.0 - label) * (1.0 - clamped).ln());
    let grad = if clamped != prediction {
        0.0
    } else {
        -label / clamped + (1.0 - label) / (1.0 - clamped)
    };
    (loss, grad)
}

pub fn mse(prediction: f64, target: f64) -> (f64, f64) {
    let d = prediction - target;
    (d * d, 2.0 * d)
}

/// Softmax cross-entropy for a single example; returns the loss and the
/// gradient w.r.t. the logits.
pub fn ce_softmax(logits: &[f64], class: usize) -> (f64, Vec<f64>) {
    let logp = log_softmax(logits);
    let loss = -logp[class];
    let mut grad: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
    grad[class] -= 1.0;
    (loss, grad)
}

/// Inverted dropout. Returns the output and the per-element multiplier
/// applied (0 or `1/(1−rate)`), which is also the backward mask.
pub fn dropout<R: Rng>(input: &Tensor, rate: f64, rng: &mut R, train_mode: bool) -> Result<(Tensor, Option<Vec<f64>>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Validation(format!(
            "dropout rate must be in [0, 1), got {rate}"
        )));
    }
    if !train_mode || rate == 0.0 {
        return Ok((input.clone(), None));
    }
    let keep = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = (0..input.len())
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
        .collect();
    let mut out = input.clone();
    for (x, m) in out.data_mut().iter_mut().zip(&mask) {
        *x *= m;
    }
    Ok((out, Some(mask)))
}
