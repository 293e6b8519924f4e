//! Bidirectional LSTM sentence reductor.
//!
//! Gate columns are laid out `[input | forget | cell | output]`. Masked
//! steps carry the previous state unchanged, so padding (anywhere in the
//! sequence) has no effect. The sentence embedding is the element-wise sum
//! of the final forward and backward hidden states.

use rand::Rng;

use super::ops::{sigmoid, sigmoid_grad, tanh_grad};
use super::tensor::{gemm, ParamSet, Tensor};
use crate::embeddings::TokenMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BiLstm {
    prefix: String,
    input_dim: usize,
    hidden: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Direction {
    Forward,
    Backward,
}

impl Direction {
    fn tag(self) -> &'static str {
        match self {
            Direction::Forward => "fwd",
            Direction::Backward => "bwd",
        }
    }
}

const DIRECTIONS: [Direction; 2] = [Direction::Forward, Direction::Backward];

struct DirectionCache {
    /// Time index processed at each step.
    order: Vec<usize>,
    /// Post-activation gates per step, `B × 4H`.
    gates: Vec<f64>,
    /// Hidden and cell states before each step, plus the final ones.
    hs: Vec<f64>,
    cs: Vec<f64>,
    /// `tanh(c_new)` per step.
    tanh_c: Vec<f64>,
}

/// Activations kept from the forward pass.
pub struct LstmCache {
    batch: usize,
    steps: usize,
    /// Time-major inputs, `(T·B) × D`.
    inputs: Vec<f64>,
    /// Time-major masks, `T × B`.
    mask: Vec<u8>,
    seq_lens: Vec<usize>,
    dirs: Vec<DirectionCache>,
}

impl BiLstm {
    pub fn new(prefix: impl Into<String>, input_dim: usize, hidden: usize) -> Self {
        BiLstm {
            prefix: prefix.into(),
            input_dim,
            hidden,
        }
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn name(&self, dir: Direction, part: &str) -> String {
        format!("{}.{}.{}", self.prefix, dir.tag(), part)
    }

    pub fn param_names(&self) -> Vec<String> {
        DIRECTIONS
            .iter()
            .flat_map(|&d| ["w_input", "w_hidden", "bias"].map(|p| self.name(d, p)))
            .collect()
    }

    /// Glorot-uniform weights, zero biases with the forget gate at +1.
    pub fn init<R: Rng>(&self, params: &mut ParamSet, rng: &mut R) {
        let (d, h) = (self.input_dim, self.hidden);
        for dir in DIRECTIONS {
            params.insert(
                self.name(dir, "w_input"),
                Tensor::glorot_uniform(&[d, 4 * h], d, 4 * h, rng),
            );
            params.insert(
                self.name(dir, "w_hidden"),
                Tensor::glorot_uniform(&[h, 4 * h], h, 4 * h, rng),
            );
            let mut bias = Tensor::zeros(&[4 * h]);
            bias.data_mut()[h..2 * h].iter_mut().for_each(|b| *b = 1.0);
            params.insert(self.name(dir, "bias"), bias);
        }
    }

    fn check_params(&self, params: &ParamSet) -> Result<()> {
        let (d, h) = (self.input_dim, self.hidden);
        for dir in DIRECTIONS {
            for (part, shape) in [
                ("w_input", vec![d, 4 * h]),
                ("w_hidden", vec![h, 4 * h]),
                ("bias", vec![4 * h]),
            ] {
                let name = self.name(dir, part);
                let t = params
                    .try_get(&name)
                    .ok_or_else(|| Error::Validation(format!("missing parameter {name}")))?;
                if t.shape() != shape.as_slice() {
                    return Err(Error::shape("bilstm params", &shape, t.shape()));
                }
            }
        }
        Ok(())
    }

    /// Reduce a batch of sequences to `B × H` sentence embeddings.
    pub fn forward(&self, params: &ParamSet, seqs: &[&TokenMatrix]) -> Result<(Tensor, LstmCache)> {
        self.check_params(params)?;
        let (d, h) = (self.input_dim, self.hidden);
        let batch = seqs.len();
        for s in seqs {
            if s.dim() != d {
                return Err(Error::shape("bilstm input", &[d], &[s.dim()]));
            }
        }
        let steps = seqs.iter().map(|s| s.effective_len()).max().unwrap_or(0);

        let mut inputs = vec![0.0; steps * batch * d];
        let mut mask = vec![0u8; steps * batch];
        for (b, s) in seqs.iter().enumerate() {
            for t in 0..s.effective_len() {
                let dst = (t * batch + b) * d;
                inputs[dst..dst + d].copy_from_slice(s.rows.row(t));
                mask[t * batch + b] = s.mask[t];
            }
        }

        let mut output = Tensor::zeros(&[batch, h]);
        let mut dirs = Vec::with_capacity(2);
        for dir in DIRECTIONS {
            let cache = self.run_direction(params, dir, &inputs, &mask, batch, steps);
            let final_h = &cache.hs[steps * batch * h..];
            for (o, v) in output.data_mut().iter_mut().zip(final_h) {
                *o += v;
            }
            dirs.push(cache);
        }

        Ok((
            output,
            LstmCache {
                batch,
                steps,
                inputs,
                mask,
                seq_lens: seqs.iter().map(|s| s.len()).collect(),
                dirs,
            },
        ))
    }

    fn run_direction(
        &self,
        params: &ParamSet,
        dir: Direction,
        inputs: &[f64],
        mask: &[u8],
        batch: usize,
        steps: usize,
    ) -> DirectionCache {
        let (d, h) = (self.input_dim, self.hidden);
        let g4 = 4 * h;
        let w_in = params.get(&self.name(dir, "w_input"));
        let w_hid = params.get(&self.name(dir, "w_hidden"));
        let bias = params.get(&self.name(dir, "bias"));

        let mut projected = vec![0.0; steps * batch * g4];
        for row in projected.chunks_exact_mut(g4) {
            row.copy_from_slice(bias.data());
        }
        gemm(steps * batch, d, g4, inputs, false, w_in.data(), false, 1.0, &mut projected);

        let order: Vec<usize> = match dir {
            Direction::Forward => (0..steps).collect(),
            Direction::Backward => (0..steps).rev().collect(),
        };
        let bh = batch * h;
        let mut gates = vec![0.0; steps * batch * g4];
        let mut hs = vec![0.0; (steps + 1) * bh];
        let mut cs = vec![0.0; (steps + 1) * bh];
        let mut tanh_c = vec![0.0; steps * bh];
        let mut pre = vec![0.0; batch * g4];

        for (s, &t) in order.iter().enumerate() {
            pre.copy_from_slice(&projected[t * batch * g4..(t + 1) * batch * g4]);
            let (h_before, h_after) = hs.split_at_mut((s + 1) * bh);
            let h_prev = &h_before[s * bh..];
            gemm(batch, h, g4, h_prev, false, w_hid.data(), false, 1.0, &mut pre);
            let (c_before, c_after) = cs.split_at_mut((s + 1) * bh);
            let c_prev = &c_before[s * bh..];
            let h_next = &mut h_after[..bh];
            let c_next = &mut c_after[..bh];

            for b in 0..batch {
                let hr = b * h..(b + 1) * h;
                if mask[t * batch + b] == 0 {
                    h_next[hr.clone()].copy_from_slice(&h_prev[hr.clone()]);
                    c_next[hr.clone()].copy_from_slice(&c_prev[hr]);
                    continue;
                }
                let z = &pre[b * g4..(b + 1) * g4];
                let act = &mut gates[(s * batch + b) * g4..(s * batch + b + 1) * g4];
                for j in 0..h {
                    let i_g = sigmoid(z[j]);
                    let f_g = sigmoid(z[h + j]);
                    let c_g = z[2 * h + j].tanh();
                    let o_g = sigmoid(z[3 * h + j]);
                    act[j] = i_g;
                    act[h + j] = f_g;
                    act[2 * h + j] = c_g;
                    act[3 * h + j] = o_g;
                    let c = f_g * c_prev[b * h + j] + i_g * c_g;
                    let tc = c.tanh();
                    c_next[b * h + j] = c;
                    tanh_c[s * bh + b * h + j] = tc;
                    h_next[b * h + j] = o_g * tc;
                }
            }
        }

        DirectionCache {
            order,
            gates,
            hs,
            cs,
            tanh_c,
        }
    }

    /// Accumulate parameter gradients into `grads` given `grad_out (B × H)`.
    /// When `want_input_grad` is set, also return per-sequence input
    /// gradients shaped like the inputs (`L × D`).
    pub fn backward(
        &self,
        params: &ParamSet,
        cache: &LstmCache,
        grad_out: &Tensor,
        grads: &mut ParamSet,
        want_input_grad: bool,
    ) -> Result<Option<Vec<Tensor>>> {
        let (d, h) = (self.input_dim, self.hidden);
        let (batch, steps) = (cache.batch, cache.steps);
        if grad_out.rows() != batch || grad_out.cols() != h {
            return Err(Error::shape("bilstm backward", &[batch, h], grad_out.shape()));
        }
        let g4 = 4 * h;
        let bh = batch * h;
        let mut input_grad = if want_input_grad {
            Some(vec![0.0; steps * batch * d])
        } else {
            None
        };

        for (dir, dc_cache) in DIRECTIONS.iter().zip(&cache.dirs) {
            let w_in = params.get(&self.name(*dir, "w_input"));
            let w_hid = params.get(&self.name(*dir, "w_hidden"));

            let mut d_pre_all = vec![0.0; steps * batch * g4];
            let mut dw_hid = vec![0.0; h * g4];
            let mut dh = grad_out.data().to_vec();
            let mut dc = vec![0.0; bh];
            let mut d_pre = vec![0.0; batch * g4];
            let mut dh_prev = vec![0.0; bh];

            for s in (0..steps).rev() {
                let t = dc_cache.order[s];
                d_pre.iter_mut().for_each(|x| *x = 0.0);
                let c_prev = &dc_cache.cs[s * bh..(s + 1) * bh];
                for b in 0..batch {
                    if cache.mask[t * batch + b] == 0 {
                        continue;
                    }
                    let act = &dc_cache.gates[(s * batch + b) * g4..(s * batch + b + 1) * g4];
                    let dz = &mut d_pre[b * g4..(b + 1) * g4];
                    for j in 0..h {
                        let k = b * h + j;
                        let (i_g, f_g, c_g, o_g) = (act[j], act[h + j], act[2 * h + j], act[3 * h + j]);
                        let tc = dc_cache.tanh_c[s * bh + k];
                        let d_o = dh[k] * tc;
                        let dc_total = dc[k] + dh[k] * o_g * tanh_grad(tc);
                        dz[j] = dc_total * c_g * sigmoid_grad(i_g);
                        dz[h + j] = dc_total * c_prev[k] * sigmoid_grad(f_g);
                        dz[2 * h + j] = dc_total * i_g * tanh_grad(c_g);
                        dz[3 * h + j] = d_o * sigmoid_grad(o_g);
                        dc[k] = dc_total * f_g;
                    }
                }
                let h_prev = &dc_cache.hs[s * bh..(s + 1) * bh];
                gemm(h, batch, g4, h_prev, true, &d_pre, false, 1.0, &mut dw_hid);
                gemm(batch, g4, h, &d_pre, false, w_hid.data(), true, 0.0, &mut dh_prev);
                for b in 0..batch {
                    if cache.mask[t * batch + b] == 1 {
                        dh[b * h..(b + 1) * h].copy_from_slice(&dh_prev[b * h..(b + 1) * h]);
                    }
                }
                d_pre_all[t * batch * g4..(t + 1) * batch * g4].copy_from_slice(&d_pre);
            }

            let gw_in = grads.get_mut(&self.name(*dir, "w_input"));
            gemm(d, steps * batch, g4, &cache.inputs, true, &d_pre_all, false, 1.0, gw_in.data_mut());
            let gw_hid = grads.get_mut(&self.name(*dir, "w_hidden"));
            for (a, v) in gw_hid.data_mut().iter_mut().zip(&dw_hid) {
                *a += v;
            }
            let gb = grads.get_mut(&self.name(*dir, "bias"));
            for row in d_pre_all.chunks_exact(g4) {
                for (a, v) in gb.data_mut().iter_mut().zip(row) {
                    *a += v;
                }
            }
            if let Some(dx) = input_grad.as_mut() {
                gemm(steps * batch, g4, d, &d_pre_all, false, w_in.data(), true, 1.0, dx);
            }
        }

        Ok(input_grad.map(|dx| {
            cache
                .seq_lens
                .iter()
                .enumerate()
                .map(|(b, &len)| {
                    let mut g = Tensor::zeros(&[len, d]);
                    for t in 0..steps.min(len) {
                        let src = (t * batch + b) * d;
                        g.row_mut(t).copy_from_slice(&dx[src..src + d]);
                    }
                    g
                })
                .collect()
        }))
    }
}
