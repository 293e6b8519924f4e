//! Actor-critic network: two tanh layers shared by a two-way policy head
//! and a scalar value head.

use rand::Rng;

use crate::error::{Error, Result};
use crate::neural::ops::{log_softmax, map, softmax, tanh, tanh_grad};
use crate::neural::{dense, dense_backward, ParamSet, Tensor};

pub const L1_W: &str = "pv.l1.w";
pub const L1_B: &str = "pv.l1.b";
pub const L2_W: &str = "pv.l2.w";
pub const L2_B: &str = "pv.l2.b";
pub const PI_W: &str = "pv.pi.w";
pub const PI_B: &str = "pv.pi.b";
pub const V_W: &str = "pv.v.w";
pub const V_B: &str = "pv.v.b";

/// Default hidden width of both layers.
pub const DEFAULT_HIDDEN: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PolicyNet {
    pub state_dim: usize,
    pub hidden: usize,
}

/// Forward activations for a batch of states.
pub struct PolicyCache {
    input: Tensor,
    h1: Tensor,
    h2: Tensor,
    /// B×2 logits.
    pub logits: Tensor,
    pub values: Vec<f64>,
}

impl PolicyCache {
    pub fn probs(&self, row: usize) -> [f64; 2] {
        let p = softmax(self.logits.row(row));
        [p[0], p[1]]
    }

    pub fn log_probs(&self, row: usize) -> [f64; 2] {
        let p = log_softmax(self.logits.row(row));
        [p[0], p[1]]
    }
}

impl PolicyNet {
    pub fn new(state_dim: usize, hidden: usize) -> Self {
        PolicyNet { state_dim, hidden }
    }

    /// Glorot layers; the policy head is scaled down so the initial policy
    /// is close to uniform.
    pub fn init<R: Rng>(&self, params: &mut ParamSet, rng: &mut R) {
        let (s, h) = (self.state_dim, self.hidden);
        params.insert(L1_W, Tensor::glorot_uniform(&[s, h], s, h, rng));
        params.insert(L1_B, Tensor::zeros(&[h]));
        params.insert(L2_W, Tensor::glorot_uniform(&[h, h], h, h, rng));
        params.insert(L2_B, Tensor::zeros(&[h]));
        let mut pi = Tensor::glorot_uniform(&[h, 2], h, 2, rng);
        pi.scale(0.01);
        params.insert(PI_W, pi);
        params.insert(PI_B, Tensor::zeros(&[2]));
        params.insert(V_W, Tensor::glorot_uniform(&[h, 1], h, 1, rng));
        params.insert(V_B, Tensor::zeros(&[1]));
    }

    pub fn init_params(&self, seed: u64) -> ParamSet {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new(seed);
        self.init(&mut params, &mut rng);
        params
    }

    /// `states` is B×state_dim.
    pub fn forward(&self, params: &ParamSet, states: &Tensor) -> Result<PolicyCache> {
        if states.shape().len() != 2 || states.cols() != self.state_dim {
            return Err(Error::shape("policy input", &[self.state_dim], states.shape()));
        }
        let h1 = map(&dense(states, params.get(L1_W), params.get(L1_B))?, tanh);
        let h2 = map(&dense(&h1, params.get(L2_W), params.get(L2_B))?, tanh);
        let logits = dense(&h2, params.get(PI_W), params.get(PI_B))?;
        let values = dense(&h2, params.get(V_W), params.get(V_B))?.into_data();
        Ok(PolicyCache {
            input: states.clone(),
            h1,
            h2,
            logits,
            values,
        })
    }

    /// Action probabilities and value of a single state.
    pub fn policy_value(&self, params: &ParamSet, state: &[f64]) -> Result<([f64; 2], f64)> {
        let input = Tensor::from_vec(&[1, state.len()], state.to_vec())?;
        let cache = self.forward(params, &input)?;
        Ok((cache.probs(0), cache.values[0]))
    }

    /// Accumulate parameter gradients given upstream gradients on the
    /// logits (B×2) and values (B).
    pub fn backward(
        &self,
        params: &ParamSet,
        cache: &PolicyCache,
        d_logits: &Tensor,
        d_values: &[f64],
        grads: &mut ParamSet,
    ) -> Result<()> {
        let b = cache.values.len();
        let gp = dense_backward(&cache.h2, params.get(PI_W), d_logits)?;
        let dv = Tensor::from_vec(&[b, 1], d_values.to_vec())?;
        let gv = dense_backward(&cache.h2, params.get(V_W), &dv)?;
        grads.get_mut(PI_W).add_assign(&gp.weights)?;
        grads.get_mut(PI_B).add_assign(&gp.bias)?;
        grads.get_mut(V_W).add_assign(&gv.weights)?;
        grads.get_mut(V_B).add_assign(&gv.bias)?;

        let mut d_h2 = gp.input;
        d_h2.add_assign(&gv.input)?;
        for (g, &y) in d_h2.data_mut().iter_mut().zip(cache.h2.data()) {
            *g *= tanh_grad(y);
        }
        let g2 = dense_backward(&cache.h1, params.get(L2_W), &d_h2)?;
        grads.get_mut(L2_W).add_assign(&g2.weights)?;
        grads.get_mut(L2_B).add_assign(&g2.bias)?;

        let mut d_h1 = g2.input;
        for (g, &y) in d_h1.data_mut().iter_mut().zip(cache.h1.data()) {
            *g *= tanh_grad(y);
        }
        let g1 = dense_backward(&cache.input, params.get(L1_W), &d_h1)?;
        grads.get_mut(L1_W).add_assign(&g1.weights)?;
        grads.get_mut(L1_B).add_assign(&g1.bias)?;
        Ok(())
    }
}
