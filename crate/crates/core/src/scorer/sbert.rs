//! Heads over precomputed sentence embeddings. Both inputs pass through one
//! shared linear projection (identity at initialisation); the regression
//! head is the cosine of the projected pair and the classification head is
//! a softmax over a linear map of `[u; v; |u − v|]`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::neural::ops::{ce_softmax, mse, softmax};
use crate::neural::{gemm, ParamSet, Tensor};

pub(crate) const PROJ_W: &str = "proj.w";
pub(crate) const CLS_W: &str = "cls.w";
pub(crate) const CLS_B: &str = "cls.b";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct SbertNet {
    pub dim: usize,
    pub regression: bool,
    pub classification: bool,
}

/// Outputs of both heads for one pair; a head the variant lacks reports
/// zeros.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SbertOutput {
    pub reg: f64,
    pub cls: [f64; 2],
}

/// Cosine similarity with its gradients; zero-norm inputs give 0.
fn cosine(a: &[f64], b: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        log::warn!("cosine of a zero-norm vector defined as 0");
        return (0.0, vec![0.0; a.len()], vec![0.0; b.len()]);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let cos = dot / (na * nb);
    let ga = a
        .iter()
        .zip(b)
        .map(|(x, y)| y / (na * nb) - cos * x / (na * na))
        .collect();
    let gb = a
        .iter()
        .zip(b)
        .map(|(x, y)| x / (na * nb) - cos * y / (nb * nb))
        .collect();
    (cos, ga, gb)
}

pub(crate) struct PairLoss {
    pub loss: f64,
}

impl SbertNet {
    pub fn init<R: Rng>(&self, params: &mut ParamSet, rng: &mut R) {
        let d = self.dim;
        params.insert(PROJ_W, Tensor::identity(d));
        if self.classification {
            params.insert(CLS_W, Tensor::glorot_uniform(&[3 * d, 2], 3 * d, 2, rng));
            params.insert(CLS_B, Tensor::zeros(&[2]));
        }
    }

    fn project(&self, params: &ParamSet, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        gemm(1, self.dim, self.dim, x, false, params.get(PROJ_W).data(), false, 0.0, &mut out);
        out
    }

    fn check(&self, u: &[f64], v: &[f64]) -> Result<()> {
        if u.len() != self.dim || v.len() != self.dim {
            return Err(Error::shape("sbert input", &[u.len()], &[v.len()]));
        }
        Ok(())
    }

    fn logits(&self, params: &ParamSet, features: &[f64]) -> [f64; 2] {
        let mut z = [0.0; 2];
        z.copy_from_slice(params.get(CLS_B).data());
        gemm(1, 3 * self.dim, 2, features, false, params.get(CLS_W).data(), false, 1.0, &mut z);
        z
    }

    fn features(pu: &[f64], pv: &[f64]) -> Vec<f64> {
        let mut f = Vec::with_capacity(3 * pu.len());
        f.extend_from_slice(pu);
        f.extend_from_slice(pv);
        f.extend(pu.iter().zip(pv).map(|(a, b)| (a - b).abs()));
        f
    }

    pub fn forward(&self, params: &ParamSet, u: &[f64], v: &[f64]) -> Result<SbertOutput> {
        self.check(u, v)?;
        let pu = self.project(params, u);
        let pv = self.project(params, v);
        let reg = if self.regression { cosine(&pu, &pv).0 } else { 0.0 };
        let cls = if self.classification {
            let p = softmax(&self.logits(params, &Self::features(&pu, &pv)));
            [p[0], p[1]]
        } else {
            [0.0; 2]
        };
        Ok(SbertOutput { reg, cls })
    }

    /// Loss of one pair against a {0,1} label (regression MSE to the label,
    /// classification cross-entropy, or their sum), accumulating
    /// `scale × ∂loss/∂θ` into `grads`.
    pub fn loss_and_grad(
        &self,
        params: &ParamSet,
        u: &[f64],
        v: &[f64],
        label: u8,
        scale: f64,
        grads: &mut ParamSet,
    ) -> Result<PairLoss> {
        self.check(u, v)?;
        let d = self.dim;
        let pu = self.project(params, u);
        let pv = self.project(params, v);
        let mut d_pu = vec![0.0; d];
        let mut d_pv = vec![0.0; d];
        let mut loss = 0.0;

        if self.regression {
            let (cos, ga, gb) = cosine(&pu, &pv);
            let (l, dl) = mse(cos, f64::from(label));
            loss += l;
            for j in 0..d {
                d_pu[j] += dl * ga[j];
                d_pv[j] += dl * gb[j];
            }
        }
        if self.classification {
            let feats = Self::features(&pu, &pv);
            let z = self.logits(params, &feats);
            let (l, dz) = ce_softmax(&z, usize::from(label));
            loss += l;

            let gw = grads.get_mut(CLS_W).data_mut();
            for (k, f) in feats.iter().enumerate() {
                gw[2 * k] += scale * f * dz[0];
                gw[2 * k + 1] += scale * f * dz[1];
            }
            let gb = grads.get_mut(CLS_B).data_mut();
            gb[0] += scale * dz[0];
            gb[1] += scale * dz[1];

            let w = params.get(CLS_W).data();
            for j in 0..d {
                let back = |k: usize| w[2 * k] * dz[0] + w[2 * k + 1] * dz[1];
                let diff = pu[j] - pv[j];
                let sign = if diff > 0.0 {
                    1.0
                } else if diff < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                let d_abs = back(2 * d + j);
                d_pu[j] += back(j) + sign * d_abs;
                d_pv[j] += back(d + j) - sign * d_abs;
            }
        }

        // proj.w gradient: uᵀ d_pu + vᵀ d_pv (outer products).
        let gp = grads.get_mut(PROJ_W).data_mut();
        for i in 0..d {
            for j in 0..d {
                gp[i * d + j] += scale * (u[i] * d_pu[j] + v[i] * d_pv[j]);
            }
        }
        Ok(PairLoss { loss })
    }
}
