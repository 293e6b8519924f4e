//! Central finite differences, used as the oracle for every analytic
//! gradient in this crate.

use super::tensor::{ParamSet, Tensor};

pub const FD_STEP: f64 = 1e-5;

/// Numerical gradient of `f` w.r.t. every entry of `at`.
pub fn central_difference(at: &Tensor, mut f: impl FnMut(&Tensor) -> f64) -> Vec<f64> {
    let mut probe = at.clone();
    (0..at.len())
        .map(|i| {
            let orig = probe.data()[i];
            probe.data_mut()[i] = orig + FD_STEP;
            let up = f(&probe);
            probe.data_mut()[i] = orig - FD_STEP;
            let down = f(&probe);
            probe.data_mut()[i] = orig;
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

/// Numerical gradient of `f` w.r.t. every tensor of a parameter set.
pub fn param_difference(params: &ParamSet, mut f: impl FnMut(&ParamSet) -> f64) -> ParamSet {
    let mut probe = params.clone();
    let mut out = params.zeros_like();
    let names: Vec<String> = params.names().map(str::to_string).collect();
    for name in names {
        for i in 0..params.get(&name).len() {
            let orig = probe.get(&name).data()[i];
            probe.get_mut(&name).data_mut()[i] = orig + FD_STEP;
            let up = f(&probe);
            probe.get_mut(&name).data_mut()[i] = orig - FD_STEP;
            let down = f(&probe);
            probe.get_mut(&name).data_mut()[i] = orig;
            out.get_mut(&name).data_mut()[i] = (up - down) / (2.0 * FD_STEP);
        }
    }
    out
}

/// `‖a − b‖ / max(‖a‖ + ‖b‖, 1e-8)`.
pub fn rel_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / (na + nb).max(1e-8)
}

/// Relative error over all tensors of two parameter sets with equal layout.
pub fn param_rel_error(a: &ParamSet, b: &ParamSet) -> f64 {
    let flat = |p: &ParamSet| -> Vec<f64> { p.iter().flat_map(|(_, t)| t.data().to_vec()).collect() };
    rel_error(&flat(a), &flat(b))
}
