//! Mutual-information contrast of the separating chain and its gradients.
//!
//! `C(g, W) = sum_i H(y_i) - ln|det W| - (1/T) sum_t sum_i ln g_i'(x_i[t])`
//! with `H` the m-spacing entropy estimate. The entropy of the observations
//! is parameter-free and omitted, so totals compare only within a data set.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::entropy::{vasicek_entropy, vasicek_entropy_with_scores};
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{compensate, unmix, MixingMatrix, Role, Separator, SignalBlock, MIN_ABS_DET};

/// Contrast value in nats with its three terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContrastValue {
    pub total: f64,
    pub marginal_entropy_sum: f64,
    pub log_det_w: f64,
    pub log_deriv_mean: f64,
}

impl ContrastValue {
    pub fn from_terms(marginal_entropy_sum: f64, log_det_w: f64, log_deriv_mean: f64) -> Self {
        ContrastValue {
            total: marginal_entropy_sum - log_det_w - log_deriv_mean,
            marginal_entropy_sum,
            log_det_w,
            log_deriv_mean,
        }
    }
}

/// Gradient of the contrast with respect to `W` and to the parameters of
/// every compensator.
#[derive(Clone, Debug, PartialEq)]
pub struct ContrastGradient {
    pub w: Array2<f64>,
    pub g: Vec<Vec<f64>>,
}

/// Intermediate signals of one pass through the separator.
pub(crate) struct Pass {
    pub compensated: SignalBlock,
    pub outputs: SignalBlock,
    pub log_det_w: f64,
    pub log_deriv_mean: f64,
}

pub(crate) fn check_inputs(sep: &Separator, x: &SignalBlock) -> Result<()> {
    x.expect_role(Role::Observation)?;
    if sep.dim() != x.channels() {
        return Err(Error::DimensionMismatch(format!(
            "separator has {} channels, observations have {}",
            sep.dim(),
            x.channels()
        )));
    }
    Ok(())
}

pub(crate) fn run_pass(sep: &Separator, x: &SignalBlock) -> Result<Pass> {
    check_inputs(sep, x)?;
    let det = sep.unmixing().determinant();
    if !(det.abs() >= MIN_ABS_DET) {
        return Err(Error::SingularUnmixing(det.abs()));
    }
    let compensated = compensate(sep.compensators(), x)?;
    let mut log_deriv_sum = 0.0;
    for (i, g) in sep.compensators().iter().enumerate() {
        if g.is_identity() {
            continue;
        }
        for &xi in x.channel_slice(i) {
            let d = g.deriv_unchecked(xi);
            if !(d > 0.0) {
                return Err(Error::MonotonicityViolation {
                    channel: i,
                    x: xi,
                    derivative: d,
                });
            }
            log_deriv_sum += d.ln();
        }
    }
    let outputs = unmix(sep.unmixing(), &compensated)?;
    Ok(Pass {
        compensated,
        outputs,
        log_det_w: det.abs().ln(),
        log_deriv_mean: log_deriv_sum / x.samples() as f64,
    })
}

fn finish(outputs: &SignalBlock, log_det_w: f64, log_deriv_mean: f64) -> Result<ContrastValue> {
    let mut h = 0.0;
    for i in 0..outputs.channels() {
        h += vasicek_entropy(outputs.channel_slice(i))?;
    }
    Ok(ContrastValue::from_terms(h, log_det_w, log_deriv_mean))
}

pub fn contrast(sep: &Separator, x: &SignalBlock) -> Result<ContrastValue> {
    let pass = run_pass(sep, x)?;
    finish(&pass.outputs, pass.log_det_w, pass.log_deriv_mean)
}

/// Contrast of the separator `(g, w)` where `pass` was computed for a
/// separator with the same compensators `g`. Gives the same value as
/// [`contrast`] without re-evaluating the compensators.
pub(crate) fn contrast_with_unmixing(pass: &Pass, w: &MixingMatrix) -> Result<ContrastValue> {
    let det = w.determinant();
    if !(det.abs() >= MIN_ABS_DET) {
        return Err(Error::SingularUnmixing(det.abs()));
    }
    let outputs = unmix(w, &pass.compensated)?;
    finish(&outputs, det.abs().ln(), pass.log_deriv_mean)
}

/// Per-channel scores implied by the spacing entropy estimate,
/// `T * dH(y_k)/dy_k[t]`. Used with [`g_param_gradient`] they give the exact
/// gradient of [`contrast`].
pub fn entropy_scores(outputs: &SignalBlock) -> Result<Vec<Vec<f64>>> {
    (0..outputs.channels())
        .map(|k| Ok(vasicek_entropy_with_scores(outputs.channel_slice(k))?.1))
        .collect()
}

/// Gradient of the contrast with respect to compensator parameters, given
/// output scores `psi_k(y_k[t])`:
/// `(1/T) sum_t [ sum_k psi_k W[k,i] dg_i/dtheta - (dg_i'/dtheta) / g_i' ]`.
pub fn g_param_gradient(
    sep: &Separator,
    x: &SignalBlock,
    scores: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    check_inputs(sep, x)?;
    let (n, t) = (x.channels(), x.samples());
    if scores.len() != n || scores.iter().any(|s| s.len() != t) {
        return Err(Error::DimensionMismatch(format!(
            "expected {n} score vectors of length {t}"
        )));
    }
    let w = sep.unmixing().entries();
    let inv_t = 1.0 / t as f64;
    let mut grads = Vec::with_capacity(n);
    for (i, g) in sep.compensators().iter().enumerate() {
        let mut grad = vec![0.0; g.params().len()];
        if !grad.is_empty() {
            let xs = x.channel_slice(i);
            for (tt, &xi) in xs.iter().enumerate() {
                let back: f64 = (0..n).map(|k| scores[k][tt] * w[[k, i]]).sum();
                let d = g.deriv_unchecked(xi);
                g.accumulate_param_grads(xi, back * inv_t, -inv_t / d, &mut grad);
            }
        }
        grads.push(grad);
    }
    Ok(grads)
}

/// Exact gradient of [`contrast`]: `dC/dW = (1/T) Psi E^T - W^-T` with the
/// spacing-estimator scores `Psi`, and the compensator gradients from
/// [`g_param_gradient`].
pub fn contrast_gradient(
    sep: &Separator,
    x: &SignalBlock,
) -> Result<(ContrastValue, ContrastGradient)> {
    let pass = run_pass(sep, x)?;
    let n = pass.outputs.channels();
    let mut h = 0.0;
    let mut scores = Vec::with_capacity(n);
    for k in 0..n {
        let (hk, sk) = vasicek_entropy_with_scores(pass.outputs.channel_slice(k))?;
        h += hk;
        scores.push(sk);
    }
    let t = x.samples() as f64;
    let psi = Array2::from_shape_fn((n, x.samples()), |(k, tt)| scores[k][tt]);
    let w_inv = linalg::inverse(sep.unmixing().entries())
        .ok_or_else(|| Error::SingularUnmixing(sep.unmixing().determinant().abs()))?;
    let w_grad = psi.dot(&pass.compensated.data().t()) / t - w_inv.t();
    let g_grad = g_param_gradient(sep, x, &scores)?;
    Ok((
        ContrastValue::from_terms(h, pass.log_det_w, pass.log_deriv_mean),
        ContrastGradient {
            w: w_grad,
            g: g_grad,
        },
    ))
}
