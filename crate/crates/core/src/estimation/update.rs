//! Single descent steps on the unmixing matrix and on the compensators.

use ndarray::{Array2, Axis};

use super::contrast::{check_inputs, g_param_gradient};
use crate::error::{Error, Result};
use crate::model::{MixingMatrix, Role, Separator, SignalBlock};
use crate::nonlinearity::{project_increasing, Family, Nonlinearity};

/// Slope floor enforced on trained piecewise-linear compensators.
pub const MIN_TRAIN_SLOPE: f64 = 1e-6;

const MIN_TANH_SCALE: f64 = 1e-6;
// Lower bound on the per-knot sample mass used to precondition pwl steps.
const MIN_KNOT_MASS: f64 = 1e-3;
const NORMALIZE_ROUNDS: usize = 8;

/// `M = (1/T) psi(Y) (Y - mean)^T`, the empirical score/output moment.
fn score_moment(y: &SignalBlock, scores: &[Vec<f64>]) -> Result<Array2<f64>> {
    let (n, t) = (y.channels(), y.samples());
    if scores.len() != n || scores.iter().any(|s| s.len() != t) {
        return Err(Error::DimensionMismatch(format!(
            "expected {n} score vectors of length {t}"
        )));
    }
    let psi = Array2::from_shape_fn((n, t), |(k, j)| scores[k][j]);
    let mean = y.data().mean_axis(Axis(1)).expect("non-empty block");
    let centered = y.data() - &mean.insert_axis(Axis(1));
    Ok(psi.dot(&centered.t()) / t as f64)
}

/// Relative-gradient direction `(I - M) W`.
pub fn natural_direction(
    w: &MixingMatrix,
    y: &SignalBlock,
    scores: &[Vec<f64>],
) -> Result<Array2<f64>> {
    y.expect_role(Role::Output)?;
    if y.channels() != w.dim() {
        return Err(Error::DimensionMismatch(format!(
            "unmixing matrix is {0}x{0} but outputs have {1} channels",
            w.dim(),
            y.channels()
        )));
    }
    let m = score_moment(y, scores)?;
    let relative = Array2::<f64>::eye(w.dim()) - m;
    Ok(relative.dot(w.entries()))
}

/// `W + step (I - M) W`; the step is halved up to `halvings` times while the
/// result is singular.
pub fn w_update(
    w: &MixingMatrix,
    y: &SignalBlock,
    scores: &[Vec<f64>],
    step: f64,
    halvings: usize,
) -> Result<MixingMatrix> {
    let direction = natural_direction(w, y, scores)?;
    let mut s = step;
    for _ in 0..=halvings {
        if let Ok(next) = MixingMatrix::new(w.entries() + &(&direction * s)) {
            return Ok(next);
        }
        s *= 0.5;
    }
    Err(Error::StepFailure(halvings))
}

fn project(g: &Nonlinearity, params: &mut [f64], min_slope: f64) {
    match g.family() {
        Family::MonotonePwl { knots, .. } => project_increasing(knots, params, min_slope),
        Family::Cubic { .. } => params[0] = params[0].max(0.0),
        Family::ScaledTanh { .. } => params[0] = params[0].max(MIN_TANH_SCALE),
        _ => {}
    }
}

fn is_pwl(g: &Nonlinearity) -> bool {
    matches!(g.family(), Family::MonotonePwl { .. })
}

/// Rescales every piecewise-linear compensator so its output has zero mean
/// and unit variance on `x`, moving the scale into the matching column of
/// `W`. The offset only shifts the outputs and is dropped.
pub fn normalize_compensators(sep: &Separator, x: &SignalBlock) -> Result<Separator> {
    check_inputs(sep, x)?;
    let mut gs = sep.compensators().to_vec();
    let mut w = sep.unmixing().entries().clone();
    for round in 0..NORMALIZE_ROUNDS {
        for (i, g) in gs.iter_mut().enumerate() {
            if !is_pwl(g) {
                continue;
            }
            let xs = x.channel_slice(i);
            let t = xs.len() as f64;
            let e: Vec<f64> = xs.iter().map(|&v| g.eval_unchecked(v)).collect();
            let mean = e.iter().sum::<f64>() / t;
            let var = e.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / t;
            if !(var > 0.0) {
                return Err(Error::DegenerateData(format!(
                    "compensated channel {i} has zero variance"
                )));
            }
            let sd = var.sqrt();
            *g = g.affine(1.0 / sd, -mean / sd)?;
            w.column_mut(i).mapv_inplace(|v| v * sd);
        }
        let floor_ok = gs
            .iter()
            .all(|g| g.slopes().iter().all(|&s| s >= MIN_TRAIN_SLOPE));
        if floor_ok || round + 1 == NORMALIZE_ROUNDS {
            break;
        }
        // re-project with headroom so the next rescaling stays above the floor
        for g in gs.iter_mut().filter(|g| is_pwl(g)) {
            let mut p = g.params();
            project(g, &mut p, 2.0 * MIN_TRAIN_SLOPE);
            *g = g.with_params(&p)?;
        }
    }
    Separator::new(gs, MixingMatrix::new(w)?)
}

/// Fraction of samples carried by each knot's hat function, floored at
/// `MIN_KNOT_MASS`; all ones for non-pwl families.
fn knot_mass(g: &Nonlinearity, xs: &[f64]) -> Vec<f64> {
    let mut mass = vec![0.0; g.params().len()];
    if !is_pwl(g) {
        mass.fill(1.0);
        return mass;
    }
    let w = 1.0 / xs.len() as f64;
    for &v in xs {
        g.accumulate_param_grads(v, w, 0.0, &mut mass);
    }
    mass.iter_mut().for_each(|m| *m = m.max(MIN_KNOT_MASS));
    mass
}

/// One projected descent step on every compensator's parameters, followed
/// by [`normalize_compensators`]. Piecewise-linear gradients are divided by
/// the sample mass of each knot so sparsely populated knots move at a
/// comparable rate. Compensators without parameters are left untouched.
pub fn g_update(
    sep: &Separator,
    x: &SignalBlock,
    scores: &[Vec<f64>],
    step: f64,
) -> Result<Separator> {
    let grads = g_param_gradient(sep, x, scores)?;
    let mut gs = Vec::with_capacity(sep.dim());
    for (i, (g, grad)) in sep.compensators().iter().zip(&grads).enumerate() {
        if grad.is_empty() {
            gs.push(g.clone());
            continue;
        }
        let mass = knot_mass(g, x.channel_slice(i));
        let mut p: Vec<f64> = g
            .params()
            .iter()
            .zip(grad)
            .zip(&mass)
            .map(|((v, d), m)| v - step * d / m)
            .collect();
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::StepFailure(0));
        }
        project(g, &mut p, MIN_TRAIN_SLOPE);
        gs.push(g.with_params(&p)?);
    }
    normalize_compensators(&Separator::new(gs, sep.unmixing().clone())?, x)
}
