//! Central finite differences for checking analytic gradients.
//!
//! The spacing entropy is only piecewise smooth: it has kinks where two
//! output samples swap rank. Contrast differences therefore shrink the step
//! until the ranks of every output channel are the same at both evaluation
//! points as at the base point.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::estimation::contrast;
use crate::model::{separate, MixingMatrix, Separator, SignalBlock};
use crate::nonlinearity::Nonlinearity;

const MAX_STEP_HALVINGS: usize = 30;

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Central differences of `g(z)` and `g'(z)` with respect to each parameter.
pub fn param_grads(g: &Nonlinearity, z: f64, h: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let p = g.params();
    let mut dg = Vec::with_capacity(p.len());
    let mut ddg = Vec::with_capacity(p.len());
    for k in 0..p.len() {
        let (mut up, mut down) = (p.clone(), p.clone());
        up[k] += h;
        down[k] -= h;
        let (gu, gd) = (g.with_params(&up)?, g.with_params(&down)?);
        dg.push((gu.eval(z)? - gd.eval(z)?) / (2.0 * h));
        ddg.push((gu.deriv(z)? - gd.deriv(z)?) / (2.0 * h));
    }
    Ok((dg, ddg))
}

fn ranks(y: &SignalBlock) -> Vec<Vec<usize>> {
    (0..y.channels())
        .map(|c| {
            let v = y.channel_slice(c);
            let mut idx: Vec<usize> = (0..v.len()).collect();
            idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]).then(a.cmp(&b)));
            idx
        })
        .collect()
}

/// `(C(plus(h)) - C(minus(h))) / 2h` with `h` halved from `h0` until neither
/// perturbed separator changes the output ranks.
fn central<F>(x: &SignalBlock, base: &Separator, h0: f64, perturb: F) -> Result<f64>
where
    F: Fn(f64) -> Result<Separator>,
{
    let base_ranks = ranks(&separate(base, x)?);
    let mut h = h0;
    for _ in 0..MAX_STEP_HALVINGS {
        let (up, down) = (perturb(h)?, perturb(-h)?);
        if ranks(&separate(&up, x)?) == base_ranks && ranks(&separate(&down, x)?) == base_ranks {
            return Ok((contrast(&up, x)?.total - contrast(&down, x)?.total) / (2.0 * h));
        }
        h *= 0.5;
    }
    Err(Error::DegenerateData(
        "no rank-preserving finite-difference step found".into(),
    ))
}

/// Central differences of the contrast with respect to every compensator
/// parameter.
pub fn contrast_param_grads(sep: &Separator, x: &SignalBlock, h0: f64) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(sep.dim());
    for (i, g) in sep.compensators().iter().enumerate() {
        let p = g.params();
        let mut grad = Vec::with_capacity(p.len());
        for k in 0..p.len() {
            grad.push(central(x, sep, h0, |h| {
                let mut q = p.clone();
                q[k] += h;
                let mut gs = sep.compensators().to_vec();
                gs[i] = g.with_params(&q)?;
                Separator::new(gs, sep.unmixing().clone())
            })?);
        }
        out.push(grad);
    }
    Ok(out)
}

/// Central difference of the contrast along `direction` in `W`.
pub fn contrast_directional(
    sep: &Separator,
    x: &SignalBlock,
    direction: &Array2<f64>,
    h0: f64,
) -> Result<f64> {
    central(x, sep, h0, |h| {
        let w = MixingMatrix::new(sep.unmixing().entries() + &(direction * h))?;
        Separator::new(sep.compensators().to_vec(), w)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_param_grads_are_exact() {
        let g = Nonlinearity::cubic(0.3).unwrap();
        let (dg, ddg) = param_grads(&g, 2.0, 1e-3).unwrap();
        assert!((dg[0] - 8.0).abs() < 1e-9);
        assert!((ddg[0] - 12.0).abs() < 1e-9);
    }

    #[test]
    fn rel_err_uses_floor() {
        assert_eq!(rel_err(1.0, 1.0, 1e-8), 0.0);
        assert!((rel_err(0.0, 1e-9, 1e-6) - 1e-3).abs() < 1e-15);
        assert!((rel_err(2.0, 1.0, 0.0) - 0.5).abs() < 1e-15);
    }
}
