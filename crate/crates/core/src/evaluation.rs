//! Separation quality against known sources: least-squares global map,
//! Amari index, permutation/scale alignment and per-channel SIR.

use ndarray::{Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{Role, SignalBlock};

/// Reported SIR for a channel with zero residual, and the upper cap for all
/// channels.
pub const SIR_CAP_DB: f64 = 150.0;

/// Largest channel count for which [`align`] searches all permutations.
pub const EXHAUSTIVE_ALIGN_MAX: usize = 8;

/// The compound linear map from sources to outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalMap {
    pub entries: Array2<f64>,
}

impl GlobalMap {
    pub fn new(entries: Array2<f64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() || entries.is_empty() {
            return Err(Error::DimensionMismatch(format!(
                "global map must be square, got {:?}",
                entries.dim()
            )));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "global map has non-finite entries".into(),
            ));
        }
        Ok(GlobalMap { entries })
    }
}

fn check_pair(y: &SignalBlock, s: &SignalBlock) -> Result<()> {
    if y.channels() != s.channels() || y.samples() != s.samples() {
        return Err(Error::DimensionMismatch(format!(
            "outputs are {}x{} but sources are {}x{}",
            y.channels(),
            y.samples(),
            s.channels(),
            s.samples()
        )));
    }
    y.expect_role(Role::Output)?;
    s.expect_role(Role::Source)
}

/// Ordinary least-squares map `G = argmin ||Y - G S||^2`, from the normal
/// equations `G (S S^T) = Y S^T`.
pub fn global_map(y: &SignalBlock, s: &SignalBlock) -> Result<GlobalMap> {
    check_pair(y, s)?;
    let sd = s.data();
    let gram = sd.dot(&sd.t());
    let (eigs, _) = linalg::symmetric_eigen(&gram);
    let max = eigs.iter().cloned().fold(0.0, f64::max);
    let min = eigs.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(max > 0.0) || min <= 1e-12 * max {
        return Err(Error::DegenerateSource(
            "source Gram matrix is singular".into(),
        ));
    }
    // gram is symmetric, so G^T = gram^-1 (S Y^T)
    let cross = sd.dot(&y.data().t());
    let gt = linalg::solve(&gram, &cross)
        .ok_or_else(|| Error::DegenerateSource("source Gram matrix is singular".into()))?;
    GlobalMap::new(gt.reversed_axes().as_standard_layout().into_owned())
}

/// Amari performance index, normalized to `[0, 1]`; zero exactly for scaled
/// permutation matrices.
///
/// Rows are first divided by their largest magnitude, which makes the index
/// invariant to output scaling `G -> D G` as well as to row and column
/// permutations. It leaves the row term of the classic formula unchanged.
pub fn amari_index(g: &GlobalMap) -> Result<f64> {
    let mut m = g.entries.mapv(f64::abs);
    let n = m.nrows();
    let row_max: Vec<f64> = m
        .outer_iter()
        .map(|r| r.fold(0.0f64, |a, &b| a.max(b)))
        .collect();
    if let Some(i) = row_max.iter().position(|&v| v == 0.0) {
        return Err(Error::DegenerateMap(format!("row {i} is all zeros")));
    }
    for (mut row, &mx) in m.outer_iter_mut().zip(&row_max) {
        row.mapv_inplace(|v| v / mx);
    }
    let col_max: Vec<f64> = m
        .axis_iter(Axis(1))
        .map(|c| c.fold(0.0f64, |a, &b| a.max(b)))
        .collect();
    if let Some(j) = col_max.iter().position(|&v| v == 0.0) {
        return Err(Error::DegenerateMap(format!("column {j} is all zeros")));
    }
    if n == 1 {
        return Ok(0.0);
    }
    let row_max = vec![1.0; n];
    let rows: f64 = m
        .outer_iter()
        .zip(&row_max)
        .map(|(r, &mx)| r.iter().map(|v| v / mx).sum::<f64>() - 1.0)
        .sum();
    let cols: f64 = m
        .axis_iter(Axis(1))
        .zip(&col_max)
        .map(|(c, &mx)| c.iter().map(|v| v / mx).sum::<f64>() - 1.0)
        .sum();
    Ok((rows + cols) / (2.0 * n as f64 * (n - 1) as f64))
}

/// Result of resolving the permutation and scale ambiguity.
#[derive(Clone, Debug, PartialEq)]
pub struct Alignment {
    /// `permutation[i]` is the output channel matched to source `i`.
    pub permutation: Vec<usize>,
    /// Least-squares scale applied to each matched output channel.
    pub scales: Vec<f64>,
    pub aligned: SignalBlock,
}

fn dot(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.dot(&b)
}

fn abs_correlations(y: &Array2<f64>, s: &Array2<f64>) -> Array2<f64> {
    let center = |m: &Array2<f64>| {
        let mean = m.mean_axis(Axis(1)).expect("non-empty block");
        m - &mean.insert_axis(Axis(1))
    };
    let (yc, sc) = (center(y), center(s));
    let n = y.nrows();
    Array2::from_shape_fn((n, n), |(i, j)| {
        let (yi, sj) = (yc.row(i), sc.row(j));
        let denom = (dot(yi, yi) * dot(sj, sj)).sqrt();
        if denom > 0.0 {
            (dot(yi, sj) / denom).abs()
        } else {
            0.0
        }
    })
}

// corr[[i, j]] is |corr(y_i, s_j)|; returns output index per source.
fn best_permutation(corr: &Array2<f64>) -> Vec<usize> {
    let n = corr.nrows();
    if n <= EXHAUSTIVE_ALIGN_MAX {
        let mut best = (f64::NEG_INFINITY, Vec::new());
        let mut current = Vec::with_capacity(n);
        let mut used = vec![false; n];
        search(corr, &mut current, &mut used, 0.0, &mut best);
        best.1
    } else {
        let mut perm = vec![usize::MAX; n];
        let mut used_out = vec![false; n];
        for _ in 0..n {
            let mut pick = (f64::NEG_INFINITY, 0, 0);
            for src in (0..n).filter(|&j| perm[j] == usize::MAX) {
                for out in (0..n).filter(|&i| !used_out[i]) {
                    if corr[[out, src]] > pick.0 {
                        pick = (corr[[out, src]], out, src);
                    }
                }
            }
            perm[pick.2] = pick.1;
            used_out[pick.1] = true;
        }
        perm
    }
}

fn search(
    corr: &Array2<f64>,
    current: &mut Vec<usize>,
    used: &mut [bool],
    score: f64,
    best: &mut (f64, Vec<usize>),
) {
    let src = current.len();
    if src == used.len() {
        if score > best.0 {
            *best = (score, current.clone());
        }
        return;
    }
    for out in 0..used.len() {
        if !used[out] {
            used[out] = true;
            current.push(out);
            search(corr, current, used, score + corr[[out, src]], best);
            current.pop();
            used[out] = false;
        }
    }
}

/// Matches output channels to sources by maximal total absolute correlation,
/// then rescales each matched channel by least squares onto its source.
pub fn align(y: &SignalBlock, s: &SignalBlock) -> Result<Alignment> {
    check_pair(y, s)?;
    let permutation = best_permutation(&abs_correlations(y.data(), s.data()));
    let mut aligned = Array2::zeros(s.data().raw_dim());
    let mut scales = Vec::with_capacity(s.channels());
    for (i, &out) in permutation.iter().enumerate() {
        let (yi, si) = (y.channel(out), s.channel(i));
        let energy = dot(yi, yi);
        let scale = if energy > 0.0 {
            dot(yi, si) / energy
        } else {
            0.0
        };
        aligned.row_mut(i).assign(&(&yi * scale));
        scales.push(scale);
    }
    Ok(Alignment {
        permutation,
        scales,
        aligned: SignalBlock::new(aligned, Role::Output)?,
    })
}

/// `10 log10(||s_i||^2 / ||y_i - s_i||^2)` per channel, capped at
/// [`SIR_CAP_DB`].
pub fn sir_db(aligned: &SignalBlock, s: &SignalBlock) -> Result<Vec<f64>> {
    check_pair(aligned, s)?;
    (0..s.channels())
        .map(|i| {
            let (yi, si) = (aligned.channel(i), s.channel(i));
            let signal = dot(si, si);
            if signal == 0.0 {
                return Err(Error::DegenerateSource(format!(
                    "source channel {i} has zero energy"
                )));
            }
            let residual: f64 = yi
                .iter()
                .zip(si.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if residual == 0.0 {
                return Ok(SIR_CAP_DB);
            }
            Ok((10.0 * (signal / residual).log10()).min(SIR_CAP_DB))
        })
        .collect()
}
