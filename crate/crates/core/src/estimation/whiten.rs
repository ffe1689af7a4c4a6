use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::SignalBlock;

/// Smallest admissible eigenvalue of the centered sample covariance.
pub const MIN_COV_EIGENVALUE: f64 = 1e-10;

/// Affine map that whitens a block: `white = matrix (x - mean)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Whitening {
    pub matrix: Array2<f64>,
    pub mean: Array1<f64>,
}

/// Sample covariance with `1/T` normalization.
pub fn covariance(data: &Array2<f64>) -> Array2<f64> {
    let t = data.ncols() as f64;
    let mean = data.mean_axis(Axis(1)).expect("non-empty block");
    let centered = data - &mean.insert_axis(Axis(1));
    centered.dot(&centered.t()) / t
}

/// Symmetric (ZCA) whitening: zero mean per channel and identity sample
/// covariance. Already-white data maps through a near-identity matrix.
pub fn whiten(block: &SignalBlock) -> Result<(SignalBlock, Whitening)> {
    let (c, t) = (block.channels(), block.samples());
    if t <= c {
        return Err(Error::InsufficientData {
            needed: c + 1,
            got: t,
        });
    }
    let data = block.data();
    let mean = data.mean_axis(Axis(1)).expect("non-empty block");
    let cov = covariance(data);
    let (eigvals, eigvecs) = linalg::symmetric_eigen(&cov);
    if let Some(min) = eigvals.iter().cloned().reduce(f64::min) {
        if !(min > MIN_COV_EIGENVALUE) {
            return Err(Error::DegenerateData(format!(
                "sample covariance is singular (smallest eigenvalue {min:e})"
            )));
        }
    }
    let inv_sqrt = Array2::from_diag(&Array1::from_iter(eigvals.iter().map(|v| 1.0 / v.sqrt())));
    let matrix = eigvecs.dot(&inv_sqrt).dot(&eigvecs.t());
    let centered = data - &mean.view().insert_axis(Axis(1));
    let white = SignalBlock::new(matrix.dot(&centered), block.role())?;
    Ok((white, Whitening { matrix, mean }))
}
