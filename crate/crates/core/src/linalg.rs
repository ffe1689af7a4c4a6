//! Small dense linear algebra on `ndarray` matrices, delegated to `nalgebra`.

use nalgebra::DMatrix;
use ndarray::Array2;

pub(crate) fn to_na(m: &Array2<f64>) -> DMatrix<f64> {
    let (r, c) = m.dim();
    DMatrix::from_fn(r, c, |i, j| m[[i, j]])
}

pub(crate) fn from_na(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

pub fn determinant(m: &Array2<f64>) -> f64 {
    to_na(m).determinant()
}

pub fn inverse(m: &Array2<f64>) -> Option<Array2<f64>> {
    to_na(m).try_inverse().map(|inv| from_na(&inv))
}

/// Ratio of largest to smallest singular value; infinite for singular input.
pub fn condition_number(m: &Array2<f64>) -> f64 {
    let sv = to_na(m).singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Eigen-decomposition of a symmetric matrix: (eigenvalues, eigenvectors as columns).
pub fn symmetric_eigen(m: &Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let eig = nalgebra::SymmetricEigen::new(to_na(m));
    (
        eig.eigenvalues.iter().cloned().collect(),
        from_na(&eig.eigenvectors),
    )
}

/// Solves `a · x = b` for square `a`.
pub fn solve(a: &Array2<f64>, b: &Array2<f64>) -> Option<Array2<f64>> {
    let lu = to_na(a).lu();
    lu.solve(&to_na(b)).map(|x| from_na(&x))
}
