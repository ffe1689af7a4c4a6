//! Signal blocks, mixing matrices and the forward / separating chains.
//!
//! The generative chain is `x = f(A s)`: a square linear mix followed by one
//! strictly increasing distortion per channel. The separating chain mirrors
//! it, `y = W g(x)`, where `W` is an estimate and never the literal inverse
//! of a known `A`. All operations here are pure and deterministic.

use std::fmt;

use ndarray::{Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::nonlinearity::Nonlinearity;

/// Smallest admissible `|det|` of a mixing or unmixing matrix.
pub const MIN_ABS_DET: f64 = 1e-12;

/// Threshold above which a matrix entry counts as nonzero for the mixing
/// condition.
pub const MIXING_ENTRY_EPS: f64 = 1e-9;

/// Stage of the chain a [`SignalBlock`] belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Source,
    Mixed,
    Observation,
    Compensated,
    Output,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Source => "source",
            Role::Mixed => "mixed",
            Role::Observation => "observation",
            Role::Compensated => "compensated",
            Role::Output => "output",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A finite `channels x samples` block tagged with its role in the chain.
/// Each channel is a contiguous row.
#[derive(Clone, Debug, PartialEq)]
pub struct SignalBlock {
    data: Array2<f64>,
    role: Role,
}

impl SignalBlock {
    pub fn new(data: Array2<f64>, role: Role) -> Result<Self> {
        let (c, t) = data.dim();
        if c == 0 || t == 0 {
            return Err(Error::InvalidInput(format!(
                "signal block must have at least one channel and one sample, got {c}x{t}"
            )));
        }
        if let Some(((i, j), v)) = data.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite value {v} at channel {i}, sample {j}"
            )));
        }
        // standard layout keeps every channel contiguous
        let data = if data.is_standard_layout() {
            data
        } else {
            data.as_standard_layout().into_owned()
        };
        Ok(SignalBlock { data, role })
    }

    /// Builds a block from one `Vec` per channel.
    pub fn from_channels(channels: Vec<Vec<f64>>, role: Role) -> Result<Self> {
        let c = channels.len();
        let t = channels.first().map_or(0, Vec::len);
        if channels.iter().any(|ch| ch.len() != t) {
            return Err(Error::DimensionMismatch(
                "channels have different sample counts".into(),
            ));
        }
        let flat: Vec<f64> = channels.into_iter().flatten().collect();
        let data =
            Array2::from_shape_vec((c, t), flat).map_err(|e| Error::InvalidInput(e.to_string()))?;
        Self::new(data, role)
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_data(self) -> Array2<f64> {
        self.data
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn channels(&self) -> usize {
        self.data.nrows()
    }

    pub fn samples(&self) -> usize {
        self.data.ncols()
    }

    pub fn channel(&self, i: usize) -> ArrayView1<'_, f64> {
        self.data.row(i)
    }

    pub fn channel_slice(&self, i: usize) -> &[f64] {
        self.data
            .row(i)
            .to_slice()
            .expect("signal blocks are stored in standard layout")
    }

    pub(crate) fn expect_role(&self, expected: Role) -> Result<()> {
        if self.role == expected {
            Ok(())
        } else {
            Err(Error::RoleMismatch {
                expected: expected.as_str(),
                got: self.role.as_str(),
            })
        }
    }
}

/// A square, finite, invertible real matrix; used both for the mixing `A`
/// and for the estimated unmixing `W`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct MixingMatrix {
    entries: Array2<f64>,
}

impl MixingMatrix {
    pub fn new(entries: Array2<f64>) -> Result<Self> {
        let (r, c) = entries.dim();
        if r != c {
            return Err(Error::DimensionMismatch(format!(
                "only square systems are supported, got a {r}x{c} matrix"
            )));
        }
        if r == 0 {
            return Err(Error::InvalidInput("empty matrix".into()));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("matrix has non-finite entries".into()));
        }
        let det = linalg::determinant(&entries);
        if !(det.abs() > MIN_ABS_DET) {
            return Err(Error::SingularUnmixing(det.abs()));
        }
        Ok(MixingMatrix { entries })
    }

    /// Like [`MixingMatrix::new`], additionally requiring at least two
    /// nonzero entries per row so that every channel is an actual mixture.
    pub fn mixing(entries: Array2<f64>) -> Result<Self> {
        let m = Self::new(entries)?;
        if !m.satisfies_mixing_condition() {
            return Err(Error::InvalidInput(
                "mixing matrix needs at least two nonzero entries per row".into(),
            ));
        }
        Ok(m)
    }

    pub fn identity(n: usize) -> Self {
        MixingMatrix {
            entries: Array2::eye(n),
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::DimensionMismatch(format!(
                "only square systems are supported, got {n} rows of unequal or mismatched width"
            )));
        }
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        let entries =
            Array2::from_shape_vec((n, n), flat).map_err(|e| Error::InvalidInput(e.to_string()))?;
        Self::new(entries)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.entries.outer_iter().map(|r| r.to_vec()).collect()
    }

    pub fn satisfies_mixing_condition(&self) -> bool {
        self.entries
            .outer_iter()
            .all(|row| row.iter().filter(|v| v.abs() > MIXING_ENTRY_EPS).count() >= 2)
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn determinant(&self) -> f64 {
        linalg::determinant(&self.entries)
    }

    pub fn condition_number(&self) -> f64 {
        linalg::condition_number(&self.entries)
    }

    pub fn inverse(&self) -> Result<MixingMatrix> {
        let inv = linalg::inverse(&self.entries)
            .ok_or_else(|| Error::SingularUnmixing(self.determinant().abs()))?;
        MixingMatrix::new(inv)
    }

    fn apply(&self, block: &SignalBlock, out_role: Role) -> Result<SignalBlock> {
        if self.entries.ncols() != block.channels() {
            return Err(Error::DimensionMismatch(format!(
                "matrix has {} columns but the block has {} channels",
                self.entries.ncols(),
                block.channels()
            )));
        }
        SignalBlock::new(self.entries.dot(block.data()), out_role)
    }
}

impl TryFrom<Vec<Vec<f64>>> for MixingMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        MixingMatrix::from_rows(rows)
    }
}

impl From<MixingMatrix> for Vec<Vec<f64>> {
    fn from(m: MixingMatrix) -> Self {
        m.to_rows()
    }
}

/// The generative pair: mixing matrix followed by per-channel distortions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PnlModel {
    mixing: MixingMatrix,
    distortions: Vec<Nonlinearity>,
}

impl PnlModel {
    pub fn new(mixing: MixingMatrix, distortions: Vec<Nonlinearity>) -> Result<Self> {
        if distortions.len() != mixing.dim() {
            return Err(Error::DimensionMismatch(format!(
                "{} distortions for a {}-channel mixing matrix",
                distortions.len(),
                mixing.dim()
            )));
        }
        Ok(PnlModel {
            mixing,
            distortions,
        })
    }

    pub fn identity(n: usize) -> Self {
        PnlModel {
            mixing: MixingMatrix::identity(n),
            distortions: vec![Nonlinearity::identity(); n],
        }
    }

    pub fn mixing(&self) -> &MixingMatrix {
        &self.mixing
    }

    pub fn distortions(&self) -> &[Nonlinearity] {
        &self.distortions
    }

    /// Separator with `g_i = f_i^-1` and `W = A^-1`.
    pub fn exact_inverse(&self) -> Result<Separator> {
        Separator::new(
            self.distortions
                .iter()
                .map(Nonlinearity::inverted)
                .collect(),
            self.mixing.inverse()?,
        )
    }
}

/// The separating pair: per-channel compensators followed by an unmixing
/// matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Separator {
    compensators: Vec<Nonlinearity>,
    unmixing: MixingMatrix,
}

impl Separator {
    pub fn new(compensators: Vec<Nonlinearity>, unmixing: MixingMatrix) -> Result<Self> {
        if compensators.len() != unmixing.dim() {
            return Err(Error::DimensionMismatch(format!(
                "{} compensators for a {}-channel unmixing matrix",
                compensators.len(),
                unmixing.dim()
            )));
        }
        Ok(Separator {
            compensators,
            unmixing,
        })
    }

    pub fn identity(n: usize) -> Self {
        Separator {
            compensators: vec![Nonlinearity::identity(); n],
            unmixing: MixingMatrix::identity(n),
        }
    }

    pub fn compensators(&self) -> &[Nonlinearity] {
        &self.compensators
    }

    pub fn unmixing(&self) -> &MixingMatrix {
        &self.unmixing
    }

    pub fn dim(&self) -> usize {
        self.unmixing.dim()
    }
}

/// `Z = A S`.
pub fn mix_linear(a: &MixingMatrix, sources: &SignalBlock) -> Result<SignalBlock> {
    sources.expect_role(Role::Source)?;
    a.apply(sources, Role::Mixed)
}

fn apply_componentwise(
    fs: &[Nonlinearity],
    block: &SignalBlock,
    out_role: Role,
) -> Result<SignalBlock> {
    if fs.len() != block.channels() {
        return Err(Error::DimensionMismatch(format!(
            "{} functions for {} channels",
            fs.len(),
            block.channels()
        )));
    }
    let mut out = Array2::zeros(block.data().raw_dim());
    for ((f, src), mut dst) in fs
        .iter()
        .zip(block.data().axis_iter(Axis(0)))
        .zip(out.axis_iter_mut(Axis(0)))
    {
        for (z, x) in src.iter().zip(dst.iter_mut()) {
            *x = f.eval(*z)?;
        }
    }
    SignalBlock::new(out, out_role)
}

/// `X[i, t] = f_i(Z[i, t])`.
pub fn apply_nonlinearities(fs: &[Nonlinearity], mixed: &SignalBlock) -> Result<SignalBlock> {
    mixed.expect_role(Role::Mixed)?;
    apply_componentwise(fs, mixed, Role::Observation)
}

/// `E[i, t] = g_i(X[i, t])`.
pub fn compensate(gs: &[Nonlinearity], observations: &SignalBlock) -> Result<SignalBlock> {
    observations.expect_role(Role::Observation)?;
    apply_componentwise(gs, observations, Role::Compensated)
}

/// `Y = W E`.
pub fn unmix(w: &MixingMatrix, compensated: &SignalBlock) -> Result<SignalBlock> {
    compensated.expect_role(Role::Compensated)?;
    w.apply(compensated, Role::Output)
}

pub fn forward(model: &PnlModel, sources: &SignalBlock) -> Result<SignalBlock> {
    apply_nonlinearities(&model.distortions, &mix_linear(&model.mixing, sources)?)
}

pub fn separate(sep: &Separator, observations: &SignalBlock) -> Result<SignalBlock> {
    unmix(&sep.unmixing, &compensate(&sep.compensators, observations)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn src(data: Array2<f64>) -> SignalBlock {
        SignalBlock::new(data, Role::Source).unwrap()
    }

    fn assert_close(a: &Array2<f64>, b: &Array2<f64>, tol: f64) {
        assert_eq!(a.dim(), b.dim());
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() <= tol, "{x} vs {y}");
        }
    }

    #[test]
    fn block_invariants() {
        assert!(SignalBlock::new(Array2::zeros((0, 3)), Role::Source).is_err());
        assert!(SignalBlock::new(Array2::zeros((2, 0)), Role::Source).is_err());
        assert!(SignalBlock::new(array![[1.0, f64::NAN]], Role::Source).is_err());
        assert!(SignalBlock::new(array![[f64::INFINITY]], Role::Source).is_err());
        let t =
            SignalBlock::new(array![[1.0, 2.0], [3.0, 4.0]].reversed_axes(), Role::Output).unwrap();
        assert_eq!(t.channel_slice(0), &[1.0, 3.0]);
    }

    #[test]
    fn matrix_invariants() {
        assert!(MixingMatrix::new(Array2::zeros((2, 2))).is_err());
        assert!(MixingMatrix::new(Array2::zeros((2, 3))).is_err());
        assert!(MixingMatrix::from_rows(vec![vec![1.0, 2.0], vec![3.0]]).is_err());
        assert!(MixingMatrix::mixing(Array2::eye(2)).is_err());
        assert!(MixingMatrix::mixing(array![[1.0, 0.5], [0.5, 1.0]]).is_ok());
        assert!(MixingMatrix::new(array![[1.0, f64::NAN], [0.0, 1.0]]).is_err());
    }

    #[test]
    fn mix_linear_examples() {
        let s = src(array![[1.0, -2.0, 0.5, 3.0], [0.0, 4.0, -1.0, 2.0]]);
        let z = mix_linear(&MixingMatrix::identity(2), &s).unwrap();
        assert_eq!(z.data(), s.data());
        assert_eq!(z.role(), Role::Mixed);

        let a = MixingMatrix::from_rows(vec![vec![1.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let z = mix_linear(&a, &src(array![[1.0, 0.0], [0.0, 1.0]])).unwrap();
        assert_eq!(z.data(), &array![[1.0, 0.5], [0.5, 1.0]]);

        let three = src(Array2::zeros((3, 4)));
        assert!(matches!(
            mix_linear(&a, &three),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn role_discipline() {
        let a = MixingMatrix::identity(2);
        let obs = SignalBlock::new(Array2::ones((2, 3)), Role::Observation).unwrap();
        assert!(matches!(
            mix_linear(&a, &obs),
            Err(Error::RoleMismatch { .. })
        ));
        assert!(matches!(unmix(&a, &obs), Err(Error::RoleMismatch { .. })));
        let ids = vec![Nonlinearity::identity(); 2];
        assert!(apply_nonlinearities(&ids, &obs).is_err());
        assert_eq!(compensate(&ids, &obs).unwrap().role(), Role::Compensated);
    }

    #[test]
    fn nonlinearity_examples() {
        let z = SignalBlock::new(array![[2.0, 0.0], [0.0, 1.0]], Role::Mixed).unwrap();
        let ids = vec![Nonlinearity::identity(); 2];
        assert_eq!(apply_nonlinearities(&ids, &z).unwrap().data(), z.data());

        let fs = vec![
            Nonlinearity::cubic(0.3).unwrap(),
            Nonlinearity::scaled_tanh(1.0).unwrap(),
        ];
        let x = apply_nonlinearities(&fs, &z).unwrap();
        assert!((x.data()[[0, 0]] - 4.4).abs() < 1e-12);
        assert_eq!(x.data()[[1, 0]], 0.0);
        assert!(apply_nonlinearities(&fs[..1], &z).is_err());

        let bounded = vec![
            Nonlinearity::identity().with_domain(-1.0, 1.0).unwrap(),
            Nonlinearity::identity(),
        ];
        assert!(matches!(
            apply_nonlinearities(&bounded, &z),
            Err(Error::Domain { .. })
        ));
    }

    #[test]
    fn compensate_with_interpolated_artanh() {
        let knots: Vec<f64> = (0..=198).map(|i| -0.99 + 0.01 * i as f64).collect();
        let g = Nonlinearity::interpolate(knots, f64::atanh).unwrap();
        let x = SignalBlock::new(array![[1.0f64.tanh()]], Role::Observation).unwrap();
        let e = compensate(&[g], &x).unwrap();
        assert!((e.data()[[0, 0]] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn unmix_examples() {
        let e = SignalBlock::new(array![[1.0, 2.0], [3.0, 4.0]], Role::Compensated).unwrap();
        assert_eq!(
            unmix(&MixingMatrix::identity(2), &e).unwrap().data(),
            e.data()
        );
        let swap = MixingMatrix::from_rows(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(
            unmix(&swap, &e).unwrap().data(),
            &array![[3.0, 4.0], [1.0, 2.0]]
        );
    }

    #[test]
    fn forward_examples() {
        let s = src(array![[1.0, 0.0, -0.3], [1.0, 0.0, 2.0]]);
        let x = forward(&PnlModel::identity(2), &s).unwrap();
        assert_eq!(x.data(), s.data());
        assert_eq!(x.role(), Role::Observation);

        let a = MixingMatrix::from_rows(vec![vec![1.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let fs = vec![Nonlinearity::cubic(0.3).unwrap(); 2];
        let model = PnlModel::new(a, fs).unwrap();
        let x = forward(&model, &src(array![[1.0], [1.0]])).unwrap();
        for v in x.data() {
            assert!((v - 2.5125).abs() < 1e-12);
        }

        let zero = forward(&model, &src(Array2::zeros((2, 3)))).unwrap();
        assert!(zero.data().iter().all(|&v| v == 0.0));
    }

    fn sample_model() -> (PnlModel, SignalBlock) {
        let a = MixingMatrix::from_rows(vec![vec![0.9, -0.4], vec![0.3, 0.8]]).unwrap();
        let fs = vec![
            Nonlinearity::cubic(0.3).unwrap(),
            Nonlinearity::scaled_tanh(0.5).unwrap(),
        ];
        let s = src(array![
            [0.1, -1.2, 0.7, 1.5, -0.4],
            [0.8, 0.3, -1.1, 0.2, 1.3]
        ]);
        (PnlModel::new(a, fs).unwrap(), s)
    }

    #[test]
    fn separate_examples() {
        let (model, s) = sample_model();
        let x = forward(&model, &s).unwrap();
        assert_eq!(
            separate(&Separator::identity(2), &x).unwrap().data(),
            x.data()
        );

        let inv = model.exact_inverse().unwrap();
        let y = separate(&inv, &x).unwrap();
        assert_close(y.data(), s.data(), 1e-6);
        assert_eq!(y.role(), Role::Output);

        // W = P A^-1 recovers P S
        let perm = array![[0.0, 1.0], [1.0, 0.0]];
        let w = MixingMatrix::new(perm.dot(inv.unmixing().entries())).unwrap();
        let permuted = Separator::new(inv.compensators().to_vec(), w).unwrap();
        let y = separate(&permuted, &x).unwrap();
        assert_close(y.data(), &perm.dot(s.data()), 1e-6);

        // bit-identical on repeat
        assert_eq!(separate(&inv, &x).unwrap(), separate(&inv, &x).unwrap());
    }

    fn block_strategy(c: usize) -> impl Strategy<Value = Array2<f64>> {
        prop::collection::vec(-3.0f64..3.0, c * 16)
            .prop_map(move |v| Array2::from_shape_vec((c, 16), v).unwrap())
    }

    proptest! {
        #[test]
        fn round_trip_through_exact_inverse(s in block_strategy(2), c in 0.0f64..1.0) {
            let a = MixingMatrix::from_rows(vec![vec![1.0, 0.6], vec![-0.4, 0.9]]).unwrap();
            let model = PnlModel::new(a, vec![Nonlinearity::cubic(c).unwrap(); 2]).unwrap();
            let s = src(s);
            let x = forward(&model, &s).unwrap();
            let y = separate(&model.exact_inverse().unwrap(), &x).unwrap();
            for (a, b) in y.data().iter().zip(s.data().iter()) {
                prop_assert!((a - b).abs() < 1e-6);
            }
        }

        #[test]
        fn mixing_is_linear(s1 in block_strategy(3), s2 in block_strategy(3),
                            alpha in -2.0f64..2.0, beta in -2.0f64..2.0) {
            let a = MixingMatrix::from_rows(vec![
                vec![1.0, 0.2, -0.5], vec![0.3, -0.7, 0.4], vec![0.6, 0.1, 0.9],
            ]).unwrap();
            let lhs = mix_linear(&a, &src(&s1 * alpha + &s2 * beta)).unwrap();
            let rhs = mix_linear(&a, &src(s1)).unwrap().into_data() * alpha
                + mix_linear(&a, &src(s2)).unwrap().into_data() * beta;
            for (x, y) in lhs.data().iter().zip(rhs.iter()) {
                prop_assert!((x - y).abs() < 1e-10);
            }
        }

        #[test]
        fn nonlinearities_are_channel_local(z in block_strategy(3), j in 0usize..3, delta in -1.0f64..1.0) {
            let fs = vec![
                Nonlinearity::cubic(0.3).unwrap(),
                Nonlinearity::scaled_tanh(1.5).unwrap(),
                Nonlinearity::identity(),
            ];
            let mut perturbed = z.clone();
            perturbed.row_mut(j).mapv_inplace(|v| v + delta);
            let base = apply_nonlinearities(&fs, &SignalBlock::new(z, Role::Mixed).unwrap()).unwrap();
            let moved = apply_nonlinearities(&fs, &SignalBlock::new(perturbed, Role::Mixed).unwrap()).unwrap();
            for i in (0..3).filter(|&i| i != j) {
                prop_assert_eq!(base.channel(i), moved.channel(i));
            }
        }
    }
}
