//! Strictly increasing scalar functions used as sensor distortions and as
//! trainable compensators.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Default absolute tolerance for [`Nonlinearity::inverse`].
pub const DEFAULT_INVERSE_TOL: f64 = 1e-10;

/// Minimum segment slope accepted by the piecewise-linear constructor.
pub const MIN_PWL_SLOPE: f64 = 1e-9;

/// Number of knots used for data-adaptive compensators.
pub const DEFAULT_KNOTS: usize = 17;

const MAX_INVERSE_ITERS: usize = 500;
const INNER_INVERSE_TOL: f64 = 1e-13;

/// Closed interval on which a nonlinearity may be evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Default for Interval {
    fn default() -> Self {
        Interval { lo: -1e6, hi: 1e6 }
    }
}

impl Interval {
    pub fn contains(&self, z: f64) -> bool {
        z >= self.lo && z <= self.hi
    }
}

/// Parametric family of a [`Nonlinearity`].
///
/// * `ScaledTanh { a }` is `tanh(a z) / a`, unit slope at the origin.
/// * `Cubic { c }` is `z + c z^3`.
/// * `MonotonePwl` interpolates `values` at `knots` and extrapolates with the
///   end-segment slopes.
/// * `Inverse { of }` is the numeric inverse of another nonlinearity; it has
///   no trainable parameters and is used to build exact-inverse separators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    Identity,
    ScaledTanh { a: f64 },
    Cubic { c: f64 },
    MonotonePwl { knots: Vec<f64>, values: Vec<f64> },
    Inverse { of: Box<Nonlinearity> },
}

#[derive(Serialize, Deserialize)]
struct RawNonlinearity {
    #[serde(flatten)]
    family: Family,
    #[serde(default)]
    domain: Interval,
}

/// A strictly increasing scalar function with a declared domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawNonlinearity", into = "RawNonlinearity")]
pub struct Nonlinearity {
    family: Family,
    domain: Interval,
}

impl TryFrom<RawNonlinearity> for Nonlinearity {
    type Error = Error;

    fn try_from(raw: RawNonlinearity) -> Result<Self> {
        Nonlinearity::new(raw.family, raw.domain)
    }
}

impl From<Nonlinearity> for RawNonlinearity {
    fn from(nl: Nonlinearity) -> Self {
        RawNonlinearity {
            family: nl.family,
            domain: nl.domain,
        }
    }
}

fn validate(family: &Family, domain: &Interval) -> Result<()> {
    if !(domain.lo.is_finite() && domain.hi.is_finite() && domain.lo < domain.hi) {
        return Err(Error::InvalidParameter(format!(
            "domain [{}, {}] is not a proper finite interval",
            domain.lo, domain.hi
        )));
    }
    match family {
        Family::Identity => Ok(()),
        Family::ScaledTanh { a } => {
            if a.is_finite() && *a > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!(
                    "scaled_tanh needs a > 0, got {a}"
                )))
            }
        }
        Family::Cubic { c } => {
            if c.is_finite() && *c >= 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!(
                    "cubic needs c >= 0, got {c}"
                )))
            }
        }
        Family::MonotonePwl { knots, values } => {
            if knots.len() < 2 || knots.len() != values.len() {
                return Err(Error::InvalidParameter(format!(
                    "monotone_pwl needs at least 2 knots and as many values ({} knots, {} values)",
                    knots.len(),
                    values.len()
                )));
            }
            if knots.iter().chain(values).any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter(
                    "monotone_pwl knots and values must be finite".into(),
                ));
            }
            for k in 0..knots.len() - 1 {
                let dk = knots[k + 1] - knots[k];
                if dk <= 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "knots not strictly increasing at index {k}"
                    )));
                }
                let slope = (values[k + 1] - values[k]) / dk;
                if slope <= MIN_PWL_SLOPE {
                    return Err(Error::InvalidParameter(format!(
                        "segment {k} has slope {slope:e}, must exceed {MIN_PWL_SLOPE:e}"
                    )));
                }
            }
            Ok(())
        }
        Family::Inverse { of } => {
            let lo = of.eval_unchecked(of.domain.lo);
            let hi = of.eval_unchecked(of.domain.hi);
            if domain.lo >= lo && domain.hi <= hi {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!(
                    "inverse domain [{}, {}] exceeds the image [{lo}, {hi}]",
                    domain.lo, domain.hi
                )))
            }
        }
    }
}

impl Nonlinearity {
    pub fn new(family: Family, domain: Interval) -> Result<Self> {
        validate(&family, &domain)?;
        Ok(Nonlinearity { family, domain })
    }

    pub fn identity() -> Self {
        Nonlinearity {
            family: Family::Identity,
            domain: Interval::default(),
        }
    }

    pub fn scaled_tanh(a: f64) -> Result<Self> {
        Self::new(Family::ScaledTanh { a }, Interval::default())
    }

    pub fn cubic(c: f64) -> Result<Self> {
        Self::new(Family::Cubic { c }, Interval::default())
    }

    pub fn monotone_pwl(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        Self::new(Family::MonotonePwl { knots, values }, Interval::default())
    }

    /// Piecewise-linear interpolant of `f` at the given knots.
    pub fn interpolate<F: Fn(f64) -> f64>(knots: Vec<f64>, f: F) -> Result<Self> {
        let values = knots.iter().map(|&k| f(k)).collect();
        Self::monotone_pwl(knots, values)
    }

    /// Marginal Gaussianization of a sample: knots at the empirical quantiles
    /// `k / (n_knots - 1)`, values at the matching standard-normal quantiles.
    pub fn gaussianizer(samples: &[f64], n_knots: usize) -> Result<Self> {
        if n_knots < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 knots, got {n_knots}"
            )));
        }
        if samples.len() < n_knots {
            return Err(Error::InsufficientData {
                needed: n_knots,
                got: samples.len(),
            });
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let normal = Normal::standard();
        let p_floor = 0.5 / n as f64;
        let segments = (n_knots - 1) as f64;
        let mut knots = Vec::with_capacity(n_knots);
        let mut values = Vec::with_capacity(n_knots);
        for k in 0..n_knots {
            let p = k as f64 / segments;
            knots.push(quantile_sorted(&sorted, p));
            values.push(normal.inverse_cdf(p.clamp(p_floor, 1.0 - p_floor)));
        }
        if knots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::DegenerateData(
                "repeated empirical quantiles; channel has too many ties".into(),
            ));
        }
        Self::monotone_pwl(knots, values)
    }

    /// The exact inverse function, defined on the image of `self`'s domain.
    pub fn inverted(&self) -> Self {
        match &self.family {
            Family::Identity => self.clone(),
            Family::Inverse { of } => (**of).clone(),
            _ => {
                let domain = Interval {
                    lo: self.eval_unchecked(self.domain.lo),
                    hi: self.eval_unchecked(self.domain.hi),
                };
                Nonlinearity {
                    family: Family::Inverse {
                        of: Box::new(self.clone()),
                    },
                    domain,
                }
            }
        }
    }

    pub fn with_domain(mut self, lo: f64, hi: f64) -> Result<Self> {
        let domain = Interval { lo, hi };
        validate(&self.family, &domain)?;
        self.domain = domain;
        Ok(self)
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn domain(&self) -> Interval {
        self.domain
    }

    pub fn is_identity(&self) -> bool {
        matches!(self.family, Family::Identity)
    }

    /// Trainable parameters: `[a]`, `[c]`, or the knot values.
    pub fn params(&self) -> Vec<f64> {
        match &self.family {
            Family::Identity => Vec::new(),
            Family::ScaledTanh { a } => vec![*a],
            Family::Cubic { c } => vec![*c],
            Family::MonotonePwl { values, .. } => values.clone(),
            Family::Inverse { .. } => Vec::new(),
        }
    }

    /// Same family and domain with new parameters; validated.
    pub fn with_params(&self, params: &[f64]) -> Result<Self> {
        let expected = self.params().len();
        if params.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "expected {expected} parameters, got {}",
                params.len()
            )));
        }
        let family = match &self.family {
            Family::Identity => Family::Identity,
            Family::Inverse { of } => Family::Inverse { of: of.clone() },
            Family::ScaledTanh { .. } => Family::ScaledTanh { a: params[0] },
            Family::Cubic { .. } => Family::Cubic { c: params[0] },
            Family::MonotonePwl { knots, .. } => Family::MonotonePwl {
                knots: knots.clone(),
                values: params.to_vec(),
            },
        };
        Self::new(family, self.domain)
    }

    /// Segment slopes of a piecewise-linear function; empty for other families.
    pub fn slopes(&self) -> Vec<f64> {
        match &self.family {
            Family::MonotonePwl { knots, values } => knots
                .windows(2)
                .zip(values.windows(2))
                .map(|(k, v)| (v[1] - v[0]) / (k[1] - k[0]))
                .collect(),
            _ => Vec::new(),
        }
    }

    fn check_domain(&self, z: f64) -> Result<()> {
        if self.domain.contains(z) {
            Ok(())
        } else {
            Err(Error::Domain {
                value: z,
                lo: self.domain.lo,
                hi: self.domain.hi,
            })
        }
    }

    pub fn eval(&self, z: f64) -> Result<f64> {
        self.check_domain(z)?;
        Ok(self.eval_unchecked(z))
    }

    pub fn deriv(&self, z: f64) -> Result<f64> {
        self.check_domain(z)?;
        Ok(self.deriv_unchecked(z))
    }

    pub(crate) fn eval_unchecked(&self, z: f64) -> f64 {
        match &self.family {
            Family::Identity => z,
            Family::ScaledTanh { a } => (a * z).tanh() / a,
            Family::Cubic { c } => z + c * z * z * z,
            Family::MonotonePwl { knots, values } => {
                let (j, t) = locate(knots, z);
                values[j] + t * (values[j + 1] - values[j])
            }
            Family::Inverse { of } => of.solve(z, INNER_INVERSE_TOL),
        }
    }

    pub(crate) fn deriv_unchecked(&self, z: f64) -> f64 {
        match &self.family {
            Family::Identity => 1.0,
            Family::ScaledTanh { a } => {
                let th = (a * z).tanh();
                1.0 - th * th
            }
            Family::Cubic { c } => 1.0 + 3.0 * c * z * z,
            Family::MonotonePwl { knots, values } => {
                let (j, _) = locate(knots, z);
                (values[j + 1] - values[j]) / (knots[j + 1] - knots[j])
            }
            Family::Inverse { of } => 1.0 / of.deriv_unchecked(of.solve(z, INNER_INVERSE_TOL)),
        }
    }

    /// Solves `eval(z) = x` by bracketing bisection with Newton refinement.
    pub fn inverse(&self, x: f64, tol: f64) -> Result<f64> {
        if !(tol > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tolerance must be positive, got {tol}"
            )));
        }
        let (dlo, dhi) = (self.domain.lo, self.domain.hi);
        let (ylo, yhi) = (self.eval_unchecked(dlo), self.eval_unchecked(dhi));
        if !(x >= ylo && x <= yhi) {
            return Err(Error::Range {
                value: x,
                lo: ylo,
                hi: yhi,
            });
        }
        match &self.family {
            Family::Identity => return Ok(x),
            Family::Inverse { of } => return Ok(of.eval_unchecked(x)),
            _ => {}
        }
        Ok(self.solve(x, tol))
    }

    // Caller guarantees x lies in the image of the domain.
    fn solve(&self, x: f64, tol: f64) -> f64 {
        let (dlo, dhi) = (self.domain.lo, self.domain.hi);
        if x <= self.eval_unchecked(dlo) {
            return dlo;
        }
        if x >= self.eval_unchecked(dhi) {
            return dhi;
        }
        // Grow a bracket outward from [-1, 1] so small targets converge fast.
        let mut lo = (-1.0f64).clamp(dlo, dhi);
        let mut hi = 1.0f64.clamp(dlo, dhi);
        while self.eval_unchecked(lo) > x {
            hi = lo;
            lo = if lo * 2.0 < dlo { dlo } else { lo * 2.0 };
        }
        while self.eval_unchecked(hi) < x {
            lo = hi;
            hi = if hi * 2.0 > dhi { dhi } else { hi * 2.0 };
        }

        let mut z = 0.5 * (lo + hi);
        let mut best = (f64::INFINITY, z);
        for _ in 0..MAX_INVERSE_ITERS {
            let r = self.eval_unchecked(z) - x;
            if r.abs() < best.0 {
                best = (r.abs(), z);
            }
            if r.abs() <= tol {
                // one extra Newton step tightens z well below tol / slope
                let d = self.deriv_unchecked(z);
                let polished = z - r / d;
                if d > 0.0 && polished.is_finite() {
                    let rp = self.eval_unchecked(polished) - x;
                    if rp.abs() < r.abs() {
                        return polished;
                    }
                }
                return z;
            }
            if r > 0.0 {
                hi = z;
            } else {
                lo = z;
            }
            let d = self.deriv_unchecked(z);
            let newton = z - r / d;
            z = if d > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if hi - lo <= f64::EPSILON * lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE) {
                break;
            }
        }
        best.1
    }

    /// Gradient of `eval` with respect to [`Self::params`].
    pub fn param_grad(&self, z: f64) -> Result<Vec<f64>> {
        self.check_domain(z)?;
        Ok(match &self.family {
            Family::Identity | Family::Inverse { .. } => Vec::new(),
            Family::ScaledTanh { a } => {
                let th = (a * z).tanh();
                vec![z * (1.0 - th * th) / a - th / (a * a)]
            }
            Family::Cubic { .. } => vec![z * z * z],
            Family::MonotonePwl { knots, .. } => {
                let (j, t) = locate(knots, z);
                let mut g = vec![0.0; knots.len()];
                g[j] = 1.0 - t;
                g[j + 1] = t;
                g
            }
        })
    }

    /// Gradient of `deriv` with respect to [`Self::params`].
    pub fn deriv_param_grad(&self, z: f64) -> Result<Vec<f64>> {
        self.check_domain(z)?;
        Ok(match &self.family {
            Family::Identity | Family::Inverse { .. } => Vec::new(),
            Family::ScaledTanh { a } => {
                let th = (a * z).tanh();
                vec![-2.0 * th * (1.0 - th * th) * z]
            }
            Family::Cubic { .. } => vec![3.0 * z * z],
            Family::MonotonePwl { knots, .. } => {
                let (j, _) = locate(knots, z);
                let inv = 1.0 / (knots[j + 1] - knots[j]);
                let mut g = vec![0.0; knots.len()];
                g[j] = -inv;
                g[j + 1] = inv;
                g
            }
        })
    }

    /// Adds `w_eval * d eval/d theta + w_deriv * d deriv/d theta` at `z` into
    /// `out`; allocation-free for piecewise-linear functions.
    pub(crate) fn accumulate_param_grads(
        &self,
        z: f64,
        w_eval: f64,
        w_deriv: f64,
        out: &mut [f64],
    ) {
        match &self.family {
            Family::Identity | Family::Inverse { .. } => {}
            Family::MonotonePwl { knots, .. } => {
                let (j, t) = locate(knots, z);
                let inv = 1.0 / (knots[j + 1] - knots[j]);
                out[j] += w_eval * (1.0 - t) - w_deriv * inv;
                out[j + 1] += w_eval * t + w_deriv * inv;
            }
            _ => {
                let g = self.param_grad(z).unwrap_or_default();
                let dg = self.deriv_param_grad(z).unwrap_or_default();
                for ((o, a), b) in out.iter_mut().zip(g).zip(dg) {
                    *o += w_eval * a + w_deriv * b;
                }
            }
        }
    }

    /// Returns `scale * self + shift`. Only piecewise-linear and identity
    /// functions are closed under this map; identity becomes a two-knot line.
    pub fn affine(&self, scale: f64, shift: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite() && shift.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "affine map needs finite positive scale, got {scale} and shift {shift}"
            )));
        }
        match &self.family {
            Family::MonotonePwl { knots, values } => Self::new(
                Family::MonotonePwl {
                    knots: knots.clone(),
                    values: values.iter().map(|v| scale * v + shift).collect(),
                },
                self.domain,
            ),
            Family::Identity => Self::new(
                Family::MonotonePwl {
                    knots: vec![-1.0, 1.0],
                    values: vec![shift - scale, shift + scale],
                },
                self.domain,
            ),
            _ => Err(Error::InvalidParameter(
                "affine rescaling is only defined for identity and monotone_pwl".into(),
            )),
        }
    }
}

/// Raises every segment increment of a knot-value vector so that the slope is
/// at least `min_slope`, sweeping left to right.
pub fn project_increasing(knots: &[f64], values: &mut [f64], min_slope: f64) {
    for k in 1..values.len() {
        let floor = values[k - 1] + min_slope * (knots[k] - knots[k - 1]);
        if !(values[k] >= floor) {
            values[k] = floor;
        }
    }
}

/// Active segment `j` (between knots `j` and `j+1`) and local coordinate `t`.
/// Right-continuous at interior knots; `t` falls outside `[0, 1]` when
/// extrapolating past the end knots.
fn locate(knots: &[f64], z: f64) -> (usize, f64) {
    let last = knots.len() - 2;
    // index of first knot strictly greater than z
    let upper = knots.partition_point(|&k| k <= z);
    let j = upper.saturating_sub(1).min(last);
    let t = (z - knots[j]) / (knots[j + 1] - knots[j]);
    (j, t)
}

/// Linear-interpolation quantile (type 7) of sorted data.
pub(crate) fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = p * (n - 1) as f64;
    let i = (h.floor() as usize).min(n - 2);
    let frac = h - i as f64;
    sorted[i] + frac * (sorted[i + 1] - sorted[i])
}
