//! Score function estimates `psi(u) = -d/du ln p(u)` for one output channel.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nonlinearity::quantile_sorted;

pub const MIN_SCORE_SAMPLES: usize = 100;

// Gaussian kernel contributions beyond this many bandwidths are dropped.
const KERNEL_CUTOFF: f64 = 8.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreEstimator {
    /// Cubic polynomial score matched to the sample third and fourth cumulants.
    #[default]
    GramCharlier,
    /// Gaussian kernel density with Silverman's bandwidth.
    Kernel,
}

/// Score of `channel` evaluated at every sample, in the channel's own units.
///
/// The channel is standardized before scoring and the result rescaled back
/// by `1 / sd`. The linear coefficient of the estimate is then adjusted so
/// that the sample Stein identity `mean(psi(u) u) = 1` holds exactly; every
/// true score satisfies it, and it keeps the relative-gradient update from
/// drifting in scale.
pub fn score_fn(channel: &[f64], estimator: ScoreEstimator) -> Result<Vec<f64>> {
    let t = channel.len();
    if t < MIN_SCORE_SAMPLES {
        return Err(Error::InsufficientData {
            needed: MIN_SCORE_SAMPLES,
            got: t,
        });
    }
    let n = t as f64;
    let mean = channel.iter().sum::<f64>() / n;
    let var = channel.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if !(var > 0.0) {
        return Err(Error::DegenerateData(
            "cannot score a constant channel".into(),
        ));
    }
    let sd = var.sqrt();
    let u: Vec<f64> = channel.iter().map(|v| (v - mean) / sd).collect();
    let mut psi = match estimator {
        ScoreEstimator::GramCharlier => gram_charlier(&u),
        ScoreEstimator::Kernel => kernel(&u),
    };
    let stein = psi.iter().zip(&u).map(|(p, x)| p * x).sum::<f64>() / n;
    let beta = 1.0 - stein;
    for (p, x) in psi.iter_mut().zip(&u) {
        *p = (*p + beta * x) / sd;
    }
    Ok(psi)
}

/// `psi(u) = u - k3/2 (u^2 - 1) - k4/6 (u^3 - 3u)` on standardized data.
fn gram_charlier(u: &[f64]) -> Vec<f64> {
    let n = u.len() as f64;
    let k3 = u.iter().map(|x| x * x * x).sum::<f64>() / n;
    let k4 = u.iter().map(|x| x * x * x * x).sum::<f64>() / n - 3.0;
    u.iter()
        .map(|&x| x - 0.5 * k3 * (x * x - 1.0) - k4 / 6.0 * (x * x * x - 3.0 * x))
        .collect()
}

/// Silverman's rule of thumb for standardized data.
pub fn silverman_bandwidth(u: &[f64]) -> f64 {
    let mut sorted = u.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / n;
    let sd = (sorted.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * n.powf(-0.2)
}

/// `-p'(u) / p(u)` of a Gaussian kernel density estimate, evaluated at the
/// samples; kernels farther than `KERNEL_CUTOFF` bandwidths are skipped.
fn kernel(u: &[f64]) -> Vec<f64> {
    let h = silverman_bandwidth(u);
    let mut idx: Vec<usize> = (0..u.len()).collect();
    idx.sort_by(|&a, &b| u[a].total_cmp(&u[b]));
    let sorted: Vec<f64> = idx.iter().map(|&i| u[i]).collect();
    let reach = KERNEL_CUTOFF * h;
    let mut out = vec![0.0; u.len()];
    let mut lo = 0;
    let mut hi = 0;
    for (rank, &x) in sorted.iter().enumerate() {
        while sorted[lo] < x - reach {
            lo += 1;
        }
        while hi < sorted.len() && sorted[hi] <= x + reach {
            hi += 1;
        }
        let (mut dens, mut slope) = (0.0, 0.0);
        for &s in &sorted[lo..hi] {
            let r = (x - s) / h;
            let k = (-0.5 * r * r).exp();
            dens += k;
            slope += k * r;
        }
        out[idx[rank]] = slope / (h * dens);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ContinuousCDF, Laplace, Normal};

    fn quantile_sample<D: ContinuousCDF<f64, f64>>(d: &D, t: usize) -> Vec<f64> {
        (0..t)
            .map(|i| d.inverse_cdf((i as f64 + 0.5) / t as f64))
            .collect()
    }

    fn mad(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
    }

    #[test]
    fn gaussian_score_is_identity_map() {
        let y = quantile_sample(&Normal::standard(), 10_000);
        for est in [ScoreEstimator::GramCharlier, ScoreEstimator::Kernel] {
            let psi = score_fn(&y, est).unwrap();
            assert!(mad(&psi, &y) < 0.1, "{est:?}: {}", mad(&psi, &y));
        }
        let gc = score_fn(&y, ScoreEstimator::GramCharlier).unwrap();
        let kde = score_fn(&y, ScoreEstimator::Kernel).unwrap();
        assert!(mad(&gc, &kde) < 0.2);
    }

    #[test]
    fn kernel_score_on_laplace_approaches_sign() {
        let b = std::f64::consts::FRAC_1_SQRT_2;
        let y = quantile_sample(&Laplace::new(0.0, b).unwrap(), 10_000);
        let psi = score_fn(&y, ScoreEstimator::Kernel).unwrap();
        let (mut dev, mut count) = (0.0, 0);
        for (p, u) in psi.iter().zip(&y) {
            if (0.5..2.5).contains(&u.abs()) {
                dev += (p - u.signum() * 2f64.sqrt()).abs();
                count += 1;
            }
        }
        assert!(
            dev / (count as f64) < 0.3,
            "mean deviation {}",
            dev / count as f64
        );
    }

    #[test]
    fn scores_scale_with_the_channel() {
        let y = quantile_sample(&Normal::standard(), 500);
        let wide: Vec<f64> = y.iter().map(|v| 4.0 * v + 1.0).collect();
        let a = score_fn(&y, ScoreEstimator::GramCharlier).unwrap();
        let b = score_fn(&wide, ScoreEstimator::GramCharlier).unwrap();
        for (x, z) in a.iter().zip(&b) {
            assert!((x / 4.0 - z).abs() < 1e-12);
        }
        let stein: f64 = b.iter().zip(&wide).map(|(p, v)| p * (v - 1.0)).sum::<f64>() / 500.0;
        assert!((stein - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_small_or_constant_input() {
        assert!(matches!(
            score_fn(&[0.5; 99], ScoreEstimator::Kernel),
            Err(Error::InsufficientData { .. })
        ));
        assert!(matches!(
            score_fn(&[0.5; 200], ScoreEstimator::GramCharlier),
            Err(Error::DegenerateData(_))
        ));
    }
}
