//! Vasicek m-spacing estimate of differential entropy and its exact
//! derivative with respect to every sample.

use crate::error::{Error, Result};

/// Spacing `m = floor(sqrt(T))`.
pub fn spacing(t: usize) -> usize {
    ((t as f64).sqrt().floor() as usize).max(1)
}

// Sample indices by value, ties in index order (the order a stable sort gives).
fn order(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_unstable_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    idx
}

/// Window bounds (0-based, clamped at the ends) for sorted position `i`.
fn window(i: usize, m: usize, t: usize) -> (usize, usize) {
    (i.saturating_sub(m), (i + m).min(t - 1))
}

/// `H = (1/T) sum_i ln(T/(2m) (y_(i+m) - y_(i-m)))`, order statistics clamped
/// to the sample range.
pub fn vasicek_entropy(values: &[f64]) -> Result<f64> {
    Ok(entropy_and_scores(values, false)?.0)
}

/// Entropy estimate together with `T * dH/dy_t` for each sample, which is the
/// score function implied by the spacing estimator.
pub fn vasicek_entropy_with_scores(values: &[f64]) -> Result<(f64, Vec<f64>)> {
    entropy_and_scores(values, true)
}

fn entropy_and_scores(values: &[f64], with_scores: bool) -> Result<(f64, Vec<f64>)> {
    let t = values.len();
    if t < 2 {
        return Err(Error::InsufficientData { needed: 2, got: t });
    }
    let m = spacing(t);
    let idx = if with_scores {
        order(values)
    } else {
        Vec::new()
    };
    let sorted: Vec<f64> = if with_scores {
        idx.iter().map(|&i| values[i]).collect()
    } else {
        let mut v = values.to_vec();
        v.sort_unstable_by(f64::total_cmp);
        v
    };
    let scale = (t as f64 / (2.0 * m as f64)).ln();
    let mut total = 0.0;
    let mut grad_sorted = if with_scores {
        vec![0.0; t]
    } else {
        Vec::new()
    };
    for i in 0..t {
        let (lo, hi) = window(i, m, t);
        let gap = sorted[hi] - sorted[lo];
        if !(gap > 0.0) {
            return Err(Error::DegenerateData(format!(
                "zero spacing around order statistic {i}; too many tied samples"
            )));
        }
        total += gap.ln();
        if with_scores {
            let inv = 1.0 / gap;
            grad_sorted[hi] += inv;
            grad_sorted[lo] -= inv;
        }
    }
    let h = total / t as f64 + scale;
    let mut scores = Vec::new();
    if with_scores {
        // T * dH/dy = accumulated 1/gap terms
        scores = vec![0.0; t];
        for (rank, &i) in idx.iter().enumerate() {
            scores[i] = grad_sorted[rank];
        }
    }
    Ok((h, scores))
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ContinuousCDF, Normal};

    fn normal_quantiles(t: usize) -> Vec<f64> {
        let n = Normal::standard();
        (0..t)
            .map(|i| n.inverse_cdf((i as f64 + 0.5) / t as f64))
            .collect()
    }

    #[test]
    fn gaussian_entropy_close_to_analytic() {
        let h = vasicek_entropy(&normal_quantiles(10_000)).unwrap();
        let exact = 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln();
        assert!((h - exact).abs() < 0.05, "{h} vs {exact}");
    }

    #[test]
    fn shift_and_scale_equivariance() {
        let y = normal_quantiles(900);
        let h = vasicek_entropy(&y).unwrap();
        let moved: Vec<f64> = y.iter().map(|v| 3.0 * v - 7.0).collect();
        assert!((vasicek_entropy(&moved).unwrap() - h - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn ties_are_rejected() {
        assert!(matches!(
            vasicek_entropy(&[1.0; 50]),
            Err(Error::DegenerateData(_))
        ));
        assert!(vasicek_entropy(&[1.0]).is_err());
    }

    #[test]
    fn scores_match_finite_differences() {
        // scrambled, non-uniform sample
        let y: Vec<f64> = (0..400)
            .map(|i| {
                let u = ((i * 7919) % 400) as f64 / 400.0 + 0.001;
                (u - 0.5).powi(3) * 8.0 + u
            })
            .collect();
        let (_, scores) = vasicek_entropy_with_scores(&y).unwrap();
        let h = 1e-7;
        for t in [0, 13, 101, 250, 399] {
            let mut plus = y.clone();
            let mut minus = y.clone();
            plus[t] += h;
            minus[t] -= h;
            let fd =
                (vasicek_entropy(&plus).unwrap() - vasicek_entropy(&minus).unwrap()) / (2.0 * h);
            let analytic = scores[t] / y.len() as f64;
            assert!(
                (fd - analytic).abs() <= 1e-5 * analytic.abs().max(1e-3),
                "sample {t}: {fd} vs {analytic}"
            );
        }
    }

    #[test]
    fn scores_satisfy_stein_identities() {
        let y = normal_quantiles(1000);
        let (_, s) = vasicek_entropy_with_scores(&y).unwrap();
        let t = y.len() as f64;
        // shift invariance: sum of scores vanishes; scale: mean(score * y) = 1
        assert!(s.iter().sum::<f64>().abs() < 1e-9);
        let stein = s.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() / t;
        assert!((stein - 1.0).abs() < 1e-9);
    }
}
