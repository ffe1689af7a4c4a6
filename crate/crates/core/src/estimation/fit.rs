//! Alternating training loop for the separator.

use std::f64::consts::FRAC_PI_2;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::contrast::{
    contrast, contrast_with_unmixing, entropy_scores, run_pass, ContrastValue, Pass,
};
use super::entropy::vasicek_entropy;
use super::score::{score_fn, ScoreEstimator};
use super::update::{g_update, normalize_compensators, w_update};
use super::whiten::whiten;
use crate::error::{Error, Result};
use crate::model::{compensate, separate, MixingMatrix, Role, Separator, SignalBlock};
use crate::nonlinearity::{Nonlinearity, DEFAULT_KNOTS};

pub const MIN_FIT_SAMPLES: usize = 500;

/// Number of consecutive small-improvement iterations that ends training.
pub const STALL_WINDOW: usize = 5;

fn default_max_outer_iters() -> usize {
    300
}
fn default_w_step() -> f64 {
    0.5
}
fn default_g_step() -> f64 {
    0.5
}
fn default_step_halvings() -> usize {
    12
}
fn default_converge_tol() -> f64 {
    1e-7
}
fn default_init_rotations() -> usize {
    16
}
fn default_restarts() -> usize {
    4
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default = "default_max_outer_iters")]
    pub max_outer_iters: usize,
    #[serde(default = "default_w_step")]
    pub w_step: f64,
    #[serde(default = "default_g_step")]
    pub g_step: f64,
    #[serde(default = "default_step_halvings")]
    pub step_halvings: usize,
    #[serde(default = "default_converge_tol")]
    pub converge_tol: f64,
    /// Recorded with the results; training itself draws no random numbers.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub score_estimator: ScoreEstimator,
    /// Keep every compensator at the identity and train `W` only.
    #[serde(default)]
    pub freeze_compensators: bool,
    /// Angles tried per channel pair in the initial rotation sweep; 0 or 1
    /// skips the sweep.
    #[serde(default = "default_init_rotations")]
    pub init_rotations: usize,
    /// Number of starting rotations trained to completion; the run with the
    /// lowest final contrast is kept.
    #[serde(default = "default_restarts")]
    pub restarts: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_outer_iters: default_max_outer_iters(),
            w_step: default_w_step(),
            g_step: default_g_step(),
            step_halvings: default_step_halvings(),
            converge_tol: default_converge_tol(),
            seed: 0,
            score_estimator: ScoreEstimator::default(),
            freeze_compensators: false,
            init_rotations: default_init_rotations(),
            restarts: default_restarts(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_outer_iters < 1 {
            return Err(Error::InvalidParameter(
                "max_outer_iters must be >= 1".into(),
            ));
        }
        if self.restarts < 1 {
            return Err(Error::InvalidParameter("restarts must be >= 1".into()));
        }
        for (name, v) in [
            ("w_step", self.w_step),
            ("g_step", self.g_step),
            ("converge_tol", self.converge_tol),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Contrast after one outer iteration, with the step sizes that were
/// accepted (`None` when every halving was rejected or the update is frozen).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub contrast: ContrastValue,
    pub w_step: Option<f64>,
    pub g_step: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    /// Record 0 is the initial separator; record `k` follows outer iteration `k`.
    pub records: Vec<TraceRecord>,
    pub converged: bool,
    /// Index of the starting rotation that produced this trace.
    #[serde(default)]
    pub start: usize,
    /// Final contrast of every start, in start order.
    #[serde(default)]
    pub start_contrasts: Vec<f64>,
}

impl TrainingTrace {
    pub fn totals(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.contrast.total).collect()
    }

    pub fn is_non_increasing(&self) -> bool {
        self.records
            .windows(2)
            .all(|w| w[1].contrast.total <= w[0].contrast.total)
    }
}

/// Initial separator: marginal Gaussianization of every channel (or identity
/// when frozen), symmetric whitening of the compensated signals, then one
/// Jacobi sweep that rotates each channel pair to the angle with the lowest
/// summed output entropy among `init_rotations` equally spaced candidates.
pub fn initial_separator(x: &SignalBlock, cfg: &TrainConfig) -> Result<Separator> {
    Ok(initial_separators(x, cfg, 1)?.remove(0))
}

/// Starting points for `starts` runs: the sweep's best rotation, offset in
/// every channel pair by `k * (pi/2) / starts` for start `k`.
fn initial_separators(x: &SignalBlock, cfg: &TrainConfig, starts: usize) -> Result<Vec<Separator>> {
    let n = x.channels();
    let gs = if cfg.freeze_compensators {
        vec![Nonlinearity::identity(); n]
    } else {
        (0..n)
            .map(|i| Nonlinearity::gaussianizer(x.channel_slice(i), DEFAULT_KNOTS))
            .collect::<Result<Vec<_>>>()?
    };
    let sep = normalize_compensators(&Separator::new(gs, MixingMatrix::identity(n))?, x)?;
    let e = compensate(sep.compensators(), x)?;
    let (_, whitening) = whiten(&e)?;
    let w = whitening.matrix.dot(sep.unmixing().entries());
    let y = w.dot(e.data());
    let angles = sweep_angles(&y, cfg.init_rotations)?;
    (0..starts)
        .map(|k| {
            let offset = FRAC_PI_2 * k as f64 / starts as f64;
            let r = pair_rotations(n, &angles, offset);
            Separator::new(sep.compensators().to_vec(), MixingMatrix::new(r.dot(&w))?)
        })
        .collect()
}

fn givens(n: usize, i: usize, j: usize, theta: f64) -> Array2<f64> {
    let (s, c) = theta.sin_cos();
    let mut g = Array2::<f64>::eye(n);
    g[[i, i]] = c;
    g[[i, j]] = -s;
    g[[j, i]] = s;
    g[[j, j]] = c;
    g
}

/// Angle chosen for every channel pair `(i, j)`, `i < j`, in sweep order.
fn sweep_angles(y: &Array2<f64>, angles: usize) -> Result<Vec<f64>> {
    let n = y.nrows();
    let mut y = y.clone();
    let mut chosen = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let mut best = (0.0, f64::INFINITY);
            if angles > 1 {
                for k in 0..angles {
                    let theta = FRAC_PI_2 * k as f64 / angles as f64;
                    let (s, c) = theta.sin_cos();
                    let (a, b): (Vec<f64>, Vec<f64>) = y
                        .row(i)
                        .iter()
                        .zip(y.row(j))
                        .map(|(p, q)| (c * p - s * q, s * p + c * q))
                        .unzip();
                    let h = vasicek_entropy(&a)? + vasicek_entropy(&b)?;
                    if h < best.1 {
                        best = (theta, h);
                    }
                }
            }
            y = givens(n, i, j, best.0).dot(&y);
            chosen.push(best.0);
        }
    }
    Ok(chosen)
}

fn pair_rotations(n: usize, angles: &[f64], offset: f64) -> Array2<f64> {
    let mut total = Array2::<f64>::eye(n);
    let mut k = 0;
    for i in 0..n {
        for j in i + 1..n {
            total = givens(n, i, j, angles[k] + offset).dot(&total);
            k += 1;
        }
    }
    total
}

/// Largest halving of `cfg.w_step` whose update does not increase the contrast.
fn w_step(
    sep: &Separator,
    pass: &Pass,
    y: &SignalBlock,
    scores: &[Vec<f64>],
    cfg: &TrainConfig,
    current: f64,
) -> Result<Option<(Separator, ContrastValue, f64)>> {
    let mut step = cfg.w_step;
    for _ in 0..=cfg.step_halvings {
        if let Ok(w) = w_update(sep.unmixing(), y, scores, step, cfg.step_halvings) {
            if let Ok(c) = contrast_with_unmixing(pass, &w) {
                if c.total <= current {
                    let cand = Separator::new(sep.compensators().to_vec(), w)?;
                    return Ok(Some((cand, c, step)));
                }
            }
        }
        step *= 0.5;
    }
    Ok(None)
}

fn g_step(
    sep: &Separator,
    x: &SignalBlock,
    cfg: &TrainConfig,
    current: f64,
) -> Result<Option<(Separator, ContrastValue, f64)>> {
    let scores = entropy_scores(&separate(sep, x)?)?;
    let mut step = cfg.g_step;
    for _ in 0..=cfg.step_halvings {
        if let Ok(cand) = g_update(sep, x, &scores, step) {
            if let Ok(c) = contrast(&cand, x) {
                if c.total <= current {
                    return Ok(Some((cand, c, step)));
                }
            }
        }
        step *= 0.5;
    }
    Ok(None)
}

/// Learns a separator from observations alone. See [`fit_with_observer`].
pub fn fit(x: &SignalBlock, cfg: &TrainConfig) -> Result<(Separator, TrainingTrace)> {
    fit_with_observer(x, cfg, |_, _| {})
}

/// Trains from `cfg.restarts` starting rotations (see [`initial_separator`])
/// with [`fit_from`] and keeps the run whose final contrast is lowest, the
/// earliest start winning ties.
///
/// `observer` sees the separator after every outer iteration of the kept
/// run. No randomness is involved, so identical inputs give bit-identical
/// results.
pub fn fit_with_observer<F>(
    x: &SignalBlock,
    cfg: &TrainConfig,
    mut observer: F,
) -> Result<(Separator, TrainingTrace)>
where
    F: FnMut(usize, &Separator),
{
    cfg.validate()?;
    x.expect_role(Role::Observation)?;
    if x.samples() < MIN_FIT_SAMPLES {
        return Err(Error::InsufficientData {
            needed: MIN_FIT_SAMPLES,
            got: x.samples(),
        });
    }

    let mut best: Option<(Separator, TrainingTrace, Vec<Separator>)> = None;
    let mut finals = Vec::with_capacity(cfg.restarts);
    for (k, start) in initial_separators(x, cfg, cfg.restarts)?
        .into_iter()
        .enumerate()
    {
        let mut snapshots = Vec::new();
        let (sep, mut trace) = fit_from(x, cfg, start, |_, s| snapshots.push(s.clone()))?;
        let total = final_total(&trace);
        finals.push(total);
        if best.as_ref().is_none_or(|(_, t, _)| total < final_total(t)) {
            trace.start = k;
            best = Some((sep, trace, snapshots));
        }
    }
    let (sep, mut trace, snapshots) = best.expect("at least one start");
    for (i, s) in snapshots.iter().enumerate() {
        observer(i + 1, s);
    }
    trace.start_contrasts = finals;
    Ok((sep, trace))
}

fn final_total(trace: &TrainingTrace) -> f64 {
    trace
        .records
        .last()
        .map_or(f64::INFINITY, |r| r.contrast.total)
}

/// One training run from `sep`: each outer iteration takes a relative-gradient
/// step on `W` driven by the configured score estimator, then a projected
/// step on the compensators driven by the exact contrast gradient. Each step
/// is halved until the contrast does not increase, up to `step_halvings`
/// times. When no `W` step qualifies, the direction is recomputed from the
/// exact entropy scores and tried once more; a step that still fails is
/// skipped. Training stops after [`STALL_WINDOW`] consecutive iterations that
/// improve the contrast by less than `converge_tol`, or at `max_outer_iters`.
pub fn fit_from<F>(
    x: &SignalBlock,
    cfg: &TrainConfig,
    mut sep: Separator,
    mut observer: F,
) -> Result<(Separator, TrainingTrace)>
where
    F: FnMut(usize, &Separator),
{
    cfg.validate()?;
    x.expect_role(Role::Observation)?;
    let mut current = contrast(&sep, x)?;
    let mut trace = TrainingTrace {
        records: vec![TraceRecord {
            iter: 0,
            contrast: current,
            w_step: None,
            g_step: None,
        }],
        ..Default::default()
    };
    let mut stall = 0;

    for iter in 1..=cfg.max_outer_iters {
        let start = current.total;

        let pass = run_pass(&sep, x)?;
        let y = &pass.outputs;
        let scores = (0..y.channels())
            .map(|k| score_fn(y.channel_slice(k), cfg.score_estimator))
            .collect::<Result<Vec<_>>>()?;
        let mut w_taken = None;
        let mut attempt = w_step(&sep, &pass, y, &scores, cfg, current.total)?;
        if attempt.is_none() {
            attempt = w_step(&sep, &pass, y, &entropy_scores(y)?, cfg, current.total)?;
        }
        if let Some((cand, c, step)) = attempt {
            sep = cand;
            current = c;
            w_taken = Some(step);
        }

        let mut g_taken = None;
        if !cfg.freeze_compensators {
            if let Some((cand, c, step)) = g_step(&sep, x, cfg, current.total)? {
                sep = cand;
                current = c;
                g_taken = Some(step);
            }
        }

        trace.records.push(TraceRecord {
            iter,
            contrast: current,
            w_step: w_taken,
            g_step: g_taken,
        });
        observer(iter, &sep);

        if start - current.total < cfg.converge_tol {
            stall += 1;
            if stall >= STALL_WINDOW {
                trace.converged = true;
                break;
            }
        } else {
            stall = 0;
        }
    }
    Ok((sep, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{gen_sources, Scenario, SourceKind};
    use crate::evaluation::{amari_index, GlobalMap};

    fn uniform_block(t: usize) -> SignalBlock {
        let sc = Scenario::uniform_kind(
            7,
            2,
            t.max(500),
            SourceKind::Uniform,
            Nonlinearity::identity(),
        );
        let s = gen_sources(&sc).unwrap();
        let data = s.data().slice(ndarray::s![.., ..t]).to_owned();
        SignalBlock::new(data, Role::Observation).unwrap()
    }

    #[test]
    fn already_separated_input_stays_separated() {
        let x = uniform_block(2000);
        let cfg = TrainConfig {
            freeze_compensators: true,
            ..Default::default()
        };
        let (sep, trace) = fit(&x, &cfg).unwrap();
        let amari =
            amari_index(&GlobalMap::new(sep.unmixing().entries().clone()).unwrap()).unwrap();
        assert!(amari < 0.05, "amari {amari}");
        assert!(trace.is_non_increasing());
        assert_eq!(trace.start_contrasts.len(), cfg.restarts);
    }

    #[test]
    fn trainable_run_is_monotone_and_deterministic() {
        let x = uniform_block(1000);
        let cfg = TrainConfig {
            max_outer_iters: 15,
            restarts: 2,
            ..Default::default()
        };
        let mut seen = Vec::new();
        let (a, ta) = fit_with_observer(&x, &cfg, |i, _| seen.push(i)).unwrap();
        let (b, tb) = fit(&x, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        assert!(ta.is_non_increasing());
        assert_eq!(seen, (1..ta.records.len()).collect::<Vec<_>>());
        let kept = final_total(&ta);
        assert!(ta.start_contrasts.iter().all(|&c| kept <= c));
    }

    #[test]
    fn rejects_bad_input() {
        let x = uniform_block(499);
        assert!(matches!(
            fit(&x, &TrainConfig::default()),
            Err(Error::InsufficientData { needed: 500, .. })
        ));
        let x = uniform_block(600);
        let cfg = TrainConfig {
            restarts: 0,
            ..Default::default()
        };
        assert!(matches!(fit(&x, &cfg), Err(Error::InvalidParameter(_))));
        let src = SignalBlock::new(x.data().clone(), Role::Source).unwrap();
        assert!(matches!(
            fit(&src, &TrainConfig::default()),
            Err(Error::RoleMismatch { .. })
        ));
    }
}
