//! Seeded synthetic scenarios with known ground truth.
//!
//! Randomness comes from ChaCha8 (`rand_chacha::ChaCha8Rng`), seeded per
//! stream through `SeedableRng::seed_from_u64`. Each stream (one per source
//! channel, one for the mixing matrix) gets its own sub-seed, obtained by
//! mixing the scenario seed and the stream index with the SplitMix64
//! finalizer. Uniform variates use the top 53 bits of `next_u64`, so the
//! generated values depend only on the ChaCha8 stream and are bit-stable
//! across platforms.

use ndarray::Array2;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{forward, MixingMatrix, PnlModel, Role, SignalBlock};
use crate::nonlinearity::Nonlinearity;

pub const DEFAULT_COND_MAX: f64 = 10.0;
pub const MAX_MIXING_DRAWS: usize = 1000;
pub const MIN_SCENARIO_SAMPLES: usize = 500;

const MIXING_STREAM: u64 = u64::MAX;

/// Waveform or distribution of one source channel. Frequencies are in cycles
/// per block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceKind {
    Uniform,
    Laplace,
    Sine { freq: f64 },
    Sawtooth { freq: f64 },
}

fn default_cond_max() -> f64 {
    DEFAULT_COND_MAX
}

/// Everything needed to reproduce one synthetic PNL data set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub seed: u64,
    pub n: usize,
    pub t: usize,
    pub sources: Vec<SourceKind>,
    #[serde(default = "default_cond_max")]
    pub cond_max: f64,
    pub distortions: Vec<Nonlinearity>,
}

impl Scenario {
    /// `n` channels of one source kind with one shared distortion.
    pub fn uniform_kind(
        seed: u64,
        n: usize,
        t: usize,
        kind: SourceKind,
        distortion: Nonlinearity,
    ) -> Self {
        Scenario {
            seed,
            n,
            t,
            sources: vec![kind; n],
            cond_max: DEFAULT_COND_MAX,
            distortions: vec![distortion; n],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidParameter(format!(
                "scenario needs n >= 2, got {}",
                self.n
            )));
        }
        if self.t < MIN_SCENARIO_SAMPLES {
            return Err(Error::InvalidParameter(format!(
                "scenario needs t >= {MIN_SCENARIO_SAMPLES}, got {}",
                self.t
            )));
        }
        if !(self.cond_max >= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "cond_max must be >= 1, got {}",
                self.cond_max
            )));
        }
        if self.sources.len() != self.n || self.distortions.len() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "scenario has n = {} but {} source kinds and {} distortions",
                self.n,
                self.sources.len(),
                self.distortions.len()
            )));
        }
        for kind in &self.sources {
            if let SourceKind::Sine { freq } | SourceKind::Sawtooth { freq } = kind {
                if !(freq.is_finite() && *freq > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "waveform frequency must be positive, got {freq}"
                    )));
                }
            }
        }
        Ok(())
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Sub-seed for an independent stream of a scenario.
pub fn sub_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(seed ^ splitmix64(stream))
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(sub_seed(seed, stream))
}

/// Uniform on `[0, 1)` with 53 random bits.
fn unit(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform on the open interval `(0, 1)`.
fn open_unit(rng: &mut ChaCha8Rng) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

fn raw_channel(kind: &SourceKind, t: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let sqrt3 = 3f64.sqrt();
    let laplace_scale = std::f64::consts::FRAC_1_SQRT_2;
    match kind {
        SourceKind::Uniform => (0..t).map(|_| (2.0 * unit(rng) - 1.0) * sqrt3).collect(),
        SourceKind::Laplace => (0..t)
            .map(|_| {
                let u = open_unit(rng);
                if u < 0.5 {
                    laplace_scale * (2.0 * u).ln()
                } else {
                    -laplace_scale * (2.0 * (1.0 - u)).ln()
                }
            })
            .collect(),
        SourceKind::Sine { freq } => (0..t)
            .map(|i| (std::f64::consts::TAU * freq * i as f64 / t as f64).sin())
            .collect(),
        SourceKind::Sawtooth { freq } => (0..t)
            .map(|i| {
                let phase = freq * i as f64 / t as f64;
                2.0 * (phase - phase.floor()) - 1.0
            })
            .collect(),
    }
}

/// Subtracts the mean and divides by the population standard deviation.
pub fn standardize(x: &mut [f64]) -> Result<()> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    x.iter_mut().for_each(|v| *v -= mean);
    let var = x.iter().map(|v| v * v).sum::<f64>() / n;
    if !(var > 0.0) {
        return Err(Error::DegenerateData("channel has zero variance".into()));
    }
    let sd = var.sqrt();
    x.iter_mut().for_each(|v| *v /= sd);
    Ok(())
}

/// Zero-mean, unit-variance source channels, one independent stream each.
pub fn gen_sources(scenario: &Scenario) -> Result<SignalBlock> {
    scenario.validate()?;
    let mut channels = Vec::with_capacity(scenario.n);
    for (i, kind) in scenario.sources.iter().enumerate() {
        let mut rng = stream_rng(scenario.seed, i as u64);
        let mut ch = raw_channel(kind, scenario.t, &mut rng);
        standardize(&mut ch).map_err(|_| {
            Error::InvalidParameter(format!(
                "source {i} ({kind:?}) is constant at t = {}",
                scenario.t
            ))
        })?;
        channels.push(ch);
    }
    SignalBlock::from_channels(channels, Role::Source)
}

/// Uniform `[-1, 1]` entries, redrawn until the matrix is a genuine mixture
/// with condition number at most `cond_max`.
pub fn gen_mixing(scenario: &Scenario) -> Result<MixingMatrix> {
    scenario.validate()?;
    let n = scenario.n;
    let mut rng = stream_rng(scenario.seed, MIXING_STREAM);
    for _ in 0..MAX_MIXING_DRAWS {
        let entries = Array2::from_shape_simple_fn((n, n), || 2.0 * unit(&mut rng) - 1.0);
        if let Ok(m) = MixingMatrix::mixing(entries) {
            if m.condition_number() <= scenario.cond_max {
                return Ok(m);
            }
        }
    }
    Err(Error::Infeasible(format!(
        "no {n}x{n} mixing matrix with condition number <= {} in {MAX_MIXING_DRAWS} draws",
        scenario.cond_max
    )))
}

/// Model, sources and observations of a scenario.
pub fn build(scenario: &Scenario) -> Result<(PnlModel, SignalBlock, SignalBlock)> {
    let sources = gen_sources(scenario)?;
    let model = PnlModel::new(gen_mixing(scenario)?, scenario.distortions.clone())?;
    let observations = forward(&model, &sources)?;
    Ok((model, sources, observations))
}
