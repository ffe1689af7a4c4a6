//! Shared inputs for the benchmarks.

use pnl_core::datagen::{build, Scenario, SourceKind};
use pnl_core::estimation::{initial_separator, TrainConfig};
use pnl_core::{separate, Nonlinearity, Separator, SignalBlock};

/// A seeded two-channel cubic-distorted mixture with `t` samples.
pub fn observations(t: usize) -> SignalBlock {
    let sc = Scenario {
        seed: 42,
        n: 2,
        t,
        sources: vec![SourceKind::Uniform, SourceKind::Laplace],
        cond_max: 10.0,
        distortions: vec![Nonlinearity::cubic(0.3).unwrap(); 2],
    };
    build(&sc).unwrap().2
}

/// Observations together with the training start point and its outputs.
pub struct Fixture {
    pub x: SignalBlock,
    pub sep: Separator,
    pub y: SignalBlock,
}

pub fn fixture(t: usize) -> Fixture {
    let x = observations(t);
    let sep = initial_separator(&x, &TrainConfig::default()).unwrap();
    let y = separate(&sep, &x).unwrap();
    Fixture { x, sep, y }
}
