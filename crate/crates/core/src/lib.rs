//! Post-nonlinear (PNL) mixture simulation and blind separation.
//!
//! Sources `s` are mixed by a square matrix `A`, distorted channel by channel
//! by strictly increasing functions `f_i`, and observed as `x`. Separation
//! learns monotone compensators `g_i` and an unmixing matrix `W` such that
//! `y = W g(x)` has mutually independent channels, measured by a
//! mutual-information contrast.

pub mod datagen;
pub mod error;
pub mod estimation;
pub mod evaluation;
pub mod gradcheck;
pub mod linalg;
pub mod model;
pub mod nonlinearity;

pub use error::{Error, Result};
pub use model::{
    apply_nonlinearities, compensate, forward, mix_linear, separate, unmix, MixingMatrix, PnlModel,
    Role, Separator, SignalBlock,
};
pub use nonlinearity::{Family, Interval, Nonlinearity};
