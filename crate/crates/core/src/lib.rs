//! Continuous-time channel prediction for mmWave massive MIMO.
pub mod autodiff;
pub mod baselines;
pub mod channelsim;
pub mod ctmath;
pub mod error;
pub mod evalkit;
pub mod tnode;
pub mod training;
pub(crate) mod wire;

pub use error::{Error, Result};
