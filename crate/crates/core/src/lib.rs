//! Multi-view stereo depth estimation with selective state-space feature
//! aggregation driven by reference-centered dynamic skip scans.

pub mod config;
pub mod dynscan;
pub mod error;
pub mod eval;
pub mod io;
pub mod nn;
pub mod mvs;
pub mod network;
pub mod numeric;
pub mod pca;
pub mod selfcheck;
pub mod ssm;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
pub use numeric::{ParamId, ParamStore, Real, Tape, Tensor, Var};
