//! Dense tensors with tape-based reverse-mode differentiation.

mod conv;
mod gradcheck;
mod norm;
mod ops;
mod param;
mod sample;
mod tape;
mod tensor;

#[cfg(not(feature = "single-precision"))]
pub type Real = f64;
#[cfg(feature = "single-precision")]
pub type Real = f32;

pub use gradcheck::{all_probes, finite_diff_check, finite_diff_check_params, relative_error};
pub use norm::LAYER_NORM_EPS;
pub use param::{Param, ParamId, ParamStore};
pub use tape::{Tape, Var};
pub use tensor::Tensor;

pub(crate) use tape::BackwardArgs;
