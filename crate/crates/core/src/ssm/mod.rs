//! Selective state-space layers: discretization, recurrent and kernel
//! evaluation of the diagonal SSM, and the gated residual block built on it.

mod block;
mod scan;

pub use block::{selective_scan, MambaBlock, MambaConfig};
pub use scan::{discretize, kernel_convolve, scan_recurrent, ssm_kernel, InputRule, ScanInputs, ScanTrace};
