//! Invariant suite behind the `selfcheck` command.

mod instance;
mod suite;

pub use instance::gradcheck_instance;
pub use suite::{run_suite, CheckResult, Report, SuiteOptions};
