//! Reference-centered dynamic scanning: arrangements of a reference/source
//! pair, parity skip scans that always run from reference into source, and
//! the modules that enhance features along those scans.

mod layout;
mod module;
mod strategy;

pub use layout::{inverse_scan, skip_scan, ArrangementKind, Direction, Region, ScanLayout, SCAN_STEP};
pub use module::{arrange, merge, Arrangement, DmModule, Enhancer, ScannedMap, SdmModule};
pub use strategy::{start_coords, DynamicScan, ScanStrategy, BASE_STARTS};
