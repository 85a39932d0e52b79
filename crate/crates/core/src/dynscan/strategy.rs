use super::{Direction, ScanLayout};
use crate::error::{bail_arg, Result};

/// Parity offsets assigned to directions 1..4 before rotation.
pub const BASE_STARTS: [(usize, usize); 4] = [(1, 0), (0, 0), (0, 1), (1, 1)];

/// Start parity of direction `d ∈ 1..=4` for source index `k ≥ 1`: the base
/// table rotated by `k − 1`.
pub fn start_coords(d: usize, k: usize) -> Result<(usize, usize)> {
    rotate(&BASE_STARTS, d, k)
}

fn rotate(table: &[(usize, usize); 4], d: usize, k: usize) -> Result<(usize, usize)> {
    if !(1..=4).contains(&d) {
        bail_arg!("direction index {d} outside 1..=4");
    }
    if k == 0 {
        bail_arg!("source index starts at 1");
    }
    Ok(table[(d - 1 + k - 1) % 4])
}

/// Hook for swapping how sequences are laid out over a grid.
pub trait ScanStrategy: std::fmt::Debug {
    fn start(&self, d: usize, k: usize) -> Result<(usize, usize)>;

    fn layout(&self, direction: Direction, start: (usize, usize), height: usize, width: usize) -> Result<ScanLayout>;
}

/// Reference-centered dynamic skip scan.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DynamicScan {
    pub table: [(usize, usize); 4],
    pub zigzag: bool,
}

impl Default for DynamicScan {
    fn default() -> Self {
        Self { table: BASE_STARTS, zigzag: false }
    }
}

impl DynamicScan {
    pub fn with_zigzag(zigzag: bool) -> Self {
        Self { zigzag, ..Self::default() }
    }
}

impl ScanStrategy for DynamicScan {
    fn start(&self, d: usize, k: usize) -> Result<(usize, usize)> {
        rotate(&self.table, d, k)
    }

    fn layout(&self, direction: Direction, start: (usize, usize), height: usize, width: usize) -> Result<ScanLayout> {
        ScanLayout::new(direction, start, height, width, self.zigzag)
    }
}
