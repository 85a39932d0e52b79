use std::fmt;
use std::rc::Rc;

use crate::error::{bail_arg, bail_shape, Error, Result};
use crate::numeric::{Tape, Var};

/// Traversal order of a skip scan, named after the glyph it traces.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    /// Columns left to right, each column top to bottom.
    N,
    /// Columns right to left, each column top to bottom.
    InvN,
    /// Rows top to bottom, each row left to right.
    Z,
    /// Rows bottom to top, each row left to right.
    InvZ,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::N, Direction::InvN, Direction::Z, Direction::InvZ];

    /// Direction for index `d ∈ 1..=4`.
    pub fn from_index(d: usize) -> Result<Self> {
        match d {
            1..=4 => Ok(Self::ALL[d - 1]),
            _ => Err(Error::Argument(format!("direction index {d} outside 1..=4"))),
        }
    }

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&d| d == self).unwrap() + 1
    }

    /// Arrangement this direction is paired with.
    pub fn arrangement(self) -> ArrangementKind {
        ArrangementKind::ALL[self.index() - 1]
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::N => "N",
            Direction::InvN => "iN",
            Direction::Z => "Z",
            Direction::InvZ => "iZ",
        })
    }
}

/// Where the reference sits relative to the source in a concatenated map.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ArrangementKind {
    /// `[ref | src]`
    Hr,
    /// `[src | ref]`
    Hl,
    /// ref on top of src
    Vb,
    /// src on top of ref
    Vt,
}

impl ArrangementKind {
    pub const ALL: [ArrangementKind; 4] = [Self::Hr, Self::Hl, Self::Vb, Self::Vt];

    pub fn direction(self) -> Direction {
        Direction::ALL[Self::ALL.iter().position(|&k| k == self).unwrap()]
    }

    pub fn is_horizontal(self) -> bool {
        matches!(self, Self::Hr | Self::Hl)
    }

    /// Grid extents and `(ref, src)` regions for `h×w` inputs.
    pub fn regions(self, h: usize, w: usize) -> ((usize, usize), Region, Region) {
        let top = |r0| Region { row0: r0, col0: 0, rows: h, cols: w };
        let left = |c0| Region { row0: 0, col0: c0, rows: h, cols: w };
        match self {
            Self::Hr => ((h, 2 * w), left(0), left(w)),
            Self::Hl => ((h, 2 * w), left(w), left(0)),
            Self::Vb => ((2 * h, w), top(0), top(h)),
            Self::Vt => ((2 * h, w), top(h), top(0)),
        }
    }
}

impl fmt::Display for ArrangementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Hr => "HR",
            Self::Hl => "HL",
            Self::Vb => "VB",
            Self::Vt => "VT",
        })
    }
}

/// Axis-aligned block of a grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Region {
    pub row0: usize,
    pub col0: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Region {
    pub fn contains(&self, (r, c): (usize, usize)) -> bool {
        (self.row0..self.row0 + self.rows).contains(&r) && (self.col0..self.col0 + self.cols).contains(&c)
    }

    /// Cuts this region out of a `[C,H,W]` map.
    pub fn extract(&self, tape: &mut Tape, map: Var) -> Result<Var> {
        let v = tape.slice(map, 1, self.row0, self.rows)?;
        tape.slice(v, 2, self.col0, self.cols)
    }
}

/// Ordered visit list of one parity class of an `H×W` grid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScanLayout {
    pub direction: Direction,
    pub start: (usize, usize),
    pub height: usize,
    pub width: usize,
    pub positions: Vec<(usize, usize)>,
}

pub const SCAN_STEP: usize = 2;

impl ScanLayout {
    /// With `zigzag`, the in-line order flips on every other column (N, iN)
    /// or row (Z, iZ).
    pub fn new(direction: Direction, start: (usize, usize), height: usize, width: usize, zigzag: bool) -> Result<Self> {
        if start.0 > 1 || start.1 > 1 {
            bail_arg!("scan start {start:?} is not a parity pair");
        }
        if height % 2 != 0 || width % 2 != 0 || height == 0 || width == 0 {
            bail_arg!("scan grid {height}x{width} must have even positive extents");
        }
        let rows: Vec<usize> = (start.0..height).step_by(SCAN_STEP).collect();
        let cols: Vec<usize> = (start.1..width).step_by(SCAN_STEP).collect();
        let mut positions = Vec::with_capacity(rows.len() * cols.len());
        let line = |i: usize, items: &[usize]| -> Vec<usize> {
            if zigzag && i % 2 == 1 {
                items.iter().rev().copied().collect()
            } else {
                items.to_vec()
            }
        };
        match direction {
            Direction::N | Direction::InvN => {
                let outer: Vec<usize> = if direction == Direction::N { cols } else { cols.into_iter().rev().collect() };
                for (i, &c) in outer.iter().enumerate() {
                    positions.extend(line(i, &rows).into_iter().map(|r| (r, c)));
                }
            }
            Direction::Z | Direction::InvZ => {
                let outer: Vec<usize> = if direction == Direction::Z { rows } else { rows.into_iter().rev().collect() };
                for (i, &r) in outer.iter().enumerate() {
                    positions.extend(line(i, &cols).into_iter().map(|c| (r, c)));
                }
            }
        }
        Ok(Self { direction, start, height, width, positions })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Sequence index of every grid cell, `None` off the parity class.
    pub fn order_map(&self) -> Vec<Option<usize>> {
        let mut m = vec![None; self.height * self.width];
        for (i, &(r, c)) in self.positions.iter().enumerate() {
            m[r * self.width + c] = Some(i);
        }
        m
    }

    fn flat_indices(&self, channels: usize) -> Rc<[usize]> {
        let hw = self.height * self.width;
        self.positions
            .iter()
            .flat_map(|&(r, c)| (0..channels).map(move |ch| ch * hw + r * self.width + c))
            .collect()
    }

    fn check_map(&self, shape: &[usize]) -> Result<usize> {
        if shape.len() != 3 || shape[1] != self.height || shape[2] != self.width {
            bail_shape!("layout for {}x{} applied to map {shape:?}", self.height, self.width);
        }
        Ok(shape[0])
    }
}

/// Gathers the layout's cells of a `[C,H,W]` map into a `[L,C]` sequence.
pub fn skip_scan(tape: &mut Tape, map: Var, layout: &ScanLayout) -> Result<Var> {
    let c = layout.check_map(tape.shape(map))?;
    tape.gather(map, layout.flat_indices(c), vec![layout.len(), c])
}

/// Scatters a `[L,C]` sequence back onto a zero `[C,H,W]` map.
pub fn inverse_scan(tape: &mut Tape, seq: Var, layout: &ScanLayout) -> Result<Var> {
    let s = tape.shape(seq).to_vec();
    if s.len() != 2 || s[0] != layout.len() {
        bail_arg!("sequence {s:?} does not match a layout of length {}", layout.len());
    }
    let c = s[1];
    tape.scatter(seq, layout.flat_indices(c), vec![c, layout.height, layout.width])
}
