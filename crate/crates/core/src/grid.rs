//! Uniform random walks on the box `{0..n_1} x ... x {0..n_d}`.
//!
//! Each step picks one of the `2d` signed unit moves with probability
//! `1/(2d)`, then resolves moves that leave the box by the boundary rule.
//! States are indexed row-major with the last coordinate fastest.

use alloc::format;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::chain::{StateIndex, StochasticMatrix};
use crate::error::{Error, Result};

/// Default upper bound on the number of grid states.
pub const DEFAULT_STATE_CAP: usize = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Boundary {
    /// Stepping off one side re-enters from the opposite side.
    Periodic,
    /// A move that would leave the box is cancelled.
    StayStill,
    /// A move that would leave the box bounces one unit back inside.
    Reflecting,
}

impl Boundary {
    /// Short tag used on the command line and in output files.
    pub fn tag(self) -> &'static str {
        match self {
            Boundary::Periodic => "periodic",
            Boundary::StayStill => "stay",
            Boundary::Reflecting => "reflect",
        }
    }
}

impl fmt::Display for Boundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Boundary {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "periodic" | "torus" => Ok(Boundary::Periodic),
            "stay" | "staystill" | "stay-still" => Ok(Boundary::StayStill),
            "reflect" | "reflecting" => Ok(Boundary::Reflecting),
            other => Err(Error::SpecInvalid(format!("unknown boundary `{other}`"))),
        }
    }
}

/// Box dimensions plus boundary rule.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GridSpec {
    dims: Vec<usize>,
    boundary: Boundary,
}

impl GridSpec {
    pub fn new(dims: Vec<usize>, boundary: Boundary) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::SpecInvalid("grid needs at least one dimension".into()));
        }
        if let Some(a) = dims.iter().position(|&n| n == 0) {
            return Err(Error::SpecInvalid(format!("dimension {a} has zero length")));
        }
        if boundary == Boundary::Reflecting {
            if let Some(a) = dims.iter().position(|&n| n < 2) {
                return Err(Error::SpecInvalid(format!(
                    "reflecting boundary needs every side >= 2, dimension {a} has {}",
                    dims[a]
                )));
            }
        }
        let states = dims.iter().try_fold(1u128, |acc, &n| acc.checked_mul(n as u128));
        if states.is_some_and(|s| s < 2) {
            return Err(Error::SpecInvalid("grid must have at least 2 states".into()));
        }
        Ok(GridSpec { dims, boundary })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    /// `prod n_i`, or `None` on overflow.
    pub fn num_states(&self) -> Option<usize> {
        self.dims.iter().try_fold(1usize, |acc, &n| acc.checked_mul(n))
    }

    fn checked_states(&self, cap: usize) -> Result<usize> {
        match self.num_states() {
            Some(s) if s <= cap => Ok(s),
            _ => Err(Error::Overflow {
                states: self.dims.iter().fold(1u128, |acc, &n| acc.saturating_mul(n as u128)),
                cap,
            }),
        }
    }

    /// Every point of the box in index order.
    pub fn points(&self) -> impl Iterator<Item = GridPoint> + '_ {
        let total = self.num_states().unwrap_or(0);
        (0..total).map(move |i| self.unflatten(i))
    }

    fn unflatten(&self, mut i: usize) -> GridPoint {
        let mut coords = alloc::vec![0; self.dims.len()];
        for a in (0..self.dims.len()).rev() {
            coords[a] = i % self.dims[a];
            i /= self.dims[a];
        }
        GridPoint(coords)
    }

    fn check_point(&self, p: &GridPoint) -> Result<()> {
        if p.0.len() != self.dims.len() {
            return Err(Error::OutOfRange {
                what: "point dimension",
                value: p.0.len(),
                bound: self.dims.len(),
            });
        }
        for (&c, &n) in p.0.iter().zip(&self.dims) {
            if c >= n {
                return Err(Error::OutOfRange {
                    what: "coordinate",
                    value: c,
                    bound: n,
                });
            }
        }
        Ok(())
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (a, n) in self.dims.iter().enumerate() {
            if a > 0 {
                f.write_str("x")?;
            }
            write!(f, "{n}")?;
        }
        write!(f, " {}", self.boundary)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GridPoint(Vec<usize>);

impl GridPoint {
    pub fn new(coords: Vec<usize>) -> Self {
        GridPoint(coords)
    }

    pub fn coords(&self) -> &[usize] {
        &self.0
    }
}

impl From<Vec<usize>> for GridPoint {
    fn from(v: Vec<usize>) -> Self {
        GridPoint(v)
    }
}

pub fn point_to_index(spec: &GridSpec, p: &GridPoint) -> Result<StateIndex> {
    spec.check_point(p)?;
    let idx = p.0.iter().zip(&spec.dims).fold(0usize, |acc, (&c, &n)| acc * n + c);
    StateIndex::new(idx, spec.num_states().unwrap_or(usize::MAX))
}

pub fn index_to_point(spec: &GridSpec, i: StateIndex) -> Result<GridPoint> {
    let total = spec.num_states().unwrap_or(usize::MAX);
    if i.get() >= total {
        return Err(Error::OutOfRange {
            what: "state",
            value: i.get(),
            bound: total,
        });
    }
    Ok(spec.unflatten(i.get()))
}

/// Number of coordinates sitting on the boundary: 0 for interior points,
/// `d` for corners, always 0 on a torus.
pub fn classify_vertex(spec: &GridSpec, p: &GridPoint) -> Result<usize> {
    spec.check_point(p)?;
    if spec.boundary == Boundary::Periodic {
        return Ok(0);
    }
    Ok(p.0
        .iter()
        .zip(&spec.dims)
        .filter(|&(&c, &n)| c == 0 || c + 1 == n)
        .count())
}

pub fn build_grid_chain(spec: &GridSpec) -> Result<StochasticMatrix> {
    build_grid_chain_capped(spec, DEFAULT_STATE_CAP)
}

pub fn build_grid_chain_capped(spec: &GridSpec, cap: usize) -> Result<StochasticMatrix> {
    let n = spec.checked_states(cap)?;
    let d = spec.ndim();
    let moves = (2 * d) as f64;

    let mut strides = alloc::vec![1usize; d];
    for a in (0..d.saturating_sub(1)).rev() {
        strides[a] = strides[a + 1] * spec.dims[a + 1];
    }

    let mut entries = Vec::with_capacity(n * 2 * d);
    let mut targets = Vec::with_capacity(2 * d);
    for x in 0..n {
        targets.clear();
        for a in 0..d {
            let len = spec.dims[a];
            let c = (x / strides[a]) % len;
            for up in [false, true] {
                let to = step(c, len, up, spec.boundary);
                targets.push(x - c * strides[a] + to * strides[a]);
            }
        }
        targets.sort_unstable();
        let mut k = 0;
        while k < targets.len() {
            let y = targets[k];
            let run = targets[k..].iter().take_while(|&&t| t == y).count();
            entries.push((x, y, run as f64 / moves));
            k += run;
        }
    }
    StochasticMatrix::from_sparse_rows(n, &entries)
}

/// Target coordinate of a unit move from `c` on an axis of length `len`.
fn step(c: usize, len: usize, up: bool, boundary: Boundary) -> usize {
    let inside = if up { c + 1 < len } else { c > 0 };
    if inside {
        return if up { c + 1 } else { c - 1 };
    }
    match boundary {
        Boundary::Periodic => {
            if up {
                0
            } else {
                len - 1
            }
        }
        Boundary::StayStill => c,
        Boundary::Reflecting => {
            if up {
                c - 1
            } else {
                c + 1
            }
        }
    }
}
