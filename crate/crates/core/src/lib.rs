//! Expected first return times of random walks on finite graphs.
//!
//! The central construction removes the origin `o` from the chain and routes
//! every transition that would enter `o` into a waiting state `l`, which in
//! turn feeds an absorbing state `b`. The surviving block `Q` of transitions
//! among the non-origin states is substochastic with spectral radius below
//! one, so the fundamental matrix `(I - Q)^-1` exists and the mean return
//! time reduces to a pair of linear solves.
//!
//! Every analytic route is paired with an independent check:
//!
//! * [`return_time::expected_return_time`], the fundamental-matrix formula,
//! * [`return_time::hitting_time_oracle`], a dense first-step solve,
//! * [`return_time::kac_return_time`], the reciprocal stationary mass,
//! * [`montecarlo::monte_carlo_estimate`], seeded direct simulation,
//! * [`return_time::closed_form_return_time`], closed forms on boxes.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the parallel
//! drivers and the command line live in the `firstreturn` crate.
#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod chain;
pub mod dense;
pub mod error;
pub mod grid;
pub mod montecarlo;
pub mod return_time;
pub mod solvers;
pub mod waiting_room;

pub use chain::{validate_entries, ChainViolation, StateIndex, StochasticMatrix, ValidationReport};
pub use error::{Error, Result};
pub use grid::{Boundary, GridPoint, GridSpec};
pub use montecarlo::{monte_carlo_estimate, ReturnMoments, ReturnSampler, SimulationStats};
pub use return_time::{Diagnostics, ReturnMethod, ReturnTimeResult, VerifyReport};
pub use solvers::{SeriesOrder, SolveDiagnostics, SolveMethod};
pub use waiting_room::WaitingRoom;

/// Largest system handled by the dense verification paths.
pub const DENSE_CAP: usize = 2000;

/// Absolute tolerance on row sums of an accepted transition matrix.
pub const ROW_SUM_TOL: f64 = 1e-12;
