//! Rayon drivers. Both produce exactly what their sequential counterparts in
//! the core crate produce.

use firstreturn_core::grid::{build_grid_chain, point_to_index};
use firstreturn_core::montecarlo::{merge_pairwise, ReturnSampler};
use firstreturn_core::return_time::{verify_origin, VerifyReport};
use firstreturn_core::{
    Error, GridPoint, GridSpec, Result, ReturnMoments, SimulationStats, StateIndex, StochasticMatrix, DENSE_CAP,
};
use rayon::prelude::*;

/// Episodes per work item.
pub const DEFAULT_CHUNK: u64 = 1024;

/// Parallel Monte Carlo over fixed `chunk`-sized episode ranges.
///
/// Chunk boundaries do not depend on the thread count, and the reduction
/// is exact integer addition, so the result is bit-identical to
/// [`firstreturn_core::monte_carlo_estimate`] for every `chunk`.
pub fn monte_carlo_parallel(
    u: &StochasticMatrix,
    o: StateIndex,
    episodes: u64,
    seed: u64,
    step_cap: u64,
    chunk: u64,
) -> Result<SimulationStats> {
    if episodes == 0 || step_cap == 0 {
        return Err(Error::InvalidArgument("episodes and step_cap must be >= 1".into()));
    }
    if o.get() >= u.n_states() {
        return Err(Error::OutOfRange {
            what: "origin",
            value: o.get(),
            bound: u.n_states(),
        });
    }
    let chunk = chunk.max(1);
    let sampler = ReturnSampler::new(u);
    let parts: Vec<ReturnMoments> = (0..episodes.div_ceil(chunk))
        .into_par_iter()
        .map(|c| sampler.simulate_range(o, seed, c * chunk..((c + 1) * chunk).min(episodes), step_cap))
        .collect();
    merge_pairwise(&parts).finish(seed)
}

/// [`firstreturn_core::return_time::verify`] with origins spread over threads.
pub fn verify_parallel(spec: &GridSpec, origins: &[GridPoint]) -> Result<VerifyReport> {
    let n = spec.num_states().unwrap_or(usize::MAX);
    if n > DENSE_CAP {
        return Err(Error::DenseCapExceeded {
            size: n,
            cap: DENSE_CAP,
        });
    }
    let u = build_grid_chain(spec)?;
    let indices = origins
        .iter()
        .map(|p| point_to_index(spec, p))
        .collect::<Result<Vec<_>>>()?;
    let reports = indices
        .into_par_iter()
        .map(|o| verify_origin(spec, &u, o))
        .collect::<Result<Vec<_>>>()?;
    Ok(VerifyReport::from_origins(reports))
}
