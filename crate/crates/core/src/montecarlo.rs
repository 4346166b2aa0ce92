//! Seeded simulation of first returns.
//!
//! Episode `i` draws from its own ChaCha8 stream, keyed by the master seed
//! and selected with `set_stream(i)`, so its path does not depend on which
//! worker runs it. Return lengths are integers and are accumulated as exact
//! integer moments; merging two accumulators is plain addition, so any
//! partition of the episodes yields bit-identical statistics.

use alloc::vec::Vec;
use core::ops::Range;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::chain::{StateIndex, StochasticMatrix};
use crate::error::{Error, Result};

/// Default per-episode step cap.
pub const DEFAULT_STEP_CAP: u64 = 10_000_000;

/// The RNG stream of one episode.
pub fn episode_rng(seed: u64, episode: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(episode);
    rng
}

#[inline]
fn unit_f64(rng: &mut impl RngCore) -> f64 {
    // 53 random bits in [0, 1)
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Inverse-CDF sampler over the rows of a chain.
#[derive(Debug, Clone)]
pub struct ReturnSampler<'a> {
    chain: &'a StochasticMatrix,
    // cumulative probabilities, laid out like the chain's rows
    cumulative: Vec<Vec<f64>>,
}

impl<'a> ReturnSampler<'a> {
    pub fn new(chain: &'a StochasticMatrix) -> Self {
        let cumulative = (0..chain.n_states())
            .map(|x| {
                let mut acc = 0.0;
                chain
                    .row(x)
                    .1
                    .iter()
                    .map(|p| {
                        acc += p;
                        acc
                    })
                    .collect()
            })
            .collect();
        ReturnSampler { chain, cumulative }
    }

    pub fn chain(&self) -> &StochasticMatrix {
        self.chain
    }

    #[inline]
    pub fn next_state(&self, x: usize, rng: &mut impl RngCore) -> usize {
        let cum = &self.cumulative[x];
        let u = unit_f64(rng);
        let k = cum.partition_point(|&c| c <= u).min(cum.len() - 1);
        self.chain.row(x).0[k]
    }

    /// Steps until the walk from `o` first re-enters `o`; `None` past the cap.
    pub fn run_episode(&self, o: usize, rng: &mut impl RngCore, step_cap: u64) -> Option<u64> {
        let mut x = o;
        let mut steps = 0u64;
        loop {
            x = self.next_state(x, rng);
            steps += 1;
            if x == o {
                return Some(steps);
            }
            if steps >= step_cap {
                return None;
            }
        }
    }

    /// Runs the episodes with indices in `episodes`.
    pub fn simulate_range(&self, o: StateIndex, seed: u64, episodes: Range<u64>, step_cap: u64) -> ReturnMoments {
        let mut acc = ReturnMoments::default();
        for i in episodes {
            let mut rng = episode_rng(seed, i);
            match self.run_episode(o.get(), &mut rng, step_cap) {
                Some(len) => acc.push(len),
                None => acc.truncated += 1,
            }
        }
        acc
    }
}

/// Exact integer moments of completed return lengths.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReturnMoments {
    pub count: u64,
    pub sum: u128,
    pub sum_sq: u128,
    pub truncated: u64,
}

impl ReturnMoments {
    #[inline]
    pub fn push(&mut self, len: u64) {
        self.count += 1;
        self.sum += len as u128;
        self.sum_sq += (len as u128) * (len as u128);
    }

    pub fn merge(self, other: ReturnMoments) -> ReturnMoments {
        ReturnMoments {
            count: self.count + other.count,
            sum: self.sum + other.sum,
            sum_sq: self.sum_sq + other.sum_sq,
            truncated: self.truncated + other.truncated,
        }
    }

    pub fn finish(self, seed: u64) -> Result<SimulationStats> {
        if self.count == 0 {
            return Err(Error::AllTruncated {
                episodes: self.truncated,
            });
        }
        let n = self.count as u128;
        let mean = self.sum as f64 / self.count as f64;
        let variance = if n < 2 {
            0.0
        } else {
            // n * sum_sq - sum^2 >= 0 exactly
            match n.checked_mul(self.sum_sq).zip(self.sum.checked_mul(self.sum)) {
                Some((a, b)) => (a - b) as f64 / (n * (n - 1)) as f64,
                None => {
                    let m = mean;
                    ((self.sum_sq as f64) - (self.count as f64) * m * m).max(0.0) / (self.count - 1) as f64
                }
            }
        };
        Ok(SimulationStats {
            episodes: self.count,
            mean,
            variance,
            ci95_halfwidth: 1.96 * libm::sqrt(variance / self.count as f64),
            seed,
            truncated_episodes: self.truncated,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationStats {
    /// Completed episodes.
    pub episodes: u64,
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    pub ci95_halfwidth: f64,
    pub seed: u64,
    pub truncated_episodes: u64,
}

impl SimulationStats {
    /// Standard error of the mean.
    pub fn std_error(&self) -> f64 {
        libm::sqrt(self.variance / self.episodes as f64)
    }
}

fn check_args(u: &StochasticMatrix, o: StateIndex, episodes: u64, step_cap: u64) -> Result<()> {
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
    Ok(())
}

/// Sequential estimate of the mean first return time to `o`.
pub fn monte_carlo_estimate(
    u: &StochasticMatrix,
    o: StateIndex,
    episodes: u64,
    seed: u64,
    step_cap: u64,
) -> Result<SimulationStats> {
    check_args(u, o, episodes, step_cap)?;
    ReturnSampler::new(u)
        .simulate_range(o, seed, 0..episodes, step_cap)
        .finish(seed)
}

/// Same result as [`monte_carlo_estimate`], computed over `chunk`-sized
/// pieces merged pairwise. Parallel drivers use the same split.
pub fn monte_carlo_chunked(
    u: &StochasticMatrix,
    o: StateIndex,
    episodes: u64,
    seed: u64,
    step_cap: u64,
    chunk: u64,
) -> Result<SimulationStats> {
    check_args(u, o, episodes, step_cap)?;
    let chunk = chunk.max(1);
    let sampler = ReturnSampler::new(u);
    let parts: Vec<ReturnMoments> = (0..episodes.div_ceil(chunk))
        .map(|c| sampler.simulate_range(o, seed, c * chunk..((c + 1) * chunk).min(episodes), step_cap))
        .collect();
    merge_pairwise(&parts).finish(seed)
}

/// Tree reduction of accumulators.
pub fn merge_pairwise(parts: &[ReturnMoments]) -> ReturnMoments {
    match parts.len() {
        0 => ReturnMoments::default(),
        1 => parts[0],
        n => merge_pairwise(&parts[..n / 2]).merge(merge_pairwise(&parts[n / 2..])),
    }
}
