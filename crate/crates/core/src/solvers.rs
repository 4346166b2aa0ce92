//! Linear solves with `I - Q` and truncated Neumann series.
//!
//! Systems with at most [`DENSE_CAP`] transient states go through a dense LU
//! factorisation; larger ones through the series `sum_k Q^k b`, evaluated by
//! repeated sparse products and stopped by a geometric tail bound built on the
//! power-iteration estimate of `rho(Q)`.

use alloc::vec;
use alloc::vec::Vec;

use crate::dense::{DenseMatrix, LuFactors};
use crate::error::{Error, Result};
use crate::waiting_room::{spectral_radius_estimate, sup_norm, WaitingRoom};
use crate::DENSE_CAP;

/// Iterative refinement steps after a dense solve.
const REFINE_STEPS: usize = 3;

/// Margin added to the spectral estimate before it enters a tail bound.
pub const RHO_MARGIN: f64 = 1e-6;
/// Series are refused once the inflated estimate reaches `1 - RHO_ABORT`.
pub const RHO_ABORT: f64 = 1e-9;
/// Default cap on series terms.
pub const DEFAULT_TERMS_CAP: usize = 10_000_000;

const SPECTRAL_ITERS: usize = 20_000;
const SPECTRAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SolveMethod {
    DenseDirect,
    NeumannSeries,
}

impl SolveMethod {
    /// Dense for up to [`DENSE_CAP`] transient states, inclusive.
    pub fn for_size(transient: usize) -> Self {
        if transient <= DENSE_CAP {
            SolveMethod::DenseDirect
        } else {
            SolveMethod::NeumannSeries
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SeriesOrder {
    /// `sum_{k>=0} Q^k = (I - Q)^-1`
    S1,
    /// `sum_{k>=1} k Q^(k-1) = (I - Q)^-2`
    S2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveDiagnostics {
    pub method: SolveMethod,
    pub residual_inf: f64,
    pub terms_used: Option<usize>,
    pub tail_bound: Option<f64>,
}

impl SolveDiagnostics {
    /// Combines the diagnostics of two solves feeding one result.
    pub fn combine(self, other: SolveDiagnostics) -> SolveDiagnostics {
        let add = |a: Option<usize>, b: Option<usize>| match (a, b) {
            (None, None) => None,
            (a, b) => Some(a.unwrap_or(0) + b.unwrap_or(0)),
        };
        let max = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (None, None) => None,
            (a, b) => Some(a.unwrap_or(0.0).max(b.unwrap_or(0.0))),
        };
        SolveDiagnostics {
            method: self.method,
            residual_inf: self.residual_inf.max(other.residual_inf),
            terms_used: add(self.terms_used, other.terms_used),
            tail_bound: max(self.tail_bound, other.tail_bound),
        }
    }
}

/// Reusable solver for `(I - Q) x = b` and `(I - Q)^T x = b` on one waiting room.
#[derive(Debug, Clone)]
pub struct FundamentalSolver<'a> {
    w: &'a WaitingRoom,
    kind: Kind,
}

#[derive(Debug, Clone)]
enum Kind {
    Dense(LuFactors),
    Series { rho: f64, terms_cap: usize },
}

impl<'a> FundamentalSolver<'a> {
    pub fn new(w: &'a WaitingRoom) -> Result<Self> {
        Self::with_method(w, SolveMethod::for_size(w.transient_count()))
    }

    pub fn with_method(w: &'a WaitingRoom, method: SolveMethod) -> Result<Self> {
        let kind = match method {
            SolveMethod::DenseDirect => {
                let m = w.transient_count();
                if m > DENSE_CAP {
                    return Err(Error::DenseCapExceeded {
                        size: m,
                        cap: DENSE_CAP,
                    });
                }
                Kind::Dense(LuFactors::factor(i_minus_q_dense(w))?)
            }
            SolveMethod::NeumannSeries => Kind::Series {
                rho: tail_rho(w)?,
                terms_cap: DEFAULT_TERMS_CAP,
            },
        };
        Ok(FundamentalSolver { w, kind })
    }

    pub fn method(&self) -> SolveMethod {
        match self.kind {
            Kind::Dense(_) => SolveMethod::DenseDirect,
            Kind::Series { .. } => SolveMethod::NeumannSeries,
        }
    }

    pub fn solve(&self, b: &[f64], transposed: bool) -> Result<(Vec<f64>, SolveDiagnostics)> {
        check_rhs(self.w, b)?;
        match &self.kind {
            Kind::Dense(lu) => {
                let lu_solve = |rhs: &[f64]| {
                    if transposed {
                        lu.solve_transposed(rhs)
                    } else {
                        lu.solve(rhs)
                    }
                };
                let mut x = lu_solve(b);
                // refinement against a doubled-precision residual brings the
                // forward error down to rounding level, independent of cond(I - Q)
                for _ in 0..REFINE_STEPS {
                    let d = lu_solve(&compensated_residual(self.w, &x, b, transposed));
                    for (xi, di) in x.iter_mut().zip(&d) {
                        *xi += di;
                    }
                    if sup_norm(&d) <= f64::EPSILON * sup_norm(&x) {
                        break;
                    }
                }
                let residual_inf = residual(self.w, &x, b, transposed);
                Ok((
                    x,
                    SolveDiagnostics {
                        method: SolveMethod::DenseDirect,
                        residual_inf,
                        terms_used: None,
                        tail_bound: None,
                    },
                ))
            }
            Kind::Series { rho, terms_cap } => {
                let tol = 1e-12 * sup_norm(b).max(1.0);
                series(self.w, SeriesOrder::S1, b, transposed, *rho, *terms_cap, tol)
            }
        }
    }
}

/// Solves `(I - Q) x = b`, or `(I - Q)^T x = b` when `transposed`, with the
/// method chosen by system size.
pub fn solve_i_minus_q(w: &WaitingRoom, b: &[f64], transposed: bool) -> Result<(Vec<f64>, SolveDiagnostics)> {
    FundamentalSolver::new(w)?.solve(b, transposed)
}

pub fn solve_i_minus_q_with(
    w: &WaitingRoom,
    b: &[f64],
    transposed: bool,
    method: SolveMethod,
) -> Result<(Vec<f64>, SolveDiagnostics)> {
    FundamentalSolver::with_method(w, method)?.solve(b, transposed)
}

/// Truncated series `S1 b` or `S2 b`.
pub fn neumann_sum(
    w: &WaitingRoom,
    order: SeriesOrder,
    b: &[f64],
    terms_cap: usize,
    tol: f64,
) -> Result<(Vec<f64>, SolveDiagnostics)> {
    neumann_sum_impl(w, order, b, false, terms_cap, tol)
}

/// Same as [`neumann_sum`] with `Q^T` in place of `Q`.
pub fn neumann_sum_transposed(
    w: &WaitingRoom,
    order: SeriesOrder,
    b: &[f64],
    terms_cap: usize,
    tol: f64,
) -> Result<(Vec<f64>, SolveDiagnostics)> {
    neumann_sum_impl(w, order, b, true, terms_cap, tol)
}

fn neumann_sum_impl(
    w: &WaitingRoom,
    order: SeriesOrder,
    b: &[f64],
    transposed: bool,
    terms_cap: usize,
    tol: f64,
) -> Result<(Vec<f64>, SolveDiagnostics)> {
    if terms_cap == 0 || !(tol > 0.0) {
        return Err(Error::InvalidArgument("need terms_cap >= 1 and tol > 0".into()));
    }
    check_rhs(w, b)?;
    series(w, order, b, transposed, tail_rho(w)?, terms_cap, tol)
}

/// Spectral estimate inflated by [`RHO_MARGIN`]; aborts near one.
fn tail_rho(w: &WaitingRoom) -> Result<f64> {
    let raw = match spectral_radius_estimate(w, SPECTRAL_ITERS, SPECTRAL_TOL) {
        Ok(e) => e.rho,
        // slow convergence on large systems: the last estimate still drives
        // the bound, and the explicit residual check backs it up
        Err(Error::NoConvergence { last_estimate, .. }) => last_estimate,
        Err(e) => return Err(e),
    };
    let rho = raw + RHO_MARGIN;
    if rho >= 1.0 - RHO_ABORT {
        let (lower, upper) = (raw, raw);
        return Err(Error::NoConvergence {
            iterations: 0,
            last_estimate: raw,
            lower,
            upper,
        });
    }
    Ok(rho)
}

fn series(
    w: &WaitingRoom,
    order: SeriesOrder,
    b: &[f64],
    transposed: bool,
    rho: f64,
    terms_cap: usize,
    tol: f64,
) -> Result<(Vec<f64>, SolveDiagnostics)> {
    let apply = |x: &[f64], y: &mut [f64]| {
        if transposed {
            w.q().matvec_transposed_into(x, y)
        } else {
            w.q().matvec_into(x, y)
        }
    };
    let m = b.len();
    // power = Q^K b after K summed terms
    let mut power = b.to_vec();
    let mut next = vec![0.0; m];
    let mut x = b.to_vec();
    let mut terms = 1usize;
    let gap = 1.0 - rho;
    loop {
        apply(&power, &mut next);
        let next_norm = sup_norm(&next);
        // remaining mass of the series, bounded geometrically from the first
        // omitted power
        let tail = match order {
            SeriesOrder::S1 => next_norm / gap,
            SeriesOrder::S2 => next_norm * ((terms as f64 + 1.0) / gap + rho / (gap * gap)),
        };
        if tail < tol {
            let residual_inf = match order {
                SeriesOrder::S1 => residual(w, &x, b, transposed),
                SeriesOrder::S2 => {
                    let once = i_minus_q_apply(w, &x, transposed);
                    residual(w, &once, b, transposed)
                }
            };
            return Ok((
                x,
                SolveDiagnostics {
                    method: SolveMethod::NeumannSeries,
                    residual_inf,
                    terms_used: Some(terms),
                    tail_bound: Some(tail),
                },
            ));
        }
        if terms >= terms_cap {
            return Err(Error::NoConvergence {
                iterations: terms,
                last_estimate: tail,
                lower: 0.0,
                upper: tail,
            });
        }
        terms += 1;
        let weight = match order {
            SeriesOrder::S1 => 1.0,
            SeriesOrder::S2 => terms as f64,
        };
        for (xi, ni) in x.iter_mut().zip(&next) {
            *xi += weight * ni;
        }
        core::mem::swap(&mut power, &mut next);
    }
}

fn check_rhs(w: &WaitingRoom, b: &[f64]) -> Result<()> {
    if b.len() != w.transient_count() {
        return Err(Error::InvalidArgument(alloc::format!(
            "right-hand side has length {}, expected {}",
            b.len(),
            w.transient_count()
        )));
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("right-hand side is not finite".into()));
    }
    Ok(())
}

pub(crate) fn i_minus_q_dense(w: &WaitingRoom) -> DenseMatrix {
    let mut a = w.q().to_dense();
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            a[(i, j)] = if i == j { 1.0 } else { 0.0 } - a[(i, j)];
        }
    }
    a
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, libm::fma(a, b, -p))
}

/// `b - (I - Q) x` accumulated with error-free transformations, i.e. as if
/// in twice the working precision.
fn compensated_residual(w: &WaitingRoom, x: &[f64], b: &[f64], transposed: bool) -> Vec<f64> {
    let (mut hi, mut lo): (Vec<f64>, Vec<f64>) = b.iter().zip(x).map(|(&bi, &xi)| two_sum(bi, -xi)).unzip();
    let q = w.q();
    for i in 0..q.dim() {
        let (cols, vals) = q.row(i);
        for (&j, &qij) in cols.iter().zip(vals) {
            let (t, xv) = if transposed { (j, x[i]) } else { (i, x[j]) };
            let (p, pe) = two_prod(qij, xv);
            let (s, se) = two_sum(hi[t], p);
            hi[t] = s;
            lo[t] += pe + se;
        }
    }
    hi.iter().zip(&lo).map(|(h, l)| h + l).collect()
}

/// `(I - Q) x` or `(I - Q)^T x`.
pub fn i_minus_q_apply(w: &WaitingRoom, x: &[f64], transposed: bool) -> Vec<f64> {
    let qx = if transposed {
        w.q().matvec_transposed(x)
    } else {
        w.q().matvec(x)
    };
    x.iter().zip(qx).map(|(a, b)| a - b).collect()
}

/// Sup-norm of `(I - Q) x - b` (or the transposed system).
pub fn residual(w: &WaitingRoom, x: &[f64], b: &[f64], transposed: bool) -> f64 {
    i_minus_q_apply(w, x, transposed)
        .iter()
        .zip(b)
        .fold(0.0, |m, (ax, bi)| m.max((ax - bi).abs()))
}
