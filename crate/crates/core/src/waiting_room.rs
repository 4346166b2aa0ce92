//! The waiting-room chain built around a distinguished origin `o`.
//!
//! States of the modified chain are the original states other than `o`,
//! followed by the waiting state `l` and the absorbing state `b`. Original
//! indices below `o` keep their value, indices above `o` shift down by one,
//! `l` sits at `N - 1` and `b` at `N`. In that order the transition matrix is
//!
//! ```text
//! M = | Q  R |      T = | 0 1 |
//!     | 0  T |          | 0 1 |
//! ```
//!
//! where `R` has a single nonzero column, `R_{x,l} = U_{x,o}`. Only `Q`, that
//! column, the origin's out-row and `U_{o,o}` are stored.

use alloc::vec;
use alloc::vec::Vec;

use crate::chain::{StateIndex, StochasticMatrix};
use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::{DENSE_CAP, ROW_SUM_TOL};

/// Square CSR matrix with nonnegative entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseMatrix {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.cols[r.clone()], &self.vals[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map_or(0.0, |k| vals[k])
    }

    /// `y = A x`
    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            *yi = cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum();
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec_into(x, &mut y);
        y
    }

    /// `y = A^T x`, i.e. the row vector `x A`.
    pub fn matvec_transposed_into(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                y[j] += xi * v;
            }
        }
    }

    pub fn matvec_transposed(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec_transposed_into(x, &mut y);
        y
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).1.iter().sum()).collect()
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                m[(i, j)] = v;
            }
        }
        m
    }
}

/// A structural invariant of [`WaitingRoom`] that failed.
#[derive(Debug, Clone, PartialEq)]
pub enum WaitingRoomViolation {
    RowSumAboveOne { row: usize, sum: f64 },
    NeighborRowNotDeficient { row: usize, sum: f64 },
    MassNotConserved { row: usize, total: f64 },
    OriginRowMass { total: f64 },
    NegativeEntry,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaitingRoom {
    origin: StateIndex,
    n_states: usize,
    q: SparseMatrix,
    r_col: Vec<f64>,
    s_row: Vec<f64>,
    u_oo: f64,
    neighbors: Vec<StateIndex>,
}

pub fn build_waiting_room(u: &StochasticMatrix, o: StateIndex) -> Result<WaitingRoom> {
    let n = u.n_states();
    let o_idx = o.get();
    if o_idx >= n {
        return Err(Error::OutOfRange {
            what: "origin",
            value: o_idx,
            bound: n,
        });
    }
    let m = n - 1;
    let reduce = |x: usize| if x < o_idx { x } else { x - 1 };

    let mut row_ptr = Vec::with_capacity(m + 1);
    row_ptr.push(0);
    let mut cols = Vec::with_capacity(u.nnz());
    let mut vals = Vec::with_capacity(u.nnz());
    let mut r_col = vec![0.0; m];
    let mut neighbors = Vec::new();
    for x in (0..n).filter(|&x| x != o_idx) {
        let (ys, ps) = u.row(x);
        for (&y, &p) in ys.iter().zip(ps) {
            if y == o_idx {
                r_col[reduce(x)] = p;
                neighbors.push(StateIndex::new(x, n)?);
            } else {
                cols.push(reduce(y));
                vals.push(p);
            }
        }
        row_ptr.push(cols.len());
    }

    let mut s_row = vec![0.0; m];
    let mut u_oo = 0.0;
    let (ys, ps) = u.row(o_idx);
    for (&y, &p) in ys.iter().zip(ps) {
        if y == o_idx {
            u_oo = p;
        } else {
            s_row[reduce(y)] = p;
        }
    }

    let w = WaitingRoom {
        origin: o,
        n_states: n,
        q: SparseMatrix {
            n: m,
            row_ptr,
            cols,
            vals,
        },
        r_col,
        s_row,
        u_oo,
        neighbors,
    };
    debug_assert!(w.invariant_violations().is_empty());
    Ok(w)
}

impl WaitingRoom {
    pub fn origin(&self) -> StateIndex {
        self.origin
    }

    /// `N`, the state count of the original chain.
    pub fn n_states(&self) -> usize {
        self.n_states
    }

    /// `N - 1`, the number of transient states.
    pub fn transient_count(&self) -> usize {
        self.n_states - 1
    }

    pub fn q(&self) -> &SparseMatrix {
        &self.q
    }

    /// Column of `R` feeding the waiting state: `U_{x,o}` per transient `x`.
    pub fn r_col(&self) -> &[f64] {
        &self.r_col
    }

    /// Origin's out-row with the `o` entry removed.
    pub fn s_row(&self) -> &[f64] {
        &self.s_row
    }

    pub fn u_oo(&self) -> f64 {
        self.u_oo
    }

    /// States `x != o` with `U_{x,o} > 0`, in original indexing.
    pub fn neighbor_set(&self) -> &[StateIndex] {
        &self.neighbors
    }

    /// Index of original state `x` in the modified chain; `None` for `o`.
    pub fn flatten(&self, x: StateIndex) -> Option<usize> {
        let (x, o) = (x.get(), self.origin.get());
        match x.cmp(&o) {
            core::cmp::Ordering::Less => Some(x),
            core::cmp::Ordering::Equal => None,
            core::cmp::Ordering::Greater => Some(x - 1),
        }
    }

    /// Original state of transient index `i`.
    pub fn unflatten(&self, i: usize) -> StateIndex {
        let x = if i < self.origin.get() { i } else { i + 1 };
        StateIndex::new(x, self.n_states).expect("transient index in range")
    }

    /// Modified-chain index of the waiting state.
    pub fn waiting_index(&self) -> usize {
        self.n_states - 1
    }

    /// Modified-chain index of the absorbing state.
    pub fn absorbing_index(&self) -> usize {
        self.n_states
    }

    pub fn invariant_violations(&self) -> Vec<WaitingRoomViolation> {
        let mut out = Vec::new();
        if self
            .q
            .vals
            .iter()
            .chain(&self.r_col)
            .chain(&self.s_row)
            .any(|&v| v < 0.0)
            || self.u_oo < 0.0
        {
            out.push(WaitingRoomViolation::NegativeEntry);
        }
        for (row, sum) in self.q.row_sums().into_iter().enumerate() {
            if sum > 1.0 + ROW_SUM_TOL {
                out.push(WaitingRoomViolation::RowSumAboveOne { row, sum });
            }
            let r = self.r_col[row];
            if r > 0.0 && sum > 1.0 - r + ROW_SUM_TOL {
                out.push(WaitingRoomViolation::NeighborRowNotDeficient { row, sum });
            }
            if (sum + r - 1.0).abs() > ROW_SUM_TOL {
                out.push(WaitingRoomViolation::MassNotConserved { row, total: sum + r });
            }
        }
        let total: f64 = self.s_row.iter().sum::<f64>() + self.u_oo;
        if (total - 1.0).abs() > ROW_SUM_TOL {
            out.push(WaitingRoomViolation::OriginRowMass { total });
        }
        out
    }

    fn check_dense_cap(&self) -> Result<()> {
        if self.transient_count() > DENSE_CAP {
            Err(Error::DenseCapExceeded {
                size: self.transient_count(),
                cap: DENSE_CAP,
            })
        } else {
            Ok(())
        }
    }
}

/// Power-iteration estimate of the spectral radius of `Q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralEstimate {
    pub rho: f64,
    pub iterations: usize,
    /// Collatz-Wielandt bracket `min/max (Qv)_i / v_i` over positive `v_i`.
    pub lower: f64,
    pub upper: f64,
}

/// Estimates `rho(Q)` by power iteration from the all-ones vector with
/// sup-norm normalisation.
///
/// The iterate is driven by the lazy operator `(I + Q) / 2`, whose dominant
/// eigenvalue `(1 + rho) / 2` is strictly dominant for any nonnegative `Q`;
/// plain iteration oscillates forever on bipartite grids. The returned value
/// is the growth `1^T Q v / 1^T v` of `Q` itself on the current iterate. The
/// sup-norm growth is useless as a stopping signal here: rows far from the
/// origin keep full mass, so it sits at exactly 1 for the first iterations.
pub fn spectral_radius_estimate(w: &WaitingRoom, max_iters: usize, tol: f64) -> Result<SpectralEstimate> {
    if max_iters == 0 || !(tol > 0.0) {
        return Err(Error::InvalidArgument("need max_iters >= 1 and tol > 0".into()));
    }
    let m = w.transient_count();
    let mut v = vec![1.0; m];
    let mut qv = vec![0.0; m];
    let mut prev = f64::NAN;
    let mut last = (0.0, 0.0, 0.0);
    // Unshifted iterate Q^k 1, only to catch nilpotent Q exactly: the lazy
    // iterate converges like 1/k on a Jordan block at zero.
    let mut plain = vec![1.0; m];
    let mut plain_next = vec![0.0; m];
    let mut plain_alive = true;
    for it in 1..=max_iters {
        if plain_alive && it <= m + 1 {
            w.q.matvec_into(&plain, &mut plain_next);
            let norm = sup_norm(&plain_next);
            if norm == 0.0 {
                return Ok(SpectralEstimate {
                    rho: 0.0,
                    iterations: it,
                    lower: 0.0,
                    upper: 0.0,
                });
            }
            plain_next.iter_mut().for_each(|x| *x /= norm);
            core::mem::swap(&mut plain, &mut plain_next);
        } else {
            plain_alive = false;
        }
        w.q.matvec_into(&v, &mut qv);
        let mass: f64 = v.iter().sum();
        let rho = if mass > 0.0 { qv.iter().sum::<f64>() / mass } else { 0.0 };
        let (mut lower, mut upper) = (f64::INFINITY, 0.0f64);
        for (a, b) in qv.iter().zip(&v) {
            if *b > 0.0 {
                let r = a / b;
                lower = lower.min(r);
                upper = upper.max(r);
            }
        }
        last = (rho, lower, upper);
        if (rho - prev).abs() < tol {
            return Ok(SpectralEstimate {
                rho,
                iterations: it,
                lower,
                upper,
            });
        }
        prev = rho;
        for (vi, qi) in v.iter_mut().zip(&qv) {
            *vi = 0.5 * (*vi + qi);
        }
        let norm = sup_norm(&v);
        if norm == 0.0 {
            break;
        }
        v.iter_mut().for_each(|x| *x /= norm);
    }
    Err(Error::NoConvergence {
        iterations: max_iters,
        last_estimate: last.0,
        lower: last.1,
        upper: last.2,
    })
}

pub(crate) fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Blocks of `M^k`: `Q^k` and the two columns of the top-right block.
#[derive(Debug, Clone, PartialEq)]
pub struct ModifiedPower {
    pub q_power: DenseMatrix,
    /// Column for `l`: `Q^(k-1) r`.
    pub l_column: Vec<f64>,
    /// Column for `b`: `sum_{j=0}^{k-2} Q^j r`.
    pub b_column: Vec<f64>,
}

pub fn modified_power(w: &WaitingRoom, k: usize) -> Result<ModifiedPower> {
    if k == 0 {
        return Err(Error::InvalidArgument("power must be >= 1".into()));
    }
    w.check_dense_cap()?;
    let m = w.transient_count();

    let mut q_power = DenseMatrix::identity(m);
    for _ in 0..k {
        let mut next = DenseMatrix::zeros(m, m);
        for i in 0..m {
            for t in 0..m {
                let a = q_power[(i, t)];
                if a == 0.0 {
                    continue;
                }
                let (cols, vals) = w.q.row(t);
                for (&j, &v) in cols.iter().zip(vals) {
                    next[(i, j)] += a * v;
                }
            }
        }
        q_power = next;
    }

    // T kills the l-column after one step, so only the newest term survives
    // there and every older term has moved on to b.
    let mut l_column = w.r_col.clone();
    let mut b_column = vec![0.0; m];
    for _ in 1..k {
        for (b, l) in b_column.iter_mut().zip(&l_column) {
            *b += l;
        }
        l_column = w.q.matvec(&l_column);
    }
    Ok(ModifiedPower {
        q_power,
        l_column,
        b_column,
    })
}

/// Probabilities `p_1..p_{k_max}` that the first return to `o` happens at
/// step `k`: `p_1 = U_{o,o}` and `p_k = s Q^(k-2) r` for `k >= 2`.
pub fn first_return_distribution(w: &WaitingRoom, k_max: usize) -> Result<Vec<f64>> {
    if k_max == 0 {
        return Err(Error::InvalidArgument("k_max must be >= 1".into()));
    }
    w.check_dense_cap()?;
    let mut p = Vec::with_capacity(k_max);
    p.push(w.u_oo);
    let mut row = w.s_row.clone();
    let mut next = vec![0.0; row.len()];
    for _ in 2..=k_max {
        p.push(dot(&row, &w.r_col));
        w.q.matvec_transposed_into(&row, &mut next);
        core::mem::swap(&mut row, &mut next);
    }
    Ok(p)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid_chain, point_to_index, Boundary, GridSpec};

    fn chain(n: usize, e: &[(usize, usize, f64)]) -> StochasticMatrix {
        StochasticMatrix::from_sparse_rows(n, e).unwrap()
    }

    fn cycle3() -> StochasticMatrix {
        chain(
            3,
            &[
                (0, 1, 0.5),
                (0, 2, 0.5),
                (1, 0, 0.5),
                (1, 2, 0.5),
                (2, 0, 0.5),
                (2, 1, 0.5),
            ],
        )
    }

    fn path3() -> StochasticMatrix {
        chain(3, &[(0, 1, 1.0), (1, 0, 0.5), (1, 2, 0.5), (2, 1, 1.0)])
    }

    fn stay2() -> StochasticMatrix {
        chain(2, &[(0, 0, 0.5), (0, 1, 0.5), (1, 0, 0.5), (1, 1, 0.5)])
    }

    fn swap2() -> StochasticMatrix {
        chain(2, &[(0, 1, 1.0), (1, 0, 1.0)])
    }

    fn room(u: &StochasticMatrix, o: usize) -> WaitingRoom {
        build_waiting_room(u, u.state(o).unwrap()).unwrap()
    }

    #[test]
    fn cycle_blocks() {
        let w = room(&cycle3(), 0);
        let q = w.q().to_dense();
        assert_eq!(q.as_slice(), &[0.0, 0.5, 0.5, 0.0]);
        assert_eq!(w.r_col(), &[0.5, 0.5]);
        assert_eq!(w.s_row(), &[0.5, 0.5]);
        assert_eq!(w.u_oo(), 0.0);
        assert_eq!(w.neighbor_set().len(), 2);
        assert!(w.invariant_violations().is_empty());
    }

    #[test]
    fn stay_pair_blocks() {
        let w = room(&stay2(), 0);
        assert_eq!(w.q().to_dense().as_slice(), &[0.5]);
        assert_eq!(w.r_col(), &[0.5]);
        assert_eq!(w.s_row(), &[0.5]);
        assert_eq!(w.u_oo(), 0.5);
    }

    #[test]
    fn cut_vertex_leaves_zero_q() {
        let w = room(&path3(), 1);
        assert_eq!(w.q().nnz(), 0);
        assert_eq!(w.r_col(), &[1.0, 1.0]);
        assert!(w.invariant_violations().is_empty());
    }

    #[test]
    fn flattening_map() {
        let u = cycle3();
        let w = room(&u, 1);
        assert_eq!(w.flatten(u.state(0).unwrap()), Some(0));
        assert_eq!(w.flatten(u.state(1).unwrap()), None);
        assert_eq!(w.flatten(u.state(2).unwrap()), Some(1));
        assert_eq!(w.unflatten(1).get(), 2);
        assert_eq!((w.waiting_index(), w.absorbing_index()), (2, 3));
    }

    #[test]
    fn origin_out_of_range() {
        let u = cycle3();
        let bogus = StateIndex::new(5, 10).unwrap();
        assert!(matches!(build_waiting_room(&u, bogus), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn fundamental_identity_one_minus_q() {
        // (I - Q) 1 = r_col
        for (dims, b) in [
            (vec![4, 4], Boundary::StayStill),
            (vec![3, 5], Boundary::Reflecting),
            (vec![2, 3, 4], Boundary::Periodic),
        ] {
            let u = build_grid_chain(&GridSpec::new(dims, b).unwrap()).unwrap();
            for o in 0..u.n_states() {
                let w = room(&u, o);
                let q1 = w.q().matvec(&vec![1.0; w.transient_count()]);
                for (i, v) in q1.iter().enumerate() {
                    assert!((1.0 - v - w.r_col()[i]).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn spectral_cycle() {
        let e = spectral_radius_estimate(&room(&cycle3(), 0), 10_000, 1e-13).unwrap();
        assert!((e.rho - 0.5).abs() < 1e-6, "{e:?}");
        let e = spectral_radius_estimate(&room(&path3(), 1), 10, 1e-12).unwrap();
        assert_eq!(e.rho, 0.0);
    }

    #[test]
    fn spectral_torus_matches_eigensolver() {
        // symmetric 24x24 Q; oracle value from nalgebra's symmetric eigensolver
        let s = GridSpec::new(vec![5, 5], Boundary::Periodic).unwrap();
        let u = build_grid_chain(&s).unwrap();
        let o = point_to_index(&s, &alloc::vec![2, 2].into()).unwrap();
        let w = build_waiting_room(&u, o).unwrap();
        let q = w.q().to_dense();
        let m = nalgebra::DMatrix::from_row_slice(24, 24, q.as_slice());
        let eig = m.symmetric_eigen();
        let oracle = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!((oracle - 0.968921171372473).abs() < 1e-12);
        let est = spectral_radius_estimate(&w, 100_000, 1e-14).unwrap();
        assert!(est.rho > 0.0 && est.rho < 1.0);
        assert!((est.rho - oracle).abs() < 1e-6, "{} vs {}", est.rho, oracle);
        assert!(est.lower <= oracle + 1e-9 && oracle <= est.upper + 1e-9);
    }

    #[test]
    fn spectral_bipartite_grid_converges() {
        let s = GridSpec::new(vec![4, 4], Boundary::Periodic).unwrap();
        let u = build_grid_chain(&s).unwrap();
        let w = room(&u, 0);
        let m = nalgebra::DMatrix::from_row_slice(15, 15, w.q().to_dense().as_slice());
        let oracle = m
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .fold(0.0f64, |a, v| a.max(v.abs()));
        let est = spectral_radius_estimate(&w, 100_000, 1e-14).unwrap();
        assert!((est.rho - oracle).abs() < 1e-6);
    }

    #[test]
    fn spectral_bad_args() {
        let w = room(&cycle3(), 0);
        assert!(spectral_radius_estimate(&w, 0, 1e-9).is_err());
        assert!(spectral_radius_estimate(&w, 10, 0.0).is_err());
        assert!(matches!(
            spectral_radius_estimate(
                &room(
                    &build_grid_chain(&GridSpec::new(vec![9, 9], Boundary::Periodic).unwrap()).unwrap(),
                    0
                ),
                2,
                1e-15
            ),
            Err(Error::NoConvergence { iterations: 2, .. })
        ));
    }

    #[test]
    fn power_base_case() {
        let w = room(&cycle3(), 0);
        let p = modified_power(&w, 1).unwrap();
        assert_eq!(p.q_power, w.q().to_dense());
        assert_eq!(p.l_column, w.r_col());
        assert_eq!(p.b_column, vec![0.0, 0.0]);
        assert!(modified_power(&w, 0).is_err());
    }

    #[test]
    fn power_k2_cycle() {
        let p = modified_power(&room(&cycle3(), 0), 2).unwrap();
        assert_eq!(p.q_power.as_slice(), &[0.25, 0.0, 0.0, 0.25]);
        assert_eq!(p.l_column, vec![0.25, 0.25]);
        assert_eq!(p.b_column, vec![0.5, 0.5]);
    }

    #[test]
    fn return_distribution_examples() {
        let p = first_return_distribution(&room(&swap2(), 0), 5).unwrap();
        assert_eq!(p, vec![0.0, 1.0, 0.0, 0.0, 0.0]);

        let p = first_return_distribution(&room(&stay2(), 0), 10).unwrap();
        for (k, pk) in p.iter().enumerate() {
            assert_eq!(*pk, 0.5f64.powi(k as i32 + 1));
        }

        let p = first_return_distribution(&room(&cycle3(), 0), 20).unwrap();
        assert_eq!(&p[..4], &[0.0, 0.5, 0.25, 0.125]);
        for k in 1..18 {
            assert!((p[k + 2] - p[k] / 4.0).abs() < 1e-15);
        }
        let total: f64 = p.iter().sum();
        assert!(total >= 1.0 - 1e-5 && total <= 1.0 + 1e-9);
        assert!(first_return_distribution(&room(&cycle3(), 0), 0).is_err());
    }

    #[test]
    fn dense_cap_guard() {
        let u = build_grid_chain(&GridSpec::new(vec![50, 50], Boundary::Periodic).unwrap()).unwrap();
        let w = room(&u, 0);
        assert!(matches!(
            modified_power(&w, 1),
            Err(Error::DenseCapExceeded { size: 2499, .. })
        ));
        assert!(matches!(
            first_return_distribution(&w, 3),
            Err(Error::DenseCapExceeded { .. })
        ));
    }
}
