//! Validated sparse row-stochastic transition matrices.

use alloc::collections::VecDeque;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::ROW_SUM_TOL;

/// A state of a chain, i.e. a row/column index of its transition matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StateIndex(usize);

impl StateIndex {
    pub fn new(value: usize, n_states: usize) -> Result<Self> {
        if value < n_states {
            Ok(StateIndex(value))
        } else {
            Err(Error::OutOfRange {
                what: "state",
                value,
                bound: n_states,
            })
        }
    }

    #[inline]
    pub fn get(self) -> usize {
        self.0
    }
}

impl fmt::Display for StateIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One violated invariant of a transition matrix.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ChainViolation {
    #[error("chain needs at least 2 states, got {n}")]
    TooSmall { n: usize },
    #[error("entry ({row}, {col}) out of range for {n} states")]
    IndexOutOfRange { row: usize, col: usize, n: usize },
    #[error("duplicate entry ({row}, {col})")]
    DuplicateEntry { row: usize, col: usize },
    #[error("negative probability {prob} at ({row}, {col})")]
    NegativeProbability { row: usize, col: usize, prob: f64 },
    #[error("non-finite probability at ({row}, {col})")]
    NonFiniteProbability { row: usize, col: usize },
    #[error("row {row} sums to {sum}")]
    RowSumError { row: usize, sum: f64 },
    #[error("state {state} is not mutually reachable with state 0")]
    NotStronglyConnected { state: usize },
    #[error("expected {expected} labels, got {found}")]
    LabelCountMismatch { expected: usize, found: usize },
}

/// Every violated invariant, in detection order. Empty means valid.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<ChainViolation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn first(&self) -> Option<&ChainViolation> {
        self.violations.first()
    }

    pub fn has_not_strongly_connected(&self) -> bool {
        self.violations
            .iter()
            .any(|v| matches!(v, ChainViolation::NotStronglyConnected { .. }))
    }

    pub fn has_row_sum_error(&self) -> bool {
        self.violations
            .iter()
            .any(|v| matches!(v, ChainViolation::RowSumError { .. }))
    }
}

/// Row-major sparse storage: `cols[row_ptr[x]..row_ptr[x + 1]]` are the
/// strictly increasing successors of `x`.
#[derive(Debug, Clone, PartialEq)]
struct Csr {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    probs: Vec<f64>,
}

/// Transition matrix `U` of a finite, strongly connected Markov chain.
///
/// Zeros are never stored, every stored probability lies in `(0, 1]`, and
/// every row sums to one within [`ROW_SUM_TOL`]. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticMatrix {
    csr: Csr,
    labels: Option<Vec<String>>,
}

/// Checks raw `(row, col, prob)` triplets against every invariant of
/// [`StochasticMatrix`] without building one.
pub fn validate_entries(n: usize, entries: &[(usize, usize, f64)]) -> ValidationReport {
    assemble(n, entries).1
}

fn assemble(n: usize, entries: &[(usize, usize, f64)]) -> (Csr, ValidationReport) {
    let mut report = ValidationReport::default();
    if n < 2 {
        report.violations.push(ChainViolation::TooSmall { n });
    }

    let mut kept: Vec<(usize, usize, f64)> = Vec::with_capacity(entries.len());
    for &(row, col, prob) in entries {
        if row >= n || col >= n {
            report.violations.push(ChainViolation::IndexOutOfRange { row, col, n });
        } else if !prob.is_finite() {
            report
                .violations
                .push(ChainViolation::NonFiniteProbability { row, col });
        } else if prob < 0.0 {
            report
                .violations
                .push(ChainViolation::NegativeProbability { row, col, prob });
        } else if prob > 0.0 {
            kept.push((row, col, prob));
        }
    }
    // Duplicates are detected among all in-range pairs, zero or not.
    let mut pairs: Vec<(usize, usize)> = entries
        .iter()
        .filter(|&&(r, c, _)| r < n && c < n)
        .map(|&(r, c, _)| (r, c))
        .collect();
    pairs.sort_unstable();
    for w in pairs.windows(2) {
        if w[0] == w[1] {
            let dup = ChainViolation::DuplicateEntry {
                row: w[0].0,
                col: w[0].1,
            };
            if !report.violations.contains(&dup) {
                report.violations.push(dup);
            }
        }
    }

    kept.sort_unstable_by_key(|e| (e.0, e.1));
    kept.dedup_by(|b, a| a.0 == b.0 && a.1 == b.1);

    let mut row_ptr = vec![0usize; n + 1];
    for &(row, _, _) in &kept {
        row_ptr[row + 1] += 1;
    }
    for x in 0..n {
        row_ptr[x + 1] += row_ptr[x];
    }
    let csr = Csr {
        n,
        row_ptr,
        cols: kept.iter().map(|e| e.1).collect(),
        probs: kept.iter().map(|e| e.2).collect(),
    };
    check_rows(&csr, &mut report);
    (csr, report)
}

fn check_rows(csr: &Csr, report: &mut ValidationReport) {
    for x in 0..csr.n {
        let sum: f64 = csr.probs[csr.row_ptr[x]..csr.row_ptr[x + 1]].iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOL || !sum.is_finite() {
            report.violations.push(ChainViolation::RowSumError { row: x, sum });
        }
    }
    if csr.n >= 1 {
        if let Some(state) = first_unreachable(csr) {
            report.violations.push(ChainViolation::NotStronglyConnected { state });
        }
    }
}

/// First state not both reachable from and co-reachable to state 0.
fn first_unreachable(csr: &Csr) -> Option<usize> {
    let n = csr.n;
    let mut fwd = vec![false; n];
    let mut queue = VecDeque::new();
    fwd[0] = true;
    queue.push_back(0);
    while let Some(x) = queue.pop_front() {
        for &y in &csr.cols[csr.row_ptr[x]..csr.row_ptr[x + 1]] {
            if !fwd[y] {
                fwd[y] = true;
                queue.push_back(y);
            }
        }
    }

    // Reverse adjacency for the backward sweep.
    let mut in_deg = vec![0usize; n + 1];
    for &y in &csr.cols {
        in_deg[y + 1] += 1;
    }
    for y in 0..n {
        in_deg[y + 1] += in_deg[y];
    }
    let mut fill = in_deg.clone();
    let mut preds = vec![0usize; csr.cols.len()];
    for x in 0..n {
        for &y in &csr.cols[csr.row_ptr[x]..csr.row_ptr[x + 1]] {
            preds[fill[y]] = x;
            fill[y] += 1;
        }
    }
    let mut bwd = vec![false; n];
    bwd[0] = true;
    queue.push_back(0);
    while let Some(y) = queue.pop_front() {
        for &x in &preds[in_deg[y]..in_deg[y + 1]] {
            if !bwd[x] {
                bwd[x] = true;
                queue.push_back(x);
            }
        }
    }
    (0..n).find(|&x| !(fwd[x] && bwd[x]))
}

impl StochasticMatrix {
    /// Builds a chain from `(row, col, prob)` triplets. Zero probabilities are
    /// dropped; rows are sorted by column.
    pub fn from_sparse_rows(n: usize, entries: &[(usize, usize, f64)]) -> Result<Self> {
        let (csr, report) = assemble(n, entries);
        match report.violations.into_iter().next() {
            Some(v) => Err(v.into()),
            None => Ok(StochasticMatrix { csr, labels: None }),
        }
    }

    /// Builds a chain from per-row `(col, prob)` lists.
    pub fn from_rows(n: usize, rows: &[Vec<(usize, f64)>]) -> Result<Self> {
        let mut entries = Vec::new();
        for (row, list) in rows.iter().enumerate() {
            entries.extend(list.iter().map(|&(col, p)| (row, col, p)));
        }
        Self::from_sparse_rows(n, &entries)
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.csr.n {
            return Err(ChainViolation::LabelCountMismatch {
                expected: self.csr.n,
                found: labels.len(),
            }
            .into());
        }
        self.labels = Some(labels);
        Ok(self)
    }

    /// Re-checks every invariant on the stored entries.
    pub fn validate(&self) -> ValidationReport {
        validate_entries(self.csr.n, &self.entries().collect::<Vec<_>>())
    }

    #[inline]
    pub fn n_states(&self) -> usize {
        self.csr.n
    }

    pub fn nnz(&self) -> usize {
        self.csr.cols.len()
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn state(&self, value: usize) -> Result<StateIndex> {
        StateIndex::new(value, self.csr.n)
    }

    /// Column indices and probabilities of row `x`.
    #[inline]
    pub fn row(&self, x: usize) -> (&[usize], &[f64]) {
        let range = self.csr.row_ptr[x]..self.csr.row_ptr[x + 1];
        (&self.csr.cols[range.clone()], &self.csr.probs[range])
    }

    /// `U_{x,y}`, zero when not stored.
    pub fn get(&self, x: usize, y: usize) -> f64 {
        let (cols, probs) = self.row(x);
        match cols.binary_search(&y) {
            Ok(k) => probs[k],
            Err(_) => 0.0,
        }
    }

    /// All stored `(row, col, prob)` triplets in row-major order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.csr.n).flat_map(move |x| {
            let (cols, probs) = self.row(x);
            cols.iter().zip(probs).map(move |(&y, &p)| (x, y, p))
        })
    }

    /// Dense row-major copy; intended for small verification problems.
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.csr.n;
        let mut out = vec![0.0; n * n];
        for (x, y, p) in self.entries() {
            out[x * n + y] = p;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cycle3() -> Vec<(usize, usize, f64)> {
        vec![
            (0, 1, 0.5),
            (0, 2, 0.5),
            (1, 0, 0.5),
            (1, 2, 0.5),
            (2, 0, 0.5),
            (2, 1, 0.5),
        ]
    }

    #[test]
    fn swap_chain_is_valid() {
        let u = StochasticMatrix::from_sparse_rows(2, &[(0, 1, 1.0), (1, 0, 1.0)]).unwrap();
        assert_eq!(u.get(0, 1), 1.0);
        assert_eq!(u.get(0, 0), 0.0);
        assert!(u.validate().is_empty());
    }

    #[test]
    fn short_row_is_rejected() {
        let err = StochasticMatrix::from_sparse_rows(2, &[(0, 0, 0.5), (0, 1, 0.4), (1, 0, 1.0)]).unwrap_err();
        match err {
            Error::Chain(ChainViolation::RowSumError { row, sum }) => {
                assert_eq!(row, 0);
                assert!((sum - 0.9).abs() < 1e-15);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn three_cycle() {
        let u = StochasticMatrix::from_sparse_rows(3, &cycle3()).unwrap();
        assert_eq!(u.get(0, 1), 0.5);
        assert_eq!(u.nnz(), 6);
        assert!(u.validate().is_empty());
    }

    #[test]
    fn zeros_dropped_and_rows_sorted() {
        let u =
            StochasticMatrix::from_sparse_rows(3, &[(0, 2, 0.5), (0, 0, 0.0), (0, 1, 0.5), (1, 2, 1.0), (2, 0, 1.0)])
                .unwrap();
        assert_eq!(u.row(0).0, &[1, 2]);
        assert_eq!(u.nnz(), 4);
    }

    #[test]
    fn error_variants() {
        let e = |n, entries: &[(usize, usize, f64)]| StochasticMatrix::from_sparse_rows(n, entries).unwrap_err();
        assert!(matches!(
            e(1, &[(0, 0, 1.0)]),
            Error::Chain(ChainViolation::TooSmall { n: 1 })
        ));
        assert!(matches!(
            e(2, &[(0, 2, 1.0), (1, 0, 1.0)]),
            Error::Chain(ChainViolation::IndexOutOfRange { row: 0, col: 2, .. })
        ));
        assert!(matches!(
            e(2, &[(0, 1, 0.5), (0, 1, 0.5), (1, 0, 1.0)]),
            Error::Chain(ChainViolation::DuplicateEntry { row: 0, col: 1 })
        ));
        assert!(matches!(
            e(2, &[(0, 0, -0.5), (0, 1, 1.5), (1, 0, 1.0)]),
            Error::Chain(ChainViolation::NegativeProbability { .. })
        ));
        assert!(matches!(
            e(2, &[(0, 0, 1.0), (1, 1, 1.0)]),
            Error::Chain(ChainViolation::NotStronglyConnected { state: 1 })
        ));
        assert!(matches!(
            e(2, &[(0, 1, f64::NAN), (1, 0, 1.0)]),
            Error::Chain(ChainViolation::NonFiniteProbability { .. })
        ));
    }

    #[test]
    fn validate_reports_disconnected_state() {
        // State 2 only feeds itself.
        let report = validate_entries(3, &[(0, 1, 1.0), (1, 0, 1.0), (2, 2, 1.0)]);
        assert!(report.has_not_strongly_connected());
        assert!(!report.has_row_sum_error());
    }

    #[test]
    fn validate_reports_tiny_row_sum_excess() {
        let mut entries = cycle3();
        entries[0].2 += 1e-6;
        let report = validate_entries(3, &entries);
        assert!(report.has_row_sum_error());
        assert!(matches!(
            report.first(),
            Some(ChainViolation::RowSumError { row: 0, .. })
        ));
    }

    #[test]
    fn validate_lists_every_violation() {
        let report = validate_entries(3, &[(0, 1, 0.5), (1, 0, 1.0), (2, 5, 1.0)]);
        // row 0 short, row 2 empty after dropping the out-of-range entry
        assert_eq!(
            report
                .violations
                .iter()
                .filter(|v| matches!(v, ChainViolation::RowSumError { .. }))
                .count(),
            2
        );
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, ChainViolation::IndexOutOfRange { row: 2, col: 5, .. })));
    }

    #[test]
    fn labels_must_match_state_count() {
        let u = StochasticMatrix::from_sparse_rows(2, &[(0, 1, 1.0), (1, 0, 1.0)]).unwrap();
        assert!(u.clone().with_labels(vec!["a".into()]).is_err());
        let u = u.with_labels(vec!["a".into(), "b".into()]).unwrap();
        assert_eq!(u.labels().unwrap()[1], "b");
    }

    #[test]
    fn state_index_bounds() {
        assert!(StateIndex::new(2, 3).is_ok());
        assert!(matches!(
            StateIndex::new(3, 3),
            Err(Error::OutOfRange { value: 3, bound: 3, .. })
        ));
    }

    /// Plain BFS closure over a dense boolean adjacency.
    fn oracle_strongly_connected(n: usize, adj: &[Vec<bool>]) -> bool {
        let reach = |forward: bool| {
            let mut seen = vec![false; n];
            let mut stack = vec![0usize];
            seen[0] = true;
            while let Some(x) = stack.pop() {
                for y in 0..n {
                    let edge = if forward { adj[x][y] } else { adj[y][x] };
                    if edge && !seen[y] {
                        seen[y] = true;
                        stack.push(y);
                    }
                }
            }
            seen.into_iter().all(|s| s)
        };
        reach(true) && reach(false)
    }

    fn sparse_pattern() -> impl Strategy<Value = (usize, Vec<Vec<bool>>)> {
        (2usize..=8).prop_flat_map(|n| {
            (
                Just(n),
                proptest::collection::vec(proptest::collection::vec(proptest::bool::weighted(0.25), n), n),
            )
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn connectivity_agrees_with_bfs_oracle((n, mut adj) in sparse_pattern()) {
            // keep every row non-empty so only connectivity can fail
            for (x, row) in adj.iter_mut().enumerate() {
                if !row.iter().any(|&b| b) {
                    row[(x + 1) % n] = true;
                }
            }
            let mut entries = Vec::new();
            for (x, row) in adj.iter().enumerate() {
                let deg = row.iter().filter(|&&b| b).count() as f64;
                for (y, &b) in row.iter().enumerate() {
                    if b {
                        entries.push((x, y, 1.0 / deg));
                    }
                }
            }
            let report = validate_entries(n, &entries);
            prop_assert!(!report.has_row_sum_error());
            prop_assert_eq!(!report.has_not_strongly_connected(), oracle_strongly_connected(n, &adj));
            prop_assert_eq!(report.is_empty(), StochasticMatrix::from_sparse_rows(n, &entries).is_ok());
        }

        #[test]
        fn accepted_rows_sum_to_one((n, adj) in sparse_pattern()) {
            let mut entries = Vec::new();
            for (x, row) in adj.iter().enumerate() {
                let deg = row.iter().filter(|&&b| b).count();
                for (y, &b) in row.iter().enumerate() {
                    if b {
                        entries.push((x, y, 1.0 / deg as f64));
                    }
                }
            }
            if let Ok(u) = StochasticMatrix::from_sparse_rows(n, &entries) {
                for x in 0..n {
                    let s: f64 = u.row(x).1.iter().sum();
                    prop_assert!((s - 1.0).abs() <= ROW_SUM_TOL);
                }
                prop_assert!(u.validate().is_empty());
            }
        }
    }
}
