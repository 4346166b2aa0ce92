//! Graph JSON files.
//!
//! ```json
//! { "n": 2, "labels": ["a", "b"], "rows": [[[1, 1.0]], [[0, 1.0]]] }
//! ```
//!
//! `rows[x]` lists `[col, prob]` pairs of row `x`. Probabilities are written
//! in shortest round-trip form.

use std::fs;
use std::path::Path;

use firstreturn_core::{Error, StochasticMatrix};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum FileError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed graph file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Chain(#[from] Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphDocument {
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl GraphDocument {
    pub fn from_chain(u: &StochasticMatrix) -> Self {
        let rows = (0..u.n_states())
            .map(|x| {
                let (cols, probs) = u.row(x);
                cols.iter().copied().zip(probs.iter().copied()).collect()
            })
            .collect();
        GraphDocument {
            n: u.n_states(),
            labels: u.labels().map(|l| l.to_vec()),
            rows,
        }
    }

    pub fn into_chain(self) -> Result<StochasticMatrix, FileError> {
        let chain = StochasticMatrix::from_rows(self.n, &self.rows)?;
        Ok(match self.labels {
            Some(labels) => chain.with_labels(labels)?,
            None => chain,
        })
    }
}

pub fn parse_graph(text: &str) -> Result<StochasticMatrix, FileError> {
    serde_json::from_str::<GraphDocument>(text)?.into_chain()
}

pub fn load_graph_file(path: impl AsRef<Path>) -> Result<StochasticMatrix, FileError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| FileError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_graph(&text)
}

pub fn graph_to_json(u: &StochasticMatrix) -> String {
    let mut s = serde_json::to_string(&GraphDocument::from_chain(u)).expect("graph documents serialize");
    s.push('\n');
    s
}

pub fn save_graph_file(u: &StochasticMatrix, path: impl AsRef<Path>) -> Result<(), FileError> {
    let path = path.as_ref();
    fs::write(path, graph_to_json(u)).map_err(|source| FileError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use firstreturn_core::grid::{build_grid_chain, Boundary, GridSpec};
    use firstreturn_core::ChainViolation;
    use proptest::prelude::*;

    fn chain_err(text: &str) -> ChainViolation {
        match parse_graph(text) {
            Err(FileError::Chain(Error::Chain(v))) => v,
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn swap_chain_file() {
        let u = parse_graph(r#"{"n":2,"rows":[[[1,1.0]],[[0,1.0]]]}"#).unwrap();
        assert_eq!(u.n_states(), 2);
        assert_eq!(u.get(0, 1), 1.0);
    }

    #[test]
    fn too_small() {
        assert!(matches!(
            chain_err(r#"{"n":1,"rows":[[[0,1.0]]]}"#),
            ChainViolation::TooSmall { n: 1 }
        ));
    }

    #[test]
    fn column_out_of_range() {
        assert!(matches!(
            chain_err(r#"{"n":2,"rows":[[[1,0.5],[2,0.5]],[[0,1.0]]]}"#),
            ChainViolation::IndexOutOfRange { row: 0, col: 2, n: 2 }
        ));
    }

    #[test]
    fn malformed_files() {
        for text in [
            "",
            "{",
            r#"{"n":2}"#,
            r#"{"n":2,"rows":[[[1,"x"]],[[0,1.0]]]}"#,
            r#"{"n":-2,"rows":[]}"#,
            r#"{"n":2,"rows":[[[1,1.0]],[[0,1.0]]],"extra":1}"#,
        ] {
            assert!(matches!(parse_graph(text), Err(FileError::Parse(_))), "{text}");
        }
    }

    #[test]
    fn labels_round_trip() {
        let text = r#"{"n":2,"labels":["a","b"],"rows":[[[1,1.0]],[[0,1.0]]]}"#;
        let u = parse_graph(text).unwrap();
        assert_eq!(u.labels().unwrap(), ["a", "b"]);
        assert_eq!(graph_to_json(&u), format!("{text}\n"));
        assert!(parse_graph(r#"{"n":2,"labels":["a"],"rows":[[[1,1.0]],[[0,1.0]]]}"#).is_err());
    }

    #[test]
    fn missing_file() {
        assert!(matches!(
            load_graph_file("/nonexistent/graph.json"),
            Err(FileError::Io { .. })
        ));
    }

    #[test]
    fn file_round_trip() {
        let u = build_grid_chain(&GridSpec::new(vec![3, 4], Boundary::Reflecting).unwrap()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.json");
        save_graph_file(&u, &path).unwrap();
        assert_eq!(load_graph_file(&path).unwrap(), u);
    }

    proptest! {
        #[test]
        fn serialization_is_bit_exact(weights in proptest::collection::vec(1e-6f64..1.0, 3..12)) {
            // one row of arbitrary doubles, closed into a cycle by the others
            let n = weights.len();
            let total: f64 = weights.iter().sum();
            let mut entries: Vec<(usize, usize, f64)> = Vec::new();
            let mut acc = 0.0;
            for (y, w) in weights.iter().enumerate().skip(1) {
                let p = w / total;
                acc += p;
                entries.push((0, y, p));
            }
            entries.push((0, 0, 1.0 - acc));
            for x in 1..n {
                entries.push((x, (x + 1) % n, 1.0));
            }
            let u = StochasticMatrix::from_sparse_rows(n, &entries).unwrap();
            let back = parse_graph(&graph_to_json(&u)).unwrap();
            for ((x1, y1, p1), (x2, y2, p2)) in u.entries().zip(back.entries()) {
                prop_assert_eq!((x1, y1), (x2, y2));
                prop_assert_eq!(p1.to_bits(), p2.to_bits());
            }
        }
    }
}
