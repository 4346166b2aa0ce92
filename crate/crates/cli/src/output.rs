//! Result documents: JSON for single runs and verification, CSV for sweeps.
//!
//! CSV columns:
//!
//! ```text
//! dims,boundary,origin,binding_count,method,value,disputed,ci95,residual,seconds
//! ```
//!
//! `dims` is `5x5` (empty for graph files), `boundary` the boundary tag or
//! `graph`, and `origin` the coordinates joined by `:` (the state index for
//! graph files). Floats carry 17 significant digits, so a parsed sheet
//! re-emits byte for byte. Absent values are empty fields.

use std::fmt::Write as _;

use firstreturn_core::return_time::VerifyReport;
use firstreturn_core::{Diagnostics, ReturnTimeResult, SolveMethod};
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum CsvError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("csv header mismatch: {0}")]
    Header(String),
    #[error("csv line {line}: bad {field} {value:?}")]
    Field {
        line: u64,
        field: &'static str,
        value: String,
    },
}

pub const CSV_HEADER: [&str; 10] = [
    "dims",
    "boundary",
    "origin",
    "binding_count",
    "method",
    "value",
    "disputed",
    "ci95",
    "residual",
    "seconds",
];

/// What the computation ran on.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SpecDoc {
    Grid {
        dims: Vec<usize>,
        boundary: String,
        states: usize,
    },
    Graph {
        input: String,
        states: usize,
    },
}

impl SpecDoc {
    fn dims_field(&self) -> String {
        match self {
            SpecDoc::Grid { dims, .. } => join(dims, "x"),
            SpecDoc::Graph { .. } => String::new(),
        }
    }

    fn boundary_field(&self) -> String {
        match self {
            SpecDoc::Grid { boundary, .. } => boundary.clone(),
            SpecDoc::Graph { .. } => "graph".into(),
        }
    }
}

/// One method evaluated at one origin.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodRun {
    /// Grid coordinates, or the single state index of a graph file.
    pub origin: Vec<usize>,
    pub origin_index: usize,
    pub binding_count: Option<usize>,
    /// Command-line method name (`solve`, `kac`, `monte_carlo`, ...).
    pub method: &'static str,
    pub result: ReturnTimeResult,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DiagnosticsDoc {
    None {
        seconds: f64,
    },
    Solve {
        solver: &'static str,
        residual_inf: f64,
        terms_used: Option<usize>,
        tail_bound: Option<f64>,
        seconds: f64,
    },
    Simulation {
        episodes: u64,
        mean: f64,
        variance: f64,
        ci95_halfwidth: f64,
        seed: u64,
        truncated_episodes: u64,
        seconds: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultEntry {
    pub method: &'static str,
    pub algorithm: &'static str,
    pub value: f64,
    pub disputed: bool,
    pub diagnostics: DiagnosticsDoc,
}

impl From<&MethodRun> for ResultEntry {
    fn from(run: &MethodRun) -> Self {
        let seconds = run.seconds;
        let diagnostics = match &run.result.diagnostics {
            Diagnostics::None => DiagnosticsDoc::None { seconds },
            Diagnostics::Solve(d) => DiagnosticsDoc::Solve {
                solver: match d.method {
                    SolveMethod::DenseDirect => "dense_direct",
                    SolveMethod::NeumannSeries => "neumann_series",
                },
                residual_inf: d.residual_inf,
                terms_used: d.terms_used,
                tail_bound: d.tail_bound,
                seconds,
            },
            Diagnostics::Simulation(s) => DiagnosticsDoc::Simulation {
                episodes: s.episodes,
                mean: s.mean,
                variance: s.variance,
                ci95_halfwidth: s.ci95_halfwidth,
                seed: s.seed,
                truncated_episodes: s.truncated_episodes,
                seconds,
            },
        };
        ResultEntry {
            method: run.method,
            algorithm: run.result.method.name(),
            value: run.result.value,
            disputed: run.result.disputed,
            diagnostics,
        }
    }
}

/// Output of `grid`, `graph` and `simulate`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultDoc {
    pub spec: SpecDoc,
    pub origin: Vec<usize>,
    pub results: Vec<ResultEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepDoc {
    pub spec: SpecDoc,
    pub results: Vec<SweepEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepEntry {
    pub origin: Vec<usize>,
    pub binding_count: Option<usize>,
    #[serde(flatten)]
    pub entry: ResultEntry,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyDoc {
    pub spec: SpecDoc,
    pub entries: Vec<SweepEntry>,
    pub pairwise_deltas: Vec<DeltaEntry>,
    pub discrepancy_flags: Vec<FlagEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaEntry {
    pub origin: Vec<usize>,
    pub max_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlagEntry {
    pub origin: Vec<usize>,
    pub kind: String,
    pub message: String,
}

impl VerifyDoc {
    /// `runs` are the report's entries already converted to [`MethodRun`]s;
    /// `coords` maps a state index to its printed origin.
    pub fn new(spec: SpecDoc, runs: &[MethodRun], report: &VerifyReport, coords: impl Fn(usize) -> Vec<usize>) -> Self {
        VerifyDoc {
            spec,
            entries: runs.iter().map(SweepEntry::from).collect(),
            pairwise_deltas: report
                .pairwise_deltas
                .iter()
                .map(|&(o, max_delta)| DeltaEntry {
                    origin: coords(o.get()),
                    max_delta,
                })
                .collect(),
            discrepancy_flags: report
                .discrepancy_flags
                .iter()
                .map(|d| FlagEntry {
                    origin: coords(d.origin.get()),
                    kind: format!("{:?}", d.kind),
                    message: d.message.clone(),
                })
                .collect(),
        }
    }
}

impl From<&MethodRun> for SweepEntry {
    fn from(run: &MethodRun) -> Self {
        SweepEntry {
            origin: run.origin.clone(),
            binding_count: run.binding_count,
            entry: run.into(),
        }
    }
}

/// Pretty JSON followed by exactly one newline.
pub fn to_json<T: Serialize>(doc: &T) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("result documents serialize");
    s.push('\n');
    s
}

/// One CSV line.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub dims: String,
    pub boundary: String,
    pub origin: String,
    pub binding_count: Option<usize>,
    pub method: String,
    pub value: f64,
    pub disputed: bool,
    pub ci95: Option<f64>,
    pub residual: Option<f64>,
    pub seconds: f64,
}

impl SweepRow {
    pub fn from_run(spec: &SpecDoc, run: &MethodRun) -> Self {
        SweepRow {
            dims: spec.dims_field(),
            boundary: spec.boundary_field(),
            origin: join(&run.origin, ":"),
            binding_count: run.binding_count,
            method: run.method.into(),
            value: run.result.value,
            disputed: run.result.disputed,
            ci95: match &run.result.diagnostics {
                Diagnostics::Simulation(s) => Some(s.ci95_halfwidth),
                _ => None,
            },
            residual: run.result.residual(),
            seconds: run.seconds,
        }
    }
}

/// Sorts runs by origin index, then method name.
pub fn sort_runs(runs: &mut [MethodRun]) {
    runs.sort_by(|a, b| (a.origin_index, a.method).cmp(&(b.origin_index, b.method)));
}

fn join(xs: &[usize], sep: &str) -> String {
    let mut s = String::new();
    for (i, x) in xs.iter().enumerate() {
        if i > 0 {
            s.push_str(sep);
        }
        write!(s, "{x}").unwrap();
    }
    s
}

/// Decimal with 17 significant digits; exponent form outside `[1e-5, 1e17)`.
pub fn format_float(v: f64) -> String {
    if !v.is_finite() {
        return if v.is_nan() {
            "NaN".into()
        } else if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    if v == 0.0 {
        return if v.is_sign_negative() { "-0.0" } else { "0.0" }.into();
    }
    // the exponent after rounding to 17 digits, exact unlike log10
    let sci = format!("{v:.16e}");
    let exp: i32 = sci[sci.find('e').unwrap() + 1..].parse().unwrap();
    if (-5..17).contains(&exp) {
        format!("{:.*}", (16 - exp) as usize, v)
    } else {
        sci
    }
}

fn opt_float(v: Option<f64>) -> String {
    v.map(format_float).unwrap_or_default()
}

pub fn rows_to_csv(rows: &[SweepRow]) -> Result<String, CsvError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.dims.clone(),
            r.boundary.clone(),
            r.origin.clone(),
            r.binding_count.map(|b| b.to_string()).unwrap_or_default(),
            r.method.clone(),
            format_float(r.value),
            r.disputed.to_string(),
            opt_float(r.ci95),
            opt_float(r.residual),
            format_float(r.seconds),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn parse_csv(text: &str) -> Result<Vec<SweepRow>, CsvError> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers()?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(CsvError::Header(header.iter().collect::<Vec<_>>().join(",")));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |field: &'static str, value: &str| CsvError::Field {
            line,
            field,
            value: value.into(),
        };
        let float = |field: &'static str, i: usize| rec[i].parse::<f64>().map_err(|_| bad(field, &rec[i]));
        let opt = |field: &'static str, i: usize| {
            if rec[i].is_empty() {
                Ok(None)
            } else {
                float(field, i).map(Some)
            }
        };
        rows.push(SweepRow {
            dims: rec[0].into(),
            boundary: rec[1].into(),
            origin: rec[2].into(),
            binding_count: if rec[3].is_empty() {
                None
            } else {
                Some(rec[3].parse().map_err(|_| bad("binding_count", &rec[3]))?)
            },
            method: rec[4].into(),
            value: float("value", 5)?,
            disputed: rec[6].parse().map_err(|_| bad("disputed", &rec[6]))?,
            ci95: opt("ci95", 7)?,
            residual: opt("residual", 8)?,
            seconds: float("seconds", 9)?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(value: f64, ci95: Option<f64>) -> SweepRow {
        SweepRow {
            dims: "4x4".into(),
            boundary: "stay".into(),
            origin: "0:0".into(),
            binding_count: Some(2),
            method: "monte_carlo".into(),
            value,
            disputed: false,
            ci95,
            residual: None,
            seconds: 0.125,
        }
    }

    #[test]
    fn float_format() {
        assert_eq!(format_float(25.0), "25.000000000000000");
        assert_eq!(format_float(0.1), "0.10000000000000001");
        assert_eq!(format_float(1e-12), "9.9999999999999998e-13");
        assert_eq!(format_float(0.0), "0.0");
        for v in [
            999.9999999999999,
            0.09999999999999999,
            1.0 / 3.0,
            16.000000000000004,
            1e300,
            5e-324,
            123456.789,
            99999.99999999999,
        ] {
            assert_eq!(format_float(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn header_and_empty_fields() {
        let text = rows_to_csv(&[row(16.25, None)]).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER.join(","));
        assert_eq!(
            lines.next().unwrap(),
            "4x4,stay,0:0,2,monte_carlo,16.250000000000000,false,,,0.12500000000000000"
        );
        assert!(text.ends_with('\n'));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(parse_csv("a,b\n1,2\n"), Err(CsvError::Header(_))));
        let mut text = rows_to_csv(&[row(1.0, None)]).unwrap();
        text = text.replace("1.0000000000000000", "one");
        assert!(matches!(parse_csv(&text), Err(CsvError::Field { field: "value", .. })));
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_byte_identical(
            values in proptest::collection::vec((any::<f64>(), proptest::option::of(0.0f64..1e3)), 0..20)
        ) {
            let rows: Vec<SweepRow> = values.iter().map(|&(v, c)| row(v, c)).collect();
            let text = rows_to_csv(&rows).unwrap();
            let back = parse_csv(&text).unwrap();
            prop_assert_eq!(rows_to_csv(&back).unwrap(), text);
            for (a, b) in rows.iter().zip(&back) {
                prop_assert!(a.value.to_bits() == b.value.to_bits() || (a.value.is_nan() && b.value.is_nan()));
            }
        }
    }
}
