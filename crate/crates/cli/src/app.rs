//! The `firstreturn` command line.

use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use firstreturn_core::grid::{build_grid_chain, classify_vertex, index_to_point, point_to_index};
use firstreturn_core::montecarlo::DEFAULT_STEP_CAP;
use firstreturn_core::return_time::{
    closed_form_return_time, expected_return_time, expected_return_time_paper_variant, expected_return_time_with,
    hitting_time_oracle, kac_return_time, VerifyEntry,
};
use firstreturn_core::waiting_room::build_waiting_room;
use firstreturn_core::{
    Boundary, Diagnostics, Error, GridPoint, GridSpec, ReturnMethod, ReturnTimeResult, SolveMethod, StateIndex,
    StochasticMatrix, DENSE_CAP,
};
use rayon::prelude::*;

use crate::graph_file::{load_graph_file, FileError};
use crate::output::{
    rows_to_csv, sort_runs, to_json, CsvError, MethodRun, ResultDoc, SpecDoc, SweepDoc, SweepRow, VerifyDoc,
};
use crate::parallel::{monte_carlo_parallel, verify_parallel, DEFAULT_CHUNK};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] Error),
    #[error(transparent)]
    File(#[from] FileError),
    #[error(transparent)]
    Csv(#[from] CsvError),
    #[error("cannot write {path}: {source}")]
    Write {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// 2 for invalid input or IO, 3 for numerical failure, 4 when every
    /// simulated episode hit the step cap.
    pub fn exit_code(&self) -> i32 {
        let core = match self {
            CliError::Core(e) | CliError::File(FileError::Chain(e)) => e,
            _ => return 2,
        };
        match core {
            Error::AllTruncated { .. } => 4,
            e if e.is_numerical() => 3,
            _ => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "firstreturn", version, about = "Expected first return times of random walks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Return times on a box grid.
    Grid(GridArgs),
    /// Return times on a chain read from a graph JSON file.
    Graph(GraphArgs),
    /// Monte Carlo estimate only.
    Simulate(SimulateArgs),
    /// Cross-check every analytic method on a grid.
    Verify(VerifyArgs),
    /// One or more methods over many origins.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BoundaryArg {
    Periodic,
    Stay,
    Reflect,
}

impl From<BoundaryArg> for Boundary {
    fn from(b: BoundaryArg) -> Self {
        match b {
            BoundaryArg::Periodic => Boundary::Periodic,
            BoundaryArg::Stay => Boundary::StayStill,
            BoundaryArg::Reflect => Boundary::Reflecting,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    /// Fundamental-matrix formula, solver picked by size.
    Solve,
    /// Fundamental-matrix formula through the Neumann series.
    Series,
    /// Dense first-step hitting-time solve.
    Dense,
    /// Reciprocal stationary mass.
    Kac,
    /// Closed form (grids only).
    Closed,
    /// Every method that applies to the chain.
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct GridSel {
    /// Side lengths, e.g. `5,5`.
    #[arg(long, value_delimiter = ',', required = true)]
    pub dims: Vec<usize>,
    #[arg(long, value_enum, default_value = "periodic")]
    pub boundary: BoundaryArg,
}

#[derive(Debug, Args)]
pub struct TargetSel {
    /// Side lengths, e.g. `5,5`.
    #[arg(
        long,
        value_delimiter = ',',
        conflicts_with = "input",
        required_unless_present = "input"
    )]
    pub dims: Option<Vec<usize>>,
    #[arg(long, value_enum, default_value = "periodic")]
    pub boundary: BoundaryArg,
    /// Graph JSON file.
    #[arg(long)]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct McArgs {
    /// Monte Carlo episodes; adds a `monte_carlo` result when given.
    #[arg(long)]
    pub episodes: Option<u64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_STEP_CAP)]
    pub step_cap: u64,
}

#[derive(Debug, Args)]
pub struct OutArgs {
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Write here instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[command(flatten)]
    pub grid: GridSel,
    /// Coordinates, e.g. `2,2`.
    #[arg(long, value_delimiter = ',', required = true)]
    pub origin: Vec<usize>,
    #[arg(long, value_enum, default_value = "solve")]
    pub method: MethodArg,
    /// Also report the formula exactly as printed (off by `1 - U_oo`).
    #[arg(long)]
    pub paper_variant: bool,
    #[command(flatten)]
    pub mc: McArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct GraphArgs {
    #[arg(long, required = true)]
    pub input: PathBuf,
    /// State index.
    #[arg(long, required = true)]
    pub origin: usize,
    #[arg(long, value_enum, default_value = "solve")]
    pub method: MethodArg,
    /// Also report the formula exactly as printed (off by `1 - U_oo`).
    #[arg(long)]
    pub paper_variant: bool,
    #[command(flatten)]
    pub mc: McArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub target: TargetSel,
    /// Coordinates (`2,2`) on a grid, a state index for `--input`.
    #[arg(long, required = true)]
    pub origin: String,
    #[arg(long, default_value_t = 100_000)]
    pub episodes: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_STEP_CAP)]
    pub step_cap: u64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub grid: GridSel,
    /// `all`, or origins separated by `;`, e.g. `0,0;1,2`.
    #[arg(long, default_value = "all")]
    pub origins: String,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub target: TargetSel,
    /// `all`, or origins separated by `;`, e.g. `0,0;1,2`.
    #[arg(long, default_value = "all")]
    pub origins: String,
    #[arg(long, value_enum, default_value = "solve")]
    pub method: MethodArg,
    /// Also report the formula exactly as printed (off by `1 - U_oo`).
    #[arg(long)]
    pub paper_variant: bool,
    #[command(flatten)]
    pub mc: McArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

/// Most rows a sweep may produce.
pub const SWEEP_ROW_CAP: usize = 100_000;

/// A loaded chain and what it came from.
enum Target {
    Grid { spec: GridSpec, chain: StochasticMatrix },
    Graph { input: String, chain: StochasticMatrix },
}

impl Target {
    fn grid(sel: &GridSel) -> Result<Self, CliError> {
        let spec = GridSpec::new(sel.dims.clone(), sel.boundary.into())?;
        let chain = build_grid_chain(&spec)?;
        Ok(Target::Grid { spec, chain })
    }

    fn from_sel(sel: &TargetSel) -> Result<Self, CliError> {
        match (&sel.dims, &sel.input) {
            (Some(dims), None) => Target::grid(&GridSel {
                dims: dims.clone(),
                boundary: sel.boundary,
            }),
            (None, Some(path)) => Ok(Target::Graph {
                input: path.display().to_string(),
                chain: load_graph_file(path)?,
            }),
            _ => Err(CliError::Usage("give exactly one of --dims and --input".into())),
        }
    }

    fn chain(&self) -> &StochasticMatrix {
        match self {
            Target::Grid { chain, .. } | Target::Graph { chain, .. } => chain,
        }
    }

    fn spec_doc(&self) -> SpecDoc {
        match self {
            Target::Grid { spec, chain } => SpecDoc::Grid {
                dims: spec.dims().to_vec(),
                boundary: spec.boundary().tag().into(),
                states: chain.n_states(),
            },
            Target::Graph { input, chain } => SpecDoc::Graph {
                input: input.clone(),
                states: chain.n_states(),
            },
        }
    }

    /// Parses `2,2` (grid) or `7` (graph).
    fn parse_origin(&self, text: &str) -> Result<StateIndex, CliError> {
        let coords = text
            .split(',')
            .map(|t| t.trim().parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| CliError::Usage(format!("bad origin {text:?}")))?;
        self.origin_from(coords)
    }

    fn origin_from(&self, coords: Vec<usize>) -> Result<StateIndex, CliError> {
        match self {
            Target::Grid { spec, .. } => {
                if coords.len() != spec.ndim() {
                    return Err(CliError::Usage(format!(
                        "origin has {} coordinates, grid has {}",
                        coords.len(),
                        spec.ndim()
                    )));
                }
                Ok(point_to_index(spec, &GridPoint::new(coords))?)
            }
            Target::Graph { chain, .. } => match coords.as_slice() {
                [i] => Ok(chain.state(*i)?),
                _ => Err(CliError::Usage("a graph origin is a single state index".into())),
            },
        }
    }

    fn parse_origins(&self, text: &str) -> Result<Vec<StateIndex>, CliError> {
        if text.trim() == "all" {
            let n = self.chain().n_states();
            return (0..n).map(|i| Ok(self.chain().state(i)?)).collect();
        }
        let mut out: Vec<StateIndex> = text
            .split(';')
            .filter(|t| !t.trim().is_empty())
            .map(|t| self.parse_origin(t))
            .collect::<Result<_, _>>()?;
        out.sort();
        out.dedup();
        Ok(out)
    }

    fn coords(&self, o: usize) -> Vec<usize> {
        match self {
            Target::Grid { spec, chain } => index_to_point(spec, chain.state(o).expect("origin in range"))
                .expect("origin in range")
                .coords()
                .to_vec(),
            Target::Graph { .. } => vec![o],
        }
    }

    fn binding_count(&self, o: usize) -> Option<usize> {
        match self {
            Target::Grid { spec, .. } => {
                Some(classify_vertex(spec, &GridPoint::new(self.coords(o))).expect("origin in range"))
            }
            Target::Graph { .. } => None,
        }
    }
}

/// Output method names, in the order `all` reports them.
fn method_names(target: &Target, method: MethodArg, paper_variant: bool) -> Result<Vec<&'static str>, CliError> {
    let grid_boundary = match target {
        Target::Grid { spec, .. } => Some(spec.boundary()),
        Target::Graph { .. } => None,
    };
    let closed = |names: &mut Vec<&'static str>| {
        names.push("closed");
        if grid_boundary == Some(Boundary::StayStill) {
            names.push("closed_paper");
        }
    };
    let mut names = Vec::new();
    match method {
        MethodArg::Solve => names.push("solve"),
        MethodArg::Series => names.push("series"),
        MethodArg::Dense => names.push("dense"),
        MethodArg::Kac => names.push("kac"),
        MethodArg::Closed => {
            if grid_boundary.is_none() {
                return Err(CliError::Usage("closed forms exist only for grids".into()));
            }
            closed(&mut names);
        }
        MethodArg::All => {
            names.push("solve");
            names.push("series");
            // the dense oracles are skipped, not failed, on large chains
            if target.chain().n_states() - 1 <= DENSE_CAP {
                names.push("dense");
                names.push("kac");
            }
            if grid_boundary.is_some() {
                closed(&mut names);
            }
            names.push("paper_variant");
        }
    }
    if paper_variant && !names.contains(&"paper_variant") {
        names.push("paper_variant");
    }
    Ok(names)
}

struct McParams {
    episodes: u64,
    seed: u64,
    step_cap: u64,
}

impl McParams {
    fn from_args(mc: &McArgs) -> Option<Self> {
        mc.episodes.map(|episodes| McParams {
            episodes,
            seed: mc.seed,
            step_cap: mc.step_cap,
        })
    }
}

fn run_origin(
    target: &Target,
    o: StateIndex,
    names: &[&'static str],
    mc: Option<&McParams>,
) -> Result<Vec<MethodRun>, CliError> {
    let chain = target.chain();
    let needs_room = names
        .iter()
        .any(|n| matches!(*n, "solve" | "series" | "dense" | "paper_variant"));
    let room = if needs_room {
        Some(build_waiting_room(chain, o)?)
    } else {
        None
    };
    let mut runs = Vec::new();
    let mut record = |method: &'static str, f: &mut dyn FnMut() -> Result<ReturnTimeResult, Error>| {
        let t = Instant::now();
        let result = f()?;
        runs.push(MethodRun {
            origin: target.coords(o.get()),
            origin_index: o.get(),
            binding_count: target.binding_count(o.get()),
            method,
            result,
            seconds: t.elapsed().as_secs_f64(),
        });
        Ok::<_, Error>(())
    };
    for &name in names {
        let w = || room.as_ref().expect("waiting room built");
        match name {
            "solve" => record(name, &mut || expected_return_time(w()))?,
            "series" => record(name, &mut || expected_return_time_with(w(), SolveMethod::NeumannSeries))?,
            "dense" => record(name, &mut || hitting_time_oracle(w()))?,
            "paper_variant" => record(name, &mut || expected_return_time_paper_variant(w()))?,
            "kac" => record(name, &mut || kac_return_time(chain, o))?,
            "closed" | "closed_paper" => {
                let Target::Grid { spec, .. } = target else {
                    unreachable!()
                };
                let p = GridPoint::new(target.coords(o.get()));
                record(name, &mut || closed_form_return_time(spec, &p, name == "closed_paper"))?
            }
            _ => unreachable!("unknown method {name}"),
        }
    }
    if let Some(mc) = mc {
        record("monte_carlo", &mut || {
            let stats = monte_carlo_parallel(chain, o, mc.episodes, mc.seed, mc.step_cap, DEFAULT_CHUNK)?;
            Ok(ReturnTimeResult {
                value: stats.mean,
                method: ReturnMethod::MonteCarlo,
                diagnostics: Diagnostics::Simulation(stats),
                disputed: false,
            })
        })?;
    }
    Ok(runs)
}

fn render_single(target: &Target, o: StateIndex, runs: &[MethodRun], format: FormatArg) -> Result<String, CliError> {
    let spec = target.spec_doc();
    Ok(match format {
        FormatArg::Json => to_json(&ResultDoc {
            spec,
            origin: target.coords(o.get()),
            results: runs.iter().map(Into::into).collect(),
        }),
        FormatArg::Csv => rows_to_csv(&runs.iter().map(|r| SweepRow::from_run(&spec, r)).collect::<Vec<_>>())?,
    })
}

fn verify_method_name(e: &VerifyEntry) -> &'static str {
    match e.result.method {
        ReturnMethod::TheoremPaper => "paper_variant",
        ReturnMethod::TheoremCorrected => "solve",
        ReturnMethod::HittingOracle => "dense",
        ReturnMethod::Kac => "kac",
        ReturnMethod::ClosedForm if e.paper_claims => "closed_paper",
        ReturnMethod::ClosedForm => "closed",
        ReturnMethod::MonteCarlo => "monte_carlo",
    }
}

/// Runs a parsed command line and returns the document to print.
pub fn run(cli: Cli) -> Result<(String, Option<PathBuf>), CliError> {
    match cli.command {
        Command::Grid(a) => {
            let target = Target::grid(&a.grid)?;
            let o = target.origin_from(a.origin)?;
            let names = method_names(&target, a.method, a.paper_variant)?;
            let runs = run_origin(&target, o, &names, McParams::from_args(&a.mc).as_ref())?;
            Ok((
                render_single(&target, o, &runs, a.out.format.unwrap_or(FormatArg::Json))?,
                a.out.output,
            ))
        }
        Command::Graph(a) => {
            let target = Target::Graph {
                input: a.input.display().to_string(),
                chain: load_graph_file(&a.input)?,
            };
            let o = target.origin_from(vec![a.origin])?;
            let names = method_names(&target, a.method, a.paper_variant)?;
            let runs = run_origin(&target, o, &names, McParams::from_args(&a.mc).as_ref())?;
            Ok((
                render_single(&target, o, &runs, a.out.format.unwrap_or(FormatArg::Json))?,
                a.out.output,
            ))
        }
        Command::Simulate(a) => {
            let target = Target::from_sel(&a.target)?;
            let o = target.parse_origin(&a.origin)?;
            let mc = McParams {
                episodes: a.episodes,
                seed: a.seed,
                step_cap: a.step_cap,
            };
            let runs = run_origin(&target, o, &[], Some(&mc))?;
            Ok((
                render_single(&target, o, &runs, a.out.format.unwrap_or(FormatArg::Json))?,
                a.out.output,
            ))
        }
        Command::Verify(a) => {
            let target = Target::grid(&a.grid)?;
            let Target::Grid { spec, .. } = &target else {
                unreachable!()
            };
            let origins = target.parse_origins(&a.origins)?;
            let points: Vec<GridPoint> = origins.iter().map(|o| GridPoint::new(target.coords(o.get()))).collect();
            let report = verify_parallel(spec, &points)?;
            let runs: Vec<MethodRun> = report
                .entries
                .iter()
                .map(|e| MethodRun {
                    origin: target.coords(e.origin.get()),
                    origin_index: e.origin.get(),
                    binding_count: target.binding_count(e.origin.get()),
                    method: verify_method_name(e),
                    result: e.result.clone(),
                    // not timed individually
                    seconds: f64::NAN,
                })
                .collect();
            let doc = match a.out.format.unwrap_or(FormatArg::Json) {
                FormatArg::Json => to_json(&VerifyDoc::new(target.spec_doc(), &runs, &report, |o| target.coords(o))),
                FormatArg::Csv => {
                    let spec = target.spec_doc();
                    rows_to_csv(&runs.iter().map(|r| SweepRow::from_run(&spec, r)).collect::<Vec<_>>())?
                }
            };
            Ok((doc, a.out.output))
        }
        Command::Sweep(a) => {
            let target = Target::from_sel(&a.target)?;
            let origins = target.parse_origins(&a.origins)?;
            let names = method_names(&target, a.method, a.paper_variant)?;
            let mc = McParams::from_args(&a.mc);
            let rows = origins.len() * (names.len() + usize::from(mc.is_some()));
            if rows > SWEEP_ROW_CAP {
                return Err(CliError::Usage(format!(
                    "sweep would emit {rows} rows, cap is {SWEEP_ROW_CAP}"
                )));
            }
            let per_origin = origins
                .par_iter()
                .map(|&o| run_origin(&target, o, &names, mc.as_ref()))
                .collect::<Result<Vec<_>, _>>()?;
            let mut runs: Vec<MethodRun> = per_origin.into_iter().flatten().collect();
            if runs.is_empty() {
                return Err(CliError::Usage("sweep produced no results".into()));
            }
            sort_runs(&mut runs);
            let spec = target.spec_doc();
            let doc = match a.out.format.unwrap_or(FormatArg::Csv) {
                FormatArg::Csv => rows_to_csv(&runs.iter().map(|r| SweepRow::from_run(&spec, r)).collect::<Vec<_>>())?,
                FormatArg::Json => to_json(&SweepDoc {
                    spec,
                    results: runs.iter().map(Into::into).collect(),
                }),
            };
            Ok((doc, a.out.output))
        }
    }
}

/// Runs and prints; returns the process exit code.
pub fn execute(cli: Cli) -> i32 {
    let result = run(cli).and_then(|(doc, path)| match path {
        Some(path) => fs::write(&path, doc).map_err(|source| CliError::Write {
            path: path.display().to_string(),
            source,
        }),
        None => {
            print!("{doc}");
            Ok(())
        }
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", single_line(&e.to_string()));
            e.exit_code()
        }
    }
}

fn single_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}
