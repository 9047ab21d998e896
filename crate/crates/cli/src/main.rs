//! `treedp` command-line front end.
//!
//! Exit codes: 0 success, 1 unsatisfiable, 2 error (a JSON object with a machine-readable
//! `code` goes to standard error).

mod report;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use thiserror::Error;
use treedp::checker::{model_check, CheckError, CheckOptions};
use treedp::coloring::solve_3coloring_with;
use treedp::decomp::{
    heuristic_decompose, parse_td, write_td, Strategy, TdError, TreeDecomposition,
};
use treedp::engine::{EngineError, SimulateOptions};
use treedp::graph::{parse_graph_report, parse_weights, Graph, GraphError, WeightError, WeightMap};
use treedp::lang::{builtin, compile_layout, parse_formula, Formula, FormulaError};
use treedp::nicify::{make_very_nice, write_annotated, NicifyError, VeryNiceTd};
use treedp::oracle::{brute_force_check, OracleError, OracleOptions, DEFAULT_CAP};

use report::{BenchRow, RunReport, Timing};

#[derive(Parser)]
#[command(
    name = "treedp",
    version,
    about = "Dynamic programming on tree decompositions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Heuristic tree decomposition in PACE `.td` format.
    Decompose {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, default_value = "min-fill")]
        strategy: Strategy,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Very nice tree decomposition with node labels and tree-index.
    Nicify {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        td: Option<PathBuf>,
        #[arg(long, default_value = "min-fill")]
        strategy: Strategy,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// 3-colorability through the dedicated coloring program.
    Color3 {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        td: Option<PathBuf>,
    },
    /// Model-check a formula on a graph.
    Solve(SolveArgs),
    /// Brute-force reference answer for the same inputs.
    Oracle {
        #[command(flatten)]
        common: FormulaArgs,
        #[arg(long, default_value_t = DEFAULT_CAP)]
        cap: u64,
    },
    /// Run formulas over every `.gr` file of a directory and report CSV rows.
    Bench {
        #[arg(long)]
        dir: PathBuf,
        /// Formula file or bundled name; repeatable. Defaults to 3col, vc, ds, is, fvs.
        #[arg(long)]
        formula: Vec<String>,
        /// Per-run limit in seconds.
        #[arg(long, default_value_t = 60.0)]
        timeout: f64,
        /// Write CSV here instead of standard output.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long, default_value = "min-fill")]
        strategy: Strategy,
    },
}

#[derive(Args)]
struct FormulaArgs {
    #[arg(long)]
    graph: PathBuf,
    /// Path to a formula file, or a bundled name (3col, vc, ds, is, fvs, triangle-minor).
    #[arg(long)]
    formula: String,
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long)]
    json: bool,
    /// Reject the empty set for connected quantifiers.
    #[arg(long)]
    nonempty_connected: bool,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    common: FormulaArgs,
    #[arg(long)]
    td: Option<PathBuf>,
    #[arg(long, default_value = "min-fill")]
    strategy: Strategy,
    /// Give up after this many seconds.
    #[arg(long)]
    timeout: Option<f64>,
    /// Evaluate independent subtrees on worker threads.
    #[arg(long)]
    parallel: bool,
    /// Print the compiled state layout as JSON on standard error.
    #[arg(long)]
    dump_layout: bool,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Graph { path: PathBuf, source: GraphError },
    #[error("{path}: {source}")]
    Td { path: PathBuf, source: TdError },
    #[error(transparent)]
    Nicify(#[from] NicifyError),
    #[error("{name}: {source}")]
    Formula { name: String, source: FormulaError },
    #[error("{path}: {source}")]
    Weights { path: PathBuf, source: WeightError },
    #[error("no formula file or bundled formula named `{0}`")]
    UnknownFormula(String),
    #[error(transparent)]
    Check(CheckError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("timed out after {processed} of {total} nodes")]
    Timeout { processed: usize, total: usize },
}

impl CliError {
    fn code(&self) -> &'static str {
        match self {
            CliError::Io { .. } => "io",
            CliError::Graph { .. } => "graph-parse",
            CliError::Td { .. } => "td-parse",
            CliError::Nicify(_) => "invalid-td",
            CliError::Formula { .. } => "formula-parse",
            CliError::Weights { .. } => "weights-parse",
            CliError::UnknownFormula(_) => "unknown-formula",
            CliError::Check(_) => "check",
            CliError::Oracle(_) => "oracle",
            CliError::Timeout { .. } => "timeout",
        }
    }
}

impl From<CheckError> for CliError {
    fn from(e: CheckError) -> Self {
        match e {
            CheckError::Engine(EngineError::Deadline { processed, total }) => {
                CliError::Timeout { processed, total }
            }
            CheckError::Nicify(n) => CliError::Nicify(n),
            other => CliError::Check(other),
        }
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        CheckError::Engine(e).into()
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })
}

fn write_out(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, text).map_err(|source| CliError::Io {
            path: path.to_owned(),
            source,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_graph(path: &Path) -> Result<Graph, CliError> {
    let parsed = parse_graph_report(&read(path)?).map_err(|source| CliError::Graph {
        path: path.to_owned(),
        source,
    })?;
    if parsed.duplicate_edges > 0 {
        eprintln!(
            "warning: {}: {} duplicate edge lines ignored",
            path.display(),
            parsed.duplicate_edges
        );
    }
    Ok(parsed.graph)
}

fn load_td(path: &Path) -> Result<TreeDecomposition, CliError> {
    parse_td(&read(path)?).map_err(|source| CliError::Td {
        path: path.to_owned(),
        source,
    })
}

/// A readable file wins; otherwise the name (minus any `.mso`) must be a bundled formula.
fn load_formula(arg: &str) -> Result<(String, Formula), CliError> {
    let path = Path::new(arg);
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or(arg)
        .to_string();
    let text = if path.is_file() {
        read(path)?
    } else {
        builtin::source(&stem)
            .ok_or_else(|| CliError::UnknownFormula(arg.to_string()))?
            .to_string()
    };
    let f = parse_formula(&text).map_err(|source| CliError::Formula {
        name: arg.to_string(),
        source,
    })?;
    Ok((stem, f))
}

fn load_weights(path: Option<&Path>, g: &Graph, f: &Formula) -> Result<WeightMap, CliError> {
    let Some(path) = path else {
        return Ok(WeightMap::new());
    };
    let wrap = |source| CliError::Weights {
        path: path.to_owned(),
        source,
    };
    let w = parse_weights(&read(path)?).map_err(wrap)?;
    w.check_against(g).map_err(wrap)?;
    let free = f.free_variables();
    if let Some(var) = w.variables().find(|v| !free.contains(v)) {
        return Err(wrap(WeightError::UnknownVariable(var.to_string())));
    }
    Ok(w)
}

fn very_nice(
    g: &Graph,
    td: Option<&Path>,
    strategy: Strategy,
    timing: &mut Timing,
) -> Result<VeryNiceTd, CliError> {
    let start = Instant::now();
    let td = match td {
        Some(path) => load_td(path)?,
        None => heuristic_decompose(g, strategy),
    };
    timing.decompose_ms = ms(start.elapsed());
    let start = Instant::now();
    let nice = make_very_nice(&td, g)?;
    timing.nicify_ms = ms(start.elapsed());
    Ok(nice)
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1000.0
}

fn verdict(satisfiable: bool) -> ExitCode {
    if satisfiable {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn instance_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn print_witness_text(witness: &std::collections::BTreeMap<String, Vec<usize>>) {
    for (name, members) in witness {
        let ids: Vec<String> = members.iter().map(|v| v.to_string()).collect();
        println!("{name}: {}", ids.join(" "));
    }
}

fn solve(args: SolveArgs) -> Result<ExitCode, CliError> {
    let c = &args.common;
    let g = load_graph(&c.graph)?;
    let (name, f) = load_formula(&c.formula)?;
    let weights = load_weights(c.weights.as_deref(), &g, &f)?;
    let mut timing = Timing::default();
    let td = very_nice(&g, args.td.as_deref(), args.strategy, &mut timing)?;
    if args.dump_layout {
        let layout = compile_layout(&f, td.k);
        eprintln!(
            "{}",
            serde_json::to_string_pretty(&layout).expect("layout serializes")
        );
    }
    let options = CheckOptions {
        nonempty_connected: c.nonempty_connected,
        parallel: args.parallel,
        deadline: args
            .timeout
            .map(|s| Instant::now() + Duration::from_secs_f64(s)),
        ..Default::default()
    };
    let start = Instant::now();
    let result = model_check(&g, &td, &f, &weights, &options)?;
    timing.check_ms = ms(start.elapsed());
    for d in &result.diagnostics {
        eprintln!("note: {d}");
    }
    let report = RunReport::new(instance_name(&c.graph), name, &td, &result, timing);
    if c.json {
        println!(
            "{}",
            serde_json::to_string_pretty(&report).expect("report serializes")
        );
    } else {
        println!("satisfiable: {}", result.satisfiable);
        if let Some(v) = result.value {
            println!("value: {v}");
        }
        print_witness_text(&report.witness);
        println!(
            "width: {}, nodes: {}, max states: {}",
            result.stats.width, result.stats.nodes, result.stats.max_states
        );
    }
    Ok(verdict(result.satisfiable))
}

fn oracle(common: FormulaArgs, cap: u64) -> Result<ExitCode, CliError> {
    let g = load_graph(&common.graph)?;
    let (_, f) = load_formula(&common.formula)?;
    let weights = load_weights(common.weights.as_deref(), &g, &f)?;
    let options = OracleOptions {
        cap,
        nonempty_connected: common.nonempty_connected,
    };
    let r = brute_force_check(&g, &f, &weights, &options)?;
    let witness = report::one_based(&r.witness);
    if common.json {
        let out = json!({
            "satisfiable": r.satisfiable,
            "value": r.value,
            "witness": witness,
            "searched": r.searched,
        });
        println!("{}", serde_json::to_string_pretty(&out).expect("json"));
    } else {
        println!("satisfiable: {}", r.satisfiable);
        if let Some(v) = r.value {
            println!("value: {v}");
        }
        print_witness_text(&witness);
    }
    Ok(verdict(r.satisfiable))
}

fn bench(
    dir: &Path,
    formulas: &[String],
    timeout: f64,
    csv: Option<&Path>,
    strategy: Strategy,
) -> Result<ExitCode, CliError> {
    let entries = fs::read_dir(dir).map_err(|source| CliError::Io {
        path: dir.to_owned(),
        source,
    })?;
    let mut graphs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "gr"))
        .collect();
    graphs.sort();
    let names: Vec<String> = if formulas.is_empty() {
        ["3col", "vc", "ds", "is", "fvs"].map(String::from).to_vec()
    } else {
        formulas.to_vec()
    };
    let loaded = names
        .iter()
        .map(|n| load_formula(n))
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = String::from(BenchRow::HEADER);
    out.push('\n');
    for path in &graphs {
        let g = load_graph(path)?;
        let mut timing = Timing::default();
        let td = very_nice(&g, None, strategy, &mut timing)?;
        for (name, f) in &loaded {
            let options = CheckOptions {
                deadline: Some(Instant::now() + Duration::from_secs_f64(timeout)),
                witness: false,
                ..Default::default()
            };
            let start = Instant::now();
            let outcome = model_check(&g, &td, f, &WeightMap::new(), &options);
            let elapsed = ms(start.elapsed());
            let row = BenchRow::new(
                instance_name(path),
                &g,
                &td,
                name,
                elapsed,
                outcome.as_ref(),
            );
            if let Err(CheckError::Engine(EngineError::Deadline { processed, total })) = &outcome {
                eprintln!(
                    "{} {name}: timeout after {processed} of {total} nodes",
                    path.display()
                );
            } else if let Err(e) = &outcome {
                eprintln!("{} {name}: {e}", path.display());
            }
            out.push_str(&row.to_csv());
            out.push('\n');
        }
    }
    write_out(csv, &out)?;
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Decompose {
            graph,
            strategy,
            out,
        } => {
            let g = load_graph(&graph)?;
            let td = heuristic_decompose(&g, strategy);
            write_out(out.as_deref(), &write_td(&td, g.vertex_count()))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Nicify {
            graph,
            td,
            strategy,
            out,
        } => {
            let g = load_graph(&graph)?;
            let nice = very_nice(&g, td.as_deref(), strategy, &mut Timing::default())?;
            write_out(out.as_deref(), &write_annotated(&nice, g.vertex_count()))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Color3 { graph, td } => {
            let g = load_graph(&graph)?;
            let nice = very_nice(&g, td.as_deref(), Strategy::MinFill, &mut Timing::default())?;
            let r = solve_3coloring_with(&g, &nice, &SimulateOptions::default())?;
            println!(
                "{}",
                if r.satisfiable {
                    "3-colorable"
                } else {
                    "not 3-colorable"
                }
            );
            Ok(verdict(r.satisfiable))
        }
        Command::Solve(args) => solve(args),
        Command::Oracle { common, cap } => oracle(common, cap),
        Command::Bench {
            dir,
            formula,
            timeout,
            csv,
            strategy,
        } => bench(&dir, &formula, timeout, csv.as_deref(), strategy),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            let body = json!({ "error": { "code": e.code(), "message": e.to_string() } });
            eprintln!("{body}");
            ExitCode::from(2)
        }
    }
}
