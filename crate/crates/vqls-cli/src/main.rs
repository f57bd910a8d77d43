//! Command-line front end: load a problem file, train the variational
//! solver, and emit loss traces, final distributions, evaluation budgets,
//! and a comparison against the classical solution.
//!
//! Exit codes: 0 on success, 2 on validation errors (bad file, bad flag
//! combination), 3 on training failure (divergence, degenerate norm).

mod report;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use rayon::prelude::*;
use report::{
    aggregate_csv, losses_csv, total_variation_distance, write_atomic, ConfigEcho, MultiSeedReport,
    RunReport,
};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use vqls::ansatz::GrowthPolicy;
use vqls::cost::{count_evaluations, CostKind, CostSpec, Method, Shots};
use vqls::problem::{decompose_matrix_to_pauli, JsonComplex, LseProblem, ProblemMode};
use vqls::qsim::CMatrix;
use vqls::trainer::{solve, TrainConfig, TrainError, TrainingTrace};

const EXIT_VALIDATION: u8 = 2;
const EXIT_TRAINING: u8 = 3;

#[derive(Parser)]
#[command(
    name = "vqls",
    version,
    about = "Variational solver for linear systems of equations on a statevector simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a solver on a problem file and write losses.csv and report.json
    Solve(SolveArgs),
    /// Expand a matrix over the Pauli basis and print the terms
    Decompose(DecomposeArgs),
    /// Print the circuit and qubit budgets for a system size
    Bench(BenchArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Direct,
    Hadamard,
    Overlap,
    Coherent,
}

impl From<MethodArg> for Method {
    fn from(value: MethodArg) -> Self {
        match value {
            MethodArg::Direct => Method::Direct,
            MethodArg::Hadamard => Method::Hadamard,
            MethodArg::Overlap => Method::Overlap,
            MethodArg::Coherent => Method::Coherent,
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    /// Problem description file (JSON)
    #[arg(long)]
    problem: PathBuf,
    /// Cost evaluation method
    #[arg(long, value_enum, default_value_t = MethodArg::Hadamard)]
    method: MethodArg,
    /// Train the local cost function
    #[arg(long, conflicts_with = "global")]
    local: bool,
    /// Train the global cost function (the default)
    #[arg(long)]
    global: bool,
    /// Optimizer rate (fraction of the rotation period per step)
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 50)]
    steps: usize,
    /// Shots per circuit during training; omit for analytic values
    #[arg(long)]
    shots: Option<u64>,
    /// Shots for sampling the final distribution; 0 reports analytic
    /// probabilities
    #[arg(long, default_value_t = 1000)]
    shots_final: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Initial ansatz depth
    #[arg(long, default_value_t = 1)]
    depth: usize,
    /// Depth limit for dynamic growth
    #[arg(long, default_value_t = 10)]
    max_depth: usize,
    /// Disable dynamic ansatz growth
    #[arg(long)]
    no_grow: bool,
    /// Stop once the loss reaches this value
    #[arg(long)]
    abort_loss: Option<f64>,
    /// Run this many seeds (seed, seed+1, …) in parallel and aggregate
    #[arg(long)]
    seeds: Option<usize>,
    /// Output directory for artifacts
    #[arg(long, default_value = ".")]
    output: PathBuf,
}

#[derive(Args)]
struct DecomposeArgs {
    /// JSON file holding the matrix (either a bare nested array or an
    /// object with a "matrix" field), row-major, entries as [re, im]
    #[arg(long)]
    matrix: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// Data qubits
    #[arg(long, default_value_t = 3)]
    n: usize,
    /// Decomposition terms
    #[arg(long, default_value_t = 3)]
    m: usize,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn validation(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_VALIDATION,
            message: message.into(),
        }
    }

    fn training(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_TRAINING,
            message: message.into(),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve(args) => run_solve(&args),
        Command::Decompose(args) => run_decompose(&args),
        Command::Bench(args) => run_bench(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}

fn load_problem(path: &Path) -> Result<LseProblem, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::validation(format!("cannot read {}: {e}", path.display())))?;
    LseProblem::from_json(&text)
        .map_err(|e| Failure::validation(format!("invalid problem file {}: {e}", path.display())))
}

fn run_solve(args: &SolveArgs) -> Result<(), Failure> {
    let problem = load_problem(&args.problem)?;
    let kind = if args.local {
        CostKind::Local
    } else {
        CostKind::Global
    };
    let method: Method = args.method.into();

    // flag/mode conflicts are validation errors, reported before training
    if kind == CostKind::Local && matches!(method, Method::Overlap | Method::Coherent) {
        return Err(Failure::validation(format!(
            "{method} supports global cost only"
        )));
    }
    if problem.mode() == ProblemMode::Matrix && method != Method::Direct {
        return Err(Failure::validation(
            "matrix-mode problems support only --method direct",
        ));
    }

    let ground_truth = problem
        .classical_probabilities()
        .map_err(|e| Failure::validation(format!("classical reference solve failed: {e}")))?;

    let config = TrainConfig {
        steps: args.steps,
        learning_rate: args.lr,
        cost: CostSpec::new(
            kind,
            method,
            match args.shots {
                Some(count) => Shots::Count(count),
                None => Shots::Analytic,
            },
        ),
        growth: GrowthPolicy {
            enabled: !args.no_grow,
            max_depth: args.max_depth,
            ..GrowthPolicy::default()
        },
        seed: args.seed,
        abort_loss: args.abort_loss,
        initial_depth: args.depth,
        final_shots: (args.shots_final > 0).then_some(args.shots_final),
        ..TrainConfig::default()
    };

    let echo = ConfigEcho {
        problem: args.problem.display().to_string(),
        n_qubits: problem.n_qubits(),
        mode: problem.mode().to_string(),
        terms: problem.term_count(),
        method: method.to_string(),
        kind: kind.to_string(),
        lr: args.lr,
        steps: args.steps,
        shots: args.shots,
        shots_final: (args.shots_final > 0).then_some(args.shots_final),
        seed: args.seed,
        depth: args.depth,
        max_depth: args.max_depth,
        grow: !args.no_grow,
    };

    std::fs::create_dir_all(&args.output)
        .map_err(|e| Failure::validation(format!("cannot create output directory: {e}")))?;

    match args.seeds {
        None => solve_single_seed(&problem, &config, &echo, &ground_truth, &args.output),
        Some(count) => {
            solve_multi_seed(&problem, &config, &echo, &ground_truth, &args.output, count)
        }
    }
}

fn train(problem: &LseProblem, config: &TrainConfig) -> Result<TrainingTrace, Failure> {
    solve(problem, config).map_err(|e| match e {
        TrainError::BadConfig(_) => Failure::validation(e.to_string()),
        TrainError::Diverged { .. } => Failure::training(e.to_string()),
        other => Failure::training(other.to_string()),
    })
}

fn solve_single_seed(
    problem: &LseProblem,
    config: &TrainConfig,
    echo: &ConfigEcho,
    ground_truth: &[f64],
    output: &Path,
) -> Result<(), Failure> {
    let started = std::time::Instant::now();
    let trace = train(problem, config)?;
    let elapsed = started.elapsed().as_secs_f64();

    let tv = total_variation_distance(&trace.final_probabilities, ground_truth);
    let report = RunReport {
        config: echo.clone(),
        losses: trace.losses.clone(),
        growth_events: trace.growth_events.clone(),
        final_probabilities: trace.final_probabilities.clone(),
        ground_truth_probabilities: ground_truth.to_vec(),
        total_variation_distance: tv,
        circuit_count_total: trace.circuit_count_total,
        wall_clock_seconds: elapsed,
    };

    write_artifact(
        &output.join("losses.csv"),
        losses_csv(&trace.losses).as_bytes(),
    )?;
    write_artifact(&output.join("report.json"), &to_json(&report)?)?;

    let budget = count_evaluations(
        config.cost.method,
        config.cost.kind,
        problem.term_count(),
        problem.n_qubits(),
        &problem.coefficients(),
    )
    .map_err(|e| Failure::validation(e.to_string()))?;

    println!(
        "{} qubits, mode {}, {} terms; method {} ({} cost), seed {}",
        echo.n_qubits, echo.mode, echo.terms, echo.method, echo.kind, echo.seed
    );
    println!(
        "final loss {:.6e} after {} steps, {} growth event(s)",
        trace.losses.last().copied().unwrap_or(f64::NAN),
        trace.losses.len(),
        trace.growth_events.len()
    );
    println!(
        "per evaluation: {} norm + {} raw circuits on up to {} qubits; {} circuits total",
        budget.circuits_norm,
        budget.circuits_raw_cost,
        budget.qubits_required,
        trace.circuit_count_total
    );
    println!("total variation distance to classical solution: {tv:.6}");
    println!("wrote losses.csv, report.json to {}", output.display());
    Ok(())
}

fn solve_multi_seed(
    problem: &LseProblem,
    config: &TrainConfig,
    echo: &ConfigEcho,
    ground_truth: &[f64],
    output: &Path,
    seed_count: usize,
) -> Result<(), Failure> {
    if seed_count == 0 {
        return Err(Failure::validation("--seeds must be at least 1"));
    }
    let started = std::time::Instant::now();
    let seeds: Vec<u64> = (0..seed_count as u64).map(|i| config.seed + i).collect();

    let runs: Vec<Result<(u64, TrainingTrace), Failure>> = seeds
        .par_iter()
        .map(|&seed| {
            let seeded = TrainConfig {
                seed,
                ..config.clone()
            };
            let trace = train(problem, &seeded)?;
            write_artifact(
                &output.join(format!("losses_seed{seed}.csv")),
                losses_csv(&trace.losses).as_bytes(),
            )?;
            Ok((seed, trace))
        })
        .collect();
    let mut traces = Vec::with_capacity(seed_count);
    for run in runs {
        traces.push(run?);
    }
    let elapsed = started.elapsed().as_secs_f64();

    let per_seed_losses: Vec<Vec<f64>> = traces.iter().map(|(_, t)| t.losses.clone()).collect();
    write_artifact(
        &output.join("aggregate.csv"),
        aggregate_csv(&per_seed_losses).as_bytes(),
    )?;

    let final_losses: Vec<f64> = traces
        .iter()
        .map(|(_, t)| t.losses.last().copied().unwrap_or(f64::NAN))
        .collect();
    let median_final_loss = {
        let mut sorted = final_losses.clone();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let mid = sorted.len() / 2;
        if sorted.len().is_multiple_of(2) {
            (sorted[mid - 1] + sorted[mid]) / 2.0
        } else {
            sorted[mid]
        }
    };
    let tvs: Vec<f64> = traces
        .iter()
        .map(|(_, t)| total_variation_distance(&t.final_probabilities, ground_truth))
        .collect();
    let report = MultiSeedReport {
        config: echo.clone(),
        seeds,
        final_losses,
        median_final_loss,
        total_variation_distances: tvs,
        ground_truth_probabilities: ground_truth.to_vec(),
        circuit_count_total: traces.iter().map(|(_, t)| t.circuit_count_total).sum(),
        wall_clock_seconds: elapsed,
    };
    write_artifact(&output.join("report.json"), &to_json(&report)?)?;

    println!(
        "{} seeds trained in parallel; median final loss {:.6e}",
        seed_count, report.median_final_loss
    );
    println!(
        "wrote losses_seed*.csv, aggregate.csv, report.json to {}",
        output.display()
    );
    Ok(())
}

fn write_artifact(path: &Path, contents: &[u8]) -> Result<(), Failure> {
    write_atomic(path, contents)
        .map_err(|e| Failure::validation(format!("cannot write {}: {e}", path.display())))
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<Vec<u8>, Failure> {
    let mut out = serde_json::to_vec_pretty(value)
        .map_err(|e| Failure::validation(format!("serialization failed: {e}")))?;
    out.push(b'\n');
    Ok(out)
}

/// Accepts either a bare row-major nested array or `{"matrix": [...]}`.
#[derive(serde::Deserialize)]
#[serde(untagged)]
enum MatrixFile {
    Wrapped { matrix: Vec<Vec<JsonComplex>> },
    Bare(Vec<Vec<JsonComplex>>),
}

fn run_decompose(args: &DecomposeArgs) -> Result<(), Failure> {
    let text = std::fs::read_to_string(&args.matrix)
        .map_err(|e| Failure::validation(format!("cannot read {}: {e}", args.matrix.display())))?;
    let rows = match serde_json::from_str::<MatrixFile>(&text)
        .map_err(|e| Failure::validation(format!("invalid matrix file: {e}")))?
    {
        MatrixFile::Wrapped { matrix } => matrix,
        MatrixFile::Bare(matrix) => matrix,
    };
    let dim = rows.len();
    if dim == 0 || rows.iter().any(|r| r.len() != dim) {
        return Err(Failure::validation("matrix must be square and non-empty"));
    }
    let matrix = CMatrix::from_shape_fn((dim, dim), |(r, c)| Complex64::from(rows[r][c]));
    let terms =
        decompose_matrix_to_pauli(&matrix).map_err(|e| Failure::validation(e.to_string()))?;
    println!("{} Pauli term(s):", terms.len());
    for term in &terms {
        println!(
            "{}  {:+.15e}  {:+.15e}",
            term.label, term.coeff.re, term.coeff.im
        );
    }
    Ok(())
}

fn run_bench(args: &BenchArgs) -> Result<(), Failure> {
    if args.n == 0 || args.m == 0 {
        return Err(Failure::validation("--n and --m must be at least 1"));
    }
    let coeffs = vec![Complex64::new(1.0, 0.0); args.m];
    let budget = |method: Method, kind: CostKind| {
        count_evaluations(method, kind, args.m, args.n, &coeffs).ok()
    };

    println!(
        "budgets for n = {} data qubits, m = {} terms",
        args.n, args.m
    );
    println!(
        "{:<8} {:<10} {:>6} {:>12}",
        "term", "method", "qubits", "evaluations"
    );
    let norm_direct = budget(Method::Direct, CostKind::Global).unwrap();
    let norm_hadamard = budget(Method::Hadamard, CostKind::Global).unwrap();
    println!(
        "{:<8} {:<10} {:>6} {:>12}",
        "norm", "direct", args.n, norm_direct.circuits_norm
    );
    println!(
        "{:<8} {:<10} {:>6} {:>12}",
        "norm",
        "hadamard",
        args.n + 1,
        norm_hadamard.norm_base()
    );
    for (kind_name, kind) in [("global", CostKind::Global), ("local", CostKind::Local)] {
        for (method_name, method) in [
            ("direct", Method::Direct),
            ("hadamard", Method::Hadamard),
            ("overlap", Method::Overlap),
            ("coherent", Method::Coherent),
        ] {
            match budget(method, kind) {
                Some(b) => println!(
                    "{:<8} {:<10} {:>6} {:>12}",
                    kind_name,
                    method_name,
                    b.qubits_required,
                    b.raw_base()
                ),
                None => println!(
                    "{:<8} {:<10} {:>6} {:>12}",
                    kind_name, method_name, "n/a", "n/a"
                ),
            }
        }
    }
    println!("evaluations are base counts; non-real coefficient pairs add imaginary circuits");
    Ok(())
}
