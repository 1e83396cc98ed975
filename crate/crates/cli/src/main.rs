//! `markov-gap`: spectral gaps, bound verification, truncation sweeps and
//! skeleton checks from the command line.
//!
//! Exit codes: 0 success, 1 a verification row failed, 2 invalid input,
//! 3 numerical failure, 4 output I/O failure.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use markov_gap::bounds::verify;
use markov_gap::generator::{
    constant_birth_death, is_reversible, stationary_distribution, three_state_example,
};
use markov_gap::io::{load_function, load_model};
use markov_gap::skeleton::skeleton_gap_check;
use markov_gap::spectral::{
    bd_closed_form_gap, bd_lower_bound, spectral_gap, ChainLength, SolverChoice, SpectralReport,
};
use markov_gap::truncation::{gap_convergence_sweep, FiniteChain, GeometricBirthDeath};
use markov_gap::{Error, GeneratorMatrix, ObservableFunction};

/// Seed used when `--seed` is not given.
const DEFAULT_SEED: u64 = 2024;
const THREADS_ENV: &str = "MARKOV_GAP_THREADS";

#[derive(Parser)]
#[command(name = "markov-gap", version, about = "Spectral gaps and concentration bounds for continuous-time Markov chains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the L²(π) spectral gap of a finite chain.
    Gap(GapArgs),
    /// Compare the tail bound with Monte Carlo estimates over a grid of ε.
    Verify(VerifyArgs),
    /// Gaps of collapsed truncations for increasing sizes.
    Sweep(SweepArgs),
    /// First-order check of (1 - λ(P^δ)) / δ against λ(Q).
    Skeleton(SkeletonArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Example {
    ThreeState,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum Solver {
    Auto,
    Dense,
    Lanczos,
}

impl From<Solver> for SolverChoice {
    fn from(s: Solver) -> Self {
        match s {
            Solver::Auto => SolverChoice::Auto,
            Solver::Dense => SolverChoice::Dense,
            Solver::Lanczos => SolverChoice::Lanczos,
        }
    }
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct ModelArgs {
    /// Built-in example chain.
    #[arg(long, value_enum)]
    example: Option<Example>,
    /// Constant-rate birth-death chain: death rate ALPHA, birth rate BETA,
    /// states 0..=N.
    #[arg(long, num_args = 2..=3, value_names = ["ALPHA", "BETA", "N"])]
    bd: Option<Vec<f64>>,
    /// JSON model file.
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Args)]
struct OutputArgs {
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Write the report here instead of standard output.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Also write `x,y` columns for plotting.
    #[arg(long, value_name = "PATH")]
    emit_plotdata: Option<PathBuf>,
}

#[derive(Args)]
struct GapArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, value_enum, default_value = "auto")]
    solver: Solver,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// JSON function file; defaults to the indicator of state 2 for the
    /// three-state example.
    #[arg(long)]
    function: Option<PathBuf>,
    #[arg(long, default_value_t = 20.0)]
    t: f64,
    #[arg(long, value_delimiter = ',', default_values_t = [0.05, 0.1, 0.15, 0.2])]
    eps: Vec<f64>,
    #[arg(long, default_value_t = 20_000)]
    reps: u64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Increasing truncation sizes.
    #[arg(long, value_delimiter = ',', required = true)]
    sizes: Vec<usize>,
    /// Fill the `seconds` column (makes the output run-dependent).
    #[arg(long)]
    timings: bool,
    /// Record that the countable chain and its symmetrization are regular.
    #[arg(long)]
    assert_regular: bool,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args)]
struct SkeletonArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Strictly decreasing skeleton steps.
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.05, 0.01])]
    deltas: Vec<f64>,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Debug)]
enum CliError {
    Core(Error),
    Output { path: PathBuf, source: io::Error },
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(Error::InvalidInput(_) | Error::NotAdmissible(_)) => 2,
            CliError::Core(Error::NumericalFailure { .. } | Error::ExplosionGuard { .. }) => 3,
            CliError::Output { .. } => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Output { path, source } => write!(f, "cannot write {}: {source}", path.display()),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn invalid<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Core(Error::InvalidInput(msg.into())))
}

enum Model {
    Example(GeneratorMatrix),
    BirthDeath { alpha: f64, beta: f64, n: Option<usize> },
    File(GeneratorMatrix),
}

impl ModelArgs {
    fn resolve(&self) -> CliResult<Model> {
        if self.example.is_some() {
            return Ok(Model::Example(three_state_example()));
        }
        if let Some(bd) = &self.bd {
            let n = match bd.get(2) {
                None => None,
                Some(&x) if x >= 1.0 && x.fract() == 0.0 && x < 1e9 => Some(x as usize),
                Some(x) => return invalid(format!("birth-death size N must be a positive integer, got {x}")),
            };
            return Ok(Model::BirthDeath { alpha: bd[0], beta: bd[1], n });
        }
        let path = self.model.as_ref().expect("clap enforces one model source");
        Ok(Model::File(load_model(path)?))
    }
}

impl Model {
    fn finite(self) -> CliResult<GeneratorMatrix> {
        match self {
            Model::Example(q) | Model::File(q) => Ok(q),
            Model::BirthDeath { alpha, beta, n: Some(n) } => Ok(constant_birth_death(alpha, beta, n)?),
            Model::BirthDeath { n: None, .. } => invalid("this command needs a finite chain: pass --bd ALPHA BETA N"),
        }
    }
}

fn emit(out: &OutputArgs, text: &str) -> CliResult<()> {
    match &out.output {
        Some(path) => write_file(path, text),
        None => {
            let mut stdout = io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|source| CliError::Output { path: PathBuf::from("<stdout>"), source })
        }
    }
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|source| CliError::Output { path: path.to_path_buf(), source })
}

fn plotdata(out: &OutputArgs, points: impl IntoIterator<Item = (f64, f64)>) -> CliResult<()> {
    let Some(path) = &out.emit_plotdata else {
        return Ok(());
    };
    let mut text = String::from("x,y\n");
    for (x, y) in points {
        text.push_str(&format!("{x},{y}\n"));
    }
    write_file(path, &text)
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

#[derive(Serialize)]
struct GapOutput<'a> {
    n: usize,
    #[serde(flatten)]
    report: &'a SpectralReport,
    stationary_residual: f64,
    reversible: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    closed_form: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    hardy_lower_bound: Option<f64>,
}

fn cmd_gap(args: &GapArgs) -> CliResult<ExitCode> {
    let model = args.model.resolve()?;
    let (closed_form, hardy) = match model {
        Model::BirthDeath { alpha, beta, n: Some(n) } => {
            let lb = bd_lower_bound(&vec![alpha; n], &vec![beta; n])?;
            (Some(bd_closed_form_gap(alpha, beta, ChainLength::Finite(n))?), Some(lb.lower_bound))
        }
        _ => (None, None),
    };
    let q = model.finite()?;
    let pi = stationary_distribution(&q)?;
    let report = spectral_gap(&q, &pi, args.solver.into())?;
    let text = match args.out.format.unwrap_or(Format::Json) {
        Format::Json => to_json(&GapOutput {
            n: q.n(),
            report: &report,
            stationary_residual: pi.residual(&q),
            reversible: is_reversible(&q, &pi),
            closed_form,
            hardy_lower_bound: hardy,
        }),
        Format::Csv => format!(
            "n,gap,method,residual\n{},{},{},{:e}\n",
            q.n(),
            report.gap,
            serde_json::to_value(report.method).expect("method serializes").as_str().unwrap_or_default(),
            report.residual
        ),
    };
    emit(&args.out, &text)?;
    let f = report.gap_function(&pi).unwrap_or_default();
    plotdata(&args.out, f.into_iter().enumerate().map(|(i, y)| (i as f64, y)))?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(args: &VerifyArgs) -> CliResult<ExitCode> {
    let model = args.model.resolve()?;
    let is_example = matches!(model, Model::Example(_));
    let q = model.finite()?;
    let g = match (&args.function, is_example) {
        (Some(path), _) => load_function(path)?,
        (None, true) => ObservableFunction::indicator(3, 2)?,
        (None, false) => return invalid("--function is required for this model"),
    };
    let report = verify(&q, &g, args.t, &args.eps, args.reps, args.seed)?;
    let text = match args.out.format.unwrap_or(Format::Csv) {
        Format::Json => to_json(&report),
        Format::Csv => report.to_csv(),
    };
    emit(&args.out, &text)?;
    plotdata(&args.out, report.rows.iter().map(|r| (r.eps, r.p_hat)))?;
    for row in report.rows.iter().filter(|r| r.uninformative) {
        eprintln!("warning: eps={} is statistically uninformative (ci_upper={})", row.eps, row.ci_upper);
    }
    Ok(if report.all_pass() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn cmd_sweep(args: &SweepArgs) -> CliResult<ExitCode> {
    let sweep = match args.model.resolve()? {
        Model::BirthDeath { alpha, beta, n: None } => {
            gap_convergence_sweep(&GeometricBirthDeath::new(alpha, beta)?, &args.sizes)?
        }
        model => {
            let q = model.finite()?;
            let pi = stationary_distribution(&q)?;
            gap_convergence_sweep(&FiniteChain::new(q, pi)?, &args.sizes)?
        }
    };
    let sweep = if args.assert_regular { sweep.assert_regular() } else { sweep };
    let text = match args.out.format.unwrap_or(Format::Csv) {
        Format::Json => {
            let mut sweep = sweep.clone();
            if !args.timings {
                sweep.entries.iter_mut().for_each(|e| e.seconds = 0.0);
            }
            to_json(&sweep)
        }
        Format::Csv => sweep.to_csv_with(args.timings),
    };
    emit(&args.out, &text)?;
    plotdata(&args.out, sweep.entries.iter().map(|e| (e.size as f64, e.gap)))?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_skeleton(args: &SkeletonArgs) -> CliResult<ExitCode> {
    let q = args.model.resolve()?.finite()?;
    let pi = stationary_distribution(&q)?;
    let table = skeleton_gap_check(&q, &pi, &args.deltas)?;
    let text = match args.out.format.unwrap_or(Format::Csv) {
        Format::Json => to_json(&table),
        Format::Csv => table.to_csv(),
    };
    emit(&args.out, &text)?;
    plotdata(&args.out, table.rows.iter().map(|r| (r.delta, r.ratio)))?;
    Ok(ExitCode::SUCCESS)
}

fn configure_threads() -> CliResult<()> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = match value.trim().parse() {
        Ok(n) if n >= 1 => n,
        _ => return invalid(format!("{THREADS_ENV} must be a positive integer, got {value:?}")),
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .or_else(|e| invalid(format!("cannot configure thread pool: {e}")))
}

fn run(cli: &Cli) -> CliResult<ExitCode> {
    configure_threads()?;
    match &cli.command {
        Command::Gap(args) => cmd_gap(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Skeleton(args) => cmd_skeleton(args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
