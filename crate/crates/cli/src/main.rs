//! `polyexp`: command-line front-end for polynomial-exponential decomposition.
//!
//! Every command reads one input file, validates it completely, computes, and
//! only then writes its result to `--out` (atomically) or stdout. Exit codes:
//! 0 success, 1 usage/parse/io error, 2 insufficient moments, 3 numerical
//! failure.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use polyexp::applications::{
    decompose_from_grid, prony_univariate_with, sparse_interpolate, spikes_from_fourier, GridSpec,
    DEFAULT_CIRCLE_TOL,
};
use polyexp::decompose::{decompose, DecomposeConfig};
use polyexp::hankel::graded_hankel;
use polyexp::io::{self, ValueTable};
use polyexp::numlin::{rank_of_values, svd_values};
use polyexp::polexp::synth_moments_to_degree;
use polyexp::{Error, MomentSequence, OrderKind};

#[derive(Parser, Debug)]
#[command(name = "polyexp", version, about = "Polynomial-exponential decomposition of moment sequences")]
struct Cli {
    /// Relative pivot threshold of the basis construction.
    #[arg(long, global = true, value_parser = positive)]
    tol_pivot: Option<f64>,
    /// Relative singular-value cutoff for numerical ranks.
    #[arg(long, global = true, value_parser = positive)]
    tol_rank: Option<f64>,
    /// Relative radius for clustering eigenvalues.
    #[arg(long, global = true, value_parser = positive)]
    tol_cluster: Option<f64>,
    /// Distance below which recovered frequencies are merged.
    #[arg(long, global = true, value_parser = positive)]
    tol_merge: Option<f64>,
    /// Seed for the separating-form search.
    #[arg(long, global = true, env = "POLYEXP_SEED", default_value_t = 0)]
    seed: u64,
    /// Monomial order used to scan candidate monomials.
    #[arg(long, global = true, value_enum, default_value_t = Order::Grlex)]
    order: Order,
    /// Degree bound; its meaning depends on the command.
    #[arg(long, global = true)]
    degree: Option<u32>,
    /// Interpolation bases, one per variable.
    #[arg(long, global = true, value_delimiter = ',', allow_negative_numbers = true)]
    lambda: Option<Vec<f64>>,
    /// Periods (or grid steps), one per variable.
    #[arg(long, global = true, value_delimiter = ',', value_parser = positive)]
    period: Option<Vec<f64>>,
    /// Encoding of value tables read or written.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Write the result here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Moments of a model on every index of degree ≤ --degree.
    Synth { model: PathBuf },
    /// Full decomposition report of a moment sequence.
    Decompose { moments: PathBuf },
    /// Singular values and numerical rank of the moment matrix on monomials of
    /// degree ≤ --degree.
    Rank { moments: PathBuf },
    /// Sparse polynomial / polylog interpolation from values at λ^γ.
    Interpolate { values: PathBuf },
    /// Univariate Prony: `r` exponential terms from equispaced samples.
    Prony1d {
        samples: PathBuf,
        /// Number of terms.
        #[arg(short = 'r', long = "terms")]
        terms: usize,
    },
    /// Dirac spikes (and derivatives) from Fourier coefficients.
    FourierSpikes { coeffs: PathBuf },
    /// Exponential-polynomial reconstruction from samples on the grid γ/T.
    Grid { values: PathBuf },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Order {
    Grlex,
    Grevlex,
    Lex,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

fn positive(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(format!("{s} is not a positive number"))
    }
}

/// Failure of a command, tagged with its exit code.
enum Failure {
    Usage(String),
    Core(Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Core(e) if e.is_input_error() => 1,
            Failure::Core(e) if e.is_insufficient_data() => 2,
            Failure::Core(_) => 3,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) => f.write_str(m),
            Failure::Core(e) => write!(f, "{e}"),
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))
}

fn read_table(path: &Path, format: Format) -> Result<ValueTable, Failure> {
    let text = read(path)?;
    Ok(match format {
        Format::Json => io::values_from_json(&text)?,
        Format::Csv => io::values_from_csv(&text)?,
    })
}

fn read_moments(path: &Path, format: Format) -> Result<MomentSequence, Failure> {
    match format {
        Format::Json => Ok(io::moments_from_json(&read(path)?)?),
        Format::Csv => Ok(read_table(path, format)?.values),
    }
}

fn config(cli: &Cli) -> DecomposeConfig {
    let mut cfg = DecomposeConfig {
        seed: cli.seed,
        order: match cli.order {
            Order::Grlex => OrderKind::GradedLex,
            Order::Grevlex => OrderKind::GradedRevLex,
            Order::Lex => OrderKind::Lex,
        },
        ..DecomposeConfig::default()
    };
    if let Some(t) = cli.tol_pivot {
        cfg.pivot_tol = t;
    }
    if let Some(t) = cli.tol_rank {
        cfg.rank_tol = t;
    }
    if let Some(t) = cli.tol_cluster {
        cfg.cluster_tol = t;
    }
    if let Some(t) = cli.tol_merge {
        cfg.merge_tol = t;
    }
    cfg
}

fn require_degree(cli: &Cli, command: &str) -> Result<u32, Failure> {
    cli.degree
        .ok_or_else(|| Failure::Usage(format!("{command} requires --degree")))
}

fn truncate(sigma: MomentSequence, degree: Option<u32>) -> Result<MomentSequence, Failure> {
    match degree {
        Some(d) => Ok(sigma.restrict(|a| a.degree() <= d)?),
        None => Ok(sigma),
    }
}

/// The first `n` primes, the default interpolation bases.
fn primes(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    let mut k = 2u64;
    while out.len() < n {
        if (2..k).take_while(|d| d * d <= k).all(|d| !k.is_multiple_of(d)) {
            out.push(k as f64);
        }
        k += 1;
    }
    out
}

/// Per-variable parameters: the flag wins over the file, then the default.
fn per_variable(
    name: &str,
    flag: &Option<Vec<f64>>,
    from_file: &Option<Vec<f64>>,
    nvars: usize,
    default: impl FnOnce() -> Vec<f64>,
) -> Result<Vec<f64>, Failure> {
    let v = flag.clone().or_else(|| from_file.clone()).unwrap_or_else(default);
    if v.len() != nvars {
        return Err(Failure::Usage(format!(
            "--{name} has {} entries but the input has {nvars} variables",
            v.len()
        )));
    }
    Ok(v)
}

fn rank_table(cli: &Cli, sigma: &MomentSequence) -> Result<String, Failure> {
    let degree = require_degree(cli, "rank")?;
    let h = graded_hankel(sigma, degree)?;
    let values = svd_values(&h)?;
    let tol = cli.tol_rank.unwrap_or(polyexp::hankel::DEFAULT_RANK_TOL);
    let rank = rank_of_values(&values, tol);
    let mut out = String::new();
    let _ = writeln!(out, "index\tsingular_value");
    for (i, s) in values.iter().enumerate() {
        let _ = writeln!(out, "{}\t{s:.6e}", i + 1);
    }
    let _ = writeln!(out, "rank\t{rank}");
    Ok(out)
}

fn run(cli: &Cli) -> Result<String, Failure> {
    let cfg = config(cli);
    match &cli.command {
        Command::Synth { model } => {
            let degree = require_degree(cli, "synth")?;
            let model = io::model_from_json(&read(model)?)?;
            let sigma = synth_moments_to_degree(&model, degree);
            Ok(match cli.format {
                Format::Json => io::moments_to_json(&sigma)?,
                Format::Csv => io::values_to_csv(&sigma)?,
            })
        }
        Command::Decompose { moments } => {
            let sigma = truncate(read_moments(moments, cli.format)?, cli.degree)?;
            Ok(io::report_to_json(&decompose(&sigma, &cfg)?)?)
        }
        Command::Rank { moments } => rank_table(cli, &read_moments(moments, cli.format)?),
        Command::Interpolate { values } => {
            let table = read_table(values, cli.format)?;
            let n = table.values.nvars();
            let lambda = per_variable("lambda", &cli.lambda, &table.lambda, n, || primes(n))?;
            let lambda: Vec<Complex64> = lambda.iter().map(|&l| Complex64::new(l, 0.0)).collect();
            let model = sparse_interpolate(&table.values, &lambda, cli.degree, &cfg)?;
            Ok(io::polylog_to_json(&model, &lambda)?)
        }
        Command::Prony1d { samples, terms } => {
            let table = read_table(samples, cli.format)?;
            if table.values.nvars() != 1 {
                return Err(Error::DimensionMismatch {
                    expected: 1,
                    found: table.values.nvars(),
                }
                .into());
            }
            let h: Vec<Complex64> = table.values.iter().map(|(_, v)| *v).collect();
            let model = prony_univariate_with(&h, *terms, cfg.rank_tol)?;
            Ok(io::model_to_json(&model)?)
        }
        Command::FourierSpikes { coeffs } => {
            let table = read_table(coeffs, cli.format)?;
            let n = table.values.nvars();
            let periods = per_variable("period", &cli.period, &table.period, n, || vec![1.0; n])?;
            let sigma = truncate(table.values, cli.degree)?;
            let spikes = spikes_from_fourier(&sigma, &periods, DEFAULT_CIRCLE_TOL, &cfg)?;
            Ok(io::spikes_to_json(&spikes, &periods)?)
        }
        Command::Grid { values } => {
            let table = read_table(values, cli.format)?;
            let n = table.values.nvars();
            let steps = per_variable("period", &cli.period, &table.period, n, || vec![1.0; n])?;
            let degree = cli.degree.unwrap_or_else(|| table.values.max_degree());
            let grid = GridSpec::new(steps.clone(), degree)?;
            let result = decompose_from_grid(&table.values, &grid, &cfg)?;
            Ok(io::grid_to_json(&result, &steps)?)
        }
    }
}

/// Writes `text` to `path` through a temporary file in the same directory,
/// so readers never observe a partial file.
fn write_atomic(path: &Path, text: &str) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(text.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let text = match run(&cli) {
        Ok(text) => text,
        Err(f) => {
            eprintln!("polyexp: {f}");
            return ExitCode::from(f.code());
        }
    };
    let written = match &cli.out {
        Some(path) => write_atomic(path, &text),
        None => std::io::stdout().lock().write_all(text.as_bytes()),
    };
    match written {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("polyexp: cannot write output: {e}");
            ExitCode::from(1)
        }
    }
}
