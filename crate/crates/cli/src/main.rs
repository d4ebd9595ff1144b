//! `drustat`: estimation on user data, Monte Carlo replication, lower-bound
//! verification and partially linear logistic fits.
//!
//! Exit codes: 0 on success, 2 for input or validation errors, 3 for
//! computation errors.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use drustat::crossfit::crossfit_nuisances;
use drustat::folds::make_folds;
use drustat::io::{parse_dataset_csv, parse_plm_csv};
use drustat::lowerbounds::{build_pair, make_bump_basis, verify_pair, BaseNuisances, Variant, DEFAULT_RESOLUTION};
use drustat::plm::{fit_plm_nuisances, solve_theta, PlmData, PlmOptions, PlmReport};
use drustat::simulation::{run_monte_carlo, write_coverage_csv, write_errors_csv, SimMethod, SimulationConfig};
use drustat::{estimate, Bandwidth, Bounds, Error, ErrorClass, EstimateOptions, EstimateReport, KernelFamily, Method};

#[derive(Parser, Debug)]
#[command(name = "drustat", version, about = "Doubly robust estimation with U-statistic bias corrections")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "DRUSTAT_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate the treated counterfactual mean from a CSV file.
    Estimate(EstimateArgs),
    /// Run the Monte Carlo coverage study.
    Simulate(SimulateArgs),
    /// Verify a lower-bound construction pair by quadrature.
    Lowerbound(LowerboundArgs),
    /// Fit theta in the partially linear logistic model.
    Plm(PlmArgs),
}

#[derive(Args, Debug)]
struct EstimateArgs {
    /// Input CSV with columns y, a, x1..xd and optionally omega_hat (or pi_hat) and mu_hat.
    input: PathBuf,
    #[arg(long, default_value = "main")]
    method: Method,
    /// Bandwidth: a positive number, `cv` or `rate`.
    #[arg(long = "h", default_value = "cv")]
    h: String,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Cross-fitting folds when nuisance columns are absent.
    #[arg(long, default_value_t = 2)]
    folds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "box")]
    kernel: KernelFamily,
    #[arg(long, default_value_t = Bounds::default().omega_max)]
    omega_max: f64,
    /// Output JSON path (stdout if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Sample sizes, comma separated.
    #[arg(long = "n", value_delimiter = ',', default_values_t = vec![500usize, 1000, 1500, 2000])]
    n: Vec<usize>,
    #[arg(long, default_value_t = 500)]
    reps: usize,
    #[arg(long = "r-pi", default_value_t = 0.3)]
    r_pi: f64,
    #[arg(long = "r-mu", default_value_t = 0.3)]
    r_mu: f64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Methods, comma separated (aipw, omega, mu, main, oracle).
    #[arg(long = "method", value_delimiter = ',', default_values_t = SimMethod::DEFAULT.to_vec())]
    methods: Vec<SimMethod>,
    /// Bandwidth: a positive number, `cv` or `rate`.
    #[arg(long = "h", default_value = "cv")]
    h: String,
    /// Output directory for errors.csv and coverage.csv.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct LowerboundArgs {
    #[arg(long, default_value = "pure")]
    variant: Variant,
    #[arg(long)]
    eps: f64,
    #[arg(long)]
    delta: f64,
    /// Number of bumps.
    #[arg(long, default_value_t = 2)]
    k: usize,
    /// Covariate dimension.
    #[arg(long, default_value_t = 1)]
    dim: usize,
    /// Sign vector as comma separated +1/-1 (all +1 if omitted).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    lambda: Option<Vec<f64>>,
    #[arg(long, default_value_t = DEFAULT_RESOLUTION)]
    resolution: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PlmArgs {
    /// Input CSV with columns y, a, x1..xd and optionally v_hat and m_hat.
    input: PathBuf,
    /// Bandwidth: a positive number or `cv`.
    #[arg(long = "h", default_value = "cv")]
    h: String,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 2)]
    folds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "box")]
    kernel: KernelFamily,
    /// Lower end of a fixed root bracket (requires --hi).
    #[arg(long, requires = "hi", allow_hyphen_values = true)]
    lo: Option<f64>,
    #[arg(long, requires = "lo", allow_hyphen_values = true)]
    hi: Option<f64>,
    /// Drop the kernel correction.
    #[arg(long)]
    uncorrected: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
enum Failure {
    #[error("{code}: {0}", code = .0.code())]
    Core(#[from] Error),
    #[error("IO_ERROR: {0}")]
    Io(String),
    /// A computation that ran but produced no usable result.
    #[error("{0}")]
    Failed(String),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Core(e) if e.class() == ErrorClass::Computation => 3,
            Failure::Failed(_) => 3,
            _ => 2,
        }
    }
}

type CmdResult = std::result::Result<(), Failure>;

fn read_input(path: &Path) -> std::result::Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> CmdResult {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::Io(e.to_string()))?;
    text.push('\n');
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Failure::Io(format!("{}: {e}", path.display()))),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Failure::Io(e.to_string())),
    }
}

fn parse_bandwidth(h: &str) -> std::result::Result<Bandwidth, Failure> {
    match h {
        "cv" => Ok(Bandwidth::Cv),
        "rate" => Ok(Bandwidth::Rate),
        other => match other.parse::<f64>() {
            Ok(v) if v.is_finite() && v > 0.0 => Ok(Bandwidth::Fixed(v)),
            Ok(v) => Err(Error::InvalidBandwidth(v).into()),
            Err(_) => Err(Error::InvalidArgument(format!("--h must be a positive number, `cv` or `rate`, got `{other}`")).into()),
        },
    }
}

#[derive(Serialize)]
struct EstimateOutput {
    #[serde(flatten)]
    report: EstimateReport,
    nuisance_source: &'static str,
    /// Propensities clamped during cross-fitting.
    crossfit_clamp_count: Option<usize>,
}

fn cmd_estimate(args: EstimateArgs) -> CmdResult {
    let bounds = Bounds {
        omega_max: args.omega_max,
        ..Bounds::default()
    };
    let input = parse_dataset_csv(&read_input(&args.input)?)?.into_dataset(&bounds)?;
    let data = input.dataset;
    let (nuis, source, clamps) = match input.nuisance {
        Some(n) => (n, "supplied", None),
        None => {
            let folds = make_folds(data.len(), args.folds, args.seed)?;
            let fit = crossfit_nuisances(&data, &folds, &bounds)?;
            (fit.nuisance, "crossfit", Some(fit.clamp_count))
        }
    };
    let options = EstimateOptions {
        bandwidth: parse_bandwidth(&args.h)?,
        alpha: args.alpha,
        kernel: args.kernel,
        bounds,
        ..EstimateOptions::default()
    };
    let report = estimate(args.method, &data, &nuis, &options)?;
    write_json(
        &EstimateOutput {
            report,
            nuisance_source: source,
            crossfit_clamp_count: clamps,
        },
        args.out.as_deref(),
    )
}

fn cmd_simulate(args: SimulateArgs) -> CmdResult {
    let config = SimulationConfig {
        n_values: args.n,
        reps: args.reps,
        r_pi: args.r_pi,
        r_mu: args.r_mu,
        alpha: args.alpha,
        seed: args.seed,
        methods: args.methods,
        bandwidth: parse_bandwidth(&args.h)?,
        ..SimulationConfig::default()
    };
    config.validate()?;
    let results = run_monte_carlo(&config)?;
    fs::create_dir_all(&args.out).map_err(|e| Failure::Io(format!("{}: {e}", args.out.display())))?;
    let create = |name: &str| {
        let path = args.out.join(name);
        fs::File::create(&path)
            .map(std::io::BufWriter::new)
            .map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
    };
    write_errors_csv(&results, create("errors.csv")?)?;
    write_coverage_csv(&results, create("coverage.csv")?)?;
    if let Some(cell) = results.summary.iter().find(|s| s.failures == config.reps) {
        return Err(Failure::Failed(format!(
            "every replicate failed for method {} at n = {}",
            cell.method, cell.n
        )));
    }
    Ok(())
}

fn cmd_lowerbound(args: LowerboundArgs) -> CmdResult {
    let basis = make_bump_basis(args.k, args.dim)?;
    let lambda = args.lambda.unwrap_or_else(|| vec![1.0; args.k]);
    let pair = build_pair(
        args.variant,
        args.eps,
        args.delta,
        &basis,
        lambda,
        BaseNuisances::default(),
        args.resolution,
    )?;
    let report = verify_pair(&pair, args.resolution);
    write_json(&report, args.out.as_deref())?;
    if report.all_pass {
        Ok(())
    } else {
        Err(Failure::Failed("verification checks failed".into()))
    }
}

#[derive(Serialize)]
struct PlmOutput {
    #[serde(flatten)]
    report: PlmReport,
    nuisance_source: &'static str,
}

fn cmd_plm(args: PlmArgs) -> CmdResult {
    let table = parse_plm_csv(&read_input(&args.input)?)?;
    let (data, source) = match table.to_plm_data()? {
        Some(d) => (d, "supplied"),
        None => {
            // Validate the raw columns before fitting anything.
            PlmData::new(table.y.clone(), table.a.clone(), vec![0.0; table.len()], vec![0.0; table.len()])?;
            let folds = make_folds(table.len(), args.folds, args.seed)?;
            let (v, m) = fit_plm_nuisances(&table.y, &table.a, &table.x_rows(), &folds)?;
            (PlmData::new(table.y, table.a, v, m)?, "crossfit")
        }
    };
    let h = match args.h.as_str() {
        "cv" => None,
        other => match other.parse::<f64>() {
            Ok(v) if v.is_finite() && v > 0.0 => Some(v),
            _ => return Err(Error::InvalidArgument(format!("--h must be a positive number or `cv`, got `{other}`")).into()),
        },
    };
    let options = PlmOptions {
        h,
        kernel: args.kernel,
        bracket: args.lo.zip(args.hi),
        alpha: args.alpha,
        uncorrected: args.uncorrected,
    };
    let report = solve_theta(&data, &options)?;
    write_json(
        &PlmOutput {
            report,
            nuisance_source: source,
        },
        args.out.as_deref(),
    )
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("IO_ERROR: cannot configure thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Estimate(a) => cmd_estimate(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Lowerbound(a) => cmd_lowerbound(a),
        Command::Plm(a) => cmd_plm(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{f}");
            ExitCode::from(f.exit_code())
        }
    }
}
