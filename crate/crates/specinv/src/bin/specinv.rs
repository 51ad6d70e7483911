//! Thin batch CLI over the library: parse flags and/or a JSON config, hand
//! the validated configuration to the run driver, map errors onto exit
//! codes (0 ok, 2 verification failure, 3 solver failure, 4 config error).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use specinv::config::{parse_config, ArgsOverlay, Command};
use specinv::driver;
use specinv::potential::PotentialDescriptor;

#[derive(Parser)]
#[command(
    name = "specinv",
    version,
    about = "Closest-potential reconstruction for Schrödinger operators"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Principal eigenpair of -Δ + q0
    Eig(CommonArgs),
    /// Positive solution of the logistic forward problem
    Forward(CommonArgs),
    /// Reconstruct the Lp-closest potential with the prescribed eigenvalue
    Inverse(CommonArgs),
    /// Constrained-optimizer cross-validation of the reconstruction
    Crosscheck(CommonArgs),
    /// Stability of the reconstruction under base-potential perturbations
    #[command(name = "sweep-q0")]
    SweepQ0(CommonArgs),
    /// Reconstruction along a λ schedule decreasing to λ1(q0)
    #[command(name = "sweep-lambda")]
    SweepLambda(CommonArgs),
    /// Grid-convergence study on nested grids
    Converge(CommonArgs),
    /// Exploratory coupled solve targeting several eigenvalues
    Multi(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// JSON config file (strict: unknown keys are rejected)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (relative paths resolve under $SPECINV_OUT_ROOT)
    #[arg(long)]
    out: Option<PathBuf>,
    /// RNG seed (required for stochastic constructions)
    #[arg(long)]
    seed: Option<u64>,
    /// Override the main residual tolerances
    #[arg(long)]
    tol: Option<f64>,
    /// Override the main iteration cap of the dispatched solver
    #[arg(long)]
    maxit: Option<usize>,
    /// Grid dimension (1 or 2)
    #[arg(long)]
    dim: Option<usize>,
    /// Interior nodes per axis, e.g. 511 or 63,63
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    /// Per-axis extents, e.g. "0:1" or "0:1,0:2"
    #[arg(long)]
    extents: Option<String>,
    /// Base potential descriptor, e.g. constant:0 or gaussian_well:depth=25,width=0.1
    #[arg(long)]
    q0: Option<String>,
    /// Target principal eigenvalue
    #[arg(long)]
    lambda: Option<f64>,
    /// Norm exponent p >= 2
    #[arg(long)]
    p: Option<f64>,
    /// Direct nonlinearity exponent for `forward` (2 < gamma <= 4)
    #[arg(long)]
    gamma: Option<f64>,
    /// Perturbation direction descriptor (sweep-q0)
    #[arg(long)]
    direction: Option<String>,
    /// Delta schedule (sweep-q0), e.g. 1e-1,1e-2,1e-3,1e-4
    #[arg(long, value_delimiter = ',')]
    deltas: Option<Vec<f64>>,
    /// Absolute λ schedule (sweep-lambda), strictly decreasing
    #[arg(long, value_delimiter = ',')]
    lambdas: Option<Vec<f64>>,
    /// Gap schedule above λ1(q0) (sweep-lambda), strictly decreasing
    #[arg(long, value_delimiter = ',')]
    gaps: Option<Vec<f64>>,
    /// Nested grid sizes (converge), e.g. 127,255,511
    #[arg(long, value_delimiter = ',')]
    grids: Option<Vec<usize>>,
    /// Eigenvalue targets (multi), strictly increasing
    #[arg(long, value_delimiter = ',')]
    targets: Option<Vec<f64>>,
    /// Exponent convention for multi: matched | literal
    #[arg(long)]
    exponent_mode: Option<String>,
    /// Number of seeded optimizer starts (crosscheck)
    #[arg(long)]
    starts: Option<usize>,
}

fn parse_extents(s: &str) -> Result<Vec<(f64, f64)>, String> {
    s.split(',')
        .map(|part| {
            let (a, b) = part
                .split_once(':')
                .ok_or_else(|| format!("extent {part:?} is not of the form a:b"))?;
            Ok((
                a.parse::<f64>().map_err(|e| e.to_string())?,
                b.parse::<f64>().map_err(|e| e.to_string())?,
            ))
        })
        .collect()
}

fn overlay_from(args: &CommonArgs) -> Result<ArgsOverlay, String> {
    let mut o = ArgsOverlay::default();
    o.dim = args.dim;
    o.n = args.n.clone();
    if let Some(s) = &args.extents {
        o.extents = Some(parse_extents(s)?);
    }
    if let Some(s) = &args.q0 {
        o.q0 = Some(s.parse::<PotentialDescriptor>().map_err(|e| e.to_string())?);
    }
    if let Some(s) = &args.direction {
        o.direction = Some(s.parse::<PotentialDescriptor>().map_err(|e| e.to_string())?);
    }
    o.lambda = args.lambda;
    o.lambda_schedule = args.lambdas.clone();
    o.gap_schedule = args.gaps.clone();
    o.p = args.p;
    o.gamma = args.gamma;
    o.deltas = args.deltas.clone();
    o.grids = args.grids.clone();
    o.targets = args.targets.clone();
    o.exponent_mode = args.exponent_mode.clone();
    o.starts = args.starts;
    o.seed = args.seed;
    o.tol = args.tol;
    o.maxit = args.maxit;
    o.output_dir = args.out.clone();
    Ok(o)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match &cli.command {
        Cmd::Eig(a) => (Command::Eig, a),
        Cmd::Forward(a) => (Command::Forward, a),
        Cmd::Inverse(a) => (Command::Inverse, a),
        Cmd::Crosscheck(a) => (Command::Crosscheck, a),
        Cmd::SweepQ0(a) => (Command::SweepQ0, a),
        Cmd::SweepLambda(a) => (Command::SweepLambda, a),
        Cmd::Converge(a) => (Command::Converge, a),
        Cmd::Multi(a) => (Command::Multi, a),
    };
    let overlay = match overlay_from(args) {
        Ok(o) => o,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(4);
        }
    };
    let config = match parse_config(command, args.config.as_deref(), &overlay) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(4);
        }
    };
    match driver::run(&config) {
        Ok(artifacts) => {
            println!(
                "{}: artifacts in {} (exit {})",
                command.name(),
                artifacts.outdir.display(),
                artifacts.exit_code
            );
            ExitCode::from(artifacts.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
