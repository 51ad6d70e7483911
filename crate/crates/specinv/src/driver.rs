//! Run driver: dispatches a validated [`RunConfig`] to the solvers and
//! writes the artifact directory (`manifest.json`, `summary.json`, field
//! CSVs, sweep tables, plot data).
//!
//! Exit-code convention: 0 success, 2 verification failure, 3 solver
//! failure, 4 configuration error. Runs are deterministic: identical
//! manifests reproduce every numeric output bit-identically, so the manifest
//! carries no timestamps.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{Command, RunConfig};
use crate::crosscheck;
use crate::error::Result;
use crate::experiments::{self, MultiEigProblem, SweepSpec};
use crate::inverse;
use crate::logistic::{self, LogisticProblem};
use crate::mesh::Field;
use crate::spectral::principal_eigenpair;

/// Environment variable that redirects relative output directories.
pub const OUT_ROOT_ENV: &str = "SPECINV_OUT_ROOT";

/// Where a run put its artifacts, and how the process should exit.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub outdir: PathBuf,
    pub exit_code: i32,
    pub summary_path: PathBuf,
}

/// Hex SHA-256 of the canonical (serialized) config.
pub fn config_hash(config: &RunConfig) -> Result<String> {
    let canonical = serde_json::to_string(config)?;
    let digest = Sha256::digest(canonical.as_bytes());
    let mut out = String::with_capacity(64);
    for b in digest {
        write!(out, "{b:02x}").expect("string write");
    }
    Ok(out)
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    config_hash: String,
    seed: u64,
    command: &'static str,
    config: &'a RunConfig,
}

fn resolve_outdir(config: &RunConfig) -> PathBuf {
    if config.output_dir.is_absolute() {
        return config.output_dir.clone();
    }
    match std::env::var_os(OUT_ROOT_ENV) {
        Some(root) => PathBuf::from(root).join(&config.output_dir),
        None => config.output_dir.clone(),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Provenance comment lines prepended to every CSV table.
fn provenance_header(config: &RunConfig, hash: &str) -> String {
    let grid = format!(
        "dim={} n={:?} extents={:?}",
        config.dim,
        config.n_per_axis(),
        config.extents_or_default()
    );
    format!(
        "# tool=specinv version={}\n# config_hash={} seed={}\n# grid: {}\n# tolerances: eig_tol={} residual_tol={}\n",
        env!("CARGO_PKG_VERSION"),
        hash,
        config.seed_value(),
        grid,
        config.tolerances.eig_tol,
        config.tolerances.residual_tol,
    )
}

fn write_table(path: &Path, header: &str, columns: &str, rows: &[Vec<f64>]) -> Result<()> {
    let mut out = String::from(header);
    out.push_str(columns);
    out.push('\n');
    for row in rows {
        let line = row
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(",");
        out.push_str(&line);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Execute the configured command, writing all artifacts into the output
/// directory. Configuration and solver failures come back as `Err`;
/// verification failures return normally with exit code 2.
pub fn run(config: &RunConfig) -> Result<RunArtifacts> {
    config.validate()?;
    let outdir = resolve_outdir(config);
    std::fs::create_dir_all(&outdir)?;
    let hash = config_hash(config)?;
    write_json(
        &outdir.join("manifest.json"),
        &Manifest {
            tool: "specinv",
            version: env!("CARGO_PKG_VERSION"),
            config_hash: hash.clone(),
            seed: config.seed_value(),
            command: config.command.name(),
            config,
        },
    )?;

    let grid = config.build_grid()?;
    let q0 = config.q0.sample(&grid, config.seed_value())?;
    let header = provenance_header(config, &hash);
    let summary_path = outdir.join("summary.json");

    let exit_code = match config.command {
        Command::Eig => run_eig(config, &q0, &outdir)?,
        Command::Forward => run_forward(config, q0, &outdir)?,
        Command::Inverse => run_inverse(config, &q0, &outdir)?,
        Command::Crosscheck => run_crosscheck(config, &q0, &outdir, &header)?,
        Command::SweepQ0 => run_sweep_q0(config, q0, &outdir, &header)?,
        Command::SweepLambda => run_sweep_lambda(config, &q0, &outdir, &header)?,
        Command::Converge => run_converge(config, &outdir, &header)?,
        Command::Multi => run_multi(config, q0, &outdir)?,
    };
    Ok(RunArtifacts {
        outdir,
        exit_code,
        summary_path,
    })
}

#[derive(Serialize)]
struct EigSummary {
    command: &'static str,
    lambda1: f64,
    residual: f64,
    iterations: usize,
    cg_total_iterations: usize,
}

fn run_eig(config: &RunConfig, q0: &Field, outdir: &Path) -> Result<i32> {
    let pair = principal_eigenpair(q0, &config.tolerances.eig_options())?;
    pair.phi1.write_csv(&outdir.join("phi1.csv"))?;
    write_json(
        &outdir.join("summary.json"),
        &EigSummary {
            command: "eig",
            lambda1: pair.lambda1,
            residual: pair.report.residual,
            iterations: pair.report.iterations,
            cg_total_iterations: pair.report.cg_total_iterations,
        },
    )?;
    Ok(0)
}

#[derive(Serialize)]
struct ForwardSummary {
    command: &'static str,
    lambda: f64,
    gamma: f64,
    p: f64,
    lambda1_q0: f64,
    residual_norm: f64,
    iterations: usize,
    max_u: f64,
    bracket_gap: Option<f64>,
}

fn run_forward(config: &RunConfig, q0: Field, outdir: &Path) -> Result<i32> {
    let lambda = config.lambda.expect("validated");
    let problem = match config.gamma {
        Some(g) => LogisticProblem::from_gamma(q0, lambda, g)?,
        None => LogisticProblem::from_p(q0, lambda, config.p_value())?,
    };
    let solution = logistic::solve(&problem, &config.tolerances.logistic_options())?;
    solution.u.write_csv(&outdir.join("u_hat.csv"))?;
    write_json(
        &outdir.join("summary.json"),
        &ForwardSummary {
            command: "forward",
            lambda,
            gamma: problem.gamma(),
            p: problem.p(),
            lambda1_q0: solution.lambda1_q0,
            residual_norm: solution.residual_norm,
            iterations: solution.newton_iterations,
            max_u: solution.max_u(),
            bracket_gap: solution.bracket_gap,
        },
    )?;
    Ok(0)
}

#[derive(Serialize)]
struct InverseSummary {
    command: &'static str,
    lambda_target: f64,
    lambda_achieved: f64,
    p: f64,
    gamma: f64,
    nu: f64,
    objective: f64,
    eigen_gap: f64,
    alignment: f64,
    degenerate: bool,
    verification_passed: bool,
    residual_norm: f64,
    newton_iterations: usize,
    bracket_gap: Option<f64>,
    lambda1_q0: f64,
}

fn run_inverse(config: &RunConfig, q0: &Field, outdir: &Path) -> Result<i32> {
    let lambda = config.lambda.expect("validated");
    let p = config.p_value();
    let r = inverse::solve_inverse(q0, lambda, p, &config.tolerances.inverse_options())?;
    r.q_hat.write_csv(&outdir.join("q_hat.csv"))?;
    r.u_hat.write_csv(&outdir.join("u_hat.csv"))?;
    write_json(
        &outdir.join("summary.json"),
        &InverseSummary {
            command: "inverse",
            lambda_target: lambda,
            lambda_achieved: r.verify.lambda_achieved,
            p,
            gamma: 2.0 * p / (p - 1.0),
            nu: r.nu,
            objective: r.objective,
            eigen_gap: r.verify.eigen_gap,
            alignment: r.verify.alignment,
            degenerate: r.degenerate,
            verification_passed: r.verify.passed,
            residual_norm: r.residual_norm,
            newton_iterations: r.newton_iterations,
            bracket_gap: r.bracket_gap,
            lambda1_q0: r.lambda1_q0,
        },
    )?;
    Ok(if r.verify.passed { 0 } else { 2 })
}

#[derive(Serialize)]
struct CrosscheckSummary {
    command: &'static str,
    lambda: f64,
    p: f64,
    starts: usize,
    objective_closed_form: f64,
    objective_per_start: Vec<f64>,
    distance_to_closed_form: Vec<f64>,
    constraint_violation: Vec<f64>,
    projected_gradient_norm: Vec<f64>,
    all_converged: bool,
    max_distance: f64,
    passed: bool,
}

fn run_crosscheck(config: &RunConfig, q0: &Field, outdir: &Path, header: &str) -> Result<i32> {
    let lambda = config.lambda.expect("validated");
    let p = config.p_value();
    let starts = config.starts.unwrap_or(5);
    let opts = config.tolerances.optimize_options();
    let reference = inverse::solve_inverse(q0, lambda, p, &config.tolerances.inverse_options())?;

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut objectives = Vec::new();
    let mut distances = Vec::new();
    let mut violations = Vec::new();
    let mut pgs = Vec::new();
    let mut all_converged = true;
    let grid = *q0.grid();
    for start_idx in 0..starts {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed_value().wrapping_add(start_idx as u64));
        let pert = Field::from_values(
            grid,
            (0..grid.node_count())
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect(),
        )?;
        let start = crosscheck::feasible_start(q0, lambda, &pert, &opts.eig)?;
        let result = crosscheck::augmented_lagrangian_minimize(q0, lambda, p, &start, &opts)?;
        for h in &result.history {
            rows.push(vec![
                start_idx as f64,
                h.iteration as f64,
                h.objective,
                h.constraint_violation,
                h.step_size,
                h.eig_iterations as f64,
            ]);
        }
        let dist = Field::lincomb(1.0, &result.q, -1.0, &reference.q_hat)?.lp_norm(p)?;
        objectives.push(result.objective);
        distances.push(dist);
        violations.push(result.constraint_violation);
        pgs.push(result.projected_gradient_norm);
        all_converged &= result.converged;
        result
            .q
            .write_csv(&outdir.join(format!("q_opt_start{start_idx}.csv")))?;
    }
    write_table(
        &outdir.join("history.csv"),
        header,
        "start,iteration,objective,constraint_violation,step_size,eig_iterations",
        &rows,
    )?;
    let max_distance = distances.iter().copied().fold(0.0, f64::max);
    let passed = all_converged && max_distance <= config.tolerances.crosscheck_distance_tol;
    write_json(
        &outdir.join("summary.json"),
        &CrosscheckSummary {
            command: "crosscheck",
            lambda,
            p,
            starts,
            objective_closed_form: reference.objective,
            objective_per_start: objectives,
            distance_to_closed_form: distances,
            constraint_violation: violations,
            projected_gradient_norm: pgs,
            all_converged,
            max_distance,
            passed,
        },
    )?;
    Ok(if passed { 0 } else { 2 })
}

#[derive(Serialize)]
struct SweepQ0Summary {
    command: &'static str,
    lambda: f64,
    p: f64,
    deltas: Vec<f64>,
    q_hat_distance: Vec<f64>,
    u_hat_distance: Vec<f64>,
    monotone: bool,
    contraction_ok: bool,
    passed: bool,
}

fn run_sweep_q0(config: &RunConfig, q0: Field, outdir: &Path, header: &str) -> Result<i32> {
    let grid = *q0.grid();
    let direction = config
        .direction
        .as_ref()
        .expect("validated")
        .sample(&grid, config.seed_value().wrapping_add(1))?;
    let spec = SweepSpec {
        q0,
        direction,
        deltas: config.deltas.clone().expect("validated"),
        lambda: config.lambda.expect("validated"),
        p: config.p_value(),
    };
    let report = experiments::stability_sweep_q0(&spec, &config.tolerances.inverse_options())?;
    let rows: Vec<Vec<f64>> = report
        .deltas
        .iter()
        .zip(report.q_hat_distance.iter().zip(&report.u_hat_distance))
        .map(|(&d, (&qd, &ud))| vec![d, qd, ud])
        .collect();
    write_table(
        &outdir.join("sweep.csv"),
        header,
        "delta,q_hat_distance_lp,u_hat_distance_h1",
        &rows,
    )?;
    // plot-ready stability curve (two columns)
    let curve: Vec<Vec<f64>> = report
        .deltas
        .iter()
        .zip(&report.q_hat_distance)
        .map(|(&d, &v)| vec![d, v])
        .collect();
    write_table(&outdir.join("stability.csv"), header, "delta,distance", &curve)?;
    write_json(
        &outdir.join("summary.json"),
        &SweepQ0Summary {
            command: "sweep-q0",
            lambda: spec.lambda,
            p: spec.p,
            deltas: report.deltas.clone(),
            q_hat_distance: report.q_hat_distance.clone(),
            u_hat_distance: report.u_hat_distance.clone(),
            monotone: report.monotone,
            contraction_ok: report.contraction_ok,
            passed: report.passed,
        },
    )?;
    Ok(if report.passed { 0 } else { 2 })
}

#[derive(Serialize)]
struct SweepLambdaSummary {
    command: &'static str,
    p: f64,
    lambda1_q0: f64,
    lambdas: Vec<f64>,
    gaps: Vec<f64>,
    q_hat_distance: Vec<f64>,
    u_hat_norm: Vec<f64>,
    strictly_decreasing: bool,
    final_small: bool,
    passed: bool,
}

fn run_sweep_lambda(config: &RunConfig, q0: &Field, outdir: &Path, header: &str) -> Result<i32> {
    let p = config.p_value();
    let opts = config.tolerances.inverse_options();
    let lambdas: Vec<f64> = match (&config.lambda_schedule, &config.gap_schedule) {
        (Some(s), None) => s.clone(),
        (None, Some(gaps)) => {
            let l1 = principal_eigenpair(q0, &config.tolerances.eig_options())?.lambda1;
            gaps.iter().map(|g| l1 + g).collect()
        }
        _ => unreachable!("validated"),
    };
    let report = experiments::stability_sweep_lambda(q0, &lambdas, p, &opts)?;
    let rows: Vec<Vec<f64>> = (0..report.lambdas.len())
        .map(|i| {
            vec![
                report.lambdas[i],
                report.gaps[i],
                report.q_hat_distance[i],
                report.u_hat_norm[i],
            ]
        })
        .collect();
    write_table(
        &outdir.join("sweep.csv"),
        header,
        "lambda,gap,q_hat_distance_lp,u_hat_norm_l2",
        &rows,
    )?;
    // bifurcation diagram: |u_hat| against lambda
    let curve: Vec<Vec<f64>> = report
        .lambdas
        .iter()
        .zip(&report.u_hat_norm)
        .map(|(&l, &u)| vec![l, u])
        .collect();
    write_table(
        &outdir.join("bifurcation.csv"),
        header,
        "lambda,u_hat_norm_l2",
        &curve,
    )?;
    write_json(
        &outdir.join("summary.json"),
        &SweepLambdaSummary {
            command: "sweep-lambda",
            p,
            lambda1_q0: report.lambda1_q0,
            lambdas: report.lambdas.clone(),
            gaps: report.gaps.clone(),
            q_hat_distance: report.q_hat_distance.clone(),
            u_hat_norm: report.u_hat_norm.clone(),
            strictly_decreasing: report.strictly_decreasing,
            final_small: report.final_small,
            passed: report.passed,
        },
    )?;
    Ok(if report.passed { 0 } else { 2 })
}

#[derive(Serialize)]
struct ConvergeSummary {
    command: &'static str,
    lambda: f64,
    p: f64,
    n_per_grid: Vec<usize>,
    lambda1: Vec<f64>,
    lambda1_diffs: Vec<f64>,
    u_hat_diffs: Vec<f64>,
    q_hat_diffs: Vec<f64>,
    order_lambda1: f64,
    order_u_hat: f64,
    order_q_hat: f64,
    passed: bool,
}

fn run_converge(config: &RunConfig, outdir: &Path, header: &str) -> Result<i32> {
    let lambda = config.lambda.expect("validated");
    let p = config.p_value();
    let report = experiments::convergence_study(
        &config.extents_or_default(),
        config.grids.as_ref().expect("validated"),
        &config.q0,
        config.seed_value(),
        lambda,
        p,
        &config.tolerances.inverse_options(),
    )?;
    let mut rows = Vec::new();
    for k in 0..report.n_per_grid.len() {
        let mut row = vec![report.n_per_grid[k] as f64, report.lambda1[k]];
        if k + 1 < report.n_per_grid.len() {
            row.push(report.lambda1_diffs[k]);
            row.push(report.u_hat_diffs[k]);
            row.push(report.q_hat_diffs[k]);
        } else {
            row.extend([f64::NAN; 3].iter().map(|_| 0.0));
        }
        rows.push(row);
    }
    write_table(
        &outdir.join("sweep.csv"),
        header,
        "n,lambda1,lambda1_diff,u_hat_diff,q_hat_diff",
        &rows,
    )?;
    write_json(
        &outdir.join("summary.json"),
        &ConvergeSummary {
            command: "converge",
            lambda,
            p,
            n_per_grid: report.n_per_grid.clone(),
            lambda1: report.lambda1.clone(),
            lambda1_diffs: report.lambda1_diffs.clone(),
            u_hat_diffs: report.u_hat_diffs.clone(),
            q_hat_diffs: report.q_hat_diffs.clone(),
            order_lambda1: report.order_lambda1,
            order_u_hat: report.order_u_hat,
            order_q_hat: report.order_q_hat,
            passed: report.passed,
        },
    )?;
    Ok(if report.passed { 0 } else { 2 })
}

fn run_multi(config: &RunConfig, q0: Field, outdir: &Path) -> Result<i32> {
    let prob = MultiEigProblem {
        q0,
        targets: config.targets.clone().expect("validated"),
        p: config.p_value(),
        exponent_mode: config.exponent_mode()?,
    };
    let report = experiments::multi_eigenvalue_solve(&prob, &config.tolerances.multi_options())?;
    for (i, u) in report.u.iter().enumerate() {
        u.write_csv(&outdir.join(format!("u{}.csv", i + 1)))?;
    }
    if let Some(q_hat) = &report.q_hat {
        q_hat.write_csv(&outdir.join("q_hat.csv"))?;
    }
    // findings report: no hard pass/fail for the coupled system
    write_json(&outdir.join("summary.json"), &report.findings)?;
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_hash_is_stable_and_sensitive() {
        let c = RunConfig::from_json_str(
            r#"{"command":"eig","dim":1,"n":63,"q0":"constant:0"}"#,
        )
        .unwrap();
        let h1 = config_hash(&c).unwrap();
        let h2 = config_hash(&c).unwrap();
        assert_eq!(h1, h2);
        let c2 = RunConfig::from_json_str(
            r#"{"command":"eig","dim":1,"n":65,"q0":"constant:0"}"#,
        )
        .unwrap();
        assert_ne!(h1, config_hash(&c2).unwrap());
    }
}
