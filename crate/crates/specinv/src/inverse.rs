//! Closest-potential reconstruction: given `q0` and a target principal
//! eigenvalue `λ > λ1(q0)`, the Lp-closest potential with
//! `λ1(q̂) = λ` is `q̂ = q0 + û^(2/(p-1))`, where `û` is the positive
//! solution of the logistic problem with `γ = 2p/(p-1)`. The normalized `û`
//! is then the principal eigenfunction of `q̂`, and the multiplier linking
//! the two is `ν = |û|_{L²}^(2/(p-1))`.
//!
//! Verification is always an independent eigensolve of the reconstructed
//! potential from the all-ones start — never a warm start from `û`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::logistic::{self, LogisticOptions, LogisticProblem};
use crate::mesh::Field;
use crate::spectral::principal_eigenpair;

/// Outcome of the spectral check on a reconstructed potential.
#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub lambda_target: f64,
    /// `λ1(q̂)` from the independent eigensolve.
    pub lambda_achieved: f64,
    /// `|λ1(q̂) - λ|`.
    pub eigen_gap: f64,
    /// `1 - |<phi1(q̂), û/|û|>|`.
    pub alignment: f64,
    pub tol_lambda: f64,
    pub tol_phi: f64,
    pub passed: bool,
}

/// Reconstructed potential with diagnostics.
#[derive(Debug, Clone)]
pub struct InverseResult {
    pub q_hat: Field,
    pub u_hat: Field,
    /// Multiplier `ν > 0` with `û = ν^((p-1)/2) phi1(q̂)`; zero only in the
    /// degenerate case.
    pub nu: f64,
    /// `Q(q̂) = |q0 - q̂|_{Lp}^p`.
    pub objective: f64,
    /// True when `λ = λ1(q0)`: the closest potential is `q0` itself and
    /// `û = 0`.
    pub degenerate: bool,
    pub verify: VerificationReport,
    /// Forward-solver statistics.
    pub residual_norm: f64,
    pub newton_iterations: usize,
    pub bracket_gap: Option<f64>,
    pub lambda1_q0: f64,
}

/// Options for the reconstruction pipeline.
#[derive(Debug, Clone, Copy)]
pub struct InverseOptions {
    pub logistic: LogisticOptions,
    /// Eigen-gap tolerance for `passed`; `None` uses
    /// `max(1e-8 |λ|, 10 (eig tol + logistic tol))`.
    pub tol_lambda: Option<f64>,
    /// Alignment tolerance for `passed`.
    pub tol_phi: f64,
}

impl Default for InverseOptions {
    fn default() -> Self {
        InverseOptions {
            logistic: LogisticOptions::default(),
            tol_lambda: None,
            tol_phi: 1e-8,
        }
    }
}

impl InverseOptions {
    fn lambda_tolerance(&self, lambda: f64) -> f64 {
        self.tol_lambda.unwrap_or_else(|| {
            (1e-8 * lambda.abs()).max(10.0 * (self.logistic.eig.tol + self.logistic.residual_tol))
        })
    }
}

/// Validate `p` against the admissible range for the grid dimension
/// (`[2, +inf)` in dimensions 1 and 2).
pub fn validate_p(p: f64, dim: usize) -> Result<()> {
    debug_assert!(dim == 1 || dim == 2);
    if !p.is_finite() || p < 2.0 {
        return Err(Error::Config(format!(
            "p = {p} is not admissible in dimension {dim}; the admissible range is [2, +inf)"
        )));
    }
    Ok(())
}

/// Recover the multiplier from the logistic solution:
/// `ν = |û|_{L²}^(2/(p-1))`.
pub fn nu_recovery(u_hat: &Field, p: f64) -> Result<f64> {
    let norm = u_hat.norm_l2();
    if norm == 0.0 {
        return Err(Error::ZeroField);
    }
    Ok(norm.powf(2.0 / (p - 1.0)))
}

/// `Q(q) = |q - q0|_{Lp}^p`.
pub fn objective_value(q0: &Field, q: &Field, p: f64) -> Result<f64> {
    let diff = Field::lincomb(1.0, q, -1.0, q0)?;
    Ok(diff.lp_norm(p)?.powf(p))
}

/// Independent spectral check of a reconstruction: eigensolve `q_hat` from
/// scratch and compare eigenvalue and eigenfunction against the target pair.
pub fn verify(
    q_hat: &Field,
    u_hat: &Field,
    lambda_target: f64,
    opts: &InverseOptions,
) -> Result<VerificationReport> {
    let pair = principal_eigenpair(q_hat, &opts.logistic.eig)?;
    let eigen_gap = (pair.lambda1 - lambda_target).abs();
    let u_norm = u_hat.norm_l2();
    let alignment = if u_norm == 0.0 {
        0.0
    } else {
        1.0 - (pair.phi1.inner_product(u_hat)? / u_norm).abs()
    };
    let tol_lambda = opts.lambda_tolerance(lambda_target);
    Ok(VerificationReport {
        lambda_target,
        lambda_achieved: pair.lambda1,
        eigen_gap,
        alignment,
        tol_lambda,
        tol_phi: opts.tol_phi,
        passed: eigen_gap <= tol_lambda && alignment <= opts.tol_phi,
    })
}

/// Full reconstruction pipeline: solve the logistic problem, set
/// `q̂ = q0 + û^(2/(p-1))`, recover `ν`, and verify. At `λ = λ1(q0)` the
/// degenerate answer `q̂ = q0`, `û = 0` is returned with the flag set;
/// `λ < λ1(q0)` is an error.
pub fn solve_inverse(
    q0: &Field,
    lambda: f64,
    p: f64,
    opts: &InverseOptions,
) -> Result<InverseResult> {
    validate_p(p, q0.grid().dim())?;
    let problem = LogisticProblem::from_p(q0.clone(), lambda, p)?;
    let exponent = 2.0 / (p - 1.0);
    match logistic::solve(&problem, &opts.logistic) {
        Ok(solution) => {
            let increment = solution.u.map(|v| v.powf(exponent))?;
            let q_hat = Field::lincomb(1.0, q0, 1.0, &increment)?;
            // strict monotone gap: u > 0 forces q_hat > q0 nodewise
            debug_assert!(q_hat
                .values()
                .iter()
                .zip(q0.values())
                .all(|(&a, &b)| a > b));
            let nu = nu_recovery(&solution.u, p)?;
            let objective = objective_value(q0, &q_hat, p)?;
            let verify = verify(&q_hat, &solution.u, lambda, opts)?;
            Ok(InverseResult {
                q_hat,
                u_hat: solution.u,
                nu,
                objective,
                degenerate: false,
                verify,
                residual_norm: solution.residual_norm,
                newton_iterations: solution.newton_iterations,
                bracket_gap: solution.bracket_gap,
                lambda1_q0: solution.lambda1_q0,
            })
        }
        Err(Error::OnlyZeroSolution { lambda1 }) => {
            let u_hat = Field::zeros(*q0.grid());
            let tol_lambda = opts.lambda_tolerance(lambda);
            let eigen_gap = (lambda1 - lambda).abs();
            Ok(InverseResult {
                q_hat: q0.clone(),
                u_hat,
                nu: 0.0,
                objective: 0.0,
                degenerate: true,
                verify: VerificationReport {
                    lambda_target: lambda,
                    lambda_achieved: lambda1,
                    eigen_gap,
                    alignment: 0.0,
                    tol_lambda,
                    tol_phi: opts.tol_phi,
                    passed: eigen_gap <= tol_lambda,
                },
                residual_norm: 0.0,
                newton_iterations: 0,
                bracket_gap: None,
                lambda1_q0: lambda1,
            })
        }
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Grid;
    use std::f64::consts::PI;

    fn opts() -> InverseOptions {
        InverseOptions::default()
    }

    #[test]
    fn reference_reconstruction() {
        let g = Grid::interval(0.0, 1.0, 255).unwrap();
        let q0 = Field::zeros(g);
        let lambda = 2.0 * PI * PI;
        let r = solve_inverse(&q0, lambda, 2.0, &opts()).unwrap();
        assert!(r.verify.passed);
        assert!(r.verify.eigen_gap <= 1e-8 * lambda.abs());
        assert!(r.verify.alignment <= 1e-8);
        // q_hat - q0 = u_hat^2 nodewise (p = 2)
        for ((&qh, &q0v), &u) in r
            .q_hat
            .values()
            .iter()
            .zip(q0.values())
            .zip(r.u_hat.values())
        {
            let expect = u * u;
            assert!(((qh - q0v) - expect).abs() <= 1e-12 * (1.0 + qh.abs() + expect));
            assert!(qh > q0v);
        }
    }

    #[test]
    fn shift_equivariance() {
        let g = Grid::interval(0.0, 1.0, 127).unwrap();
        let q0 = Field::from_fn(g, |x| 3.0 * (2.0 * PI * x[0]).sin()).unwrap();
        let lambda = 30.0;
        let c = 4.5;
        let a = solve_inverse(&q0, lambda, 2.0, &opts()).unwrap();
        let b = solve_inverse(&q0.map(|v| v + c).unwrap(), lambda + c, 2.0, &opts()).unwrap();
        let shifted = a.q_hat.map(|v| v + c).unwrap();
        let diff = Field::lincomb(1.0, &b.q_hat, -1.0, &shifted)
            .unwrap()
            .norm_inf();
        assert!(diff <= 1e-10, "diff={diff:.3e}");
    }

    #[test]
    fn near_bifurcation_smallness() {
        let g = Grid::interval(0.0, 1.0, 127).unwrap();
        let q0 = Field::zeros(g);
        let o = opts();
        let lambda1 = principal_eigenpair(&q0, &o.logistic.eig).unwrap().lambda1;
        let r = solve_inverse(&q0, lambda1 + 1e-8, 2.0, &o).unwrap();
        assert!(!r.degenerate);
        let dist = Field::lincomb(1.0, &r.q_hat, -1.0, &q0)
            .unwrap()
            .lp_norm(2.0)
            .unwrap();
        assert!(dist <= 1e-3, "dist={dist:.3e}");
    }

    #[test]
    fn degenerate_at_lambda1() {
        let g = Grid::interval(0.0, 1.0, 127).unwrap();
        let q0 = Field::from_fn(g, |x| -4.0 * x[0]).unwrap();
        let o = opts();
        let lambda1 = principal_eigenpair(&q0, &o.logistic.eig).unwrap().lambda1;
        let r = solve_inverse(&q0, lambda1, 2.0, &o).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.nu, 0.0);
        assert_eq!(r.objective, 0.0);
        assert_eq!(r.q_hat.values(), q0.values());
        assert!(r.u_hat.values().iter().all(|&v| v == 0.0));
        assert!(r.verify.passed);
    }

    #[test]
    fn invalid_p_and_low_lambda() {
        let g = Grid::interval(0.0, 1.0, 63).unwrap();
        let q0 = Field::zeros(g);
        assert!(matches!(
            solve_inverse(&q0, 20.0, 1.5, &opts()),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            solve_inverse(&q0, 0.5, 2.0, &opts()),
            Err(Error::NoPositiveSolution { .. })
        ));
    }

    #[test]
    fn nu_recovery_cases() {
        let g = Grid::interval(0.0, 1.0, 63).unwrap();
        let u = Field::from_fn(g, |x| (PI * x[0]).sin()).unwrap();
        let unit = u.map(|v| v / u.norm_l2()).unwrap();
        assert!((nu_recovery(&unit, 3.0).unwrap() - 1.0).abs() <= 1e-12);
        let n2 = u.norm_l2();
        assert!((nu_recovery(&u, 2.0).unwrap() - n2 * n2).abs() <= 1e-12 * n2 * n2);
        assert!(matches!(
            nu_recovery(&Field::zeros(g), 2.0),
            Err(Error::ZeroField)
        ));
    }

    #[test]
    fn nu_links_u_hat_to_eigenfunction() {
        let g = Grid::interval(0.0, 1.0, 127).unwrap();
        let q0 = Field::from_fn(g, |x| 2.0 * x[0]).unwrap();
        let o = opts();
        let lambda1 = principal_eigenpair(&q0, &o.logistic.eig).unwrap().lambda1;
        let p = 3.0;
        let r = solve_inverse(&q0, lambda1 + 6.0, p, &o).unwrap();
        let pair = principal_eigenpair(&r.q_hat, &o.logistic.eig).unwrap();
        let scale = r.nu.powf((p - 1.0) / 2.0);
        let predicted = pair.phi1.map(|v| scale * v).unwrap();
        let diff = Field::lincomb(1.0, &predicted, -1.0, &r.u_hat)
            .unwrap()
            .norm_inf();
        assert!(diff <= 1e-8, "diff={diff:.3e}");
    }

    #[test]
    fn verification_detects_corruption() {
        let g = Grid::interval(0.0, 1.0, 255).unwrap();
        let q0 = Field::zeros(g);
        let r = solve_inverse(&q0, 2.0 * PI * PI, 2.0, &opts()).unwrap();
        // bump one mid-domain node
        let mut vals = r.q_hat.values().to_vec();
        let mid = vals.len() / 2;
        vals[mid] += 0.1;
        let corrupted = Field::from_values(*r.q_hat.grid(), vals).unwrap();
        let report = verify(&corrupted, &r.u_hat, 2.0 * PI * PI, &opts()).unwrap();
        assert!(!report.passed);
        assert!(report.eigen_gap > report.tol_lambda);
    }

    #[test]
    fn alignment_is_scale_invariant() {
        let g = Grid::interval(0.0, 1.0, 127).unwrap();
        let q0 = Field::zeros(g);
        let r = solve_inverse(&q0, 2.0 * PI * PI, 2.0, &opts()).unwrap();
        let doubled = r.u_hat.map(|v| 2.0 * v).unwrap();
        let report = verify(&r.q_hat, &doubled, 2.0 * PI * PI, &opts()).unwrap();
        assert!(report.alignment <= 1e-12);
    }

    #[test]
    fn objective_cases() {
        let g = Grid::interval(0.0, 1.0, 1023).unwrap();
        let q0 = Field::from_fn(g, |x| x[0]).unwrap();
        assert_eq!(objective_value(&q0, &q0, 3.0).unwrap(), 0.0);
        let plus1 = q0.map(|v| v + 1.0).unwrap();
        for p in [2.0, 3.0, 5.0] {
            let q = objective_value(&q0, &plus1, p).unwrap();
            assert!((q - 1023.0 / 1024.0).abs() <= 1e-12, "p={p}");
        }
    }

    #[test]
    fn objective_equals_gamma_moment_of_u() {
        let g = Grid::interval(0.0, 1.0, 127).unwrap();
        let q0 = Field::zeros(g);
        for p in [2.0, 3.0] {
            let r = solve_inverse(&q0, 25.0, p, &opts()).unwrap();
            let gamma = 2.0 * p / (p - 1.0);
            let moment = r.u_hat.lp_norm(gamma).unwrap().powf(gamma);
            assert!(
                (r.objective - moment).abs() <= 1e-12 * (1.0 + moment),
                "p={p}: {} vs {moment}",
                r.objective
            );
        }
    }
}
