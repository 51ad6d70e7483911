//! Independent route to the closest potential: minimize
//! `Q(q) = |q - q0|_{Lp}^p` over grid potentials subject to
//! `λ1(q) = λ`, by an augmented Lagrangian with gradient-descent inner
//! solves. The eigenvalue constraint gradient is `phi1(q)^2` (the derivative
//! of `λ1`), so every merit evaluation costs one eigensolve.
//!
//! Gradients live in the quadrature-weighted L2 geometry: a gradient field
//! `g` represents the functional `h -> <g, h>`, and descent steps are
//! `q <- q - t g`.

use crate::error::{Error, Result};
use crate::linops::EigOptions;
use crate::mesh::Field;
use crate::spectral::{principal_eigenpair, SpectralPair};

/// Merit value and gradient of the augmented Lagrangian
/// `Q(q) + mu (λ1(q) - λ) + (rho/2)(λ1(q) - λ)^2` at `q`.
#[derive(Debug, Clone)]
pub struct MeritGradient {
    pub merit: f64,
    pub gradient: Field,
    pub objective: f64,
    pub lambda1: f64,
    /// `λ1(q) - λ`.
    pub constraint: f64,
    pub eig_iterations: usize,
    /// Eigenfunction of the evaluation point (for tangent projections).
    pub phi1: Field,
}

/// Gradient field of `Q(q) = |q - q0|_{Lp}^p`: nodewise
/// `p |q - q0|^(p-2) (q - q0)`.
pub fn objective_gradient(q: &Field, q0: &Field, p: f64) -> Result<Field> {
    if q.grid() != q0.grid() {
        return Err(Error::GridMismatch);
    }
    let vals: Vec<f64> = q
        .values()
        .iter()
        .zip(q0.values())
        .map(|(&a, &b)| {
            let d = a - b;
            if p == 2.0 {
                2.0 * d
            } else {
                p * d.abs().powf(p - 2.0) * d
            }
        })
        .collect();
    Field::from_values(*q.grid(), vals)
}

/// Evaluate the augmented Lagrangian and its gradient; requires `p >= 2`
/// (the objective gradient is continuous there).
pub fn merit_and_gradient(
    q: &Field,
    q0: &Field,
    lambda: f64,
    p: f64,
    rho: f64,
    multiplier: f64,
    eig: &EigOptions,
) -> Result<MeritGradient> {
    if p < 2.0 {
        return Err(Error::Config(format!(
            "merit gradient needs p >= 2, got {p}"
        )));
    }
    let pair = principal_eigenpair(q, eig)?;
    let constraint = pair.lambda1 - lambda;
    let diff = Field::lincomb(1.0, q, -1.0, q0)?;
    let objective = diff.lp_norm(p)?.powf(p);
    let merit = objective + multiplier * constraint + 0.5 * rho * constraint * constraint;
    let gq = objective_gradient(q, q0, p)?;
    let weight_c = multiplier + rho * constraint;
    let phi_sq = pair.phi1.map(|v| v * v)?;
    let gradient = Field::lincomb(1.0, &gq, weight_c, &phi_sq)?;
    Ok(MeritGradient {
        merit,
        gradient,
        objective,
        lambda1: pair.lambda1,
        constraint,
        eig_iterations: pair.report.iterations,
        phi1: pair.phi1,
    })
}

/// Remove the `phi1^2` component of `h`:
/// `h - (<phi1^2, h> / <phi1^2, phi1^2>) phi1^2`, so the result is tangent to
/// the constraint manifold at the potential whose eigenfunction is `phi1`.
pub fn tangent_project(phi1: &Field, h: &Field) -> Result<Field> {
    let phi_sq = phi1.map(|v| v * v)?;
    let num = phi_sq.inner_product(h)?;
    let den = phi_sq.inner_product(&phi_sq)?;
    Field::lincomb(1.0, h, -num / den, &phi_sq)
}

/// Feasible starting point: `q0 + perturbation`, shifted by the constant
/// `λ - λ1(q0 + perturbation)` so the constraint holds exactly (constant
/// shifts move `λ1` one-to-one).
pub fn feasible_start(
    q0: &Field,
    lambda: f64,
    perturbation: &Field,
    eig: &EigOptions,
) -> Result<Field> {
    let q = Field::lincomb(1.0, q0, 1.0, perturbation)?;
    let l1 = principal_eigenpair(&q, eig)?.lambda1;
    q.map(|v| v + (lambda - l1))
}

/// One accepted inner step of the optimizer.
#[derive(Debug, Clone, Copy)]
pub struct HistoryRow {
    pub iteration: usize,
    pub objective: f64,
    pub constraint_violation: f64,
    pub step_size: f64,
    pub eig_iterations: usize,
}

/// Final optimizer state.
#[derive(Debug, Clone)]
pub struct MinimizeResult {
    pub q: Field,
    pub multiplier: f64,
    pub rho: f64,
    pub objective: f64,
    pub constraint_violation: f64,
    /// L2 norm of the tangent-projected objective gradient at the end.
    pub projected_gradient_norm: f64,
    pub converged: bool,
    pub outer_iterations: usize,
    pub history: Vec<HistoryRow>,
    /// Largest merit increase over accepted steps (should be rounding-level).
    pub merit_increase: f64,
}

/// Augmented Lagrangian knobs.
#[derive(Debug, Clone, Copy)]
pub struct OptimizeOptions {
    /// Final tolerance on `|λ1(q) - λ|`.
    pub tol_constraint: f64,
    /// Final tolerance on the projected objective gradient. Merit-based
    /// line searches cannot certify decreases below ~sqrt(eps * merit), so
    /// targets much under 1e-5 are not resolvable at typical merit scales.
    pub tol_gradient: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub rho0: f64,
    pub rho_growth: f64,
    pub eig: EigOptions,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        OptimizeOptions {
            tol_constraint: 1e-8,
            tol_gradient: 1e-5,
            max_outer: 60,
            max_inner: 600,
            rho0: 10.0,
            rho_growth: 5.0,
            eig: EigOptions::default(),
        }
    }
}

/// Minimize `Q` subject to `λ1(q) = λ` from `start`, which should be feasible
/// or nearly so. Inner loops run gradient descent with a backtracking line
/// search on the merit; outer loops update the multiplier
/// `mu <- mu + rho (λ1(q) - λ)` and inflate `rho` when the violation stalls.
pub fn augmented_lagrangian_minimize(
    q0: &Field,
    lambda: f64,
    p: f64,
    start: &Field,
    opts: &OptimizeOptions,
) -> Result<MinimizeResult> {
    if start.grid() != q0.grid() {
        return Err(Error::GridMismatch);
    }
    let mut q = start.clone();
    let mut multiplier = 0.0;
    let mut rho = opts.rho0;
    // Conn-Gould-Toint style forcing sequences: the inner tolerance and the
    // multiplier-update gate both follow rho.
    let omega_floor = 0.25 * opts.tol_gradient;
    let eta_floor = 0.01 * opts.tol_constraint;
    let mut omega = (1e-1 / rho).max(omega_floor);
    let mut eta = (1e-1 / rho.powf(0.1)).max(eta_floor);
    let mut history = Vec::new();
    let mut merit_increase: f64 = 0.0;
    let mut step = 0.1;
    let mut total_inner = 0usize;
    let mut converged = false;
    let mut outer_done = 0usize;

    let mut mg = merit_and_gradient(&q, q0, lambda, p, rho, multiplier, &opts.eig)?;
    for outer in 0..opts.max_outer {
        outer_done = outer + 1;
        // inner gradient descent on the merit
        for _ in 0..opts.max_inner {
            let gnorm = mg.gradient.norm_l2();
            if gnorm <= omega {
                break;
            }
            let mut t = step;
            let mut accepted = None;
            while t >= 1e-16 {
                let cand = Field::lincomb(1.0, &q, -t, &mg.gradient)?;
                let mg_c = merit_and_gradient(&cand, q0, lambda, p, rho, multiplier, &opts.eig)?;
                if mg_c.merit <= mg.merit - 1e-4 * t * gnorm * gnorm {
                    accepted = Some((cand, mg_c, t));
                    break;
                }
                t *= 0.5;
            }
            let Some((cand, mg_c, t)) = accepted else {
                break; // merit locally flat at this rho; hand back to outer loop
            };
            merit_increase = merit_increase.max(mg_c.merit - mg.merit);
            q = cand;
            mg = mg_c;
            total_inner += 1;
            step = (t * 1.5).min(1.0);
            history.push(HistoryRow {
                iteration: total_inner,
                objective: mg.objective,
                constraint_violation: mg.constraint.abs(),
                step_size: t,
                eig_iterations: mg.eig_iterations,
            });
        }

        let violation = mg.constraint.abs();
        // final convergence test: feasibility + stationarity of Q on the
        // tangent space
        let gq = objective_gradient(&q, q0, p)?;
        let pg = tangent_project(&mg.phi1, &gq)?.norm_l2();
        if violation <= opts.tol_constraint && pg <= opts.tol_gradient {
            converged = true;
            break;
        }
        // Update the multiplier while the violation keeps pace with eta;
        // inflate rho on stalls. Moderate rho keeps the inner problem well
        // conditioned, which is the whole point over a pure penalty.
        if violation <= eta.max(opts.tol_constraint) {
            multiplier += rho * mg.constraint;
            eta = (eta / rho.powf(0.9)).max(eta_floor);
            omega = (omega / rho).max(omega_floor);
        } else {
            rho = (rho * opts.rho_growth).min(1e6 * opts.rho0);
            eta = (1e-1 / rho.powf(0.1)).max(eta_floor);
            omega = (1e-1 / rho).max(omega_floor);
        }
        mg = merit_and_gradient(&q, q0, lambda, p, rho, multiplier, &opts.eig)?;
    }

    let pair = principal_eigenpair(&q, &opts.eig)?;
    let projected_gradient_norm = projected_objective_gradient_norm(&q, q0, p, &pair)?;
    let constraint_violation = (pair.lambda1 - lambda).abs();
    Ok(MinimizeResult {
        objective: objective_value_internal(&q, q0, p)?,
        q,
        multiplier,
        rho,
        constraint_violation,
        projected_gradient_norm,
        converged,
        outer_iterations: outer_done,
        history,
        merit_increase,
    })
}

fn objective_value_internal(q: &Field, q0: &Field, p: f64) -> Result<f64> {
    let diff = Field::lincomb(1.0, q, -1.0, q0)?;
    Ok(diff.lp_norm(p)?.powf(p))
}

fn projected_objective_gradient_norm(
    q: &Field,
    q0: &Field,
    p: f64,
    pair: &SpectralPair,
) -> Result<f64> {
    let gq = objective_gradient(q, q0, p)?;
    Ok(tangent_project(&pair.phi1, &gq)?.norm_l2())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inverse::{solve_inverse, InverseOptions};
    use crate::mesh::Grid;
    use rand::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn constant_shift_start_is_feasible() {
        let g = Grid::interval(0.0, 1.0, 127).unwrap();
        let q0 = Field::from_fn(g, |x| 5.0 * x[0]).unwrap();
        let eig = EigOptions::default();
        let start = feasible_start(&q0, 30.0, &Field::zeros(g), &eig).unwrap();
        let l1 = principal_eigenpair(&start, &eig).unwrap().lambda1;
        assert!((l1 - 30.0).abs() <= 10.0 * eig.tol);
    }

    #[test]
    fn merit_gradient_matches_central_differences() {
        let g = Grid::interval(0.0, 1.0, 128).unwrap();
        let q0 = Field::from_fn(g, |x| 3.0 * (2.0 * PI * x[0]).cos()).unwrap();
        let q = Field::from_fn(g, |x| 3.0 * (2.0 * PI * x[0]).cos() + 2.0 + x[0]).unwrap();
        let h = Field::from_fn(g, |x| (3.0 * PI * x[0]).sin() - 0.4).unwrap();
        let eig = EigOptions::default();
        for p in [2.0, 3.0] {
            let (rho, mu) = (7.0, -1.3);
            let lambda = 18.0;
            let mg = merit_and_gradient(&q, &q0, lambda, p, rho, mu, &eig).unwrap();
            let directional = mg.gradient.inner_product(&h).unwrap();
            let eps = 1e-6;
            let qp = Field::lincomb(1.0, &q, eps, &h).unwrap();
            let qm = Field::lincomb(1.0, &q, -eps, &h).unwrap();
            let mp = merit_and_gradient(&qp, &q0, lambda, p, rho, mu, &eig).unwrap().merit;
            let mm = merit_and_gradient(&qm, &q0, lambda, p, rho, mu, &eig).unwrap().merit;
            let fd = (mp - mm) / (2.0 * eps);
            let rel = (fd - directional).abs() / directional.abs().max(1.0);
            assert!(rel <= 1e-5, "p={p}: fd={fd}, grad={directional}, rel={rel:.3e}");
        }
    }

    #[test]
    fn stationarity_at_reconstructed_potential() {
        let g = Grid::interval(0.0, 1.0, 128).unwrap();
        let q0 = Field::zeros(g);
        let lambda = 2.0 * PI * PI;
        let r = solve_inverse(&q0, lambda, 2.0, &InverseOptions::default()).unwrap();
        let eig = EigOptions::default();
        let pair = principal_eigenpair(&r.q_hat, &eig).unwrap();
        let pg = projected_objective_gradient_norm(&r.q_hat, &q0, 2.0, &pair).unwrap();
        assert!(pg <= 1e-6, "pg={pg:.3e}");
    }

    #[test]
    fn tangent_projection_properties() {
        let g = Grid::interval(0.0, 1.0, 127).unwrap();
        let q = Field::from_fn(g, |x| 10.0 * x[0]).unwrap();
        let eig = EigOptions::default();
        let pair = principal_eigenpair(&q, &eig).unwrap();
        let phi_sq = pair.phi1.map(|v| v * v).unwrap();

        // parallel direction projects to ~0
        let p0 = tangent_project(&pair.phi1, &phi_sq).unwrap();
        assert!(p0.norm_l2() <= 1e-12 * phi_sq.norm_l2());

        // random direction becomes orthogonal, projection is idempotent
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let h = Field::from_values(g, (0..127).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .unwrap();
        let ph = tangent_project(&pair.phi1, &h).unwrap();
        assert!(phi_sq.inner_product(&ph).unwrap().abs() <= 1e-12 * h.norm_l2());
        let pph = tangent_project(&pair.phi1, &ph).unwrap();
        let drift = Field::lincomb(1.0, &pph, -1.0, &ph).unwrap().norm_l2();
        assert!(drift <= 1e-14 * (1.0 + h.norm_l2()));
    }

    #[test]
    fn optimizer_reaches_closed_form_answer() {
        let g = Grid::interval(0.0, 1.0, 63).unwrap();
        let q0 = Field::zeros(g);
        let lambda = 2.0 * PI * PI;
        let q_hat = solve_inverse(&q0, lambda, 2.0, &InverseOptions::default())
            .unwrap()
            .q_hat;
        let opts = OptimizeOptions::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let pert = Field::from_values(g, (0..63).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .unwrap();
        let start = feasible_start(&q0, lambda, &pert, &opts.eig).unwrap();
        let result = augmented_lagrangian_minimize(&q0, lambda, 2.0, &start, &opts).unwrap();
        assert!(result.converged, "not converged: {result:?}");
        let dist = Field::lincomb(1.0, &result.q, -1.0, &q_hat)
            .unwrap()
            .lp_norm(2.0)
            .unwrap();
        assert!(dist <= 1e-3, "dist={dist:.3e}");
        assert!(result.constraint_violation <= 1e-6);
        assert!(result.merit_increase <= 1e-12 * (1.0 + result.objective));
    }
}
