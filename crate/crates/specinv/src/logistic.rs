//! Positive solutions of the logistic boundary value problem
//! `-Δu + q0 u = λ u - u^(γ-1)`, `u > 0`, `u = 0` on the boundary, with
//! `γ = 2p/(p-1)`.
//!
//! A positive solution exists iff `λ > λ1(q0)`. The primary path is damped
//! Newton started from an amplitude-matched multiple of the principal
//! eigenfunction; the fallback is the classical sub-/supersolution monotone
//! iteration, which brackets the solution between a monotonically increasing
//! and a monotonically decreasing sequence.

use crate::error::{Error, Result};
use crate::linops::{cg_solve, EigOptions, SchrodingerOperator};
use crate::mesh::Field;
use crate::spectral::{principal_eigenpair, SpectralPair};

/// `u^e` for `u >= 0` with fast paths for the exponents that arise from
/// `p in {2, 3}`.
#[inline]
fn pospow(u: f64, e: f64) -> f64 {
    if e == 1.0 {
        u
    } else if e == 2.0 {
        u * u
    } else if e == 3.0 {
        u * u * u
    } else {
        u.powf(e)
    }
}

/// Logistic problem data: base potential `q0`, spectral target `λ`, and the
/// nonlinearity exponent `γ` (equivalently `p`, via `γ = 2p/(p-1)`).
#[derive(Debug, Clone)]
pub struct LogisticProblem {
    q0: Field,
    lambda: f64,
    gamma: f64,
    p: f64,
}

impl LogisticProblem {
    /// Construct from the norm exponent `p >= 2`; sets `γ = 2p/(p-1)`.
    pub fn from_p(q0: Field, lambda: f64, p: f64) -> Result<LogisticProblem> {
        if !p.is_finite() || p < 2.0 {
            return Err(Error::Config(format!(
                "p = {p} is not admissible in dimension < 4; the admissible range is [2, +inf)"
            )));
        }
        let gamma = 2.0 * p / (p - 1.0);
        Ok(LogisticProblem {
            q0,
            lambda,
            gamma,
            p,
        })
    }

    /// Construct from the exponent `γ` directly; requires `2 < γ <= 4`
    /// (dimension < 4) and sets `p = γ/(γ-2)`.
    pub fn from_gamma(q0: Field, lambda: f64, gamma: f64) -> Result<LogisticProblem> {
        if !gamma.is_finite() || gamma <= 2.0 || gamma > 4.0 {
            return Err(Error::Config(format!(
                "gamma = {gamma} is not admissible in dimension < 4; need 2 < gamma <= 4"
            )));
        }
        let p = gamma / (gamma - 2.0);
        Ok(LogisticProblem {
            q0,
            lambda,
            gamma,
            p,
        })
    }

    pub fn q0(&self) -> &Field {
        &self.q0
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// Supersolution level `M = (λ - min q0)^(1/(γ-2))`: no positive solution
    /// exceeds it (discrete maximum principle).
    pub fn sup_bound(&self) -> f64 {
        (self.lambda - self.q0.min()).powf(1.0 / (self.gamma - 2.0))
    }

    /// Residual `F(u) = A(q0) u - λ u + u_+^(γ-1)` together with the number
    /// of negative nodes that were clamped inside the nonlinearity.
    pub fn residual(&self, u: &Field) -> Result<(Field, usize)> {
        let op = SchrodingerOperator::new(self.q0.clone());
        self.residual_with_op(&op, u)
    }

    fn residual_with_op(&self, op: &SchrodingerOperator, u: &Field) -> Result<(Field, usize)> {
        let linear = op.apply_with_diagonal_shift(u, -self.lambda)?;
        let clamped = u.values().iter().filter(|&&v| v < 0.0).count();
        let e = self.gamma - 1.0;
        let mut vals = Vec::with_capacity(u.len());
        for (l, &v) in linear.values().iter().zip(u.values()) {
            vals.push(l + pospow(v.max(0.0), e));
        }
        let f = Field::from_values(*u.grid(), vals)?;
        Ok((f, clamped))
    }
}

/// Converged positive solution with solver statistics.
#[derive(Debug, Clone)]
pub struct LogisticSolution {
    pub u: Field,
    /// L2 norm of the residual at exit.
    pub residual_norm: f64,
    pub newton_iterations: usize,
    /// `|u_max - u_min|_inf` of the monotone bracket when the fallback ran.
    pub bracket_gap: Option<f64>,
    /// Principal eigenvalue of the base potential (computed on the way in).
    pub lambda1_q0: f64,
}

impl LogisticSolution {
    pub fn max_u(&self) -> f64 {
        self.u.max()
    }
}

/// Solver knobs for the logistic problem.
#[derive(Debug, Clone, Copy)]
pub struct LogisticOptions {
    /// Target L2 residual of the outer solve.
    pub residual_tol: f64,
    pub newton_max_iterations: usize,
    /// Relative tolerance of the inner CG solves.
    pub cg_tol: f64,
    pub cg_max_iterations: usize,
    pub monotone_max_iterations: usize,
    pub eig: EigOptions,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        LogisticOptions {
            residual_tol: 1e-10,
            newton_max_iterations: 100,
            cg_tol: 1e-12,
            cg_max_iterations: 200_000,
            monotone_max_iterations: 50_000,
            eig: EigOptions::default(),
        }
    }
}

impl LogisticOptions {
    pub fn with_tol(tol: f64) -> Self {
        LogisticOptions {
            residual_tol: tol,
            ..Default::default()
        }
    }
}

/// Amplitude-matched initial guess `c * phi1(q0)` with
/// `c = ((λ - λ1) / ∫ phi1^γ)^(1/(γ-2))` — the amplitude solving the
/// projection of the problem onto the span of `phi1`.
pub fn amplitude_initial_guess(problem: &LogisticProblem, pair: &SpectralPair) -> Result<Field> {
    let gap = problem.lambda - pair.lambda1;
    if gap <= 0.0 {
        return Err(Error::NoPositiveSolution {
            lambda: problem.lambda,
            lambda1: pair.lambda1,
        });
    }
    let e = problem.gamma - 2.0;
    let phi_gm = pair.phi1.map(|v| pospow(v, e))?;
    let phi_sq = pair.phi1.map(|v| v * v)?;
    let integral = phi_gm.inner_product(&phi_sq)?;
    let c = (gap / integral).powf(1.0 / e);
    pair.phi1.map(|v| c * v)
}

/// Damped Newton iteration from a positive start. The Jacobian
/// `J(u) = A(q0) - λ I + (γ-1) diag(u_+^(γ-2))` is solved by CG; when it is
/// indefinite away from the solution, the step falls back to a regularized
/// Gauss-Newton direction on `|F|^2` (CG on `J^2 + τ I`, always positive
/// definite). Steps are shortened to keep every node positive and accepted
/// under a residual-decrease test.
pub fn newton_solve(
    problem: &LogisticProblem,
    u0: &Field,
    opts: &LogisticOptions,
) -> Result<LogisticSolution> {
    if u0.grid() != problem.q0.grid() {
        return Err(Error::GridMismatch);
    }
    if let Some((node, &value)) = u0.values().iter().enumerate().find(|(_, &v)| v <= 0.0) {
        return Err(Error::PositivityViolation { node, value });
    }
    let op = SchrodingerOperator::new(problem.q0.clone());
    let mut u = u0.clone();
    let (mut f, _) = problem.residual_with_op(&op, &u)?;
    let mut fnorm = f.norm_l2();
    let em2 = problem.gamma - 2.0;
    let gm1 = problem.gamma - 1.0;

    for iteration in 0..=opts.newton_max_iterations {
        if fnorm <= opts.residual_tol {
            return Ok(LogisticSolution {
                u,
                residual_norm: fnorm,
                newton_iterations: iteration,
                bracket_gap: None,
                lambda1_q0: f64::NAN, // filled by solve()
            });
        }
        if iteration == opts.newton_max_iterations {
            break;
        }

        let diag = u.map(|v| gm1 * pospow(v.max(0.0), em2))?;
        let j_apply = |v: &Field| -> Result<Field> {
            let lin = op.apply_with_diagonal_shift(v, -problem.lambda)?;
            let dv: Vec<f64> = lin
                .values()
                .iter()
                .zip(diag.values())
                .zip(v.values())
                .map(|((&l, &d), &vv)| l + d * vv)
                .collect();
            Field::from_values(*v.grid(), dv)
        };
        let rhs = f.map(|v| -v)?;

        let newton_dir = cg_solve(&j_apply, &rhs, opts.cg_tol, opts.cg_max_iterations)
            .map(|(d, _)| d)
            .ok();
        let delta = match newton_dir {
            Some(d) => d,
            None => gauss_newton_direction(&j_apply, &f, problem.lambda, opts)?,
        };

        match line_search(problem, &op, &u, &delta, fnorm) {
            Some((u_next, f_next, fnorm_next)) => {
                u = u_next;
                f = f_next;
                fnorm = fnorm_next;
            }
            None => {
                // Newton direction unusable; one more attempt with the
                // always-descent Gauss-Newton direction before giving up.
                let gn = gauss_newton_direction(&j_apply, &f, problem.lambda, opts)?;
                match line_search(problem, &op, &u, &gn, fnorm) {
                    Some((u_next, f_next, fnorm_next)) => {
                        u = u_next;
                        f = f_next;
                        fnorm = fnorm_next;
                    }
                    None => {
                        return Err(Error::LineSearchStagnation {
                            step: 0.0,
                            residual: fnorm,
                        })
                    }
                }
            }
        }
    }
    Err(Error::ConvergenceFailure {
        what: "logistic Newton iteration",
        iterations: opts.newton_max_iterations,
        residual: fnorm,
    })
}

/// Regularized Gauss-Newton direction for `min |F|^2`: solves
/// `(J^2 + τ I) d = -J F` with escalating `τ`; `J` is symmetric so `J^2` is
/// positive semidefinite and CG cannot break down except through rounding,
/// in which case `τ` is increased.
fn gauss_newton_direction(
    j_apply: impl Fn(&Field) -> Result<Field>,
    f: &Field,
    lambda: f64,
    opts: &LogisticOptions,
) -> Result<Field> {
    let jf = j_apply(f)?;
    let rhs = jf.map(|v| -v)?;
    let mut tau = 1e-2 * (1.0 + lambda.abs());
    loop {
        let reg_apply = |v: &Field| -> Result<Field> {
            let jv = j_apply(v)?;
            let jjv = j_apply(&jv)?;
            Field::lincomb(1.0, &jjv, tau, v)
        };
        match cg_solve(reg_apply, &rhs, 1e-10, opts.cg_max_iterations) {
            Ok((d, _)) => return Ok(d),
            Err(_) if tau < 1e8 * (1.0 + lambda.abs()) => tau *= 10.0,
            Err(e) => return Err(e),
        }
    }
}

/// Backtracking with a positivity safeguard; returns the accepted point or
/// `None` when no acceptable step exists down to the minimal step size.
fn line_search(
    problem: &LogisticProblem,
    op: &SchrodingerOperator,
    u: &Field,
    delta: &Field,
    fnorm: f64,
) -> Option<(Field, Field, f64)> {
    // largest step keeping all nodes strictly positive
    let mut t = 1.0f64;
    for (&ui, &di) in u.values().iter().zip(delta.values()) {
        if di < 0.0 {
            t = t.min(0.995 * ui / -di);
        }
    }
    t = t.min(1.0);
    while t >= 1e-12 {
        let cand = Field::lincomb(1.0, u, t, delta).ok()?;
        if cand.values().iter().all(|&v| v > 0.0) {
            if let Ok((fc, _)) = problem.residual_with_op(op, &cand) {
                let fc_norm = fc.norm_l2();
                if fc_norm <= (1.0 - 1e-4 * t) * fnorm {
                    return Some((cand, fc, fc_norm));
                }
            }
        }
        t *= 0.5;
    }
    None
}

/// Monotone bracket of the positive solution.
#[derive(Debug, Clone)]
pub struct MonotoneBracket {
    /// Limit of the increasing sequence from the subsolution.
    pub u_min: Field,
    /// Limit of the decreasing sequence from the constant supersolution.
    pub u_max: Field,
    pub iterations_min: usize,
    pub iterations_max: usize,
    /// `|u_max - u_min|_inf`.
    pub bracket_gap: f64,
    /// Largest observed violation of per-step monotonicity (rounding-level).
    pub monotonicity_violation: f64,
}

/// Sub-/supersolution iteration: start from `ε phi1(q0)` (below) and the
/// constant `M = (λ - min q0)^(1/(γ-2))` (above) and iterate
/// `u <- (A + K I)^{-1} ((K + λ) u - u^(γ-1))` with
/// `K = max(0, -min q0) + (γ-1) M^(γ-2)`, which makes the update monotone on
/// `[0, M]`. Both sequences converge to the unique positive solution.
pub fn monotone_bracket_solve(
    problem: &LogisticProblem,
    opts: &LogisticOptions,
) -> Result<MonotoneBracket> {
    let pair = principal_eigenpair(&problem.q0, &opts.eig)?;
    check_lambda_admissible(problem, &pair)?;
    monotone_bracket_with_pair(problem, &pair, opts)
}

fn monotone_bracket_with_pair(
    problem: &LogisticProblem,
    pair: &SpectralPair,
    opts: &LogisticOptions,
) -> Result<MonotoneBracket> {
    let gamma = problem.gamma;
    let em2 = gamma - 2.0;
    let big_m = problem.sup_bound();
    let gap = problem.lambda - pair.lambda1;
    let phimax = pair.phi1.max();
    // subsolution amplitude: eps^(γ-2) max(phi1)^(γ-2) <= λ - λ1
    let eps = 0.99 * gap.powf(1.0 / em2) / phimax;
    let k_const = (0.0f64).max(-problem.q0.min()) + (gamma - 1.0) * pospow(big_m, em2);

    let op = SchrodingerOperator::new(problem.q0.clone());
    let step = |u: &Field| -> Result<Field> {
        let e = gamma - 1.0;
        let rhs_vals: Vec<f64> = u
            .values()
            .iter()
            .map(|&v| (k_const + problem.lambda) * v - pospow(v.max(0.0), e))
            .collect();
        let rhs = Field::from_values(*u.grid(), rhs_vals)?;
        let (next, _) = cg_solve(
            |v| op.apply_with_diagonal_shift(v, k_const),
            &rhs,
            opts.cg_tol,
            opts.cg_max_iterations,
        )?;
        Ok(next)
    };

    let mut violation = 0.0f64;
    let mut run = |start: Field, increasing: bool| -> Result<(Field, usize)> {
        let mut u = start;
        for iteration in 0..opts.monotone_max_iterations {
            let (f, _) = problem.residual_with_op(&op, &u)?;
            if f.norm_l2() <= opts.residual_tol {
                return Ok((u, iteration));
            }
            let next = step(&u)?;
            for (&a, &b) in u.values().iter().zip(next.values()) {
                let v = if increasing { a - b } else { b - a };
                violation = violation.max(v);
            }
            u = next;
        }
        let (f, _) = problem.residual_with_op(&op, &u)?;
        Err(Error::ConvergenceFailure {
            what: "monotone iteration",
            iterations: opts.monotone_max_iterations,
            residual: f.norm_l2(),
        })
    };

    let (u_min, iterations_min) = run(pair.phi1.map(|v| eps * v)?, true)?;
    let (u_max, iterations_max) = run(Field::constant(*problem.q0.grid(), big_m), false)?;
    let bracket_gap = Field::lincomb(1.0, &u_max, -1.0, &u_min)?.norm_inf();
    Ok(MonotoneBracket {
        u_min,
        u_max,
        iterations_min,
        iterations_max,
        bracket_gap,
        monotonicity_violation: violation,
    })
}

fn check_lambda_admissible(problem: &LogisticProblem, pair: &SpectralPair) -> Result<()> {
    let slack = 1e-10 * (1.0 + pair.lambda1.abs());
    let gap = problem.lambda - pair.lambda1;
    if gap < -slack {
        return Err(Error::NoPositiveSolution {
            lambda: problem.lambda,
            lambda1: pair.lambda1,
        });
    }
    if gap <= slack {
        return Err(Error::OnlyZeroSolution {
            lambda1: pair.lambda1,
        });
    }
    Ok(())
}

/// Solve the logistic problem: validate `λ > λ1(q0)`, run Newton from the
/// amplitude guess, and fall back to the monotone bracket (midpoint + Newton
/// polish) if Newton fails. The returned solution satisfies positivity, the
/// maximum-principle bound and the residual tolerance.
pub fn solve(problem: &LogisticProblem, opts: &LogisticOptions) -> Result<LogisticSolution> {
    let pair = principal_eigenpair(&problem.q0, &opts.eig)?;
    check_lambda_admissible(problem, &pair)?;
    let u0 = amplitude_initial_guess(problem, &pair)?;
    let mut solution = match newton_solve(problem, &u0, opts) {
        Ok(s) => s,
        Err(
            Error::CgBreakdown { .. }
            | Error::ConvergenceFailure { .. }
            | Error::LineSearchStagnation { .. },
        ) => {
            let bracket = monotone_bracket_with_pair(problem, &pair, opts)?;
            let mid = Field::lincomb(0.5, &bracket.u_min, 0.5, &bracket.u_max)?;
            let mut s = newton_solve(problem, &mid, opts)?;
            s.bracket_gap = Some(bracket.bracket_gap);
            s
        }
        Err(e) => return Err(e),
    };
    solution.lambda1_q0 = pair.lambda1;
    validate_solution(problem, &solution, opts)?;
    Ok(solution)
}

fn validate_solution(
    problem: &LogisticProblem,
    solution: &LogisticSolution,
    opts: &LogisticOptions,
) -> Result<()> {
    if let Some((node, &value)) = solution
        .u
        .values()
        .iter()
        .enumerate()
        .find(|(_, &v)| v <= 0.0)
    {
        return Err(Error::PositivityViolation { node, value });
    }
    let bound = problem.sup_bound();
    let slack = 1e-10_f64.max(10.0 * opts.residual_tol) * (1.0 + bound);
    let max_u = solution.max_u();
    if max_u > bound + slack {
        return Err(Error::ConvergenceFailure {
            what: "maximum-principle bound",
            iterations: solution.newton_iterations,
            residual: max_u - bound,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Grid;
    use rand::prelude::*;
    use std::f64::consts::PI;

    fn grid(n: usize) -> Grid {
        Grid::interval(0.0, 1.0, n).unwrap()
    }

    fn base_problem(n: usize) -> LogisticProblem {
        LogisticProblem::from_p(Field::zeros(grid(n)), 2.0 * PI * PI, 2.0).unwrap()
    }

    #[test]
    fn exponent_relations() {
        let g = grid(15);
        let p2 = LogisticProblem::from_p(Field::zeros(g), 10.0, 2.0).unwrap();
        assert_eq!(p2.gamma(), 4.0);
        let p3 = LogisticProblem::from_p(Field::zeros(g), 10.0, 3.0).unwrap();
        assert_eq!(p3.gamma(), 3.0);
        let g3 = LogisticProblem::from_gamma(Field::zeros(g), 10.0, 3.0).unwrap();
        assert_eq!(g3.p(), 3.0);
        assert!(LogisticProblem::from_p(Field::zeros(g), 10.0, 1.5).is_err());
        assert!(LogisticProblem::from_gamma(Field::zeros(g), 10.0, 4.5).is_err());
        assert!(LogisticProblem::from_gamma(Field::zeros(g), 10.0, 2.0).is_err());
    }

    #[test]
    fn amplitude_guess_scaling() {
        let opts = LogisticOptions::default();
        let g = grid(255);
        let pair = principal_eigenpair(&Field::zeros(g), &opts.eig).unwrap();
        // gap -> 0 makes the guess vanish
        let tiny = LogisticProblem::from_p(Field::zeros(g), pair.lambda1 + 1e-9, 2.0).unwrap();
        assert!(amplitude_initial_guess(&tiny, &pair).unwrap().norm_inf() < 1e-4);

        // q0 = 0, gamma = 4, lambda = 2 pi^2: c = sqrt((lambda - lambda1)/int phi^4)
        let prob = base_problem(255);
        let u0 = amplitude_initial_guess(&prob, &pair).unwrap();
        let c = u0.norm_inf() / pair.phi1.norm_inf();
        assert!((c - 2.5652).abs() < 1e-2, "c={c}");

        // doubling the gap scales the amplitude by 2^(1/(gamma-2))
        let prob2 =
            LogisticProblem::from_p(Field::zeros(g), pair.lambda1 + 2.0 * (2.0 * PI * PI - pair.lambda1), 2.0)
                .unwrap();
        let u02 = amplitude_initial_guess(&prob2, &pair).unwrap();
        let ratio = u02.norm_inf() / u0.norm_inf();
        assert!((ratio - 2.0f64.sqrt()).abs() <= 1e-12);
    }

    #[test]
    fn residual_at_zero_and_supersolution() {
        let prob = base_problem(127);
        let zero = Field::zeros(grid(127));
        let (f, clamped) = prob.residual(&zero).unwrap();
        assert_eq!(clamped, 0);
        assert!(f.values().iter().all(|&v| v == 0.0));

        let m = prob.sup_bound();
        assert!((m - (2.0 * PI * PI).sqrt()).abs() < 1e-12);
        let (fm, _) = prob.residual(&Field::constant(grid(127), m)).unwrap();
        // F(M) >= 0 up to rounding at interior nodes, strongly positive next
        // to the boundary
        assert!(fm.values().iter().all(|&v| v >= -1e-10));
        assert!(fm.values()[0] > 1.0);
    }

    #[test]
    fn newton_solves_reference_instance() {
        let opts = LogisticOptions::default();
        let prob = LogisticProblem::from_p(Field::zeros(grid(511)), 2.0 * PI * PI, 2.0).unwrap();
        let sol = solve(&prob, &opts).unwrap();
        assert!(sol.residual_norm <= 1e-10);
        assert!(sol.max_u() <= (2.0 * PI * PI).sqrt() + 1e-8);
        assert!(sol.u.values().iter().all(|&v| v > 0.0));
    }

    #[test]
    fn multi_start_uniqueness() {
        let opts = LogisticOptions::default();
        let prob = base_problem(127);
        let pair = principal_eigenpair(prob.q0(), &opts.eig).unwrap();
        let u0 = amplitude_initial_guess(&prob, &pair).unwrap();
        let reference = newton_solve(&prob, &u0, &opts).unwrap().u;
        for seed in 0..10u64 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let perturbed = u0.map(|v| v * rng.gen_range(0.5..2.0)).unwrap();
            let sol = newton_solve(&prob, &perturbed, &opts).unwrap();
            let diff = Field::lincomb(1.0, &sol.u, -1.0, &reference)
                .unwrap()
                .norm_inf();
            assert!(diff <= 1e-8, "seed {seed}: diff {diff:.3e}");
        }
    }

    #[test]
    fn rejects_lambda_at_or_below_lambda1() {
        let opts = LogisticOptions::default();
        let g = grid(127);
        let pair = principal_eigenpair(&Field::zeros(g), &opts.eig).unwrap();

        let at = LogisticProblem::from_p(Field::zeros(g), pair.lambda1, 2.0).unwrap();
        assert!(matches!(
            solve(&at, &opts),
            Err(Error::OnlyZeroSolution { .. })
        ));

        let below = LogisticProblem::from_p(Field::zeros(g), 0.5 * pair.lambda1, 2.0).unwrap();
        match solve(&below, &opts) {
            Err(Error::NoPositiveSolution { .. }) => {}
            other => panic!("expected NoPositiveSolution, got {other:?}"),
        }
    }

    #[test]
    fn monotone_bracket_agrees_with_newton() {
        let mut opts = LogisticOptions::default();
        opts.residual_tol = 1e-10;
        let prob = base_problem(127);
        let bracket = monotone_bracket_solve(&prob, &opts).unwrap();
        assert!(bracket.bracket_gap <= 1e-8, "gap={:.3e}", bracket.bracket_gap);
        assert!(bracket.monotonicity_violation <= 1e-10);

        let newton = solve(&prob, &opts).unwrap();
        for ((&lo, &hi), &un) in bracket
            .u_min
            .values()
            .iter()
            .zip(bracket.u_max.values())
            .zip(newton.u.values())
        {
            assert!(lo <= un + 1e-8 && un <= hi + 1e-8);
        }
    }

    #[test]
    fn shift_invariance() {
        let opts = LogisticOptions::default();
        let g = grid(127);
        let q0 = Field::from_fn(g, |x| 4.0 * (2.0 * PI * x[0]).sin()).unwrap();
        let lambda = 25.0;
        let c = -3.5;
        let a = solve(&LogisticProblem::from_p(q0.clone(), lambda, 2.0).unwrap(), &opts).unwrap();
        let b = solve(
            &LogisticProblem::from_p(q0.map(|v| v + c).unwrap(), lambda + c, 2.0).unwrap(),
            &opts,
        )
        .unwrap();
        let diff = Field::lincomb(1.0, &a.u, -1.0, &b.u).unwrap().norm_inf();
        assert!(diff <= 1e-10, "diff={diff:.3e}");
    }

    #[test]
    fn vanishing_branch_near_bifurcation() {
        let opts = LogisticOptions::default();
        let g = grid(127);
        let pair = principal_eigenpair(&Field::zeros(g), &opts.eig).unwrap();
        let mut norms = Vec::new();
        for k in 1..=5 {
            let gap = 10.0f64.powi(-k);
            let prob = LogisticProblem::from_p(Field::zeros(g), pair.lambda1 + gap, 2.0).unwrap();
            norms.push(solve(&prob, &opts).unwrap().u.norm_l2());
        }
        assert!(norms.windows(2).all(|w| w[1] < w[0]), "norms={norms:?}");
        assert!(norms[4] < 1e-2);
    }

    #[test]
    fn singular_potential_instance() {
        // q0 = -log(x (1-x)) is unbounded at the boundary but finite at
        // interior nodes; the solver must behave as on any finite sample.
        let opts = LogisticOptions::default();
        let g = grid(127);
        let q0 = Field::from_fn(g, |x| -(x[0] * (1.0 - x[0])).ln()).unwrap();
        let pair = principal_eigenpair(&q0, &opts.eig).unwrap();
        let prob = LogisticProblem::from_p(q0, pair.lambda1 + 5.0, 3.0).unwrap();
        let sol = solve(&prob, &opts).unwrap();
        assert!(sol.residual_norm <= 1e-10);
        assert!(sol.u.values().iter().all(|&v| v > 0.0));
        assert!(sol.max_u() <= prob.sup_bound() + 1e-8);
    }
}
