//! Solve the logistic forward problem -Δu + q0 u = λu - u^(γ-1), u > 0,
//! and confirm the solution against the monotone sub-/supersolution bracket.

use specinv::logistic::{monotone_bracket_solve, solve, LogisticOptions, LogisticProblem};
use specinv::mesh::{Field, Grid};
use std::f64::consts::PI;

fn main() -> specinv::Result<()> {
    let opts = LogisticOptions::default();
    let grid = Grid::interval(0.0, 1.0, 255)?;
    let lambda = 2.0 * PI * PI;
    let problem = LogisticProblem::from_p(Field::zeros(grid), lambda, 2.0)?;

    let sol = solve(&problem, &opts)?;
    println!("q0 = 0, lambda = 2 pi^2, gamma = {}", problem.gamma());
    println!("  residual        = {:.3e}", sol.residual_norm);
    println!("  Newton steps    = {}", sol.newton_iterations);
    println!(
        "  max u           = {:.6} (bound {:.6})",
        sol.max_u(),
        problem.sup_bound()
    );
    println!("  positive nodes  = {}", sol.u.values().iter().all(|&v| v > 0.0));

    let bracket = monotone_bracket_solve(&problem, &opts)?;
    println!("\nmonotone bracket (independent of Newton):");
    println!(
        "  iterations up/down = {}/{}",
        bracket.iterations_min, bracket.iterations_max
    );
    println!("  bracket gap        = {:.3e}", bracket.bracket_gap);
    let dist = Field::lincomb(1.0, &bracket.u_min, -1.0, &sol.u)?.norm_inf();
    println!("  |u_min - u_newton| = {dist:.3e}");

    // the same problem is rejected below the principal eigenvalue
    let bad = LogisticProblem::from_p(Field::zeros(grid), 0.5 * PI * PI, 2.0)?;
    match solve(&bad, &opts) {
        Err(e) => println!("\nlambda below lambda1 is rejected: {e}"),
        Ok(_) => unreachable!("no positive solution exists there"),
    }
    Ok(())
}
