//! Principal eigenpair of -Δ + q on the unit interval and unit square,
//! checked against the closed-form eigenvalues of the difference stencil.

use specinv::linops::{stencil_lambda1_1d, EigOptions};
use specinv::mesh::{Field, Grid};
use specinv::spectral::principal_eigenpair;
use std::f64::consts::PI;

fn main() -> specinv::Result<()> {
    let opts = EigOptions::default();

    // 1D, q = 0: lambda1 -> pi^2 as h -> 0
    let grid = Grid::interval(0.0, 1.0, 511)?;
    let pair = principal_eigenpair(&Field::zeros(grid), &opts)?;
    let exact = stencil_lambda1_1d(grid.spacing(0));
    println!("1D interval, n = 511, q = 0");
    println!("  lambda1            = {:.12}", pair.lambda1);
    println!("  stencil closed form= {exact:.12}");
    println!("  pi^2               = {:.12}", PI * PI);
    println!(
        "  eigen-residual {:.2e} in {} iterations ({} CG steps)",
        pair.report.residual, pair.report.iterations, pair.report.cg_total_iterations
    );

    // 2D, q = 0: lambda1 -> 2 pi^2
    let grid2 = Grid::rectangle((0.0, 1.0), (0.0, 1.0), 63, 63)?;
    let pair2 = principal_eigenpair(&Field::zeros(grid2), &opts)?;
    println!("\n2D unit square, 63 x 63, q = 0");
    println!("  lambda1 = {:.8}   (2 pi^2 = {:.8})", pair2.lambda1, 2.0 * PI * PI);

    // a potential well lowers the eigenvalue
    let well = Field::from_fn(grid, |x| -40.0 * (-((x[0] - 0.5) / 0.1).powi(2)).exp())?;
    let pair3 = principal_eigenpair(&well, &opts)?;
    println!("\n1D Gaussian well (depth 40, width 0.1)");
    println!("  lambda1 = {:.8}", pair3.lambda1);
    println!("  phi1 positive everywhere: {}", pair3.phi1.min() > 0.0);
    Ok(())
}
