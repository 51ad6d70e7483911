//! Closest-potential reconstruction for Schrödinger operators.
//!
//! Given a base potential `q0` on an interval or rectangle with Dirichlet
//! conditions and a target principal eigenvalue `λ > λ1(q0)`, this crate
//! computes the potential closest to `q0` in the `Lp` norm whose principal
//! eigenvalue equals `λ`, via the constructive route
//!
//! ```text
//! solve  -Δu + q0 u = λ u - u^(2p/(p-1) - 1),  u > 0,  u|∂Ω = 0
//! set    q̂ = q0 + u^(2/(p-1))
//! ```
//!
//! and then verifies the answer independently: a from-scratch eigensolve of
//! `q̂` must return `λ` with eigenfunction `u/|u|`, and a constrained
//! optimizer over grid potentials must converge to the same `q̂`.
//!
//! ## Modules
//!
//! - [`mesh`] — uniform Dirichlet grids and interior-node fields
//! - [`linops`] — matrix-free `-Δ + q`, CG, shifted inverse power iteration
//! - [`spectral`] — principal eigenpair, eigenvalue derivative, concavity
//!   and continuity probes
//! - [`logistic`] — the semilinear forward problem (damped Newton +
//!   sub-/supersolution bracket)
//! - [`inverse`] — the reconstruction pipeline and its verification
//! - [`crosscheck`] — augmented-Lagrangian minimization over potentials
//! - [`experiments`] — stability sweeps, grid-convergence studies, and the
//!   exploratory multi-eigenvalue system
//! - [`potential`] — potential families (`constant:…`, `gaussian_well:…`,
//!   `fourier_random:…`, `log_singular:…`, `step:…`, `csv:…`)
//! - [`config`] / [`driver`] — batch-run configuration and artifact writer
//!   behind the `specinv` binary
//!
//! ## Examples
//!
//! One runnable example per capability:
//!
//! ```bash
//! cargo run --example eigenvalue                # principal eigenpair vs closed form
//! cargo run --example forward_logistic          # positive solution of the forward problem
//! cargo run --example inverse_reconstruction    # q̂ from (q0, λ, p) + verification
//! cargo run --example optimizer_crosscheck      # optimizer vs closed-form q̂
//! cargo run --example bifurcation_branch        # |û| against λ down to λ1(q0)
//! cargo run --example stability_sweep           # q̂ response to q0 perturbations
//! cargo run --example grid_convergence          # discretization orders
//! cargo run --example two_eigenvalue_experiment # coupled two-target system
//! ```
//!
//! ## Quick start
//!
//! ```no_run
//! use specinv::inverse::{solve_inverse, InverseOptions};
//! use specinv::mesh::{Field, Grid};
//!
//! let grid = Grid::interval(0.0, 1.0, 255).unwrap();
//! let q0 = Field::zeros(grid);
//! let lambda = 2.0 * std::f64::consts::PI.powi(2);
//! let r = solve_inverse(&q0, lambda, 2.0, &InverseOptions::default()).unwrap();
//! assert!(r.verify.passed);
//! println!("lambda1(q_hat) = {}", r.verify.lambda_achieved);
//! ```
//!
//! The batch CLI mirrors the same capabilities as subcommands (`eig`,
//! `forward`, `inverse`, `crosscheck`, `sweep-q0`, `sweep-lambda`,
//! `converge`, `multi`); see the README for the config schema.

pub mod config;
pub mod crosscheck;
pub mod driver;
pub mod error;
pub mod experiments;
pub mod inverse;
pub mod linops;
pub mod logistic;
pub mod mesh;
pub mod potential;
pub mod spectral;

pub use error::{Error, Result};
