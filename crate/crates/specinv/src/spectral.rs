//! Spectral services for the Schrödinger operator: the principal eigenpair of
//! `-Δ + q`, the derivative of `lambda1` with respect to the potential, and
//! probes for the concavity and continuity of `q -> lambda1(q)`.
//!
//! The derivative of the principal eigenvalue along a direction `h` is
//! `<phi1^2, h>` when `phi1` is L2-normalized; it needs only the eigenpair
//! already computed, never a re-solve per direction.

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linops::{EigOptions, EigSolveReport, SchrodingerOperator};
use crate::mesh::Field;

/// Principal eigenvalue and positive, L2-normalized eigenfunction.
#[derive(Debug, Clone)]
pub struct SpectralPair {
    pub lambda1: f64,
    pub phi1: Field,
    pub report: EigSolveReport,
}

/// Compute the principal eigenpair of `-Δ + q`.
pub fn principal_eigenpair(q: &Field, opts: &EigOptions) -> Result<SpectralPair> {
    let op = SchrodingerOperator::new(q.clone());
    let (lambda1, phi1, report) = op.smallest_eigenpair(opts)?;
    debug_assert!((phi1.inner_product(&phi1)? - 1.0).abs() < 1e-12);
    Ok(SpectralPair {
        lambda1,
        phi1,
        report,
    })
}

/// Derivative of `lambda1` at `q` along the direction `h`: `<phi1(q)^2, h>`.
pub fn eigenvalue_derivative(q: &Field, h: &Field, opts: &EigOptions) -> Result<f64> {
    if q.grid() != h.grid() {
        return Err(Error::GridMismatch);
    }
    let pair = principal_eigenpair(q, opts)?;
    derivative_from_pair(&pair, h)
}

/// Same as [`eigenvalue_derivative`] but reusing an existing eigenpair.
pub fn derivative_from_pair(pair: &SpectralPair, h: &Field) -> Result<f64> {
    let phi_sq = pair.phi1.map(|v| v * v)?;
    phi_sq.inner_product(h)
}

/// Concavity slack `lambda1(t q1 + (1-t) q2) - t lambda1(q1) - (1-t) lambda1(q2)`
/// at a single `t`. Nonnegative (up to solver tolerance) since `lambda1` is
/// concave in the potential; zero when `q1 - q2` is constant.
pub fn concavity_slack(q1: &Field, q2: &Field, t: f64, opts: &EigOptions) -> Result<f64> {
    if q1.grid() != q2.grid() {
        return Err(Error::GridMismatch);
    }
    let l1 = principal_eigenpair(q1, opts)?.lambda1;
    let l2 = principal_eigenpair(q2, opts)?.lambda1;
    concavity_slack_given(q1, q2, t, l1, l2, opts)
}

fn concavity_slack_given(
    q1: &Field,
    q2: &Field,
    t: f64,
    l1: f64,
    l2: f64,
    opts: &EigOptions,
) -> Result<f64> {
    let mix = Field::lincomb(t, q1, 1.0 - t, q2)?;
    let lmix = principal_eigenpair(&mix, opts)?.lambda1;
    Ok(lmix - t * l1 - (1.0 - t) * l2)
}

/// Result of a concavity probe over a uniform grid of interior `t` values.
#[derive(Debug, Clone, Serialize)]
pub struct ConcavityReport {
    pub inputs_hash: String,
    pub t_values: Vec<f64>,
    pub slacks: Vec<f64>,
    pub min_slack: f64,
    pub passed: bool,
}

/// Evaluate the concavity slack at `t_samples` uniformly spaced points of
/// `(0, 1)`; `passed` means every slack is at least `-10 * tol`.
pub fn concavity_probe(
    q1: &Field,
    q2: &Field,
    t_samples: usize,
    opts: &EigOptions,
) -> Result<ConcavityReport> {
    if q1.grid() != q2.grid() {
        return Err(Error::GridMismatch);
    }
    if q1 == q2 {
        return Err(Error::Config("concavity probe needs q1 != q2".into()));
    }
    if t_samples == 0 {
        return Err(Error::Config("concavity probe needs t_samples >= 1".into()));
    }
    let l1 = principal_eigenpair(q1, opts)?.lambda1;
    let l2 = principal_eigenpair(q2, opts)?.lambda1;
    let mut t_values = Vec::with_capacity(t_samples);
    let mut slacks = Vec::with_capacity(t_samples);
    for k in 1..=t_samples {
        let t = k as f64 / (t_samples + 1) as f64;
        t_values.push(t);
        slacks.push(concavity_slack_given(q1, q2, t, l1, l2, opts)?);
    }
    let min_slack = slacks.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(ConcavityReport {
        inputs_hash: hash_inputs(&[q1, q2], &[t_samples as f64, opts.tol]),
        t_values,
        slacks,
        min_slack,
        passed: min_slack >= -10.0 * opts.tol,
    })
}

/// Result of a continuity probe: `|lambda1(q + delta d) - lambda1(q)|` per
/// delta.
#[derive(Debug, Clone, Serialize)]
pub struct ContinuityReport {
    pub inputs_hash: String,
    pub deltas: Vec<f64>,
    pub differences: Vec<f64>,
    pub passed: bool,
}

/// Tabulate the eigenvalue response to shrinking perturbations
/// `q + delta * direction`. `deltas` must be strictly decreasing and
/// nonnegative. `passed` checks the Lipschitz envelope
/// `|diff| <= delta * |direction|_inf + 10 tol` and a monotone trend within
/// the same slack.
pub fn continuity_probe(
    q: &Field,
    direction: &Field,
    deltas: &[f64],
    opts: &EigOptions,
) -> Result<ContinuityReport> {
    if q.grid() != direction.grid() {
        return Err(Error::GridMismatch);
    }
    if deltas.is_empty() || deltas.windows(2).any(|w| w[1] >= w[0]) || deltas.iter().any(|&d| d < 0.0)
    {
        return Err(Error::Config(
            "continuity probe needs strictly decreasing nonnegative deltas".into(),
        ));
    }
    let base = principal_eigenpair(q, opts)?.lambda1;
    let dir_inf = direction.norm_inf();
    let mut differences = Vec::with_capacity(deltas.len());
    for &d in deltas {
        let qd = Field::lincomb(1.0, q, d, direction)?;
        differences.push((principal_eigenpair(&qd, opts)?.lambda1 - base).abs());
    }
    let slack = 10.0 * opts.tol;
    let envelope_ok = deltas
        .iter()
        .zip(&differences)
        .all(|(&d, &diff)| diff <= d * dir_inf + slack);
    let monotone_ok = differences.windows(2).all(|w| w[1] <= w[0] + slack);
    Ok(ContinuityReport {
        inputs_hash: hash_inputs(&[q, direction], deltas),
        deltas: deltas.to_vec(),
        differences,
        passed: envelope_ok && monotone_ok,
    })
}

/// Short content hash over the probe inputs (grid shape, field values,
/// scalar parameters); identifies a report with its data.
fn hash_inputs(fields: &[&Field], scalars: &[f64]) -> String {
    let mut hasher = Sha256::new();
    for f in fields {
        let g = f.grid();
        hasher.update((g.dim() as u64).to_le_bytes());
        for a in 0..g.dim() {
            hasher.update((g.n(a) as u64).to_le_bytes());
            hasher.update(g.extent(a).0.to_le_bytes());
            hasher.update(g.extent(a).1.to_le_bytes());
        }
        for &v in f.values() {
            hasher.update(v.to_le_bytes());
        }
    }
    for &s in scalars {
        hasher.update(s.to_le_bytes());
    }
    let digest = hasher.finalize();
    let mut out = String::with_capacity(16);
    for b in digest.iter().take(8) {
        out.push_str(&format!("{b:02x}"));
    }
    out
}
