//! Run configuration: strict JSON parsing (unknown keys rejected), flag
//! overlays, validation, and the mapping onto solver options.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::{ExponentMode, MultiEigOptions};
use crate::inverse::InverseOptions;
use crate::linops::EigOptions;
use crate::logistic::LogisticOptions;
use crate::crosscheck::OptimizeOptions;
use crate::mesh::Grid;
use crate::potential::PotentialDescriptor;

/// Subcommand selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Command {
    #[serde(rename = "eig")]
    Eig,
    #[serde(rename = "forward")]
    Forward,
    #[serde(rename = "inverse")]
    Inverse,
    #[serde(rename = "crosscheck")]
    Crosscheck,
    #[serde(rename = "sweep-q0")]
    SweepQ0,
    #[serde(rename = "sweep-lambda")]
    SweepLambda,
    #[serde(rename = "converge")]
    Converge,
    #[serde(rename = "multi")]
    Multi,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Eig => "eig",
            Command::Forward => "forward",
            Command::Inverse => "inverse",
            Command::Crosscheck => "crosscheck",
            Command::SweepQ0 => "sweep-q0",
            Command::SweepLambda => "sweep-lambda",
            Command::Converge => "converge",
            Command::Multi => "multi",
        }
    }
}

/// All solver tolerances and iteration caps, with defaults.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub eig_tol: f64,
    pub eig_max_iterations: usize,
    pub cg_tol: f64,
    pub cg_max_iterations: usize,
    pub residual_tol: f64,
    pub newton_max_iterations: usize,
    pub monotone_max_iterations: usize,
    pub opt_tol_constraint: f64,
    pub opt_tol_gradient: f64,
    pub opt_max_outer: usize,
    pub opt_max_inner: usize,
    pub multi_tol: f64,
    pub multi_max_iterations: usize,
    pub verify_tol_phi: f64,
    /// Acceptable distance between the optimizer limit and the closed-form
    /// reconstruction in the crosscheck command.
    pub crosscheck_distance_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            eig_tol: 1e-10,
            eig_max_iterations: 400,
            cg_tol: 1e-12,
            cg_max_iterations: 200_000,
            residual_tol: 1e-10,
            newton_max_iterations: 100,
            monotone_max_iterations: 50_000,
            opt_tol_constraint: 1e-8,
            opt_tol_gradient: 1e-5,
            opt_max_outer: 60,
            opt_max_inner: 600,
            multi_tol: 1e-10,
            multi_max_iterations: 200,
            verify_tol_phi: 1e-8,
            crosscheck_distance_tol: 1e-3,
        }
    }
}

impl Tolerances {
    pub fn eig_options(&self) -> EigOptions {
        EigOptions {
            tol: self.eig_tol,
            max_iterations: self.eig_max_iterations,
            cg_max_iterations: self.cg_max_iterations,
        }
    }

    pub fn logistic_options(&self) -> LogisticOptions {
        LogisticOptions {
            residual_tol: self.residual_tol,
            newton_max_iterations: self.newton_max_iterations,
            cg_tol: self.cg_tol,
            cg_max_iterations: self.cg_max_iterations,
            monotone_max_iterations: self.monotone_max_iterations,
            eig: self.eig_options(),
        }
    }

    pub fn inverse_options(&self) -> InverseOptions {
        InverseOptions {
            logistic: self.logistic_options(),
            tol_lambda: None,
            tol_phi: self.verify_tol_phi,
        }
    }

    pub fn optimize_options(&self) -> OptimizeOptions {
        OptimizeOptions {
            tol_constraint: self.opt_tol_constraint,
            tol_gradient: self.opt_tol_gradient,
            max_outer: self.opt_max_outer,
            max_inner: self.opt_max_inner,
            rho0: 10.0,
            rho_growth: 5.0,
            eig: self.eig_options(),
        }
    }

    pub fn multi_options(&self) -> MultiEigOptions {
        MultiEigOptions {
            tol: self.multi_tol,
            max_iterations: self.multi_max_iterations,
            eig: self.eig_options(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    fn into_vec(self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v],
            OneOrMany::Many(v) => v,
        }
    }
}

/// Fully parsed run configuration. Unknown keys in the JSON are rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    pub dim: usize,
    /// Interior nodes per axis.
    pub n: Vec<usize>,
    /// Per-axis extents; defaults to the unit interval/square.
    #[serde(default)]
    pub extents: Option<Vec<(f64, f64)>>,
    pub q0: PotentialDescriptor,
    #[serde(default)]
    pub lambda: Option<f64>,
    /// Absolute λ schedule for sweep-lambda (strictly decreasing).
    #[serde(default)]
    pub lambda_schedule: Option<Vec<f64>>,
    /// Gap schedule for sweep-lambda relative to the computed λ1(q0)
    /// (strictly decreasing, positive).
    #[serde(default)]
    pub gap_schedule: Option<Vec<f64>>,
    #[serde(default)]
    pub p: Option<f64>,
    /// Direct nonlinearity exponent for `forward` (otherwise derived from p).
    #[serde(default)]
    pub gamma: Option<f64>,
    /// Perturbation direction for sweep-q0.
    #[serde(default)]
    pub direction: Option<PotentialDescriptor>,
    /// Delta schedule for sweep-q0 (strictly decreasing, nonnegative).
    #[serde(default)]
    pub deltas: Option<Vec<f64>>,
    /// Nested interior-node counts for converge.
    #[serde(default)]
    pub grids: Option<Vec<usize>>,
    /// Eigenvalue targets for multi (strictly increasing).
    #[serde(default)]
    pub targets: Option<Vec<f64>>,
    #[serde(default)]
    pub exponent_mode: Option<String>,
    /// Number of seeded starts for crosscheck.
    #[serde(default)]
    pub starts: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Raw shape of the JSON file, tolerant about scalar-vs-list for `n` and
/// `extents` before normalization.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    command: Command,
    dim: usize,
    n: OneOrMany<usize>,
    #[serde(default)]
    extents: Option<OneOrMany<(f64, f64)>>,
    q0: PotentialDescriptor,
    #[serde(default)]
    lambda: Option<f64>,
    #[serde(default)]
    lambda_schedule: Option<Vec<f64>>,
    #[serde(default)]
    gap_schedule: Option<Vec<f64>>,
    #[serde(default)]
    p: Option<f64>,
    #[serde(default)]
    gamma: Option<f64>,
    #[serde(default)]
    direction: Option<PotentialDescriptor>,
    #[serde(default)]
    deltas: Option<Vec<f64>>,
    #[serde(default)]
    grids: Option<Vec<usize>>,
    #[serde(default)]
    targets: Option<Vec<f64>>,
    #[serde(default)]
    exponent_mode: Option<String>,
    #[serde(default)]
    starts: Option<usize>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    tolerances: Tolerances,
    #[serde(default = "default_output_dir")]
    output_dir: PathBuf,
}

impl RunConfig {
    /// Parse a JSON config file in strict mode and validate it.
    pub fn from_json_file(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn from_json_str(text: &str) -> Result<RunConfig> {
        let raw: RawConfig = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("config rejected: {e}")))?;
        let config = RunConfig {
            command: raw.command,
            dim: raw.dim,
            n: raw.n.into_vec(),
            extents: raw.extents.map(|e| e.into_vec()),
            q0: raw.q0,
            lambda: raw.lambda,
            lambda_schedule: raw.lambda_schedule,
            gap_schedule: raw.gap_schedule,
            p: raw.p,
            gamma: raw.gamma,
            direction: raw.direction,
            deltas: raw.deltas,
            grids: raw.grids,
            targets: raw.targets,
            exponent_mode: raw.exponent_mode,
            starts: raw.starts,
            seed: raw.seed,
            tolerances: raw.tolerances,
            output_dir: raw.output_dir,
        };
        config.validate()?;
        Ok(config)
    }

    /// Per-axis extents with the unit-box default applied.
    pub fn extents_or_default(&self) -> Vec<(f64, f64)> {
        self.extents
            .clone()
            .unwrap_or_else(|| vec![(0.0, 1.0); self.dim])
    }

    /// Interior node counts, broadcasting a single count across axes.
    pub fn n_per_axis(&self) -> Vec<usize> {
        if self.n.len() == 1 && self.dim == 2 {
            vec![self.n[0], self.n[0]]
        } else {
            self.n.clone()
        }
    }

    pub fn build_grid(&self) -> Result<Grid> {
        Grid::build(&self.extents_or_default(), &self.n_per_axis())
    }

    pub fn exponent_mode(&self) -> Result<ExponentMode> {
        match &self.exponent_mode {
            None => Ok(ExponentMode::Matched),
            Some(s) => s.parse(),
        }
    }

    /// Effective p (default 2).
    pub fn p_value(&self) -> f64 {
        self.p.unwrap_or(2.0)
    }

    pub fn seed_value(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    /// Full validation: grid admissibility, p against the dimension,
    /// schedule monotonicity, per-command required keys, and seed presence
    /// for stochastic constructions.
    pub fn validate(&self) -> Result<()> {
        if self.dim != 1 && self.dim != 2 {
            return Err(Error::Config(format!("dim must be 1 or 2, got {}", self.dim)));
        }
        let n = self.n_per_axis();
        if n.len() != self.dim {
            return Err(Error::Config(format!(
                "n has {} entries for dim {}",
                self.n.len(),
                self.dim
            )));
        }
        if let Some(ext) = &self.extents {
            if ext.len() != self.dim {
                return Err(Error::Config(format!(
                    "extents has {} entries for dim {}",
                    ext.len(),
                    self.dim
                )));
            }
        }
        self.build_grid()?;

        let p = self.p_value();
        if !p.is_finite() || p < 2.0 {
            return Err(Error::Config(format!(
                "p = {p} is not admissible in dimension {}; the admissible range is [2, +inf)",
                self.dim
            )));
        }
        if let Some(g) = self.gamma {
            if !(2.0 < g && g <= 4.0) {
                return Err(Error::Config(format!(
                    "gamma = {g} is not admissible in dimension {}; need 2 < gamma <= 4",
                    self.dim
                )));
            }
        }

        let mut needs_seed = self.q0.is_stochastic()
            || self.direction.as_ref().is_some_and(|d| d.is_stochastic())
            || self.command == Command::Crosscheck;

        match self.command {
            Command::Eig => {}
            Command::Forward | Command::Inverse => {
                if self.lambda.is_none() {
                    return Err(Error::Config(format!(
                        "{} requires lambda",
                        self.command.name()
                    )));
                }
            }
            Command::Crosscheck => {
                if self.lambda.is_none() {
                    return Err(Error::Config("crosscheck requires lambda".into()));
                }
                needs_seed = true;
            }
            Command::SweepQ0 => {
                if self.lambda.is_none() || self.direction.is_none() || self.deltas.is_none() {
                    return Err(Error::Config(
                        "sweep-q0 requires lambda, direction and deltas".into(),
                    ));
                }
                let deltas = self.deltas.as_ref().expect("checked");
                if deltas.is_empty()
                    || deltas.windows(2).any(|w| w[1] >= w[0])
                    || deltas.iter().any(|&d| d < 0.0)
                {
                    return Err(Error::Config(
                        "deltas must be strictly decreasing and nonnegative".into(),
                    ));
                }
            }
            Command::SweepLambda => {
                match (&self.lambda_schedule, &self.gap_schedule) {
                    (Some(_), Some(_)) => {
                        return Err(Error::Config(
                            "give either lambda_schedule or gap_schedule, not both".into(),
                        ))
                    }
                    (None, None) => {
                        return Err(Error::Config(
                            "sweep-lambda requires lambda_schedule or gap_schedule".into(),
                        ))
                    }
                    (Some(s), None) => {
                        if s.is_empty() || s.windows(2).any(|w| w[1] >= w[0]) {
                            return Err(Error::Config(
                                "lambda_schedule must be strictly decreasing".into(),
                            ));
                        }
                    }
                    (None, Some(s)) => {
                        if s.is_empty()
                            || s.windows(2).any(|w| w[1] >= w[0])
                            || s.iter().any(|&g| g <= 0.0)
                        {
                            return Err(Error::Config(
                                "gap_schedule must be strictly decreasing and positive".into(),
                            ));
                        }
                    }
                }
            }
            Command::Converge => {
                let grids = self
                    .grids
                    .as_ref()
                    .ok_or_else(|| Error::Config("converge requires grids".into()))?;
                if grids.len() < 3 || grids.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::Config(
                        "converge needs >= 3 strictly increasing grid sizes".into(),
                    ));
                }
                if self.lambda.is_none() {
                    return Err(Error::Config("converge requires lambda".into()));
                }
            }
            Command::Multi => {
                let targets = self
                    .targets
                    .as_ref()
                    .ok_or_else(|| Error::Config("multi requires targets".into()))?;
                if targets.is_empty()
                    || targets.len() > 3
                    || targets.windows(2).any(|w| w[1] <= w[0])
                {
                    return Err(Error::Config(
                        "targets must be 1..=3 strictly increasing values".into(),
                    ));
                }
                self.exponent_mode()?;
            }
        }
        if needs_seed && self.seed.is_none() {
            return Err(Error::Config(
                "seed is required for stochastic constructions (random potentials, multi-start)"
                    .into(),
            ));
        }
        Ok(())
    }
}

/// Flag overlay applied on top of a config file (or used standalone).
#[derive(Debug, Clone, Default)]
pub struct ArgsOverlay {
    pub dim: Option<usize>,
    pub n: Option<Vec<usize>>,
    pub extents: Option<Vec<(f64, f64)>>,
    pub q0: Option<PotentialDescriptor>,
    pub lambda: Option<f64>,
    pub lambda_schedule: Option<Vec<f64>>,
    pub gap_schedule: Option<Vec<f64>>,
    pub p: Option<f64>,
    pub gamma: Option<f64>,
    pub direction: Option<PotentialDescriptor>,
    pub deltas: Option<Vec<f64>>,
    pub grids: Option<Vec<usize>>,
    pub targets: Option<Vec<f64>>,
    pub exponent_mode: Option<String>,
    pub starts: Option<usize>,
    pub seed: Option<u64>,
    pub tol: Option<f64>,
    pub maxit: Option<usize>,
    pub output_dir: Option<PathBuf>,
}

/// Assemble the run configuration from an optional config file plus flag
/// overrides. The file's `command` must agree with the subcommand.
pub fn parse_config(
    command: Command,
    config_path: Option<&Path>,
    overlay: &ArgsOverlay,
) -> Result<RunConfig> {
    let mut config = match config_path {
        Some(path) => {
            let c = RunConfig::from_json_file(path)?;
            if c.command != command {
                return Err(Error::Config(format!(
                    "config file says command = {}, but the {} subcommand was invoked",
                    c.command.name(),
                    command.name()
                )));
            }
            c
        }
        None => RunConfig {
            command,
            dim: overlay.dim.unwrap_or(1),
            n: overlay
                .n
                .clone()
                .ok_or_else(|| Error::Config("missing --n (or a --config file)".into()))?,
            extents: None,
            q0: overlay
                .q0
                .clone()
                .ok_or_else(|| Error::Config("missing --q0 (or a --config file)".into()))?,
            lambda: None,
            lambda_schedule: None,
            gap_schedule: None,
            p: None,
            gamma: None,
            direction: None,
            deltas: None,
            grids: None,
            targets: None,
            exponent_mode: None,
            starts: None,
            seed: None,
            tolerances: Tolerances::default(),
            output_dir: default_output_dir(),
        },
    };

    if let Some(v) = overlay.dim {
        config.dim = v;
    }
    if let Some(v) = &overlay.n {
        config.n = v.clone();
    }
    if let Some(v) = &overlay.extents {
        config.extents = Some(v.clone());
    }
    if let Some(v) = &overlay.q0 {
        config.q0 = v.clone();
    }
    if let Some(v) = overlay.lambda {
        config.lambda = Some(v);
    }
    if let Some(v) = &overlay.lambda_schedule {
        config.lambda_schedule = Some(v.clone());
    }
    if let Some(v) = &overlay.gap_schedule {
        config.gap_schedule = Some(v.clone());
    }
    if let Some(v) = overlay.p {
        config.p = Some(v);
    }
    if let Some(v) = overlay.gamma {
        config.gamma = Some(v);
    }
    if let Some(v) = &overlay.direction {
        config.direction = Some(v.clone());
    }
    if let Some(v) = &overlay.deltas {
        config.deltas = Some(v.clone());
    }
    if let Some(v) = &overlay.grids {
        config.grids = Some(v.clone());
    }
    if let Some(v) = &overlay.targets {
        config.targets = Some(v.clone());
    }
    if let Some(v) = &overlay.exponent_mode {
        config.exponent_mode = Some(v.clone());
    }
    if let Some(v) = overlay.starts {
        config.starts = Some(v);
    }
    if let Some(v) = overlay.seed {
        config.seed = Some(v);
    }
    if let Some(v) = overlay.tol {
        config.tolerances.residual_tol = v;
        config.tolerances.eig_tol = v.min(config.tolerances.eig_tol);
        config.tolerances.multi_tol = v;
    }
    if let Some(v) = overlay.maxit {
        match command {
            Command::Eig => config.tolerances.eig_max_iterations = v,
            Command::Crosscheck => config.tolerances.opt_max_outer = v,
            Command::Multi => config.tolerances.multi_max_iterations = v,
            _ => config.tolerances.newton_max_iterations = v,
        }
    }
    if let Some(v) = &overlay.output_dir {
        config.output_dir = v.clone();
    }
    config.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "command": "inverse",
        "dim": 1,
        "n": 511,
        "q0": "constant:0",
        "lambda": 19.74,
        "p": 2
    }"#;

    #[test]
    fn minimal_config_is_valid() {
        let c = RunConfig::from_json_str(MINIMAL).unwrap();
        assert_eq!(c.command, Command::Inverse);
        assert_eq!(c.n_per_axis(), vec![511]);
        assert_eq!(c.extents_or_default(), vec![(0.0, 1.0)]);
        assert_eq!(c.p_value(), 2.0);
        assert_eq!(c.output_dir, PathBuf::from("out"));
    }

    #[test]
    fn inadmissible_p_rejected_with_range() {
        let text = MINIMAL.replace("\"p\": 2", "\"p\": 1.5");
        let err = RunConfig::from_json_str(&text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, +inf)"), "{msg}");
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = MINIMAL.replace("\"p\": 2", "\"p\": 2, \"newton_tol\": 1e-9");
        let err = RunConfig::from_json_str(&text).unwrap_err();
        assert!(err.to_string().contains("unknown field"), "{err}");
    }

    #[test]
    fn stochastic_q0_requires_seed() {
        let text = MINIMAL.replace("constant:0", "fourier_random:amplitude=10,modes=4");
        let err = RunConfig::from_json_str(&text).unwrap_err();
        assert!(err.to_string().contains("seed"), "{err}");
        let with_seed = text.replace("\"lambda\": 19.74", "\"lambda\": 19.74, \"seed\": 7");
        RunConfig::from_json_str(&with_seed).unwrap();
    }

    #[test]
    fn schedule_monotonicity_enforced() {
        let text = r#"{
            "command": "sweep-lambda",
            "dim": 1, "n": 127, "q0": "constant:0", "p": 2,
            "gap_schedule": [1.0, 0.1, 0.2]
        }"#;
        let err = RunConfig::from_json_str(text).unwrap_err();
        assert!(err.to_string().contains("strictly decreasing"), "{err}");
    }

    #[test]
    fn overlay_and_command_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, MINIMAL).unwrap();
        let err = parse_config(Command::Eig, Some(&path), &ArgsOverlay::default()).unwrap_err();
        assert!(err.to_string().contains("subcommand"), "{err}");

        let mut overlay = ArgsOverlay::default();
        overlay.seed = Some(9);
        overlay.tol = Some(1e-8);
        let c = parse_config(Command::Inverse, Some(&path), &overlay).unwrap();
        assert_eq!(c.seed, Some(9));
        assert_eq!(c.tolerances.residual_tol, 1e-8);
    }
}
