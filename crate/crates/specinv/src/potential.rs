//! Potential families for building base potentials `q0` and perturbation
//! directions from a short descriptor: constants, steps, Gaussian wells,
//! seeded random Fourier series, boundary-singular logs, and CSV files.
//!
//! Random families draw their coefficients from the seed alone, so the same
//! descriptor + seed samples the same underlying function on every grid —
//! required for grid-convergence studies.

use std::fmt;
use std::str::FromStr;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::mesh::{Field, Grid};

/// Descriptor of a potential family. Parses from strings like
/// `constant:0`, `step:left=0,right=5,split=0.5`,
/// `gaussian_well:depth=25,width=0.1`, `fourier_random:amplitude=10,modes=4`,
/// `log_singular:amplitude=1`, `csv:path/to/field.csv`.
#[derive(Debug, Clone, PartialEq)]
pub enum PotentialDescriptor {
    Constant {
        value: f64,
    },
    /// Two-level step along the first axis at `split` (fraction of the
    /// extent).
    Step {
        left: f64,
        right: f64,
        split: f64,
    },
    /// `-depth * exp(-r^2 / (2 width^2))` around the domain center.
    GaussianWell {
        depth: f64,
        width: f64,
    },
    /// Random Fourier series with coefficients `~ U(-1,1) * amplitude / k`,
    /// drawn deterministically from the run seed.
    FourierRandom {
        amplitude: f64,
        modes: usize,
    },
    /// `amplitude * (-ln(dist to boundary))`; unbounded on the boundary but
    /// finite at every interior node.
    LogSingular {
        amplitude: f64,
    },
    /// Load from a field CSV; the grid must match the run grid.
    Csv {
        path: String,
    },
}

impl PotentialDescriptor {
    /// True when sampling draws random numbers (and therefore needs a seed).
    pub fn is_stochastic(&self) -> bool {
        matches!(self, PotentialDescriptor::FourierRandom { .. })
    }

    /// Sample the potential on `grid`. `seed` feeds the random families;
    /// deterministic families ignore it.
    pub fn sample(&self, grid: &Grid, seed: u64) -> Result<Field> {
        match self {
            PotentialDescriptor::Constant { value } => Ok(Field::constant(*grid, *value)),
            PotentialDescriptor::Step { left, right, split } => {
                let (a, b) = grid.extent(0);
                let cut = a + split * (b - a);
                Field::from_fn(*grid, |x| if x[0] < cut { *left } else { *right })
            }
            PotentialDescriptor::GaussianWell { depth, width } => {
                if *width <= 0.0 {
                    return Err(Error::Config("gaussian_well width must be positive".into()));
                }
                let center: Vec<f64> = (0..grid.dim())
                    .map(|a| {
                        let (lo, hi) = grid.extent(a);
                        0.5 * (lo + hi)
                    })
                    .collect();
                let w2 = 2.0 * width * width;
                Field::from_fn(*grid, |x| {
                    let r2: f64 = x
                        .iter()
                        .zip(&center)
                        .map(|(xi, ci)| (xi - ci) * (xi - ci))
                        .sum();
                    -depth * (-r2 / w2).exp()
                })
            }
            PotentialDescriptor::FourierRandom { amplitude, modes } => {
                if *modes == 0 {
                    return Err(Error::Config("fourier_random needs modes >= 1".into()));
                }
                // Coefficients depend only on the seed and mode count, never
                // on the grid.
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let dim = grid.dim();
                let mut coeffs = Vec::new();
                for k in 1..=*modes {
                    let mut axis = Vec::new();
                    for _ in 0..dim {
                        let a: f64 = rng.gen_range(-1.0..1.0);
                        let b: f64 = rng.gen_range(-1.0..1.0);
                        axis.push((a * amplitude / k as f64, b * amplitude / k as f64));
                    }
                    coeffs.push(axis);
                }
                let extents: Vec<(f64, f64)> = (0..dim).map(|a| grid.extent(a)).collect();
                Field::from_fn(*grid, |x| {
                    let mut v = 0.0;
                    for (k, axis) in coeffs.iter().enumerate() {
                        let k1 = (k + 1) as f64;
                        for (a, ((sa, ca), (lo, hi))) in axis.iter().zip(&extents).enumerate() {
                            let t = (x[a] - lo) / (hi - lo);
                            let phase = 2.0 * std::f64::consts::PI * k1 * t;
                            v += sa * phase.sin() + ca * phase.cos();
                        }
                    }
                    v
                })
            }
            PotentialDescriptor::LogSingular { amplitude } => Field::from_fn(*grid, |x| {
                let mut dist = f64::INFINITY;
                for (a, &xi) in x.iter().enumerate() {
                    let (lo, hi) = grid.extent(a);
                    dist = dist.min(xi - lo).min(hi - xi);
                }
                amplitude * -dist.ln()
            }),
            PotentialDescriptor::Csv { path } => {
                let f = Field::read_csv(std::path::Path::new(path))?;
                if f.grid() != grid {
                    return Err(Error::Config(format!(
                        "potential file {path} lives on a different grid than the run grid"
                    )));
                }
                Ok(f)
            }
        }
    }
}

impl fmt::Display for PotentialDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PotentialDescriptor::Constant { value } => write!(f, "constant:{value}"),
            PotentialDescriptor::Step { left, right, split } => {
                write!(f, "step:left={left},right={right},split={split}")
            }
            PotentialDescriptor::GaussianWell { depth, width } => {
                write!(f, "gaussian_well:depth={depth},width={width}")
            }
            PotentialDescriptor::FourierRandom { amplitude, modes } => {
                write!(f, "fourier_random:amplitude={amplitude},modes={modes}")
            }
            PotentialDescriptor::LogSingular { amplitude } => {
                write!(f, "log_singular:amplitude={amplitude}")
            }
            PotentialDescriptor::Csv { path } => write!(f, "csv:{path}"),
        }
    }
}

fn parse_kv(body: &str, family: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    if body.is_empty() {
        return Ok(out);
    }
    for part in body.split(',') {
        let (k, v) = part.split_once('=').ok_or_else(|| {
            Error::Parse(format!("{family}: expected key=value, got {part:?}"))
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn get_f64(kv: &[(String, String)], key: &str, default: Option<f64>, family: &str) -> Result<f64> {
    match kv.iter().find(|(k, _)| k == key) {
        Some((_, v)) => v
            .parse::<f64>()
            .map_err(|e| Error::Parse(format!("{family}.{key}: {e}"))),
        None => default.ok_or_else(|| Error::Parse(format!("{family}: missing {key}"))),
    }
}

impl FromStr for PotentialDescriptor {
    type Err = Error;

    fn from_str(s: &str) -> Result<PotentialDescriptor> {
        let (family, body) = s.split_once(':').unwrap_or((s, ""));
        match family {
            "constant" => {
                // accept both "constant:0" and "constant:value=0"
                let value = if body.contains('=') {
                    get_f64(&parse_kv(body, family)?, "value", None, family)?
                } else if body.is_empty() {
                    return Err(Error::Parse("constant: missing value".into()));
                } else {
                    body.parse::<f64>()
                        .map_err(|e| Error::Parse(format!("constant: {e}")))?
                };
                Ok(PotentialDescriptor::Constant { value })
            }
            "step" => {
                let kv = parse_kv(body, family)?;
                Ok(PotentialDescriptor::Step {
                    left: get_f64(&kv, "left", None, family)?,
                    right: get_f64(&kv, "right", None, family)?,
                    split: get_f64(&kv, "split", Some(0.5), family)?,
                })
            }
            "gaussian_well" => {
                let kv = parse_kv(body, family)?;
                Ok(PotentialDescriptor::GaussianWell {
                    depth: get_f64(&kv, "depth", None, family)?,
                    width: get_f64(&kv, "width", None, family)?,
                })
            }
            "fourier_random" => {
                let kv = parse_kv(body, family)?;
                let modes = get_f64(&kv, "modes", Some(4.0), family)? as usize;
                Ok(PotentialDescriptor::FourierRandom {
                    amplitude: get_f64(&kv, "amplitude", None, family)?,
                    modes,
                })
            }
            "log_singular" => {
                let kv = parse_kv(body, family)?;
                Ok(PotentialDescriptor::LogSingular {
                    amplitude: get_f64(&kv, "amplitude", Some(1.0), family)?,
                })
            }
            "csv" => {
                if body.is_empty() {
                    return Err(Error::Parse("csv: missing path".into()));
                }
                Ok(PotentialDescriptor::Csv {
                    path: body.to_string(),
                })
            }
            other => Err(Error::Parse(format!("unknown potential family {other:?}"))),
        }
    }
}

impl Serialize for PotentialDescriptor {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for PotentialDescriptor {
    fn deserialize<D: Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<PotentialDescriptor, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display_round_trip() {
        for s in [
            "constant:0",
            "step:left=0,right=5,split=0.5",
            "gaussian_well:depth=25,width=0.1",
            "fourier_random:amplitude=10,modes=4",
            "log_singular:amplitude=1",
            "csv:some/field.csv",
        ] {
            let d: PotentialDescriptor = s.parse().unwrap();
            let back: PotentialDescriptor = d.to_string().parse().unwrap();
            assert_eq!(d, back, "{s}");
        }
        assert!("gaussian:depth=1".parse::<PotentialDescriptor>().is_err());
        assert!("gaussian_well:depth=1".parse::<PotentialDescriptor>().is_err());
    }

    #[test]
    fn fourier_sampling_is_grid_independent() {
        let d: PotentialDescriptor = "fourier_random:amplitude=8,modes=3".parse().unwrap();
        let fine = Grid::interval(0.0, 1.0, 255).unwrap();
        let coarse = Grid::interval(0.0, 1.0, 127).unwrap();
        let qf = d.sample(&fine, 42).unwrap();
        let qc = d.sample(&coarse, 42).unwrap();
        // same underlying function: the restriction of the fine sample equals
        // the coarse sample exactly
        let r = qf.restrict_to(&coarse).unwrap();
        assert_eq!(r.values(), qc.values());
        // different seed, different function
        let other = d.sample(&fine, 43).unwrap();
        assert_ne!(qf.values(), other.values());
    }

    #[test]
    fn log_singular_is_finite_and_positive_on_unit_interval() {
        let d: PotentialDescriptor = "log_singular:amplitude=1".parse().unwrap();
        let g = Grid::interval(0.0, 1.0, 255).unwrap();
        let q = d.sample(&g, 0).unwrap();
        assert!(q.values().iter().all(|v| v.is_finite()));
        assert!(q.min() > 0.5 && q.max() < 10.0);
    }

    #[test]
    fn gaussian_well_depth() {
        let d = PotentialDescriptor::GaussianWell {
            depth: 30.0,
            width: 0.1,
        };
        let g = Grid::interval(0.0, 1.0, 255).unwrap();
        let q = d.sample(&g, 0).unwrap();
        assert!(q.min() >= -30.0 && q.min() < -29.9);
        assert!(q.max() <= 0.0);
    }

    #[test]
    fn step_split() {
        let d: PotentialDescriptor = "step:left=1,right=-2,split=0.25".parse().unwrap();
        let g = Grid::interval(0.0, 1.0, 127).unwrap();
        let q = d.sample(&g, 0).unwrap();
        let n_left = q.values().iter().filter(|&&v| v == 1.0).count();
        let n_right = q.values().iter().filter(|&&v| v == -2.0).count();
        assert_eq!(n_left + n_right, 127);
        assert!((n_left as f64) / 127.0 > 0.2 && (n_left as f64) / 127.0 < 0.3);
    }

    #[test]
    fn serde_as_string() {
        let d: PotentialDescriptor = "gaussian_well:depth=25,width=0.1".parse().unwrap();
        let js = serde_json::to_string(&d).unwrap();
        assert_eq!(js, "\"gaussian_well:depth=25,width=0.1\"");
        let back: PotentialDescriptor = serde_json::from_str(&js).unwrap();
        assert_eq!(d, back);
    }
}
