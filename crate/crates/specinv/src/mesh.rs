//! Uniform Dirichlet grids on intervals and rectangles, and fields living on
//! their interior nodes.
//!
//! Boundary nodes are never stored: a [`Field`] represents a function that
//! vanishes on the boundary, so the Dirichlet condition is structural. Node
//! ordering is lexicographic with x fastest. All quadrature is the composite
//! trapezoid rule, which on interior nodes of a zero-boundary function reduces
//! to `weight * sum(values)` with `weight` the cell volume.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Uniform grid over an interval (dim 1) or axis-aligned rectangle (dim 2).
///
/// Only interior nodes are indexed; axis `a` has `n[a]` of them with spacing
/// `h[a] = (b - a) / (n[a] + 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    dim: usize,
    n: [usize; 2],
    extents: [(f64, f64); 2],
    h: [f64; 2],
    weight: f64,
}

impl Grid {
    /// Build a grid; `extents` and `n` must both have length 1 or 2, with at
    /// least 3 interior nodes per axis.
    pub fn build(extents: &[(f64, f64)], n: &[usize]) -> Result<Grid> {
        if extents.len() != n.len() || extents.is_empty() || extents.len() > 2 {
            return Err(Error::Config(format!(
                "grid dimension must be 1 or 2 (got {} extents, {} node counts)",
                extents.len(),
                n.len()
            )));
        }
        let dim = extents.len();
        let mut g = Grid {
            dim,
            n: [1, 1],
            extents: [(0.0, 1.0), (0.0, 1.0)],
            h: [1.0, 1.0],
            weight: 1.0,
        };
        for a in 0..dim {
            let (lo, hi) = extents[a];
            if !lo.is_finite() || !hi.is_finite() || hi <= lo {
                return Err(Error::Config(format!(
                    "degenerate extent ({lo}, {hi}) on axis {a}"
                )));
            }
            if n[a] < 3 {
                return Err(Error::Config(format!(
                    "need at least 3 interior nodes per axis (got {} on axis {a})",
                    n[a]
                )));
            }
            g.n[a] = n[a];
            g.extents[a] = (lo, hi);
            g.h[a] = (hi - lo) / (n[a] + 1) as f64;
        }
        g.weight = (0..dim).map(|a| g.h[a]).product();
        Ok(g)
    }

    /// 1D grid on `(a, b)` with `n` interior nodes.
    pub fn interval(a: f64, b: f64, n: usize) -> Result<Grid> {
        Grid::build(&[(a, b)], &[n])
    }

    /// 2D grid on `(ax, bx) x (ay, by)` with `nx * ny` interior nodes.
    pub fn rectangle(x: (f64, f64), y: (f64, f64), nx: usize, ny: usize) -> Result<Grid> {
        Grid::build(&[x, y], &[nx, ny])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Interior node count along `axis`.
    pub fn n(&self, axis: usize) -> usize {
        self.n[axis]
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.h[axis]
    }

    pub fn extent(&self, axis: usize) -> (f64, f64) {
        self.extents[axis]
    }

    /// Quadrature weight per interior node (cell volume).
    pub fn weight(&self) -> f64 {
        self.weight
    }

    /// Total number of interior nodes.
    pub fn node_count(&self) -> usize {
        self.n[0] * self.n[1]
    }

    /// Physical coordinates of interior node `idx` (lexicographic, x fastest).
    /// For dim 1 the second entry is unused.
    pub fn coords(&self, idx: usize) -> [f64; 2] {
        let ix = idx % self.n[0];
        let iy = idx / self.n[0];
        [
            self.extents[0].0 + (ix + 1) as f64 * self.h[0],
            self.extents[1].0 + (iy + 1) as f64 * self.h[1],
        ]
    }

    /// Per-axis refinement ratio of `self` relative to a coarser nested grid,
    /// or an error when the grids are not nested.
    pub fn nesting_ratio(&self, coarse: &Grid) -> Result<[usize; 2]> {
        if self.dim != coarse.dim {
            return Err(Error::NotNested("dimension mismatch".into()));
        }
        let mut ratio = [1usize, 1];
        for a in 0..self.dim {
            if self.extents[a] != coarse.extents[a] {
                return Err(Error::NotNested(format!("extent mismatch on axis {a}")));
            }
            let fine = self.n[a] + 1;
            let crs = coarse.n[a] + 1;
            if fine % crs != 0 {
                return Err(Error::NotNested(format!(
                    "axis {a}: {} + 1 is not a multiple of {} + 1",
                    self.n[a], coarse.n[a]
                )));
            }
            ratio[a] = fine / crs;
        }
        Ok(ratio)
    }
}

/// Real-valued function sampled at the interior nodes of a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

fn check_finite(values: &[f64]) -> Result<()> {
    for (i, &v) in values.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite { node: i, value: v });
        }
    }
    Ok(())
}

impl Field {
    pub fn zeros(grid: Grid) -> Field {
        Field {
            grid,
            values: vec![0.0; grid.node_count()],
        }
    }

    pub fn constant(grid: Grid, c: f64) -> Field {
        Field {
            grid,
            values: vec![c; grid.node_count()],
        }
    }

    /// Sample `f` at the interior nodes; `f` receives the physical coordinates
    /// (length = grid dimension).
    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> f64) -> Result<Field> {
        let mut values = Vec::with_capacity(grid.node_count());
        for idx in 0..grid.node_count() {
            let x = grid.coords(idx);
            values.push(f(&x[..grid.dim()]));
        }
        check_finite(&values)?;
        Ok(Field { grid, values })
    }

    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Field> {
        if values.len() != grid.node_count() {
            return Err(Error::Config(format!(
                "value count {} does not match grid node count {}",
                values.len(),
                grid.node_count()
            )));
        }
        check_finite(&values)?;
        Ok(Field { grid, values })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Nodewise application of `f`; rejects non-finite outputs with the node
    /// index.
    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Result<Field> {
        let values: Vec<f64> = self.values.iter().map(|&v| f(v)).collect();
        check_finite(&values)?;
        Ok(Field {
            grid: self.grid,
            values,
        })
    }

    /// `a * f + b * g`.
    pub fn lincomb(a: f64, f: &Field, b: f64, g: &Field) -> Result<Field> {
        if f.grid != g.grid {
            return Err(Error::GridMismatch);
        }
        let values: Vec<f64> = f
            .values
            .iter()
            .zip(&g.values)
            .map(|(&x, &y)| a * x + b * y)
            .collect();
        check_finite(&values)?;
        Ok(Field {
            grid: f.grid,
            values,
        })
    }

    /// Quadrature-weighted L2 scalar product.
    pub fn inner_product(&self, other: &Field) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        let s: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&x, &y)| x * y)
            .sum();
        Ok(self.grid.weight * s)
    }

    /// `(weight * sum |f|^p)^(1/p)` for `p >= 1`.
    pub fn lp_norm(&self, p: f64) -> Result<f64> {
        if !p.is_finite() || p < 1.0 {
            return Err(Error::Config(format!("lp norm needs finite p >= 1, got {p}")));
        }
        let s: f64 = if p == 2.0 {
            self.values.iter().map(|&v| v * v).sum()
        } else {
            self.values.iter().map(|&v| v.abs().powf(p)).sum()
        };
        Ok((self.grid.weight * s).powf(1.0 / p))
    }

    /// Quadrature-weighted L2 norm.
    pub fn norm_l2(&self) -> f64 {
        let s: f64 = self.values.iter().map(|&v| v * v).sum();
        (self.grid.weight * s).sqrt()
    }

    pub fn norm_inf(&self) -> f64 {
        self.values.iter().fold(0.0, |m, &v| m.max(v.abs()))
    }

    /// Discrete H1 seminorm: square root of the Dirichlet energy of the
    /// 3-/5-point stencil, boundary edges included (boundary values are 0).
    pub fn h1_seminorm(&self) -> f64 {
        let g = &self.grid;
        let (nx, ny) = (g.n[0], g.n[1]);
        let mut energy = 0.0;
        // x-direction edges
        let cx = g.weight / (g.h[0] * g.h[0]);
        for iy in 0..ny {
            let row = iy * nx;
            let mut prev = 0.0;
            for ix in 0..nx {
                let v = self.values[row + ix];
                let d = v - prev;
                energy += cx * d * d;
                prev = v;
            }
            energy += cx * prev * prev; // edge to the right boundary
        }
        if g.dim == 2 {
            let cy = g.weight / (g.h[1] * g.h[1]);
            for ix in 0..nx {
                let mut prev = 0.0;
                for iy in 0..ny {
                    let v = self.values[iy * nx + ix];
                    let d = v - prev;
                    energy += cy * d * d;
                    prev = v;
                }
                energy += cy * prev * prev;
            }
        }
        energy.sqrt()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Injection onto a coarser nested grid (sampling at coincident nodes).
    pub fn restrict_to(&self, coarse: &Grid) -> Result<Field> {
        let ratio = self.grid.nesting_ratio(coarse)?;
        let nxf = self.grid.n[0];
        let mut values = Vec::with_capacity(coarse.node_count());
        for jy in 0..coarse.n[1] {
            let fy = (jy + 1) * ratio[1] - 1;
            for jx in 0..coarse.n[0] {
                let fx = (jx + 1) * ratio[0] - 1;
                values.push(self.values[fy * nxf + fx]);
            }
        }
        Ok(Field {
            grid: *coarse,
            values,
        })
    }

    /// Write the field as CSV: a `#` header carrying the grid, then one value
    /// per line in lexicographic order. Values round-trip bit-exactly.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        let g = &self.grid;
        let n = (0..g.dim)
            .map(|a| g.n[a].to_string())
            .collect::<Vec<_>>()
            .join(",");
        let ext = (0..g.dim)
            .map(|a| format!("{}:{}", g.extents[a].0, g.extents[a].1))
            .collect::<Vec<_>>()
            .join(",");
        writeln!(out, "# dim={} n={} extents={}", g.dim, n, ext).expect("string write");
        for v in &self.values {
            writeln!(out, "{v}").expect("string write");
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    /// Read a field written by [`Field::write_csv`].
    pub fn read_csv(path: &Path) -> Result<Field> {
        let text = std::fs::read_to_string(path)?;
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty field file".into()))?;
        let header = header
            .strip_prefix('#')
            .ok_or_else(|| Error::Parse("missing # header".into()))?
            .trim();
        let mut dim = None;
        let mut ns: Vec<usize> = Vec::new();
        let mut extents: Vec<(f64, f64)> = Vec::new();
        for token in header.split_whitespace() {
            let (key, val) = token
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("bad header token {token}")))?;
            match key {
                "dim" => {
                    dim = Some(
                        val.parse::<usize>()
                            .map_err(|e| Error::Parse(format!("dim: {e}")))?,
                    )
                }
                "n" => {
                    for part in val.split(',') {
                        ns.push(
                            part.parse::<usize>()
                                .map_err(|e| Error::Parse(format!("n: {e}")))?,
                        );
                    }
                }
                "extents" => {
                    for part in val.split(',') {
                        let (a, b) = part
                            .split_once(':')
                            .ok_or_else(|| Error::Parse(format!("bad extent {part}")))?;
                        extents.push((
                            a.parse::<f64>()
                                .map_err(|e| Error::Parse(format!("extent: {e}")))?,
                            b.parse::<f64>()
                                .map_err(|e| Error::Parse(format!("extent: {e}")))?,
                        ));
                    }
                }
                _ => return Err(Error::Parse(format!("unknown header key {key}"))),
            }
        }
        let dim = dim.ok_or_else(|| Error::Parse("header missing dim".into()))?;
        if ns.len() != dim || extents.len() != dim {
            return Err(Error::Parse("header n/extents inconsistent with dim".into()));
        }
        let grid = Grid::build(&extents, &ns)?;
        let mut values = Vec::with_capacity(grid.node_count());
        for line in lines {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            values.push(
                line.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("value: {e}")))?,
            );
        }
        Field::from_values(grid, values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn build_1d_spacing_and_weight() {
        let g = Grid::interval(0.0, 1.0, 1023).unwrap();
        assert_eq!(g.spacing(0), 1.0 / 1024.0);
        assert_eq!(g.weight(), 1.0 / 1024.0);
        assert_eq!(g.node_count(), 1023);
    }

    #[test]
    fn build_2d_counts_and_weight() {
        let g = Grid::rectangle((0.0, 1.0), (0.0, 1.0), 63, 63).unwrap();
        assert_eq!(g.node_count(), 3969);
        assert_eq!(g.weight(), 1.0 / 4096.0);
    }

    #[test]
    fn degenerate_extent_rejected() {
        assert!(Grid::interval(0.0, 0.0, 100).is_err());
        assert!(Grid::interval(1.0, 0.0, 100).is_err());
        assert!(Grid::interval(0.0, 1.0, 2).is_err());
    }

    #[test]
    fn inner_product_of_ones() {
        let g = Grid::interval(0.0, 1.0, 1023).unwrap();
        let f = Field::constant(g, 1.0);
        assert!((f.inner_product(&f).unwrap() - 1023.0 / 1024.0).abs() < 1e-15);
    }

    #[test]
    fn inner_product_antisymmetric_pairing_vanishes() {
        let g = Grid::interval(0.0, 1.0, 101).unwrap();
        // f even, g odd about the midpoint: f_i * g_i is antisymmetric.
        let f = Field::from_fn(g, |x| (PI * x[0]).sin()).unwrap();
        let h = Field::from_fn(g, |x| x[0] - 0.5).unwrap();
        assert!(f.inner_product(&h).unwrap().abs() < 1e-14);
    }

    #[test]
    fn inner_product_sin_squared() {
        let g = Grid::interval(0.0, 1.0, 1023).unwrap();
        let f = Field::from_fn(g, |x| (PI * x[0]).sin()).unwrap();
        assert!((f.inner_product(&f).unwrap() - 0.5).abs() <= 1e-3);
    }

    #[test]
    fn inner_product_grid_mismatch() {
        let f = Field::constant(Grid::interval(0.0, 1.0, 15).unwrap(), 1.0);
        let g = Field::constant(Grid::interval(0.0, 1.0, 31).unwrap(), 1.0);
        assert!(matches!(
            f.inner_product(&g),
            Err(Error::GridMismatch)
        ));
    }

    #[test]
    fn lp_norm_cases() {
        let g = Grid::interval(0.0, 1.0, 1023).unwrap();
        let two = Field::constant(g, 2.0);
        let expect = 2.0 * (1023.0_f64 / 1024.0).sqrt();
        assert!((two.lp_norm(2.0).unwrap() - expect).abs() < 1e-12);

        assert_eq!(Field::zeros(g).lp_norm(7.3).unwrap(), 0.0);

        let x = Field::from_fn(g, |x| x[0]).unwrap();
        assert!((x.lp_norm(3.0).unwrap() - 0.25_f64.powf(1.0 / 3.0)).abs() <= 1e-3);

        assert!(x.lp_norm(0.5).is_err());
        assert!(x.lp_norm(f64::INFINITY).is_err());
    }

    #[test]
    fn map_and_lincomb() {
        let g = Grid::interval(0.0, 1.0, 15).unwrap();
        let f = Field::constant(g, 3.0);
        let sq = f.map(|v| v * v).unwrap();
        assert!(sq.values().iter().all(|&v| v == 9.0));

        let z = Field::lincomb(1.0, &f, -1.0, &f).unwrap();
        assert!(z.values().iter().all(|&v| v == 0.0));

        // exponent 2/(p-1) with p = 2
        let four = Field::constant(g, 4.0);
        let p = 2.0;
        let e = 2.0 / (p - 1.0);
        let out = four.map(|v| v.powf(e)).unwrap();
        assert!(out.values().iter().all(|&v| v == 16.0));
    }

    #[test]
    fn map_rejects_non_finite_with_node() {
        let g = Grid::interval(0.0, 1.0, 7).unwrap();
        let f = Field::from_fn(g, |x| x[0]).unwrap();
        match f.map(|v| (v - 0.4).sqrt()) {
            Err(Error::NonFinite { node, .. }) => assert!(node < 3),
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }

    #[test]
    fn restrict_takes_odd_fine_indices() {
        let gf = Grid::interval(0.0, 1.0, 1023).unwrap();
        let gc = Grid::interval(0.0, 1.0, 511).unwrap();
        let f = Field::from_fn(gf, |x| x[0] * x[0]).unwrap();
        let r = f.restrict_to(&gc).unwrap();
        for j in 0..gc.node_count() {
            assert_eq!(r.values()[j], f.values()[2 * j + 1]);
        }
        let c = Field::constant(gf, 4.25);
        let rc = c.restrict_to(&gc).unwrap();
        assert!(rc.values().iter().all(|&v| v == 4.25));
    }

    #[test]
    fn restrict_rejects_non_nested() {
        let gf = Grid::interval(0.0, 1.0, 1023).unwrap();
        let gc = Grid::interval(0.0, 1.0, 100).unwrap();
        let f = Field::zeros(gf);
        assert!(matches!(f.restrict_to(&gc), Err(Error::NotNested(_))));
    }

    #[test]
    fn restriction_norm_error_is_order_h() {
        let gf = Grid::interval(0.0, 1.0, 511).unwrap();
        let f = Field::from_fn(gf, |x| (PI * x[0]).sin() * x[0]).unwrap();
        let n2 = f.norm_l2();
        for nc in [255usize, 127] {
            let gc = Grid::interval(0.0, 1.0, nc).unwrap();
            let rc = f.restrict_to(&gc).unwrap();
            let h = gc.spacing(0);
            assert!((rc.norm_l2() - n2).abs() <= 2.0 * h, "nc={nc}");
        }
    }

    #[test]
    fn quadrature_error_second_order() {
        // smooth zero-boundary sample with known L2 inner product
        let exact = 1.0 / 105.0; // integral of x^4 (1-x)^2 over (0,1)
        let mut errs = Vec::new();
        for n in [127usize, 255, 511] {
            let g = Grid::interval(0.0, 1.0, n).unwrap();
            let f = Field::from_fn(g, |x| x[0] * x[0] * (1.0 - x[0])).unwrap();
            errs.push((f.inner_product(&f).unwrap() - exact).abs());
        }
        assert!(errs[0] / errs[1] > 3.5);
        assert!(errs[1] / errs[2] > 3.5);
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        let g = Grid::rectangle((0.0, 2.0), (-1.0, 1.0), 5, 7).unwrap();
        let f = Field::from_fn(g, |x| (x[0] * 3.1 + x[1]).sin() / 3.0).unwrap();
        f.write_csv(&path).unwrap();
        let back = Field::read_csv(&path).unwrap();
        assert_eq!(back.grid(), f.grid());
        assert_eq!(back.values(), f.values());
    }

    fn small_field_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        let v = proptest::collection::vec(-100.0..100.0f64, 33);
        (v.clone(), v)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn inner_product_symmetric_bilinear_positive((fv, gv) in small_field_pair(),
                                                     a in -10.0..10.0f64, b in -10.0..10.0f64) {
            let g = Grid::interval(0.0, 1.0, 33).unwrap();
            let f1 = Field::from_values(g, fv).unwrap();
            let f2 = Field::from_values(g, gv).unwrap();
            let scale = 1.0 + f1.norm_l2() * f2.norm_l2();

            prop_assert!((f1.inner_product(&f2).unwrap() - f2.inner_product(&f1).unwrap()).abs()
                         <= 1e-14 * scale);

            let comb = Field::lincomb(a, &f1, b, &f2).unwrap();
            let lhs = comb.inner_product(&f1).unwrap();
            let rhs = a * f1.inner_product(&f1).unwrap() + b * f2.inner_product(&f1).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs() + rhs.abs()));

            if f1.values().iter().any(|&v| v != 0.0) {
                prop_assert!(f1.inner_product(&f1).unwrap() > 0.0);
            }
        }

        #[test]
        fn lp_norm_triangle_and_homogeneity((fv, gv) in small_field_pair(),
                                            p in 1.0..6.0f64, alpha in -10.0..10.0f64) {
            let g = Grid::interval(0.0, 1.0, 33).unwrap();
            let f1 = Field::from_values(g, fv).unwrap();
            let f2 = Field::from_values(g, gv).unwrap();
            let sum = Field::lincomb(1.0, &f1, 1.0, &f2).unwrap();
            let (nf, ng, ns) = (f1.lp_norm(p).unwrap(), f2.lp_norm(p).unwrap(), sum.lp_norm(p).unwrap());
            prop_assert!(ns <= nf + ng + 1e-12 * (1.0 + nf + ng));

            let scaled = f1.map(|v| alpha * v).unwrap();
            prop_assert!((scaled.lp_norm(p).unwrap() - alpha.abs() * nf).abs()
                         <= 1e-12 * (1.0 + nf * alpha.abs()));
        }
    }
}
