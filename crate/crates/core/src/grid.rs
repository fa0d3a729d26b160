//! Uniform lattices on the truncated domain `[-R, R]^dim` and fields sampled on them.
//!
//! All inner products use the tensor trapezoid rule. The same weights enter the
//! discrete convolution (see [`crate::operator`]), which keeps the discrete
//! operator self-adjoint in this inner product.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// A `dim`-dimensional uniform lattice with `n` nodes per axis on `[-R, R]^dim`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    dim: usize,
    radius: f64,
    n: usize,
}

impl Grid {
    pub fn new(dim: usize, radius: f64, n: usize) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidParameter(format!("dim must be 1 or 2, got {dim}")));
        }
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::InvalidParameter(format!("radius must be positive, got {radius}")));
        }
        if n < 8 {
            return Err(Error::InvalidParameter(format!("need at least 8 nodes per axis, got {n}")));
        }
        Ok(Self { dim, radius, n })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Nodes per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Total number of nodes, `n^dim`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.radius / (self.n - 1) as f64
    }

    /// Coordinate of the `i`-th node along an axis.
    pub fn node(&self, i: usize) -> f64 {
        -self.radius + i as f64 * self.spacing()
    }

    /// Volume element `h^dim`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Per-axis lattice indices of a flat (row-major) index.
    pub fn unflatten(&self, idx: usize) -> [usize; 2] {
        if self.dim == 1 {
            [idx, 0]
        } else {
            [idx / self.n, idx % self.n]
        }
    }

    /// Coordinates of a node; only the first `dim` entries are meaningful.
    pub fn point(&self, idx: usize) -> [f64; 2] {
        let [i, j] = self.unflatten(idx);
        if self.dim == 1 {
            [self.node(i), 0.0]
        } else {
            [self.node(i), self.node(j)]
        }
    }

    /// Tensor trapezoid weights, one per node.
    pub fn weights(&self) -> Vec<f64> {
        let h = self.spacing();
        let axis: Vec<f64> = (0..self.n)
            .map(|i| if i == 0 || i == self.n - 1 { 0.5 * h } else { h })
            .collect();
        match self.dim {
            1 => axis,
            _ => {
                let mut w = Vec::with_capacity(self.len());
                for wi in &axis {
                    for wj in &axis {
                        w.push(wi * wj);
                    }
                }
                w
            }
        }
    }

    /// Nodes lying on the boundary of the box.
    pub fn is_boundary(&self, idx: usize) -> bool {
        let [i, j] = self.unflatten(idx);
        let edge = |k: usize| k == 0 || k == self.n - 1;
        edge(i) || (self.dim == 2 && edge(j))
    }
}

/// Real values sampled on every node of a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidParameter(format!(
                "field has {} values, grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self { grid, values: vec![0.0; grid.len()] }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self { grid, values: vec![c; grid.len()] }
    }

    /// Samples `f` at every node; `f` receives the first `dim` coordinates.
    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..grid.len())
            .map(|idx| {
                let p = grid.point(idx);
                f(&p[..grid.dim()])
            })
            .collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn same_grid(&self, other: &Field) -> Result<()> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn scaled(&self, c: f64) -> Field {
        self.map(|v| c * v)
    }

    /// `self + c * other`.
    pub fn add_scaled(&self, c: f64, other: &Field) -> Result<Field> {
        self.same_grid(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + c * b).collect();
        Ok(Field { grid: self.grid, values })
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.add_scaled(-1.0, other)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn norm_sup(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn norm_l1(&self) -> f64 {
        weighted_sum(&self.grid.weights(), self.values.iter().map(|v| v.abs()))
    }

    pub fn norm_l2(&self) -> f64 {
        weighted_sum(&self.grid.weights(), self.values.iter().map(|v| v * v)).sqrt()
    }

    pub fn norm(&self, norm: Norm) -> f64 {
        match norm {
            Norm::L1 => self.norm_l1(),
            Norm::L2 => self.norm_l2(),
            Norm::Sup => self.norm_sup(),
        }
    }

    /// Writes `x[,y],value` rows with 17 significant digits.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv_to(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn write_csv_to(&self, out: &mut impl Write) -> Result<()> {
        if self.grid.dim() == 1 {
            writeln!(out, "x,value")?;
        } else {
            writeln!(out, "x,y,value")?;
        }
        for (idx, v) in self.values.iter().enumerate() {
            let p = self.grid.point(idx);
            if self.grid.dim() == 1 {
                writeln!(out, "{:.16e},{:.16e}", p[0], v)?;
            } else {
                writeln!(out, "{:.16e},{:.16e},{:.16e}", p[0], p[1], v)?;
            }
        }
        Ok(())
    }

    /// Reads a field written by [`Field::write_csv`]; node coordinates must match `grid`.
    pub fn read_csv(grid: Grid, path: impl AsRef<Path>) -> Result<Field> {
        let path = path.as_ref();
        let bad = |reason: String| Error::Table { path: path.display().to_string(), reason };
        let mut reader = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
        let h = grid.spacing();
        let mut values = Vec::with_capacity(grid.len());
        for (row, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            if rec.len() != grid.dim() + 1 {
                return Err(bad(format!("row {} has {} columns", row + 1, rec.len())));
            }
            let nums: Vec<f64> = rec
                .iter()
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| bad(format!("row {}: {e}", row + 1)))?;
            if row >= grid.len() {
                return Err(bad(format!("more than {} rows", grid.len())));
            }
            let p = grid.point(row);
            if (0..grid.dim()).any(|k| (nums[k] - p[k]).abs() > 1e-6 * h) {
                return Err(bad(format!("row {} is not at the expected node", row + 1)));
            }
            values.push(nums[grid.dim()]);
        }
        if values.len() != grid.len() {
            return Err(bad(format!("expected {} rows, found {}", grid.len(), values.len())));
        }
        Field::new(grid, values)
    }
}

/// Norm used for distances in traces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Norm {
    L1,
    L2,
    Sup,
}

fn weighted_sum(weights: &[f64], values: impl Iterator<Item = f64>) -> f64 {
    weights.iter().zip(values).map(|(w, v)| w * v).sum()
}

/// Trapezoid approximation of `∫ f g dx`.
pub fn inner_product(f: &Field, g: &Field) -> Result<f64> {
    f.same_grid(g)?;
    Ok(weighted_sum(&f.grid.weights(), f.values.iter().zip(&g.values).map(|(a, b)| a * b)))
}

/// `⟨u, 1⟩`.
pub fn mass(u: &Field) -> f64 {
    weighted_sum(&u.grid.weights(), u.values.iter().copied())
}

/// Euclidean-weighted inner product on raw slices; `weights` come from [`Grid::weights`].
pub(crate) fn dot_w(weights: &[f64], a: &[f64], b: &[f64]) -> f64 {
    weights.iter().zip(a).zip(b).map(|((w, x), y)| w * x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn rejects_bad_grids() {
        assert!(Grid::new(3, 1.0, 16).is_err());
        assert!(Grid::new(1, 0.0, 16).is_err());
        assert!(Grid::new(1, 1.0, 7).is_err());
    }

    #[test]
    fn nodes_are_reproducible() {
        let g = Grid::new(1, 3.0, 256).unwrap();
        assert_eq!(g.node(0), -3.0);
        assert_abs_diff_eq!(g.node(255), 3.0, epsilon = 1e-14);
        assert_eq!(g.node(17), -3.0 + 17.0 * (6.0 / 255.0));
    }

    #[test]
    fn inner_product_examples() {
        let g = Grid::new(1, 1.0, 201).unwrap();
        let zero = Field::zeros(g);
        assert_eq!(inner_product(&zero, &zero).unwrap(), 0.0);
        let one = Field::constant(g, 1.0);
        assert_abs_diff_eq!(inner_product(&one, &one).unwrap(), 2.0, epsilon = 1e-12);

        let g = Grid::new(1, 1.0, 401).unwrap();
        let x = Field::from_fn(g, |p| p[0]);
        assert_abs_diff_eq!(inner_product(&x, &x).unwrap(), 2.0 / 3.0, epsilon = 1e-4);
    }

    #[test]
    fn mismatched_grids_are_rejected() {
        let a = Field::zeros(Grid::new(1, 1.0, 16).unwrap());
        let b = Field::zeros(Grid::new(1, 1.0, 32).unwrap());
        assert!(matches!(inner_product(&a, &b), Err(Error::GridMismatch)));
    }

    #[test]
    fn uniform_density_has_unit_mass() {
        let r = 2.5;
        let g = Grid::new(1, r, 64).unwrap();
        assert_abs_diff_eq!(mass(&Field::constant(g, 1.0 / (2.0 * r))), 1.0, epsilon = 1e-12);
        let g2 = Grid::new(2, r, 32).unwrap();
        assert_abs_diff_eq!(mass(&Field::constant(g2, 1.0)), 4.0 * r * r, epsilon = 1e-11);
    }

    #[test]
    fn trapezoid_converges_at_second_order() {
        let exact = (1.0f64).sin() * 2.0 - 0.0; // ∫_{-1}^{1} cos
        let err = |n| {
            let g = Grid::new(1, 1.0, n).unwrap();
            (mass(&Field::from_fn(g, |p| p[0].cos())) - exact).abs()
        };
        let ratio = err(101) / err(201);
        assert!((ratio - 4.0).abs() < 0.8, "ratio {ratio}");
    }

    #[test]
    fn csv_round_trip() {
        let g = Grid::new(2, 1.0, 8).unwrap();
        let f = Field::from_fn(g, |p| p[0] * 3.0 + p[1].exp());
        let dir = std::env::temp_dir().join(format!("mutsel-grid-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("f.csv");
        f.write_csv(&path).unwrap();
        let back = Field::read_csv(g, &path).unwrap();
        assert_eq!(f, back);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("x,y,value\n"));
    }
}
