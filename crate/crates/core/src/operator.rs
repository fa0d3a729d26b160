//! The discrete operator `L u = -K*u + W u`.
//!
//! The convolution integrates with the trapezoid weights of the grid,
//! `(K*u)_i = Σ_j K(x_i - x_j) w_j u_j`, so `L` is self-adjoint in the
//! trapezoid inner product whenever `J` is even. As a matrix this reads
//! `M = -K_lat D_w + diag(W)`; its symmetric form is `D_w^{1/2} M D_w^{-1/2}`.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::{dot_w, Field, Grid};
use crate::model::{AxisStencil, Problem};

/// Default row cap for dense assembly.
pub const DENSE_CAP: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvMode {
    /// Zero-padded FFT convolution, applied axis by axis.
    PaddedFast,
    /// Direct summation over all node pairs.
    Direct,
}

struct AxisFft {
    len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    spectrum: Vec<Complex64>,
}

impl AxisFft {
    fn new(stencil: &AxisStencil, n: usize) -> Self {
        let len = (n + stencil.half).next_power_of_two();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(len);
        let inverse = planner.plan_fft_inverse(len);
        let mut spectrum = vec![Complex64::new(0.0, 0.0); len];
        let s = stencil.half as i64;
        for (k, &v) in stencil.values.iter().enumerate() {
            let m = k as i64 - s;
            spectrum[m.rem_euclid(len as i64) as usize] = Complex64::new(v / len as f64, 0.0);
        }
        forward.process(&mut spectrum);
        Self { len, forward, inverse, spectrum }
    }

    /// `out[i] = Σ_j stencil[i - j] v[j]` for `i < v.len()`.
    fn apply(&self, v: &[f64], out: &mut [f64], buf: &mut Vec<Complex64>) {
        buf.clear();
        buf.extend(v.iter().map(|&x| Complex64::new(x, 0.0)));
        buf.resize(self.len, Complex64::new(0.0, 0.0));
        self.forward.process(buf);
        for (b, s) in buf.iter_mut().zip(&self.spectrum) {
            *b *= s;
        }
        self.inverse.process(buf);
        for (o, b) in out.iter_mut().zip(buf.iter()) {
            *o = b.re;
        }
    }
}

/// `L` on a fixed grid. Immutable after construction and safe to share.
pub struct DiscreteOperator {
    problem: Problem,
    mode: ConvMode,
    stencil: AxisStencil,
    weights: Vec<f64>,
    potential: Vec<f64>,
    fft: AxisFft,
}

impl std::fmt::Debug for DiscreteOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DiscreteOperator")
            .field("grid", &self.problem.grid)
            .field("mode", &self.mode)
            .field("stencil_half", &self.stencil.half)
            .finish()
    }
}

impl DiscreteOperator {
    pub fn new(problem: Problem, mode: ConvMode) -> Self {
        let grid = problem.grid;
        let stencil = problem.kernel.axis_stencil(grid.spacing(), grid.n() - 1);
        let fft = AxisFft::new(&stencil, grid.n());
        Self {
            weights: grid.weights(),
            potential: problem.potential_values(),
            problem,
            mode,
            stencil,
            fft,
        }
    }

    pub fn problem(&self) -> &Problem {
        &self.problem
    }

    pub fn grid(&self) -> &Grid {
        &self.problem.grid
    }

    pub fn mode(&self) -> ConvMode {
        self.mode
    }

    pub fn with_mode(&self, mode: ConvMode) -> Self {
        Self::new(self.problem.clone(), mode)
    }

    pub fn sigma2(&self) -> f64 {
        self.problem.sigma2()
    }

    pub fn is_even(&self) -> bool {
        self.problem.kernel.is_even()
    }

    /// Trapezoid weights of the grid.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `W` at the nodes.
    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    /// The operator built from the reflected kernel; the adjoint of `L` in the
    /// trapezoid inner product.
    pub fn adjoint(&self) -> Self {
        let mut p = self.problem.clone();
        p.kernel = p.kernel.reflected();
        Self::new(p, self.mode)
    }

    /// Lattice kernel value `K(x_i - x_j)` for per-axis index offsets.
    fn k_lat(&self, d0: i64, d1: i64) -> f64 {
        let s = self.stencil.half as i64;
        let at = |d: i64| if d.abs() > s { 0.0 } else { self.stencil.values[(d + s) as usize] };
        let v = at(d0);
        if self.grid().dim() == 2 && v != 0.0 {
            self.sigma2() * v * at(d1)
        } else if self.grid().dim() == 2 {
            0.0
        } else {
            self.sigma2() * v
        }
    }

    /// Diagonal of the convolution part, `K(0) w_i`.
    pub fn conv_diagonal(&self) -> Vec<f64> {
        let k0 = self.k_lat(0, 0);
        self.weights.iter().map(|w| k0 * w).collect()
    }

    /// Lattice `L²` norm of the sampled kernel `K`.
    pub fn kernel_l2_norm(&self) -> f64 {
        let h = self.grid().spacing();
        let axis: f64 = self.stencil.values.iter().map(|v| v * v).sum::<f64>() * h;
        self.sigma2() * axis.powi(self.grid().dim() as i32).sqrt()
    }

    /// `K*u` on raw node values.
    pub fn convolve_values(&self, u: &[f64]) -> Vec<f64> {
        let v: Vec<f64> = u.iter().zip(&self.weights).map(|(a, w)| a * w).collect();
        let mut out = match self.mode {
            ConvMode::Direct => self.direct(&v),
            ConvMode::PaddedFast => self.fast(&v),
        };
        let s2 = self.sigma2();
        if self.mode == ConvMode::PaddedFast {
            out.iter_mut().for_each(|o| *o *= s2);
        }
        out
    }

    fn direct(&self, v: &[f64]) -> Vec<f64> {
        let grid = *self.grid();
        let n = grid.n() as i64;
        (0..grid.len())
            .into_par_iter()
            .map(|i| {
                let [i0, i1] = grid.unflatten(i);
                let mut acc = 0.0;
                if grid.dim() == 1 {
                    for j in 0..n {
                        acc += self.k_lat(i0 as i64 - j, 0) * v[j as usize];
                    }
                } else {
                    for j0 in 0..n {
                        for j1 in 0..n {
                            acc += self.k_lat(i0 as i64 - j0, i1 as i64 - j1) * v[(j0 * n + j1) as usize];
                        }
                    }
                }
                acc
            })
            .collect()
    }

    fn fast(&self, v: &[f64]) -> Vec<f64> {
        let n = self.grid().n();
        let mut out = vec![0.0; v.len()];
        if self.grid().dim() == 1 {
            self.fft.apply(v, &mut out, &mut Vec::with_capacity(self.fft.len));
            return out;
        }
        // Rows (second index), then columns (first index).
        let mut rows = vec![0.0; v.len()];
        rows.par_chunks_mut(n).zip(v.par_chunks(n)).for_each_init(
            || Vec::with_capacity(self.fft.len),
            |buf, (o, src)| self.fft.apply(src, o, buf),
        );
        let mut cols = vec![0.0; v.len()];
        cols.par_chunks_mut(n).enumerate().for_each_init(
            || (Vec::with_capacity(self.fft.len), vec![0.0; n], vec![0.0; n]),
            |(buf, col, res), (j, o)| {
                for i in 0..n {
                    col[i] = rows[i * n + j];
                }
                self.fft.apply(col, res, buf);
                o.copy_from_slice(res);
            },
        );
        // `cols` holds the transpose.
        for j in 0..n {
            for i in 0..n {
                out[i * n + j] = cols[j * n + i];
            }
        }
        out
    }

    /// `K*u`.
    pub fn convolve(&self, u: &Field) -> Result<Field> {
        self.check(u)?;
        Field::new(*self.grid(), self.convolve_values(u.values()))
    }

    /// `L u` on raw node values.
    pub fn apply_values(&self, u: &[f64]) -> Vec<f64> {
        let mut out = self.convolve_values(u);
        for ((o, w), x) in out.iter_mut().zip(&self.potential).zip(u) {
            *o = w * x - *o;
        }
        out
    }

    /// `L u`.
    pub fn apply_l(&self, u: &Field) -> Result<Field> {
        self.check(u)?;
        Field::new(*self.grid(), self.apply_values(u.values()))
    }

    /// `⟨L u, u⟩` in the trapezoid inner product.
    pub fn energy_values(&self, u: &[f64]) -> f64 {
        dot_w(&self.weights, &self.apply_values(u), u)
    }

    /// Energy `⟨L u, u⟩`; equal to `-⟨K*u, u⟩ + ⟨W u, u⟩`.
    pub fn energy(&self, u: &Field) -> Result<f64> {
        self.check(u)?;
        Ok(self.energy_values(u.values()))
    }

    /// `⟨L u, u⟩ / ⟨u, u⟩`.
    pub fn rayleigh_quotient(&self, u: &Field) -> Result<f64> {
        self.check(u)?;
        let nn = dot_w(&self.weights, u.values(), u.values());
        Ok(self.energy_values(u.values()) / nn)
    }

    fn check(&self, u: &Field) -> Result<()> {
        if u.grid() == self.grid() {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    fn check_cap(&self, cap: usize) -> Result<usize> {
        let rows = self.grid().len();
        if rows > cap {
            Err(Error::DenseCapExceeded { rows, cap })
        } else {
            Ok(rows)
        }
    }

    fn k_between(&self, i: usize, j: usize) -> f64 {
        let g = self.grid();
        let [i0, i1] = g.unflatten(i);
        let [j0, j1] = g.unflatten(j);
        self.k_lat(i0 as i64 - j0 as i64, i1 as i64 - j1 as i64)
    }

    /// `M` with `L u = M u` for node values: `M_ij = -K(x_i - x_j) w_j + W_i δ_ij`.
    pub fn assemble_dense(&self, cap: usize) -> Result<DMatrix<f64>> {
        let rows = self.check_cap(cap)?;
        Ok(DMatrix::from_fn(rows, rows, |i, j| {
            let d = if i == j { self.potential[i] } else { 0.0 };
            d - self.k_between(i, j) * self.weights[j]
        }))
    }

    /// `D_w^{1/2} M D_w^{-1/2}`, symmetric for even kernels and with the spectrum of `M`.
    pub fn assemble_symmetric(&self, cap: usize) -> Result<DMatrix<f64>> {
        let rows = self.check_cap(cap)?;
        let sw: Vec<f64> = self.weights.iter().map(|w| w.sqrt()).collect();
        Ok(DMatrix::from_fn(rows, rows, |i, j| {
            let d = if i == j { self.potential[i] } else { 0.0 };
            d - self.k_between(i, j) * sw[i] * sw[j]
        }))
    }
}

/// Writes a matrix as plain comma-separated rows with full precision.
pub fn write_matrix_csv(m: &DMatrix<f64>, path: impl AsRef<Path>) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:.16e}", m[(i, j)])).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()?;
    Ok(())
}
