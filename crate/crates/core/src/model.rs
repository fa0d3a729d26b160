//! Mutation kernels `J`, intensities `σ`, fitness potentials `W`, and the
//! assumption checks that gate every computation.
//!
//! Every kernel is a tensor product of a one-dimensional axis profile, so the
//! same profile drives point evaluation, lattice stencils and analytic extrema.

use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::Grid;

const GAUSSIAN_CUTOFF: f64 = 12.0;

/// Shape of the axis profile of a kernel.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelShape {
    /// Uniform density on `[center - half_width, center + half_width]` per axis.
    Box { half_width: f64, center: f64 },
    /// Centered normal density, truncated at twelve standard deviations.
    Gaussian { std: f64 },
    /// Piecewise-linear interpolant of samples, zero outside the sampled range.
    /// `r0` is the declared radius of the ball around 0 where `J > 0`.
    Table { xs: Vec<f64>, ys: Vec<f64>, r0: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    shape: KernelShape,
    sigma: f64,
    dim: usize,
    even: bool,
}

/// Lattice samples of the axis profile, `values[m + half] ≈ J₁(m h)`,
/// rescaled so that `h Σ values = 1`.
#[derive(Debug, Clone)]
pub struct AxisStencil {
    pub half: usize,
    pub values: Vec<f64>,
}

impl Kernel {
    /// Builds a unit-mass kernel; table samples are normalized here.
    pub fn new(shape: KernelShape, sigma: f64, dim: usize) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
        }
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidParameter(format!("dim must be 1 or 2, got {dim}")));
        }
        let shape = match shape {
            KernelShape::Box { half_width, center } => {
                if !(half_width.is_finite() && half_width > 0.0 && center.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "box kernel needs a positive half-width, got {half_width}"
                    )));
                }
                KernelShape::Box { half_width, center }
            }
            KernelShape::Gaussian { std } => {
                if !(std.is_finite() && std > 0.0) {
                    return Err(Error::InvalidParameter(format!("gaussian std must be positive, got {std}")));
                }
                KernelShape::Gaussian { std }
            }
            KernelShape::Table { xs, ys, r0 } => {
                if dim != 1 {
                    return Err(Error::InvalidParameter("table kernels are one-dimensional".into()));
                }
                check_table(&xs, &ys)?;
                if ys.iter().any(|&y| y < 0.0) {
                    return Err(Error::InvalidParameter("table kernel has negative samples".into()));
                }
                let mass = piecewise_linear_integral(&xs, &ys);
                if !(mass.is_finite() && mass > 0.0) {
                    return Err(Error::InvalidParameter(format!("table kernel is not normalizable (mass {mass})")));
                }
                let ys = ys.iter().map(|y| y / mass).collect();
                KernelShape::Table { xs, ys, r0 }
            }
        };
        let mut kernel = Self { shape, sigma, dim, even: false };
        kernel.even = kernel.symmetry_defect() <= 1e-12 * kernel.axis_max().max(1.0);
        Ok(kernel)
    }

    pub fn box_kernel(half_width: f64, sigma: f64, dim: usize) -> Result<Self> {
        Self::new(KernelShape::Box { half_width, center: 0.0 }, sigma, dim)
    }

    pub fn gaussian(std: f64, sigma: f64, dim: usize) -> Result<Self> {
        Self::new(KernelShape::Gaussian { std }, sigma, dim)
    }

    pub fn shape(&self) -> &KernelShape {
        &self.shape
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma * self.sigma
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_even(&self) -> bool {
        self.even
    }

    /// Same shape with a different intensity.
    pub fn with_sigma(&self, sigma: f64) -> Result<Self> {
        Self::new(self.shape.clone(), sigma, self.dim)
    }

    /// Reflected kernel `z ↦ J(-z)`.
    pub fn reflected(&self) -> Self {
        let shape = match &self.shape {
            KernelShape::Box { half_width, center } => KernelShape::Box { half_width: *half_width, center: -center },
            KernelShape::Gaussian { std } => KernelShape::Gaussian { std: *std },
            KernelShape::Table { xs, ys, r0 } => KernelShape::Table {
                xs: xs.iter().rev().map(|x| -x).collect(),
                ys: ys.iter().rev().copied().collect(),
                r0: *r0,
            },
        };
        Self { shape, ..self.clone() }
    }

    /// Axis profile `J₁`; in two dimensions `J(z) = J₁(z₀) J₁(z₁)`.
    pub fn axis_density(&self, t: f64) -> f64 {
        match &self.shape {
            KernelShape::Box { half_width, center } => {
                if (t - center).abs() <= *half_width {
                    0.5 / half_width
                } else {
                    0.0
                }
            }
            KernelShape::Gaussian { std } => {
                let z = t / std;
                (-0.5 * z * z).exp() / (std * (2.0 * std::f64::consts::PI).sqrt())
            }
            KernelShape::Table { xs, ys, .. } => {
                if t < xs[0] || t > xs[xs.len() - 1] {
                    0.0
                } else {
                    interpolate(xs, ys, t)
                }
            }
        }
    }

    /// `J(z)`.
    pub fn density(&self, z: &[f64]) -> f64 {
        let mut v = self.axis_density(z[0]);
        if self.dim == 2 && v != 0.0 {
            v *= self.axis_density(z[1]);
        }
        v
    }

    /// `K(z) = σ² J(z)`.
    pub fn k(&self, z: &[f64]) -> f64 {
        self.sigma2() * self.density(z)
    }

    /// Closed interval outside which the axis profile vanishes.
    pub fn axis_support(&self) -> (f64, f64) {
        match &self.shape {
            KernelShape::Box { half_width, center } => (center - half_width, center + half_width),
            KernelShape::Gaussian { std } => (-GAUSSIAN_CUTOFF * std, GAUSSIAN_CUTOFF * std),
            KernelShape::Table { xs, .. } => (xs[0], xs[xs.len() - 1]),
        }
    }

    /// Largest distance from the origin reached by the support along an axis.
    pub fn support_radius(&self) -> f64 {
        let (lo, hi) = self.axis_support();
        lo.abs().max(hi.abs())
    }

    /// Points where the axis profile is not smooth.
    pub fn axis_breakpoints(&self) -> Vec<f64> {
        match &self.shape {
            KernelShape::Box { half_width, center } => vec![center - half_width, center + half_width],
            KernelShape::Gaussian { .. } => vec![],
            KernelShape::Table { xs, .. } => xs.clone(),
        }
    }

    fn axis_max(&self) -> f64 {
        match &self.shape {
            KernelShape::Box { half_width, .. } => 0.5 / half_width,
            KernelShape::Gaussian { std } => 1.0 / (std * (2.0 * std::f64::consts::PI).sqrt()),
            KernelShape::Table { ys, .. } => ys.iter().copied().fold(0.0, f64::max),
        }
    }

    /// Radius of the largest ball around 0 on which `J > 0`.
    pub fn r0(&self) -> f64 {
        match &self.shape {
            KernelShape::Box { half_width, center } => half_width - center.abs(),
            KernelShape::Gaussian { .. } => f64::INFINITY,
            KernelShape::Table { r0, .. } => *r0,
        }
    }

    /// Analytic mass `∫ J`.
    pub fn mass(&self) -> f64 {
        match &self.shape {
            KernelShape::Box { .. } | KernelShape::Gaussian { .. } => 1.0,
            KernelShape::Table { xs, ys, .. } => piecewise_linear_integral(xs, ys).powi(self.dim as i32),
        }
    }

    /// `max |J(z) - J(-z)|` over a sample of the support.
    pub fn symmetry_defect(&self) -> f64 {
        let rad = self.support_radius();
        let mut pts: Vec<f64> = (0..=2000).map(|i| -rad + 2.0 * rad * i as f64 / 2000.0).collect();
        pts.extend(self.axis_breakpoints());
        pts.iter()
            .map(|&t| (self.axis_density(t) - self.axis_density(-t)).abs())
            .fold(0.0, f64::max)
    }

    /// Essential infimum and supremum of `J` over the open box `(-r, r)^dim`.
    pub fn extrema_over_box(&self, r: f64) -> (f64, f64) {
        let (lo, hi) = match &self.shape {
            KernelShape::Box { half_width, center } => {
                let height = 0.5 / half_width;
                let (a, b) = (center - half_width, center + half_width);
                let sup = if a < r && b > -r { height } else { 0.0 };
                let inf = if a <= -r && b >= r { height } else { 0.0 };
                (inf, sup)
            }
            KernelShape::Gaussian { .. } => (self.axis_density(r), self.axis_density(0.0)),
            KernelShape::Table { xs, .. } => {
                let mut pts: Vec<f64> = (1..4096).map(|i| -r + 2.0 * r * i as f64 / 4096.0).collect();
                pts.extend(xs.iter().copied().filter(|x| x.abs() < r));
                let vals = pts.iter().map(|&t| self.axis_density(t));
                vals.fold((f64::INFINITY, 0.0f64), |(mn, mx), v| (mn.min(v), mx.max(v)))
            }
        };
        (lo.powi(self.dim as i32), hi.powi(self.dim as i32))
    }

    /// Lattice samples of the axis profile at spacing `h`, truncated to `|m| ≤ max_offset`.
    ///
    /// Samples exactly on a box edge get half the height. The samples are
    /// rescaled so their untruncated lattice sum is `1/h`.
    pub fn axis_stencil(&self, h: f64, max_offset: usize) -> AxisStencil {
        let (lo, hi) = self.axis_support();
        let m_lo = (lo / h).floor() as i64 - 1;
        let m_hi = (hi / h).ceil() as i64 + 1;
        let sample = |m: i64| -> f64 {
            let t = m as f64 * h;
            match &self.shape {
                KernelShape::Box { half_width, center } => {
                    let d = (t - center).abs() - half_width;
                    if d.abs() <= 1e-9 * h {
                        0.25 / half_width
                    } else if d < 0.0 {
                        0.5 / half_width
                    } else {
                        0.0
                    }
                }
                _ => self.axis_density(t),
            }
        };
        let total: f64 = (m_lo..=m_hi).map(sample).sum::<f64>() * h;
        let half = (m_lo.unsigned_abs().max(m_hi.unsigned_abs()) as usize).min(max_offset);
        let values = (-(half as i64)..=half as i64).map(|m| sample(m) / total).collect();
        AxisStencil { half, values }
    }
}

/// Shape of the radial profile of a potential.
#[derive(Debug, Clone, PartialEq)]
pub enum PotentialShape {
    /// `|x|^m`.
    Power { m: f64 },
    /// `√|x|`.
    Sqrt,
    /// `|x|⁴ - |x|²`.
    DoubleWell,
    /// `1`.
    Constant,
    /// Piecewise-linear interpolant in `x` (one dimension), flat beyond the ends.
    Table { xs: Vec<f64>, ys: Vec<f64> },
}

/// `W(x) = scale · base(x) + shift`.
#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    shape: PotentialShape,
    scale: f64,
    shift: f64,
}

impl Potential {
    /// `shift = None` picks the value that makes `min W = 0` (zero for the
    /// shapes already vanishing at the origin and for constants).
    pub fn new(shape: PotentialShape, scale: f64, shift: Option<f64>) -> Result<Self> {
        if !scale.is_finite() {
            return Err(Error::InvalidParameter(format!("potential scale must be finite, got {scale}")));
        }
        if let PotentialShape::Power { m } = shape {
            if !(m.is_finite() && m > 0.0) {
                return Err(Error::InvalidParameter(format!("power exponent must be positive, got {m}")));
            }
        }
        if let PotentialShape::Table { xs, ys } = &shape {
            check_table(xs, ys)?;
        }
        let shift = match shift {
            Some(s) if s.is_finite() => s,
            Some(s) => return Err(Error::InvalidParameter(format!("potential shift must be finite, got {s}"))),
            None => match &shape {
                PotentialShape::DoubleWell => 0.25 * scale,
                PotentialShape::Table { ys, .. } => -ys.iter().map(|y| scale * y).fold(f64::INFINITY, f64::min),
                _ => 0.0,
            },
        };
        Ok(Self { shape, scale, shift })
    }

    pub fn power(m: f64, scale: f64) -> Result<Self> {
        Self::new(PotentialShape::Power { m }, scale, None)
    }

    pub fn shape(&self) -> &PotentialShape {
        &self.shape
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    /// Profile as a function of `|x|`; tables use the signed abscissa.
    pub fn eval_radial(&self, r: f64) -> f64 {
        let base = match &self.shape {
            PotentialShape::Power { m } => r.abs().powf(*m),
            PotentialShape::Sqrt => r.abs().sqrt(),
            PotentialShape::DoubleWell => {
                let r2 = r * r;
                r2 * r2 - r2
            }
            PotentialShape::Constant => 1.0,
            PotentialShape::Table { xs, ys } => {
                let t = r.clamp(xs[0], xs[xs.len() - 1]);
                interpolate(xs, ys, t)
            }
        };
        self.scale * base + self.shift
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match (&self.shape, x.len()) {
            (PotentialShape::Table { .. }, _) | (_, 1) => self.eval_radial(x[0]),
            _ => self.eval_radial(x[0].hypot(x[1])),
        }
    }

    /// `Some((m, scale))` for a pure power `scale·|x|^m` with no shift.
    pub fn as_pure_power(&self) -> Option<(f64, f64)> {
        match self.shape {
            PotentialShape::Power { m } if self.shift == 0.0 && self.scale > 0.0 => Some((m, self.scale)),
            PotentialShape::Sqrt if self.shift == 0.0 && self.scale > 0.0 => Some((0.5, self.scale)),
            _ => None,
        }
    }

    /// One-dimensional abscissae where `W` may vanish or lose smoothness;
    /// quadrature splits there so `1/W` is never sampled at a zero.
    pub fn singular_points_1d(&self) -> Vec<f64> {
        let mut pts = Vec::new();
        match &self.shape {
            PotentialShape::Power { .. } | PotentialShape::Sqrt => pts.push(0.0),
            PotentialShape::DoubleWell => {
                let r = std::f64::consts::FRAC_1_SQRT_2;
                pts.extend([-r, 0.0, r]);
            }
            PotentialShape::Constant => {}
            PotentialShape::Table { xs, ys } => {
                pts.extend(xs.iter().copied());
                for (w, y) in xs.windows(2).zip(ys.windows(2)) {
                    let (a, b) = (self.scale * y[0] + self.shift, self.scale * y[1] + self.shift);
                    if a * b < 0.0 {
                        pts.push(w[0] + (w[1] - w[0]) * a / (a - b));
                    }
                }
            }
        }
        pts
    }
}

/// A kernel and potential on a grid.
#[derive(Debug, Clone)]
pub struct Problem {
    pub kernel: Kernel,
    pub potential: Potential,
    pub grid: Grid,
}

impl Problem {
    pub fn new(kernel: Kernel, potential: Potential, grid: Grid) -> Result<Self> {
        if kernel.dim() != grid.dim() {
            return Err(Error::InvalidParameter(format!(
                "kernel is {}-dimensional but the grid is {}-dimensional",
                kernel.dim(),
                grid.dim()
            )));
        }
        if grid.dim() == 2 && matches!(potential.shape(), PotentialShape::Table { .. }) {
            return Err(Error::InvalidParameter("table potentials are one-dimensional".into()));
        }
        Ok(Self { kernel, potential, grid })
    }

    pub fn sigma2(&self) -> f64 {
        self.kernel.sigma2()
    }

    /// `W` at every node.
    pub fn potential_values(&self) -> Vec<f64> {
        (0..self.grid.len())
            .map(|idx| {
                let p = self.grid.point(idx);
                self.potential.eval(&p[..self.grid.dim()])
            })
            .collect()
    }

    /// Same problem with a different intensity.
    pub fn with_sigma(&self, sigma: f64) -> Result<Self> {
        Ok(Self { kernel: self.kernel.with_sigma(sigma)?, ..self.clone() })
    }
}

/// Smallest truncation radius (multiple of 0.5, at least `min_radius`) with
/// `W ≥ 50 σ²` on the boundary of the box.
pub fn default_radius(kernel: &Kernel, potential: &Potential, min_radius: f64) -> Option<f64> {
    let target = 50.0 * kernel.sigma2();
    let mut r = (min_radius / 0.5).ceil().max(1.0) * 0.5;
    while r <= 1e4 {
        if potential.eval_radial(r) >= target && potential.eval_radial(-r) >= target {
            return Some(r);
        }
        r += 0.5;
    }
    None
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    /// Failing a required check stops any further computation.
    pub required: bool,
    pub measured: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
    pub even: bool,
}

impl ValidationReport {
    pub fn all_required_pass(&self) -> bool {
        self.checks.iter().all(|c| c.passed || !c.required)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Names of failed required checks.
    pub fn failures(&self) -> Vec<&'static str> {
        self.checks.iter().filter(|c| c.required && !c.passed).map(|c| c.name).collect()
    }
}

/// Checks the standing assumptions on `(J, σ, W)` at the grid nodes.
pub fn validate(problem: &Problem) -> ValidationReport {
    let k = &problem.kernel;
    let grid = &problem.grid;
    let w = problem.potential_values();
    let mut checks = Vec::new();

    let kmin = match k.shape() {
        KernelShape::Table { ys, .. } => ys.iter().copied().fold(f64::INFINITY, f64::min),
        _ => 0.0,
    };
    checks.push(Check {
        name: "kernel_nonnegative",
        passed: kmin >= 0.0,
        required: true,
        measured: kmin,
        detail: "minimum kernel sample".into(),
    });

    let r0 = k.r0();
    let ball_min = if r0 > 0.0 {
        let r = if r0.is_finite() { r0 } else { k.support_radius() };
        (0..=200)
            .map(|i| -r + 2.0 * r * i as f64 / 200.0)
            .filter(|t| t.abs() < r0)
            .map(|t| k.axis_density(t))
            .fold(f64::INFINITY, f64::min)
    } else {
        0.0
    };
    checks.push(Check {
        name: "kernel_positive_near_origin",
        passed: r0 > 0.0 && ball_min > 0.0,
        required: true,
        measured: r0,
        detail: format!("radius of positivity ball around 0 (min J on it {ball_min:.6e})"),
    });

    let mass_defect = (k.mass() - 1.0).abs();
    checks.push(Check {
        name: "kernel_unit_mass",
        passed: mass_defect <= 1e-10,
        required: true,
        measured: mass_defect,
        detail: "|∫J - 1|".into(),
    });

    let defect = k.symmetry_defect();
    checks.push(Check {
        name: "kernel_even",
        passed: k.is_even(),
        required: false,
        measured: defect,
        detail: "max |J(z) - J(-z)|".into(),
    });

    let wmin = w.iter().copied().fold(f64::INFINITY, f64::min);
    checks.push(Check {
        name: "potential_nonnegative",
        passed: wmin >= 0.0,
        required: true,
        measured: wmin,
        detail: "minimum of W at the nodes".into(),
    });

    let half = 0.5 * grid.radius();
    let (mut boundary_min, mut inner_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for (idx, &wi) in w.iter().enumerate() {
        let p = grid.point(idx);
        if grid.is_boundary(idx) {
            boundary_min = boundary_min.min(wi);
        }
        if p[..grid.dim()].iter().all(|c| c.abs() <= half) {
            inner_max = inner_max.max(wi);
        }
    }
    checks.push(Check {
        name: "potential_confining",
        passed: boundary_min >= inner_max,
        required: true,
        measured: boundary_min - inner_max,
        detail: "min W on the boundary minus max W on the inner half".into(),
    });

    let origin = [0.0, 0.0];
    let w0 = problem.potential.eval(&origin[..grid.dim()]);
    let h = grid.spacing();
    let off_min = w
        .iter()
        .enumerate()
        .filter(|(idx, _)| {
            let p = grid.point(*idx);
            p[..grid.dim()].iter().map(|c| c * c).sum::<f64>().sqrt() > 0.5 * h
        })
        .map(|(_, &v)| v)
        .fold(f64::INFINITY, f64::min);
    checks.push(Check {
        name: "potential_unique_zero",
        passed: w0 == 0.0 && off_min > 0.0,
        required: false,
        measured: w0,
        detail: format!("W(0); min W away from the origin {off_min:.6e}"),
    });

    let reach = k.support_radius();
    checks.push(Check {
        name: "kernel_support_within_domain",
        passed: reach <= 2.0 * grid.radius(),
        required: false,
        measured: reach,
        detail: format!("kernel reach against 2R = {}", 2.0 * grid.radius()),
    });

    ValidationReport { checks, even: k.is_even() }
}

/// Reads a two-column CSV `(abscissa, value)`; a non-numeric first row is a header.
pub fn read_table(path: impl AsRef<Path>) -> Result<(Vec<f64>, Vec<f64>)> {
    let path = path.as_ref();
    let bad = |reason: String| Error::Table { path: path.display().to_string(), reason };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| bad(e.to_string()))?;
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if rec.len() != 2 {
            return Err(bad(format!("row {} has {} columns, expected 2", row + 1, rec.len())));
        }
        match (rec[0].parse::<f64>(), rec[1].parse::<f64>()) {
            (Ok(x), Ok(y)) => {
                xs.push(x);
                ys.push(y);
            }
            _ if row == 0 => continue,
            _ => return Err(bad(format!("row {} is not numeric", row + 1))),
        }
    }
    check_table(&xs, &ys).map_err(|e| bad(e.to_string()))?;
    Ok((xs, ys))
}

fn check_table(xs: &[f64], ys: &[f64]) -> Result<()> {
    if xs.len() < 2 || xs.len() != ys.len() {
        return Err(Error::InvalidParameter("a table needs at least two (x, y) rows".into()));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("table entries must be finite".into()));
    }
    if xs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("table abscissae must increase strictly".into()));
    }
    Ok(())
}

fn interpolate(xs: &[f64], ys: &[f64], t: f64) -> f64 {
    let k = xs.partition_point(|&x| x <= t).clamp(1, xs.len() - 1);
    let (x0, x1) = (xs[k - 1], xs[k]);
    let s = (t - x0) / (x1 - x0);
    ys[k - 1] + s * (ys[k] - ys[k - 1])
}

fn piecewise_linear_integral(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2).zip(ys.windows(2)).map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1])).sum()
}
