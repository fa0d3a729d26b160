//! Time integration of `∂t u = K*u - (W + σ²) u` and of the normalized
//! replicator-mutator flow.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::{dot_w, inner_product, Field, Norm};
use crate::operator::{DiscreteOperator, DENSE_CAP};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinearScheme {
    /// Exponential Euler: the local decay is exact, the convolution frozen over a step.
    ExpEuler,
    /// Half local step, exact convolution flow, half local step.
    Strang,
    /// Matrix exponential of the dense generator.
    DenseExpm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NonlinearScheme {
    /// Linear flow renormalized to unit mass after every step.
    NormalizedLinear,
    /// RK4 on the nonlinear equation.
    DirectOde,
}

/// Distance series `‖e^{shift·t} u(t) - target‖`.
#[derive(Debug, Clone)]
pub struct Reference {
    pub target: Field,
    pub shift: f64,
    pub norm: Norm,
}

#[derive(Debug, Clone)]
pub struct EvolveOptions {
    pub t_end: f64,
    pub dt: f64,
    /// Record every this many steps (the final state is always recorded).
    pub record_every: usize,
    pub keep_snapshots: bool,
    pub reference: Option<Reference>,
}

impl EvolveOptions {
    pub fn new(t_end: f64, dt: f64) -> Self {
        Self { t_end, dt, record_every: 1, keep_snapshots: false, reference: None }
    }

    pub fn record_every(mut self, k: usize) -> Self {
        self.record_every = k.max(1);
        self
    }

    pub fn keep_snapshots(mut self, keep: bool) -> Self {
        self.keep_snapshots = keep;
        self
    }

    pub fn reference(mut self, target: Field, shift: f64, norm: Norm) -> Self {
        self.reference = Some(Reference { target, shift, norm });
        self
    }

    fn steps(&self) -> Result<(usize, f64)> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end.is_finite() && self.t_end >= self.dt * (1.0 - 1e-12)) {
            return Err(Error::InvalidParameter(format!("T = {} must be at least dt = {}", self.t_end, self.dt)));
        }
        let n = (self.t_end / self.dt - 1e-9).ceil().max(1.0) as usize;
        Ok((n, self.t_end / n as f64))
    }
}

/// `min(0.01, 0.1 / max W)`.
pub fn default_dt(op: &DiscreteOperator) -> f64 {
    let wmax = op.potential().iter().copied().fold(0.0, f64::max);
    if wmax > 0.0 {
        (0.1 / wmax).min(0.01)
    } else {
        0.01
    }
}

/// Recorded series of a run. Linear runs report `mean_fitness = ⟨W,u⟩/⟨u,1⟩`.
#[derive(Debug, Clone, Default)]
pub struct EvolutionTrace {
    pub times: Vec<f64>,
    pub mass: Vec<f64>,
    /// `ln ⟨u,1⟩`, finite even when `mass` over- or underflows.
    pub log_mass: Vec<f64>,
    pub mean_fitness: Vec<f64>,
    /// Empty when no reference was given.
    pub distance: Vec<f64>,
    pub snapshots: Vec<Field>,
    pub steps: usize,
    pub dt: f64,
    /// Negative values set to zero by the direct scheme.
    pub clips: usize,
}

impl EvolutionTrace {
    /// Writes `t,mass,mean_fitness,distance`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        self.write_csv_to(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn write_csv_to(&self, out: &mut impl Write) -> Result<()> {
        writeln!(out, "t,mass,mean_fitness,distance")?;
        for i in 0..self.times.len() {
            let d = self.distance.get(i).copied().unwrap_or(f64::NAN);
            writeln!(out, "{:.16e},{:.16e},{:.16e},{:.16e}", self.times[i], self.mass[i], self.mean_fitness[i], d)?;
        }
        Ok(())
    }

    pub fn last_time(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }
}

/// `(e^z - 1)/z`.
fn phi1(z: f64) -> f64 {
    if z.abs() < 1e-8 {
        1.0 + 0.5 * z
    } else {
        z.exp_m1() / z
    }
}

/// `e^{dt K*} u` by its Taylor series.
fn conv_flow(conv: &dyn Fn(&[f64]) -> Vec<f64>, u: &[f64], dt: f64) -> Vec<f64> {
    let mut out = u.to_vec();
    let mut term = u.to_vec();
    let scale = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for k in 1..60 {
        term = conv(&term);
        let c = dt / k as f64;
        let mut tmax = 0.0f64;
        for (o, t) in out.iter_mut().zip(term.iter_mut()) {
            *t *= c;
            *o += *t;
            tmax = tmax.max(t.abs());
        }
        if tmax <= 1e-18 * scale {
            break;
        }
    }
    out
}

enum Stepper {
    ExpEuler { decay: Vec<f64>, gain: Vec<f64> },
    Strang { half: Vec<f64>, dt: f64 },
    Dense { generator: DMatrix<f64>, cache: Vec<(usize, DMatrix<f64>)>, dt: f64 },
}

impl Stepper {
    fn new(scheme: LinearScheme, op: &DiscreteOperator, dt: f64) -> Result<Self> {
        let d: Vec<f64> = op.potential().iter().map(|w| w + op.sigma2()).collect();
        Ok(match scheme {
            LinearScheme::ExpEuler => Self::local(&d, dt, false),
            LinearScheme::Strang => Self::local(&d, dt, true),
            LinearScheme::DenseExpm => {
                let mut a = op.assemble_dense(DENSE_CAP)?;
                a.neg_mut();
                for (i, s) in (0..a.nrows()).zip(std::iter::repeat(op.sigma2())) {
                    a[(i, i)] -= s;
                }
                Self::Dense { generator: a, cache: Vec::new(), dt }
            }
        })
    }

    fn local(d: &[f64], dt: f64, strang: bool) -> Self {
        if strang {
            Self::Strang { half: d.iter().map(|x| (-0.5 * x * dt).exp()).collect(), dt }
        } else {
            Self::ExpEuler {
                decay: d.iter().map(|x| (-x * dt).exp()).collect(),
                gain: d.iter().map(|x| phi1(-x * dt) * dt).collect(),
            }
        }
    }

    /// Advances `k` steps.
    fn advance(&mut self, conv: &dyn Fn(&[f64]) -> Vec<f64>, u: &mut Vec<f64>, k: usize) {
        match self {
            Self::ExpEuler { decay, gain } => {
                for _ in 0..k {
                    let c = conv(u);
                    for i in 0..u.len() {
                        u[i] = decay[i] * u[i] + gain[i] * c[i];
                    }
                }
            }
            Self::Strang { half, dt } => {
                for _ in 0..k {
                    u.iter_mut().zip(half.iter()).for_each(|(x, h)| *x *= h);
                    *u = conv_flow(conv, u, *dt);
                    u.iter_mut().zip(half.iter()).for_each(|(x, h)| *x *= h);
                }
            }
            Self::Dense { generator, cache, dt } => {
                if !cache.iter().any(|(kk, _)| *kk == k) {
                    let e = (&*generator * (*dt * k as f64)).exp();
                    cache.push((k, e));
                }
                let e = &cache.iter().find(|(kk, _)| *kk == k).expect("cached").1;
                *u = (e * DVector::from_column_slice(u)).as_slice().to_vec();
            }
        }
    }
}

struct Recorder<'a> {
    op: &'a DiscreteOperator,
    opts: &'a EvolveOptions,
    trace: EvolutionTrace,
    normalized: bool,
}

impl Recorder<'_> {
    /// Records `u = e^{log_scale} v`.
    fn record(&mut self, t: f64, v: &[f64], log_scale: f64) -> Result<()> {
        let w = self.op.weights();
        let m = w.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
        let wbar = dot_w(w, self.op.potential(), v) / m;
        let log_mass = m.ln() + log_scale;
        let grid = *self.op.grid();
        self.trace.times.push(t);
        self.trace.mass.push(log_mass.exp());
        self.trace.log_mass.push(log_mass);
        self.trace.mean_fitness.push(if self.normalized { wbar * m } else { wbar });
        if let Some(r) = &self.opts.reference {
            let f = (r.shift * t + log_scale).exp();
            let dev = Field::new(grid, v.iter().map(|x| x * f).collect())?.sub(&r.target)?;
            self.trace.distance.push(dev.norm(r.norm));
        }
        if self.opts.keep_snapshots {
            let f = log_scale.exp();
            self.trace.snapshots.push(Field::new(grid, v.iter().map(|x| x * f).collect())?);
        }
        Ok(())
    }
}

fn check_reference(op: &DiscreteOperator, u0: &Field, opts: &EvolveOptions) -> Result<()> {
    if u0.grid() != op.grid() {
        return Err(Error::GridMismatch);
    }
    if let Some(r) = &opts.reference {
        r.target.same_grid(u0)?;
    }
    if !u0.is_finite() {
        return Err(Error::InvalidParameter("initial datum is not finite".into()));
    }
    Ok(())
}

/// Linear flow from `u0` up to `T`.
pub fn evolve_linear(op: &DiscreteOperator, u0: &Field, scheme: LinearScheme, opts: &EvolveOptions) -> Result<EvolutionTrace> {
    check_reference(op, u0, opts)?;
    let (nsteps, dt) = opts.steps()?;
    let conv = |u: &[f64]| op.convolve_values(u);
    let mut stepper = Stepper::new(scheme, op, dt)?;
    let mut rec = Recorder { op, opts, trace: EvolutionTrace { dt, ..Default::default() }, normalized: false };
    let mut v = u0.values().to_vec();
    let mut log_scale = 0.0;
    rec.record(0.0, &v, log_scale)?;
    let mut done = 0;
    while done < nsteps {
        let k = opts.record_every.min(nsteps - done);
        let chunk = if scheme == LinearScheme::DenseExpm { k } else { 1 };
        let mut inner = 0;
        while inner < k {
            stepper.advance(&conv, &mut v, chunk);
            inner += chunk;
            let step = done + inner;
            let vmax = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            if !vmax.is_finite() {
                return Err(Error::Blowup { step, time: step as f64 * dt });
            }
            if vmax > 0.0 && !(1e-100..=1e100).contains(&vmax) {
                v.iter_mut().for_each(|x| *x /= vmax);
                log_scale += vmax.ln();
            }
        }
        done += k;
        rec.record(done as f64 * dt, &v, log_scale)?;
    }
    rec.trace.steps = nsteps;
    Ok(rec.trace)
}

fn check_density(u0: &Field) -> Result<()> {
    if u0.min() < 0.0 {
        return Err(Error::Precondition(format!("initial datum must be nonnegative, min is {:e}", u0.min())));
    }
    let m = crate::grid::mass(u0);
    if (m - 1.0).abs() > 1e-10 {
        return Err(Error::Precondition(format!("initial datum must have unit mass, got {m}")));
    }
    Ok(())
}

/// Nonlinear flow from a probability density `u0`.
pub fn evolve_nonlinear(
    op: &DiscreteOperator,
    u0: &Field,
    scheme: NonlinearScheme,
    opts: &EvolveOptions,
) -> Result<EvolutionTrace> {
    check_reference(op, u0, opts)?;
    check_density(u0)?;
    let (nsteps, dt) = opts.steps()?;
    let mut rec = Recorder { op, opts, trace: EvolutionTrace { dt, ..Default::default() }, normalized: true };
    let w = op.weights().to_vec();
    let mass = |u: &[f64]| w.iter().zip(u).map(|(a, b)| a * b).sum::<f64>();
    let mut v = u0.values().to_vec();
    rec.record(0.0, &v, 0.0)?;
    let conv = |u: &[f64]| op.convolve_values(u);
    match scheme {
        NonlinearScheme::NormalizedLinear => {
            let mut stepper = Stepper::new(LinearScheme::Strang, op, dt)?;
            for step in 1..=nsteps {
                stepper.advance(&conv, &mut v, 1);
                let m = mass(&v);
                let t = step as f64 * dt;
                if !m.is_finite() {
                    return Err(Error::Blowup { step, time: t });
                }
                if m <= f64::MIN_POSITIVE {
                    return Err(Error::Extinction { time: t });
                }
                v.iter_mut().for_each(|x| *x /= m);
                if step % opts.record_every == 0 || step == nsteps {
                    rec.record(t, &v, 0.0)?;
                }
            }
        }
        NonlinearScheme::DirectOde => {
            let d: Vec<f64> = op.potential().iter().map(|x| x + op.sigma2()).collect();
            let dmax = d.iter().copied().fold(0.0, f64::max);
            if dt * dmax > 2.5 {
                return Err(Error::InvalidParameter(format!(
                    "dt·max(W + σ²) = {:.3} exceeds the RK4 stability limit 2.5; use dt ≤ {:.3e}",
                    dt * dmax,
                    2.5 / dmax
                )));
            }
            // The multiplier ⟨Au,1⟩/⟨u,1⟩ conserves the discrete mass exactly.
            let rhs = |u: &[f64]| -> Vec<f64> {
                let mut a = conv(u);
                for i in 0..u.len() {
                    a[i] -= d[i] * u[i];
                }
                let c = mass(&a) / mass(u);
                for i in 0..u.len() {
                    a[i] -= c * u[i];
                }
                a
            };
            let axpy = |u: &[f64], c: f64, k: &[f64]| -> Vec<f64> { u.iter().zip(k).map(|(a, b)| a + c * b).collect() };
            for step in 1..=nsteps {
                let k1 = rhs(&v);
                let k2 = rhs(&axpy(&v, 0.5 * dt, &k1));
                let k3 = rhs(&axpy(&v, 0.5 * dt, &k2));
                let k4 = rhs(&axpy(&v, dt, &k3));
                for i in 0..v.len() {
                    v[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
                let t = step as f64 * dt;
                let vmin = v.iter().copied().fold(f64::INFINITY, f64::min);
                if !vmin.is_finite() || v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::Blowup { step, time: t });
                }
                if vmin < -1e-8 {
                    return Err(Error::Negativity { step, time: t, value: vmin });
                }
                for x in v.iter_mut().filter(|x| **x < 0.0) {
                    *x = 0.0;
                    rec.trace.clips += 1;
                }
                if step % opts.record_every == 0 || step == nsteps {
                    rec.record(t, &v, 0.0)?;
                }
            }
        }
    }
    rec.trace.steps = nsteps;
    Ok(rec.trace)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub rate: f64,
    /// RMS of the log-linear fit.
    pub residual: f64,
    /// Fitted `ln C` in `distance ≈ C e^{-rate t}`.
    pub log_constant: f64,
    pub points: usize,
}

/// Least-squares slope of `ln d` against `t` over `[t0, t1]`; samples below `1e-14` are skipped.
pub fn fit_rate_window(times: &[f64], distance: &[f64], t0: f64, t1: f64) -> Result<RateFit> {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(distance)
        .filter(|(t, d)| **t >= t0 - 1e-12 && **t <= t1 + 1e-12 && d.is_finite() && **d > 1e-14)
        .map(|(t, d)| (*t, d.ln()))
        .collect();
    if pts.len() < 10 {
        return Err(Error::InsufficientData { needed: 10, found: pts.len() });
    }
    let n = pts.len() as f64;
    let (mt, my) = pts.iter().fold((0.0, 0.0), |(a, b), (t, y)| (a + t / n, b + y / n));
    let (sxy, sxx) = pts.iter().fold((0.0, 0.0), |(a, b), (t, y)| (a + (t - mt) * (y - my), b + (t - mt) * (t - mt)));
    let slope = sxy / sxx;
    let icept = my - slope * mt;
    let rss: f64 = pts.iter().map(|(t, y)| (y - icept - slope * t).powi(2)).sum();
    Ok(RateFit { rate: -slope, residual: (rss / n).sqrt(), log_constant: icept, points: pts.len() })
}

/// Rate fit of a trace's distance series after `burn_in`.
pub fn fit_rate(trace: &EvolutionTrace, burn_in: f64) -> Result<RateFit> {
    if trace.distance.is_empty() {
        return Err(Error::Precondition("trace has no distance series; evolve with a reference".into()));
    }
    fit_rate_window(&trace.times, &trace.distance, burn_in, trace.last_time())
}

/// Default burn-in, 20% of the horizon.
pub fn default_burn_in(t_end: f64) -> f64 {
    0.2 * t_end
}

/// `⟨u0, weight⟩`; pass `φ*` as the weight for non-even kernels.
pub fn weighted_mass(u0: &Field, weight: &Field) -> Result<f64> {
    inner_product(u0, weight)
}
