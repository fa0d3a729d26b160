//! Numerical evaluation of the ground-state existence criteria, the lower
//! bound `b_ε` on `-λ₁`, and the atomic-ground-state (singularity) test.
//!
//! Candidate sets are centered boxes `B = [-R_B, R_B]^dim` cut down to
//! `B_ε = B ∩ [W ≥ ε]`. All integrals use the analytic kernel and potential.
//! One-dimensional integrals nest adaptive Gauss–Kronrod rules; in two
//! dimensions a composite Gauss rule is built line by line over `B_ε` and
//! refined once to estimate its error.

use std::cell::RefCell;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{Kernel, Potential, Problem};
use crate::quad::{gauss7, integrate, QuadOptions};

/// `B = [-radius, radius]^dim` and the level `eps` of `B_ε = B ∩ [W ≥ eps]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestSet {
    pub radius: f64,
    pub eps: f64,
}

impl TestSet {
    pub fn new(radius: f64, eps: f64) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::InvalidParameter(format!("set radius must be positive, got {radius}")));
        }
        if !(eps.is_finite() && eps >= 0.0) {
            return Err(Error::InvalidParameter(format!("eps must be nonnegative, got {eps}")));
        }
        Ok(Self { radius, eps })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkJw {
    /// `σ² ∬_{B_ε×B_ε} J(x-y) / (W(x) W(y))`.
    pub lhs: f64,
    /// `∫_{B_ε} 1/W`.
    pub rhs: f64,
    pub holds: bool,
    /// Estimated absolute error of `lhs - rhs`.
    pub error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coville {
    /// `essinf_{x ∈ B_ε} ∫_{B_ε} J(x-y)/W(y) dy` (without the `σ²` factor).
    pub essinf_value: f64,
    /// Sample point attaining the minimum (first coordinate in two dimensions).
    pub argmin: [f64; 2],
    pub holds: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Singularity {
    /// `σ² sup_x ∫ J(x-y)/W(y) dy`; `+∞` when the integral diverges.
    pub sup_value: f64,
    pub argmax: [f64; 2],
    pub is_singular: bool,
    pub divergent: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadiusSearch {
    pub best_radius: f64,
    pub best_value: f64,
    /// `(R, f(R))` with `f(R) = ∫_{[-R,R] ∩ [W ≥ ε]} J(R-y)/W(y) dy`.
    pub profile: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriteriaReport {
    pub linkjw: LinkJw,
    pub coville: Coville,
    pub b_eps: f64,
    pub singularity: Singularity,
    pub best_set: TestSet,
    /// False for non-even kernels, where the criteria are evaluated but not
    /// known to imply existence.
    pub theoretically_backed: bool,
}

fn opts(tol: f64) -> QuadOptions {
    QuadOptions { abs_tol: 1e-15, rel_tol: tol.max(1e-12), max_intervals: 4000 }
}

/// Sub-intervals of `[lo, hi]` where `W ≥ eps`.
pub fn level_set_intervals(w: &Potential, lo: f64, hi: f64, eps: f64) -> Result<Vec<(f64, f64)>> {
    let f = |x: f64| w.eval(&[x]);
    level_set_of(&f, &w.singular_points_1d(), lo, hi, eps)
}

fn level_set_of(f: &impl Fn(f64) -> f64, extra: &[f64], lo: f64, hi: f64, eps: f64) -> Result<Vec<(f64, f64)>> {
    const SAMPLES: usize = 4096;
    let mut xs: Vec<f64> = (0..=SAMPLES).map(|i| lo + (hi - lo) * i as f64 / SAMPLES as f64).collect();
    xs.extend(extra.iter().copied().filter(|&p| p > lo && p < hi));
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let inside = |x: f64| f(x) >= eps;
    if eps == 0.0 && xs.windows(2).any(|p| f(p[0]) == 0.0 && f(p[1]) == 0.0) {
        return Err(Error::Precondition("W vanishes on a set of positive measure inside B".into()));
    }
    let edge = |mut a: f64, mut b: f64| {
        // `inside(a) != inside(b)`; shrink to the switch point.
        let ia = inside(a);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if m <= a || m >= b {
                break;
            }
            if inside(m) == ia {
                a = m;
            } else {
                b = m;
            }
        }
        0.5 * (a + b)
    };
    let mut out = Vec::new();
    let mut start = if inside(xs[0]) { Some(xs[0]) } else { None };
    for p in xs.windows(2) {
        let (a, b) = (inside(p[0]), inside(p[1]));
        if a && !b {
            out.push((start.take().expect("open interval"), edge(p[0], p[1])));
        } else if !a && b {
            start = Some(edge(p[0], p[1]));
        }
    }
    if let Some(s) = start {
        out.push((s, hi));
    }
    out.retain(|(a, b)| b > a);
    Ok(out)
}

struct Line<'a> {
    k: &'a Kernel,
    w: &'a Potential,
    sing: Vec<f64>,
    opts: QuadOptions,
}

impl<'a> Line<'a> {
    fn new(p: &'a Problem, tol: f64) -> Self {
        Self { k: &p.kernel, w: &p.potential, sing: p.potential.singular_points_1d(), opts: opts(tol) }
    }

    /// `∫_{∪ intervals} J(x-y)/W(y) dy`.
    fn inner(&self, x: f64, intervals: &[(f64, f64)]) -> Result<f64> {
        let (klo, khi) = self.k.axis_support();
        let mut bps = self.sing.clone();
        bps.extend(self.k.axis_breakpoints().iter().map(|b| x - b));
        let f = |y: f64| self.k.axis_density(x - y) / self.w.eval(&[y]);
        let mut total = 0.0;
        for &(a, b) in intervals {
            let (a, b) = (a.max(x - khi), b.min(x - klo));
            if b > a {
                total += integrate(f, a, b, &bps, self.opts)?.value;
            }
        }
        Ok(total)
    }

    fn inverse_w(&self, intervals: &[(f64, f64)]) -> Result<(f64, f64)> {
        let f = |y: f64| 1.0 / self.w.eval(&[y]);
        let mut total = (0.0, 0.0);
        for &(a, b) in intervals {
            let r = integrate(f, a, b, &self.sing, self.opts)?;
            total.0 += r.value;
            total.1 += r.error;
        }
        Ok(total)
    }

    /// `∬ J(x-y)/(W(x)W(y))` over the union of intervals, squared.
    fn double(&self, intervals: &[(f64, f64)]) -> Result<(f64, f64)> {
        let failure: RefCell<Option<Error>> = RefCell::new(None);
        let inner_opts = Line { opts: QuadOptions { rel_tol: (self.opts.rel_tol * 1e-2).max(1e-13), ..self.opts }, ..self.clone_ref() };
        let g = |x: f64| match inner_opts.inner(x, intervals) {
            Ok(v) => v / self.w.eval(&[x]),
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                f64::NAN
            }
        };
        let mut bps = self.sing.clone();
        for &(a, b) in intervals {
            for kb in self.k.axis_breakpoints() {
                bps.push(a + kb);
                bps.push(b + kb);
            }
        }
        let mut total = (0.0, 0.0);
        for &(a, b) in intervals {
            let r = integrate(g, a, b, &bps, self.opts);
            if let Some(e) = failure.borrow_mut().take() {
                return Err(e);
            }
            let r = r?;
            total.0 += r.value;
            total.1 += r.error;
        }
        Ok(total)
    }

    fn clone_ref(&self) -> Line<'a> {
        Line { k: self.k, w: self.w, sing: self.sing.clone(), opts: self.opts }
    }
}

/// Node set of a composite rule over `B_ε` in two dimensions.
struct Rule2 {
    nodes: Vec<([f64; 2], f64)>,
    /// `weight / W(node)`.
    scaled: Vec<f64>,
}

fn graded_breaks(lo: f64, hi: f64, panels: usize, sing: &[f64], levels: usize) -> Vec<f64> {
    let mut b: Vec<f64> = (0..=panels).map(|i| lo + (hi - lo) * i as f64 / panels as f64).collect();
    let scale = (hi - lo) / panels as f64;
    for &s in sing.iter().filter(|&&s| s > lo && s < hi) {
        b.push(s);
        for k in 1..=levels {
            let d = scale * 0.5f64.powi(k as i32);
            b.push(s - d);
            b.push(s + d);
        }
    }
    b.retain(|&x| x >= lo && x <= hi);
    b.sort_by(f64::total_cmp);
    b.dedup();
    b
}

fn composite(a: f64, b: f64, breaks: &[f64]) -> Vec<(f64, f64)> {
    let mut pts = vec![a];
    pts.extend(breaks.iter().copied().filter(|&x| x > a && x < b));
    pts.push(b);
    pts.windows(2).flat_map(|p| gauss7(p[0], p[1])).collect()
}

impl Rule2 {
    /// `panels` uniform panels per axis, plus `grading` geometric levels toward
    /// the origin and toward the lines tangent to the level set.
    fn new(w: &Potential, lo: [f64; 2], hi: [f64; 2], eps: f64, panels: usize, grading: usize) -> Result<Self> {
        let sing = [0.0];
        // Lines tangent to the level set bound regions where the line length has a square-root kink.
        let mut outer_sing = vec![0.0];
        for (a, b) in level_set_of(&|x0: f64| w.eval(&[x0, 0.0]), &sing, lo[0], hi[0], eps)? {
            outer_sing.extend([a, b]);
        }
        let outer_breaks = graded_breaks(lo[0], hi[0], panels, &outer_sing, grading + 2);
        let inner_breaks = graded_breaks(lo[1], hi[1], panels, &sing, grading);
        let mut nodes = Vec::new();
        for (x0, w0) in composite(lo[0], hi[0], &outer_breaks) {
            let f = |x1: f64| w.eval(&[x0, x1]);
            for (a, b) in level_set_of(&f, &sing, lo[1], hi[1], eps)? {
                for (x1, w1) in composite(a, b, &inner_breaks) {
                    nodes.push(([x0, x1], w0 * w1));
                }
            }
        }
        let scaled = nodes.iter().map(|(y, wt)| wt / w.eval(y)).collect();
        Ok(Self { nodes, scaled })
    }

    /// Rule for sums that are linear in the node count.
    fn linear(w: &Potential, lo: [f64; 2], hi: [f64; 2], eps: f64, fine: bool) -> Result<Self> {
        if fine {
            Self::new(w, lo, hi, eps, 16, 10)
        } else {
            Self::new(w, lo, hi, eps, 8, 8)
        }
    }

    /// Rule for the quadratic pair sum of the double integral.
    fn pairwise(w: &Potential, lo: [f64; 2], hi: [f64; 2], eps: f64, fine: bool) -> Result<Self> {
        if fine {
            Self::new(w, lo, hi, eps, 3, 2)
        } else {
            Self::new(w, lo, hi, eps, 2, 1)
        }
    }
}

fn inner_2d(k: &Kernel, rule: &Rule2, x: [f64; 2]) -> f64 {
    rule.nodes
        .iter()
        .zip(&rule.scaled)
        .map(|((y, _), s)| {
            let j = k.density(&[x[0] - y[0], x[1] - y[1]]);
            if j == 0.0 {
                0.0
            } else {
                s * j
            }
        })
        .sum()
}

fn intervals_1d(p: &Problem, set: TestSet) -> Result<Vec<(f64, f64)>> {
    let iv = level_set_intervals(&p.potential, -set.radius, set.radius, set.eps)?;
    if iv.is_empty() {
        return Err(Error::Precondition(format!(
            "B_eps is empty for radius {} and eps {}",
            set.radius, set.eps
        )));
    }
    Ok(iv)
}

fn check_tol(tol: f64) -> Result<()> {
    if tol > 0.0 && tol < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("relative tolerance must lie in (0, 1), got {tol}")))
    }
}

/// `σ² ∬_{B_ε×B_ε} J(x-y)/(W(x)W(y)) dx dy > ∫_{B_ε} 1/W`.
pub fn check_linkjw(problem: &Problem, set: TestSet, tol: f64) -> Result<LinkJw> {
    check_tol(tol)?;
    let s2 = problem.sigma2();
    let (double, derr, rhs, rerr) = if problem.grid.dim() == 1 {
        let line = Line::new(problem, tol);
        let iv = intervals_1d(problem, set)?;
        let (d, de) = line.double(&iv)?;
        let (r, re) = line.inverse_w(&iv)?;
        (d, de, r, re)
    } else {
        let (k, w) = (&problem.kernel, &problem.potential);
        let r = set.radius;
        let (lo, hi) = ([-r, -r], [r, r]);
        let double = |rule: &Rule2| -> f64 {
            rule.nodes.par_iter().zip(&rule.scaled).map(|((x, _), sx)| sx * inner_2d(k, rule, *x)).sum()
        };
        let inv = |rule: &Rule2| -> f64 { rule.scaled.iter().sum() };
        let dc = double(&Rule2::pairwise(w, lo, hi, set.eps, false)?);
        let df = double(&Rule2::pairwise(w, lo, hi, set.eps, true)?);
        let rc = inv(&Rule2::linear(w, lo, hi, set.eps, false)?);
        let rf = inv(&Rule2::linear(w, lo, hi, set.eps, true)?);
        let (de, re) = ((df - dc).abs(), (rf - rc).abs());
        if s2 * de + re > tol * (s2 * df).abs().max(rf.abs()) {
            return Err(Error::Quadrature { estimate: s2 * df - rf, error_bound: s2 * de + re, intervals: 2 });
        }
        (df, de, rf, re)
    };
    let lhs = s2 * double;
    Ok(LinkJw { lhs, rhs, holds: lhs > rhs, error: s2 * derr + rerr })
}

fn coville_samples(a: f64, b: f64) -> Vec<f64> {
    let mut xs: Vec<f64> = (0..=400).map(|i| a + (b - a) * i as f64 / 400.0).collect();
    let len = b - a;
    for k in 1..=30 {
        let d = len * 0.5f64.powi(k + 8);
        xs.push(a + d);
        xs.push(b - d);
    }
    xs.sort_by(f64::total_cmp);
    xs
}

/// `σ² essinf_{x ∈ B_ε} ∫_{B_ε} J(x-y)/W(y) dy > 1`, with the infimum over a
/// sample refined toward the edges of `B_ε`.
pub fn check_coville(problem: &Problem, set: TestSet, tol: f64) -> Result<Coville> {
    check_tol(tol)?;
    let (value, arg) = if problem.grid.dim() == 1 {
        let line = Line::new(problem, tol);
        let iv = intervals_1d(problem, set)?;
        let xs: Vec<f64> = iv.iter().flat_map(|&(a, b)| coville_samples(a, b)).collect();
        let vals = xs.par_iter().map(|&x| line.inner(x, &iv)).collect::<Result<Vec<f64>>>()?;
        argmin(&xs.iter().map(|&x| [x, 0.0]).collect::<Vec<_>>(), &vals)
    } else {
        let (k, w) = (&problem.kernel, &problem.potential);
        let r = set.radius;
        let rule = Rule2::linear(w, [-r, -r], [r, r], set.eps, false)?;
        // Boundary of B plus a coarse interior lattice; the boundary of the
        // level set is hit by the lines through it.
        let mut xs = Vec::new();
        for t in coville_samples(-r, r).into_iter().step_by(4) {
            xs.extend([[t, -r], [t, r], [-r, t], [r, t]]);
        }
        for i in 0..=20 {
            for j in 0..=20 {
                xs.push([-r + 2.0 * r * i as f64 / 20.0, -r + 2.0 * r * j as f64 / 20.0]);
            }
        }
        xs.retain(|x| w.eval(x) >= set.eps);
        let vals: Vec<f64> = xs.par_iter().map(|&x| inner_2d(k, &rule, x)).collect();
        argmin(&xs, &vals)
    };
    Ok(Coville { essinf_value: value, argmin: arg, holds: problem.sigma2() * value > 1.0 })
}

fn argmin(xs: &[[f64; 2]], vals: &[f64]) -> (f64, [f64; 2]) {
    let mut best = (f64::INFINITY, [0.0, 0.0]);
    for (x, &v) in xs.iter().zip(vals) {
        if v < best.0 {
            best = (v, *x);
        }
    }
    best
}

/// Profile of `f(R) = ∫_{[-R,R] ∩ [W ≥ ε]} J(R-y)/W(y) dy` and its maximizer (one dimension).
pub fn search_radius(problem: &Problem, eps: f64, radii: &[f64], tol: f64) -> Result<RadiusSearch> {
    check_tol(tol)?;
    if problem.grid.dim() != 1 {
        return Err(Error::Precondition("the radius search is one-dimensional".into()));
    }
    if radii.is_empty() || radii.iter().any(|&r| !(r > 0.0)) || radii.windows(2).any(|p| p[1] <= p[0]) {
        return Err(Error::InvalidParameter("radii must be positive and strictly ascending".into()));
    }
    let line = Line::new(problem, tol);
    let profile = radii
        .par_iter()
        .map(|&r| {
            let iv = level_set_intervals(&problem.potential, -r, r, eps)?;
            Ok((r, line.inner(r, &iv)?))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let (best_radius, best_value) =
        profile.iter().copied().fold((f64::NAN, f64::NEG_INFINITY), |acc, p| if p.1 > acc.1 { p } else { acc });
    Ok(RadiusSearch { best_radius, best_value, profile })
}

/// `b_ε = (σ² ∬ J/(W W) - ∫ 1/W) (∫ 1/W)⁻²`; nonpositive when the link criterion fails.
pub fn compute_b_eps(problem: &Problem, set: TestSet, tol: f64) -> Result<f64> {
    let l = check_linkjw(problem, set, tol)?;
    Ok((l.lhs - l.rhs) / (l.rhs * l.rhs))
}

/// `σ² sup_x ∫ J(x-y)/W(y) dy < 1` flags an atomic ground state. Values
/// within `tol` of 1 are not flagged.
pub fn check_singularity(problem: &Problem, tol: f64) -> Result<Singularity> {
    check_tol(tol)?;
    let s2 = problem.sigma2();
    let grid = problem.grid;
    let k = &problem.kernel;
    let mut xs: Vec<[f64; 2]> = Vec::new();
    if grid.dim() == 1 {
        let fine = 4 * (grid.n() - 1);
        xs.extend((0..=fine).map(|i| [-grid.radius() + 2.0 * grid.radius() * i as f64 / fine as f64, 0.0]));
        for s in problem.potential.singular_points_1d() {
            xs.push([s, 0.0]);
            for b in k.axis_breakpoints() {
                xs.push([s + b, 0.0]);
            }
        }
        let line = Line::new(problem, tol);
        let (klo, khi) = k.axis_support();
        let vals: Vec<Result<f64>> = xs.par_iter().map(|x| line.inner(x[0], &[(x[0] - khi, x[0] - klo)])).collect();
        let mut best = (f64::NEG_INFINITY, [0.0, 0.0]);
        for (x, v) in xs.iter().zip(vals) {
            match v {
                Ok(v) if v > best.0 => best = (v, *x),
                Ok(_) => {}
                Err(Error::Quadrature { .. }) => {
                    return Ok(Singularity { sup_value: f64::INFINITY, argmax: *x, is_singular: false, divergent: true })
                }
                Err(e) => return Err(e),
            }
        }
        let sup_value = s2 * best.0;
        Ok(Singularity { sup_value, argmax: best.1, is_singular: sup_value < 1.0 - tol, divergent: false })
    } else {
        let w = &problem.potential;
        let r = grid.radius();
        let (klo, khi) = k.axis_support();
        let rule = Rule2::linear(w, [-r - khi, -r - khi], [r - klo, r - klo], 0.0, false)?;
        let m = 2 * (grid.n() - 1);
        for i in 0..=m {
            for j in 0..=m {
                xs.push([-r + 2.0 * r * i as f64 / m as f64, -r + 2.0 * r * j as f64 / m as f64]);
            }
        }
        xs.push([0.0, 0.0]);
        let vals: Vec<f64> = xs.par_iter().map(|&x| inner_2d(k, &rule, x)).collect();
        let (neg, arg) = argmin(&xs, &vals.iter().map(|v| -v).collect::<Vec<_>>());
        let sup_value = -s2 * neg;
        let divergent = !sup_value.is_finite();
        Ok(Singularity { sup_value, argmax: arg, is_singular: !divergent && sup_value < 1.0 - tol, divergent })
    }
}

/// All criteria on one set.
pub fn evaluate(problem: &Problem, set: TestSet, tol: f64) -> Result<CriteriaReport> {
    let linkjw = check_linkjw(problem, set, tol)?;
    let coville = check_coville(problem, set, tol)?;
    let singularity = check_singularity(problem, tol)?;
    Ok(CriteriaReport {
        b_eps: (linkjw.lhs - linkjw.rhs) / (linkjw.rhs * linkjw.rhs),
        linkjw,
        coville,
        singularity,
        best_set: set,
        theoretically_backed: problem.kernel.is_even(),
    })
}
