//! Explicit lower bound `a* = b_ε - Φ̄` on the spectral gap, with
//! `Φ(ξ) = min{σ² - ξ, η|Ω| + a₁ξ + a₂√ξ}` and `Ω = (-r, r)^dim`.

use rayon::prelude::*;

use crate::criteria::{compute_b_eps, TestSet};
use crate::error::{Error, Result};
use crate::grid::Field;
use crate::model::{validate, Kernel, Potential, Problem};
use crate::operator::DiscreteOperator;
use crate::quad::{gauss7, integrate, QuadOptions};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapConfig {
    /// Half-width `r` of `Ω`.
    pub omega_radius: f64,
    /// Set used for `b_ε`.
    pub set: TestSet,
}

impl GapConfig {
    pub fn new(omega_radius: f64, set: TestSet) -> Result<Self> {
        if !(omega_radius.is_finite() && omega_radius > 0.0) {
            return Err(Error::InvalidParameter(format!("omega radius must be positive, got {omega_radius}")));
        }
        Ok(Self { omega_radius, set })
    }

    /// `|Ω| = (2r)^dim`.
    pub fn omega_measure(&self, dim: usize) -> f64 {
        (2.0 * self.omega_radius).powi(dim as i32)
    }
}

/// How the part of `∫_{Ω^c} 1/W` beyond the truncation box was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TailKind {
    ClosedForm,
    Numeric,
    /// Table potentials: the tail is taken as zero.
    Omitted,
    Divergent,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapReport {
    pub eta: f64,
    pub a1: f64,
    pub a2: f64,
    pub omega_measure: f64,
    pub phi_bar: f64,
    /// Crossing point of the two branches of `Φ`.
    pub xi_star: f64,
    /// `η|Ω| + a₁σ² + a₂σ`.
    pub phi_bar_bound: f64,
    pub b_eps: f64,
    pub a_star: f64,
    /// True when `a* > 0`: the linear flow then converges at any rate `a < a*`.
    pub rate_claim: bool,
    pub tail: TailKind,
}

/// `η = esssup_{2Ω} K - essinf_{2Ω} K`.
pub fn compute_eta(kernel: &Kernel, omega_radius: f64) -> f64 {
    let (lo, hi) = kernel.extrema_over_box(2.0 * omega_radius);
    kernel.sigma2() * (hi - lo)
}

fn opts() -> QuadOptions {
    QuadOptions { abs_tol: 1e-15, rel_tol: 1e-12, max_intervals: 4000 }
}

/// `∫_{|x|_∞ > r} 1/W` split into a part inside the truncation box (numeric)
/// and a tail outside it.
pub fn inverse_potential_outside(w: &Potential, dim: usize, r: f64, box_radius: f64) -> Result<(f64, TailKind)> {
    let outer = box_radius.max(r);
    let inside = if outer > r { annulus_integral(w, dim, r, outer)? } else { 0.0 };
    let (tail, kind) = tail_integral(w, dim, outer)?;
    Ok((inside + tail, kind))
}

fn annulus_integral(w: &Potential, dim: usize, r: f64, big: f64) -> Result<f64> {
    let sing = w.singular_points_1d();
    if dim == 1 {
        let f = |x: f64| 1.0 / w.eval(&[x]);
        let right = integrate(f, r, big, &sing, opts())?.value;
        let left = integrate(f, -big, -r, &sing, opts())?.value;
        return Ok(right + left);
    }
    // [-big, big]² minus (-r, r)²: two full-width strips and two side blocks.
    let strip = |y0: f64, y1: f64, x0: f64, x1: f64| -> Result<f64> {
        let row = |y: f64| -> f64 {
            integrate(|x: f64| 1.0 / w.eval(&[x, y]), x0, x1, &[0.0], opts()).map(|q| q.value).unwrap_or(f64::NAN)
        };
        let q = integrate(row, y0, y1, &[0.0], opts())?.value;
        if q.is_finite() {
            Ok(q)
        } else {
            Err(Error::Quadrature { estimate: q, error_bound: f64::INFINITY, intervals: 0 })
        }
    };
    Ok(strip(r, big, -big, big)? + strip(-big, -r, -big, big)? + strip(-r, r, r, big)? + strip(-r, r, -big, -r)?)
}

fn tail_integral(w: &Potential, dim: usize, big: f64) -> Result<(f64, TailKind)> {
    if matches!(w.shape(), crate::model::PotentialShape::Table { .. }) {
        return Ok((0.0, TailKind::Omitted));
    }
    if let Some((m, scale)) = w.as_pure_power() {
        if m <= dim as f64 {
            return Ok((f64::INFINITY, TailKind::Divergent));
        }
        let v = if dim == 1 {
            2.0 * big.powf(1.0 - m) / ((m - 1.0) * scale)
        } else {
            let ang = integrate(|t: f64| t.cos().powf(m - 2.0), 0.0, std::f64::consts::FRAC_PI_4, &[], opts())?.value;
            8.0 * big.powf(2.0 - m) / ((m - 2.0) * scale) * ang
        };
        return Ok((v, TailKind::ClosedForm));
    }
    // ∫_ρ0^∞ g(ρ) dρ = ∫_0^1 g(ρ0/t) ρ0/t² dt.
    let radial_tail = |rho0: f64, power: i32| -> Result<f64> {
        let f = |t: f64| {
            let rho = rho0 / t;
            rho.powi(power) / w.eval_radial(rho) * rho0 / (t * t)
        };
        integrate(f, 0.0, 1.0, &[0.0], opts()).map(|q| q.value)
    };
    let v = if dim == 1 {
        let f = |t: f64| {
            let x = big / t;
            (1.0 / w.eval(&[x]) + 1.0 / w.eval(&[-x])) * big / (t * t)
        };
        integrate(f, 0.0, 1.0, &[0.0], opts()).map(|q| q.value)
    } else {
        let g = |th: f64| radial_tail(big / th.cos(), 1).unwrap_or(f64::NAN);
        integrate(g, 0.0, std::f64::consts::FRAC_PI_4, &[], opts()).map(|q| 8.0 * q.value)
    };
    match v {
        Ok(v) if v.is_finite() => Ok((v, TailKind::Numeric)),
        _ => Ok((f64::INFINITY, TailKind::Divergent)),
    }
}

/// `∫_{Ω^c} K(x-y)/W(y) dy` for one `x`.
fn outside_convolution(k: &Kernel, w: &Potential, r: f64, x: [f64; 2], dim: usize) -> Result<f64> {
    let (klo, khi) = k.axis_support();
    if dim == 1 {
        let f = |y: f64| k.axis_density(x[0] - y) / w.eval(&[y]);
        let mut bps = w.singular_points_1d();
        bps.extend(k.axis_breakpoints().iter().map(|b| x[0] - b));
        let (lo, hi) = (x[0] - khi, x[0] - klo);
        let mut total = 0.0;
        for (a, b) in [(lo, hi.min(-r)), (lo.max(r), hi)] {
            if b > a {
                total += integrate(f, a, b, &bps, opts())?.value;
            }
        }
        return Ok(k.sigma2() * total);
    }
    let lo = [x[0] - khi, x[1] - khi];
    let hi = [x[0] - klo, x[1] - klo];
    let big = f64::INFINITY;
    let pieces = [
        ([-big, -big], [-r, big]),
        ([r, -big], [big, big]),
        ([-r, -big], [r, -r]),
        ([-r, r], [r, big]),
    ];
    let f = |y: [f64; 2]| k.density(&[x[0] - y[0], x[1] - y[1]]) / w.eval(&y);
    let mut total = 0.0;
    for (plo, phi) in pieces {
        let a = [lo[0].max(plo[0]), lo[1].max(plo[1])];
        let b = [hi[0].min(phi[0]), hi[1].min(phi[1])];
        if b[0] > a[0] && b[1] > a[1] {
            total += tensor_gauss(&f, a, b, 6);
        }
    }
    Ok(k.sigma2() * total)
}

fn tensor_gauss(f: &impl Fn([f64; 2]) -> f64, a: [f64; 2], b: [f64; 2], panels: usize) -> f64 {
    let axis = |lo: f64, hi: f64| -> Vec<(f64, f64)> {
        (0..panels)
            .flat_map(|i| {
                let p0 = lo + (hi - lo) * i as f64 / panels as f64;
                let p1 = lo + (hi - lo) * (i + 1) as f64 / panels as f64;
                gauss7(p0, p1)
            })
            .collect()
    };
    let (ax, ay) = (axis(a[0], b[0]), axis(a[1], b[1]));
    ax.iter().map(|(x, wx)| ay.iter().map(|(y, wy)| wx * wy * f([*x, *y])).sum::<f64>()).sum()
}

/// `a₁ = essinf_{2Ω} K · ∫_{Ω^c} 1/W` and `a₂ = 2σ √(sup_x ∫_{Ω^c} K(x-y)/W(y) dy)`.
pub fn compute_a1_a2(problem: &Problem, omega_radius: f64) -> Result<(f64, f64, TailKind)> {
    let (k, w, grid) = (&problem.kernel, &problem.potential, &problem.grid);
    let dim = grid.dim();
    let r = omega_radius;
    let (kinf, _) = k.extrema_over_box(2.0 * r);
    let (outside, tail) = inverse_potential_outside(w, dim, r, grid.radius())?;
    let a1 = if kinf == 0.0 { 0.0 } else { k.sigma2() * kinf * outside };

    let big = grid.radius();
    let mut xs: Vec<[f64; 2]> = Vec::new();
    let mut candidates = vec![0.0];
    for b in k.axis_breakpoints() {
        for s in [-r, r] {
            candidates.push(s + b);
            candidates.push(s - b);
        }
    }
    if dim == 1 {
        let m = 4 * (grid.n() - 1);
        xs.extend((0..=m).map(|i| [-big + 2.0 * big * i as f64 / m as f64, 0.0]));
        xs.extend(candidates.iter().map(|&c| [c, 0.0]));
    } else {
        let m = 2 * (grid.n() - 1);
        let mut axis: Vec<f64> = (0..=m).map(|i| -big + 2.0 * big * i as f64 / m as f64).collect();
        axis.extend(candidates.iter().copied());
        for &a in &axis {
            for &b in &axis {
                xs.push([a, b]);
            }
        }
    }
    let vals = xs.par_iter().map(|&x| outside_convolution(k, w, r, x, dim)).collect::<Result<Vec<f64>>>()?;
    let sup = vals.iter().copied().fold(0.0, f64::max);
    let a2 = 2.0 * k.sigma() * sup.sqrt();
    Ok((a1, a2, tail))
}

/// `Φ(ξ)`.
pub fn phi(xi: f64, sigma2: f64, eta_meas: f64, a1: f64, a2: f64) -> f64 {
    (sigma2 - xi).min(eta_meas + a1 * xi + a2 * xi.sqrt())
}

/// `(Φ̄, ξ*)`: the first branch falls and the second rises, so the supremum
/// sits at their crossing in `[0, σ²]`, found by bisection.
pub fn phi_bar(sigma2: f64, eta_meas: f64, a1: f64, a2: f64, tol: f64) -> (f64, f64) {
    if !(eta_meas.is_finite() && a1.is_finite() && a2.is_finite()) {
        return (sigma2, 0.0);
    }
    let g = |xi: f64| eta_meas + a1 * xi + a2 * xi.sqrt();
    let h = |xi: f64| sigma2 - xi - g(xi);
    if h(0.0) <= 0.0 {
        return (sigma2, 0.0);
    }
    let (mut lo, mut hi) = (0.0, sigma2);
    if h(hi) > 0.0 {
        return (phi(hi, sigma2, eta_meas, a1, a2), hi);
    }
    while hi - lo > tol * sigma2 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if h(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (plo, phi_hi) = (phi(lo, sigma2, eta_meas, a1, a2), phi(hi, sigma2, eta_meas, a1, a2));
    if plo >= phi_hi {
        (plo, lo)
    } else {
        (phi_hi, hi)
    }
}

/// Samples of `(ξ, Φ(ξ))` on `[0, 2σ²]`.
pub fn phi_profile(report: &GapReport, sigma2: f64, samples: usize) -> Vec<(f64, f64)> {
    let em = report.eta * report.omega_measure;
    (0..=samples)
        .map(|i| {
            let xi = 2.0 * sigma2 * i as f64 / samples as f64;
            (xi, phi(xi, sigma2, em, report.a1, report.a2))
        })
        .collect()
}

/// Full gap report; needs an even kernel and a potential vanishing only at the origin.
pub fn gap_lower_bound(problem: &Problem, config: GapConfig, tol: f64) -> Result<GapReport> {
    if !problem.kernel.is_even() {
        return Err(Error::Precondition("the spectral-gap bound needs an even kernel".into()));
    }
    let rep = validate(problem);
    if !rep.get("potential_unique_zero").map(|c| c.passed).unwrap_or(false) {
        return Err(Error::Precondition("the spectral-gap bound needs W(0) = 0 and W > 0 elsewhere".into()));
    }
    let sigma2 = problem.sigma2();
    let eta = compute_eta(&problem.kernel, config.omega_radius);
    let (a1, a2, tail) = compute_a1_a2(problem, config.omega_radius)?;
    let meas = config.omega_measure(problem.grid.dim());
    let (phi_bar, xi_star) = phi_bar(sigma2, eta * meas, a1, a2, 1e-15);
    let b_eps = compute_b_eps(problem, config.set, tol)?;
    let a_star = b_eps - phi_bar;
    Ok(GapReport {
        eta,
        a1,
        a2,
        omega_measure: meas,
        phi_bar,
        xi_star,
        phi_bar_bound: eta * meas + a1 * sigma2 + a2 * sigma2.sqrt(),
        b_eps,
        a_star,
        rate_claim: a_star > 0.0,
        tail,
    })
}

/// Reports over several `Ω` radii and the one maximizing `a*`.
pub fn sweep_omega(problem: &Problem, set: TestSet, radii: &[f64], tol: f64) -> Result<(Vec<GapReport>, usize)> {
    if radii.is_empty() {
        return Err(Error::InvalidParameter("no omega radii to sweep".into()));
    }
    let reps = radii
        .par_iter()
        .map(|&r| gap_lower_bound(problem, GapConfig::new(r, set)?, tol))
        .collect::<Result<Vec<_>>>()?;
    let best = (0..reps.len()).max_by(|&i, &j| reps[i].a_star.total_cmp(&reps[j].a_star)).unwrap_or(0);
    Ok((reps, best))
}

/// Both sides of `⟨-Lu,u⟩/‖u‖² ≤ Φ(∫_{Ω^c} W u² / ‖u‖²)` for a mean-zero `u`.
pub fn functional_inequality(op: &DiscreteOperator, report: &GapReport, omega_radius: f64, u: &Field) -> Result<(f64, f64)> {
    let lhs = -op.rayleigh_quotient(u)?;
    let grid = op.grid();
    let w = op.weights();
    let (mut num, mut den) = (0.0, 0.0);
    for (i, (&ui, &wi)) in u.values().iter().zip(w).enumerate() {
        den += wi * ui * ui;
        let p = grid.point(i);
        if p[..grid.dim()].iter().any(|c| c.abs() >= omega_radius) {
            num += wi * op.potential()[i] * ui * ui;
        }
    }
    let xi = num / den;
    let rhs = phi(xi, op.sigma2(), report.eta * report.omega_measure, report.a1, report.a2);
    Ok((lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{mass, Grid};
    use crate::model::PotentialShape;
    use crate::operator::ConvMode;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn power_box(m: f64, sigma2: f64, n: usize) -> Problem {
        Problem::new(
            Kernel::box_kernel(2.0, sigma2.sqrt(), 1).unwrap(),
            Potential::power(m, 1.0).unwrap(),
            Grid::new(1, 3.0, n).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn eta_examples() {
        let s2: f64 = 0.1;
        assert_eq!(compute_eta(&Kernel::box_kernel(2.0, s2.sqrt(), 1).unwrap(), 1.0), 0.0);
        assert_abs_diff_eq!(compute_eta(&Kernel::box_kernel(1.0, s2.sqrt(), 1).unwrap(), 1.0), s2 / 2.0, epsilon = 1e-15);
        let g = Kernel::gaussian(0.7, 1.0, 1).unwrap();
        assert_abs_diff_eq!(compute_eta(&g, 0.4), g.k(&[0.0]) - g.k(&[0.8]), epsilon = 1e-15);
    }

    #[test]
    fn a1_a2_for_power_potential() {
        let (m, s2): (f64, f64) = (9.0, 0.1);
        let (a1, a2, tail) = compute_a1_a2(&power_box(m, s2, 256), 1.0).unwrap();
        assert_eq!(tail, TailKind::ClosedForm);
        // K = σ²/4 on 2Ω and ∫_{|y|>1} |y|^{-9} = 2/(m-1).
        assert_abs_diff_eq!(a1, s2 / (2.0 * (m - 1.0)), epsilon = 1e-12);
        // The supremum sits at x = 0, where the kernel reaches |y| ≤ 2.
        let exact = s2 * (2.0 * (1.0 - 2f64.powf(1.0 - m)) / (m - 1.0)).sqrt();
        assert_abs_diff_eq!(a2, exact, epsilon = 1e-12);
        assert_abs_diff_eq!(a1, 0.00625, epsilon = 1e-15);
        assert_abs_diff_eq!(a2, 0.0499022, epsilon = 1e-7);
        // The looser closed forms remain upper bounds.
        assert!(a1 <= s2 / (m - 1.0));
        assert!(a2 <= s2 * (2.0 * (1.0 - 5f64.powf(1.0 - m)) / (m - 1.0)).sqrt());
    }

    #[test]
    fn tails_match_closed_forms() {
        let w = Potential::power(4.0, 2.0).unwrap();
        let (v, kind) = tail_integral(&w, 1, 3.0).unwrap();
        assert_eq!(kind, TailKind::ClosedForm);
        assert_abs_diff_eq!(v, 2.0 * 3f64.powi(-3) / (3.0 * 2.0), epsilon = 1e-15);
        let shifted = Potential::new(PotentialShape::Power { m: 4.0 }, 2.0, Some(1e-300)).unwrap();
        let (n, kind) = tail_integral(&shifted, 1, 3.0).unwrap();
        assert_eq!(kind, TailKind::Numeric);
        assert_abs_diff_eq!(n, v, epsilon = 1e-12);
        let (v2, _) = tail_integral(&w, 2, 3.0).unwrap();
        let (n2, _) = tail_integral(&shifted, 2, 3.0).unwrap();
        assert_abs_diff_eq!(n2, v2, epsilon = 1e-10);
        let sq = Potential::new(PotentialShape::Sqrt, 1.0, None).unwrap();
        assert_eq!(tail_integral(&sq, 1, 3.0).unwrap().1, TailKind::Divergent);
    }

    #[test]
    fn phi_bar_degenerate_cases() {
        let (p, xi) = phi_bar(0.3, 0.0, 0.0, 0.0, 1e-15);
        assert_abs_diff_eq!(p, 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(xi, 0.3, epsilon = 1e-14);
        let (p, xi) = phi_bar(0.3, 0.1, 0.0, 0.0, 1e-15);
        assert_abs_diff_eq!(p, 0.1, epsilon = 1e-14);
        assert_abs_diff_eq!(xi, 0.2, epsilon = 1e-14);
        assert_eq!(phi_bar(0.3, 0.5, 0.0, 0.0, 1e-15).0, 0.3);
        assert_eq!(phi_bar(0.3, f64::INFINITY, 0.0, 0.0, 1e-15).0, 0.3);
    }

    #[test]
    fn phi_bar_is_monotone_in_each_parameter() {
        let base = phi_bar(0.1, 0.01, 0.02, 0.03, 1e-15).0;
        assert!(phi_bar(0.1, 0.02, 0.02, 0.03, 1e-15).0 >= base);
        assert!(phi_bar(0.1, 0.01, 0.05, 0.03, 1e-15).0 >= base);
        assert!(phi_bar(0.1, 0.01, 0.02, 0.06, 1e-15).0 >= base);
    }

    #[test]
    fn power_box_report() {
        let (m, s2): (f64, f64) = (9.0, 0.1);
        let rep = gap_lower_bound(&power_box(m, s2, 256), GapConfig::new(1.0, TestSet::new(1.0, 1e-8).unwrap()).unwrap(), 1e-12)
            .unwrap();
        assert_eq!(rep.eta, 0.0);
        assert!(rep.phi_bar <= rep.phi_bar_bound + 1e-10);
        let bound = s2 * (0.25 - s2 / (m - 1.0) - 2f64.sqrt() * s2.sqrt() / (m - 1.0).sqrt());
        assert!(rep.a_star >= bound - 1e-6, "{} < {bound}", rep.a_star);
        assert!(rep.rate_claim);
    }

    #[test]
    fn large_sigma_has_no_rate_claim() {
        let rep = gap_lower_bound(&power_box(3.0, 4.0, 128), GapConfig::new(1.0, TestSet::new(1.0, 1e-8).unwrap()).unwrap(), 1e-10)
            .unwrap();
        assert!(rep.a_star <= 0.0 && !rep.rate_claim);
    }

    #[test]
    fn preconditions_are_enforced() {
        let mut p = power_box(9.0, 0.1, 64);
        p.potential = Potential::new(PotentialShape::Power { m: 2.0 }, 1.0, Some(1.0)).unwrap();
        let cfg = GapConfig::new(1.0, TestSet::new(1.0, 0.0).unwrap()).unwrap();
        assert!(matches!(gap_lower_bound(&p, cfg, 1e-10), Err(Error::Precondition(_))));
    }

    #[test]
    fn functional_inequality_on_random_mean_zero_fields() {
        let p = power_box(9.0, 0.1, 128);
        let cfg = GapConfig::new(1.0, TestSet::new(1.0, 1e-8).unwrap()).unwrap();
        let rep = gap_lower_bound(&p, cfg, 1e-10).unwrap();
        let op = DiscreteOperator::new(p, ConvMode::PaddedFast);
        let g = *op.grid();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let mut u = Field::new(g, (0..128).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
            let c = mass(&u) / 6.0;
            u = u.map(|v| v - c);
            let (lhs, rhs) = functional_inequality(&op, &rep, 1.0, &u).unwrap();
            assert!(lhs <= rhs + 1e-8 * rhs.abs().max(1.0));
        }
    }

    #[test]
    fn sweep_picks_the_largest_a_star() {
        let p = power_box(9.0, 0.1, 128);
        let (reps, best) = sweep_omega(&p, TestSet::new(1.0, 1e-8).unwrap(), &[0.8, 1.0, 1.2], 1e-10).unwrap();
        assert!(reps.iter().all(|r| r.a_star <= reps[best].a_star));
    }

    #[test]
    fn two_dimensional_a1_a2_are_finite() {
        let p = Problem::new(
            Kernel::box_kernel(1.0, 1.0, 2).unwrap(),
            Potential::power(4.0, 1.0).unwrap(),
            Grid::new(2, 2.0, 12).unwrap(),
        )
        .unwrap();
        let (a1, a2, tail) = compute_a1_a2(&p, 0.5).unwrap();
        assert_eq!(tail, TailKind::ClosedForm);
        assert!(a1 > 0.0 && a2 > 0.0 && a1.is_finite() && a2.is_finite());
    }
}
