//! Globally adaptive Gauss–Kronrod (7/15) quadrature with forced breakpoints.
//!
//! Breakpoints split the range before any rule is applied, so integrable
//! endpoint singularities and kinks are never sampled: Kronrod nodes lie
//! strictly inside each subinterval.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];

// Gauss weights for XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Tolerances for [`integrate`]. Converged when `error ≤ max(abs_tol, rel_tol·|value|)`.
#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self { abs_tol: 1e-10, rel_tol: 1e-10, max_intervals: 4000 }
    }
}

impl QuadOptions {
    pub fn absolute(tol: f64) -> Self {
        Self { abs_tol: tol, rel_tol: 0.0, ..Self::default() }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub intervals: usize,
}

/// One Kronrod-15 panel on `[a, b]`; returns `(integral, error estimate)`.
pub fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let hl = 0.5 * (b - a);
    let fc = f(c);
    let mut resk = fc * WGK[7];
    let mut resg = fc * WG[3];
    let mut resabs = resk.abs();
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..7 {
        let dx = hl * XGK[j];
        let f1 = f(c - dx);
        let f2 = f(c + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        resk += WGK[j] * (f1 + f2);
        resabs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            resg += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * resk;
    let mut resasc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        resasc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let result = resk * hl;
    let resabs = resabs * hl.abs();
    let resasc = resasc * hl.abs();
    let mut err = ((resk - resg) * hl).abs();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * resabs);
    }
    (result, err)
}

/// Seven-point Gauss–Legendre nodes and weights mapped to `[a, b]`.
pub fn gauss7(a: f64, b: f64) -> [(f64, f64); 7] {
    let c = 0.5 * (a + b);
    let hl = 0.5 * (b - a);
    let mut out = [(c, WG[3] * hl); 7];
    for k in 0..3 {
        let dx = hl * XGK[2 * k + 1];
        out[2 * k] = (c - dx, WG[k] * hl);
        out[2 * k + 1] = (c + dx, WG[k] * hl);
    }
    out
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Integrates `f` over `[a, b]`, splitting first at every breakpoint inside the range.
pub fn integrate(
    f: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    opts: QuadOptions,
) -> Result<QuadResult> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::InvalidParameter("integration limits must be finite".into()));
    }
    if a == b {
        return Ok(QuadResult { value: 0.0, error: 0.0, intervals: 0 });
    }
    if a > b {
        let r = integrate(f, b, a, breakpoints, opts)?;
        return Ok(QuadResult { value: -r.value, ..r });
    }
    let mut pts: Vec<f64> = breakpoints.iter().copied().filter(|&p| p > a && p < b).collect();
    pts.push(a);
    pts.push(b);
    pts.sort_by(f64::total_cmp);
    pts.dedup();

    let mut heap = BinaryHeap::new();
    let (mut total, mut total_err) = (0.0, 0.0);
    for w in pts.windows(2) {
        let (value, error) = gk15(&f, w[0], w[1]);
        total += value;
        total_err += error;
        heap.push(Panel { a: w[0], b: w[1], value, error });
    }

    let done = |v: f64, e: f64| v.is_finite() && e <= opts.abs_tol.max(opts.rel_tol * v.abs());
    while !done(total, total_err) {
        if !total.is_finite() || !total_err.is_finite() || heap.len() >= opts.max_intervals {
            return Err(Error::Quadrature { estimate: total, error_bound: total_err, intervals: heap.len() });
        }
        let worst = heap.pop().expect("at least one panel");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            return Err(Error::Quadrature { estimate: total, error_bound: total_err, intervals: heap.len() + 1 });
        }
        let (v1, e1) = gk15(&f, worst.a, mid);
        let (v2, e2) = gk15(&f, mid, worst.b);
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.error;
        heap.push(Panel { a: worst.a, b: mid, value: v1, error: e1 });
        heap.push(Panel { a: mid, b: worst.b, value: v2, error: e2 });
        // Re-sum occasionally to keep cancellation drift out of the stopping test.
        if heap.len() % 64 == 0 {
            total = heap.iter().map(|p| p.value).sum();
            total_err = heap.iter().map(|p| p.error).sum();
        }
    }
    total = heap.iter().map(|p| p.value).sum();
    total_err = heap.iter().map(|p| p.error).sum();
    Ok(QuadResult { value: total, error: total_err, intervals: heap.len() })
}

/// `∫_a^b f` to absolute tolerance `tol`, never sampling at `singular_points`.
pub fn quad_adaptive(
    f: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    singular_points: &[f64],
    tol: f64,
) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {tol}")));
    }
    // Aim below the requested tolerance since the estimate is only an estimate.
    integrate(f, a, b, singular_points, QuadOptions::absolute(0.1 * tol)).map(|r| r.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn endpoint_singularity() {
        let v = quad_adaptive(|x| x.powf(-0.5), 0.0, 1.0, &[0.0], 1e-8).unwrap();
        assert_abs_diff_eq!(v, 2.0, epsilon = 1e-8);
    }

    #[test]
    fn interior_singularity() {
        let v = quad_adaptive(|x| 1.0 / x.abs().sqrt(), -1.0, 1.0, &[0.0], 1e-8).unwrap();
        assert_abs_diff_eq!(v, 4.0, epsilon = 1e-8);
    }

    #[test]
    fn two_sided_singularities() {
        let f = |x: f64| 2.0 / x.sqrt() * (1.0 + (1.0 - x).sqrt());
        let v = quad_adaptive(f, 0.0, 1.0, &[0.0, 1.0], 1e-6).unwrap();
        assert_abs_diff_eq!(v, 4.0 + PI, epsilon = 1e-6);
    }

    #[test]
    fn gauss7_integrates_degree_13() {
        let v: f64 = gauss7(-1.0, 2.0).iter().map(|(x, w)| w * x.powi(13)).sum();
        assert_abs_diff_eq!(v, (2f64.powi(14) - 1.0) / 14.0, epsilon = 1e-9);
    }

    #[test]
    fn reversed_limits_flip_sign() {
        let v = integrate(|x| x * x, 1.0, 0.0, &[], QuadOptions::default()).unwrap();
        assert_abs_diff_eq!(v.value, -1.0 / 3.0, epsilon = 1e-13);
    }

    #[test]
    fn divergent_integral_reports_estimate() {
        let err = quad_adaptive(|x| x.powi(-9), 0.0, 1.0, &[0.0], 1e-8).unwrap_err();
        match err {
            Error::Quadrature { estimate, .. } => assert!(!(estimate.abs() < 1e30)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn discontinuity_at_breakpoint_is_exact() {
        let f = |x: f64| if x < 0.3 { 1.0 } else { 5.0 };
        let v = integrate(f, 0.0, 1.0, &[0.3], QuadOptions::default()).unwrap();
        assert_abs_diff_eq!(v.value, 0.3 + 3.5, epsilon = 1e-13);
        assert_eq!(v.intervals, 2);
    }

    proptest! {
        #[test]
        fn additive_in_the_integrand(p in 0.1f64..0.7, c in -3.0f64..3.0, k in 0.5f64..6.0) {
            let tol = 1e-9;
            let f = |x: f64| x.powf(-p);
            let g = |x: f64| c * (k * x).sin();
            let a = quad_adaptive(f, 0.0, 1.0, &[0.0], tol).unwrap();
            let b = quad_adaptive(g, 0.0, 1.0, &[0.0], tol).unwrap();
            let s = quad_adaptive(|x| f(x) + g(x), 0.0, 1.0, &[0.0], tol).unwrap();
            prop_assert!((a + b - s).abs() <= 2.0 * tol);
        }
    }
}
