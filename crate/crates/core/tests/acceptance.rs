//! Acceptance criteria. Each test prints `[PASS]` or `[FAIL]` per check and
//! its runtime against the budget; tests share a lock so timings are not
//! distorted by parallel execution.

use std::f64::consts::PI;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use mutsel_core::criteria::{check_coville, check_linkjw, check_singularity, compute_b_eps, search_radius};
use mutsel_core::dynamics::{default_burn_in, fit_rate, fit_rate_window};
use mutsel_core::eigen::dense_spectrum;
use mutsel_core::gap::{compute_a1_a2, compute_eta, functional_inequality};
use mutsel_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

static SERIAL: Mutex<()> = Mutex::new(());

struct Criterion {
    id: u32,
    title: &'static str,
    budget: Duration,
    start: Instant,
    checks: Vec<(String, bool)>,
}

impl Criterion {
    fn new(id: u32, title: &'static str, budget_s: u64) -> Self {
        Self { id, title, budget: Duration::from_secs(budget_s), start: Instant::now(), checks: Vec::new() }
    }

    fn check(&mut self, ok: bool, what: impl Into<String>) {
        self.checks.push((what.into(), ok));
    }

    fn finish(mut self) {
        let elapsed = self.start.elapsed();
        self.check(
            elapsed < self.budget,
            format!("runtime {:.2} s < {} s", elapsed.as_secs_f64(), self.budget.as_secs()),
        );
        let all = self.checks.iter().all(|c| c.1);
        let mut out = format!("[{}] criterion {}: {}\n", if all { "PASS" } else { "FAIL" }, self.id, self.title);
        for (what, ok) in &self.checks {
            out.push_str(&format!("    [{}] {what}\n", if *ok { "PASS" } else { "FAIL" }));
        }
        println!("{out}");
        assert!(all, "criterion {} failed", self.id);
    }
}

fn sqrt_box(sigma2: f64) -> Problem {
    Problem::new(
        Kernel::box_kernel(1.0, sigma2.sqrt(), 1).unwrap(),
        Potential::new(PotentialShape::Sqrt, 1.0, None).unwrap(),
        Grid::new(1, 3.0, 129).unwrap(),
    )
    .unwrap()
}

fn power_box(m: f64, sigma2: f64, radius: f64, n: usize) -> Problem {
    Problem::new(
        Kernel::box_kernel(2.0, sigma2.sqrt(), 1).unwrap(),
        Potential::power(m, 1.0).unwrap(),
        Grid::new(1, radius, n).unwrap(),
    )
    .unwrap()
}

fn random_density(grid: Grid, rng: &mut ChaCha8Rng) -> Field {
    let u = Field::new(grid, (0..grid.len()).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();
    let m = mass(&u);
    u.scaled(1.0 / m)
}

fn lock() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

#[test]
fn criterion_01_sqrt_box_integrals() {
    let _g = lock();
    let mut c = Criterion::new(1, "square-root potential integrals", 1);
    let l = check_linkjw(&sqrt_box(1.0), TestSet::new(1.0, 0.0).unwrap(), 1e-10).unwrap();
    c.check((l.lhs - (4.0 + PI)).abs() <= 1e-4, format!("double integral {:.12} vs 4+π (tol 1e-4)", l.lhs));
    c.check((l.rhs - 4.0).abs() <= 1e-6, format!("single integral {:.12} vs 4 (tol 1e-6)", l.rhs));
    c.finish();
}

#[test]
fn criterion_02_radius_profile() {
    let _g = lock();
    let mut c = Criterion::new(2, "radius profile f(R)", 5);
    let p = sqrt_box(1.0);
    let sweep: Vec<f64> = (1..=2000).map(|i| i as f64 * 1e-3).collect();
    let s = search_radius(&p, 0.0, &sweep, 1e-10).unwrap();
    c.check((s.best_value - 2f64.sqrt()).abs() <= 1e-6, format!("max f = {:.12} vs √2", s.best_value));
    c.check((s.best_radius - 0.5).abs() <= 1e-3, format!("argmax R = {} vs 1/2 (step 1e-3)", s.best_radius));
    let samples: Vec<f64> = (1..=100).map(|i| i as f64 * 0.0199).collect();
    let prof = search_radius(&p, 0.0, &samples, 1e-10).unwrap().profile;
    let worst = prof
        .iter()
        .map(|&(r, f)| {
            let exact = if r <= 0.5 {
                2.0 * r.sqrt()
            } else if r <= 1.0 {
                r.sqrt() + (1.0 - r).sqrt()
            } else {
                r.sqrt() - (r - 1.0).sqrt()
            };
            (f - exact).abs()
        })
        .fold(0.0, f64::max);
    c.check(prof.len() == 100 && worst <= 1e-6, format!("closed form at 100 radii, max error {worst:.2e} (tol 1e-6)"));
    c.finish();
}

#[test]
fn criterion_03_threshold_separation() {
    let _g = lock();
    let mut c = Criterion::new(3, "square-root potential threshold separation", 10);
    let set = TestSet::new(1.0, 0.0).unwrap();
    let above = check_linkjw(&sqrt_box(0.5701), set, 1e-10).unwrap();
    let below = check_linkjw(&sqrt_box(0.5501), set, 1e-10).unwrap();
    c.check(above.holds, format!("linkJW holds at σ² = 0.5701 ({:.8} > {:.8})", above.lhs, above.rhs));
    c.check(!below.holds, format!("linkJW fails at σ² = 0.5501 ({:.8} ≤ {:.8})", below.lhs, below.rhs));
    let radii: Vec<f64> = (1..=300).map(|i| i as f64 * 0.01).collect();
    let low = sqrt_box(0.65);
    let runs: Vec<_> = radii.iter().map(|&r| check_coville(&low, TestSet::new(r, 0.0).unwrap(), 1e-10).unwrap()).collect();
    let best = runs.iter().fold(f64::NEG_INFINITY, |m, cv| m.max(0.65 * cv.essinf_value));
    c.check(
        runs.iter().all(|cv| !cv.holds),
        format!("Coville fails for every R at σ² = 0.65 (best σ²·f = {best:.8} ≤ 1)"),
    );
    let hi = check_coville(&sqrt_box(0.7171), TestSet::new(0.5, 0.0).unwrap(), 1e-10).unwrap();
    c.check(hi.holds, format!("Coville holds at σ² = 0.7171, R = 1/2 (σ²·f = {:.8} > 1)", 0.7171 * hi.essinf_value));
    c.finish();
}

#[test]
fn criterion_04_power_box_closed_forms() {
    let _g = lock();
    let mut c = Criterion::new(4, "power potential closed forms", 5);
    let (m, s2): (f64, f64) = (9.0, 0.1);
    let p = power_box(m, s2, 3.0, 256);
    let eta = compute_eta(&p.kernel, 1.0);
    c.check(eta == 0.0, format!("η = {eta}"));
    let (a1, a2, _) = compute_a1_a2(&p, 1.0).unwrap();
    let a1_claim = s2 / (m - 1.0);
    let a2_claim = s2 * (2.0 * (1.0 - 5f64.powf(1.0 - m)) / (m - 1.0)).sqrt();
    c.check((a1 - a1_claim).abs() <= 1e-10, format!("a1 = {a1:.12} vs σ²/(m-1) = {a1_claim:.12} (tol 1e-10)"));
    c.check((a2 - a2_claim).abs() <= 1e-10, format!("a2 = {a2:.12} vs σ²√(2(1-5^(1-m))/(m-1)) = {a2_claim:.12} (tol 1e-10)"));
    let mut prev = f64::NEG_INFINITY;
    let mut mono = true;
    let mut bs = Vec::new();
    for eps in [1e-4, 1e-6, 1e-8] {
        let b = compute_b_eps(&p, TestSet::new(1.0, eps).unwrap(), 1e-12).unwrap();
        mono &= b > prev && b < 0.025;
        prev = b;
        bs.push(b);
    }
    c.check(mono, format!("b_ε increases toward 0.025: {bs:.8?}"));
    let rep = gap_lower_bound(&p, GapConfig::new(1.0, TestSet::new(1.0, 1e-8).unwrap()).unwrap(), 1e-12).unwrap();
    let bound = 0.1 * (0.25 - 0.0125 - 2f64.sqrt() * 0.1f64.sqrt() / 8f64.sqrt());
    c.check(rep.a_star >= bound - 1e-12, format!("a* = {:.10} ≥ {bound:.10}", rep.a_star));
    c.finish();
}

#[test]
fn criterion_05_eigensolver_oracles() {
    let _g = lock();
    let mut c = Criterion::new(5, "eigensolver oracle equivalence", 30);
    let p = power_box(9.0, 0.1, 3.0, 256);
    let op = DiscreteOperator::new(p.clone(), ConvMode::PaddedFast);
    let opts = EigenOptions::with_tol(1e-12);
    let var = principal_eigenpair(&op, EigenMethod::Variational, opts).unwrap();
    let inv = principal_eigenpair(&op, EigenMethod::InversePower, opts).unwrap();
    let dense = spectrum_bottom(&op, 1).unwrap()[0];
    c.check((var.lambda1 - inv.lambda1).abs() <= 1e-8, format!("variational {:.14} vs inverse power {:.14}", var.lambda1, inv.lambda1));
    c.check((inv.lambda1 - dense).abs() <= 1e-8, format!("inverse power vs dense {dense:.14}"));
    let cert = verify_groundstate(&inv, &op).unwrap();
    c.check(cert.positivity, format!("φ > 0 at all nodes (min {:.3e})", cert.min_phi));
    let b = compute_b_eps(&p, TestSet::new(1.0, 1e-8).unwrap(), 1e-12).unwrap();
    c.check(
        -0.1 < inv.lambda1 && inv.lambda1 <= -b + 1e-3,
        format!("-σ² < λ₁ = {:.10} ≤ -b_ε + 1e-3 = {:.10}", inv.lambda1, -b + 1e-3),
    );
    c.check(cert.pointwise_bound, format!("pointwise bound, tightest slack {:.3e}", cert.pointwise_slack));
    c.finish();
}

#[test]
fn criterion_06_spectral_gap_on_grid() {
    let _g = lock();
    let mut c = Criterion::new(6, "spectral-gap theorem on the discretization", 30);
    let p = power_box(9.0, 0.1, 3.0, 256);
    let op = DiscreteOperator::new(p.clone(), ConvMode::PaddedFast);
    let rep = gap_lower_bound(&p, GapConfig::new(1.0, TestSet::new(1.0, 1e-8).unwrap()).unwrap(), 1e-12).unwrap();
    let spec = dense_spectrum(&op).unwrap();
    let worst = spec.values[1..].iter().copied().fold(f64::INFINITY, f64::min);
    c.check(worst >= -rep.phi_bar - 1e-3, format!("min λ≠λ₁ = {worst:.10} ≥ -Φ̄ - 1e-3 = {:.10}", -rep.phi_bar - 1e-3));
    let gap = spec.values[1] - spec.values[0];
    c.check(
        rep.a_star <= 0.0 || gap >= rep.a_star - 1e-3,
        format!("λ₂ - λ₁ = {gap:.10} ≥ a* - 1e-3 = {:.10}", rep.a_star - 1e-3),
    );
    c.finish();
}

#[test]
fn criterion_07_linear_dynamics() {
    let _g = lock();
    let mut c = Criterion::new(7, "linear dynamics", 60);
    let op = DiscreteOperator::new(power_box(9.0, 0.1, 3.0, 256), ConvMode::PaddedFast);
    let spec = dense_spectrum(&op).unwrap();
    let phi = spec.vector(0);
    let lstar = spec.values[0] + op.sigma2();
    let gap = spec.values[1] - spec.values[0];
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for k in 0..3 {
        let u0 = random_density(*op.grid(), &mut rng);
        let cw = weighted_mass(&u0, &phi).unwrap();
        let opts = EvolveOptions::new(10.0, 0.1).reference(phi.scaled(cw), lstar, Norm::L2);
        let tr = evolve_linear(&op, &u0, LinearScheme::DenseExpm, &opts).unwrap();
        let fit = fit_rate_window(&tr.times, &tr.distance, 1.0, 10.0).unwrap();
        c.check(
            (fit.rate - gap).abs() <= 0.1 * gap,
            format!("u0 #{k}: fitted rate {:.6} vs λ₂ - λ₁ = {gap:.6} (within 10%)", fit.rate),
        );
    }
    let small = DiscreteOperator::new(power_box(9.0, 0.1, 3.0, 64), ConvMode::PaddedFast);
    let u0 = random_density(*small.grid(), &mut rng);
    let opts = EvolveOptions::new(1.0, 1e-3).record_every(usize::MAX).keep_snapshots(true);
    let a = evolve_linear(&small, &u0, LinearScheme::ExpEuler, &opts).unwrap().snapshots.pop().unwrap();
    let b = evolve_linear(&small, &u0, LinearScheme::DenseExpm, &opts).unwrap().snapshots.pop().unwrap();
    let diff = a.sub(&b).unwrap().norm_sup();
    c.check(
        diff <= 1e-5,
        format!("exp_euler vs dense_expm, unit-mass u0: {diff:.3e} (relative {:.3e}, tol 1e-5)", diff / b.norm_sup()),
    );
    c.finish();
}

#[test]
fn criterion_08_nonlinear_dynamics() {
    let _g = lock();
    let mut c = Criterion::new(8, "nonlinear dynamics", 120);
    let op = DiscreteOperator::new(power_box(9.0, 0.1, 2.0, 128), ConvMode::PaddedFast);
    let g = *op.grid();
    let pair = principal_eigenpair(&op, EigenMethod::InversePower, EigenOptions::with_tol(1e-12)).unwrap();
    let target = pair.phi.scaled(1.0 / mass(&pair.phi));
    let norm = |f: Field| {
        let m = mass(&f);
        f.scaled(1.0 / m)
    };
    let inits = [
        ("shifted gaussian", norm(Field::from_fn(g, |x| (-(x[0] - 0.7).powi(2) / 0.1).exp()))),
        ("uniform", norm(Field::constant(g, 1.0))),
        ("bimodal", norm(Field::from_fn(g, |x| (-(x[0] + 1.0).powi(2) / 0.05).exp() + (-(x[0] - 1.0).powi(2) / 0.05).exp()))),
    ];
    let t_end = 20.0;
    for (name, u0) in inits {
        let opts = EvolveOptions::new(t_end, 1e-3).record_every(200).keep_snapshots(true).reference(target.clone(), 0.0, Norm::L1);
        let a = evolve_nonlinear(&op, &u0, NonlinearScheme::NormalizedLinear, &opts).unwrap();
        let b = evolve_nonlinear(&op, &u0, NonlinearScheme::DirectOde, &opts).unwrap();
        let fit = fit_rate(&a, default_burn_in(t_end)).unwrap();
        c.check(fit.rate > 0.0, format!("{name}: fitted L1 rate {:.6} > 0", fit.rate));
        let agree = a.snapshots.iter().zip(&b.snapshots).map(|(x, y)| x.sub(y).unwrap().norm_l1()).fold(0.0, f64::max);
        c.check(agree <= 1e-4, format!("{name}: routes agree in L1, max {agree:.3e} (tol 1e-4)"));
        let ma = a.mass.iter().map(|m| (m - 1.0).abs()).fold(0.0, f64::max);
        let mb = b.mass.iter().map(|m| (m - 1.0).abs()).fold(0.0, f64::max);
        c.check(ma <= 1e-12, format!("{name}: normalized mass defect {ma:.3e} (tol 1e-12)"));
        c.check(mb <= 1e-6, format!("{name}: direct mass defect {mb:.3e} (tol 1e-6)"));
        let lowest = a.snapshots.iter().chain(&b.snapshots).map(|s| s.min()).fold(f64::INFINITY, f64::min);
        c.check(lowest >= -1e-10, format!("{name}: min snapshot value {lowest:.3e} ≥ -1e-10"));
    }
    c.finish();
}

fn random_problem(rng: &mut ChaCha8Rng, n: usize) -> Problem {
    let kernel = if rng.gen_bool(0.5) {
        Kernel::box_kernel(rng.gen_range(0.3..2.0), rng.gen_range(0.3..1.5), 1).unwrap()
    } else {
        Kernel::gaussian(rng.gen_range(0.2..1.0), rng.gen_range(0.3..1.5), 1).unwrap()
    };
    let potential = Potential::power(rng.gen_range(1.0..4.0), rng.gen_range(0.5..2.0)).unwrap();
    Problem::new(kernel, potential, Grid::new(1, rng.gen_range(2.0..4.0), n).unwrap()).unwrap()
}

fn random_signed(grid: Grid, rng: &mut ChaCha8Rng) -> Field {
    Field::new(grid, (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

#[test]
fn criterion_09_property_suites() {
    let _g = lock();
    let mut c = Criterion::new(9, "property suites", 60);
    let mut rng = ChaCha8Rng::seed_from_u64(9);

    let mut worst = 0.0f64;
    for _ in 0..100 {
        let op = DiscreteOperator::new(random_problem(&mut rng, 96), ConvMode::PaddedFast);
        let (u, v) = (random_signed(*op.grid(), &mut rng), random_signed(*op.grid(), &mut rng));
        let luv = inner_product(&op.apply_l(&u).unwrap(), &v).unwrap();
        let ulv = inner_product(&u, &op.apply_l(&v).unwrap()).unwrap();
        worst = worst.max((luv - ulv).abs() / (u.norm_l2() * v.norm_l2()));
    }
    c.check(worst <= 1e-9, format!("self-adjointness defect {worst:.3e} on 100 pairs (tol 1e-9)"));

    let mut young = true;
    for _ in 0..100 {
        let op = DiscreteOperator::new(random_problem(&mut rng, 96), ConvMode::PaddedFast);
        let u = random_signed(*op.grid(), &mut rng);
        young &= op.convolve(&u).unwrap().norm_l2() <= op.sigma2() * u.norm_l2() * (1.0 + 1e-12);
    }
    c.check(young, "Young bound ‖K*u‖ ≤ σ²‖u‖ on 100 fields");

    let mut energy = true;
    for _ in 0..100 {
        let op = DiscreteOperator::new(random_problem(&mut rng, 96), ConvMode::PaddedFast);
        let u = random_signed(*op.grid(), &mut rng);
        let e = op.energy(&u).unwrap();
        energy &= op.energy(&u.map(f64::abs)).unwrap() <= e + 1e-12 * e.abs().max(1.0);
    }
    c.check(energy, "E(|u|) ≤ E(u) on 100 sign-mixed fields");

    let mut found = 0;
    let mut implied = true;
    while found < 20 {
        let s2 = rng.gen_range(0.72..2.0);
        let p = sqrt_box(s2);
        let set = TestSet::new(rng.gen_range(0.2..1.0), 0.0).unwrap();
        if check_coville(&p, set, 1e-9).unwrap().holds {
            found += 1;
            implied &= check_linkjw(&p, set, 1e-9).unwrap().holds;
        }
    }
    c.check(implied, "Coville ⟹ linkJW on 20 pairs where Coville holds");

    let p = power_box(9.0, 0.1, 3.0, 128);
    let rep = gap_lower_bound(&p, GapConfig::new(1.0, TestSet::new(1.0, 1e-8).unwrap()).unwrap(), 1e-10).unwrap();
    let op = DiscreteOperator::new(p, ConvMode::PaddedFast);
    let mut ok = true;
    for _ in 0..100 {
        let u = random_signed(*op.grid(), &mut rng);
        let mean = mass(&u) / 6.0;
        let u = u.map(|x| x - mean);
        let (lhs, rhs) = functional_inequality(&op, &rep, 1.0, &u).unwrap();
        ok &= lhs <= rhs + 1e-8 * rhs.abs().max(lhs.abs());
    }
    c.check(ok, "functional inequality on 100 mean-zero fields (slack 1e-8)");
    c.finish();
}

#[test]
fn criterion_10_non_even_kernel() {
    let _g = lock();
    let mut c = Criterion::new(10, "non-even kernel", 60);
    let p = Problem::new(
        Kernel::new(KernelShape::Box { half_width: 1.0, center: 0.5 }, 1.0, 1).unwrap(),
        Potential::power(2.0, 1.0).unwrap(),
        Grid::new(1, 6.0, 256).unwrap(),
    )
    .unwrap();
    let op = DiscreteOperator::new(p, ConvMode::PaddedFast);
    let opts = EigenOptions::with_tol(1e-12);
    let pair = principal_eigenpair(&op, EigenMethod::InversePower, opts).unwrap();
    let adj = adjoint_eigenpair(&op, &pair, opts).unwrap();
    c.check(pair.phi.min() > 0.0 && adj.phi_star.min() > 0.0, "φ and φ* positive");
    let overlap = inner_product(&adj.phi_star, &pair.phi).unwrap();
    c.check((overlap - 1.0).abs() <= 1e-10, format!("⟨φ*, φ⟩ = {overlap:.14}"));
    c.check(
        (adj.lambda - pair.lambda1).abs() <= 1e-8,
        format!("transpose eigenvalue {:.14} vs λ₁ = {:.14}", adj.lambda, pair.lambda1),
    );
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let u0 = random_density(*op.grid(), &mut rng);
    let cw = weighted_mass(&u0, &adj.phi_star).unwrap();
    let t_end = 10.0;
    let eo = EvolveOptions::new(t_end, 0.05).reference(pair.phi.scaled(cw), pair.lambda_star, Norm::L2);
    let tr = evolve_linear(&op, &u0, LinearScheme::DenseExpm, &eo).unwrap();
    let fit = fit_rate(&tr, default_burn_in(t_end)).unwrap();
    c.check(fit.rate > 0.0, format!("e^(λ*t) u(t) → ⟨φ*,u0⟩φ with fitted rate {:.6}", fit.rate));
    c.finish();
}

#[test]
fn criterion_11_singularity_detection() {
    let _g = lock();
    let mut c = Criterion::new(11, "singularity detection", 60);
    let s = check_singularity(&sqrt_box(0.3), 1e-10).unwrap();
    c.check(s.is_singular && (s.sup_value - 0.6).abs() <= 1e-6, format!("σ² = 0.3: sup {:.10}, singular", s.sup_value));
    let s = check_singularity(&sqrt_box(0.8), 1e-10).unwrap();
    c.check(!s.is_singular && (s.sup_value - 1.6).abs() <= 1e-6, format!("σ² = 0.8: sup {:.10}, not singular", s.sup_value));
    let peak = |n: usize| {
        let p = Problem { grid: Grid::new(1, 3.0, n).unwrap(), ..sqrt_box(0.3) };
        let op = DiscreteOperator::new(p, ConvMode::PaddedFast);
        principal_eigenpair(&op, EigenMethod::InversePower, EigenOptions::with_tol(1e-10)).unwrap().phi.max()
    };
    let (m1, m2) = (peak(257), peak(513));
    c.check(m2 >= 1.5 * m1, format!("max φ grows {:.4}× when n doubles (needs ≥ 1.5×)", m2 / m1));
    c.finish();
}
