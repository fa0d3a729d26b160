//! Built-in reproduction runs for the two worked examples: the square-root
//! potential with a unit box kernel, and power potentials with a box of width 4.

use std::f64::consts::{PI, SQRT_2};
use std::fmt::Write as _;
use std::path::Path;

use mutsel_core::criteria::{check_coville, check_linkjw, check_singularity, search_radius};
use mutsel_core::dynamics::fit_rate;
use mutsel_core::gap::phi_bar;
use mutsel_core::{
    evolve_linear, gap_lower_bound, mass, principal_eigenpair, spectrum_bottom, weighted_mass, ConvMode,
    DiscreteOperator, EigenMethod, EigenOptions, EvolveOptions, Field, GapConfig, Grid, Kernel, LinearScheme, Norm,
    Potential, PotentialShape, Problem, TestSet,
};
use rayon::prelude::*;

use crate::report::{fmt_f64, Assertion, Report};
use crate::{io_err, CliError};

fn core(e: mutsel_core::Error) -> CliError {
    CliError::from_core("reproduce", e)
}

fn sqrt_problem(sigma2: f64) -> Result<Problem, CliError> {
    Problem::new(
        Kernel::box_kernel(1.0, sigma2.sqrt(), 1).map_err(core)?,
        Potential::new(PotentialShape::Sqrt, 1.0, None).map_err(core)?,
        Grid::new(1, 3.0, 129).map_err(core)?,
    )
    .map_err(core)
}

fn power_problem(m: f64, sigma2: f64) -> Result<Problem, CliError> {
    Problem::new(
        Kernel::box_kernel(2.0, sigma2.sqrt(), 1).map_err(core)?,
        Potential::power(m, 1.0).map_err(core)?,
        Grid::new(1, 3.0, 256).map_err(core)?,
    )
    .map_err(core)
}

fn assert_close(name: &str, got: f64, want: f64, tol: f64) -> Assertion {
    Assertion {
        name: name.to_string(),
        passed: (got - want).abs() <= tol,
        detail: format!("got {}, expected {} (tol {tol:e})", fmt_f64(got), fmt_f64(want)),
    }
}

fn assert_that(name: &str, passed: bool, detail: String) -> Assertion {
    Assertion { name: name.to_string(), passed, detail }
}

fn finish(report: &mut Report, list: &[Assertion]) -> Result<(), CliError> {
    report.assertions(list);
    let failed: Vec<&str> = list.iter().filter(|a| !a.passed).map(|a| a.name.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Reproduction(failed.join(", ")))
    }
}

fn write_table(dir: &Path, header: &str, rows: &[String]) -> Result<(), CliError> {
    let mut s = String::new();
    let _ = writeln!(s, "{header}");
    for r in rows {
        let _ = writeln!(s, "{r}");
    }
    let path = dir.join("table.csv");
    std::fs::write(&path, s).map_err(|e| io_err(&path, e))
}

struct SqrtRow {
    sigma2: f64,
    linkjw_lhs: f64,
    linkjw_rhs: f64,
    linkjw: bool,
    coville_radius: f64,
    coville_value: f64,
    coville: bool,
    sing_sup: f64,
    singular: bool,
}

fn sqrt_row(sigma2: f64, radii: &[f64]) -> Result<SqrtRow, CliError> {
    let p = sqrt_problem(sigma2)?;
    let l = check_linkjw(&p, TestSet::new(1.0, 0.0).map_err(core)?, 1e-10).map_err(core)?;
    let mut best = (f64::NAN, f64::NEG_INFINITY, false);
    for &r in radii {
        let c = check_coville(&p, TestSet::new(r, 0.0).map_err(core)?, 1e-10).map_err(core)?;
        let v = sigma2 * c.essinf_value;
        if v > best.1 {
            best = (r, v, c.holds);
        }
    }
    let s = check_singularity(&p, 1e-10).map_err(core)?;
    Ok(SqrtRow {
        sigma2,
        linkjw_lhs: l.lhs,
        linkjw_rhs: l.rhs,
        linkjw: l.holds,
        coville_radius: best.0,
        coville_value: best.1,
        coville: best.2,
        sing_sup: s.sup_value,
        singular: s.is_singular,
    })
}

fn f_exact(r: f64) -> f64 {
    if r <= 0.5 {
        2.0 * r.sqrt()
    } else if r <= 1.0 {
        r.sqrt() + (1.0 - r).sqrt()
    } else {
        r.sqrt() - (r - 1.0).sqrt()
    }
}

/// Square-root potential: the two criterion thresholds `4/(4+π)` and `1/√2`.
pub fn example1(dir: &Path, report: &mut Report) -> Result<(), CliError> {
    let t_link = 4.0 / (4.0 + PI);
    let t_cov = 1.0 / SQRT_2;
    let sweep = [0.50, 0.55, t_link + 1e-3, 0.65, t_cov + 1e-3, 0.80];
    let radii: Vec<f64> = (1..=300).map(|i| i as f64 * 0.01).collect();
    let rows: Vec<SqrtRow> = sweep.par_iter().map(|&s2| sqrt_row(s2, &radii)).collect::<Result<_, _>>()?;

    let mut list = Vec::new();
    report.section("thresholds").num("linkjw", t_link).num("coville", t_cov);
    for r in &rows {
        let key = format!("sigma2={:.6}", r.sigma2);
        report.section(&key);
        report.num("linkjw.lhs", r.linkjw_lhs).num("linkjw.rhs", r.linkjw_rhs).flag("linkjw.holds", r.linkjw);
        report.num("coville.best_radius", r.coville_radius).num("coville.best_value", r.coville_value);
        report.flag("coville.holds", r.coville);
        report.num("singularity.sup_value", r.sing_sup).flag("singularity.is_singular", r.singular);
        list.push(assert_that(
            &format!("{key}.linkjw"),
            r.linkjw == (r.sigma2 > t_link),
            format!("holds = {}, expected {}", r.linkjw, r.sigma2 > t_link),
        ));
        list.push(assert_that(
            &format!("{key}.coville"),
            r.coville == (r.sigma2 > t_cov),
            format!("holds = {} (best σ²·f = {}), expected {}", r.coville, fmt_f64(r.coville_value), r.sigma2 > t_cov),
        ));
    }

    let unit = sqrt_problem(1.0)?;
    let l = check_linkjw(&unit, TestSet::new(1.0, 0.0).map_err(core)?, 1e-10).map_err(core)?;
    list.push(assert_close("integral.double", l.lhs, 4.0 + PI, 1e-4));
    list.push(assert_close("integral.single", l.rhs, 4.0, 1e-6));

    let fine: Vec<f64> = (1..=2000).map(|i| i as f64 * 1e-3).collect();
    let s = search_radius(&unit, 0.0, &fine, 1e-10).map_err(core)?;
    list.push(assert_close("profile.max", s.best_value, SQRT_2, 1e-6));
    list.push(assert_close("profile.argmax", s.best_radius, 0.5, 1e-3));
    let worst = s.profile.iter().map(|&(r, f)| (f - f_exact(r)).abs()).fold(0.0, f64::max);
    list.push(assert_that("profile.closed_form", worst <= 1e-6, format!("max error {} over {} radii (tol 1e-6)", fmt_f64(worst), s.profile.len())));

    let table: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{},{},{},{},{}",
                fmt_f64(r.sigma2),
                fmt_f64(r.linkjw_lhs),
                fmt_f64(r.linkjw_rhs),
                r.linkjw,
                fmt_f64(r.coville_radius),
                fmt_f64(r.coville_value),
                r.coville,
                fmt_f64(r.sing_sup),
                r.singular
            )
        })
        .collect();
    write_table(
        dir,
        "sigma2,linkjw_lhs,linkjw_rhs,linkjw_holds,coville_best_radius,coville_best_value,coville_holds,singularity_sup,is_singular",
        &table,
    )?;
    finish(report, &list)
}

struct PowerRow {
    m: f64,
    sigma2: f64,
    eta: f64,
    a1: f64,
    a2: f64,
    phi_bar: f64,
    b_eps: f64,
    a_star: f64,
    bound: f64,
    gap: f64,
    rate: f64,
}

fn power_row(m: f64, sigma2: f64) -> Result<PowerRow, CliError> {
    let p = power_problem(m, sigma2)?;
    let set = TestSet::new(1.0, 1e-8).map_err(core)?;
    let g = gap_lower_bound(&p, GapConfig::new(1.0, set).map_err(core)?, 1e-12).map_err(core)?;
    let s = sigma2.sqrt();
    let bound = sigma2 * (0.25 - sigma2 / (m - 1.0) - SQRT_2 * s / (m - 1.0).sqrt());

    let op = DiscreteOperator::new(p, ConvMode::PaddedFast);
    let pair = principal_eigenpair(&op, EigenMethod::InversePower, EigenOptions::with_tol(1e-12)).map_err(core)?;
    let spec = spectrum_bottom(&op, 2).map_err(core)?;
    let bump = Field::from_fn(*op.grid(), |x| (-0.5 * ((x[0] - 0.3) / 0.5).powi(2)).exp());
    let u0 = bump.scaled(1.0 / mass(&bump));
    let c = weighted_mass(&u0, &pair.phi).map_err(core)?;
    let opts = EvolveOptions::new(10.0, 0.1).reference(pair.phi.scaled(c), pair.lambda_star, Norm::L2);
    let trace = evolve_linear(&op, &u0, LinearScheme::DenseExpm, &opts).map_err(core)?;
    let rate = fit_rate(&trace, 1.0).map_err(core)?.rate;
    Ok(PowerRow {
        m,
        sigma2,
        eta: g.eta,
        a1: g.a1,
        a2: g.a2,
        phi_bar: g.phi_bar,
        b_eps: g.b_eps,
        a_star: g.a_star,
        bound,
        gap: spec[1] - spec[0],
        rate,
    })
}

/// Power potentials `|x|^m`: η, a₁, a₂, Φ̄, b_ε and a*, checked against their
/// closed forms and against the observed decay of the linear flow.
pub fn example2(dir: &Path, report: &mut Report) -> Result<(), CliError> {
    let cases = [(9.0, 0.1), (17.0, 0.1), (9.0, 0.05)];
    let rows: Vec<PowerRow> = cases.par_iter().map(|&(m, s2)| power_row(m, s2)).collect::<Result<_, _>>()?;

    let mut list = Vec::new();
    for r in &rows {
        let key = format!("m={},sigma2={}", r.m, r.sigma2);
        let (m, s2) = (r.m, r.sigma2);
        let a1_claimed = s2 / (m - 1.0);
        let a2_claimed = s2 * (2.0 * (1.0 - 5f64.powf(1.0 - m)) / (m - 1.0)).sqrt();
        let a1_exact = s2 / (2.0 * (m - 1.0));
        let a2_exact = s2 * (2.0 * (1.0 - 2f64.powf(1.0 - m)) / (m - 1.0)).sqrt();
        let (pb, _) = phi_bar(s2, r.eta * 2.0, r.a1, r.a2, 1e-14);

        report.section(&key);
        report.num("eta", r.eta).num("a1", r.a1).num("a2", r.a2);
        report.num("phi_bar", r.phi_bar).num("b_eps", r.b_eps).num("a_star", r.a_star);
        report.num("a_star.lower_bound", r.bound).num("dense.gap", r.gap).num("rate", r.rate);

        list.push(assert_that(&format!("{key}.eta"), r.eta == 0.0, format!("η = {}", fmt_f64(r.eta))));
        list.push(assert_close(&format!("{key}.a1"), r.a1, a1_claimed, 1e-8));
        list.push(assert_close(&format!("{key}.a2"), r.a2, a2_claimed, 1e-10));
        list.push(assert_close(&format!("{key}.a1_exact"), r.a1, a1_exact, 1e-10));
        list.push(assert_close(&format!("{key}.a2_exact"), r.a2, a2_exact, 1e-10));
        list.push(assert_that(
            &format!("{key}.phi_bar"),
            r.phi_bar <= 2.0 * r.eta + r.a1 * s2 + r.a2 * s2.sqrt() + 1e-10 && (r.phi_bar - pb).abs() <= 1e-10,
            format!("Φ̄ = {} ≤ 2η + a₁σ² + a₂σ = {}", fmt_f64(r.phi_bar), fmt_f64(2.0 * r.eta + r.a1 * s2 + r.a2 * s2.sqrt())),
        ));
        list.push(assert_that(
            &format!("{key}.a_star"),
            r.a_star >= r.bound - 1e-12,
            format!("a* = {} ≥ {}", fmt_f64(r.a_star), fmt_f64(r.bound)),
        ));
        if r.a_star > 0.0 {
            list.push(assert_that(
                &format!("{key}.rate"),
                r.rate >= 0.9 * r.a_star,
                format!("fitted rate {} ≥ 0.9·a* = {}", fmt_f64(r.rate), fmt_f64(0.9 * r.a_star)),
            ));
        }
    }

    let table: Vec<String> = rows
        .iter()
        .map(|r| {
            [r.m, r.sigma2, r.eta, r.a1, r.a2, r.phi_bar, r.b_eps, r.a_star, r.bound, r.gap, r.rate]
                .into_iter()
                .map(fmt_f64)
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect();
    write_table(dir, "m,sigma2,eta,a1,a2,phi_bar,b_eps,a_star,a_star_lower_bound,dense_gap,rate", &table)?;
    finish(report, &list)
}
