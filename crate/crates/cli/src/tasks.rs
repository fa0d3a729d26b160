use std::fmt::Write as _;
use std::path::Path;

use mutsel_core::criteria::{evaluate, search_radius};
use mutsel_core::dynamics::{default_dt, fit_rate};
use mutsel_core::eigen::{dense_spectrum, EigenPair};
use mutsel_core::gap::{phi_profile, sweep_omega};
use mutsel_core::{
    adjoint_eigenpair, evolve_linear, evolve_nonlinear, gap_lower_bound, inner_product, mass, principal_eigenpair,
    spectrum_bottom, validate, verify_groundstate, weighted_mass, ConvMode, DiscreteOperator, EigenMethod, EigenOptions,
    EvolutionTrace, EvolveOptions, Field, GapConfig, Grid, LinearScheme, NonlinearScheme, Norm, PotentialShape,
    Problem, TestSet, DENSE_CAP,
};

use crate::config::{ConvChoice, InitialConfig, LoadedConfig, MethodChoice, NormChoice, SchemeChoice};
use crate::report::{fmt_f64, Report};
use crate::{io_err, CliError, Task};

pub fn run_task(task: Task, cfg: &LoadedConfig, dir: &Path, report: &mut Report) -> Result<(), CliError> {
    let problem = cfg.problem()?;
    echo_config(cfg, &problem, report);
    let checks = validate(&problem);
    report.section("validation");
    for c in &checks.checks {
        report.text(c.name, if c.passed { "pass" } else { "fail" });
        report.num(&format!("{}.measured", c.name), c.measured);
        report.flag(&format!("{}.required", c.name), c.required);
    }
    if !checks.all_required_pass() {
        return Err(CliError::Validation(format!("failed checks: {}", checks.failures().join(", "))));
    }
    let conv = match cfg.config.problem.conv {
        ConvChoice::Fast => ConvMode::PaddedFast,
        ConvChoice::Direct => ConvMode::Direct,
    };
    let op = DiscreteOperator::new(problem, conv);
    match task {
        Task::Validate => Ok(()),
        Task::Eigen => eigen(cfg, &op, dir, report).map(|_| ()),
        Task::Criteria => criteria(cfg, &op, dir, report),
        Task::Gap => gap(cfg, &op, dir, report),
        Task::EvolveLinear => evolve_lin(cfg, &op, dir, report),
        Task::EvolveNonlinear => evolve_nonlin(cfg, &op, dir, report),
        Task::ReproduceExample1 | Task::ReproduceExample2 => unreachable!("handled by the caller"),
    }
}

fn echo_config(cfg: &LoadedConfig, p: &Problem, report: &mut Report) {
    let c = &cfg.config.problem;
    report.section("config");
    report.text("dim", c.dim).num("radius", p.grid.radius()).text("n", c.n);
    report.text("kernel", format!("{:?}", c.kernel.shape).to_lowercase()).num("sigma2", c.kernel.sigma2);
    for (k, v) in [("half_width", c.kernel.half_width), ("center", c.kernel.center), ("std", c.kernel.std), ("r0", c.kernel.r0)] {
        if let Some(v) = v {
            report.num(&format!("kernel.{k}"), v);
        }
    }
    let pot = match p.potential.shape() {
        PotentialShape::Power { m } => format!("power m={}", fmt_f64(*m)),
        PotentialShape::Sqrt => "sqrt".into(),
        PotentialShape::DoubleWell => "double_well".into(),
        PotentialShape::Constant => "constant".into(),
        PotentialShape::Table { xs, .. } => format!("table ({} rows)", xs.len()),
    };
    report.text("potential", pot).num("potential.scale", p.potential.scale()).num("potential.shift", p.potential.shift());
    report.text("conv", format!("{:?}", c.conv).to_lowercase());
}

/// `InversePower` becomes `inverse_power`, matching the config spelling.
fn snake(camel: &str) -> String {
    let mut out = String::new();
    for (i, ch) in camel.chars().enumerate() {
        if ch.is_ascii_uppercase() && i > 0 {
            out.push('_');
        }
        out.push(ch.to_ascii_lowercase());
    }
    out
}

fn core(module: &'static str) -> impl Fn(mutsel_core::Error) -> CliError {
    move |e| CliError::from_core(module, e)
}

fn write_field(dir: &Path, name: &str, f: &Field) -> Result<(), CliError> {
    let path = dir.join(name);
    f.write_csv(&path).map_err(|e| CliError::Numerical(format!("cannot write {}: {e}", path.display())))
}

fn write_rows(dir: &Path, name: &str, header: &str, rows: impl IntoIterator<Item = Vec<f64>>) -> Result<(), CliError> {
    let mut s = String::new();
    let _ = writeln!(s, "{header}");
    for row in rows {
        let line: Vec<String> = row.into_iter().map(fmt_f64).collect();
        let _ = writeln!(s, "{}", line.join(","));
    }
    let path = dir.join(name);
    std::fs::write(&path, s).map_err(|e| io_err(&path, e))
}

fn eigen_options(cfg: &LoadedConfig) -> EigenOptions {
    let e = &cfg.config.eigen;
    EigenOptions { tol: e.tol, max_iter: e.max_iter, ..EigenOptions::default() }
}

fn ground_state(cfg: &LoadedConfig, op: &DiscreteOperator) -> Result<EigenPair, CliError> {
    let method = match cfg.config.eigen.method {
        MethodChoice::InversePower => EigenMethod::InversePower,
        MethodChoice::Variational => EigenMethod::Variational,
    };
    principal_eigenpair(op, method, eigen_options(cfg)).map_err(core("eigensolver"))
}

fn eigen(cfg: &LoadedConfig, op: &DiscreteOperator, dir: &Path, report: &mut Report) -> Result<EigenPair, CliError> {
    let pair = ground_state(cfg, op)?;
    let tol = cfg.config.eigen.tol;
    let cert = verify_groundstate(&pair, op).map_err(core("eigensolver"))?;
    report.section("eigen");
    report.text("method", snake(&format!("{:?}", cfg.config.eigen.method)));
    report.claim("lambda1", pair.lambda1, tol).num("residual", pair.residual).num("lambda_star", pair.lambda_star);
    report.text("iterations", pair.iterations);
    report.flag("certificate.positivity", cert.positivity).num("certificate.min_phi", cert.min_phi);
    report.flag("certificate.pointwise_bound", cert.pointwise_bound).num("certificate.pointwise_slack", cert.pointwise_slack);
    report.text("certificate.pointwise_bound.tol", "1e-6");
    report.flag("certificate.interval_bound", cert.interval_bound).num("certificate.interval_slack", cert.interval_slack);
    report.num("kernel_l2_norm", cert.kernel_norm);
    report.num("boundary_ratio", pair.boundary_ratio).flag("boundary_warning", pair.boundary_warning());
    write_field(dir, "phi.csv", &pair.phi)?;
    if !op.is_even() {
        let adj = adjoint_eigenpair(op, &pair, eigen_options(cfg)).map_err(core("eigensolver"))?;
        let overlap = inner_product(&adj.phi_star, &pair.phi).map_err(core("eigensolver"))?;
        report.claim("adjoint.lambda", adj.lambda, tol).num("adjoint.residual", adj.residual);
        report.claim("adjoint.overlap", overlap, 1e-10);
        write_field(dir, "phi_star.csv", &adj.phi_star)?;
    }
    let k = cfg.config.eigen.spectrum;
    if k > 0 {
        if !op.is_even() {
            report.text("spectrum", "skipped (non-even kernel)");
        } else if op.grid().len() > DENSE_CAP {
            report.text("spectrum", format!("skipped ({} nodes exceed the dense cap {DENSE_CAP})", op.grid().len()));
        } else {
            let vals = spectrum_bottom(op, k).map_err(core("eigensolver"))?;
            write_rows(dir, "spectrum.csv", "index,lambda", vals.iter().enumerate().map(|(i, v)| vec![i as f64, *v]))?;
            if vals.len() > 1 {
                report.num("dense.lambda2_minus_lambda1", vals[1] - vals[0]);
            }
        }
    }
    Ok(pair)
}

fn criteria(cfg: &LoadedConfig, op: &DiscreteOperator, dir: &Path, report: &mut Report) -> Result<(), CliError> {
    let c = &cfg.config.criteria;
    let set = TestSet::new(c.set_radius, c.eps).map_err(core("criteria"))?;
    let p = op.problem();
    let r = evaluate(p, set, c.tol).map_err(core("criteria"))?;
    report.section("criteria");
    report.num("set.radius", c.set_radius).num("set.eps", c.eps);
    report.claim("linkjw.lhs", r.linkjw.lhs, c.tol).claim("linkjw.rhs", r.linkjw.rhs, c.tol);
    report.num("linkjw.error", r.linkjw.error).flag("linkjw.holds", r.linkjw.holds);
    report.claim("coville.essinf_value", r.coville.essinf_value, c.tol).num("coville.argmin", r.coville.argmin[0]);
    report.flag("coville.holds", r.coville.holds);
    report.claim("b_eps", r.b_eps, c.tol);
    report.claim("singularity.sup_value", r.singularity.sup_value, c.tol).num("singularity.argmax", r.singularity.argmax[0]);
    report.flag("singularity.is_singular", r.singularity.is_singular).flag("singularity.divergent", r.singularity.divergent);
    report.flag("theoretically_backed", r.theoretically_backed);
    if !c.radii.is_empty() {
        let s = search_radius(p, c.eps, &c.radii, c.tol).map_err(core("criteria"))?;
        report.num("radius_search.best_radius", s.best_radius).claim("radius_search.best_value", s.best_value, c.tol);
        write_rows(dir, "radius_profile.csv", "radius,value", s.profile.iter().map(|(r, v)| vec![*r, *v]))?;
    }
    Ok(())
}

fn gap(cfg: &LoadedConfig, op: &DiscreteOperator, dir: &Path, report: &mut Report) -> Result<(), CliError> {
    let g = &cfg.config.gap;
    let p = op.problem();
    let set = TestSet::new(g.set_radius, g.eps).map_err(core("spectral-gap"))?;
    let gc = GapConfig::new(g.omega_radius, set).map_err(core("spectral-gap"))?;
    let r = gap_lower_bound(p, gc, g.tol).map_err(core("spectral-gap"))?;
    report.section("gap");
    report.num("omega_radius", g.omega_radius).num("omega_measure", r.omega_measure);
    report.num("eta", r.eta).claim("a1", r.a1, 1e-12).claim("a2", r.a2, 1e-12);
    report.text("tail", snake(&format!("{:?}", r.tail)));
    report.claim("phi_bar", r.phi_bar, 1e-15).num("xi_star", r.xi_star).num("phi_bar_bound", r.phi_bar_bound);
    report.claim("b_eps", r.b_eps, g.tol).num("a_star", r.a_star).flag("rate_claim", r.rate_claim);
    let prof = phi_profile(&r, p.sigma2(), g.profile_samples.max(1));
    write_rows(dir, "phi_profile.csv", "xi,phi", prof.iter().map(|(x, f)| vec![*x, *f]))?;
    if !g.sweep.is_empty() {
        let (reps, best) = sweep_omega(p, set, &g.sweep, g.tol).map_err(core("spectral-gap"))?;
        report.num("sweep.best_omega_radius", g.sweep[best]).num("sweep.best_a_star", reps[best].a_star);
        write_rows(
            dir,
            "omega_sweep.csv",
            "omega_radius,eta,a1,a2,phi_bar,a_star",
            g.sweep.iter().zip(&reps).map(|(w, r)| vec![*w, r.eta, r.a1, r.a2, r.phi_bar, r.a_star]),
        )?;
    }
    if g.check_spectrum {
        let spec = dense_spectrum(op).map_err(core("spectral-gap"))?;
        let lowest_other = spec.values[1..].iter().copied().fold(f64::INFINITY, f64::min);
        let observed = spec.values[1] - spec.values[0];
        report.num("dense.lambda1", spec.values[0]).num("dense.gap", observed);
        report.flag("dense.above_minus_phi_bar", lowest_other >= -r.phi_bar - 1e-3).text("dense.above_minus_phi_bar.tol", "1e-3");
        report.flag("dense.gap_exceeds_a_star", r.a_star <= 0.0 || observed >= r.a_star - 1e-3);
    }
    Ok(())
}

fn gaussian_bump(grid: Grid, center: f64, width: f64) -> impl Fn(&[f64]) -> f64 {
    let dim = grid.dim();
    move |x: &[f64]| {
        let mut r2 = (x[0] - center).powi(2);
        if dim == 2 {
            r2 += x[1] * x[1];
        }
        (-0.5 * r2 / (width * width)).exp()
    }
}

/// Initial datum; built-in shapes are scaled to unit mass, files are used as given.
fn initial(cfg: &LoadedConfig, grid: Grid, ground: &Field) -> Result<Field, CliError> {
    let unit = |f: Field| -> Result<Field, CliError> {
        let m = mass(&f);
        if m > 0.0 && m.is_finite() {
            Ok(f.scaled(1.0 / m))
        } else {
            Err(CliError::Config("[evolve.initial] datum has no mass on the grid".into()))
        }
    };
    match &cfg.config.evolve.initial {
        InitialConfig::GroundState => unit(ground.clone()),
        InitialConfig::Uniform => unit(Field::constant(grid, 1.0)),
        InitialConfig::Gaussian { center, width } => {
            if !(*width > 0.0) {
                return Err(CliError::Config("[evolve.initial] width must be positive".into()));
            }
            unit(Field::from_fn(grid, gaussian_bump(grid, *center, *width)))
        }
        InitialConfig::Bimodal { centers, width } => {
            if !(*width > 0.0) {
                return Err(CliError::Config("[evolve.initial] width must be positive".into()));
            }
            let (a, b) = (gaussian_bump(grid, centers[0], *width), gaussian_bump(grid, centers[1], *width));
            unit(Field::from_fn(grid, |x| a(x) + b(x)))
        }
        InitialConfig::File { path } => Field::read_csv(grid, cfg.resolve(path)).map_err(core("evolve")),
    }
}

fn norm_of(n: NormChoice) -> Norm {
    match n {
        NormChoice::L1 => Norm::L1,
        NormChoice::L2 => Norm::L2,
        NormChoice::Sup => Norm::Sup,
    }
}

fn trace_out(cfg: &LoadedConfig, trace: &EvolutionTrace, dir: &Path, report: &mut Report) -> Result<(), CliError> {
    let e = &cfg.config.evolve;
    report.num("dt", trace.dt).text("steps", trace.steps).text("records", trace.times.len());
    report.num("final.log_mass", *trace.log_mass.last().unwrap_or(&f64::NAN));
    report.num("final.mean_fitness", *trace.mean_fitness.last().unwrap_or(&f64::NAN));
    report.num("final.distance", *trace.distance.last().unwrap_or(&f64::NAN));
    match fit_rate(trace, e.burn_in * e.t_end) {
        Ok(f) => {
            report.num("rate", f.rate).num("rate.residual", f.residual).text("rate.points", f.points);
        }
        Err(err) => {
            report.text("rate", format!("unavailable ({err})"));
        }
    }
    let path = dir.join("trace.csv");
    trace.write_csv(&path).map_err(|e| CliError::Numerical(format!("cannot write {}: {e}", path.display())))?;
    if e.snapshot_every > 0 {
        for (i, snap) in trace.snapshots.iter().enumerate().step_by(e.snapshot_every) {
            write_field(dir, &format!("snapshot_{i:05}.csv"), snap)?;
        }
    }
    Ok(())
}

fn evolve_lin(cfg: &LoadedConfig, op: &DiscreteOperator, dir: &Path, report: &mut Report) -> Result<(), CliError> {
    let e = &cfg.config.evolve;
    let scheme = match e.scheme.unwrap_or(SchemeChoice::Strang) {
        SchemeChoice::ExpEuler => LinearScheme::ExpEuler,
        SchemeChoice::Strang => LinearScheme::Strang,
        SchemeChoice::DenseExpm => LinearScheme::DenseExpm,
        other => return Err(CliError::Config(format!("[evolve] scheme {other:?} is not a linear scheme"))),
    };
    let pair = ground_state(cfg, op)?;
    let weight = if op.is_even() {
        pair.phi.clone()
    } else {
        adjoint_eigenpair(op, &pair, eigen_options(cfg)).map_err(core("eigensolver"))?.phi_star
    };
    let u0 = initial(cfg, *op.grid(), &pair.phi)?;
    let c = weighted_mass(&u0, &weight).map_err(core("dynamics"))?;
    let dt = e.dt.unwrap_or_else(|| default_dt(op));
    let opts = EvolveOptions::new(e.t_end, dt)
        .record_every(e.record_every)
        .keep_snapshots(e.snapshot_every > 0)
        .reference(pair.phi.scaled(c), pair.lambda_star, norm_of(e.norm.unwrap_or(NormChoice::L2)));
    let trace = evolve_linear(op, &u0, scheme, &opts).map_err(core("dynamics"))?;
    report.section("evolve");
    report.text("scheme", snake(&format!("{scheme:?}"))).num("t_end", e.t_end);
    report.num("lambda1", pair.lambda1).num("weighted_mass", c);
    trace_out(cfg, &trace, dir, report)
}

fn evolve_nonlin(cfg: &LoadedConfig, op: &DiscreteOperator, dir: &Path, report: &mut Report) -> Result<(), CliError> {
    let e = &cfg.config.evolve;
    let scheme = match e.scheme.unwrap_or(SchemeChoice::NormalizedLinear) {
        SchemeChoice::NormalizedLinear => NonlinearScheme::NormalizedLinear,
        SchemeChoice::DirectOde => NonlinearScheme::DirectOde,
        other => return Err(CliError::Config(format!("[evolve] scheme {other:?} is not a nonlinear scheme"))),
    };
    let pair = ground_state(cfg, op)?;
    let target = pair.phi.scaled(1.0 / mass(&pair.phi));
    let u0 = initial(cfg, *op.grid(), &pair.phi)?;
    let dt = e.dt.unwrap_or_else(|| default_dt(op));
    let opts = EvolveOptions::new(e.t_end, dt)
        .record_every(e.record_every)
        .keep_snapshots(e.snapshot_every > 0)
        .reference(target.clone(), 0.0, norm_of(e.norm.unwrap_or(NormChoice::L1)));
    let trace = evolve_nonlinear(op, &u0, scheme, &opts).map_err(core("dynamics"))?;
    let w = Field::new(*op.grid(), op.potential().to_vec()).map_err(core("dynamics"))?;
    let fitness_limit = inner_product(&w, &target).map_err(core("dynamics"))?;
    let defect = trace.mass.iter().map(|m| (m - 1.0).abs()).fold(0.0, f64::max);
    report.section("evolve");
    report.text("scheme", snake(&format!("{scheme:?}"))).num("t_end", e.t_end);
    report.num("lambda1", pair.lambda1).num("mean_fitness.limit", fitness_limit);
    report.num("mass.max_defect", defect).text("clips", trace.clips);
    trace_out(cfg, &trace, dir, report)
}
