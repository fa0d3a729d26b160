//! Principal eigenpair of `L`, the bottom of the discrete spectrum and the
//! adjoint ground state for non-even kernels.
//!
//! All norms and inner products are the trapezoid ones of the grid.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::grid::{dot_w, Field};
use crate::operator::{DiscreteOperator, DENSE_CAP};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigenMethod {
    /// Minimization of the energy on the unit sphere (locally optimal block
    /// conjugate gradient with Rayleigh–Ritz on `{x, P r, p}`).
    Variational,
    /// Power iteration on the shifted resolvent `(L + (σ² + δ))⁻¹`.
    InversePower,
}

#[derive(Debug, Clone, Copy)]
pub struct EigenOptions {
    /// Target for `‖Lφ - λφ‖`.
    pub tol: f64,
    pub max_iter: usize,
    /// Resolvent shift beyond `σ²`, as a fraction of `σ²`.
    pub shift_fraction: f64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 20_000, shift_fraction: 0.1 }
    }
}

impl EigenOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Certificates {
    pub positivity: bool,
    pub pointwise_bound: bool,
    pub interval_bound: bool,
}

#[derive(Debug, Clone)]
pub struct EigenPair {
    pub lambda1: f64,
    /// Unit-norm, positive ground state.
    pub phi: Field,
    pub residual: f64,
    /// `λ₁ + σ²`.
    pub lambda_star: f64,
    pub iterations: usize,
    pub certificates: Certificates,
    /// `max |φ|` on the boundary of the box relative to `max φ`.
    pub boundary_ratio: f64,
    /// Negative noise removed from the converged vector (its mass).
    pub clamped_mass: f64,
}

impl EigenPair {
    /// Warns when the ground state has not decayed at the truncation boundary.
    pub fn boundary_warning(&self) -> bool {
        self.boundary_ratio > 1e-6
    }
}

#[derive(Debug, Clone)]
pub struct CertificateReport {
    pub positivity: bool,
    pub min_phi: f64,
    pub pointwise_bound: bool,
    /// `min_i (bound_i - φ_i) / bound_i`; negative when violated.
    pub pointwise_slack: f64,
    /// Node index attaining the slack.
    pub tightest_node: usize,
    pub interval_bound: bool,
    /// `λ₁ + σ²`.
    pub interval_slack: f64,
    /// Lattice `‖K‖_{L²}` used in the pointwise bound.
    pub kernel_norm: f64,
}

impl CertificateReport {
    pub fn all_pass(&self) -> bool {
        self.positivity && self.pointwise_bound && self.interval_bound
    }
}

#[derive(Debug, Clone)]
pub struct AdjointPair {
    /// Positive, normalized by `⟨φ*, φ⟩ = 1`.
    pub phi_star: Field,
    /// Eigenvalue of the adjoint iteration.
    pub lambda: f64,
    /// `‖L*φ* - λ₁φ*‖ / ‖φ*‖`.
    pub residual: f64,
}

fn normalize(w: &[f64], x: &mut [f64]) -> f64 {
    let nrm = dot_w(w, x, x).sqrt();
    x.iter_mut().for_each(|v| *v /= nrm);
    nrm
}

fn residual_of(op: &DiscreteOperator, x: &[f64]) -> (f64, f64, Vec<f64>) {
    let w = op.weights();
    let lx = op.apply_values(x);
    let theta = dot_w(w, &lx, x) / dot_w(w, x, x);
    let r: Vec<f64> = lx.iter().zip(x).map(|(a, b)| a - theta * b).collect();
    (theta, dot_w(w, &r, &r).sqrt(), r)
}

fn initial_guess(op: &DiscreteOperator) -> Vec<f64> {
    let wmin = op.potential().iter().copied().fold(f64::INFINITY, f64::min);
    let mut x: Vec<f64> = op.potential().iter().map(|v| (-(v - wmin)).exp()).collect();
    normalize(op.weights(), &mut x);
    x
}

/// Ground state `(λ₁, φ)` with certificates filled in.
pub fn principal_eigenpair(op: &DiscreteOperator, method: EigenMethod, opts: EigenOptions) -> Result<EigenPair> {
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {}", opts.tol)));
    }
    let (x, iterations) = match method {
        EigenMethod::Variational => {
            if !op.is_even() {
                return Err(Error::Precondition(
                    "the variational route needs an even kernel; use inverse_power".into(),
                ));
            }
            lobpcg(op, opts)?
        }
        EigenMethod::InversePower => inverse_power(op, initial_guess(op), opts)?,
    };
    finish_pair(op, x, iterations)
}

fn finish_pair(op: &DiscreteOperator, mut x: Vec<f64>, iterations: usize) -> Result<EigenPair> {
    let w = op.weights();
    let signed_mass: f64 = w.iter().zip(&x).map(|(a, b)| a * b).sum();
    if signed_mass < 0.0 {
        x.iter_mut().for_each(|v| *v = -*v);
    }
    let negative_mass: f64 = w.iter().zip(&x).map(|(a, b)| a * (-b).max(0.0)).sum();
    if negative_mass > 1e-8 {
        return Err(Error::Positivity { negative_mass });
    }
    x.iter_mut().for_each(|v| *v = v.max(0.0));
    normalize(w, &mut x);
    let (lambda1, residual, _) = residual_of(op, &x);
    let grid = *op.grid();
    let phi = Field::new(grid, x)?;
    let max_phi = phi.max();
    let boundary = (0..grid.len())
        .filter(|&i| grid.is_boundary(i))
        .map(|i| phi.values()[i].abs())
        .fold(0.0, f64::max);
    let mut pair = EigenPair {
        lambda1,
        lambda_star: lambda1 + op.sigma2(),
        phi,
        residual,
        iterations,
        certificates: Certificates { positivity: false, pointwise_bound: false, interval_bound: false },
        boundary_ratio: boundary / max_phi,
        clamped_mass: negative_mass,
    };
    let report = verify_groundstate(&pair, op)?;
    pair.certificates = Certificates {
        positivity: report.positivity,
        pointwise_bound: report.pointwise_bound,
        interval_bound: report.interval_bound,
    };
    Ok(pair)
}

fn lobpcg(op: &DiscreteOperator, opts: EigenOptions) -> Result<(Vec<f64>, usize)> {
    let w = op.weights();
    let precond: Vec<f64> = op.potential().iter().map(|v| 1.0 / (v + op.sigma2())).collect();
    let mut x = initial_guess(op);
    let mut p: Option<Vec<f64>> = None;
    let mut last = f64::INFINITY;
    for it in 0..opts.max_iter {
        let (_, res, r) = residual_of(op, &x);
        last = res;
        if res <= opts.tol {
            return Ok((x, it));
        }
        let z: Vec<f64> = r.iter().zip(&precond).map(|(a, b)| a * b).collect();
        let mut basis = vec![x.clone(), z];
        if let Some(p) = &p {
            basis.push(p.clone());
        }
        let basis = orthonormalize(w, basis);
        let lb: Vec<Vec<f64>> = basis.iter().map(|b| op.apply_values(b)).collect();
        let m = basis.len();
        let a = DMatrix::from_fn(m, m, |i, j| 0.5 * (dot_w(w, &lb[i], &basis[j]) + dot_w(w, &lb[j], &basis[i])));
        let eig = SymmetricEigen::new(a);
        let k = (0..m).min_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j])).unwrap_or(0);
        let c = eig.eigenvectors.column(k);
        let mut xn = vec![0.0; x.len()];
        let mut pn = vec![0.0; x.len()];
        for (i, b) in basis.iter().enumerate() {
            for ((xv, pv), bv) in xn.iter_mut().zip(pn.iter_mut()).zip(b) {
                *xv += c[i] * bv;
                if i > 0 {
                    *pv += c[i] * bv;
                }
            }
        }
        // |u| never raises the energy for a nonnegative kernel.
        xn.iter_mut().for_each(|v| *v = v.abs());
        normalize(w, &mut xn);
        x = xn;
        p = if m > 1 { Some(pn) } else { None };
    }
    Err(Error::NonConvergence { solver: "variational", iterations: opts.max_iter, residual: last })
}

/// Modified Gram–Schmidt (applied twice) in the weighted inner product,
/// dropping vectors that are numerically dependent on earlier ones.
fn orthonormalize(w: &[f64], vecs: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(vecs.len());
    for mut v in vecs {
        let start = dot_w(w, &v, &v).sqrt();
        if !(start > 0.0) || !start.is_finite() {
            continue;
        }
        for _ in 0..2 {
            for q in &out {
                let c = dot_w(w, &v, q);
                v.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
            }
        }
        let nrm = dot_w(w, &v, &v).sqrt();
        if nrm > 1e-10 * start {
            v.iter_mut().for_each(|a| *a /= nrm);
            out.push(v);
        }
    }
    out
}

enum ShiftedSolver {
    Cg { diag: Vec<f64>, shift: f64 },
    Lu(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

impl ShiftedSolver {
    fn new(op: &DiscreteOperator, shift: f64) -> Result<Self> {
        if op.is_even() {
            let diag = op
                .potential()
                .iter()
                .zip(op.conv_diagonal())
                .map(|(wv, kd)| (wv + shift - kd).max(shift))
                .collect();
            Ok(Self::Cg { diag, shift })
        } else {
            let mut m = op.assemble_dense(DENSE_CAP)?;
            for i in 0..m.nrows() {
                m[(i, i)] += shift;
            }
            Ok(Self::Lu(m.lu()))
        }
    }

    fn solve(&self, op: &DiscreteOperator, b: &[f64]) -> Result<Vec<f64>> {
        match self {
            Self::Lu(lu) => lu
                .solve(&DVector::from_column_slice(b))
                .map(|v| v.as_slice().to_vec())
                .ok_or_else(|| Error::Precondition("shifted operator is singular".into())),
            Self::Cg { diag, shift } => pcg(op, *shift, diag, b),
        }
    }
}

/// Preconditioned conjugate gradients for `(L + s) y = b`, self-adjoint in the weighted product.
fn pcg(op: &DiscreteOperator, shift: f64, diag: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    let w = op.weights();
    let apply = |v: &[f64]| -> Vec<f64> {
        let mut out = op.apply_values(v);
        out.iter_mut().zip(v).for_each(|(o, x)| *o += shift * x);
        out
    };
    let bnorm = dot_w(w, b, b).sqrt();
    let mut y: Vec<f64> = b.iter().zip(diag).map(|(a, d)| a / d).collect();
    let ay = apply(&y);
    let mut r: Vec<f64> = b.iter().zip(&ay).map(|(a, c)| a - c).collect();
    let mut z: Vec<f64> = r.iter().zip(diag).map(|(a, d)| a / d).collect();
    let mut p = z.clone();
    let mut rz = dot_w(w, &r, &z);
    let max_iter = 20 * b.len().max(50);
    for _ in 0..max_iter {
        let rn = dot_w(w, &r, &r).sqrt();
        if rn <= 1e-14 * bnorm {
            return Ok(y);
        }
        let ap = apply(&p);
        let alpha = rz / dot_w(w, &p, &ap);
        y.iter_mut().zip(&p).for_each(|(a, b)| *a += alpha * b);
        r.iter_mut().zip(&ap).for_each(|(a, b)| *a -= alpha * b);
        z = r.iter().zip(diag).map(|(a, d)| a / d).collect();
        let rz_new = dot_w(w, &r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.iter_mut().zip(&z).for_each(|(a, b)| *a = b + beta * *a);
    }
    let rn = dot_w(w, &r, &r).sqrt();
    if rn <= 1e-11 * bnorm {
        Ok(y)
    } else {
        Err(Error::NonConvergence { solver: "conjugate gradient", iterations: max_iter, residual: rn / bnorm })
    }
}

fn inverse_power(op: &DiscreteOperator, mut x: Vec<f64>, opts: EigenOptions) -> Result<(Vec<f64>, usize)> {
    let w = op.weights();
    let shift = op.sigma2() * (1.0 + opts.shift_fraction);
    let solver = ShiftedSolver::new(op, shift)?;
    normalize(w, &mut x);
    let mut last = f64::INFINITY;
    for it in 0..opts.max_iter {
        let (_, res, _) = residual_of(op, &x);
        last = res;
        if res <= opts.tol {
            return Ok((x, it));
        }
        let mut y = solver.solve(op, &x)?;
        let nrm = normalize(w, &mut y);
        if !nrm.is_finite() || nrm == 0.0 {
            return Err(Error::NonConvergence { solver: "inverse power", iterations: it, residual: res });
        }
        x = y;
    }
    Err(Error::NonConvergence { solver: "inverse power", iterations: opts.max_iter, residual: last })
}

/// Checks positivity, the pointwise bound `φ ≤ ‖K‖/(W - λ₁)` and `λ₁ > -σ²` at every node.
pub fn verify_groundstate(pair: &EigenPair, op: &DiscreteOperator) -> Result<CertificateReport> {
    if pair.phi.grid() != op.grid() {
        return Err(Error::GridMismatch);
    }
    let phi = pair.phi.values();
    let kn = op.kernel_l2_norm();
    let min_phi = phi.iter().copied().fold(f64::INFINITY, f64::min);
    let (mut slack, mut node) = (f64::INFINITY, 0);
    let mut bound_ok = true;
    for (i, (&p, &wv)) in phi.iter().zip(op.potential()).enumerate() {
        let gap = wv - pair.lambda1;
        let bound = if gap > 0.0 { kn / gap } else { f64::INFINITY };
        if p > bound * (1.0 + 1e-6) {
            bound_ok = false;
        }
        let s = if bound.is_finite() { (bound - p) / bound } else { 1.0 };
        if s < slack {
            slack = s;
            node = i;
        }
    }
    let interval_slack = pair.lambda1 + op.sigma2();
    Ok(CertificateReport {
        positivity: min_phi > 0.0,
        min_phi,
        pointwise_bound: bound_ok,
        pointwise_slack: slack,
        tightest_node: node,
        interval_bound: interval_slack > 0.0,
        interval_slack,
        kernel_norm: kn,
    })
}

/// Dense eigen-decomposition of the symmetric form of `L`.
pub struct DenseSpectrum {
    /// Ascending.
    pub values: Vec<f64>,
    /// Eigenvectors as node values, unit in the weighted norm, in the order of `values`.
    vectors: DMatrix<f64>,
    grid: crate::grid::Grid,
}

impl DenseSpectrum {
    pub fn vector(&self, k: usize) -> Field {
        let vals = self.vectors.column(k).iter().copied().collect();
        Field::new(self.grid, vals).expect("dense eigenvector matches the grid")
    }
}

/// Full dense spectrum (even kernels only, under the dense cap).
pub fn dense_spectrum(op: &DiscreteOperator) -> Result<DenseSpectrum> {
    if !op.is_even() {
        return Err(Error::Precondition("the symmetric dense spectrum needs an even kernel".into()));
    }
    let s = op.assemble_symmetric(DENSE_CAP)?;
    let eig = SymmetricEigen::new(s);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let w = op.weights();
    let vectors = DMatrix::from_fn(w.len(), order.len(), |i, k| eig.eigenvectors[(i, order[k])] / w[i].sqrt());
    Ok(DenseSpectrum { values, vectors, grid: *op.grid() })
}

/// The `k` smallest eigenvalues, ascending.
pub fn spectrum_bottom(op: &DiscreteOperator, k: usize) -> Result<Vec<f64>> {
    let spec = dense_spectrum(op)?;
    Ok(spec.values.into_iter().take(k).collect())
}

/// Positive eigenfunction of the adjoint, normalized by `⟨φ*, φ⟩ = 1`.
pub fn adjoint_eigenpair(op: &DiscreteOperator, pair: &EigenPair, opts: EigenOptions) -> Result<AdjointPair> {
    if op.is_even() {
        return Ok(AdjointPair { phi_star: pair.phi.clone(), lambda: pair.lambda1, residual: pair.residual });
    }
    let adj = op.adjoint();
    let (mut x, _) = inverse_power(&adj, pair.phi.values().to_vec(), opts)?;
    let w = op.weights();
    let overlap = dot_w(w, &x, pair.phi.values());
    if overlap < 0.0 {
        x.iter_mut().for_each(|v| *v = -*v);
    }
    let negative_mass: f64 = w.iter().zip(&x).map(|(a, b)| a * (-b).max(0.0)).sum();
    if negative_mass > 1e-8 {
        return Err(Error::Positivity { negative_mass });
    }
    x.iter_mut().for_each(|v| *v = v.max(0.0));
    let c = dot_w(w, &x, pair.phi.values());
    x.iter_mut().for_each(|v| *v /= c);
    let lx = adj.apply_values(&x);
    let lambda = dot_w(w, &lx, &x) / dot_w(w, &x, &x);
    let r: Vec<f64> = lx.iter().zip(&x).map(|(a, b)| a - pair.lambda1 * b).collect();
    let residual = (dot_w(w, &r, &r) / dot_w(w, &x, &x)).sqrt();
    Ok(AdjointPair { phi_star: Field::new(*op.grid(), x)?, lambda, residual })
}

/// `λ₁` at each `(R, n)` combination, for judging truncation and resolution.
pub fn refinement_study(
    problem: &crate::model::Problem,
    radii: &[f64],
    ns: &[usize],
    opts: EigenOptions,
) -> Result<Vec<(f64, usize, f64)>> {
    let mut out = Vec::new();
    for &r in radii {
        for &n in ns {
            let grid = crate::grid::Grid::new(problem.grid.dim(), r, n)?;
            let p = crate::model::Problem { grid, ..problem.clone() };
            let op = DiscreteOperator::new(p, crate::operator::ConvMode::PaddedFast);
            let pair = principal_eigenpair(&op, EigenMethod::InversePower, opts)?;
            out.push((r, n, pair.lambda1));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{inner_product, Grid};
    use crate::model::{Kernel, KernelShape, Potential, Problem};
    use crate::operator::ConvMode;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn make(kernel: Kernel, w: Potential, r: f64, n: usize) -> DiscreteOperator {
        let g = Grid::new(kernel.dim(), r, n).unwrap();
        DiscreteOperator::new(Problem::new(kernel, w, g).unwrap(), ConvMode::PaddedFast)
    }

    fn harmonic() -> DiscreteOperator {
        make(Kernel::box_kernel(1.0, 1.0, 1).unwrap(), Potential::power(2.0, 1.0).unwrap(), 6.0, 256)
    }

    #[test]
    fn routes_agree_with_dense_oracle() {
        let op = harmonic();
        let a = principal_eigenpair(&op, EigenMethod::Variational, EigenOptions::default()).unwrap();
        let b = principal_eigenpair(&op, EigenMethod::InversePower, EigenOptions::default()).unwrap();
        let dense = spectrum_bottom(&op, 1).unwrap()[0];
        assert_abs_diff_eq!(a.lambda1, b.lambda1, epsilon = 1e-8);
        assert_abs_diff_eq!(a.lambda1, dense, epsilon = 1e-8);
        let d = a.phi.sub(&b.phi).unwrap().norm_l2();
        assert!(d <= 1e-6, "{d}");
        assert!(a.certificates.positivity && a.certificates.pointwise_bound && a.certificates.interval_bound);
    }

    #[test]
    fn even_problems_have_even_ground_states() {
        let op = harmonic();
        let pair = principal_eigenpair(&op, EigenMethod::InversePower, EigenOptions::default()).unwrap();
        let v = pair.phi.values();
        let n = v.len();
        for i in 0..n {
            assert_abs_diff_eq!(v[i], v[n - 1 - i], epsilon = 1e-8);
        }
        assert_abs_diff_eq!(pair.phi.norm_l2(), 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(op.energy(&pair.phi).unwrap(), pair.lambda1, epsilon = 1e-8);
    }

    #[test]
    fn diagonal_spectrum_is_the_potential() {
        // A kernel narrower than the spacing only touches the diagonal.
        let k = Kernel::box_kernel(0.01, 1.0, 1).unwrap();
        let op = make(k, Potential::power(1.0, 1.0).unwrap(), 4.0, 65);
        let k0 = op.conv_diagonal();
        let vals = spectrum_bottom(&op, 2).unwrap();
        let h = op.grid().spacing();
        assert_abs_diff_eq!(vals[0], 0.0 - k0[32], epsilon = 1e-12);
        assert_abs_diff_eq!(vals[1], h - k0[31], epsilon = 1e-12);
    }

    #[test]
    fn certificates_catch_constructed_violations() {
        let op = harmonic();
        let pair = principal_eigenpair(&op, EigenMethod::InversePower, EigenOptions::default()).unwrap();
        let rep = verify_groundstate(&pair, &op).unwrap();
        assert!(rep.all_pass());
        let mut bumped = pair.clone();
        bumped.phi.values_mut()[17] += 10.0;
        let rep = verify_groundstate(&bumped, &op).unwrap();
        assert!(!rep.pointwise_bound);
        assert_eq!(rep.tightest_node, 17);
        let mut low = pair.clone();
        low.lambda1 = -2.0 * op.sigma2();
        assert!(!verify_groundstate(&low, &op).unwrap().interval_bound);
    }

    #[test]
    fn simple_ground_state() {
        let op = harmonic();
        let pair = principal_eigenpair(&op, EigenMethod::InversePower, EigenOptions::default()).unwrap();
        let spec = dense_spectrum(&op).unwrap();
        assert!(spec.values[1] > spec.values[0]);
        let v2 = spec.vector(1);
        assert!(inner_product(&v2, &pair.phi).unwrap().abs() <= 1e-8);
    }

    #[test]
    fn adjoint_of_even_kernel_is_the_ground_state() {
        let op = harmonic();
        let pair = principal_eigenpair(&op, EigenMethod::InversePower, EigenOptions::default()).unwrap();
        let adj = adjoint_eigenpair(&op, &pair, EigenOptions::default()).unwrap();
        assert!(adj.phi_star.sub(&pair.phi).unwrap().norm_sup() <= 1e-8);
    }

    #[test]
    fn adjoint_of_shifted_kernel() {
        let k = Kernel::new(KernelShape::Box { half_width: 1.0, center: 0.5 }, 1.0, 1).unwrap();
        let op = make(k, Potential::power(2.0, 1.0).unwrap(), 6.0, 192);
        let pair = principal_eigenpair(&op, EigenMethod::InversePower, EigenOptions::default()).unwrap();
        assert!(matches!(
            principal_eigenpair(&op, EigenMethod::Variational, EigenOptions::default()),
            Err(Error::Precondition(_))
        ));
        let adj = adjoint_eigenpair(&op, &pair, EigenOptions::default()).unwrap();
        assert!(pair.phi.min() > 0.0 && adj.phi_star.min() > 0.0);
        assert_abs_diff_eq!(inner_product(&adj.phi_star, &pair.phi).unwrap(), 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(adj.lambda, pair.lambda1, epsilon = 1e-8);
        assert!(adj.residual <= 1e-9, "{}", adj.residual);
        let m = op.assemble_dense(DENSE_CAP).unwrap();
        let oracle = m.complex_eigenvalues().iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
        assert_abs_diff_eq!(oracle, pair.lambda1, epsilon = 1e-8);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(30))]
        #[test]
        fn rayleigh_quotients_bound_lambda1(seed in any::<u64>()) {
            let op = make(Kernel::box_kernel(2.0, 0.1f64.sqrt(), 1).unwrap(), Potential::power(9.0, 1.0).unwrap(), 3.0, 128);
            let pair = principal_eigenpair(&op, EigenMethod::InversePower, EigenOptions::default()).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = Field::new(*op.grid(), (0..128).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
            prop_assert!(op.rayleigh_quotient(&u).unwrap() >= pair.lambda1 - 1e-10);
        }
    }
}
