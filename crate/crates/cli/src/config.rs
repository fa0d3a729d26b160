//! Run configuration in TOML. Unknown keys are rejected everywhere.

use std::path::{Path, PathBuf};

use mutsel_core::model::{default_radius, read_table};
use mutsel_core::{Grid, Kernel, KernelShape, Potential, PotentialShape, Problem};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    #[serde(default)]
    pub eigen: EigenConfig,
    #[serde(default)]
    pub criteria: CriteriaConfig,
    #[serde(default)]
    pub gap: GapSection,
    #[serde(default)]
    pub evolve: EvolveConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    #[serde(default = "one")]
    pub dim: usize,
    /// Half-width of the box; picked so that `W(R) ≥ 50σ²` when absent.
    pub radius: Option<f64>,
    pub n: usize,
    pub kernel: KernelConfig,
    pub potential: PotentialConfig,
    #[serde(default)]
    pub conv: ConvChoice,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvChoice {
    #[default]
    Fast,
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Box,
    Gaussian,
    Table,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub shape: KernelKind,
    pub sigma2: f64,
    pub half_width: Option<f64>,
    pub center: Option<f64>,
    pub std: Option<f64>,
    pub path: Option<PathBuf>,
    pub r0: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKind {
    Power,
    Sqrt,
    DoubleWell,
    Constant,
    Table,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialConfig {
    pub shape: PotentialKind,
    #[serde(default = "one_f")]
    pub scale: f64,
    pub m: Option<f64>,
    pub shift: Option<f64>,
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodChoice {
    #[default]
    InversePower,
    Variational,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EigenConfig {
    #[serde(default)]
    pub method: MethodChoice,
    #[serde(default = "tol_default")]
    pub tol: f64,
    #[serde(default = "max_iter_default")]
    pub max_iter: usize,
    /// Also write the bottom of the dense spectrum.
    #[serde(default)]
    pub spectrum: usize,
}

impl Default for EigenConfig {
    fn default() -> Self {
        Self { method: MethodChoice::default(), tol: tol_default(), max_iter: max_iter_default(), spectrum: 0 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriteriaConfig {
    #[serde(default = "one_f")]
    pub set_radius: f64,
    #[serde(default)]
    pub eps: f64,
    #[serde(default = "tol_default")]
    pub tol: f64,
    /// Radii for the `f(R)` profile (one dimension).
    #[serde(default)]
    pub radii: Vec<f64>,
}

impl Default for CriteriaConfig {
    fn default() -> Self {
        Self { set_radius: 1.0, eps: 0.0, tol: tol_default(), radii: Vec::new() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GapSection {
    #[serde(default = "one_f")]
    pub omega_radius: f64,
    #[serde(default = "one_f")]
    pub set_radius: f64,
    #[serde(default = "eps_default")]
    pub eps: f64,
    #[serde(default = "tol_default")]
    pub tol: f64,
    #[serde(default)]
    pub sweep: Vec<f64>,
    #[serde(default = "samples_default")]
    pub profile_samples: usize,
    /// Compare against the dense spectrum when the grid is under the cap.
    #[serde(default)]
    pub check_spectrum: bool,
}

impl Default for GapSection {
    fn default() -> Self {
        Self {
            omega_radius: 1.0,
            set_radius: 1.0,
            eps: eps_default(),
            tol: tol_default(),
            sweep: Vec::new(),
            profile_samples: samples_default(),
            check_spectrum: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeChoice {
    ExpEuler,
    #[default]
    Strang,
    DenseExpm,
    NormalizedLinear,
    DirectOde,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormChoice {
    L1,
    #[default]
    L2,
    Sup,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialConfig {
    GroundState,
    Uniform,
    Gaussian { center: f64, width: f64 },
    Bimodal { centers: [f64; 2], width: f64 },
    File { path: PathBuf },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveConfig {
    #[serde(default = "t_end_default")]
    pub t_end: f64,
    /// `min(0.01, 0.1/max W)` when absent.
    pub dt: Option<f64>,
    pub scheme: Option<SchemeChoice>,
    #[serde(default = "record_default")]
    pub record_every: usize,
    pub norm: Option<NormChoice>,
    /// Fraction of `T` skipped before the rate fit.
    #[serde(default = "burn_default")]
    pub burn_in: f64,
    /// Write every `k`-th recorded state as a CSV; 0 writes none.
    #[serde(default)]
    pub snapshot_every: usize,
    #[serde(default = "initial_default")]
    pub initial: InitialConfig,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        Self {
            t_end: t_end_default(),
            dt: None,
            scheme: None,
            record_every: record_default(),
            norm: None,
            burn_in: burn_default(),
            snapshot_every: 0,
            initial: initial_default(),
        }
    }
}

fn one() -> usize {
    1
}
fn one_f() -> f64 {
    1.0
}
fn tol_default() -> f64 {
    1e-10
}
fn eps_default() -> f64 {
    1e-8
}
fn max_iter_default() -> usize {
    20000
}
fn samples_default() -> usize {
    200
}
fn t_end_default() -> f64 {
    10.0
}
fn record_default() -> usize {
    10
}
fn burn_default() -> f64 {
    0.2
}
fn initial_default() -> InitialConfig {
    InitialConfig::Uniform
}

/// A parsed configuration plus the directory its relative paths refer to.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub base: PathBuf,
    pub text: String,
}

impl LoadedConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        cfg.base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let config: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        Ok(Self { config, base: PathBuf::new(), text: text.to_string() })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    /// Builds the problem; any inconsistency is a configuration error.
    pub fn problem(&self) -> Result<Problem, CliError> {
        let pc = &self.config.problem;
        let cfg = |e: mutsel_core::Error| CliError::Config(format!("[problem] {e}"));
        let need = |v: Option<f64>, key: &str| v.ok_or_else(|| CliError::Config(format!("[problem.kernel] missing key `{key}`")));
        let k = &pc.kernel;
        if !(k.sigma2.is_finite() && k.sigma2 > 0.0) {
            return Err(CliError::Config(format!("[problem.kernel] sigma2 must be positive, got {}", k.sigma2)));
        }
        let shape = match k.shape {
            KernelKind::Box => KernelShape::Box { half_width: need(k.half_width, "half_width")?, center: k.center.unwrap_or(0.0) },
            KernelKind::Gaussian => KernelShape::Gaussian { std: need(k.std, "std")? },
            KernelKind::Table => {
                let path = k.path.as_ref().ok_or_else(|| CliError::Config("[problem.kernel] missing key `path`".into()))?;
                let (xs, ys) = read_table(self.resolve(path)).map_err(cfg)?;
                KernelShape::Table { xs, ys, r0: need(k.r0, "r0")? }
            }
        };
        let kernel = Kernel::new(shape, k.sigma2.sqrt(), pc.dim).map_err(cfg)?;

        let p = &pc.potential;
        let pshape = match p.shape {
            PotentialKind::Power => PotentialShape::Power {
                m: p.m.ok_or_else(|| CliError::Config("[problem.potential] missing key `m`".into()))?,
            },
            PotentialKind::Sqrt => PotentialShape::Sqrt,
            PotentialKind::DoubleWell => PotentialShape::DoubleWell,
            PotentialKind::Constant => PotentialShape::Constant,
            PotentialKind::Table => {
                let path = p.path.as_ref().ok_or_else(|| CliError::Config("[problem.potential] missing key `path`".into()))?;
                let (xs, ys) = read_table(self.resolve(path)).map_err(cfg)?;
                PotentialShape::Table { xs, ys }
            }
        };
        let potential = Potential::new(pshape, p.scale, p.shift).map_err(cfg)?;
        let radius = match pc.radius {
            Some(r) => r,
            None => default_radius(&kernel, &potential, 2.0 * kernel.support_radius()).ok_or_else(|| {
                CliError::Config("[problem] no radius given and W never reaches 50σ²; set `radius`".into())
            })?,
        };
        let grid = Grid::new(pc.dim, radius, pc.n).map_err(cfg)?;
        Problem::new(kernel, potential, grid).map_err(cfg)
    }
}
