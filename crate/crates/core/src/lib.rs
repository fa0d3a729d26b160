//! Discretized nonlocal mutation-selection operators `L u = -K*u + W u`.
//!
//! The crate covers the principal eigenpair of `L`, numerical checks of
//! ground-state existence criteria, explicit spectral-gap lower bounds and the
//! linear and replicator-mutator dynamics built on the same discretization.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod criteria;
pub mod dynamics;
pub mod eigen;
pub mod error;
pub mod gap;
pub mod grid;
pub mod model;
pub mod operator;
pub mod quad;

pub use criteria::{CriteriaReport, TestSet};
pub use dynamics::{evolve_linear, evolve_nonlinear, fit_rate, weighted_mass, EvolutionTrace, EvolveOptions, LinearScheme, NonlinearScheme};
pub use eigen::{adjoint_eigenpair, principal_eigenpair, spectrum_bottom, verify_groundstate, EigenMethod, EigenOptions, EigenPair};
pub use error::{Error, Result};
pub use gap::{gap_lower_bound, GapConfig, GapReport};
pub use grid::{inner_product, mass, Field, Grid, Norm};
pub use quad::{integrate, quad_adaptive, QuadOptions, QuadResult};
pub use model::{validate, Kernel, KernelShape, Potential, PotentialShape, Problem, ValidationReport};
pub use operator::{ConvMode, DiscreteOperator, DENSE_CAP};
