//! Independent-component intensity models for replicated point processes.
//!
//! The intensity of replication `i` is modelled as `Λ_i(t) = Σ_k U_ik φ_k(t)` with
//! independent Gamma scores `U_ik ~ Gamma(α_k, β)` (shape–scale) and density-normalised
//! components `φ_k = c_kᵀβ(t)` over a fixed non-negative basis. This crate holds the
//! numerical core: geometry and bases, likelihoods, Monte-Carlo EM fitting,
//! cross-validation, constrained asymptotics and the simulation harness.
//!
//! The crate is `no_std` (it needs `alloc`); enable `parallel` for rayon-backed maps.
#![no_std]
#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::needless_range_loop,
    clippy::inconsistent_digit_grouping,
    clippy::excessive_precision
)]

#[cfg(test)]
extern crate std;

extern crate alloc;

pub mod asymptotics;
pub mod basis;
pub mod error;
pub mod estep;
pub mod fit;
pub mod geometry;
pub mod math;
pub mod model;
pub mod mstep;
pub mod par;
pub mod rng;
pub mod selection;
pub mod simulation;

#[cfg(test)]
mod test_support;

pub use basis::{build_basis, penalty_gram, BasisFamily, BasisLayout, BasisSystem, Design};
pub use error::{Error, Result};
pub use estep::{e_step_exact, e_step_gibbs, EStepStats, ReplicationStats};
pub use geometry::{build_quadrature, Point, Polygon, QuadratureRule, Region};
pub use fit::{fit, fit_from, initialize, penalty, EStepMode, FitConfig, FitResult};
pub use selection::{default_zeta_grid, fit_path, kfold_cv, select_model, CvCell, CvPlan, CvReport, FoldDiagnostics};
pub use mstep::{m_step_components, m_step_gamma, project_feasible, ComponentStep};
pub use model::{
    complete_loglik, component_density, intensity, marginal_loglik, marginal_loglik_exact, marginal_loglik_mc,
    posterior_intensity, LogLikMethod, LogLikResult, ModelParams, PointPattern, ScoreParams,
};
