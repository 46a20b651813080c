//! Ground truth: population projections under Gaussian designs, support
//! checks, fixed-design targets and sparsity diagnostics.

pub mod model;
pub mod population;
pub mod sparsity;

pub use model::{ModelId, ModelSpec, NonlinearModel, Term};
pub use population::{
    analytic_projection, check_support_containment, fixed_design_target, fixed_design_target_with,
    population_beta_analytic, population_beta_mc, population_beta_mc_with, population_omega_sq_mc,
    submodel_projection, submodel_projection_of, ContainmentReport, McOptions, PopulationProjection,
    ProjectionMethod, Sampling, MIN_DRAWS,
};
pub use sparsity::{
    count_nonzero, lr_power, sparsity_curve, uniform_r_grid, verify_sparsity_bounds, BoundCheck,
    SparsityBoundReport, SparsityCurve, NONZERO_THRESHOLD,
};
