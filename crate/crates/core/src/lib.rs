//! Fokker-Planck dynamics on weighted graphs as a free-energy gradient flow.
//!
//! The library implements, on finite truncations of locally uniformly finite
//! graphs:
//!
//! * the discrete calculus (gradient, divergence, pi-Laplacian, logarithmic
//!   mean, density-weighted Laplacian and its gauged pseudo-inverse);
//! * the Wasserstein-type metric machinery: tangent-space inner product,
//!   Hodge decomposition of edge fields, and the 2-Wasserstein distance by
//!   minimizing the discretized Benamou-Brenier action;
//! * the Fokker-Planck right-hand side, a positivity- and mass-aware
//!   adaptive integrator, and the heat semigroup;
//! * free-energy and convergence diagnostics, including the indicator-set
//!   partition of the norm-decay argument and truncation-exhaustion studies.

pub mod analysis;
pub mod density;
pub mod error;
pub mod formats;
pub mod fpe;
pub mod graph;
pub mod metric;
pub mod operators;

pub use density::{
    gibbs_density, gibbs_summability, lr_norm, lr_norm_values, second_moment, Density, Exponent,
    Potential,
};
pub use error::{Error, Result};
pub use graph::{
    generate_family, generate_family_scaled, GraphFamily, TruncationMode, WeightedGraph,
};
pub use operators::{
    divergence, edge_inner, gradient, laplacian, laplacian_log_form, log_mean,
    solve_weighted_laplacian, vertex_inner, weighted_divergence, weighted_laplacian, EdgeField,
    WeightedLaplacianSolver,
};

pub use analysis::{
    convergence_diagnostics, dissipation, dissipation_values, exhaustion_study, free_energy,
    free_energy_derivative, free_energy_values,
    lyapunov_partition, ConvergenceReport, EnergyReport, ExhaustionConfig, ExhaustionFamily,
    ExhaustionReport, PartitionReport, PartitionTerms, PARTITION_DEFAULT_TOL,
};
pub use fpe::{
    fpe_rhs, fpe_rhs_two_term, gradient_flow_rhs, heat_semigroup, integrate, HeatPropagator,
    IntegratorConfig, IntegratorMethod, StepDiagnostics, Trajectory,
};
pub use metric::{
    hodge_decompose, metric_inner, metric_norm_squared, path_action, w2_distance, DensityPath,
    HodgeDecomposition, TangentVector, W2Config, W2Result,
};
