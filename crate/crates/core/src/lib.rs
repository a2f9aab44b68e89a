//! Sequential learning from correlated Gaussian information sources.
//!
//! Agents arrive one per period and each acquires one observation from the
//! source that most reduces their posterior variance about a target direction
//! of an unknown state. The crate computes exact posterior variances,
//! enumerates minimal spanning sets and their asymptotic precision, simulates
//! the greedy dynamics under several interventions, and provides brute-force
//! optimal benchmarks.
//!
//! Source indices are 0-based throughout the library. Scenario files, reports
//! and the CLI use 1-based indices.

pub mod dynamics;
pub mod error;
pub mod gaussian;
pub mod linalg;
pub mod oracle;
pub mod scenario;
pub mod spanning;

pub use dynamics::{
    apply_free_signals, design_free_signals, escalate_gamma, greedy_step, simulate, Allocation,
    Classification, InterventionSpec, SimulationConfig, SimulationTrace, TieBreakRule,
};
pub use error::{Error, Result};
pub use gaussian::{
    asymptotic_variance, grad_asymptotic_variance, grad_posterior_variance, posterior_variance,
    posterior_variance_at, variance_reduction, BeliefState, DivisionVector, Environment,
    FrequencyVector, GaussianPrior, Objective,
};
pub use oracle::{
    greedy_vs_optimal, optimal_division, optimal_frequency_numeric, optimal_trajectory,
    ComparisonRow, NumericFrequency, OptimalDivisionResult, OptimalTrajectory,
};
pub use spanning::{
    beta_phi_lambda, check_assumptions, construct_trap_prior, enumerate_minimal_spanning_sets,
    is_subspace_optimal, phi_by_l1, subspace_closure, AssumptionReport, SpanningSetReport, Witness,
};
