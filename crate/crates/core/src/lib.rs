//! Compressive sensing under random ReLU generative priors.
//!
//! Recovers a latent code `x_*` from measurements `y = A G(x_*) + e` by
//! gradient descent on `½‖A G(x) − y‖²` with a sign-flip check, together with
//! the expected-landscape formulas, empirical WDC/RRIC estimators and a seeded
//! Monte Carlo harness for recovery experiments.

pub mod cli;
pub mod conditions;
pub mod error;
pub mod experiments;
pub mod generator;
pub mod landscape;
pub mod numerics;
pub mod output;
pub mod plot;
pub mod risk;
pub mod solver;

pub use error::{Error, Result};
pub use generator::{masked_weights, ActivationPattern, GeneratorNetwork, NetworkSpec};
pub use numerics::{gaussian_matrix, gaussian_vector, spectral_norm, Matrix, Rng, Vector};
pub use risk::{finite_difference_gradient, risk_value, step_direction, RecoveryProblem};
pub use solver::{default_step_size, solve, Init, IterateTrace, SolveResult, SolverConfig};
pub use conditions::{rric_deviation, wdc_deviation, ConditionKind, ConditionReport};
pub use experiments::{make_problem, ExperimentConfig, Snr, SweepTable};
pub use landscape::{expected_risk, g_theta, h_direction, q_matrix, rho, theta_sequence};
