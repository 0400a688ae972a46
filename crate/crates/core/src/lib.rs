//! Softmax policy gradient with linear function approximation for K-armed
//! bandits.
//!
//! The crate covers the exact and the sampled (importance-weighted) variants
//! of the algorithm, a certifier for the feature conditions that decide
//! global convergence, a registry of worked instances plus a random instance
//! generator, and diagnostics that check the convergence theory at desk
//! scale.
//!
//! All numerics are generic over [`Scalar`] (`f32` or `f64`); the `*64`
//! aliases below fix the double-precision instantiation the experiments use.

pub mod bandit;
pub mod condition;
pub mod diagnostics;
pub mod error;
pub mod exact;
pub mod experiments;
pub mod instances;
pub mod linalg;
pub mod lp;
pub mod rng;
pub mod scalar;
pub mod stochastic;
pub mod trajectory;

pub use bandit::{
    covariance_apply, exact_gradient, expected_reward, make_policy, pairwise_covariance_form, softmax,
    InstanceFile, NoiseFamily, PolicyState, ProblemInstance,
};
pub use condition::{analyze, ConditionReport, Constants};
pub use error::{Error, Result};
pub use exact::{run_exact, ExactRunConfig, LearningRate};
pub use linalg::{Matrix, Tolerances, TOLERANCES};
pub use scalar::Scalar;
pub use stochastic::{run_stochastic, StochasticRunConfig};
pub use trajectory::Trajectory;

pub type Matrix64 = Matrix<f64>;
pub type Matrix32 = Matrix<f32>;
pub type Instance64 = ProblemInstance<f64>;
pub type Instance32 = ProblemInstance<f32>;
pub type PolicyState64 = PolicyState<f64>;
pub type Trajectory64 = Trajectory<f64>;
