//! Least-squares quadratic and linear estimation for signals observed through
//! random parameter matrices, time-correlated additive noise and random
//! deception attacks.
//!
//! The estimators are covariance based: the signal enters only through a
//! separable factorization of its second, third and fourth order moments, so
//! no state-space model is required. Quadratic estimation is reduced to linear
//! estimation from the augmented observations `[y_k; y_k ⊗ y_k]`.
//!
//! The crate is organised bottom-up:
//!
//! * [`kron`] – vec, Kronecker products and the symmetrizer `K_{n²}`.
//! * [`model`] – the system description and its builders.
//! * [`augmented_stats`] – every per-step matrix of the augmented observation model.
//! * [`estimators`] – the quadratic and linear filters and fixed-point smoothers.
//! * [`oracles`] – slow, independent reference estimators.
//! * [`simulator`] – trajectory generation and Monte Carlo experiments.
//! * [`config`] – flat `key=value` experiment descriptions.
//! * [`validation`] – the oracle suite behind `quadest validate`.

pub mod augmented_stats;
pub mod config;
pub mod error;
pub mod estimators;
pub mod kron;
pub mod linalg;
pub mod model;
pub mod oracles;
pub mod simulator;
pub mod validation;

pub use augmented_stats::{AugmentedStatistics, StepStatistics};
pub use config::{ExperimentConfig, ExperimentKind};
pub use error::{Error, Result};
pub use estimators::{
    EstimatorDesign, EstimatorKind, Filter, FilterState, FixedPointSmoother,
    FixedPointSmootherDesign, SmootherTracker,
};
pub use kron::{Matrix, Vector};
pub use model::{
    AttackModel, CorrelatedNoiseModel, MeasurementMatrixModel, Moments, NoiseDistribution,
    ScalarScenario, Schedule, SignalModel, SystemModel,
};
pub use simulator::{MonteCarloResult, MonteCarloSpec, TrajectoryRecord};
