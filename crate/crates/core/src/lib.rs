//! Deep fault-tolerant control of a reaction-wheel inverted pendulum:
//! simulation, observability analysis, an LQR teacher, fault-augmented
//! imitation datasets, a from-scratch LSTM controller and a closed-loop
//! evaluation harness.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the usual choices.

pub mod baseline;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod integrator;
pub mod linalg;
pub mod nn;
pub mod observability;
pub mod plant;
pub mod policy;
pub mod rng;
pub mod scalar;

pub use error::{DftcError, Result};
pub use scalar::Scalar;

pub type Plant = plant::PlantParams<f64>;
pub type State = plant::PlantState<f64>;
pub type Input = plant::ControlInput<f64>;
pub type Gain = baseline::LqrGain<f64>;
pub type Model = nn::ModelParams<f64>;
/// Single-precision model, the fast path for training.
pub type Model32 = nn::ModelParams<f32>;
pub type Dftc = policy::DftcController<f64>;
pub type Fnn = policy::FnnController<f64>;
