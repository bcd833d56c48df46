//! Soft Mellowmax (SM2) value operators and the machinery around them:
//! tabular MDP solvers, closed-form bounds, Monte Carlo overestimation
//! estimates and an experiment harness.

pub mod error;
pub mod harness;
pub mod mdp;
pub mod operators;
pub mod overestimation;
pub mod sampling;
pub mod solve;
pub mod theory;

pub use error::{Error, Result};
pub use mdp::{Policy, TabularMdp};
pub use operators::{OperatorSpec, QVector};
pub use solve::QTable;
