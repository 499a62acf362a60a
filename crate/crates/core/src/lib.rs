//! Convex quadratic programs solved by a projection neural network with
//! time-varying delay.
//!
//! The pipeline is: [`problem`] loads and validates the QP, [`network`]
//! builds the projection network whose equilibria are the KKT points,
//! [`stability`] evaluates the exponential-stability margin, [`dde`]
//! integrates the delayed dynamics, and [`oracle`] supplies an independent
//! active-set solution to check the equilibrium against.

pub mod cli;
pub mod dde;
pub mod error;
pub mod linalg;
pub mod network;
pub mod oracle;
pub mod problem;
pub mod stability;

pub use error::{Error, Result};
pub use linalg::{Matrix, Vector};
