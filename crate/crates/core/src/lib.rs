//! Traveling waves of scalar balance laws `∂t u + ∂x f(u) = g(u)`.
//!
//! The crate builds wave profiles, classifies their stability by sign
//! conditions on `f` and `g`, and verifies the predicted decay of perturbations
//! in weighted norms by simulation.

pub mod classify;
pub mod error;
pub mod evolve;
pub mod harness;
pub mod model;
pub mod multid;
pub mod norms;
pub mod poly;
pub mod profile;

pub use error::{Error, Result};
