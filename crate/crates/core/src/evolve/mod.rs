//! Time evolution of perturbed waves in the co-moving frame.

pub mod characteristics;
pub mod fv;
pub mod halfline;
pub mod perturbation;
pub mod tracking;
pub mod trajectory;

pub use characteristics::{
    evolve_characteristics, evolve_characteristics_with, evolve_perturbed, Bundle, Dynamics,
    GridOptions, Reference, SpeedRatio, Transverse,
};
pub use fv::{evolve_fv_oracle, steepest_gradient, FvOptions};
pub use halfline::{evolve_halfline, Inflow};
pub use perturbation::{smoothstep, Perturbation};
pub use tracking::{
    estimate_shift_limit, evolve_with_tracking, ShiftLimit, TailForm, TrackingOptions,
};
pub use trajectory::{write_norms_csv, ShiftSeries, Snapshot, SolverId, Trajectory};

use crate::model::ModelSpec;

/// `∫₀¹ f'(τ v1 + (1-τ) v2) dτ`.
pub fn averaged_flux(model: &ModelSpec, v1: f64, v2: f64) -> f64 {
    model.averaged_flux(v1, v2)
}
