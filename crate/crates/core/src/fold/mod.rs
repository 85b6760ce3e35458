//! Lumped-element vocal fold models and their fixed-step integrator.
//!
//! Two physical phonation models are provided: an asymmetric coupled
//! van-der-Pol-type single-mass pair (dimensionless time, one oscillation
//! cycle near 2*pi time units) and a Steinecke-Herzel-style two-mass pair
//! (time in milliseconds). Both are integrated with classical RK4 so that
//! the parameter-estimation adjoint can replay the exact step sequence.

mod integrate;
mod one_mass;
mod two_mass;

pub use integrate::{integrate_rk4, rk4_step, TrajectorySet};
pub use one_mass::{
    cycle_period, model_flow, one_mass_rhs, simulate_one_mass, OneMassParams, ONE_MASS_MAX_DT,
};
pub(crate) use one_mass::integrate_one_mass_records;
pub use two_mass::{simulate_two_mass, two_mass_rhs, TwoMassParams, TWO_MASS_MAX_DT};
