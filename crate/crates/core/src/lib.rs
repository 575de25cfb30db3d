//! Follow-the-leader particle approximation of the Aw-Rascle-Zhang traffic
//! model, with an exact Riemann solver and convergence diagnostics.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::approx_constant)]

pub mod atomize;
pub mod dynamics;
pub mod error;
pub mod exec;
pub mod fields;
pub mod harness;
pub mod initial_data;
pub mod metrics;
pub mod pressure;
pub mod riemann;

pub use atomize::{atomize, atomize_count, cumulative_inverse, ParticleSystem};
pub use dynamics::{evolve, rhs, step, IntegratorOptions, Trajectory};
pub use error::{Error, Result};
pub use exec::Execution;
pub use fields::{density_field, marker_field, velocity_field, PiecewiseConstantField};
pub use initial_data::{InitialDatum, State};
pub use metrics::{c_v_bound, inverse_cdf, l1_distance, wasserstein_d1, weak_residual, WeakTestFunction};
pub use pressure::PressureLaw;
pub use riemann::{solve_riemann, FanSample, RiemannFan};
