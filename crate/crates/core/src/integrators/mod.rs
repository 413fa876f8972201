//! Time integrators: the fixed-step schemes of particle codes and an
//! adaptive high-order integrator with continuous output.

pub mod adaptive;
mod dop853_tableau;
pub mod fixed;

pub use adaptive::{
    dense_eval, integrate_adaptive, integrate_adaptive_with, AcceptedStep, AdaptiveOptions, AdaptiveStats,
    DenseSegment, DenseSolution,
};
pub use fixed::{
    default_collision_radius,
    integrate_fixed, integrate_fixed_until, integrate_fixed_with, step_euler, step_leapfrog, step_rk2, step_rk4, FixedStepMethod,
    Trajectory,
};
