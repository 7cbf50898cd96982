//! Planar simulation and control of a balancing mobile manipulator pushing a
//! nonholonomic cart (wheelchair).
//!
//! The crate is split along the control stack:
//!
//! * [`cart`]: rear-wheel-constrained cart dynamics and the handle-force to
//!   wrench mapping.
//! * [`pusher`]: quasi-static lean-angle allocation (weighted least squares)
//!   and the steering heuristic that places the end effectors.
//! * [`estimation`]: extended Kalman filter identifying the cart's inertial
//!   and friction parameters online.
//! * [`sim`]: closed-loop coupling of all of the above with a lean tracker,
//!   compliant arms and scripted disturbances, plus trace metrics.
//!
//! Everything is deterministic: identical inputs (and RNG seed) produce
//! bit-identical outputs.

// Negated comparisons are how NaN inputs get rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cart;
pub mod error;
pub mod estimation;
pub mod math;
pub mod pusher;
pub mod sim;

pub use cart::{CartParams, CartState, HandleForces, MatrixVariant, PlanarWrench};
pub use error::{Error, Result};
pub use estimation::{
    Ekf, EkfConfig, EkfState, NoiseConfig, OnlineEstimator, ParamEstimate, ParamVector, WrenchFilter,
};
pub use pusher::{BallbotParams, LeanCommand, SteeringCommand, TurnRadius};
pub use sim::{
    ArmModel, CommandSegment, ControllerParams, Coupling, Disturbance, DisturbanceTarget, LeanTracker, Metrics,
    Scenario, SimConfig, SimTrace, TraceRecord,
};
