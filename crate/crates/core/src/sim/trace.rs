use nalgebra::Vector2;

use crate::cart::{CartParams, CartState, HandleForces, PlanarWrench};
use crate::estimation::ParamEstimate;
use crate::pusher::LeanCommand;

use super::scenario::{CommandSegment, Disturbance};

/// Per-arm spring state (spring coupling only), cart frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmSample {
    /// Handle position minus arm target.
    pub e: Vector2<f64>,
    pub e_dot: Vector2<f64>,
    /// Force the arm applies to the handle.
    pub force: Vector2<f64>,
}

/// Everything known at the start of one simulation step. Forces and commands
/// are the ones held over `[t, t + dt)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub t: f64,
    pub v_cmd: f64,
    pub w_cmd: f64,
    pub state: CartState,
    pub lean_cmd: LeanCommand,
    pub lean: Vector2<f64>,
    pub beta: f64,
    pub r_lee: Vector2<f64>,
    pub r_ree: Vector2<f64>,
    pub handles: HandleForces,
    /// Wrench delivered through the handles.
    pub wrench: PlanarWrench,
    /// Wrench actually driving the cart, including direct cart disturbances.
    pub input: PlanarWrench,
    pub estimate: ParamEstimate,
    pub disturbed: bool,
    pub degenerate: bool,
    /// World-frame base position and velocity. In quasi-static coupling the
    /// base is the handle midpoint.
    pub base_pos: Vector2<f64>,
    pub base_vel: Vector2<f64>,
    /// World-frame position and velocity of the handle midpoint `(d, 0)`.
    pub handle_pos: Vector2<f64>,
    pub handle_vel: Vector2<f64>,
    pub arms: Option<[ArmSample; 2]>,
}

/// Time-indexed record of one scenario run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub dt: f64,
    pub duration: f64,
    pub segments: Vec<CommandSegment>,
    pub disturbances: Vec<Disturbance>,
    pub truth: CartParams,
    pub records: Vec<TraceRecord>,
}

impl SimTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }
}
