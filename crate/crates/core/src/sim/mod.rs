//! Closed-loop simulation of the pushing stack.
//!
//! Each step: the estimator (at its own rate) refreshes the cart parameters,
//! the steering heuristic and the lean optimizer compute a lean command, a
//! second-order tracker stands in for the balancing controller, the lean is
//! turned into handle forces (directly or through compliant arms) and the
//! true cart is advanced.

mod metrics;
mod run;
mod scenario;
mod trace;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::cart::CartParams;
use crate::error::{Error, Result};
use crate::estimation::EkfConfig;
use crate::pusher::BallbotParams;

pub use metrics::{
    compute_metrics, mass_convergence_time, nonholonomic_residual, AccelNorms, Axis, DisturbanceResponse, HoldError,
    Metrics, StepResponse,
};
pub use run::run_scenario;
pub use scenario::{CommandSegment, Coupling, Disturbance, DisturbanceTarget, Scenario};
pub use trace::{ArmSample, SimTrace, TraceRecord};

/// Cartesian impedance of each arm, per cart-frame axis. Rotational
/// stiffness is zero; the inertia term is carried by the plant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmModel {
    pub k_d: Vector2<f64>,
    pub b_d: Vector2<f64>,
    pub m_d: Vector2<f64>,
}

impl ArmModel {
    /// Spectral norms of the diagonal stiffness and damping.
    pub fn gain_norms(&self) -> (f64, f64) {
        (self.k_d.amax(), self.b_d.amax())
    }
}

/// `K e + B ė` per axis.
pub fn arm_force(arm: &ArmModel, e: &Vector2<f64>, e_dot: &Vector2<f64>) -> Vector2<f64> {
    arm.k_d.component_mul(e) + arm.b_d.component_mul(e_dot)
}

/// Second-order stand-in for the balancing controller:
/// `φ̈ = ω_n² (φ_cmd − φ) − 2 ζ ω_n φ̇` on each axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeanTracker {
    pub omega_n: f64,
    pub zeta: f64,
    pub phi: Vector2<f64>,
    pub phi_dot: Vector2<f64>,
}

impl LeanTracker {
    pub fn new(omega_n: f64, zeta: f64) -> Self {
        Self { omega_n, zeta, phi: Vector2::zeros(), phi_dot: Vector2::zeros() }
    }

    /// Advances both axes one semi-implicit step and returns the new lean.
    pub fn step(&mut self, phi_cmd: &Vector2<f64>, dt: f64) -> Vector2<f64> {
        for i in 0..2 {
            let (p, pd) = lean_step(self.omega_n, self.zeta, self.phi[i], self.phi_dot[i], phi_cmd[i], dt);
            self.phi[i] = p;
            self.phi_dot[i] = pd;
        }
        self.phi
    }
}

/// One semi-implicit step of a single lean axis, returns `(φ, φ̇)`.
pub fn lean_step(omega_n: f64, zeta: f64, phi: f64, phi_dot: f64, phi_cmd: f64, dt: f64) -> (f64, f64) {
    let acc = omega_n * omega_n * (phi_cmd - phi) - 2.0 * zeta * omega_n * phi_dot;
    let phi_dot = phi_dot + dt * acc;
    (phi + dt * phi_dot, phi_dot)
}

/// Velocity loop, lean tracker and compliant coupling parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerParams {
    /// Forward velocity feedback, 1/s (scaled by the estimated inertia).
    pub k_v: f64,
    /// Yaw rate feedback, 1/s (scaled by the estimated inertia).
    pub k_omega: f64,
    /// Integral gains on forward velocity and yaw rate error, 1/s².
    pub ki_v: f64,
    pub ki_omega: f64,
    pub tracker_omega_n: f64,
    pub tracker_zeta: f64,
    /// Arm stiffness per cart axis, N/m.
    pub arm_k: [f64; 2],
    /// Arm damping per cart axis, N·s/m.
    pub arm_b: [f64; 2],
    /// Desired arm inertia per axis, kg.
    pub arm_m: [f64; 2],
    /// Effective base mass in spring coupling, kg.
    pub base_mass: f64,
}

impl Default for ControllerParams {
    fn default() -> Self {
        Self {
            k_v: 1.2,
            k_omega: 1.2,
            ki_v: 0.3,
            ki_omega: 0.3,
            tracker_omega_n: 6.0,
            tracker_zeta: 1.0,
            arm_k: [300.0, 300.0],
            arm_b: [100.0, 100.0],
            arm_m: [5.0, 5.0],
            base_mass: 100.0,
        }
    }
}

impl ControllerParams {
    pub fn arm(&self) -> ArmModel {
        ArmModel { k_d: Vector2::from(self.arm_k), b_d: Vector2::from(self.arm_b), m_d: Vector2::from(self.arm_m) }
    }

    pub fn tracker(&self) -> LeanTracker {
        LeanTracker::new(self.tracker_omega_n, self.tracker_zeta)
    }

    pub fn validate(&self) -> Result<()> {
        let non_neg = [self.k_v, self.k_omega, self.ki_v, self.ki_omega]
            .into_iter()
            .chain(self.arm_k)
            .chain(self.arm_b)
            .chain(self.arm_m);
        for v in non_neg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParameter(format!("controller gains must be >= 0, got {v}")));
            }
        }
        if !(self.tracker_omega_n > 0.0 && self.tracker_zeta > 0.0) {
            return Err(Error::InvalidParameter("tracker omega_n and zeta must be > 0".into()));
        }
        if !(self.base_mass > 0.0) {
            return Err(Error::InvalidParameter("base_mass must be > 0".into()));
        }
        Ok(())
    }
}

/// Everything except the scenario script.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimConfig {
    /// True cart. Its geometry, gravity and matrix form are also given to
    /// the estimator as known quantities.
    pub cart: CartParams,
    pub ballbot: BallbotParams,
    pub controller: ControllerParams,
    pub ekf: EkfConfig,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.cart.validate()?;
        self.ballbot.validate()?;
        self.controller.validate()?;
        self.ekf.validate()
    }
}
