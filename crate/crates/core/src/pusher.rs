//! Quasi-static pushing-pose optimizer and steering controller.
//!
//! The balancing robot pushes through both arms with equal force `F` (per
//! arm, ballbot frame). Leaning the body by `φ` about the ball produces
//! `F = m g l φ / (2 r_z)` per axis under the small-angle linearization. The
//! body frame is yawed by the steering angle `β` relative to the cart, so the
//! lean angles map linearly onto the cart wrench through a 2×2 allocation
//! matrix `A(β)`. The lean command minimizes
//! `(AΦ − f)ᵀ Q (AΦ − f) + Φᵀ R Φ`.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::cart::{coriolis_matrix, friction_wrench, CartParams, PlanarWrench};
use crate::error::{Error, Result};
use crate::math::rot2;

/// Balancing robot and optimizer parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BallbotParams {
    /// Robot mass, kg.
    pub m_robot: f64,
    /// CoM lever arm above the ball centre, m.
    pub l: f64,
    /// Handle height above the ball centre, m.
    pub r_z: f64,
    pub g: f64,
    /// Max |φ| per axis, rad.
    pub lean_limit: f64,
    /// Max |β|, rad.
    pub beta_limit: f64,
    /// Below this |v_des| the steering heuristic switches to turn-in-place.
    pub min_speed: f64,
    /// Wrench tracking weight.
    pub q: [[f64; 2]; 2],
    /// Lean effort weight.
    pub r: [[f64; 2]; 2],
}

impl Default for BallbotParams {
    fn default() -> Self {
        Self {
            m_robot: 65.0,
            l: 0.7,
            r_z: 0.9,
            g: 9.8,
            lean_limit: 0.15,
            beta_limit: 35f64.to_radians(),
            min_speed: 0.02,
            q: [[10.0, 0.0], [0.0, 10.0]],
            r: [[1.0, 0.0], [0.0, 1.0]],
        }
    }
}

fn to_matrix(m: &[[f64; 2]; 2]) -> Matrix2<f64> {
    Matrix2::new(m[0][0], m[0][1], m[1][0], m[1][1])
}

fn is_spd(m: &Matrix2<f64>) -> bool {
    (m.m12 - m.m21).abs() <= 1e-12 * (1.0 + m.m12.abs()) && m.m11 > 0.0 && m.determinant() > 0.0
}

impl BallbotParams {
    pub fn q_matrix(&self) -> Matrix2<f64> {
        to_matrix(&self.q)
    }

    pub fn r_matrix(&self) -> Matrix2<f64> {
        to_matrix(&self.r)
    }

    /// `m g l / (2 r_z)`: per-arm force per radian of lean.
    pub fn force_gain(&self) -> f64 {
        self.m_robot * self.g * self.l / (2.0 * self.r_z)
    }

    pub fn validate(&self) -> Result<()> {
        let pos = [
            (self.m_robot, "m_robot"),
            (self.l, "l"),
            (self.r_z, "r_z"),
            (self.g, "g"),
            (self.lean_limit, "lean_limit"),
        ];
        if let Some((_, name)) = pos.iter().find(|(v, _)| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidParameter(format!("{name} must be finite and > 0")));
        }
        if !(self.beta_limit > 0.0 && self.beta_limit <= std::f64::consts::FRAC_PI_2) {
            return Err(Error::InvalidParameter("beta_limit must lie in (0, pi/2]".into()));
        }
        if !(self.min_speed >= 0.0) {
            return Err(Error::InvalidParameter("min_speed must be >= 0".into()));
        }
        if !is_spd(&self.q_matrix()) {
            return Err(Error::InvalidParameter("q must be symmetric positive definite".into()));
        }
        if !is_spd(&self.r_matrix()) {
            return Err(Error::InvalidParameter("r must be symmetric positive definite".into()));
        }
        Ok(())
    }
}

/// Optimal body lean.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LeanCommand {
    pub phi_x: f64,
    pub phi_y: f64,
    /// Whether either component hit the lean limit.
    pub clamped: bool,
}

impl LeanCommand {
    pub fn as_vector(&self) -> Vector2<f64> {
        Vector2::new(self.phi_x, self.phi_y)
    }
}

/// Steering angle and the end-effector targets it implies (cart frame).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteeringCommand {
    pub beta: f64,
    pub r_lee: Vector2<f64>,
    pub r_ree: Vector2<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TurnRadius {
    Finite(f64),
    /// Straight-line motion (ω = 0).
    Unbounded,
}

/// Per-arm push force from body lean, ballbot frame. `exact` keeps the `sin φ`
/// torque balance instead of its linearization.
pub fn lean_to_force(bp: &BallbotParams, phi_x: f64, phi_y: f64, exact: bool) -> Vector2<f64> {
    let k = bp.force_gain();
    if exact {
        Vector2::new(k * phi_x.sin(), k * phi_y.sin())
    } else {
        Vector2::new(k * phi_x, k * phi_y)
    }
}

/// Wrench that holds the cart at the target twist in steady state:
/// `C(q̇) q̇ + N(q̇)`.
pub fn required_wrench(cp: &CartParams, v_des: f64, omega_des: f64) -> PlanarWrench {
    let qd = Vector2::new(v_des, omega_des);
    let w = coriolis_matrix(cp, omega_des) * qd + friction_wrench(cp, v_des, omega_des).as_vector();
    PlanarWrench::from_vector(&w)
}

/// Allocation matrix for contacts whose positions sum to `contact_sum`
/// (cart frame). Only the sum matters since both arms push equally.
pub fn build_allocation_for_contacts(bp: &BallbotParams, contact_sum: &Vector2<f64>, beta: f64) -> Matrix2<f64> {
    let k = bp.force_gain();
    let rot = rot2(beta);
    // f_p = 2 · x-row of R F.
    let row_f = rot.row(0) * (2.0 * k);
    // τ = z · (r_L + r_R) × (R F) = r_x (R F)_y − r_y (R F)_x.
    let row_tau = (rot.row(1) * contact_sum.x - rot.row(0) * contact_sum.y) * k;
    Matrix2::from_rows(&[row_f, row_tau])
}

/// Allocation matrix `A(β)` mapping `(φ_x, φ_y)` to `(f_p, τ)` with the arms
/// on the cart handles.
pub fn build_allocation(bp: &BallbotParams, cp: &CartParams, beta: f64) -> Matrix2<f64> {
    let (r_l, r_r) = cp.handle_positions();
    build_allocation_for_contacts(bp, &(r_l + r_r), beta)
}

/// Value of the weighted least-squares objective at `phi`.
pub fn lean_objective(
    a: &Matrix2<f64>,
    f: &PlanarWrench,
    q: &Matrix2<f64>,
    r: &Matrix2<f64>,
    phi: &Vector2<f64>,
) -> f64 {
    let e = a * phi - f.as_vector();
    (e.transpose() * q * e)[0] + (phi.transpose() * r * phi)[0]
}

/// Unclamped minimizer `(AᵀQA + R)⁻¹ AᵀQ f`. Requires `AᵀQA + R` invertible,
/// which holds whenever `Q ⪰ 0` and `R ≻ 0`.
pub fn solve_lean_unclamped(a: &Matrix2<f64>, f: &PlanarWrench, q: &Matrix2<f64>, r: &Matrix2<f64>) -> Vector2<f64> {
    let atq = a.transpose() * q;
    let h = atq * a + r;
    let g = atq * f.as_vector();
    let det = h.determinant();
    Vector2::new((h.m22 * g.x - h.m12 * g.y) / det, (h.m11 * g.y - h.m21 * g.x) / det)
}

/// Closed-form lean allocation, clamped componentwise to `lean_limit`.
pub fn solve_lean(
    a: &Matrix2<f64>,
    f: &PlanarWrench,
    q: &Matrix2<f64>,
    r: &Matrix2<f64>,
    lean_limit: f64,
) -> LeanCommand {
    let phi = solve_lean_unclamped(a, f, q, r);
    let phi_x = phi.x.clamp(-lean_limit, lean_limit);
    let phi_y = phi.y.clamp(-lean_limit, lean_limit);
    LeanCommand { phi_x, phi_y, clamped: phi_x != phi.x || phi_y != phi.y }
}

/// Steering angle placing the ICR for the desired twist. Falls back to a
/// saturated turn-in-place angle when |v_des| is below `bp.min_speed`.
pub fn steering_angle(v_des: f64, omega_des: f64, cp: &CartParams, bp: &BallbotParams) -> f64 {
    if omega_des == 0.0 || omega_des.is_nan() {
        return 0.0;
    }
    if v_des.abs() < bp.min_speed {
        return omega_des.signum() * bp.beta_limit;
    }
    let s = (omega_des * cp.l_w / (4.0 * v_des * cp.d)).clamp(-1.0, 1.0);
    if s.is_nan() {
        return omega_des.signum() * bp.beta_limit;
    }
    s.asin().clamp(-bp.beta_limit, bp.beta_limit)
}

pub fn icr_radius(v_des: f64, omega_des: f64) -> TurnRadius {
    if omega_des == 0.0 {
        TurnRadius::Unbounded
    } else {
        TurnRadius::Finite(v_des / omega_des)
    }
}

/// End-effector targets: the handle bar of width `l_w` rotated by `β` about
/// `(d, 0)`.
pub fn ee_targets(beta: f64, cp: &CartParams) -> (Vector2<f64>, Vector2<f64>) {
    let centre = Vector2::new(cp.d, 0.0);
    let half = rot2(beta) * Vector2::new(0.0, 0.5 * cp.l_w);
    (centre + half, centre - half)
}

pub fn steer(v_des: f64, omega_des: f64, cp: &CartParams, bp: &BallbotParams) -> SteeringCommand {
    let beta = steering_angle(v_des, omega_des, cp, bp);
    let (r_lee, r_ree) = ee_targets(beta, cp);
    SteeringCommand { beta, r_lee, r_ree }
}
