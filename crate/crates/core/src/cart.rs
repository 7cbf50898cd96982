//! Planar wheelchair model.
//!
//! The cart is described in its own frame `{W}`, origin at the midpoint of the
//! rear (fixed) wheels, x forward. The rear wheels forbid lateral motion, so the
//! body twist is `(v_x, ω)` only and any lateral handle force acts on the cart
//! solely through the yaw torque it produces. Front casters are ignored.
//!
//! Dynamics: `M q̈ + C(q̇) q̇ = Γ − N(q̇)`.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{cross2, wrap_angle};

const SINGULAR_DET: f64 = 1e-12;

/// Which form of the inertia matrix to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixVariant {
    /// Non-symmetric matrix with the coupled `(2,1)` entry
    /// `m p_y (I + m|p|²) / I`.
    #[default]
    PaperPrinted,
    /// Symmetric rigid planar cart: `[[m, −m p_y], [−m p_y, I + m|p|²]]`.
    SymmetricReference,
}

/// Physical parameters of the cart (SI units).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CartParams {
    /// Total mass, kg.
    pub m_w: f64,
    /// CoM offset along cart x, m.
    pub p_x: f64,
    /// CoM offset along cart y, m.
    pub p_y: f64,
    /// Yaw inertia about the CoM, kg·m².
    pub i_w: f64,
    /// Rotational friction coefficient; the viscous gain is `mu · m g / 4`.
    pub mu: f64,
    /// Rear wheel track, m.
    pub l_w: f64,
    /// Handle spacing, m.
    pub l_h: f64,
    /// Handle x-offset from the rear axle midpoint, m.
    pub d: f64,
    /// Gravitational acceleration, m/s².
    pub g: f64,
    pub matrix_variant: MatrixVariant,
}

impl Default for CartParams {
    fn default() -> Self {
        Self::wheelchair(34.6)
    }
}

impl CartParams {
    /// Loaded wheelchair of the given total mass: CoM 0.15 m ahead of the rear
    /// axle, radius of gyration √0.3 m.
    pub fn wheelchair(total_mass: f64) -> Self {
        Self {
            m_w: total_mass,
            p_x: 0.15,
            p_y: 0.01,
            i_w: 0.3 * total_mass,
            mu: 0.1,
            l_w: 0.56,
            l_h: 0.50,
            d: 0.30,
            g: 9.8,
            matrix_variant: MatrixVariant::PaperPrinted,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.m_w, self.p_x, self.p_y, self.i_w, self.mu, self.l_w, self.l_h, self.d, self.g]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidParameter("cart parameters must be finite".into()));
        }
        let checks = [
            (self.m_w > 0.0, "m_w must be > 0"),
            (self.i_w > 0.0, "i_w must be > 0"),
            (self.l_w > 0.0, "l_w must be > 0"),
            (self.l_h > 0.0, "l_h must be > 0"),
            (self.mu >= 0.0, "mu must be >= 0"),
            (self.g > 0.0, "g must be > 0"),
        ];
        if let Some((_, msg)) = checks.iter().find(|(ok, _)| !ok) {
            return Err(Error::InvalidParameter((*msg).into()));
        }
        mass_matrix(self).map(|_| ())
    }

    /// Load carried by each of the four wheels.
    pub fn wheel_load(&self) -> f64 {
        self.m_w * self.g / 4.0
    }

    /// Translational viscous gain `σ = μ N`.
    pub fn sigma(&self) -> f64 {
        self.mu * self.wheel_load()
    }

    /// Yaw inertia about the rear axle midpoint, `I + m|p|²`.
    pub fn axle_inertia(&self) -> f64 {
        self.i_w + self.m_w * (self.p_x * self.p_x + self.p_y * self.p_y)
    }

    /// Handle positions `(r_L, r_R)` in the cart frame.
    pub fn handle_positions(&self) -> (Vector2<f64>, Vector2<f64>) {
        (Vector2::new(self.d, 0.5 * self.l_h), Vector2::new(self.d, -0.5 * self.l_h))
    }
}

/// World pose and body twist. There is no lateral velocity: the rear-wheel
/// constraint is structural.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CartState {
    pub x: f64,
    pub y: f64,
    /// Heading, wrapped to (−π, π].
    pub theta: f64,
    pub v_x: f64,
    pub omega: f64,
}

impl CartState {
    pub fn twist(&self) -> Vector2<f64> {
        Vector2::new(self.v_x, self.omega)
    }
}

/// Effective planar input: force along cart x and torque about z.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlanarWrench {
    pub f_p: f64,
    pub tau: f64,
}

impl PlanarWrench {
    pub fn new(f_p: f64, tau: f64) -> Self {
        Self { f_p, tau }
    }

    pub fn as_vector(&self) -> Vector2<f64> {
        Vector2::new(self.f_p, self.tau)
    }

    pub fn from_vector(v: &Vector2<f64>) -> Self {
        Self::new(v.x, v.y)
    }
}

impl std::ops::Add for PlanarWrench {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.f_p + rhs.f_p, self.tau + rhs.tau)
    }
}

/// Forces at the two handles, expressed in the cart frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HandleForces {
    pub f_left: Vector2<f64>,
    pub f_right: Vector2<f64>,
    pub r_left: Vector2<f64>,
    pub r_right: Vector2<f64>,
}

impl HandleForces {
    /// Forces applied at the cart's handle positions `(d, ±l_h/2)`.
    pub fn at_handles(params: &CartParams, f_left: Vector2<f64>, f_right: Vector2<f64>) -> Self {
        let (r_left, r_right) = params.handle_positions();
        Self { f_left, f_right, r_left, r_right }
    }
}

/// Inertia matrix in the selected variant.
pub fn mass_matrix(params: &CartParams) -> Result<Matrix2<f64>> {
    let m = params.m_w;
    let i_axle = params.axle_inertia();
    let m21 = match params.matrix_variant {
        MatrixVariant::PaperPrinted => m * params.p_y * i_axle / params.i_w,
        MatrixVariant::SymmetricReference => -m * params.p_y,
    };
    let m12 = match params.matrix_variant {
        MatrixVariant::PaperPrinted => 0.0,
        MatrixVariant::SymmetricReference => -m * params.p_y,
    };
    let mm = Matrix2::new(m, m12, m21, i_axle);
    let det = mm.determinant();
    if !det.is_finite() || det.abs() < SINGULAR_DET {
        return Err(Error::NonInvertibleModel { det });
    }
    Ok(mm)
}

pub fn coriolis_matrix(params: &CartParams, omega: f64) -> Matrix2<f64> {
    Matrix2::new(0.0, -params.m_w * omega * params.p_x, 0.0, 0.0)
}

/// Viscous wheel friction `N(q̇) = diag(μN, μN l_w/2) q̇`.
pub fn friction_wrench(params: &CartParams, v_x: f64, omega: f64) -> PlanarWrench {
    let s = params.sigma();
    PlanarWrench::new(s * v_x, s * 0.5 * params.l_w * omega)
}

/// Maps the two handle forces onto the cart's two effective DoFs. Lateral
/// components only enter through the torque.
pub fn handle_wrench(hf: &HandleForces) -> PlanarWrench {
    PlanarWrench::new(hf.f_left.x + hf.f_right.x, cross2(&hf.r_left, &hf.f_left) + cross2(&hf.r_right, &hf.f_right))
}

/// Solves the dynamics for `(v̇_x, ω̇)`.
pub fn acceleration(params: &CartParams, state: &CartState, input: &PlanarWrench) -> Result<Vector2<f64>> {
    let mm = mass_matrix(params)?;
    let qd = state.twist();
    let rhs = input.as_vector()
        - coriolis_matrix(params, state.omega) * qd
        - friction_wrench(params, state.v_x, state.omega).as_vector();
    let det = mm.determinant();
    // Explicit 2×2 solve keeps results bit-stable across platforms.
    Ok(Vector2::new((mm.m22 * rhs.x - mm.m12 * rhs.y) / det, (mm.m11 * rhs.y - mm.m21 * rhs.x) / det))
}

/// One semi-implicit Euler step: twist first, then pose from the new twist
/// along the pre-step heading.
pub fn step(params: &CartParams, state: &CartState, input: &PlanarWrench, dt: f64) -> Result<CartState> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidArgument(format!("dt must be > 0, got {dt}")));
    }
    let acc = acceleration(params, state, input)?;
    let v_x = state.v_x + dt * acc.x;
    let omega = state.omega + dt * acc.y;
    let (s, c) = state.theta.sin_cos();
    Ok(CartState {
        x: state.x + dt * v_x * c,
        y: state.y + dt * v_x * s,
        theta: wrap_angle(state.theta + dt * omega),
        v_x,
        omega,
    })
}
