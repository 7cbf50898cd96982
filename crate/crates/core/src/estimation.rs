//! Online identification of the cart's inertial and friction parameters.
//!
//! The filter state is `[x, y, θ, v_x, ω, φ₁..φ₅]` where
//! `φ = [m, m p_x, m p_y, I + m|p|², σ]` enters the dynamics linearly. The
//! parameters are modelled as constant (random walk through process noise).
//! Pose and twist are measured directly; the cart-frame wrench is the
//! control input, smoothed by a moving-average filter.

use std::collections::VecDeque;

use nalgebra::{Matrix2, SMatrix, SVector, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::cart::{self, CartParams, CartState, PlanarWrench};
use crate::error::{Error, Result};
use crate::math::wrap_angle;

pub const STATE_DIM: usize = 10;
pub const MEAS_DIM: usize = 5;

pub type StateVector = SVector<f64, STATE_DIM>;
pub type StateMatrix = SMatrix<f64, STATE_DIM, STATE_DIM>;
pub type Innovation = SVector<f64, MEAS_DIM>;

const THETA: usize = 2;
const PARAM0: usize = 5;
const FD_REL_STEP: f64 = 1e-6;

/// Linear-in-parameters identification vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamVector(pub [f64; 5]);

impl ParamVector {
    /// Initial guess `[60, 0, 0, 30, 0.001]`.
    pub const INITIAL: ParamVector = ParamVector([60.0, 0.0, 0.0, 30.0, 0.001]);

    pub fn from_cart(cp: &CartParams) -> Self {
        Self([cp.m_w, cp.m_w * cp.p_x, cp.m_w * cp.p_y, cp.axle_inertia(), cp.sigma()])
    }
}

/// Physical parameters recovered from a [`ParamVector`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamEstimate {
    pub m_w: f64,
    pub p_x: f64,
    pub p_y: f64,
    pub i_w: f64,
    /// Translational viscous gain, N·s/m.
    pub sigma: f64,
}

impl ParamEstimate {
    /// Cart parameters with geometry, gravity and matrix variant taken from
    /// `template`; `mu` is recovered from `sigma`.
    pub fn to_cart_params(&self, template: &CartParams) -> CartParams {
        CartParams {
            m_w: self.m_w,
            p_x: self.p_x,
            p_y: self.p_y,
            i_w: self.i_w,
            mu: self.sigma / (self.m_w * template.g / 4.0),
            ..*template
        }
    }
}

/// Recovers `(m, p, I, σ)`. Fails when `φ₁ ≤ m_min` or the implied CoM
/// inertia is not positive.
pub fn extract_params(phi: &ParamVector, m_min: f64) -> Result<ParamEstimate> {
    let [m, mpx, mpy, i_axle, sigma] = phi.0;
    if !phi.0.iter().all(|v| v.is_finite()) {
        return Err(Error::EstimatorDegenerate("non-finite parameter estimate".into()));
    }
    if m <= m_min {
        return Err(Error::EstimatorDegenerate(format!("mass estimate {m} <= {m_min}")));
    }
    let i_w = i_axle - (mpx * mpx + mpy * mpy) / m;
    if i_w <= 0.0 {
        return Err(Error::EstimatorDegenerate(format!("implied CoM inertia {i_w} <= 0")));
    }
    Ok(ParamEstimate { m_w: m, p_x: mpx / m, p_y: mpy / m, i_w, sigma })
}

/// Noise model and filter rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    /// Process noise std per √s for `(x, y, θ)`.
    pub process_pose_std: f64,
    /// Process noise std per √s for `(v_x, ω)`.
    pub process_twist_std: f64,
    /// Process noise std per √s for each parameter.
    pub process_param_std: [f64; 5],
    /// Measurement std for `(x, y, θ)`.
    pub meas_pose_std: [f64; 3],
    /// Measurement std for `(v_x, ω)`.
    pub meas_twist_std: [f64; 2],
    /// Std of the simulated wrench sensor, `(N, N·m)`.
    pub wrench_std: [f64; 2],
    /// Moving-average window, samples.
    pub window: usize,
    /// Estimator update rate, Hz.
    pub rate_hz: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        let scale = [60.0, 1.0, 1.0, 30.0, 1.0];
        Self {
            process_pose_std: 1e-4,
            process_twist_std: 1e-3,
            process_param_std: scale.map(|s| 1e-3 * s),
            meas_pose_std: [0.005, 0.005, 0.005],
            meas_twist_std: [0.01, 0.01],
            wrench_std: [0.5, 0.2],
            window: 10,
            rate_hz: 100.0,
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        let stds = [self.process_pose_std, self.process_twist_std]
            .into_iter()
            .chain(self.process_param_std)
            .chain(self.meas_pose_std)
            .chain(self.meas_twist_std)
            .chain(self.wrench_std);
        for s in stds {
            if !(s.is_finite() && s >= 0.0) {
                return Err(Error::InvalidParameter(format!("noise std must be finite and >= 0, got {s}")));
            }
        }
        if self.window == 0 {
            return Err(Error::InvalidParameter("window must be >= 1".into()));
        }
        if !(self.rate_hz.is_finite() && self.rate_hz > 0.0) {
            return Err(Error::InvalidParameter("rate_hz must be > 0".into()));
        }
        Ok(())
    }

    /// Continuous-time process noise density `diag(std²)`.
    pub fn process_density(&self) -> StateVector {
        let mut q = StateVector::zeros();
        for i in 0..3 {
            q[i] = self.process_pose_std.powi(2);
        }
        for i in 3..5 {
            q[i] = self.process_twist_std.powi(2);
        }
        for i in 0..5 {
            q[PARAM0 + i] = self.process_param_std[i].powi(2);
        }
        q
    }

    /// Covariance of the filtered wrench fed to the prediction: sensor
    /// variance reduced by the averaging window.
    pub fn input_covariance(&self) -> Matrix2<f64> {
        let n = self.window.max(1) as f64;
        Matrix2::from_diagonal(&Vector2::from(self.wrench_std.map(|s| s * s / n)))
    }

    pub fn measurement_covariance(&self) -> SMatrix<f64, MEAS_DIM, MEAS_DIM> {
        let d = [
            self.meas_pose_std[0],
            self.meas_pose_std[1],
            self.meas_pose_std[2],
            self.meas_twist_std[0],
            self.meas_twist_std[1],
        ];
        SMatrix::from_diagonal(&SVector::from(d.map(|s| s * s)))
    }
}

/// Filter configuration beyond the noise model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EkfConfig {
    pub noise: NoiseConfig,
    pub initial_params: [f64; 5],
    /// Initial std of each parameter.
    pub initial_param_std: [f64; 5],
    pub initial_pose_std: f64,
    pub initial_twist_std: f64,
    /// Lower bound on the mass estimate accepted by the extraction guard.
    pub m_min: f64,
    /// Parameters are only corrected while the estimated `|v_x|` or `|ω|`
    /// is at least this large. Near rest the measurements carry no
    /// information about inertia or friction and noise would make the
    /// estimates drift. Zero disables the gate.
    pub excitation_threshold: f64,
}

impl Default for EkfConfig {
    fn default() -> Self {
        Self {
            noise: NoiseConfig::default(),
            initial_params: ParamVector::INITIAL.0,
            initial_param_std: [40.0, 10.0, 10.0, 40.0, 20.0],
            initial_pose_std: 0.01,
            initial_twist_std: 0.05,
            m_min: 1.0,
            excitation_threshold: 0.02,
        }
    }
}

impl EkfConfig {
    pub fn validate(&self) -> Result<()> {
        self.noise.validate()?;
        extract_params(&ParamVector(self.initial_params), self.m_min)
            .map_err(|e| Error::InvalidParameter(format!("initial_params: {e}")))?;
        let stds = self.initial_param_std.iter().chain([&self.initial_pose_std, &self.initial_twist_std]);
        for s in stds {
            if !(s.is_finite() && *s >= 0.0) {
                return Err(Error::InvalidParameter("initial std must be finite and >= 0".into()));
            }
        }
        if !(self.excitation_threshold.is_finite() && self.excitation_threshold >= 0.0) {
            return Err(Error::InvalidParameter("excitation_threshold must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// Mean and covariance over `[pose, twist, φ]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EkfState {
    pub mean: StateVector,
    pub cov: StateMatrix,
}

impl EkfState {
    pub fn pose(&self) -> Vector3<f64> {
        self.mean.fixed_rows::<3>(0).into()
    }

    pub fn twist(&self) -> Vector2<f64> {
        self.mean.fixed_rows::<2>(3).into()
    }

    pub fn params(&self) -> ParamVector {
        let mut p = [0.0; 5];
        p.copy_from_slice(self.mean.fixed_rows::<5>(PARAM0).as_slice());
        ParamVector(p)
    }

    pub fn set_params(&mut self, phi: &ParamVector) {
        self.mean.fixed_rows_mut::<5>(PARAM0).copy_from_slice(&phi.0);
    }

    pub fn cart_state(&self) -> CartState {
        CartState { x: self.mean[0], y: self.mean[1], theta: self.mean[2], v_x: self.mean[3], omega: self.mean[4] }
    }
}

/// Extended Kalman filter over the cart model. The `template` supplies the
/// quantities that are not identified: track width, gravity and matrix form.
#[derive(Debug, Clone)]
pub struct Ekf {
    pub config: EkfConfig,
    pub template: CartParams,
}

impl Ekf {
    pub fn new(config: EkfConfig, template: CartParams) -> Self {
        Self { config, template }
    }

    /// Initial state at `initial` with the configured prior.
    pub fn initial_state(&self, initial: &CartState) -> EkfState {
        let mut mean = StateVector::zeros();
        mean[0] = initial.x;
        mean[1] = initial.y;
        mean[2] = initial.theta;
        mean[3] = initial.v_x;
        mean[4] = initial.omega;
        let mut var = StateVector::zeros();
        for i in 0..3 {
            var[i] = self.config.initial_pose_std.powi(2);
        }
        for i in 3..5 {
            var[i] = self.config.initial_twist_std.powi(2);
        }
        for i in 0..5 {
            mean[PARAM0 + i] = self.config.initial_params[i];
            var[PARAM0 + i] = self.config.initial_param_std[i].powi(2);
        }
        EkfState { mean, cov: StateMatrix::from_diagonal(&var) }
    }

    /// Returns `state` with the parameter mean and covariance reset to the
    /// prior. Pose and twist are kept; their cross terms with the parameters
    /// are dropped.
    pub fn reset_params(&self, state: &EkfState) -> EkfState {
        let mut out = state.clone();
        out.set_params(&ParamVector(self.config.initial_params));
        out.cov.fixed_view_mut::<5, STATE_DIM>(PARAM0, 0).fill(0.0);
        out.cov.fixed_view_mut::<STATE_DIM, 5>(0, PARAM0).fill(0.0);
        for i in 0..5 {
            out.cov[(PARAM0 + i, PARAM0 + i)] = self.config.initial_param_std[i].powi(2);
        }
        out
    }

    pub fn estimate(&self, state: &EkfState) -> Result<ParamEstimate> {
        extract_params(&state.params(), self.config.m_min)
    }

    /// Discrete transition: one semi-implicit step of the cart model using
    /// the parameters carried in the state.
    pub fn transition(&self, x: &StateVector, input: &PlanarWrench, dt: f64) -> Result<StateVector> {
        let mut phi = [0.0; 5];
        phi.copy_from_slice(x.fixed_rows::<5>(PARAM0).as_slice());
        let est = extract_params(&ParamVector(phi), self.config.m_min)?;
        let cp = est.to_cart_params(&self.template);
        let cs = CartState { x: x[0], y: x[1], theta: x[2], v_x: x[3], omega: x[4] };
        let next = cart::step(&cp, &cs, input, dt)?;
        let mut out = *x;
        out[0] = next.x;
        out[1] = next.y;
        out[2] = next.theta;
        out[3] = next.v_x;
        out[4] = next.omega;
        Ok(out)
    }

    /// Central-difference Jacobian of [`Ekf::transition`].
    pub fn transition_jacobian(&self, x: &StateVector, input: &PlanarWrench, dt: f64) -> Result<StateMatrix> {
        let mut jac = StateMatrix::zeros();
        for j in 0..STATE_DIM {
            let h = FD_REL_STEP * x[j].abs().max(1.0);
            let mut xp = *x;
            let mut xm = *x;
            xp[j] += h;
            xm[j] -= h;
            let fp = self.transition(&xp, input, dt)?;
            let fm = self.transition(&xm, input, dt)?;
            let mut col = fp - fm;
            col[THETA] = wrap_angle(col[THETA]);
            jac.set_column(j, &(col / (2.0 * h)));
        }
        Ok(jac)
    }

    /// Central-difference Jacobian of [`Ekf::transition`] with respect to the
    /// wrench input.
    pub fn input_jacobian(&self, x: &StateVector, input: &PlanarWrench, dt: f64) -> Result<SMatrix<f64, STATE_DIM, 2>> {
        let mut jac = SMatrix::<f64, STATE_DIM, 2>::zeros();
        let u = input.as_vector();
        for j in 0..2 {
            let h = FD_REL_STEP * u[j].abs().max(1.0);
            let mut up = u;
            let mut um = u;
            up[j] += h;
            um[j] -= h;
            let fp = self.transition(x, &PlanarWrench::from_vector(&up), dt)?;
            let fm = self.transition(x, &PlanarWrench::from_vector(&um), dt)?;
            let mut col = fp - fm;
            col[THETA] = wrap_angle(col[THETA]);
            jac.set_column(j, &(col / (2.0 * h)));
        }
        Ok(jac)
    }

    /// Propagates mean and covariance over `dt` with the wrench held. The
    /// filtered wrench noise enters through the input Jacobian.
    pub fn predict(&self, state: &EkfState, input: &PlanarWrench, dt: f64) -> Result<EkfState> {
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!("dt must be > 0, got {dt}")));
        }
        let mean = self.transition(&state.mean, input, dt)?;
        let f = self.transition_jacobian(&state.mean, input, dt)?;
        let g = self.input_jacobian(&state.mean, input, dt)?;
        let q = StateMatrix::from_diagonal(&(self.config.noise.process_density() * dt))
            + g * self.config.noise.input_covariance() * g.transpose();
        let cov = symmetrize(&(f * state.cov * f.transpose() + q));
        Ok(EkfState { mean, cov })
    }

    /// Whether the current twist estimate clears the excitation gate.
    pub fn excited(&self, state: &EkfState) -> bool {
        let thr = self.config.excitation_threshold;
        thr == 0.0 || state.mean[3].abs() >= thr || state.mean[4].abs() >= thr
    }

    /// Corrects with a direct pose + twist measurement. Returns the new state
    /// and the innovation (θ component wrapped).
    pub fn update(
        &self,
        state: &EkfState,
        pose: &Vector3<f64>,
        twist: &Vector2<f64>,
    ) -> Result<(EkfState, Innovation)> {
        if !(pose.iter().all(|v| v.is_finite()) && twist.iter().all(|v| v.is_finite())) {
            return Err(Error::InvalidArgument("measurement must be finite".into()));
        }
        let z = Innovation::new(pose.x, pose.y, pose.z, twist.x, twist.y);
        let mut y = z - state.mean.fixed_rows::<MEAS_DIM>(0);
        y[THETA] = wrap_angle(y[THETA]);

        let p_ht: SMatrix<f64, STATE_DIM, MEAS_DIM> = state.cov.fixed_columns::<MEAS_DIM>(0).into();
        let s = state.cov.fixed_view::<MEAS_DIM, MEAS_DIM>(0, 0) + self.config.noise.measurement_covariance();
        let s_inv = s
            .cholesky()
            .ok_or_else(|| Error::NumericalDegeneracy("innovation covariance not positive definite".into()))?
            .inverse();
        let mut k = p_ht * s_inv;
        if !self.excited(state) {
            k.fixed_rows_mut::<5>(PARAM0).fill(0.0);
        }

        let mut mean = state.mean + k * y;
        mean[THETA] = wrap_angle(mean[THETA]);

        // Joseph form keeps the covariance positive semidefinite.
        let mut i_kh = StateMatrix::identity();
        let mut cols = i_kh.fixed_columns_mut::<MEAS_DIM>(0);
        cols -= &k;
        let cov = i_kh * state.cov * i_kh.transpose() + k * self.config.noise.measurement_covariance() * k.transpose();
        Ok((EkfState { mean, cov: symmetrize(&cov) }, y))
    }
}

fn symmetrize(m: &StateMatrix) -> StateMatrix {
    (m + m.transpose()) * 0.5
}

/// Consecutive degenerate cycles after which the parameters restart from
/// the prior.
pub const DEGENERATE_RESET_CYCLES: usize = 100;

/// Filter plus the policy for degenerate estimates: the last parameters that
/// passed the extraction guard are held for control while filtering goes on.
/// A predict that fails from the last valid point, or a run of
/// [`DEGENERATE_RESET_CYCLES`] degenerate cycles, restarts the parameters
/// from the prior.
#[derive(Debug, Clone)]
pub struct OnlineEstimator {
    ekf: Ekf,
    state: EkfState,
    last_valid: ParamVector,
    estimate: ParamEstimate,
    degenerate_run: usize,
}

impl OnlineEstimator {
    pub fn new(ekf: Ekf) -> Result<Self> {
        let state = ekf.initial_state(&CartState::default());
        let estimate = ekf.estimate(&state)?;
        Ok(Self { last_valid: state.params(), ekf, state, estimate, degenerate_run: 0 })
    }

    /// Predict (unless first tick) then update. Returns whether the estimate
    /// was degenerate during this cycle.
    pub fn cycle(
        &mut self,
        input: Option<&PlanarWrench>,
        dt: f64,
        pose: &Vector3<f64>,
        twist: &Vector2<f64>,
    ) -> Result<bool> {
        let mut degenerate = false;
        if let Some(u) = input {
            self.state = match self.ekf.predict(&self.state, u, dt) {
                Ok(s) => s,
                Err(Error::EstimatorDegenerate(_)) => {
                    degenerate = true;
                    self.state.set_params(&self.last_valid);
                    match self.ekf.predict(&self.state, u, dt) {
                        Ok(s) => s,
                        // The last valid point sits too close to the guard
                        // for the Jacobian probes; start the parameters over.
                        Err(Error::EstimatorDegenerate(_)) => {
                            self.state = self.ekf.reset_params(&self.state);
                            self.ekf.predict(&self.state, u, dt)?
                        }
                        Err(e) => return Err(e),
                    }
                }
                Err(e) => return Err(e),
            };
        }
        match self.ekf.update(&self.state, pose, twist) {
            Ok((s, _)) => self.state = s,
            Err(Error::NumericalDegeneracy(_)) => degenerate = true,
            Err(e) => return Err(e),
        }
        match self.ekf.estimate(&self.state) {
            Ok(e) => {
                self.estimate = e;
                self.last_valid = self.state.params();
            }
            Err(_) => degenerate = true,
        }
        self.degenerate_run = if degenerate { self.degenerate_run + 1 } else { 0 };
        if self.degenerate_run >= DEGENERATE_RESET_CYCLES {
            self.state = self.ekf.reset_params(&self.state);
            self.last_valid = self.state.params();
            self.estimate = self.ekf.estimate(&self.state)?;
            self.degenerate_run = 0;
        }
        Ok(degenerate)
    }

    pub fn state(&self) -> &EkfState {
        &self.state
    }

    /// Latest valid estimate.
    pub fn estimate(&self) -> &ParamEstimate {
        &self.estimate
    }
}

/// Moving average over the last `window` wrench samples.
#[derive(Debug, Clone, PartialEq)]
pub struct WrenchFilter {
    buf: VecDeque<PlanarWrench>,
    window: usize,
}

impl WrenchFilter {
    pub fn new(window: usize) -> Self {
        let window = window.max(1);
        Self { buf: VecDeque::with_capacity(window), window }
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    /// Pushes a sample and returns the current mean.
    pub fn push(&mut self, sample: PlanarWrench) -> PlanarWrench {
        if self.buf.len() == self.window {
            self.buf.pop_front();
        }
        self.buf.push_back(sample);
        self.mean()
    }

    /// Mean of the buffered samples; zero when empty.
    pub fn mean(&self) -> PlanarWrench {
        if self.buf.is_empty() {
            return PlanarWrench::default();
        }
        let n = self.buf.len() as f64;
        let (f, t) = self.buf.iter().fold((0.0, 0.0), |(f, t), w| (f + w.f_p, t + w.tau));
        PlanarWrench::new(f / n, t / n)
    }
}

pub fn filter_wrench(filter: &mut WrenchFilter, sample: PlanarWrench) -> PlanarWrench {
    filter.push(sample)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cart::MatrixVariant;

    #[test]
    fn extract_examples() {
        let e = extract_params(&ParamVector::INITIAL, 1.0).unwrap();
        assert_eq!((e.m_w, e.p_x, e.p_y, e.i_w, e.sigma), (60.0, 0.0, 0.0, 30.0, 0.001));
        let e = extract_params(&ParamVector([60.0, 6.0, 12.0, 33.0, 0.01]), 1.0).unwrap();
        assert!((e.p_x - 0.1).abs() < 1e-15 && (e.p_y - 0.2).abs() < 1e-15);
        assert!((e.i_w - 30.0).abs() < 1e-12 && e.sigma == 0.01);
        assert!(matches!(
            extract_params(&ParamVector([0.5, 0.0, 0.0, 30.0, 0.0]), 1.0),
            Err(Error::EstimatorDegenerate(_))
        ));
        assert!(matches!(
            extract_params(&ParamVector([10.0, 10.0, 0.0, 5.0, 0.0]), 1.0),
            Err(Error::EstimatorDegenerate(_))
        ));
    }

    #[test]
    fn param_round_trip_through_cart() {
        let cp = CartParams::wheelchair(52.0);
        let e = extract_params(&ParamVector::from_cart(&cp), 1.0).unwrap();
        let back = e.to_cart_params(&cp);
        assert!((back.m_w - cp.m_w).abs() < 1e-12);
        assert!((back.p_x - cp.p_x).abs() < 1e-12 && (back.p_y - cp.p_y).abs() < 1e-12);
        assert!((back.i_w - cp.i_w).abs() < 1e-10);
        assert!((back.mu - cp.mu).abs() < 1e-14);
    }

    #[test]
    fn wrench_filter_examples() {
        let mut f = WrenchFilter::new(1);
        for v in [1.0, -3.0, 7.5] {
            assert_eq!(filter_wrench(&mut f, PlanarWrench::new(v, 2.0 * v)), PlanarWrench::new(v, 2.0 * v));
        }
        let mut f = WrenchFilter::new(5);
        for _ in 0..12 {
            assert_eq!(f.push(PlanarWrench::new(4.0, -1.0)), PlanarWrench::new(4.0, -1.0));
        }
        let mut f = WrenchFilter::new(2);
        f.push(PlanarWrench::new(1.0, 1.0));
        assert_eq!(f.push(PlanarWrench::new(-1.0, -1.0)), PlanarWrench::new(0.0, 0.0));
        // Partial buffer averages what it has.
        let mut f = WrenchFilter::new(4);
        f.push(PlanarWrench::new(2.0, 0.0));
        assert_eq!(f.push(PlanarWrench::new(4.0, 0.0)).f_p, 3.0);
        assert_eq!(WrenchFilter::new(3).mean(), PlanarWrench::default());
    }

    #[test]
    fn predict_at_rest_grows_covariance_only() {
        let ekf = Ekf::new(EkfConfig::default(), CartParams::default());
        let s0 = ekf.initial_state(&CartState::default());
        let s1 = ekf.predict(&s0, &PlanarWrench::default(), 0.01).unwrap();
        assert_eq!(s1.mean, s0.mean);
        let f = ekf.transition_jacobian(&s0.mean, &PlanarWrench::default(), 0.01).unwrap();
        let g = ekf.input_jacobian(&s0.mean, &PlanarWrench::default(), 0.01).unwrap();
        let q = StateMatrix::from_diagonal(&(ekf.config.noise.process_density() * 0.01))
            + g * ekf.config.noise.input_covariance() * g.transpose();
        assert!((s1.cov - f * s0.cov * f.transpose() - q).abs().max() < 1e-12);
        // Friction contracts twist variance; pose and parameters only grow.
        for i in (0..3).chain(PARAM0..STATE_DIM) {
            assert!(
                s1.cov[(i, i)] >= s0.cov[(i, i)] * (1.0 - 1e-9) + q[(i, i)],
                "{i}: {} {} {}",
                s1.cov[(i, i)],
                s0.cov[(i, i)],
                q[(i, i)]
            );
        }
    }

    #[test]
    fn predict_matches_dynamics_with_true_params() {
        for variant in [MatrixVariant::PaperPrinted, MatrixVariant::SymmetricReference] {
            let truth = CartParams { matrix_variant: variant, ..CartParams::wheelchair(45.0) };
            let cfg = EkfConfig { initial_params: ParamVector::from_cart(&truth).0, ..Default::default() };
            let ekf = Ekf::new(cfg, truth);
            let cs = CartState { x: 0.3, y: -0.2, theta: 0.7, v_x: 0.25, omega: -0.12 };
            let s = ekf.initial_state(&cs);
            let u = PlanarWrench::new(12.0, -1.5);
            let p = ekf.predict(&s, &u, 0.01).unwrap();
            let next = cart::step(&truth, &cs, &u, 0.01).unwrap();
            assert!((p.twist() - next.twist()).norm() < 1e-9);
            assert!((p.pose() - Vector3::new(next.x, next.y, next.theta)).norm() < 1e-9);
        }
    }

    #[test]
    fn jacobian_handles_heading_wrap() {
        let ekf = Ekf::new(EkfConfig::default(), CartParams::default());
        let cs = CartState { theta: std::f64::consts::PI - 1e-9, v_x: 0.2, omega: 0.3, ..Default::default() };
        let s = ekf.initial_state(&cs);
        let j = ekf.transition_jacobian(&s.mean, &PlanarWrench::default(), 0.01).unwrap();
        assert!((j[(THETA, THETA)] - 1.0).abs() < 1e-6, "{}", j[(THETA, THETA)]);
    }

    #[test]
    fn predict_degenerate_params() {
        let ekf = Ekf::new(EkfConfig::default(), CartParams::default());
        let mut s = ekf.initial_state(&CartState::default());
        s.set_params(&ParamVector([0.2, 0.0, 0.0, 1.0, 0.0]));
        assert!(matches!(ekf.predict(&s, &PlanarWrench::default(), 0.01), Err(Error::EstimatorDegenerate(_))));
    }

    #[test]
    fn zero_innovation_update() {
        let ekf = Ekf::new(EkfConfig::default(), CartParams::default());
        let s = ekf.initial_state(&CartState { x: 1.0, v_x: 0.2, ..Default::default() });
        let (u, y) = ekf.update(&s, &s.pose(), &s.twist()).unwrap();
        assert_eq!(y, Innovation::zeros());
        assert_eq!(u.mean, s.mean);
        assert!(u.cov.trace() <= s.cov.trace());
    }

    #[test]
    fn update_rejects_non_finite() {
        let ekf = Ekf::new(EkfConfig::default(), CartParams::default());
        let s = ekf.initial_state(&CartState::default());
        assert!(ekf.update(&s, &Vector3::new(f64::NAN, 0.0, 0.0), &Vector2::zeros()).is_err());
    }

    #[test]
    fn input_jacobian_matches_inverse_inertia() {
        // At rest with p = 0 a wrench only accelerates the twist: dv = dt f / m, dω = dt τ / I'.
        let truth = CartParams { p_x: 0.0, p_y: 0.0, ..CartParams::wheelchair(40.0) };
        let cfg = EkfConfig { initial_params: ParamVector::from_cart(&truth).0, ..Default::default() };
        let ekf = Ekf::new(cfg, truth);
        let s = ekf.initial_state(&CartState::default());
        let g = ekf.input_jacobian(&s.mean, &PlanarWrench::default(), 0.01).unwrap();
        assert!((g[(3, 0)] - 0.01 / truth.m_w).abs() < 1e-9);
        assert!((g[(4, 1)] - 0.01 / truth.axle_inertia()).abs() < 1e-9);
        assert!(g[(3, 1)].abs() < 1e-9 && g[(4, 0)].abs() < 1e-9);
        for i in PARAM0..STATE_DIM {
            assert_eq!(g.row(i).abs().max(), 0.0);
        }
    }

    #[test]
    fn wrench_noise_inflates_twist_covariance() {
        let quiet =
            EkfConfig { noise: NoiseConfig { wrench_std: [0.0, 0.0], ..Default::default() }, ..Default::default() };
        let loud =
            EkfConfig { noise: NoiseConfig { wrench_std: [50.0, 20.0], ..Default::default() }, ..Default::default() };
        let cs = CartState { v_x: 0.2, ..Default::default() };
        let u = PlanarWrench::new(10.0, 1.0);
        let a = Ekf::new(quiet, CartParams::default());
        let b = Ekf::new(loud, CartParams::default());
        let pa = a.predict(&a.initial_state(&cs), &u, 0.01).unwrap();
        let pb = b.predict(&b.initial_state(&cs), &u, 0.01).unwrap();
        assert_eq!(pa.mean, pb.mean);
        assert!(pb.cov[(3, 3)] > pa.cov[(3, 3)] && pb.cov[(4, 4)] > pa.cov[(4, 4)]);
    }

    #[test]
    fn gate_freezes_parameters_at_rest() {
        let ekf = Ekf::new(EkfConfig::default(), CartParams::default());
        let s = ekf.initial_state(&CartState::default());
        assert!(!ekf.excited(&s));
        let (u, _) = ekf.update(&s, &Vector3::new(0.01, 0.0, 0.0), &Vector2::new(0.01, 0.0)).unwrap();
        assert_eq!(u.params(), s.params());
        assert!(u.mean[0] != s.mean[0]);

        let moving = ekf.initial_state(&CartState { v_x: 0.2, ..Default::default() });
        assert!(ekf.excited(&moving));
        let mut cov_moving = moving.clone();
        // Correlate the mass with the forward speed so a speed innovation moves it.
        cov_moving.cov[(3, PARAM0)] = 1.0;
        cov_moving.cov[(PARAM0, 3)] = 1.0;
        let (u, _) = ekf.update(&cov_moving, &moving.pose(), &Vector2::new(0.25, 0.0)).unwrap();
        assert!(u.params().0[0] != moving.params().0[0]);

        let open = Ekf::new(EkfConfig { excitation_threshold: 0.0, ..Default::default() }, CartParams::default());
        assert!(open.excited(&open.initial_state(&CartState::default())));
    }

    #[test]
    fn reset_params_restores_prior() {
        let ekf = Ekf::new(EkfConfig::default(), CartParams::default());
        let s0 = ekf.initial_state(&CartState { x: 2.0, v_x: 0.1, ..Default::default() });
        let mut s = s0.clone();
        s.set_params(&ParamVector([20.0, 1.0, -2.0, 4.0, 3.0]));
        s.cov[(1, PARAM0 + 2)] = 0.3;
        s.cov[(PARAM0 + 2, 1)] = 0.3;
        let r = ekf.reset_params(&s);
        assert_eq!(r.params(), ParamVector::INITIAL);
        assert_eq!(r.mean.fixed_rows::<MEAS_DIM>(0), s.mean.fixed_rows::<MEAS_DIM>(0));
        assert_eq!(r.cov, s0.cov);
    }

    #[test]
    fn config_validation() {
        assert!(EkfConfig::default().validate().is_ok());
        let bad = EkfConfig { initial_params: [0.5, 0.0, 0.0, 1.0, 0.0], ..Default::default() };
        assert!(bad.validate().is_err());
        assert!(NoiseConfig { window: 0, ..Default::default() }.validate().is_err());
    }
}
