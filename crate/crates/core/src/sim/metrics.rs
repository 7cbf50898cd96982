use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::ParamEstimate;

use super::scenario::{hold_bounds, DisturbanceTarget};
use super::trace::{SimTrace, TraceRecord};

/// Settling window appended to each disturbance when looking for the peak.
const DISTURBANCE_SETTLE: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Linear,
    Angular,
}

/// Response to a step between two constant command segments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepResponse {
    pub time: f64,
    pub axis: Axis,
    pub from: f64,
    pub to: f64,
    /// Time from the step until 10% / 90% of the step is first reached.
    pub t10: Option<f64>,
    pub t90: Option<f64>,
    /// 10% → 90%.
    pub rise_time: Option<f64>,
}

/// Tracking error over the final 20% of one command hold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoldError {
    pub start: f64,
    pub end: f64,
    /// Mean |v − v_cmd|, |ω − ω_cmd|.
    pub mean_abs_error: [f64; 2],
    /// Mean |v_cmd|, |ω_cmd| over the same window.
    pub mean_abs_command: [f64; 2],
}

impl HoldError {
    /// Error relative to the command magnitude, `None` for a zero command.
    pub fn relative(&self, axis: Axis) -> Option<f64> {
        let i = axis as usize;
        (self.mean_abs_command[i] > 0.0).then(|| self.mean_abs_error[i] / self.mean_abs_command[i])
    }
}

/// Mean absolute acceleration per cart axis: forward `v̇`, lateral
/// (centripetal) `v ω`, yaw `ω̇`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AccelNorms {
    pub forward: f64,
    pub lateral: f64,
    pub yaw: f64,
}

/// Peak deviations of the base and the cart frame origin after a
/// disturbance, world axes, relative to the motion just before onset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceResponse {
    pub start: f64,
    pub duration: f64,
    pub target: DisturbanceTarget,
    pub base_peak_velocity: [f64; 2],
    pub cart_peak_velocity: [f64; 2],
    pub base_peak_position: [f64; 2],
    pub cart_peak_position: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub steps: Vec<StepResponse>,
    pub holds: Vec<HoldError>,
    pub accel: AccelNorms,
    pub disturbances: Vec<DisturbanceResponse>,
    /// Max |e_L − e_R| per cart axis (spring coupling; zero otherwise).
    pub ee_mismatch: [f64; 2],
    /// Max transmitted arm force and the impedance bound
    /// `‖K‖ max‖e‖ + ‖B‖ max‖ė‖` it must respect.
    pub max_arm_force: f64,
    pub max_arm_e: f64,
    pub max_arm_e_dot: f64,
    /// Max |lateral world velocity| reconstructed from consecutive poses.
    pub nonholonomic_residual: f64,
    pub degenerate_steps: usize,
    pub final_estimate: ParamEstimate,
}

/// Largest lateral velocity implied by consecutive poses, measured against
/// the heading at the start of each step.
pub fn nonholonomic_residual(records: &[TraceRecord], dt: f64) -> f64 {
    records
        .windows(2)
        .map(|w| {
            let (a, b) = (&w[0].state, &w[1].state);
            let (s, c) = a.theta.sin_cos();
            ((-s * (b.x - a.x) + c * (b.y - a.y)) / dt).abs()
        })
        .fold(0.0, f64::max)
}

/// Earliest time after which the mass estimate stays within `tol` (relative)
/// of `m_true` until the end of the trace.
pub fn mass_convergence_time(records: &[TraceRecord], m_true: f64, tol: f64) -> Option<f64> {
    let last_bad = records.iter().rposition(|r| ((r.estimate.m_w - m_true) / m_true).abs() >= tol);
    match last_bad {
        None => records.first().map(|r| r.t),
        Some(i) => records.get(i + 1).map(|r| r.t),
    }
}

fn cart_pos(r: &TraceRecord) -> Vector2<f64> {
    Vector2::new(r.state.x, r.state.y)
}

fn cart_vel(r: &TraceRecord) -> Vector2<f64> {
    let (s, c) = r.state.theta.sin_cos();
    Vector2::new(c, s) * r.state.v_x
}

fn step_response(records: &[TraceRecord], start: f64, end: f64, axis: Axis, from: f64, to: f64) -> StepResponse {
    let span = to - from;
    let value = |r: &TraceRecord| match axis {
        Axis::Linear => r.state.v_x,
        Axis::Angular => r.state.omega,
    };
    let window = records.iter().filter(|r| r.t >= start && r.t < end);
    let mut t10 = None;
    let mut t90 = None;
    for r in window {
        let frac = (value(r) - from) / span;
        if t10.is_none() && frac >= 0.1 {
            t10 = Some(r.t - start);
        }
        if frac >= 0.9 {
            t90 = Some(r.t - start);
            break;
        }
    }
    StepResponse { time: start, axis, from, to, t10, t90, rise_time: t10.zip(t90).map(|(a, b)| b - a) }
}

pub fn compute_metrics(trace: &SimTrace) -> Result<Metrics> {
    let recs = &trace.records;
    if recs.len() < 2 {
        return Err(Error::InsufficientData(format!("trace has {} records", recs.len())));
    }
    let dt = trace.dt;
    let t_last = recs[recs.len() - 1].t;
    let holds = hold_bounds(&trace.segments, trace.duration);
    if let Some(&(_, first_end)) = holds.first() {
        if t_last + dt < first_end - 0.5 * dt {
            return Err(Error::InsufficientData(format!(
                "trace ends at {t_last} s, before the first command hold ends at {first_end} s"
            )));
        }
    }

    let mut steps = Vec::new();
    for (i, seg) in trace.segments.iter().enumerate() {
        let prev = if i == 0 { None } else { Some(&trace.segments[i - 1]) };
        let prev_const = prev.is_none_or(|p| p.is_constant());
        if !(seg.is_constant() && prev_const) {
            continue;
        }
        let (pv, pw) = prev.map_or((0.0, 0.0), |p| (p.v, p.w));
        let end = holds[i].1;
        if (seg.v - pv).abs() > 1e-12 {
            steps.push(step_response(recs, seg.start, end, Axis::Linear, pv, seg.v));
        }
        if (seg.w - pw).abs() > 1e-12 {
            steps.push(step_response(recs, seg.start, end, Axis::Angular, pw, seg.w));
        }
    }

    let mut hold_errors = Vec::new();
    for &(start, end) in &holds {
        let end = end.min(t_last + dt);
        if end <= start {
            continue;
        }
        let tail_start = end - 0.2 * (end - start);
        let tail: Vec<_> = recs.iter().filter(|r| r.t >= tail_start && r.t < end).collect();
        if tail.is_empty() {
            continue;
        }
        let n = tail.len() as f64;
        let sum = |f: &dyn Fn(&TraceRecord) -> f64| tail.iter().map(|r| f(r)).sum::<f64>() / n;
        hold_errors.push(HoldError {
            start,
            end,
            mean_abs_error: [sum(&|r| (r.state.v_x - r.v_cmd).abs()), sum(&|r| (r.state.omega - r.w_cmd).abs())],
            mean_abs_command: [sum(&|r| r.v_cmd.abs()), sum(&|r| r.w_cmd.abs())],
        });
    }

    let diffs = (recs.len() - 1) as f64;
    let accel = AccelNorms {
        forward: recs.windows(2).map(|w| ((w[1].state.v_x - w[0].state.v_x) / dt).abs()).sum::<f64>() / diffs,
        lateral: recs.iter().map(|r| (r.state.v_x * r.state.omega).abs()).sum::<f64>() / recs.len() as f64,
        yaw: recs.windows(2).map(|w| ((w[1].state.omega - w[0].state.omega) / dt).abs()).sum::<f64>() / diffs,
    };

    let mut disturbances = Vec::new();
    for d in &trace.disturbances {
        let Some(i0) = recs.iter().position(|r| r.t >= d.start) else { continue };
        let onset = &recs[i0.saturating_sub(1)];
        let stop = d.start + d.duration + DISTURBANCE_SETTLE;
        let mut resp = DisturbanceResponse {
            start: d.start,
            duration: d.duration,
            target: d.target,
            base_peak_velocity: [0.0; 2],
            cart_peak_velocity: [0.0; 2],
            base_peak_position: [0.0; 2],
            cart_peak_position: [0.0; 2],
        };
        for r in recs[i0..].iter().take_while(|r| r.t < stop) {
            let elapsed = r.t - onset.t;
            let dv_base = r.base_vel - onset.base_vel;
            let dv_cart = cart_vel(r) - cart_vel(onset);
            let dp_base = r.base_pos - onset.base_pos - onset.base_vel * elapsed;
            let dp_cart = cart_pos(r) - cart_pos(onset) - cart_vel(onset) * elapsed;
            for k in 0..2 {
                resp.base_peak_velocity[k] = resp.base_peak_velocity[k].max(dv_base[k].abs());
                resp.cart_peak_velocity[k] = resp.cart_peak_velocity[k].max(dv_cart[k].abs());
                resp.base_peak_position[k] = resp.base_peak_position[k].max(dp_base[k].abs());
                resp.cart_peak_position[k] = resp.cart_peak_position[k].max(dp_cart[k].abs());
            }
        }
        disturbances.push(resp);
    }

    let mut ee_mismatch = [0.0f64; 2];
    let (mut max_f, mut max_e, mut max_ed) = (0.0f64, 0.0f64, 0.0f64);
    for arms in recs.iter().filter_map(|r| r.arms.as_ref()) {
        let diff: Vector2<f64> = arms[0].e - arms[1].e;
        ee_mismatch[0] = ee_mismatch[0].max(diff.x.abs());
        ee_mismatch[1] = ee_mismatch[1].max(diff.y.abs());
        for a in arms {
            max_f = max_f.max(a.force.norm());
            max_e = max_e.max(a.e.norm());
            max_ed = max_ed.max(a.e_dot.norm());
        }
    }

    Ok(Metrics {
        steps,
        holds: hold_errors,
        accel,
        disturbances,
        ee_mismatch,
        max_arm_force: max_f,
        max_arm_e: max_e,
        max_arm_e_dot: max_ed,
        nonholonomic_residual: nonholonomic_residual(recs, dt),
        degenerate_steps: recs.iter().filter(|r| r.degenerate).count(),
        final_estimate: recs[recs.len() - 1].estimate,
    })
}
