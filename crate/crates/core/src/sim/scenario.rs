use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// How the lean of the robot reaches the cart handles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coupling {
    /// Lean force is delivered to the handles directly.
    #[default]
    QuasiStatic,
    /// A point-mass base is driven by the lean force and drags the handles
    /// through compliant arms.
    Spring,
}

/// Piece of the command profile, active from `start` until the next segment.
/// The command is `v + v_amp sin(2π v_freq (t − start))`, likewise for `w`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CommandSegment {
    pub start: f64,
    pub v: f64,
    pub w: f64,
    pub v_amp: f64,
    pub v_freq: f64,
    pub w_amp: f64,
    pub w_freq: f64,
}

impl CommandSegment {
    pub fn constant(start: f64, v: f64, w: f64) -> Self {
        Self { start, v, w, ..Default::default() }
    }

    pub fn is_constant(&self) -> bool {
        self.v_amp == 0.0 && self.w_amp == 0.0
    }

    pub fn eval(&self, t: f64) -> (f64, f64) {
        let tau = t - self.start;
        (
            self.v + self.v_amp * (2.0 * PI * self.v_freq * tau).sin(),
            self.w + self.w_amp * (2.0 * PI * self.w_freq * tau).sin(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisturbanceTarget {
    #[default]
    Base,
    Cart,
}

/// External push, world frame. Cart disturbances act at the handle midpoint.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Disturbance {
    pub start: f64,
    pub duration: f64,
    pub fx: f64,
    pub fy: f64,
    pub torque: f64,
    pub target: DisturbanceTarget,
}

impl Disturbance {
    pub fn active(&self, t: f64) -> bool {
        t >= self.start && t < self.start + self.duration
    }
}

/// Scripted experiment: command profile plus disturbance schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Scenario {
    pub duration: f64,
    pub dt: f64,
    pub coupling: Coupling,
    pub seed: u64,
    /// Feed the true cart parameters to the controller instead of the
    /// estimates. The estimator still runs.
    pub controller_uses_truth: bool,
    #[serde(rename = "segment")]
    pub segments: Vec<CommandSegment>,
    #[serde(rename = "disturbance")]
    pub disturbances: Vec<Disturbance>,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            duration: 40.0,
            dt: 1e-3,
            coupling: Coupling::QuasiStatic,
            seed: 1,
            controller_uses_truth: false,
            segments: vec![CommandSegment::constant(0.0, 0.0, 0.0), CommandSegment::constant(5.0, 0.2, 0.0)],
            disturbances: Vec::new(),
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidParameter(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.duration.is_finite() && self.duration >= self.dt) {
            return Err(Error::InvalidParameter("duration must be >= dt".into()));
        }
        if self.segments.windows(2).any(|w| w[1].start <= w[0].start) {
            return Err(Error::InvalidParameter("segment starts must be strictly increasing".into()));
        }
        for s in &self.segments {
            let vals = [s.start, s.v, s.w, s.v_amp, s.v_freq, s.w_amp, s.w_freq];
            if !vals.iter().all(|v| v.is_finite()) || s.start < 0.0 {
                return Err(Error::InvalidParameter("segment values must be finite, start >= 0".into()));
            }
        }
        for d in &self.disturbances {
            if !(d.start >= 0.0 && d.start <= self.duration && d.duration >= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "disturbance at {} s lies outside [0, {}]",
                    d.start, self.duration
                )));
            }
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    fn segment_index(&self, t: f64) -> Option<usize> {
        self.segments.iter().rposition(|s| s.start <= t)
    }

    /// Commanded `(v, ω)` at time `t`; zero before the first segment.
    pub fn command(&self, t: f64) -> (f64, f64) {
        self.segment_index(t).map_or((0.0, 0.0), |i| self.segments[i].eval(t))
    }

    /// `(start, end)` of every segment, the last ending at `duration`.
    pub fn holds(&self) -> Vec<(f64, f64)> {
        hold_bounds(&self.segments, self.duration)
    }
}

pub(crate) fn hold_bounds(segments: &[CommandSegment], duration: f64) -> Vec<(f64, f64)> {
    segments.iter().enumerate().map(|(i, s)| (s.start, segments.get(i + 1).map_or(duration, |n| n.start))).collect()
}
