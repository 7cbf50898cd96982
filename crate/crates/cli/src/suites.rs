//! Canned scenario sets for `benchmark` and their pass/fail checks.

use cartpush_core::sim::{mass_convergence_time, nonholonomic_residual, Axis, Metrics};
use cartpush_core::{CartParams, CommandSegment, Coupling, Disturbance, DisturbanceTarget, Scenario, SimTrace};

use crate::config::Config;

/// Test loads: empty wheelchair, heaviest occupied run and one in between.
pub const LIGHT: f64 = 11.8;
pub const MEDIUM: f64 = 34.6;
pub const HEAVY: f64 = 79.4;

pub const RISE_LIMIT: f64 = 3.0;
pub const HOLD_ERROR_LIMIT: f64 = 0.05;
pub const LATERAL_RESIDUAL_LIMIT: f64 = 1e-9;
pub const MASS_TOLERANCE: f64 = 0.10;
pub const CONVERGENCE_LIMIT: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Suite {
    Tracking,
    Identification,
    Compliance,
    Smoothness,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::Tracking => "tracking",
            Suite::Identification => "identification",
            Suite::Compliance => "compliance",
            Suite::Smoothness => "smoothness",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Case {
    pub name: String,
    pub config: Config,
}

/// One row of the pass/fail table.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub case: String,
    pub criterion: u8,
    pub check: String,
    pub value: f64,
    pub limit: f64,
    pub passed: bool,
}

fn case(name: String, mass: f64, scenario: Scenario) -> Case {
    Case { name, config: Config { cart: CartParams::wheelchair(mass), scenario, ..Default::default() } }
}

fn constant(v: f64, w: f64, duration: f64, seed: u64) -> Scenario {
    Scenario { duration, seed, segments: vec![CommandSegment::constant(0.0, v, w)], ..Default::default() }
}

/// Sinusoidal forward and yaw commands with incommensurate frequencies.
pub fn excitation(duration: f64, seed: u64) -> Scenario {
    Scenario {
        duration,
        seed,
        segments: vec![CommandSegment {
            start: 0.0,
            v: 0.15,
            w: 0.0,
            v_amp: 0.12,
            v_freq: 0.2,
            w_amp: 0.2,
            w_freq: 0.13,
        }],
        ..Default::default()
    }
}

/// Spring coupling, 0.1 m/s forward, a 1 s lateral push on the base at 10 s.
pub fn lateral_push(force: f64, seed: u64) -> Scenario {
    Scenario {
        duration: 20.0,
        seed,
        coupling: Coupling::Spring,
        segments: vec![CommandSegment::constant(0.0, 0.1, 0.0)],
        disturbances: vec![Disturbance {
            start: 10.0,
            duration: 1.0,
            fy: force,
            target: DisturbanceTarget::Base,
            ..Default::default()
        }],
        ..Default::default()
    }
}

/// Straight runs joined by left and right arcs.
pub fn course(seed: u64) -> Scenario {
    Scenario {
        duration: 25.0,
        seed,
        segments: vec![
            CommandSegment::constant(0.0, 0.2, 0.0),
            CommandSegment::constant(5.0, 0.2, 0.2),
            CommandSegment::constant(10.0, 0.2, 0.0),
            CommandSegment::constant(15.0, 0.2, -0.2),
            CommandSegment::constant(20.0, 0.2, 0.0),
        ],
        ..Default::default()
    }
}

pub fn cases(suite: Suite, seed: u64) -> Vec<Case> {
    match suite {
        Suite::Tracking => {
            let mut v: Vec<Case> = [LIGHT, MEDIUM, HEAVY]
                .into_iter()
                .map(|m| case(format!("linear_{m}kg"), m, constant(0.2, 0.0, 30.0, seed)))
                .collect();
            v.extend([LIGHT, HEAVY].map(|m| case(format!("angular_{m}kg"), m, constant(0.0, 0.15, 30.0, seed))));
            v
        }
        Suite::Identification => [LIGHT, MEDIUM, HEAVY]
            .into_iter()
            .map(|m| case(format!("excitation_{m}kg"), m, excitation(60.0, seed)))
            .collect(),
        Suite::Compliance => [LIGHT, MEDIUM, HEAVY]
            .into_iter()
            .map(|m| case(format!("lateral_push_{m}kg"), m, lateral_push(20.0, seed)))
            .collect(),
        Suite::Smoothness => {
            [LIGHT, HEAVY].into_iter().map(|m| case(format!("course_{m}kg"), m, course(seed))).collect()
        }
    }
}

/// Checks a finished case against the acceptance thresholds that apply to
/// its suite. Every case also checks the nonholonomic residual.
pub fn evaluate(suite: Suite, case: &Case, trace: &SimTrace, metrics: &Metrics) -> Vec<Check> {
    let mut out = Vec::new();
    let mut push = |criterion: u8, check: &str, value: f64, limit: f64, passed: bool| {
        out.push(Check { case: case.name.clone(), criterion, check: check.to_string(), value, limit, passed });
    };
    let residual = nonholonomic_residual(&trace.records, trace.dt);
    push(2, "lateral velocity residual", residual, LATERAL_RESIDUAL_LIMIT, residual < LATERAL_RESIDUAL_LIMIT);

    match suite {
        Suite::Tracking => {
            for s in &metrics.steps {
                let t90 = s.t90.unwrap_or(f64::INFINITY);
                let label = match s.axis {
                    Axis::Linear => "linear t90 [s]",
                    Axis::Angular => "angular t90 [s]",
                };
                push(3, label, t90, RISE_LIMIT, t90 <= RISE_LIMIT);
            }
            for h in &metrics.holds {
                for (axis, label) in [(Axis::Linear, "linear hold error"), (Axis::Angular, "angular hold error")] {
                    if let Some(e) = h.relative(axis) {
                        push(3, label, e, HOLD_ERROR_LIMIT, e < HOLD_ERROR_LIMIT);
                    }
                }
            }
        }
        Suite::Identification => {
            let m = trace.truth.m_w;
            let t = mass_convergence_time(&trace.records, m, MASS_TOLERANCE).unwrap_or(f64::INFINITY);
            push(4, "mass within 10% from [s]", t, CONVERGENCE_LIMIT, t <= CONVERGENCE_LIMIT);
        }
        Suite::Compliance => {
            for d in &metrics.disturbances {
                let (cv, bv) = (d.cart_peak_velocity[1], d.base_peak_velocity[1]);
                push(6, "cart/base peak lateral velocity", cv / bv, 1.0, cv < bv);
                let (cp, bp) = (d.cart_peak_position[1], d.base_peak_position[1]);
                push(6, "cart/base peak lateral deviation", cp / bp, 1.0, cp < bp);
            }
            let (k, b) = case.config.controller.arm().gain_norms();
            let bound = k * metrics.max_arm_e + b * metrics.max_arm_e_dot;
            push(6, "arm force / impedance bound", metrics.max_arm_force / bound, 1.0, metrics.max_arm_force <= bound);
        }
        Suite::Smoothness => {
            let a = metrics.accel;
            let norm = (a.forward.powi(2) + a.lateral.powi(2) + a.yaw.powi(2)).sqrt();
            push(0, "acceleration norm finite", norm, f64::INFINITY, norm.is_finite());
        }
    }
    out
}
