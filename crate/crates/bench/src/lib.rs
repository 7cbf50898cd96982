//! Fixtures shared by the criterion benchmarks.

use cartpush_core::{CartParams, CartState, CommandSegment, Ekf, EkfConfig, OnlineEstimator, PlanarWrench, Scenario};

pub const BENCH_MASS: f64 = 34.6;

pub fn cart() -> CartParams {
    CartParams::wheelchair(BENCH_MASS)
}

pub fn moving_state() -> CartState {
    CartState { v_x: 0.2, omega: 0.1, ..Default::default() }
}

pub fn push() -> PlanarWrench {
    PlanarWrench::new(25.0, 3.0)
}

/// Estimator past its first cycle, so benchmarked cycles include a predict.
pub fn warm_estimator() -> OnlineEstimator {
    let mut est = OnlineEstimator::new(Ekf::new(EkfConfig::default(), cart())).expect("default filter config is valid");
    let s = moving_state();
    est.cycle(None, 0.01, &nalgebra::Vector3::new(s.x, s.y, s.theta), &s.twist()).expect("first cycle");
    est
}

/// Ten seconds of a 0.2 m/s step with a turn halfway.
pub fn short_scenario() -> Scenario {
    Scenario {
        duration: 10.0,
        segments: vec![CommandSegment::constant(0.0, 0.2, 0.0), CommandSegment::constant(5.0, 0.2, 0.15)],
        ..Default::default()
    }
}
