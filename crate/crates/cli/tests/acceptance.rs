//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use cartpush_cli::suites::{self, Check, Suite};
use cartpush_core::cart;
use cartpush_core::pusher::{self, build_allocation, lean_objective, solve_lean, solve_lean_unclamped, steering_angle};
use cartpush_core::sim::{compute_metrics, run_scenario};
use cartpush_core::*;
use nalgebra::{Matrix2, SymmetricEigen, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

// ---------------------------------------------------------------------------
// 1. Closed-form lean allocation against a numeric minimizer.

const OPT_PROBLEMS: usize = 1000;
const OPT_REL_TOL: f64 = 1e-6;
const OPT_TIME_LIMIT: f64 = 10.0;

/// Central-difference gradient.
fn fd_gradient(f: &dyn Fn(&Vector2<f64>) -> f64, x: &Vector2<f64>, h: f64) -> Vector2<f64> {
    let mut g = Vector2::zeros();
    for i in 0..2 {
        let mut xp = *x;
        let mut xm = *x;
        xp[i] += h;
        xm[i] -= h;
        g[i] = (f(&xp) - f(&xm)) / (2.0 * h);
    }
    g
}

/// Polak-Ribiere conjugate gradient on finite-difference gradients, with a
/// three-point parabolic line search.
fn cg_minimize(f: &dyn Fn(&Vector2<f64>) -> f64, x0: Vector2<f64>, scale: f64) -> Vector2<f64> {
    let h = 1e-5 * scale;
    let mut x = x0;
    let mut g = fd_gradient(f, &x, h);
    let mut d = -g;
    for _ in 0..200 {
        if d.norm() == 0.0 {
            break;
        }
        let s = scale / d.norm();
        let (f0, f1, f2) = (f(&x), f(&(x + d * s)), f(&(x + d * (2.0 * s))));
        let curv = f2 - 2.0 * f1 + f0;
        if curv.is_nan() || curv <= 0.0 {
            break;
        }
        let alpha = s * (3.0 * f0 - 4.0 * f1 + f2) / (2.0 * curv);
        let x_new = x + d * alpha;
        let step = (x_new - x).norm();
        x = x_new;
        let g_new = fd_gradient(f, &x, h);
        let beta = (g_new.dot(&(g_new - g)) / g.dot(&g)).max(0.0);
        d = -g_new + d * beta;
        g = g_new;
        if step <= 1e-14 * scale.max(x.norm()) {
            break;
        }
    }
    x
}

fn random_spd(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Matrix2<f64> {
    let l = Matrix2::new(rng.random_range(lo..hi), 0.0, rng.random_range(-1.0..1.0), rng.random_range(lo..hi));
    l * l.transpose()
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let start = Instant::now();
    let mut worst = 0.0f64;
    for _ in 0..OPT_PROBLEMS {
        let bp = BallbotParams {
            m_robot: rng.random_range(30.0..90.0),
            l: rng.random_range(0.4..1.0),
            r_z: rng.random_range(0.6..1.2),
            q: random_spd(&mut rng, 0.5, 4.0).into(),
            r: random_spd(&mut rng, 0.3, 3.0).into(),
            ..Default::default()
        };
        let cp = CartParams { l_h: rng.random_range(0.3..0.7), d: rng.random_range(0.1..0.5), ..CartParams::default() };
        let beta = rng.random_range(-bp.beta_limit..bp.beta_limit);
        let f = PlanarWrench::new(rng.random_range(-150.0..150.0), rng.random_range(-40.0..40.0));
        let (a, q, r) = (build_allocation(&bp, &cp, beta), bp.q_matrix(), bp.r_matrix());

        let closed = solve_lean_unclamped(&a, &f, &q, &r);
        let via_solver = solve_lean(&a, &f, &q, &r, f64::INFINITY).as_vector();
        let objective = |phi: &Vector2<f64>| lean_objective(&a, &f, &q, &r, phi);
        let scale = closed.norm().max(1e-6);
        let numeric = cg_minimize(&objective, Vector2::zeros(), scale);
        let err = (closed - numeric).norm() / scale;
        worst = worst.max(err).max((via_solver - closed).norm() / scale);
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= OPT_REL_TOL && secs < OPT_TIME_LIMIT,
        format!("{OPT_PROBLEMS} problems, worst relative error {worst:.2e} (limit {OPT_REL_TOL:.0e}), {secs:.2} s (limit {OPT_TIME_LIMIT} s)"),
    )
}

// ---------------------------------------------------------------------------
// Suite runs shared by criteria 2, 3, 4 and 6.

const SCENARIO_TIME_LIMIT: f64 = 30.0;

struct SuiteRun {
    checks: Vec<Check>,
    slowest: f64,
}

fn run_suite(suite: Suite, seed: u64) -> SuiteRun {
    let mut checks = Vec::new();
    let mut slowest = 0.0f64;
    for case in suites::cases(suite, seed) {
        let start = Instant::now();
        let result = run_scenario(&case.config.scenario, &case.config.sim_config())
            .and_then(|tr| compute_metrics(&tr).map(|m| (tr, m)));
        slowest = slowest.max(start.elapsed().as_secs_f64());
        match result {
            Ok((trace, metrics)) => checks.extend(suites::evaluate(suite, &case, &trace, &metrics)),
            Err(e) => checks.push(Check {
                case: case.name.clone(),
                criterion: 0,
                check: format!("run failed: {e}"),
                value: f64::NAN,
                limit: f64::NAN,
                passed: false,
            }),
        }
    }
    SuiteRun { checks, slowest }
}

fn summarize(checks: &[&Check]) -> (bool, String) {
    let failed: Vec<_> = checks.iter().filter(|c| !c.passed).collect();
    let mut s = format!("{} checks, {} failed", checks.len(), failed.len());
    for c in failed.iter().take(3) {
        s.push_str(&format!("; {} {} = {:.4e} (limit {:.3e})", c.case, c.check, c.value, c.limit));
    }
    (failed.is_empty() && !checks.is_empty(), s)
}

fn for_criterion(runs: &[SuiteRun], n: u8) -> Vec<&Check> {
    runs.iter().flat_map(|r| &r.checks).filter(|c| c.criterion == n || c.criterion == 0 && !c.passed).collect()
}

fn criterion_2(all: &[SuiteRun]) -> Outcome {
    let checks = for_criterion(all, 2);
    let worst = checks.iter().map(|c| c.value).fold(0.0, f64::max);
    let (ok, s) = summarize(&checks);
    outcome(ok, format!("all suites, worst lateral residual {worst:.2e} m/s (limit 1e-9); {s}"))
}

fn criterion_3(tracking: &[SuiteRun]) -> Outcome {
    let checks = for_criterion(tracking, 3);
    let worst_t90 = checks.iter().filter(|c| c.check.contains("t90")).map(|c| c.value).fold(0.0, f64::max);
    let slowest = tracking.iter().map(|r| r.slowest).fold(0.0, f64::max);
    let (ok, s) = summarize(&checks);
    outcome(
        ok && slowest < SCENARIO_TIME_LIMIT,
        format!("worst t90 {worst_t90:.2} s (limit 3 s), slowest scenario {slowest:.2} s wall; {s}"),
    )
}

fn criterion_4(ident: &[SuiteRun]) -> Outcome {
    let checks: Vec<_> = for_criterion(ident, 4)
        .into_iter()
        .filter(|c| {
            c.case.contains(&format!("{}kg", suites::LIGHT)) || c.case.contains(&format!("{}kg", suites::HEAVY))
        })
        .collect();
    let worst = checks.iter().map(|c| c.value).fold(0.0, f64::max);
    let (ok, s) = summarize(&checks);
    outcome(ok, format!("11.8 and 79.4 kg, latest entry into the 10% band {worst:.2} s (limit 30 s); {s}"))
}

fn criterion_6(compliance: &[SuiteRun]) -> Outcome {
    let checks = for_criterion(compliance, 6);
    let worst = checks.iter().map(|c| c.value).fold(0.0, f64::max);
    let (ok, s) = summarize(&checks);
    outcome(ok, format!("worst cart/base or force/bound ratio {worst:.3} (must be < 1); {s}"))
}

// ---------------------------------------------------------------------------
// 5. Steering limits.

fn criterion_5() -> Outcome {
    let bp = BallbotParams::default();
    let cp = CartParams::default();
    let limit = 35f64.to_radians();
    let eps = bp.min_speed;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut twists: Vec<(f64, f64)> = Vec::with_capacity(10_000);
    for i in 0..50 {
        for j in 0..100 {
            let v = if i == 0 { 0.0 } else { -1.0 + 2.0 * (i as f64) / 49.0 };
            let w = if j == 0 { 0.0 } else { -1.5 + 3.0 * (j as f64) / 99.0 };
            twists.push((v, w));
        }
    }
    while twists.len() < 10_000 {
        let v = if rng.random_bool(0.05) { 0.0 } else { rng.random_range(-1.0..1.0) };
        let w = if rng.random_bool(0.05) { 0.0 } else { rng.random_range(-2.0..2.0) };
        twists.push((v, w));
    }
    let (mut over, mut straight, mut odd, mut nonfinite) = (0, 0, 0, 0);
    let mut max_beta = 0.0f64;
    for &(v, w) in &twists {
        let b = steering_angle(v, w, &cp, &bp);
        max_beta = max_beta.max(b.abs());
        nonfinite += usize::from(!b.is_finite());
        over += usize::from(b.abs() > limit);
        if w == 0.0 && v > eps {
            straight += usize::from(b != 0.0);
        }
        if v.abs() >= eps {
            odd += usize::from(steering_angle(v, -w, &cp, &bp) != -b);
        }
    }
    let bad = over + straight + odd + nonfinite;
    outcome(
        bad == 0,
        format!(
            "{} twists, max |beta| {:.3} deg (limit 35), violations: limit {over}, straight {straight}, odd {odd}, non-finite {nonfinite}",
            twists.len(),
            max_beta.to_degrees()
        ),
    )
}

// ---------------------------------------------------------------------------
// 7. Filter health.

const PSD_CYCLES: usize = 100_000;
const EIG_FLOOR: f64 = -1e-9;
const INNOVATION_LIMIT: f64 = 1e-6;

/// Persistently exciting wrench: steady push balancing friction plus
/// incommensurate sinusoids.
fn excitation_wrench(cp: &CartParams, t: f64, phase: f64) -> PlanarWrench {
    let base = pusher::required_wrench(cp, 0.2, 0.0);
    let tau = std::f64::consts::TAU;
    PlanarWrench::new(
        base.f_p + 0.6 * cp.m_w * (tau * 0.2 * t + phase).sin(),
        0.4 * cp.axle_inertia() * (tau * 0.13 * t).sin() + 0.05 * cp.axle_inertia() * (tau * 0.71 * t + phase).cos(),
    )
}

fn min_eigenvalue(st: &EkfState) -> f64 {
    SymmetricEigen::new(st.cov).eigenvalues.min()
}

fn psd_check() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let cfg = EkfConfig::default();
    let nz = cfg.noise.clone();
    let (dt, sub) = (1.0 / nz.rate_hz, 10);
    let runs = 20;
    let per_run = PSD_CYCLES / runs;
    let (mut worst, mut cycles, mut failures) = (f64::INFINITY, 0usize, 0usize);
    for run in 0..runs {
        let m = rng.random_range(suites::LIGHT..suites::HEAVY);
        let cp = CartParams::wheelchair(m);
        let mut est = match OnlineEstimator::new(Ekf::new(cfg.clone(), cp)) {
            Ok(e) => e,
            Err(_) => return (false, "estimator construction failed".into()),
        };
        let phase = run as f64;
        let mut truth = CartState::default();
        let pose_n: Vec<_> = nz.meas_pose_std.iter().map(|&s| Normal::new(0.0, s).unwrap()).collect();
        let twist_n: Vec<_> = nz.meas_twist_std.iter().map(|&s| Normal::new(0.0, s).unwrap()).collect();
        let wrench_n: Vec<_> = nz.wrench_std.iter().map(|&s| Normal::new(0.0, s).unwrap()).collect();
        let mut input: Option<PlanarWrench> = None;
        for k in 0..per_run {
            let pose = Vector3::new(
                truth.x + pose_n[0].sample(&mut rng),
                truth.y + pose_n[1].sample(&mut rng),
                truth.theta + pose_n[2].sample(&mut rng),
            );
            let twist =
                Vector2::new(truth.v_x + twist_n[0].sample(&mut rng), truth.omega + twist_n[1].sample(&mut rng));
            if est.cycle(input.as_ref(), dt, &pose, &twist).is_err() {
                failures += 1;
            }
            cycles += 1;
            let e = min_eigenvalue(est.state());
            worst = worst.min(if e.is_finite() { e } else { f64::NEG_INFINITY });

            let w = excitation_wrench(&cp, k as f64 * dt, phase);
            for _ in 0..sub {
                truth = cart::step(&cp, &truth, &w, dt / sub as f64).expect("truth step");
            }
            input = Some(PlanarWrench::new(w.f_p + wrench_n[0].sample(&mut rng), w.tau + wrench_n[1].sample(&mut rng)));
        }
    }
    let ok = worst >= EIG_FLOOR && failures == 0 && cycles >= PSD_CYCLES;
    (ok, format!("{cycles} noisy cycles, min eigenvalue {worst:.2e} (floor -1e-9), {failures} failed cycles"))
}

fn innovation_check() -> (bool, String) {
    let mut worst = 0.0f64;
    let mut failures = 0;
    for m in [suites::LIGHT, suites::MEDIUM, suites::HEAVY] {
        let cp = CartParams::wheelchair(m);
        let cfg = EkfConfig { initial_params: ParamVector::from_cart(&cp).0, ..Default::default() };
        let ekf = Ekf::new(cfg.clone(), cp);
        let dt = 1.0 / cfg.noise.rate_hz;
        let mut truth = CartState::default();
        let mut st = ekf.initial_state(&truth);
        for k in 0..2000 {
            let w = excitation_wrench(&cp, k as f64 * dt, 0.3);
            truth = cart::step(&cp, &truth, &w, dt).expect("truth step");
            let step = ekf
                .predict(&st, &w, dt)
                .and_then(|p| ekf.update(&p, &Vector3::new(truth.x, truth.y, truth.theta), &truth.twist()));
            match step {
                Ok((next, y)) => {
                    worst = worst.max(y.amax());
                    st = next;
                }
                Err(_) => failures += 1,
            }
        }
    }
    (
        worst < INNOVATION_LIMIT && failures == 0,
        format!("noise-free data from true init, max |innovation| {worst:.2e} (limit 1e-6)"),
    )
}

fn criterion_7() -> Outcome {
    let (a, sa) = psd_check();
    let (b, sb) = innovation_check();
    outcome(a && b, format!("{sa}; {sb}"))
}

// ---------------------------------------------------------------------------
// 8. Determinism of the benchmark binary.

fn criterion_8() -> Outcome {
    let dir = match tempfile::tempdir() {
        Ok(d) => d,
        Err(e) => return outcome(false, format!("tempdir: {e}")),
    };
    let run = |name: &str, workers: &str| -> std::result::Result<(), String> {
        let out = dir.path().join(name);
        let o = Command::new(env!("CARGO_BIN_EXE_cartpush"))
            .args(["benchmark", "--suite", "tracking", "--seed", "1", "--workers", workers, "--out"])
            .arg(&out)
            .output()
            .map_err(|e| e.to_string())?;
        match o.status.code() {
            Some(0 | 1) => Ok(()),
            _ => Err(String::from_utf8_lossy(&o.stderr).trim().to_string()),
        }
    };
    for (name, workers) in [("a", "1"), ("b", "1"), ("c", "4")] {
        if let Err(e) = run(name, workers) {
            return outcome(false, format!("benchmark run failed: {e}"));
        }
    }
    let traces = |root: &Path| -> Vec<(String, Vec<u8>)> {
        let mut v: Vec<_> = suites::cases(Suite::Tracking, 1)
            .into_iter()
            .map(|c| (c.name.clone(), std::fs::read(root.join(&c.name).join("trace.csv")).unwrap_or_default()))
            .collect();
        v.sort();
        v
    };
    let (a, b, c) = (traces(&dir.path().join("a")), traces(&dir.path().join("b")), traces(&dir.path().join("c")));
    let nonempty = a.iter().all(|(_, t)| !t.is_empty());
    let bytes: usize = a.iter().map(|(_, t)| t.len()).sum();
    outcome(
        nonempty && a == b && a == c,
        format!(
            "{} trace files, {bytes} bytes; repeat run identical: {}, 4-worker run identical: {}",
            a.len(),
            a == b,
            a == c
        ),
    )
}

// ---------------------------------------------------------------------------
// 9. Dynamics sanity.

fn criterion_9() -> Outcome {
    // Arc: hold the steady-state wrench from a moving start and compare with
    // the circle x = r sin(wt), y = r (1 - cos(wt)).
    let dt = 1e-3;
    let mut arc_err = 0.0f64;
    for (m, v, w) in [(11.8, 0.2, 0.3), (34.6, 0.5, -1.0), (79.4, 0.1, 0.8), (60.0, -0.3, 0.5)] {
        let cp = CartParams::wheelchair(m);
        let input = pusher::required_wrench(&cp, v, w);
        let mut s = CartState { v_x: v, omega: w, ..Default::default() };
        for _ in 0..1000 {
            s = cart::step(&cp, &s, &input, dt).expect("arc step");
        }
        let t = 1.0;
        let r = v / w;
        let (x, y) = (r * (w * t).sin(), r * (1.0 - (w * t).cos()));
        arc_err = arc_err.max(((s.x - x).powi(2) + (s.y - y).powi(2)).sqrt());
    }

    // Coasting: symmetric variant, CoM on the axle, zero input.
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut increases = 0;
    let mut runs = 0;
    for _ in 0..200 {
        let cp = CartParams {
            m_w: rng.random_range(5.0..120.0),
            p_x: 0.0,
            p_y: 0.0,
            i_w: rng.random_range(1.0..40.0),
            mu: rng.random_range(0.0..30.0),
            matrix_variant: MatrixVariant::SymmetricReference,
            ..CartParams::default()
        };
        let ke = |s: &CartState| 0.5 * (cp.m_w * s.v_x * s.v_x + cp.i_w * s.omega * s.omega);
        let mut s =
            CartState { v_x: rng.random_range(-1.0..1.0), omega: rng.random_range(-1.5..1.5), ..Default::default() };
        for _ in 0..2000 {
            let next = cart::step(&cp, &s, &PlanarWrench::default(), dt).expect("coast step");
            if ke(&next) > ke(&s) {
                increases += 1;
            }
            s = next;
        }
        runs += 1;
    }
    outcome(
        arc_err < 1e-3 && increases == 0,
        format!("arc error after 1 s {arc_err:.2e} m (limit 1e-3); {runs} coasting runs, {increases} energy increases"),
    )
}

fn main() {
    let started = Instant::now();
    let tracking: Vec<_> = (1..=3).map(|s| run_suite(Suite::Tracking, s)).collect();
    let ident: Vec<_> = (1..=3).map(|s| run_suite(Suite::Identification, s)).collect();
    let compliance = vec![run_suite(Suite::Compliance, 1)];
    let smoothness = vec![run_suite(Suite::Smoothness, 1)];
    let all: Vec<SuiteRun> = tracking.into_iter().chain(ident).chain(compliance).chain(smoothness).collect();
    let (tracking, rest) = all.split_at(3);
    let (ident, rest) = rest.split_at(3);
    let compliance = &rest[..1];

    let results: Vec<(u8, &str, Outcome)> = vec![
        (1, "lean allocation matches numeric minimizer", criterion_1()),
        (2, "nonholonomic invariant", criterion_2(&all)),
        (3, "velocity tracking", criterion_3(tracking)),
        (4, "identification convergence", criterion_4(ident)),
        (5, "steering limits", criterion_5()),
        (6, "compliance ordering", criterion_6(compliance)),
        (7, "filter health", criterion_7()),
        (8, "benchmark determinism", criterion_8()),
        (9, "dynamics sanity", criterion_9()),
    ];

    println!();
    let mut failed = 0;
    for (n, name, o) in &results {
        println!("criterion {n} {}: {name}: {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.passed);
    }
    println!(
        "acceptance: {} passed, {failed} failed ({:.1} s)",
        results.len() - failed,
        started.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
