use nalgebra::{Matrix2, Vector2, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::cart::{self, CartParams, CartState, HandleForces, PlanarWrench};
use crate::error::Result;
use crate::estimation::{Ekf, OnlineEstimator, WrenchFilter};
use crate::math::rot2;
use crate::pusher::{self, BallbotParams, LeanCommand, SteeringCommand};

use super::scenario::{Coupling, DisturbanceTarget, Scenario};
use super::trace::{ArmSample, SimTrace, TraceRecord};
use super::{arm_force, ControllerParams, SimConfig};

/// Velocity loop around the steady-state hold wrench: PI on the twist error,
/// scaled per axis by the estimated mass and axle inertia. The off-diagonal
/// inertia term is left out; it grows without bound as the implied CoM
/// inertia approaches zero. The integral is kept in wrench units so a change
/// in the estimated inertia does not make it jump.
#[derive(Debug, Default)]
struct VelocityLoop {
    integral: Vector2<f64>,
}

impl VelocityLoop {
    /// `hold` freezes the integral (lean saturated on the previous tick).
    fn target(
        &mut self,
        cp: &CartParams,
        ctrl: &ControllerParams,
        cmd: (f64, f64),
        twist: &Vector2<f64>,
        dt: f64,
        hold: bool,
    ) -> PlanarWrench {
        let m = Matrix2::from_diagonal(&Vector2::new(cp.m_w, cp.axle_inertia()));
        let err = Vector2::new(cmd.0 - twist.x, cmd.1 - twist.y);
        if !hold {
            self.integral += m * Vector2::new(ctrl.ki_v * err.x, ctrl.ki_omega * err.y) * dt;
        }
        let fb = m * Vector2::new(ctrl.k_v * err.x, ctrl.k_omega * err.y) + self.integral;
        pusher::required_wrench(cp, cmd.0, cmd.1) + PlanarWrench::from_vector(&fb)
    }
}

fn lean_command(bp: &BallbotParams, cp: &CartParams, steer: &SteeringCommand, target: &PlanarWrench) -> LeanCommand {
    let a = pusher::build_allocation(bp, cp, steer.beta);
    pusher::solve_lean(&a, target, &bp.q_matrix(), &bp.r_matrix(), bp.lean_limit)
}

struct Base {
    pos: Vector2<f64>,
    vel: Vector2<f64>,
}

/// Runs a scenario against the true cart in `cfg.cart`.
pub fn run_scenario(scn: &Scenario, cfg: &SimConfig) -> Result<SimTrace> {
    scn.validate()?;
    cfg.validate()?;
    let truth = cfg.cart;
    let bp = &cfg.ballbot;
    let ctrl = &cfg.controller;
    let noise = &cfg.ekf.noise;
    let dt = scn.dt;
    let n_steps = scn.steps();
    let ctrl_every = ((1.0 / (noise.rate_hz * dt)).round() as usize).max(1);
    let ctrl_dt = ctrl_every as f64 * dt;
    let arm = ctrl.arm();

    let mut rng = ChaCha8Rng::seed_from_u64(scn.seed);
    let mut gauss = |std: f64| -> f64 {
        let z: f64 = StandardNormal.sample(&mut rng);
        z * std
    };

    let mut est = OnlineEstimator::new(Ekf::new(cfg.ekf.clone(), truth))?;
    let mut filter = WrenchFilter::new(noise.window);
    let mut tracker = ctrl.tracker();
    let mut state = CartState::default();
    let mut base = Base { pos: Vector2::new(truth.d, 0.0), vel: Vector2::zeros() };
    let (r_l, r_r) = truth.handle_positions();

    let mut lean_cmd = LeanCommand::default();
    let mut steer = pusher::steer(0.0, 0.0, &truth, bp);
    let mut degenerate = false;
    let mut vel_loop = VelocityLoop::default();
    let mut records = Vec::with_capacity(n_steps);

    for k in 0..n_steps {
        let t = k as f64 * dt;
        let cmd = scn.command(t);

        if k % ctrl_every == 0 {
            let pose = Vector3::new(
                state.x + gauss(noise.meas_pose_std[0]),
                state.y + gauss(noise.meas_pose_std[1]),
                state.theta + gauss(noise.meas_pose_std[2]),
            );
            let twist =
                Vector2::new(state.v_x + gauss(noise.meas_twist_std[0]), state.omega + gauss(noise.meas_twist_std[1]));
            let input = (k > 0).then(|| filter.mean());
            degenerate = est.cycle(input.as_ref(), ctrl_dt, &pose, &twist)?;

            let cp_ctrl = if scn.controller_uses_truth { truth } else { est.estimate().to_cart_params(&truth) };
            steer = pusher::steer(cmd.0, cmd.1, &cp_ctrl, bp);
            let target = vel_loop.target(&cp_ctrl, ctrl, cmd, &est.state().twist(), ctrl_dt, lean_cmd.clamped);
            let next = lean_command(bp, &cp_ctrl, &steer, &target);
            if next.as_vector().iter().all(|v| v.is_finite()) {
                lean_cmd = next;
            } else {
                // Near-zero implied inertia overflows the feed-forward; hold the last lean.
                vel_loop.integral = Vector2::zeros();
                degenerate = true;
            }
        }

        let lean = tracker.step(&lean_cmd.as_vector(), dt);
        let f_lean = pusher::lean_to_force(bp, lean.x, lean.y, false);

        let (mut base_dist, mut cart_dist, mut cart_torque, mut base_torque) =
            (Vector2::zeros(), Vector2::zeros(), 0.0, 0.0);
        let mut disturbed = false;
        for d in scn.disturbances.iter().filter(|d| d.active(t)) {
            disturbed = true;
            match d.target {
                DisturbanceTarget::Base => {
                    base_dist += Vector2::new(d.fx, d.fy);
                    base_torque += d.torque;
                }
                DisturbanceTarget::Cart => {
                    cart_dist += Vector2::new(d.fx, d.fy);
                    cart_torque += d.torque;
                }
            }
        }

        let to_cart = rot2(-state.theta);
        let to_world = rot2(state.theta);
        let handle_mid = Vector2::new(truth.d, 0.0);
        let handle_pos = Vector2::new(state.x, state.y) + to_world * handle_mid;
        let handle_vel = to_world * Vector2::new(state.v_x, state.omega * truth.d);

        let mut base_acc = Vector2::zeros();
        let (handles, arms, extra_torque) = match scn.coupling {
            Coupling::QuasiStatic => {
                // Base rigidly transmits through both arms.
                let per_arm = rot2(steer.beta) * f_lean + to_cart * base_dist * 0.5;
                (HandleForces::at_handles(&truth, per_arm, per_arm), None, base_torque)
            }
            Coupling::Spring => {
                let mut forces = [Vector2::zeros(); 2];
                let mut samples =
                    [ArmSample { e: Vector2::zeros(), e_dot: Vector2::zeros(), force: Vector2::zeros() }; 2];
                for (i, r) in [r_l, r_r].iter().enumerate() {
                    // Arm target rides with the base at the nominal handle offset.
                    let offset = Vector2::new(0.0, r.y);
                    let target = base.pos + to_world * offset;
                    let target_vel = base.vel + to_world * Vector2::new(-state.omega * offset.y, 0.0);
                    let h = Vector2::new(state.x, state.y) + to_world * r;
                    let h_vel = to_world * Vector2::new(state.v_x - state.omega * r.y, state.omega * r.x);
                    let e = to_cart * (h - target);
                    let e_dot = to_cart * (h_vel - target_vel);
                    let f = -arm_force(&arm, &e, &e_dot);
                    forces[i] = f;
                    samples[i] = ArmSample { e, e_dot, force: f };
                }
                // Base: lean thrust, arm reactions, disturbance.
                let thrust = rot2(state.theta + steer.beta) * f_lean * 2.0;
                let reaction = -(to_world * (forces[0] + forces[1]));
                base_acc = (thrust + reaction + base_dist) / ctrl.base_mass;
                (HandleForces::at_handles(&truth, forces[0], forces[1]), Some(samples), 0.0)
            }
        };

        let wrench = cart::handle_wrench(&handles) + PlanarWrench::new(0.0, extra_torque);
        let cart_force = to_cart * cart_dist;
        let input = wrench + PlanarWrench::new(cart_force.x, truth.d * cart_force.y + cart_torque);
        filter
            .push(PlanarWrench::new(wrench.f_p + gauss(noise.wrench_std[0]), wrench.tau + gauss(noise.wrench_std[1])));

        let (base_pos, base_vel) = match scn.coupling {
            Coupling::QuasiStatic => (handle_pos, handle_vel),
            Coupling::Spring => (base.pos, base.vel),
        };
        records.push(TraceRecord {
            t,
            v_cmd: cmd.0,
            w_cmd: cmd.1,
            state,
            lean_cmd,
            lean,
            beta: steer.beta,
            r_lee: steer.r_lee,
            r_ree: steer.r_ree,
            handles,
            wrench,
            input,
            estimate: *est.estimate(),
            disturbed,
            degenerate,
            base_pos,
            base_vel,
            handle_pos,
            handle_vel,
            arms,
        });

        state = cart::step(&truth, &state, &input, dt)?;
        if scn.coupling == Coupling::Spring {
            base.vel += base_acc * dt;
            base.pos += base.vel * dt;
        }
    }

    Ok(SimTrace {
        dt,
        duration: scn.duration,
        segments: scn.segments.clone(),
        disturbances: scn.disturbances.clone(),
        truth,
        records,
    })
}
