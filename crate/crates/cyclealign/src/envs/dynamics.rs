//! Transition dynamics, resets, and rewards for the four families.
//!
//! All integrators are semi-implicit Euler; states are clamped to documented
//! per-family bounds so random-action rollouts stay in trainable ranges.

use rand::Rng;

use super::{
    Action, EnvSpec, Family, State, CHAIN_REST_LENGTH, CHAIN_STIFFNESS, GRAVITY,
    LINEAR_STATE_BOUND, OMEGA_BOUND, PENDULUM_LENGTH, POSITION_BOUND,
};
use crate::error::{Error, Result};
use crate::rng;

pub fn step(spec: &EnvSpec, s: &State, a: &Action) -> Result<State> {
    if s.0.len() != spec.state_dim {
        return Err(Error::DimMismatch {
            context: "step state",
            expected: spec.state_dim,
            actual: s.0.len(),
        });
    }
    if a.0.len() != spec.action_dim {
        return Err(Error::DimMismatch {
            context: "step action",
            expected: spec.action_dim,
            actual: a.0.len(),
        });
    }
    let bound = spec.action_bound * (1.0 + 1e-12);
    if a.0.iter().any(|v| v.abs() > bound || !v.is_finite()) {
        return Err(Error::InvalidSpec(format!(
            "action outside [-{b}, {b}]; callers must clamp explicitly",
            b = spec.action_bound
        )));
    }

    let next = match spec.family {
        Family::PointMass => {
            let d = spec.action_dim;
            let (p, v) = s.0.split_at(d);
            let mut next = vec![0.0; 2 * d];
            for i in 0..d {
                let v_new = (1.0 - spec.damping) * v[i] + (a.0[i] / spec.mass) * spec.dt;
                let p_new = p[i] + v_new * spec.dt;
                next[i] = p_new.clamp(-POSITION_BOUND, POSITION_BOUND);
                next[d + i] = v_new.clamp(-POSITION_BOUND, POSITION_BOUND);
            }
            next
        }
        Family::Pendulum => {
            let (theta, omega) = (s.0[0], s.0[1]);
            let torque = a.0[0] / (spec.mass * PENDULUM_LENGTH * PENDULUM_LENGTH);
            let omega_new = omega
                + spec.dt
                    * (-(GRAVITY / PENDULUM_LENGTH) * theta.sin() + torque - spec.damping * omega);
            let omega_new = omega_new.clamp(-OMEGA_BOUND, OMEGA_BOUND);
            let theta_new = wrap_angle(theta + spec.dt * omega_new);
            vec![theta_new, omega_new]
        }
        Family::LinearSystem => {
            let lin = spec.linear.as_ref().unwrap();
            let mut next = vec![0.0; spec.state_dim];
            lin.a.matvec(&s.0, &mut next);
            let mut bu = vec![0.0; spec.state_dim];
            lin.b.matvec(&a.0, &mut bu);
            for (n, u) in next.iter_mut().zip(&bu) {
                *n = (*n + u).clamp(-LINEAR_STATE_BOUND, LINEAR_STATE_BOUND);
            }
            next
        }
        Family::ChainMass => {
            let k = spec.num_links;
            let (p, v) = s.0.split_at(k);
            let mut next = vec![0.0; 2 * k];
            for i in 0..k {
                let mut force = a.0[i];
                if i + 1 < k {
                    force += CHAIN_STIFFNESS * ((p[i + 1] - p[i]) - CHAIN_REST_LENGTH);
                }
                if i > 0 {
                    force -= CHAIN_STIFFNESS * ((p[i] - p[i - 1]) - CHAIN_REST_LENGTH);
                }
                let v_new = (1.0 - spec.damping) * v[i] + (force / spec.mass) * spec.dt;
                let p_new = p[i] + v_new * spec.dt;
                next[i] = p_new.clamp(-POSITION_BOUND, POSITION_BOUND);
                next[k + i] = v_new.clamp(-POSITION_BOUND, POSITION_BOUND);
            }
            next
        }
    };
    Ok(State(next))
}

/// Wraps to (-pi, pi].
pub fn wrap_angle(theta: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut t = theta % two_pi;
    if t <= -std::f64::consts::PI {
        t += two_pi;
    } else if t > std::f64::consts::PI {
        t -= two_pi;
    }
    t
}

pub fn reset(spec: &EnvSpec, seed: u64) -> State {
    let mut r = rng::stream_rng(seed, rng::stream::RESET);
    let values = match spec.family {
        Family::PointMass => {
            let d = spec.action_dim;
            let mut v = Vec::with_capacity(2 * d);
            for _ in 0..d {
                v.push(r.gen_range(-0.5..=0.5));
            }
            for _ in 0..d {
                v.push(r.gen_range(-0.1..=0.1));
            }
            v
        }
        Family::Pendulum => {
            vec![r.gen_range(-0.5..=0.5), r.gen_range(-0.1..=0.1)]
        }
        Family::LinearSystem => (0..spec.state_dim).map(|_| r.gen_range(-0.5..=0.5)).collect(),
        Family::ChainMass => {
            let k = spec.num_links;
            let mut v = Vec::with_capacity(2 * k);
            for i in 0..k {
                v.push(i as f64 * CHAIN_REST_LENGTH + r.gen_range(-0.25..=0.25));
            }
            for _ in 0..k {
                v.push(r.gen_range(-0.1..=0.1));
            }
            v
        }
    };
    State(values)
}

/// Goal positions for the position-driven families: point masses head to 1.0
/// on each axis; the chain shifts one rest length to the right.
pub fn goal_positions(spec: &EnvSpec) -> Vec<f64> {
    match spec.family {
        Family::PointMass => vec![1.0; spec.action_dim],
        Family::ChainMass => (0..spec.num_links)
            .map(|i| (i + 1) as f64 * CHAIN_REST_LENGTH)
            .collect(),
        _ => Vec::new(),
    }
}

pub fn reward(spec: &EnvSpec, s: &State, a: &Action) -> f64 {
    match spec.family {
        Family::PointMass | Family::ChainMass => {
            let goal = goal_positions(spec);
            let d = goal.len();
            let dist: f64 = s.0[..d]
                .iter()
                .zip(&goal)
                .map(|(p, g)| (p - g) * (p - g))
                .sum::<f64>()
                .sqrt();
            let effort: f64 = a.0.iter().map(|v| v * v).sum();
            -dist - 0.01 * effort
        }
        Family::Pendulum => {
            let (theta, omega) = (s.0[0], s.0[1]);
            -(theta * theta + 0.1 * omega * omega + 0.01 * a.0[0] * a.0[0])
        }
        Family::LinearSystem => -s.0.iter().map(|v| v * v).sum::<f64>(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::EnvSpec;

    #[test]
    fn point_mass_hand_evaluated_step() {
        let spec = EnvSpec::point_mass(1, 1.0, 0.0);
        let s = State(vec![0.0, 0.0]);
        let a = Action(vec![1.0]);
        let next = step(&spec, &s, &a).unwrap();
        let v_new = 0.05;
        let p_new = v_new * 0.05;
        assert_eq!(next.0[1], v_new);
        assert_eq!(next.0[0], p_new);
    }

    #[test]
    fn pendulum_stable_equilibrium() {
        let spec = EnvSpec::pendulum(1.0, 0.1);
        let s = State(vec![0.0, 0.0]);
        let next = step(&spec, &s, &Action(vec![0.0])).unwrap();
        assert_eq!(next.0, vec![0.0, 0.0]);
    }

    #[test]
    fn identity_linear_system_is_identity() {
        use crate::nn::Matrix;
        let spec = EnvSpec::linear_system_from(Matrix::identity(3), Matrix::zeros(3, 2));
        let s = State(vec![0.4, -0.2, 0.9]);
        let next = step(&spec, &s, &Action(vec![0.5, -0.5])).unwrap();
        assert_eq!(next.0, s.0);
    }

    #[test]
    fn out_of_bound_action_rejected() {
        let spec = EnvSpec::point_mass(1, 1.0, 0.0);
        let s = State(vec![0.0, 0.0]);
        assert!(step(&spec, &s, &Action(vec![11.0])).is_err());
    }

    #[test]
    fn step_is_pure() {
        let spec = EnvSpec::chain_mass(3, 1.0, 0.1);
        let s = reset(&spec, 5);
        let a = Action(vec![0.5, -0.5, 0.25]);
        let n1 = step(&spec, &s, &a).unwrap();
        let n2 = step(&spec, &s, &a).unwrap();
        assert_eq!(n1, n2);
    }

    #[test]
    fn reset_seed_deterministic_and_in_region() {
        let spec = EnvSpec::pendulum(1.0, 0.1);
        let a = reset(&spec, 9);
        let b = reset(&spec, 9);
        assert_eq!(a, b);
        for seed in 0..200 {
            let s = reset(&spec, seed);
            assert!(s.0[0].abs() <= 0.5, "theta out of reset region");
        }
    }

    #[test]
    fn reset_mean_matches_region_center() {
        // Monte Carlo: 10k resets, position mean within 3 sigma of 0
        let spec = EnvSpec::point_mass(1, 1.0, 0.0);
        let n = 10_000;
        let mean: f64 = (0..n).map(|i| reset(&spec, i as u64).0[0]).sum::<f64>() / n as f64;
        let sigma = 1.0 / (12.0f64).sqrt() / (n as f64).sqrt();
        assert!(mean.abs() < 3.0 * sigma, "mean {mean} vs 3sigma {}", 3.0 * sigma);
    }

    #[test]
    fn reward_formulas() {
        let pm = EnvSpec::point_mass(1, 1.0, 0.0);
        // at goal with zero action
        assert_eq!(reward(&pm, &State(vec![1.0, 0.3]), &Action(vec![0.0])), 0.0);

        let pend = EnvSpec::pendulum(1.0, 0.0);
        let r = reward(&pend, &State(vec![std::f64::consts::PI, 0.0]), &Action(vec![0.0]));
        assert!((r + std::f64::consts::PI.powi(2)).abs() < 1e-12);

        // random state/action against independent formula evaluation
        let lin = EnvSpec::linear_system(3, 2, 1);
        let s = State(vec![0.3, -0.7, 0.2]);
        let expect = -(0.3f64 * 0.3 + 0.7 * 0.7 + 0.2 * 0.2);
        assert!((reward(&lin, &s, &Action(vec![0.0, 0.0])) - expect).abs() < 1e-12);
    }

    #[test]
    fn pendulum_energy_non_increasing_with_damping() {
        // per-step monotonicity needs the damping decrement (2*d*KE*dt) to
        // dominate the integrator's energy fluctuation (KE*g*dt^2), i.e.
        // damping >= g*dt/2
        for (dt, damping) in [(0.05, 0.3), (0.01, 0.12)] {
            let spec = EnvSpec::pendulum(1.0, damping).with_dt(dt);
            for seed in 0..10 {
                let mut s = reset(&spec, seed);
                let mut energy = pendulum_energy(&spec, &s);
                for _ in 0..400 {
                    s = step(&spec, &s, &Action(vec![0.0])).unwrap();
                    let e = pendulum_energy(&spec, &s);
                    assert!(e <= energy + 1e-12, "energy rose: {energy} -> {e}");
                    energy = e;
                }
            }
        }
    }

    #[test]
    fn pendulum_energy_decreases_over_rollouts_for_small_damping() {
        let spec = EnvSpec::pendulum(1.0, 0.05);
        for seed in 0..10 {
            let mut s = reset(&spec, seed);
            let start = pendulum_energy(&spec, &s);
            for _ in 0..400 {
                s = step(&spec, &s, &Action(vec![0.0])).unwrap();
            }
            let end = pendulum_energy(&spec, &s);
            assert!(end < start, "rollout energy {start} -> {end}");
        }
    }

    fn pendulum_energy(spec: &EnvSpec, s: &State) -> f64 {
        let (theta, omega) = (s.0[0], s.0[1]);
        spec.mass * GRAVITY * PENDULUM_LENGTH * (1.0 - theta.cos())
            + 0.5 * spec.mass * PENDULUM_LENGTH * PENDULUM_LENGTH * omega * omega
    }

    #[test]
    fn heavier_mass_changes_velocity_less() {
        let light = EnvSpec::point_mass(1, 1.0, 0.2);
        let heavy = EnvSpec::point_mass(1, 3.0, 0.2);
        let s = State(vec![0.2, -0.4]);
        let a = Action(vec![2.5]);
        let delta = |spec: &EnvSpec| {
            let next = step(spec, &s, &a).unwrap();
            (next.0[1] - (1.0 - spec.damping) * s.0[1]).abs()
        };
        assert!(delta(&heavy) < delta(&light));
    }

    #[test]
    fn linear_rollouts_stay_bounded() {
        let spec = EnvSpec::linear_system(4, 2, 3);
        let mut r = crate::rng::stream_rng(11, crate::rng::stream::ACTIONS);
        let mut s = reset(&spec, 0);
        for _ in 0..500 {
            let a = Action((0..2).map(|_| r.gen_range(-1.0..=1.0)).collect());
            s = step(&spec, &s, &a).unwrap();
            assert!(s.0.iter().all(|v| v.abs() < 100.0));
        }
    }
}
