//! Analytic reference controllers, tuned for the physics of the spec they are
//! built from. These stand in for pretrained policies as transfer subjects.

use super::{Action, EnvSpec, Family, State};
use crate::error::Result;
use crate::nn::Matrix;

/// PD gains per unit mass for the position-driven families.
const KP: f64 = 4.0;
const KD: f64 = 2.0;

/// Deterministic reference action. `regulator` carries the cached gain matrix
/// for the linear family.
pub fn reference_policy(spec: &EnvSpec, regulator: Option<&Matrix>, s: &State) -> Action {
    let bound = spec.action_bound;
    let clamp = |v: f64| v.clamp(-bound, bound);
    match spec.family {
        Family::PointMass | Family::ChainMass => {
            let goal = super::dynamics::goal_positions(spec);
            let d = goal.len();
            let (p, v) = s.0.split_at(d);
            let a = (0..d)
                .map(|i| clamp(spec.mass * (KP * (goal[i] - p[i]) - KD * v[i])))
                .collect();
            Action(a)
        }
        Family::Pendulum => {
            let (theta, omega) = (s.0[0], s.0[1]);
            Action(vec![clamp(spec.mass * (-KP * theta - KD * omega))])
        }
        Family::LinearSystem => {
            let k = regulator.expect("linear_system policy needs the regulator gain");
            let mut u = vec![0.0; spec.action_dim];
            k.matvec(&s.0, &mut u);
            Action(u.into_iter().map(|v| clamp(-v)).collect())
        }
    }
}

/// Discrete-time regulator synthesis on (A, B): iterate the Riccati recursion
/// with Q = I, R = I until the value matrix settles, then return
/// `K = (R + B' P B)^-1 B' P A` so the policy is `a = -K s`.
pub fn regulator_gain(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    let n = a.rows();
    let m = b.cols();
    let q = Matrix::identity(n);
    let r = Matrix::identity(m);
    let at = a.transpose();
    let bt = b.transpose();
    let mut p = q.clone();
    for _ in 0..500 {
        // K = (R + B'PB)^-1 B'PA
        let btp = bt.matmul(&p);
        let r_btpb = r.add(&btp.matmul(b));
        let btpa = btp.matmul(a);
        let k = r_btpb.solve(&btpa)?;
        // P' = Q + A'P(A - BK)
        let a_bk = a.sub(&b.matmul(&k));
        let p_next = q.add(&at.matmul(&p.matmul(&a_bk)));
        let delta = p_next.sub(&p).max_abs();
        p = p_next;
        if delta < 1e-12 {
            break;
        }
    }
    let btp = bt.matmul(&p);
    let r_btpb = r.add(&btp.matmul(b));
    let btpa = btp.matmul(a);
    r_btpb.solve(&btpa)
}
