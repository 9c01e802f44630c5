//! Deterministic toy dynamical systems with configurable physics, morphology,
//! and observation modality, plus the analytic reference controllers used as
//! transfer subjects.
//!
//! All dynamics are pure functions of `(spec, state, action)`; an [`Env`]
//! only adds the cached observation encoder and regulator gain.

mod dynamics;
pub(crate) mod encoder;
mod policy;

pub use encoder::{check_injectivity, ObservationEncoder};

use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::rng;
use rand::distributions::{Distribution, Uniform};
use rand::Rng;

pub const GRAVITY: f64 = 9.81;
pub const PENDULUM_LENGTH: f64 = 1.0;
pub const CHAIN_STIFFNESS: f64 = 10.0;
pub const CHAIN_REST_LENGTH: f64 = 1.0;

/// Position/velocity clamp for point_mass and chain_mass states.
pub const POSITION_BOUND: f64 = 50.0;
/// Angular velocity clamp for the pendulum.
pub const OMEGA_BOUND: f64 = 20.0;
/// Hard stop for linear-system states; generated systems never approach it.
pub const LINEAR_STATE_BOUND: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    PointMass,
    Pendulum,
    LinearSystem,
    ChainMass,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::PointMass => "point_mass",
            Family::Pendulum => "pendulum",
            Family::LinearSystem => "linear_system",
            Family::ChainMass => "chain_mass",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modality {
    State,
    Scrambled,
}

/// State of one domain; layout per family is documented on the constructor.
#[derive(Debug, Clone, PartialEq)]
pub struct State(pub Vec<f64>);

impl State {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Action(pub Vec<f64>);

impl Action {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Pair of system matrices for the linear family.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearDynamics {
    pub a: Matrix,
    pub b: Matrix,
}

/// A toy domain: physics parameters, morphology, dimensions, and observation
/// modality. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub family: Family,
    pub state_dim: usize,
    pub action_dim: usize,
    pub dt: f64,
    pub mass: f64,
    pub damping: f64,
    pub num_links: usize,
    pub action_bound: f64,
    pub modality: Modality,
    pub modality_seed: u64,
    pub linear: Option<LinearDynamics>,
    /// Seed that generated `linear` (config-file provenance; 0 when the
    /// matrices were supplied directly).
    pub linear_seed: u64,
}

impl EnvSpec {
    /// Point mass in `d` spatial dims. State `[p(1..d), v(1..d)]`, actions are
    /// per-axis forces.
    pub fn point_mass(spatial_dims: usize, mass: f64, damping: f64) -> Self {
        Self {
            family: Family::PointMass,
            state_dim: 2 * spatial_dims,
            action_dim: spatial_dims,
            dt: 0.05,
            mass,
            damping,
            num_links: 0,
            action_bound: 10.0,
            modality: Modality::State,
            modality_seed: 0,
            linear: None,
            linear_seed: 0,
        }
    }

    /// Pendulum with state `[theta, omega]` and a single torque action.
    pub fn pendulum(mass: f64, damping: f64) -> Self {
        Self {
            family: Family::Pendulum,
            state_dim: 2,
            action_dim: 1,
            dt: 0.05,
            mass,
            damping,
            num_links: 0,
            action_bound: 10.0,
            modality: Modality::State,
            modality_seed: 0,
            linear: None,
            linear_seed: 0,
        }
    }

    /// Discrete linear system `s' = A s + B a` with seeded random stable
    /// matrices (spectral radius scaled to ~0.95).
    pub fn linear_system(state_dim: usize, action_dim: usize, seed: u64) -> Self {
        let (a, b) = generate_linear(state_dim, action_dim, seed);
        let mut spec = Self::linear_system_from(a, b);
        spec.linear_seed = seed;
        spec
    }

    pub fn linear_system_from(a: Matrix, b: Matrix) -> Self {
        let n = a.rows();
        let m = b.cols();
        Self {
            family: Family::LinearSystem,
            state_dim: n,
            action_dim: m,
            dt: 0.05,
            mass: 1.0,
            damping: 0.0,
            num_links: 0,
            action_bound: 1.0,
            modality: Modality::State,
            modality_seed: 0,
            linear: Some(LinearDynamics { a, b }),
            linear_seed: 0,
        }
    }

    /// Chain of `k` masses on a line joined by springs. State
    /// `[p(1..k), v(1..k)]`, one force action per mass. Rest positions sit at
    /// `p_i = i` so the springs start relaxed.
    pub fn chain_mass(links: usize, mass: f64, damping: f64) -> Self {
        Self {
            family: Family::ChainMass,
            state_dim: 2 * links,
            action_dim: links,
            dt: 0.05,
            mass,
            damping,
            num_links: links,
            action_bound: 10.0,
            modality: Modality::State,
            modality_seed: 0,
            linear: None,
            linear_seed: 0,
        }
    }

    pub fn with_modality(mut self, modality: Modality, seed: u64) -> Self {
        self.modality = modality;
        self.modality_seed = seed;
        self
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_action_bound(mut self, bound: f64) -> Self {
        self.action_bound = bound;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.dt <= 0.0 || !self.dt.is_finite() {
            return Err(Error::InvalidSpec("dt must be positive".into()));
        }
        if self.mass <= 0.0 || !self.mass.is_finite() {
            return Err(Error::InvalidSpec("mass must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.damping) {
            return Err(Error::InvalidSpec("damping must be in [0, 1)".into()));
        }
        if self.action_bound <= 0.0 {
            return Err(Error::InvalidSpec("action_bound must be positive".into()));
        }
        match self.family {
            Family::PointMass => {
                if self.state_dim == 0 || self.state_dim != 2 * self.action_dim {
                    return Err(Error::InvalidSpec(
                        "point_mass needs state_dim = 2 * action_dim".into(),
                    ));
                }
            }
            Family::Pendulum => {
                if self.state_dim != 2 || self.action_dim != 1 {
                    return Err(Error::InvalidSpec(
                        "pendulum is a 2-state, 1-action system".into(),
                    ));
                }
            }
            Family::ChainMass => {
                if self.num_links < 1 {
                    return Err(Error::InvalidSpec("chain_mass needs at least 1 link".into()));
                }
                if self.state_dim != 2 * self.num_links || self.action_dim != self.num_links {
                    return Err(Error::InvalidSpec(
                        "chain_mass needs state_dim = 2k and action_dim = k".into(),
                    ));
                }
            }
            Family::LinearSystem => {
                let lin = self
                    .linear
                    .as_ref()
                    .ok_or_else(|| Error::InvalidSpec("linear_system needs A and B".into()))?;
                if lin.a.rows() != self.state_dim
                    || lin.a.cols() != self.state_dim
                    || lin.b.rows() != self.state_dim
                    || lin.b.cols() != self.action_dim
                {
                    return Err(Error::InvalidSpec("linear_system matrix shapes".into()));
                }
                let rho = spectral_radius_estimate(&lin.a);
                if rho > 1.05 {
                    return Err(Error::InvalidSpec(format!(
                        "linear_system spectral radius {rho:.3} exceeds 1.05"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Observation dimension: the state itself, or the scrambled encoder's
    /// output width (2n).
    pub fn obs_dim(&self) -> usize {
        match self.modality {
            Modality::State => self.state_dim,
            Modality::Scrambled => 2 * self.state_dim,
        }
    }

    /// Canonical byte serialization; input to the spec digest.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.push(match self.family {
            Family::PointMass => 0u8,
            Family::Pendulum => 1,
            Family::LinearSystem => 2,
            Family::ChainMass => 3,
        });
        out.extend_from_slice(&(self.state_dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.action_dim as u32).to_le_bytes());
        out.extend_from_slice(&self.dt.to_le_bytes());
        out.extend_from_slice(&self.mass.to_le_bytes());
        out.extend_from_slice(&self.damping.to_le_bytes());
        out.extend_from_slice(&(self.num_links as u32).to_le_bytes());
        out.extend_from_slice(&self.action_bound.to_le_bytes());
        out.push(match self.modality {
            Modality::State => 0,
            Modality::Scrambled => 1,
        });
        out.extend_from_slice(&self.modality_seed.to_le_bytes());
        if let Some(lin) = &self.linear {
            for v in lin.a.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
            for v in lin.b.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn digest(&self) -> [u8; 32] {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update(self.canonical_bytes());
        h.finalize().into()
    }
}

/// Runtime handle: the spec plus its cached observation encoder and (for the
/// linear family) regulator gain.
#[derive(Debug, Clone)]
pub struct Env {
    spec: EnvSpec,
    encoder: Option<ObservationEncoder>,
    regulator_gain: Option<Matrix>,
}

impl Env {
    pub fn new(spec: EnvSpec) -> Result<Self> {
        spec.validate()?;
        let encoder = match spec.modality {
            Modality::State => None,
            Modality::Scrambled => Some(ObservationEncoder::scrambled(
                spec.state_dim,
                spec.modality_seed,
            )?),
        };
        let regulator_gain = match spec.family {
            Family::LinearSystem => {
                let lin = spec.linear.as_ref().unwrap();
                Some(policy::regulator_gain(&lin.a, &lin.b)?)
            }
            _ => None,
        };
        Ok(Self {
            spec,
            encoder,
            regulator_gain,
        })
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn encoder(&self) -> Option<&ObservationEncoder> {
        self.encoder.as_ref()
    }

    /// Deterministic transition. Rejects out-of-bound actions; callers clamp
    /// explicitly.
    pub fn step(&self, s: &State, a: &Action) -> Result<State> {
        dynamics::step(&self.spec, s, a)
    }

    /// Seed-deterministic initial state, uniform in a small region around the
    /// per-family equilibrium.
    pub fn reset(&self, seed: u64) -> State {
        dynamics::reset(&self.spec, seed)
    }

    pub fn reward(&self, s: &State, a: &Action) -> f64 {
        dynamics::reward(&self.spec, s, a)
    }

    /// Analytic controller tuned for this spec's physics.
    pub fn reference_policy(&self, s: &State) -> Action {
        policy::reference_policy(&self.spec, self.regulator_gain.as_deref_matrix(), s)
    }

    /// Observation of a state under the spec's modality.
    pub fn observe(&self, s: &State) -> Vec<f64> {
        match &self.encoder {
            None => s.0.clone(),
            Some(enc) => enc.encode(&s.0),
        }
    }

    pub fn clamp_action(&self, a: &[f64]) -> Action {
        let b = self.spec.action_bound;
        Action(a.iter().map(|v| v.clamp(-b, b)).collect())
    }

    /// Goal position vector for the reward of point_mass / chain_mass.
    pub fn goal_positions(&self) -> Vec<f64> {
        dynamics::goal_positions(&self.spec)
    }
}

// small helper so Env::reference_policy can pass Option<&Matrix>
trait AsDerefMatrix {
    fn as_deref_matrix(&self) -> Option<&Matrix>;
}

impl AsDerefMatrix for Option<Matrix> {
    fn as_deref_matrix(&self) -> Option<&Matrix> {
        self.as_ref()
    }
}

/// Correspondence from each X joint to its nearest Y joint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JointCorrespondence(pub Vec<usize>);

/// Builds a morphology pair from a chain base: Y keeps `k` links, X appends
/// `extra_links` at the tail. Novel X joints map to the original tail joint.
pub fn make_morphology_pair(
    base: &EnvSpec,
    extra_links: usize,
) -> Result<(EnvSpec, EnvSpec, JointCorrespondence)> {
    if base.family != Family::ChainMass {
        return Err(Error::InvalidSpec(
            "morphology pairs are defined for chain_mass".into(),
        ));
    }
    if extra_links < 1 {
        return Err(Error::InvalidSpec("extra_links must be >= 1".into()));
    }
    base.validate()?;
    let k = base.num_links;
    let spec_y = base.clone();
    let mut spec_x = base.clone();
    spec_x.num_links = k + extra_links;
    spec_x.state_dim = 2 * spec_x.num_links;
    spec_x.action_dim = spec_x.num_links;
    let map = (0..spec_x.num_links)
        .map(|i| if i < k { i } else { k - 1 })
        .collect();
    Ok((spec_x, spec_y, JointCorrespondence(map)))
}

/// Random stable system matrices, seeded. A is rescaled so the estimated
/// spectral radius lands at 0.95.
fn generate_linear(n: usize, m: usize, seed: u64) -> (Matrix, Matrix) {
    let mut rng = rng::stream_rng(seed, rng::stream::INIT);
    let dist = Uniform::new_inclusive(-1.0, 1.0);
    let mut a = Matrix::zeros(n, n);
    for v in a.data_mut() {
        *v = dist.sample(&mut rng);
    }
    let rho = spectral_radius_estimate(&a).max(1e-9);
    let a = a.scale(0.95 / rho);
    let mut b = Matrix::zeros(n, m);
    for v in b.data_mut() {
        *v = dist.sample(&mut rng);
    }
    (a, b)
}

/// Spectral radius via the growth rate of repeated application
/// (`||A^k x||^(1/k)` converges to rho(A) for generic x).
pub fn spectral_radius_estimate(a: &Matrix) -> f64 {
    let n = a.rows();
    let mut rng = rng::stream_rng(0xabcd, rng::stream::INIT);
    let mut best = 0.0f64;
    for _ in 0..3 {
        let mut x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
        let mut log_growth = 0.0;
        let steps = 200;
        for _ in 0..steps {
            let mut y = vec![0.0; n];
            a.matvec(&x, &mut y);
            let ny = norm(&y);
            if ny == 0.0 {
                return 0.0;
            }
            log_growth += ny.ln();
            for v in &mut y {
                *v /= ny;
            }
            x = y;
        }
        best = best.max((log_growth / steps as f64).exp());
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_mass_dims() {
        let s = EnvSpec::point_mass(3, 1.0, 0.1);
        assert_eq!(s.state_dim, 6);
        assert_eq!(s.action_dim, 3);
        s.validate().unwrap();
    }

    #[test]
    fn validation_rejects_bad_damping() {
        let mut s = EnvSpec::point_mass(1, 1.0, 0.0);
        s.damping = 1.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn generated_linear_system_is_stable() {
        let spec = EnvSpec::linear_system(4, 2, 7);
        spec.validate().unwrap();
        let rho = spectral_radius_estimate(&spec.linear.as_ref().unwrap().a);
        assert!(rho < 1.0, "rho = {rho}");
    }

    #[test]
    fn spectral_radius_on_known_matrix() {
        // diag(0.5, -0.9): rho = 0.9
        let a = Matrix::from_data(2, 2, vec![0.5, 0.0, 0.0, -0.9]).unwrap();
        let rho = spectral_radius_estimate(&a);
        assert!((rho - 0.9).abs() < 1e-3, "rho = {rho}");
    }

    #[test]
    fn morphology_pair_dims_and_map() {
        let base = EnvSpec::chain_mass(3, 1.0, 0.1);
        let (x, y, map) = make_morphology_pair(&base, 1).unwrap();
        assert_eq!(x.state_dim, 8);
        assert_eq!(x.action_dim, 4);
        assert_eq!(y.state_dim, 6);
        assert_eq!(map.0, vec![0, 1, 2, 2]);

        let (_, _, map2) = make_morphology_pair(&base, 2).unwrap();
        assert_eq!(map2.0, vec![0, 1, 2, 2, 2]);
    }

    #[test]
    fn morphology_pair_rejects_zero_extra() {
        let base = EnvSpec::chain_mass(3, 1.0, 0.1);
        assert!(make_morphology_pair(&base, 0).is_err());
    }

    #[test]
    fn digest_differs_with_physics() {
        let a = EnvSpec::point_mass(1, 1.0, 0.1);
        let b = EnvSpec::point_mass(1, 3.0, 0.1);
        assert_ne!(a.digest(), b.digest());
    }
}
