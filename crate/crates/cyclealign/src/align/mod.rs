//! The alignment core: observation map G, action maps H and P, their
//! discriminators, the cycle losses, and the alternating trainer.
//!
//! G translates domain-X observations into domain Y; H maps X actions into Y
//! given the X observation; P maps Y actions back into X given the Y
//! observation. P is an independent network, never an algebraic inverse of H.
//! Modes with shared observations bypass G entirely (identity flag), and
//! modes with shared actions bypass H and P.

mod init;
mod io;
mod losses;
mod train;

pub use init::{exact_linear_network, init_action_maps};
pub use io::{load_alignment, save_alignment, ALIGN_MAGIC, ALIGN_VERSION};
pub use losses::{
    adversarial_pass, domain_cycle_loss, dynamics_cycle_loss, full_loss, LossBreakdown, LossTerm,
};
pub use train::{train_alternating, PhaseKind, PhaseTrace, StepLoss, TrainTrace};

use sha2::{Digest, Sha256};

use crate::envs::JointCorrespondence;
use crate::error::{Error, Result};
use crate::nn::{params_to_bytes, Activation, MlpParams, MlpSpec, NetKey};

pub(crate) const NET_G: NetKey = NetKey(0);
pub(crate) const NET_H: NetKey = NetKey(1);
pub(crate) const NET_P: NetKey = NetKey(2);
pub(crate) const NET_DY: NetKey = NetKey(3);
pub(crate) const NET_DU: NetKey = NetKey(4);
pub(crate) const NET_DA: NetKey = NetKey(5);

/// Hidden sizes of the observation map.
pub const G_HIDDEN: [usize; 3] = [256, 64, 32];
/// Hidden sizes of action maps and discriminators.
pub const MAP_HIDDEN: [usize; 4] = [32, 64, 128, 32];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlignMode {
    CrossPhysics,
    CrossModality,
    Joint,
}

impl AlignMode {
    pub fn name(self) -> &'static str {
        match self {
            AlignMode::CrossPhysics => "cross_physics",
            AlignMode::CrossModality => "cross_modality",
            AlignMode::Joint => "joint",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            AlignMode::CrossPhysics => 0,
            AlignMode::CrossModality => 1,
            AlignMode::Joint => 2,
        }
    }

    pub fn from_code(c: u8) -> Result<Self> {
        Ok(match c {
            0 => AlignMode::CrossPhysics,
            1 => AlignMode::CrossModality,
            2 => AlignMode::Joint,
            _ => return Err(Error::InvalidSpec(format!("unknown mode code {c}"))),
        })
    }
}

/// Observation and action dimensions of the two domains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub obs_x: usize,
    pub obs_y: usize,
    pub act_x: usize,
    pub act_y: usize,
}

/// Loss weights, learning schedule, and phase lengths of the alternating
/// trainer.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub mode: AlignMode,
    pub lambda0: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lr: f64,
    pub batch: usize,
    /// Epoch count for the single-phase modes.
    pub epochs: usize,
    /// Outer alternation rounds (joint mode).
    pub outer_rounds: usize,
    /// Steps per action-map phase (joint mode).
    pub phase_steps_hp: usize,
    /// Steps per observation-map phase (joint mode).
    pub phase_steps_g: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda0 < 0.0 || self.lambda1 < 0.0 || self.lambda2 < 0.0 {
            return Err(Error::InvalidSpec("loss weights must be nonnegative".into()));
        }
        if self.batch == 0 {
            return Err(Error::InvalidSpec("batch size must be >= 1".into()));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::InvalidSpec("learning rate must be nonnegative".into()));
        }
        match self.mode {
            AlignMode::CrossModality if self.lambda1 != 0.0 => Err(Error::InvalidSpec(
                "cross_modality fixes lambda1 = 0 (actions are shared)".into(),
            )),
            AlignMode::CrossPhysics if self.lambda2 != 0.0 => Err(Error::InvalidSpec(
                "cross_physics fixes lambda2 = 0 (observations are shared)".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// The translation bundle {G, H, P, D_Y, D_U, D_A}. Identity flags replace
/// networks wherever a mode shares the corresponding space.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentModel {
    pub dims: Dims,
    pub identity_g: bool,
    pub identity_hp: bool,
    pub(crate) g: Option<MlpParams>,
    pub(crate) h: Option<MlpParams>,
    pub(crate) p: Option<MlpParams>,
    pub(crate) d_y: Option<MlpParams>,
    pub(crate) d_u: Option<MlpParams>,
    pub(crate) d_a: Option<MlpParams>,
}

pub(crate) fn mlp_spec(input: usize, hidden: &[usize], output: usize) -> Result<MlpSpec> {
    let mut sizes = vec![input];
    sizes.extend_from_slice(hidden);
    sizes.push(output);
    MlpSpec::new(sizes, Activation::Relu, Activation::Linear)
}

impl AlignmentModel {
    /// Builds the bundle a mode needs. `correspondence` is required whenever
    /// the action dimensions differ.
    pub fn new(
        dims: Dims,
        mode: AlignMode,
        correspondence: Option<&JointCorrespondence>,
        seed: u64,
    ) -> Result<Self> {
        let identity_g = matches!(mode, AlignMode::CrossPhysics);
        let identity_hp = matches!(mode, AlignMode::CrossModality);
        if identity_g && dims.obs_x != dims.obs_y {
            return Err(Error::InvalidSpec(
                "cross_physics requires equal observation dimensions".into(),
            ));
        }
        if identity_hp && dims.act_x != dims.act_y {
            return Err(Error::InvalidSpec(
                "cross_modality requires equal action dimensions".into(),
            ));
        }

        let g = if identity_g {
            None
        } else {
            Some(MlpParams::init(
                mlp_spec(dims.obs_x, &G_HIDDEN, dims.obs_y)?,
                crate::rng::derive(seed, 10),
            )?)
        };
        let (h, p) = if identity_hp {
            (None, None)
        } else {
            let (h, p) = init_action_maps(&dims, correspondence, seed)?;
            (Some(h), Some(p))
        };
        let d_y = if identity_g {
            None
        } else {
            Some(MlpParams::init(
                mlp_spec(dims.obs_y, &MAP_HIDDEN, 1)?,
                crate::rng::derive(seed, 13),
            )?)
        };
        let (d_u, d_a) = if identity_hp {
            (None, None)
        } else {
            (
                Some(MlpParams::init(
                    mlp_spec(dims.act_y, &MAP_HIDDEN, 1)?,
                    crate::rng::derive(seed, 14),
                )?),
                Some(MlpParams::init(
                    mlp_spec(dims.act_x, &MAP_HIDDEN, 1)?,
                    crate::rng::derive(seed, 15),
                )?),
            )
        };
        Ok(Self {
            dims,
            identity_g,
            identity_hp,
            g,
            h,
            p,
            d_y,
            d_u,
            d_a,
        })
    }

    pub fn g(&self) -> Option<&MlpParams> {
        self.g.as_ref()
    }

    pub fn h(&self) -> Option<&MlpParams> {
        self.h.as_ref()
    }

    pub fn p(&self) -> Option<&MlpParams> {
        self.p.as_ref()
    }

    /// Swaps in an externally built observation map (oracle probes, tests).
    pub fn set_g_for_tests(&mut self, g: MlpParams) {
        self.g = Some(g);
    }

    /// Replaces G with freshly initialized weights (the random-projection
    /// baseline).
    pub fn reinit_g(&mut self, seed: u64) -> Result<()> {
        if let Some(g) = &self.g {
            self.g = Some(MlpParams::init(g.spec.clone(), seed)?);
        }
        Ok(())
    }

    /// `G: X -> Y`. Identity flag returns the input unchanged.
    pub fn translate_observation(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dims.obs_x {
            return Err(Error::DimMismatch {
                context: "translate_observation",
                expected: self.dims.obs_x,
                actual: x.len(),
            });
        }
        match &self.g {
            None => Ok(x.to_vec()),
            Some(g) => g.forward(x),
        }
    }

    /// `H: X x A -> U`.
    pub fn translate_action_to_y(&self, x: &[f64], a: &[f64]) -> Result<Vec<f64>> {
        if a.len() != self.dims.act_x {
            return Err(Error::DimMismatch {
                context: "translate_action_to_y",
                expected: self.dims.act_x,
                actual: a.len(),
            });
        }
        match &self.h {
            None => Ok(a.to_vec()),
            Some(h) => {
                let mut input = x.to_vec();
                input.extend_from_slice(a);
                h.forward(&input)
            }
        }
    }

    /// `P: Y x U -> A`.
    pub fn translate_action_to_x(&self, y: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.dims.act_y {
            return Err(Error::DimMismatch {
                context: "translate_action_to_x",
                expected: self.dims.act_y,
                actual: u.len(),
            });
        }
        match &self.p {
            None => Ok(u.to_vec()),
            Some(p) => {
                let mut input = y.to_vec();
                input.extend_from_slice(u);
                p.forward(&input)
            }
        }
    }

    /// Digest of the observation map (zeros when G is an identity flag).
    pub fn digest_g(&self) -> [u8; 32] {
        digest_opt_params(&[&self.g])
    }

    /// Digest of both action maps.
    pub fn digest_hp(&self) -> [u8; 32] {
        digest_opt_params(&[&self.h, &self.p])
    }

    pub fn digest_all(&self) -> [u8; 32] {
        digest_opt_params(&[&self.g, &self.h, &self.p, &self.d_y, &self.d_u, &self.d_a])
    }
}

fn digest_opt_params(nets: &[&Option<MlpParams>]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    for net in nets {
        match net {
            Some(p) => hasher.update(params_to_bytes(p)),
            None => hasher.update([0u8]),
        }
    }
    hasher.finalize().into()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims() -> Dims {
        Dims {
            obs_x: 4,
            obs_y: 4,
            act_x: 2,
            act_y: 2,
        }
    }

    #[test]
    fn cross_physics_bypasses_g() {
        let m = AlignmentModel::new(dims(), AlignMode::CrossPhysics, None, 0).unwrap();
        assert!(m.identity_g);
        assert!(m.g.is_none());
        assert!(m.h.is_some() && m.p.is_some());
        let x = [0.1, 0.2, 0.3, 0.4];
        assert_eq!(m.translate_observation(&x).unwrap(), x.to_vec());
    }

    #[test]
    fn cross_modality_bypasses_hp() {
        let m = AlignmentModel::new(dims(), AlignMode::CrossModality, None, 0).unwrap();
        assert!(m.identity_hp);
        assert!(m.h.is_none() && m.p.is_none());
        let a = [0.5, -0.5];
        assert_eq!(m.translate_action_to_y(&[0.0; 4], &a).unwrap(), a.to_vec());
        assert_eq!(m.translate_action_to_x(&[0.0; 4], &a).unwrap(), a.to_vec());
    }

    #[test]
    fn translators_are_deterministic() {
        let m = AlignmentModel::new(dims(), AlignMode::Joint, None, 3).unwrap();
        let x = [0.1, -0.4, 0.9, 0.0];
        let a = [0.3, 0.7];
        assert_eq!(
            m.translate_observation(&x).unwrap(),
            m.translate_observation(&x).unwrap()
        );
        assert_eq!(
            m.translate_action_to_y(&x, &a).unwrap(),
            m.translate_action_to_y(&x, &a).unwrap()
        );
    }

    #[test]
    fn dim_mismatch_rejected() {
        let m = AlignmentModel::new(dims(), AlignMode::Joint, None, 0).unwrap();
        assert!(m.translate_observation(&[0.0; 3]).is_err());
        assert!(m.translate_action_to_y(&[0.0; 4], &[0.0; 3]).is_err());
    }

    #[test]
    fn config_mode_invariants() {
        let mut cfg = TrainConfig {
            mode: AlignMode::CrossModality,
            lambda0: 200.0,
            lambda1: 0.0,
            lambda2: 3.0,
            lr: 1e-3,
            batch: 32,
            epochs: 1,
            outer_rounds: 0,
            phase_steps_hp: 0,
            phase_steps_g: 0,
            seed: 0,
        };
        cfg.validate().unwrap();
        cfg.lambda1 = 1.0;
        assert!(cfg.validate().is_err());

        cfg.mode = AlignMode::CrossPhysics;
        cfg.lambda1 = 1.0;
        cfg.lambda2 = 0.0;
        cfg.validate().unwrap();
        cfg.lambda2 = 3.0;
        assert!(cfg.validate().is_err());
    }
}
