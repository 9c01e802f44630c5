//! Frozen observation encoder for the scrambled modality: a fixed random
//! tanh MLP standing in for an unknown nonlinear sensor. Its parameters never
//! receive gradient updates; nothing in the crate hands them to a trainer.

use crate::error::Result;
use crate::nn::{digest_params, Activation, MlpParams, MlpSpec};
use crate::rng;

#[derive(Debug, Clone)]
pub struct ObservationEncoder {
    params: MlpParams,
}

impl ObservationEncoder {
    /// Fixed random MLP `state -> observation` of width 2n, tanh hidden,
    /// linear output, seeded by the spec's modality seed.
    pub fn scrambled(state_dim: usize, modality_seed: u64) -> Result<Self> {
        let width = 2 * state_dim;
        let spec = MlpSpec::new(
            vec![state_dim, width, width, width],
            Activation::Tanh,
            Activation::Linear,
        )?;
        let params = MlpParams::init(spec, rng::derive(modality_seed, rng::stream::ENCODER))?;
        Ok(Self { params })
    }

    /// Test hook: wrap explicit parameters as an encoder.
    pub fn from_params(params: MlpParams) -> Self {
        Self { params }
    }

    pub fn encode(&self, state: &[f64]) -> Vec<f64> {
        self.params.forward(state).expect("encoder dims fixed at construction")
    }

    pub fn output_dim(&self) -> usize {
        self.params.spec.output_dim()
    }

    pub fn digest(&self) -> [u8; 32] {
        digest_params(&self.params)
    }
}

/// Empirical injectivity check used at dataset-build time: over sampled state
/// pairs further than `1e-3` apart, the image distance ratio must stay above
/// a small floor. Catches degenerate encoders before they poison a dataset.
pub fn check_injectivity(states: &[Vec<f64>], observations: &[Vec<f64>]) -> Result<()> {
    const STATE_EPS: f64 = 1e-3;
    const RATIO_FLOOR: f64 = 1e-6;
    let n = states.len().min(512);
    for i in 0..n {
        for j in (i + 1)..n {
            let ds: f64 = states[i]
                .iter()
                .zip(&states[j])
                .map(|(a, b)| (a - b).abs())
                .sum();
            if ds <= STATE_EPS {
                continue;
            }
            let dobs: f64 = observations[i]
                .iter()
                .zip(&observations[j])
                .map(|(a, b)| (a - b).abs())
                .sum();
            if dobs / ds < RATIO_FLOOR {
                return Err(crate::error::Error::InvalidSpec(format!(
                    "observation encoder fails the injectivity check: \
                     state distance {ds:.3e} collapsed to {dobs:.3e}"
                )));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{Env, EnvSpec, Modality};

    #[test]
    fn scrambled_encoding_is_frozen_and_deterministic() {
        let spec = EnvSpec::point_mass(1, 1.0, 0.0).with_modality(Modality::Scrambled, 3);
        let env = Env::new(spec).unwrap();
        let s = env.reset(0);
        let a = env.observe(&s);
        let b = env.observe(&s);
        assert_eq!(a, b);
        assert_eq!(a.len(), 4);
    }

    #[test]
    fn identity_modality_returns_state() {
        let env = Env::new(EnvSpec::point_mass(2, 1.0, 0.0)).unwrap();
        let s = env.reset(1);
        assert_eq!(env.observe(&s), s.0);
    }

    #[test]
    fn distinct_states_map_to_distinct_observations() {
        let spec = EnvSpec::linear_system(4, 2, 5).with_modality(Modality::Scrambled, 9);
        let env = Env::new(spec).unwrap();
        let mut obs = Vec::new();
        for seed in 0..1000u64 {
            let s = env.reset(seed);
            obs.push(env.observe(&s));
        }
        obs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for w in obs.windows(2) {
            assert_ne!(w[0], w[1], "two distinct states collided in observation space");
        }
    }

    #[test]
    fn injectivity_check_flags_constant_encoder() {
        let states = vec![vec![0.0, 0.0], vec![1.0, 1.0]];
        let obs = vec![vec![0.5, 0.5], vec![0.5, 0.5]];
        assert!(check_injectivity(&states, &obs).is_err());
        let ok_obs = vec![vec![0.5, 0.5], vec![0.7, 0.1]];
        assert!(check_injectivity(&states, &ok_obs).is_ok());
    }
}
