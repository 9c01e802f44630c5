//! Trajectory datasets: collection from the toy domains, without-replacement
//! batching, the binary dataset format, and the paired evaluation set that
//! only scoring code may touch.
//!
//! The unpaired regime lives here by construction: domain X and domain Y
//! datasets carry their own seeds and are shuffled independently, so nothing
//! downstream can rely on index alignment.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::bytes::{write_atomic, Reader, Writer};
use crate::envs::{self, Action, Env, Modality};
use crate::error::{Error, Result};
use crate::rng;

pub const DATASET_MAGIC: &[u8; 4] = b"CYDS";
pub const DATASET_VERSION: u32 = 1;

/// Noise level of `NoisyReference`, as a fraction of the action bound.
pub const REFERENCE_NOISE_FRAC: f64 = 0.3;

/// One `(observation, action, next observation)` sample.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionTriple {
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub obs_next: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CollectionMode {
    Random,
    Reference,
    NoisyReference,
}

impl CollectionMode {
    pub fn code(self) -> u8 {
        match self {
            CollectionMode::Random => 0,
            CollectionMode::Reference => 1,
            CollectionMode::NoisyReference => 2,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        Ok(match code {
            0 => CollectionMode::Random,
            1 => CollectionMode::Reference,
            2 => CollectionMode::NoisyReference,
            _ => return Err(Error::InvalidSpec(format!("unknown collection mode {code}"))),
        })
    }
}

/// Unpaired transition triples from one domain.
///
/// `seed` is collection provenance; it is not part of the file format, so
/// equality is defined over the persisted fields.
#[derive(Debug, Clone)]
pub struct TrajectoryDataset {
    pub spec_digest: [u8; 32],
    pub mode: CollectionMode,
    pub obs_dim: usize,
    pub action_dim: usize,
    pub triples: Vec<TransitionTriple>,
    pub seed: u64,
}

impl PartialEq for TrajectoryDataset {
    fn eq(&self, other: &Self) -> bool {
        self.spec_digest == other.spec_digest
            && self.mode == other.mode
            && self.obs_dim == other.obs_dim
            && self.action_dim == other.action_dim
            && self.triples == other.triples
    }
}

impl TrajectoryDataset {
    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    /// Deterministic subsample of the first `n` triples, used by
    /// dataset-scale studies.
    pub fn truncated(&self, n: usize) -> TrajectoryDataset {
        TrajectoryDataset {
            spec_digest: self.spec_digest,
            mode: self.mode,
            obs_dim: self.obs_dim,
            action_dim: self.action_dim,
            triples: self.triples[..n.min(self.triples.len())].to_vec(),
            seed: self.seed,
        }
    }
}

/// Rolls out `episodes x horizon` transitions under the given action mode.
/// Episodes run in parallel, each on its own derived seed, and are merged in
/// episode order so the result is independent of the worker count.
pub fn collect(
    env: &Env,
    mode: CollectionMode,
    episodes: usize,
    horizon: usize,
    seed: u64,
) -> Result<TrajectoryDataset> {
    if episodes == 0 || horizon == 0 {
        return Err(Error::InvalidSpec(
            "collect needs episodes >= 1 and horizon >= 1".into(),
        ));
    }
    let spec = env.spec();
    let episode_results: Vec<(Vec<TransitionTriple>, Vec<Vec<f64>>)> = (0..episodes)
        .into_par_iter()
        .map(|ep| {
            let ep_seed = rng::derive(seed, ep as u64);
            rollout_episode(env, mode, horizon, ep_seed)
        })
        .collect::<Result<_>>()?;

    let mut triples = Vec::with_capacity(episodes * horizon);
    let mut probe_states = Vec::new();
    for (mut t, states) in episode_results {
        triples.append(&mut t);
        if probe_states.len() < 512 {
            probe_states.extend(states);
        }
    }

    if spec.modality == Modality::Scrambled {
        let probe_obs: Vec<Vec<f64>> = probe_states
            .iter()
            .map(|s| env.observe(&envs::State(s.clone())))
            .collect();
        envs::encoder::check_injectivity(&probe_states, &probe_obs)?;
    }

    Ok(TrajectoryDataset {
        spec_digest: spec.digest(),
        mode,
        obs_dim: spec.obs_dim(),
        action_dim: spec.action_dim,
        triples,
        seed,
    })
}

fn rollout_episode(
    env: &Env,
    mode: CollectionMode,
    horizon: usize,
    ep_seed: u64,
) -> Result<(Vec<TransitionTriple>, Vec<Vec<f64>>)> {
    let spec = env.spec();
    let mut action_rng = rng::stream_rng(ep_seed, rng::stream::ACTIONS);
    let noise = Normal::new(0.0, REFERENCE_NOISE_FRAC * spec.action_bound)
        .expect("valid noise sigma");
    let mut s = env.reset(ep_seed);
    let mut triples = Vec::with_capacity(horizon);
    let mut states = Vec::with_capacity(horizon.min(8));
    for t in 0..horizon {
        let a = match mode {
            CollectionMode::Random => Action(
                (0..spec.action_dim)
                    .map(|_| action_rng.gen_range(-spec.action_bound..=spec.action_bound))
                    .collect(),
            ),
            CollectionMode::Reference => env.reference_policy(&s),
            CollectionMode::NoisyReference => {
                let base = env.reference_policy(&s);
                env.clamp_action(
                    &base
                        .0
                        .iter()
                        .map(|v| v + noise.sample(&mut action_rng))
                        .collect::<Vec<f64>>(),
                )
            }
        };
        let next = env.step(&s, &a)?;
        triples.push(TransitionTriple {
            obs: env.observe(&s),
            action: a.0,
            obs_next: env.observe(&next),
        });
        if t < 8 {
            states.push(s.0.clone());
        }
        s = next;
    }
    Ok((triples, states))
}

pub fn save(dataset: &TrajectoryDataset, path: &Path) -> Result<()> {
    let mut w = Writer::new();
    w.magic(DATASET_MAGIC);
    w.u32(DATASET_VERSION);
    w.raw(&dataset.spec_digest);
    w.u8(dataset.mode.code());
    w.u32(dataset.obs_dim as u32);
    w.u32(dataset.action_dim as u32);
    w.u64(dataset.triples.len() as u64);
    for t in &dataset.triples {
        w.f64_slice(&t.obs);
        w.f64_slice(&t.action);
        w.f64_slice(&t.obs_next);
    }
    write_atomic(path, &w.into_bytes())
}

pub fn load(path: &Path) -> Result<TrajectoryDataset> {
    let bytes = fs::read(path)?;
    let mut r = Reader::new(&bytes, &path.display().to_string());
    r.magic(DATASET_MAGIC)?;
    r.version(DATASET_VERSION)?;
    let mut digest = [0u8; 32];
    digest.copy_from_slice(r.bytes(32, "spec digest")?);
    let mode = CollectionMode::from_code(r.u8("mode")?)?;
    let obs_dim = r.u32("obs dim")? as usize;
    let action_dim = r.u32("action dim")? as usize;
    let count = r.u64("triple count")? as usize;
    let mut triples = Vec::with_capacity(count);
    for _ in 0..count {
        triples.push(TransitionTriple {
            obs: r.f64_vec(obs_dim, "triple obs")?,
            action: r.f64_vec(action_dim, "triple action")?,
            obs_next: r.f64_vec(obs_dim, "triple next obs")?,
        });
    }
    r.done()?;
    Ok(TrajectoryDataset {
        spec_digest: digest,
        mode,
        obs_dim,
        action_dim,
        triples,
        seed: 0,
    })
}

/// Epoch-based without-replacement batch sampler with seeded reshuffles.
pub struct Batcher {
    order: Vec<u32>,
    pos: usize,
    batch: usize,
    rng: rand_chacha::ChaCha8Rng,
}

impl Batcher {
    pub fn new(len: usize, batch: usize, seed: u64) -> Result<Self> {
        if batch == 0 || batch > len {
            return Err(Error::InvalidSpec(format!(
                "batch size {batch} incompatible with dataset of {len} samples"
            )));
        }
        let mut b = Self {
            order: (0..len as u32).collect(),
            pos: 0,
            batch,
            rng: rng::stream_rng(seed, rng::stream::BATCH_X),
        };
        b.reshuffle();
        Ok(b)
    }

    fn reshuffle(&mut self) {
        self.order.shuffle(&mut self.rng);
        self.pos = 0;
    }

    /// Indices of the next batch; reshuffles when the epoch is exhausted.
    pub fn next_batch(&mut self) -> Vec<usize> {
        if self.pos + self.batch > self.order.len() {
            self.reshuffle();
        }
        let out = self.order[self.pos..self.pos + self.batch]
            .iter()
            .map(|&i| i as usize)
            .collect();
        self.pos += self.batch;
        out
    }

    /// Batches remaining in the current epoch.
    pub fn batches_per_epoch(&self) -> usize {
        self.order.len() / self.batch
    }
}

/// Ground-truth `(state_Y, obs_X)` pairs. Only evaluation code consumes this
/// type; trainers take [`TrajectoryDataset`]s.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedEvalSet {
    pub state_dim: usize,
    pub obs_dim: usize,
    pub pairs: Vec<(Vec<f64>, Vec<f64>)>,
}

impl PairedEvalSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Splits off the first `n` pairs (e.g. a supervised training subset);
    /// remainder stays for evaluation.
    pub fn split_at(&self, n: usize) -> (PairedEvalSet, PairedEvalSet) {
        let (a, b) = self.pairs.split_at(n.min(self.pairs.len()));
        (
            PairedEvalSet {
                state_dim: self.state_dim,
                obs_dim: self.obs_dim,
                pairs: a.to_vec(),
            },
            PairedEvalSet {
                state_dim: self.state_dim,
                obs_dim: self.obs_dim,
                pairs: b.to_vec(),
            },
        )
    }
}

/// Samples `count` states from X's random-action rollout distribution and
/// records both representations. X and Y must wrap the same underlying state
/// space.
pub fn build_paired_eval(
    env_x: &Env,
    env_y: &Env,
    count: usize,
    seed: u64,
) -> Result<PairedEvalSet> {
    let (sx, sy) = (env_x.spec(), env_y.spec());
    if sx.family != sy.family
        || sx.state_dim != sy.state_dim
        || sx.action_dim != sy.action_dim
    {
        return Err(Error::InvalidSpec(
            "paired evaluation needs domains over the same underlying state space".into(),
        ));
    }
    let horizon = 50;
    let mut pairs = Vec::with_capacity(count);
    let mut ep = 0u64;
    while pairs.len() < count {
        let ep_seed = rng::derive(seed, ep);
        let mut action_rng = rng::stream_rng(ep_seed, rng::stream::ACTIONS);
        let mut s = env_x.reset(ep_seed);
        for _ in 0..horizon {
            if pairs.len() >= count {
                break;
            }
            pairs.push((env_y.observe(&s), env_x.observe(&s)));
            let a = Action(
                (0..sx.action_dim)
                    .map(|_| action_rng.gen_range(-sx.action_bound..=sx.action_bound))
                    .collect(),
            );
            s = env_x.step(&s, &a)?;
        }
        ep += 1;
    }
    Ok(PairedEvalSet {
        state_dim: sy.obs_dim(),
        obs_dim: sx.obs_dim(),
        pairs,
    })
}
