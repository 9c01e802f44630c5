//! Forward dynamics model of the target domain: pretrained by supervised
//! regression on that domain's triples, then frozen so it can serve as the
//! differentiable stand-in for the real transition function inside the
//! dynamics cycle. Training it jointly with the cycle would let the maps
//! collapse everything to a fixed point, so freezing is enforced by the API.
//!
//! The network predicts the state *delta*; with the final layer zeroed at
//! init the model starts as the identity map.

use std::fs;
use std::path::Path;

use crate::bytes::{write_atomic, Reader, Writer};
use crate::data::{Batcher, TrajectoryDataset};
use crate::error::{Error, Result};
use crate::nn::{
    adam_step, digest_params, AdamState, Activation, MlpParams, MlpSpec, NetKey, Tape, Var,
};

pub const FORWARD_MAGIC: &[u8; 4] = b"CYFM";
pub const FORWARD_VERSION: u32 = 1;

/// Hidden sizes of the forward dynamics MLP.
pub const FORWARD_HIDDEN: [usize; 3] = [64, 128, 32];

const NET_F: NetKey = NetKey(100);

/// Per-coordinate normalization of the concatenated `(y, u)` input, computed
/// once from the training dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub inv_std: Vec<f64>,
}

impl Normalizer {
    pub fn from_dataset(dataset: &TrajectoryDataset) -> Self {
        let dim = dataset.obs_dim + dataset.action_dim;
        let n = dataset.len() as f64;
        let mut mean = vec![0.0; dim];
        for t in &dataset.triples {
            for (i, v) in t.obs.iter().chain(t.action.iter()).enumerate() {
                mean[i] += v;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = vec![0.0; dim];
        for t in &dataset.triples {
            for (i, v) in t.obs.iter().chain(t.action.iter()).enumerate() {
                let d = v - mean[i];
                var[i] += d * d;
            }
        }
        let inv_std = var
            .iter()
            .map(|v| 1.0 / (v / n).sqrt().max(1e-6))
            .collect();
        Self { mean, inv_std }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            inv_std: vec![1.0; dim],
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.inv_std)
            .map(|((v, m), s)| (v - m) * s)
            .collect()
    }
}

/// Frozen approximator of the target domain's transition function.
#[derive(Debug, Clone)]
pub struct ForwardModel {
    params: MlpParams,
    norm: Normalizer,
    obs_dim: usize,
    act_dim: usize,
    frozen: bool,
}

#[derive(Debug, Clone)]
pub struct ForwardTrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub seed: u64,
}

impl Default for ForwardTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            lr: 0.001,
            batch: 32,
            seed: 0,
        }
    }
}

impl ForwardModel {
    /// Fresh untrained model; final layer zeroed so `predict(y, u) = y`.
    pub fn init(obs_dim: usize, act_dim: usize, seed: u64) -> Result<Self> {
        let mut sizes = vec![obs_dim + act_dim];
        sizes.extend_from_slice(&FORWARD_HIDDEN);
        sizes.push(obs_dim);
        let spec = MlpSpec::new(sizes, Activation::Relu, Activation::Linear)?;
        let mut params = MlpParams::init(spec, seed)?;
        params.zero_final_layer();
        Ok(Self {
            params,
            norm: Normalizer::identity(obs_dim + act_dim),
            obs_dim,
            act_dim,
            frozen: false,
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn act_dim(&self) -> usize {
        self.act_dim
    }

    pub fn frozen(&self) -> bool {
        self.frozen
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn params(&self) -> &MlpParams {
        &self.params
    }

    pub fn digest(&self) -> [u8; 32] {
        digest_params(&self.params)
    }

    /// `y_next = y + MLP(normalize(y ++ u))`.
    pub fn predict(&self, y: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        self.check_dims(y, u)?;
        let mut input = y.to_vec();
        input.extend_from_slice(u);
        let delta = self.params.forward(&self.norm.apply(&input))?;
        Ok(y.iter().zip(&delta).map(|(a, d)| a + d).collect())
    }

    /// Tape version of [`predict`](Self::predict): differentiable through `y`
    /// and `u`, never through the model's own parameters. Requires a frozen
    /// model.
    pub fn predict_on_tape<'p>(&'p self, tape: &mut Tape<'p>, y: Var, u: Var) -> Result<Var> {
        if !self.frozen {
            return Err(Error::NotFrozen);
        }
        let input = tape.concat(y, u);
        let normed = tape.scale_shift(input, &self.norm.mean, &self.norm.inv_std);
        let delta = tape.mlp(&self.params, normed, None)?;
        Ok(tape.add(y, delta))
    }

    fn check_dims(&self, y: &[f64], u: &[f64]) -> Result<()> {
        if y.len() != self.obs_dim {
            return Err(Error::DimMismatch {
                context: "forward model observation",
                expected: self.obs_dim,
                actual: y.len(),
            });
        }
        if u.len() != self.act_dim {
            return Err(Error::DimMismatch {
                context: "forward model action",
                expected: self.act_dim,
                actual: u.len(),
            });
        }
        Ok(())
    }
}

/// Supervised regression of the transition function on domain-Y triples.
/// Adam, L1 objective, learning rate halved every three epochs; returns the
/// frozen model and the per-epoch training-loss trace.
pub fn train_forward(
    dataset_y: &TrajectoryDataset,
    cfg: &ForwardTrainConfig,
) -> Result<(ForwardModel, Vec<f64>)> {
    if dataset_y.is_empty() {
        return Err(Error::EmptyBatch("train_forward"));
    }
    let mut model = ForwardModel::init(dataset_y.obs_dim, dataset_y.action_dim, cfg.seed)?;
    model.norm = Normalizer::from_dataset(dataset_y);

    let mut adam = AdamState::new(&model.params);
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut step_index = 0usize;
    if cfg.epochs > 0 {
        let mut batcher = Batcher::new(dataset_y.len(), cfg.batch.min(dataset_y.len()), cfg.seed)?;
        let steps_per_epoch = batcher.batches_per_epoch().max(1);
        for epoch in 0..cfg.epochs {
            let lr = cfg.lr * 0.5f64.powi((epoch / 3) as i32);
            let mut epoch_loss = 0.0;
            for _ in 0..steps_per_epoch {
                let idx = batcher.next_batch();
                let loss = {
                    let mut tape = Tape::new();
                    let mut terms = Vec::with_capacity(idx.len());
                    for &i in &idx {
                        let t = &dataset_y.triples[i];
                        let mut input = t.obs.clone();
                        input.extend_from_slice(&t.action);
                        let x = tape.leaf(model.norm.apply(&input));
                        let y = tape.leaf(t.obs.clone());
                        let target = tape.leaf(t.obs_next.clone());
                        let delta = tape.mlp(&model.params, x, Some(NET_F))?;
                        let pred = tape.add(y, delta);
                        terms.push(tape.l1(pred, target));
                    }
                    let loss = tape.mean(&terms);
                    let value = tape.scalar(loss);
                    if !value.is_finite() {
                        return Err(Error::NonFinite {
                            what: "forward-model loss",
                            step: step_index,
                        });
                    }
                    let bp = tape.backprop(loss)?;
                    let grads = bp.params.net_grads(NET_F, &model.params);
                    drop(tape);
                    adam_step(&mut model.params, &grads, &mut adam, lr)?;
                    value
                };
                epoch_loss += loss;
                step_index += 1;
            }
            trace.push(epoch_loss / steps_per_epoch as f64);
        }
    }
    model.freeze();
    Ok((model, trace))
}

/// Mean L1 prediction error over a held-out dataset.
pub fn eval_forward(model: &ForwardModel, heldout: &TrajectoryDataset) -> Result<f64> {
    if heldout.is_empty() {
        return Err(Error::EmptyBatch("eval_forward"));
    }
    let mut total = 0.0;
    for t in &heldout.triples {
        let pred = model.predict(&t.obs, &t.action)?;
        total += crate::nn::l1_loss(&pred, &t.obs_next)?;
    }
    Ok(total / heldout.len() as f64)
}

pub fn save_forward(model: &ForwardModel, path: &Path) -> Result<()> {
    let mut w = Writer::new();
    w.magic(FORWARD_MAGIC);
    w.u32(FORWARD_VERSION);
    w.u32(model.obs_dim as u32);
    w.u32(model.act_dim as u32);
    w.u8(model.frozen as u8);
    w.u32(model.norm.mean.len() as u32);
    w.f64_slice(&model.norm.mean);
    w.f64_slice(&model.norm.inv_std);
    crate::nn::write_params_block(&mut w, &model.params);
    write_atomic(path, &w.into_bytes())
}

pub fn load_forward(path: &Path) -> Result<ForwardModel> {
    let bytes = fs::read(path)?;
    let mut r = Reader::new(&bytes, &path.display().to_string());
    r.magic(FORWARD_MAGIC)?;
    r.version(FORWARD_VERSION)?;
    let obs_dim = r.u32("obs dim")? as usize;
    let act_dim = r.u32("act dim")? as usize;
    let frozen = r.u8("frozen flag")? != 0;
    let norm_len = r.u32("normalizer len")? as usize;
    let mean = r.f64_vec(norm_len, "normalizer mean")?;
    let inv_std = r.f64_vec(norm_len, "normalizer std")?;
    let params = crate::nn::read_params_block(&mut r)?;
    r.done()?;
    Ok(ForwardModel {
        params,
        norm: Normalizer { mean, inv_std },
        obs_dim,
        act_dim,
        frozen,
    })
}
