//! Zero-fine-tuning policy transfer through the learned correspondences,
//! state-estimation scoring against ground-truth pairs, and the baseline
//! grid (direct deployment, random projection, adversarial-only training,
//! discriminator ablation, initialization-only).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::align::{
    train_alternating, AlignMode, AlignmentModel, Dims, TrainConfig, TrainTrace,
};
use crate::data::{
    build_paired_eval, collect, CollectionMode, PairedEvalSet, TrajectoryDataset,
};
use crate::envs::{Action, Env, JointCorrespondence, State};
use crate::error::{Error, Result};
use crate::forward::{train_forward, ForwardModel, ForwardTrainConfig};
use crate::nn::{adam_step, AdamState, Tape};
use crate::rng;
use rand::Rng;

/// Three-step inference: translate the observation, run the policy in Y,
/// translate the action back, clamp to X's bounds.
pub fn transfer_step(
    model: &AlignmentModel,
    policy_y: &dyn Fn(&[f64]) -> Vec<f64>,
    x: &[f64],
    action_bound: f64,
) -> Result<Vec<f64>> {
    let y_hat = model.translate_observation(x)?;
    let u = policy_y(&y_hat);
    let a_hat = model.translate_action_to_x(&y_hat, &u)?;
    Ok(a_hat
        .into_iter()
        .map(|v| v.clamp(-action_bound, action_bound))
        .collect())
}

/// Per-seed mean episode returns for every evaluated condition, plus the
/// state-estimation error when the model carries a non-identity G.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TransferReport {
    pub seeds: Vec<u64>,
    pub episodes_per_seed: usize,
    pub horizon: usize,
    pub transferred: Vec<f64>,
    pub direct: Vec<f64>,
    pub random: Vec<f64>,
    pub oracle_x: Vec<f64>,
    pub oracle_y: Vec<f64>,
    pub state_estimation_l1: Option<f64>,
}

impl TransferReport {
    pub fn mean(values: &[f64]) -> f64 {
        values.iter().sum::<f64>() / values.len() as f64
    }

    pub fn transferred_mean(&self) -> f64 {
        Self::mean(&self.transferred)
    }

    pub fn direct_mean(&self) -> f64 {
        Self::mean(&self.direct)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Flat CSV: one row per seed per condition.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("seed,condition,mean_return\n");
        for (i, seed) in self.seeds.iter().enumerate() {
            for (name, values) in [
                ("transferred", &self.transferred),
                ("direct", &self.direct),
                ("random", &self.random),
                ("oracle_x", &self.oracle_x),
                ("oracle_y", &self.oracle_y),
            ] {
                out.push_str(&format!("{seed},{name},{}\n", values[i]));
            }
        }
        if let Some(l1) = self.state_estimation_l1 {
            out.push_str(&format!("all,state_estimation_l1,{l1}\n"));
        }
        out
    }
}

/// Evaluation workload shared by every condition.
#[derive(Debug, Clone)]
pub struct EvalParams {
    pub episodes: usize,
    pub horizon: usize,
    pub seeds: Vec<u64>,
    pub paired_count: usize,
    pub paired_seed: u64,
}

impl Default for EvalParams {
    fn default() -> Self {
        Self {
            episodes: 50,
            horizon: 100,
            seeds: vec![0, 1, 2, 3, 4],
            paired_count: 1000,
            paired_seed: 9000,
        }
    }
}

/// Truncate or zero-pad to `n`; the documented convention for deploying a
/// policy across mismatched dimensions.
fn fit_dims(v: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for (o, x) in out.iter_mut().zip(v.iter()) {
        *o = *x;
    }
    out
}

fn rollout<F>(env: &Env, seed: u64, episode: u64, horizon: usize, mut act_fn: F) -> Result<f64>
where
    F: FnMut(&State, &[f64]) -> Result<Action>,
{
    let ep_seed = rng::derive(seed, episode);
    let mut s = env.reset(ep_seed);
    let mut ret = 0.0;
    for _ in 0..horizon {
        let obs = env.observe(&s);
        let a = act_fn(&s, &obs)?;
        let a = env.clamp_action(&a.0);
        ret += env.reward(&s, &a);
        s = env.step(&s, &a)?;
    }
    Ok(ret)
}

fn seed_mean<F>(env: &Env, seed: u64, eval: &EvalParams, mut act_fn: F) -> Result<f64>
where
    F: FnMut(&State, &[f64], u64) -> Result<Action>,
{
    let mut total = 0.0;
    for ep in 0..eval.episodes {
        total += rollout(env, seed, ep as u64, eval.horizon, |s, obs| {
            act_fn(s, obs, ep as u64)
        })?;
    }
    Ok(total / eval.episodes as f64)
}

/// Rolls out every condition. `model: None` means the transferred column is
/// raw direct deployment (the no-translation baseline).
fn eval_conditions(
    env_x: &Env,
    env_y: &Env,
    model: Option<&AlignmentModel>,
    policy_y: &(dyn Fn(&[f64]) -> Vec<f64> + Sync),
    eval: &EvalParams,
) -> Result<TransferReport> {
    if eval.episodes == 0 || eval.seeds.is_empty() {
        return Err(Error::InvalidSpec(
            "evaluation needs episodes >= 1 and a nonempty seed list".into(),
        ));
    }
    let bound_x = env_x.spec().action_bound;
    let obs_y_dim = env_y.spec().obs_dim();
    let act_x_dim = env_x.spec().action_dim;

    struct SeedRow {
        transferred: f64,
        direct: f64,
        random: f64,
        oracle_x: f64,
        oracle_y: f64,
    }

    let rows: Vec<SeedRow> = eval
        .seeds
        .par_iter()
        .map(|&seed| -> Result<SeedRow> {
            let direct = seed_mean(env_x, seed, eval, |_s, obs, _ep| {
                let u = policy_y(&fit_dims(obs, obs_y_dim));
                Ok(Action(fit_dims(&u, act_x_dim)))
            })?;
            let transferred = match model {
                Some(m) => seed_mean(env_x, seed, eval, |_s, obs, _ep| {
                    Ok(Action(transfer_step(m, &policy_y, obs, bound_x)?))
                })?,
                None => direct,
            };
            let random = seed_mean(env_x, seed, eval, |_s, _obs, ep| {
                // fresh stream per (seed, episode); one draw per step
                let mut r = rng::stream_rng(rng::derive(seed, ep), rng::stream::EVAL);
                Ok(Action(
                    (0..act_x_dim)
                        .map(|_| r.gen_range(-bound_x..=bound_x))
                        .collect(),
                ))
            })?;
            let oracle_x = seed_mean(env_x, seed, eval, |s, _obs, _ep| {
                Ok(env_x.reference_policy(s))
            })?;
            let oracle_y = seed_mean(env_y, seed, eval, |s, _obs, _ep| {
                Ok(env_y.reference_policy(s))
            })?;
            Ok(SeedRow {
                transferred,
                direct,
                random,
                oracle_x,
                oracle_y,
            })
        })
        .collect::<Result<_>>()?;

    Ok(TransferReport {
        seeds: eval.seeds.clone(),
        episodes_per_seed: eval.episodes,
        horizon: eval.horizon,
        transferred: rows.iter().map(|r| r.transferred).collect(),
        direct: rows.iter().map(|r| r.direct).collect(),
        random: rows.iter().map(|r| r.random).collect(),
        oracle_x: rows.iter().map(|r| r.oracle_x).collect(),
        oracle_y: rows.iter().map(|r| r.oracle_y).collect(),
        state_estimation_l1: None,
    })
}

/// Rolls out the transferred policy plus the direct, random, and oracle
/// references, one row per seed.
pub fn evaluate_transfer(
    env_x: &Env,
    env_y: &Env,
    model: &AlignmentModel,
    policy_y: &(dyn Fn(&[f64]) -> Vec<f64> + Sync),
    eval: &EvalParams,
) -> Result<TransferReport> {
    eval_conditions(env_x, env_y, Some(model), policy_y, eval)
}

/// Mean L1 between `G(obs_X)` and the ground-truth Y state over the paired
/// set. Undefined for an identity G.
pub fn evaluate_state_estimation(model: &AlignmentModel, paired: &PairedEvalSet) -> Result<f64> {
    evaluate_state_estimation_scaled(model, paired, None)
}

/// As [`evaluate_state_estimation`], with an optional per-dimension scale
/// divisor (e.g. the per-dimension standard deviation for standardized L1).
pub fn evaluate_state_estimation_scaled(
    model: &AlignmentModel,
    paired: &PairedEvalSet,
    scale: Option<&[f64]>,
) -> Result<f64> {
    if model.identity_g {
        return Err(Error::InvalidSpec(
            "state estimation is undefined for an identity observation map".into(),
        ));
    }
    if paired.is_empty() {
        return Err(Error::EmptyBatch("evaluate_state_estimation"));
    }
    let mut total = 0.0;
    for (state_y, obs_x) in &paired.pairs {
        let pred = model.translate_observation(obs_x)?;
        let per_dim: f64 = pred
            .iter()
            .zip(state_y)
            .enumerate()
            .map(|(d, (p, t))| {
                let s = scale.map(|s| s[d]).unwrap_or(1.0);
                (p - t).abs() / s.max(1e-8)
            })
            .sum::<f64>()
            / state_y.len() as f64;
        total += per_dim;
    }
    Ok(total / paired.len() as f64)
}

/// Per-dimension standard deviation of the ground-truth states in a paired
/// set; the divisor for standardized L1.
pub fn state_std(paired: &PairedEvalSet) -> Vec<f64> {
    let dim = paired.pairs[0].0.len();
    let n = paired.len() as f64;
    let mut mean = vec![0.0; dim];
    for (s, _) in &paired.pairs {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut var = vec![0.0; dim];
    for (s, _) in &paired.pairs {
        for (d, v) in s.iter().enumerate() {
            let e = v - mean[d];
            var[d] += e * e;
        }
    }
    var.into_iter().map(|v| (v / n).sqrt()).collect()
}

/// One fully specified experiment: domains, data collection, forward-model
/// schedule, alignment schedule, and the evaluation workload.
#[derive(Clone)]
pub struct TaskSetup<'a> {
    pub env_x: &'a Env,
    pub env_y: &'a Env,
    pub data_mode: CollectionMode,
    pub episodes: usize,
    pub horizon: usize,
    pub seed_x: u64,
    pub seed_y: u64,
    pub forward_cfg: ForwardTrainConfig,
    pub align_cfg: TrainConfig,
    pub correspondence: Option<JointCorrespondence>,
    pub eval: EvalParams,
}

impl<'a> TaskSetup<'a> {
    fn dims(&self, ds_x: &TrajectoryDataset, ds_y: &TrajectoryDataset) -> Dims {
        Dims {
            obs_x: ds_x.obs_dim,
            obs_y: ds_y.obs_dim,
            act_x: ds_x.action_dim,
            act_y: ds_y.action_dim,
        }
    }

    fn paired_eval(&self) -> Result<Option<PairedEvalSet>> {
        let sx = self.env_x.spec();
        let sy = self.env_y.spec();
        if self.eval.paired_count == 0 || sx.family != sy.family || sx.state_dim != sy.state_dim {
            return Ok(None);
        }
        Ok(Some(build_paired_eval(
            self.env_x,
            self.env_y,
            self.eval.paired_count,
            self.eval.paired_seed,
        )?))
    }
}

/// Everything a full method run produces.
pub struct MethodOutcome {
    pub model: AlignmentModel,
    pub forward: ForwardModel,
    pub report: TransferReport,
    pub trace: TrainTrace,
}

/// Collect, pretrain F, align, evaluate.
pub fn run_method(setup: &TaskSetup) -> Result<MethodOutcome> {
    let ds_x = collect(
        setup.env_x,
        setup.data_mode,
        setup.episodes,
        setup.horizon,
        setup.seed_x,
    )?;
    let ds_y = collect(
        setup.env_y,
        setup.data_mode,
        setup.episodes,
        setup.horizon,
        setup.seed_y,
    )?;
    let (forward, _) = train_forward(&ds_y, &setup.forward_cfg)?;
    let mut model = AlignmentModel::new(
        setup.dims(&ds_x, &ds_y),
        setup.align_cfg.mode,
        setup.correspondence.as_ref(),
        setup.align_cfg.seed,
    )?;
    let trace = train_alternating(&mut model, &ds_x, &ds_y, &forward, &setup.align_cfg)?;
    let report = report_for_model(setup, &model)?;
    Ok(MethodOutcome {
        model,
        forward,
        report,
        trace,
    })
}

fn report_for_model(setup: &TaskSetup, model: &AlignmentModel) -> Result<TransferReport> {
    let env_y = setup.env_y;
    let policy = |obs: &[f64]| env_y.reference_policy(&State(obs.to_vec())).0;
    let mut report = eval_conditions(setup.env_x, env_y, Some(model), &policy, &setup.eval)?;
    if !model.identity_g {
        if let Some(paired) = setup.paired_eval()? {
            report.state_estimation_l1 = Some(evaluate_state_estimation(model, &paired)?);
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    /// Deploy the Y policy raw (dimension padding when shapes differ).
    Direct,
    /// Untrained G, evaluated as-is.
    RandomG,
    /// Full pipeline with the dynamics term removed (pure adversarial +
    /// domain cycle).
    CycleganStyle,
    /// Observation adversary off (lambda2 = 0) in cross-modality training.
    NoDiscriminator,
    /// Correspondence-initialized action maps with no training at all.
    InitOnly,
}

impl BaselineKind {
    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::Direct => "direct",
            BaselineKind::RandomG => "random_G",
            BaselineKind::CycleganStyle => "cyclegan_style",
            BaselineKind::NoDiscriminator => "no_discriminator",
            BaselineKind::InitOnly => "init_only",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "direct" => BaselineKind::Direct,
            "random_G" | "random_g" => BaselineKind::RandomG,
            "cyclegan_style" => BaselineKind::CycleganStyle,
            "no_discriminator" => BaselineKind::NoDiscriminator,
            "init_only" => BaselineKind::InitOnly,
            other => return Err(Error::InvalidSpec(format!("unknown baseline kind '{other}'"))),
        })
    }
}

/// Runs one baseline end to end and reports it with the same evaluation
/// workload as the method.
pub fn run_baseline(kind: BaselineKind, setup: &TaskSetup) -> Result<TransferReport> {
    match kind {
        BaselineKind::Direct => {
            let env_y = setup.env_y;
            let policy = |obs: &[f64]| env_y.reference_policy(&State(obs.to_vec())).0;
            eval_conditions(setup.env_x, env_y, None, &policy, &setup.eval)
        }
        BaselineKind::RandomG | BaselineKind::InitOnly => {
            let ds_x = collect(
                setup.env_x,
                setup.data_mode,
                setup.episodes,
                setup.horizon,
                setup.seed_x,
            )?;
            let ds_y = collect(
                setup.env_y,
                setup.data_mode,
                setup.episodes,
                setup.horizon,
                setup.seed_y,
            )?;
            let model = AlignmentModel::new(
                setup.dims(&ds_x, &ds_y),
                setup.align_cfg.mode,
                setup.correspondence.as_ref(),
                setup.align_cfg.seed,
            )?;
            report_for_model(setup, &model)
        }
        BaselineKind::CycleganStyle => {
            let mut ablated = setup.clone();
            ablated.align_cfg.lambda0 = 0.0;
            let outcome = run_method(&ablated)?;
            Ok(outcome.report)
        }
        BaselineKind::NoDiscriminator => {
            let mut ablated = setup.clone();
            ablated.align_cfg.lambda2 = 0.0;
            let outcome = run_method(&ablated)?;
            Ok(outcome.report)
        }
    }
}

/// Configuration of the supervised state-estimation study.
#[derive(Debug, Clone)]
pub struct SupervisedConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub seed: u64,
    pub lambda0: f64,
    pub use_dynamics: bool,
}

pub struct SupervisedOutcome {
    pub model: AlignmentModel,
    pub eval_l1: f64,
    pub transfer_return: f64,
}

/// Trains G on supervised L1 to ground-truth states, optionally adding the
/// dynamics-cycle term, then scores both state estimation and transfer.
/// The training and evaluation splits must be disjoint.
#[allow(clippy::too_many_arguments)]
pub fn supervised_combination(
    paired_train: &PairedEvalSet,
    paired_eval: &PairedEvalSet,
    dataset_x: &TrajectoryDataset,
    f: &ForwardModel,
    env_x: &Env,
    env_y: &Env,
    eval: &EvalParams,
    cfg: &SupervisedConfig,
) -> Result<SupervisedOutcome> {
    if paired_train.is_empty() || paired_eval.is_empty() {
        return Err(Error::EmptyBatch("supervised_combination"));
    }
    let encode = |v: &[f64]| -> Vec<u8> { v.iter().flat_map(|x| x.to_le_bytes()).collect() };
    let train_keys: std::collections::HashSet<Vec<u8>> = paired_train
        .pairs
        .iter()
        .map(|(_, ox)| encode(ox))
        .collect();
    if paired_eval
        .pairs
        .iter()
        .any(|(_, ox)| train_keys.contains(&encode(ox)))
    {
        return Err(Error::InvalidSpec(
            "supervised training and evaluation splits overlap".into(),
        ));
    }

    let dims = Dims {
        obs_x: paired_train.obs_dim,
        obs_y: paired_train.state_dim,
        act_x: dataset_x.action_dim,
        act_y: dataset_x.action_dim,
    };
    let mut model = AlignmentModel::new(dims, AlignMode::CrossModality, None, cfg.seed)?;
    let g_key = crate::align::NET_G;

    let mut adam = AdamState::new(model.g().unwrap());
    let mut pair_batcher = crate::data::Batcher::new(
        paired_train.len(),
        cfg.batch.min(paired_train.len()),
        rng::derive(cfg.seed, rng::stream::BATCH_X),
    )?;
    let mut dyn_batcher = crate::data::Batcher::new(
        dataset_x.len(),
        cfg.batch.min(dataset_x.len()),
        rng::derive(cfg.seed, rng::stream::BATCH_Y),
    )?;
    let steps_per_epoch = pair_batcher.batches_per_epoch().max(1);
    for _epoch in 0..cfg.epochs {
        for step in 0..steps_per_epoch {
            let g = model.g().unwrap();
            let (value, grads) = {
                let mut tape = Tape::new();
                let mut sup_terms = Vec::new();
                for i in pair_batcher.next_batch() {
                    let (sy, ox) = &paired_train.pairs[i];
                    let x = tape.leaf(ox.clone());
                    let pred = tape.mlp(g, x, Some(g_key))?;
                    let target = tape.leaf(sy.clone());
                    sup_terms.push(tape.l1(pred, target));
                }
                let sup = tape.mean(&sup_terms);
                let total = if cfg.use_dynamics {
                    let mut dyn_terms = Vec::new();
                    for i in dyn_batcher.next_batch() {
                        let t = &dataset_x.triples[i];
                        let x = tape.leaf(t.obs.clone());
                        let gx = tape.mlp(g, x, Some(g_key))?;
                        let xn = tape.leaf(t.obs_next.clone());
                        let gx_next = tape.mlp(g, xn, Some(g_key))?;
                        let u = tape.leaf(t.action.clone());
                        let pred = f.predict_on_tape(&mut tape, gx, u)?;
                        dyn_terms.push(tape.l1(gx_next, pred));
                    }
                    let dyn_loss = tape.mean(&dyn_terms);
                    tape.weighted_sum(&[(sup, 1.0), (dyn_loss, cfg.lambda0)])
                } else {
                    sup
                };
                let value = tape.scalar(total);
                let bp = tape.backprop(total)?;
                (value, bp.params.net_grads(g_key, g))
            };
            if !value.is_finite() {
                return Err(Error::NonFinite {
                    what: "supervised loss",
                    step,
                });
            }
            adam_step(model.g.as_mut().unwrap(), &grads, &mut adam, cfg.lr)?;
        }
    }

    let eval_l1 = evaluate_state_estimation(&model, paired_eval)?;
    let policy = |obs: &[f64]| env_y.reference_policy(&State(obs.to_vec())).0;
    let report = eval_conditions(env_x, env_y, Some(&model), &policy, eval)?;
    Ok(SupervisedOutcome {
        model,
        eval_l1,
        transfer_return: report.transferred_mean(),
    })
}
