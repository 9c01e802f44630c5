//! The alternating training loop.
//!
//! Forward-model stage happens elsewhere (the model arrives frozen). Here,
//! each outer round first trains the action maps H and P with their
//! discriminators while G stays fixed (observation weight zeroed), then
//! trains G with its discriminator while H and P stay fixed (action weight
//! zeroed). Cross-physics runs only the action phase, cross-modality only the
//! observation phase; joint mode alternates for `outer_rounds` rounds of
//! `e1`/`e2` steps.

use super::losses::{disc_loss_on_tape, full_loss_on_tape, Lambdas, LossBreakdown, LossTerm};
use super::{AlignMode, AlignmentModel, TrainConfig, NET_DA, NET_DU, NET_DY, NET_G, NET_H, NET_P};
use crate::data::{Batcher, TrajectoryDataset, TransitionTriple};
use crate::error::{Error, Result};
use crate::forward::ForwardModel;
use crate::nn::{adam_step, AdamState, NetKey, Tape};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseKind {
    /// H, P, D_U, D_A training with G fixed.
    ActionMaps,
    /// G, D_Y training with H, P fixed.
    ObservationMap,
}

impl PhaseKind {
    pub fn name(self) -> &'static str {
        match self {
            PhaseKind::ActionMaps => "action_maps",
            PhaseKind::ObservationMap => "observation_map",
        }
    }
}

/// Losses of one optimizer step; inactive terms are `None`.
#[derive(Debug, Clone, Default)]
pub struct StepLoss {
    pub total: f64,
    pub dyn_cyc: Option<f64>,
    pub adv_h: Option<f64>,
    pub adv_p: Option<f64>,
    pub dom_cyc: Option<f64>,
    pub adv_g: Option<f64>,
    pub disc_u: Option<f64>,
    pub disc_a: Option<f64>,
    pub disc_y: Option<f64>,
}

impl StepLoss {
    fn from_breakdown(breakdown: &LossBreakdown) -> Self {
        Self {
            total: breakdown.total(),
            dyn_cyc: breakdown.get(LossTerm::DynCyc),
            adv_h: breakdown.get(LossTerm::AdvH),
            adv_p: breakdown.get(LossTerm::AdvP),
            dom_cyc: breakdown.get(LossTerm::DomCyc),
            adv_g: breakdown.get(LossTerm::AdvG),
            ..Default::default()
        }
    }
}

/// Loss trace and freeze digests of one executed phase.
#[derive(Debug, Clone)]
pub struct PhaseTrace {
    pub kind: PhaseKind,
    pub round: usize,
    pub steps: Vec<StepLoss>,
    pub g_digest_before: [u8; 32],
    pub g_digest_after: [u8; 32],
    pub hp_digest_before: [u8; 32],
    pub hp_digest_after: [u8; 32],
}

#[derive(Debug, Clone, Default)]
pub struct TrainTrace {
    pub phases: Vec<PhaseTrace>,
    /// Optimizer steps taken on mapped networks (one per phase step).
    pub mapped_steps: usize,
}

struct Trainer<'d> {
    dataset_x: &'d TrajectoryDataset,
    dataset_y: &'d TrajectoryDataset,
    batcher_x: Batcher,
    batcher_y: Batcher,
    adam_g: Option<AdamState>,
    adam_h: Option<AdamState>,
    adam_p: Option<AdamState>,
    adam_dy: Option<AdamState>,
    adam_du: Option<AdamState>,
    adam_da: Option<AdamState>,
    step_index: usize,
}

impl<'d> Trainer<'d> {
    fn batch<'a>(ds: &'a TrajectoryDataset, idx: &[usize]) -> Vec<&'a TransitionTriple> {
        idx.iter().map(|&i| &ds.triples[i]).collect()
    }

    /// One action-phase step: D_U and D_A updates, then a generator-side
    /// update of H and P under the full objective with the observation term
    /// zeroed.
    fn step_action_maps(
        &mut self,
        model: &mut AlignmentModel,
        f: &ForwardModel,
        lambdas: Lambdas,
        lr: f64,
    ) -> Result<StepLoss> {
        let idx_x = self.batcher_x.next_batch();
        let idx_y = self.batcher_y.next_batch();
        let batch_x = Self::batch(self.dataset_x, &idx_x);
        let batch_y = Self::batch(self.dataset_y, &idx_y);

        let mut disc_u = None;
        let mut disc_a = None;
        if lambdas.l1 > 0.0 {
            // D_U: real Y-domain actions vs H translations of X actions
            let fake_u: Vec<Vec<f64>> = batch_x
                .iter()
                .map(|t| model.translate_action_to_y(&t.obs, &t.action))
                .collect::<Result<_>>()?;
            let real_u: Vec<&[f64]> = batch_y.iter().map(|t| t.action.as_slice()).collect();
            disc_u = Some(disc_update(
                model.d_u.as_mut().expect("D_U present in action phase"),
                self.adam_du.as_mut().expect("D_U adam state"),
                NET_DU,
                &real_u,
                &fake_u,
                lr,
                self.step_index,
            )?);

            // D_A: real X-domain actions vs P translations of Y actions
            let fake_a: Vec<Vec<f64>> = batch_y
                .iter()
                .map(|t| model.translate_action_to_x(&t.obs, &t.action))
                .collect::<Result<_>>()?;
            let real_a: Vec<&[f64]> = batch_x.iter().map(|t| t.action.as_slice()).collect();
            disc_a = Some(disc_update(
                model.d_a.as_mut().expect("D_A present in action phase"),
                self.adam_da.as_mut().expect("D_A adam state"),
                NET_DA,
                &real_a,
                &fake_a,
                lr,
                self.step_index,
            )?);
        }

        // generator side
        let (value, grads_h, grads_p, breakdown) = {
            let mut tape = Tape::new();
            let (total, breakdown) = full_loss_on_tape(
                &mut tape, model, f, &batch_x, &batch_y, &lambdas, false, true,
            )?;
            let value = tape.scalar(total);
            let bp = tape.backprop(total)?;
            let gh = model.h.as_ref().map(|h| bp.params.net_grads(NET_H, h));
            let gp = model.p.as_ref().map(|p| bp.params.net_grads(NET_P, p));
            (value, gh, gp, breakdown)
        };
        watchdog(value, "action-phase loss", self.step_index)?;
        if let (Some(h), Some(g)) = (model.h.as_mut(), grads_h) {
            adam_step(h, &g, self.adam_h.as_mut().unwrap(), lr)?;
        }
        if let (Some(p), Some(g)) = (model.p.as_mut(), grads_p) {
            adam_step(p, &g, self.adam_p.as_mut().unwrap(), lr)?;
        }

        let mut step = StepLoss::from_breakdown(&breakdown);
        step.disc_u = disc_u;
        step.disc_a = disc_a;
        self.step_index += 1;
        Ok(step)
    }

    /// One observation-phase step: D_Y update, then a generator-side update
    /// of G under the full objective with the action terms zeroed.
    fn step_observation_map(
        &mut self,
        model: &mut AlignmentModel,
        f: &ForwardModel,
        lambdas: Lambdas,
        lr: f64,
    ) -> Result<StepLoss> {
        let idx_x = self.batcher_x.next_batch();
        let idx_y = self.batcher_y.next_batch();
        let batch_x = Self::batch(self.dataset_x, &idx_x);
        let batch_y = Self::batch(self.dataset_y, &idx_y);

        let mut disc_y = None;
        if lambdas.l2 > 0.0 {
            let fake_y: Vec<Vec<f64>> = batch_x
                .iter()
                .map(|t| model.translate_observation(&t.obs))
                .collect::<Result<_>>()?;
            let real_y: Vec<&[f64]> = batch_y.iter().map(|t| t.obs.as_slice()).collect();
            disc_y = Some(disc_update(
                model.d_y.as_mut().expect("D_Y present in observation phase"),
                self.adam_dy.as_mut().expect("D_Y adam state"),
                NET_DY,
                &real_y,
                &fake_y,
                lr,
                self.step_index,
            )?);
        }

        let (value, grads_g, breakdown) = {
            let mut tape = Tape::new();
            let (total, breakdown) = full_loss_on_tape(
                &mut tape, model, f, &batch_x, &batch_y, &lambdas, true, false,
            )?;
            let value = tape.scalar(total);
            let bp = tape.backprop(total)?;
            let gg = model.g.as_ref().map(|g| bp.params.net_grads(NET_G, g));
            (value, gg, breakdown)
        };
        watchdog(value, "observation-phase loss", self.step_index)?;
        if let (Some(g), Some(gr)) = (model.g.as_mut(), grads_g) {
            adam_step(g, &gr, self.adam_g.as_mut().unwrap(), lr)?;
        }

        let mut step = StepLoss::from_breakdown(&breakdown);
        step.disc_y = disc_y;
        self.step_index += 1;
        Ok(step)
    }
}

fn watchdog(value: f64, what: &'static str, step: usize) -> Result<()> {
    if !value.is_finite() {
        return Err(Error::NonFinite { what, step });
    }
    Ok(())
}

/// One discriminator update: real samples against detached fakes.
fn disc_update(
    params: &mut crate::nn::MlpParams,
    adam: &mut AdamState,
    key: NetKey,
    real: &[&[f64]],
    fake: &[Vec<f64>],
    lr: f64,
    step_index: usize,
) -> Result<f64> {
    let (value, grads) = {
        let mut tape = Tape::new();
        let loss = disc_loss_on_tape(&mut tape, params, key, real, fake)?;
        let value = tape.scalar(loss);
        let bp = tape.backprop(loss)?;
        (value, bp.params.net_grads(key, params))
    };
    watchdog(value, "discriminator loss", step_index)?;
    adam_step(params, &grads, adam, lr)?;
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::align::{AlignmentModel, Dims};
    use crate::data::{collect, CollectionMode};
    use crate::envs::{Env, EnvSpec, Modality};
    use crate::forward::{train_forward, ForwardTrainConfig};

    fn small_joint_setup() -> (
        TrajectoryDataset,
        TrajectoryDataset,
        crate::forward::ForwardModel,
        AlignmentModel,
    ) {
        let spec_y = EnvSpec::linear_system(2, 1, 4);
        let spec_x = spec_y.clone().with_modality(Modality::Scrambled, 6);
        let env_y = Env::new(spec_y).unwrap();
        let env_x = Env::new(spec_x).unwrap();
        let ds_x = collect(&env_x, CollectionMode::Random, 10, 24, 1).unwrap();
        let ds_y = collect(&env_y, CollectionMode::Random, 10, 24, 2).unwrap();
        let (f, _) = train_forward(
            &ds_y,
            &ForwardTrainConfig {
                epochs: 1,
                ..Default::default()
            },
        )
        .unwrap();
        let dims = Dims {
            obs_x: ds_x.obs_dim,
            obs_y: ds_y.obs_dim,
            act_x: ds_x.action_dim,
            act_y: ds_y.action_dim,
        };
        let model = AlignmentModel::new(dims, AlignMode::Joint, None, 3).unwrap();
        (ds_x, ds_y, f, model)
    }

    fn joint_cfg() -> TrainConfig {
        TrainConfig {
            mode: AlignMode::Joint,
            lambda0: 200.0,
            lambda1: 1.0,
            lambda2: 3.0,
            lr: 1e-4,
            batch: 8,
            epochs: 0,
            outer_rounds: 2,
            phase_steps_hp: 10,
            phase_steps_g: 10,
            seed: 5,
        }
    }

    #[test]
    fn joint_schedule_counts_and_phase_order() {
        let (ds_x, ds_y, f, mut model) = small_joint_setup();
        let trace = train_alternating(&mut model, &ds_x, &ds_y, &f, &joint_cfg()).unwrap();
        assert_eq!(trace.mapped_steps, 40);
        let kinds: Vec<PhaseKind> = trace.phases.iter().map(|p| p.kind).collect();
        assert_eq!(
            kinds,
            vec![
                PhaseKind::ActionMaps,
                PhaseKind::ObservationMap,
                PhaseKind::ActionMaps,
                PhaseKind::ObservationMap,
            ]
        );
        assert_eq!(trace.phases[0].steps.len(), 10);
    }

    #[test]
    fn phase_freezes_hold_by_digest() {
        let (ds_x, ds_y, f, mut model) = small_joint_setup();
        let trace = train_alternating(&mut model, &ds_x, &ds_y, &f, &joint_cfg()).unwrap();
        for phase in &trace.phases {
            match phase.kind {
                PhaseKind::ActionMaps => {
                    assert_eq!(phase.g_digest_before, phase.g_digest_after, "G moved in phase A");
                    assert_ne!(
                        phase.hp_digest_before, phase.hp_digest_after,
                        "H/P should train in phase A"
                    );
                }
                PhaseKind::ObservationMap => {
                    assert_eq!(
                        phase.hp_digest_before, phase.hp_digest_after,
                        "H/P moved in phase B"
                    );
                    assert_ne!(
                        phase.g_digest_before, phase.g_digest_after,
                        "G should train in phase B"
                    );
                }
            }
        }
    }

    #[test]
    fn frozen_forward_model_is_untouched_by_training() {
        let (ds_x, ds_y, f, mut model) = small_joint_setup();
        let before = f.digest();
        train_alternating(&mut model, &ds_x, &ds_y, &f, &joint_cfg()).unwrap();
        assert_eq!(before, f.digest());
    }

    #[test]
    fn training_is_seed_deterministic() {
        let (ds_x, ds_y, f, model0) = small_joint_setup();
        let mut m1 = model0.clone();
        let mut m2 = model0;
        train_alternating(&mut m1, &ds_x, &ds_y, &f, &joint_cfg()).unwrap();
        train_alternating(&mut m2, &ds_x, &ds_y, &f, &joint_cfg()).unwrap();
        assert_eq!(m1.digest_all(), m2.digest_all());
    }

    #[test]
    fn mode_lambda_inconsistency_rejected() {
        let (ds_x, ds_y, f, mut model) = small_joint_setup();
        let mut cfg = joint_cfg();
        cfg.mode = AlignMode::CrossModality;
        // joint-shaped model plus cross_modality mode is inconsistent, and
        // lambda1 != 0 violates the mode invariant first
        assert!(train_alternating(&mut model, &ds_x, &ds_y, &f, &cfg).is_err());
    }

    #[test]
    fn unfrozen_forward_model_rejected() {
        let (ds_x, ds_y, _f, mut model) = small_joint_setup();
        let unfrozen = crate::forward::ForwardModel::init(2, 1, 0).unwrap();
        assert!(matches!(
            train_alternating(&mut model, &ds_x, &ds_y, &unfrozen, &joint_cfg()),
            Err(Error::NotFrozen)
        ));
    }

    #[test]
    fn cross_modality_trains_g_and_keeps_actions_identity() {
        let spec_y = EnvSpec::linear_system(2, 1, 4);
        let spec_x = spec_y.clone().with_modality(Modality::Scrambled, 6);
        let env_y = Env::new(spec_y).unwrap();
        let env_x = Env::new(spec_x).unwrap();
        let ds_x = collect(&env_x, CollectionMode::Random, 12, 24, 1).unwrap();
        let ds_y = collect(&env_y, CollectionMode::Random, 12, 24, 2).unwrap();
        let (f, _) = train_forward(
            &ds_y,
            &ForwardTrainConfig {
                epochs: 2,
                ..Default::default()
            },
        )
        .unwrap();
        let dims = Dims {
            obs_x: 4,
            obs_y: 2,
            act_x: 1,
            act_y: 1,
        };
        let mut model = AlignmentModel::new(dims, AlignMode::CrossModality, None, 3).unwrap();
        let g_before = model.digest_g();
        let cfg = TrainConfig {
            mode: AlignMode::CrossModality,
            lambda0: 200.0,
            lambda1: 0.0,
            lambda2: 3.0,
            lr: 1e-3,
            batch: 16,
            epochs: 1,
            outer_rounds: 0,
            phase_steps_hp: 0,
            phase_steps_g: 0,
            seed: 8,
        };
        let trace = train_alternating(&mut model, &ds_x, &ds_y, &f, &cfg).unwrap();
        assert_eq!(trace.phases.len(), 1);
        assert_eq!(trace.phases[0].kind, PhaseKind::ObservationMap);
        assert_ne!(model.digest_g(), g_before);
        assert!(model.identity_hp);
        // identity action maps stay identity
        let a = [0.3];
        assert_eq!(model.translate_action_to_y(&[0.0; 4], &a).unwrap(), a.to_vec());
    }
}

/// Runs the alternating schedule on `model`. The forward model must be
/// frozen; datasets are sampled independently so no index alignment can leak
/// across domains.
pub fn train_alternating(
    model: &mut AlignmentModel,
    dataset_x: &TrajectoryDataset,
    dataset_y: &TrajectoryDataset,
    f: &ForwardModel,
    cfg: &TrainConfig,
) -> Result<TrainTrace> {
    cfg.validate()?;
    if !f.frozen() {
        return Err(Error::NotFrozen);
    }
    if dataset_x.obs_dim != model.dims.obs_x || dataset_x.action_dim != model.dims.act_x {
        return Err(Error::DimMismatch {
            context: "train_alternating dataset X dims",
            expected: model.dims.obs_x,
            actual: dataset_x.obs_dim,
        });
    }
    if dataset_y.obs_dim != model.dims.obs_y || dataset_y.action_dim != model.dims.act_y {
        return Err(Error::DimMismatch {
            context: "train_alternating dataset Y dims",
            expected: model.dims.obs_y,
            actual: dataset_y.obs_dim,
        });
    }
    if f.obs_dim() != model.dims.obs_y || f.act_dim() != model.dims.act_y {
        return Err(Error::DimMismatch {
            context: "train_alternating forward-model dims",
            expected: model.dims.obs_y,
            actual: f.obs_dim(),
        });
    }
    match cfg.mode {
        AlignMode::CrossPhysics if !model.identity_g || model.h.is_none() => {
            return Err(Error::InvalidSpec(
                "cross_physics training needs an identity-G model with action maps".into(),
            ))
        }
        AlignMode::CrossModality if !model.identity_hp || model.g.is_none() => {
            return Err(Error::InvalidSpec(
                "cross_modality training needs an identity-HP model with G".into(),
            ))
        }
        AlignMode::Joint if model.g.is_none() || model.h.is_none() => {
            return Err(Error::InvalidSpec(
                "joint training needs G, H, and P networks".into(),
            ))
        }
        _ => {}
    }

    let batch = cfg.batch;
    let mut trainer = Trainer {
        dataset_x,
        dataset_y,
        batcher_x: Batcher::new(dataset_x.len(), batch, rng::derive(cfg.seed, rng::stream::BATCH_X))?,
        batcher_y: Batcher::new(dataset_y.len(), batch, rng::derive(cfg.seed, rng::stream::BATCH_Y))?,
        adam_g: model.g.as_ref().map(AdamState::new),
        adam_h: model.h.as_ref().map(AdamState::new),
        adam_p: model.p.as_ref().map(AdamState::new),
        adam_dy: model.d_y.as_ref().map(AdamState::new),
        adam_du: model.d_u.as_ref().map(AdamState::new),
        adam_da: model.d_a.as_ref().map(AdamState::new),
        step_index: 0,
    };

    let mut trace = TrainTrace::default();
    match cfg.mode {
        AlignMode::CrossPhysics | AlignMode::CrossModality => {
            let kind = if cfg.mode == AlignMode::CrossPhysics {
                PhaseKind::ActionMaps
            } else {
                PhaseKind::ObservationMap
            };
            let steps_per_epoch = (dataset_x.len() / batch).max(1);
            let mut phase = begin_phase(model, kind, 0);
            for epoch in 0..cfg.epochs {
                let lr = cfg.lr * (1.0 / 3.0f64).powi((epoch / 10) as i32);
                for _ in 0..steps_per_epoch {
                    let step = match kind {
                        PhaseKind::ActionMaps => trainer.step_action_maps(
                            model,
                            f,
                            Lambdas {
                                l0: cfg.lambda0,
                                l1: cfg.lambda1,
                                l2: 0.0,
                            },
                            lr,
                        )?,
                        PhaseKind::ObservationMap => trainer.step_observation_map(
                            model,
                            f,
                            Lambdas {
                                l0: cfg.lambda0,
                                l1: 0.0,
                                l2: cfg.lambda2,
                            },
                            lr,
                        )?,
                    };
                    phase.steps.push(step);
                    trace.mapped_steps += 1;
                }
            }
            finish_phase(model, &mut phase);
            trace.phases.push(phase);
        }
        AlignMode::Joint => {
            for round in 0..cfg.outer_rounds {
                let lr = cfg.lr * (1.0 / 3.0f64).powi((round / 10) as i32);

                // phase A: restore lambda1, zero lambda2, G fixed
                let mut phase = begin_phase(model, PhaseKind::ActionMaps, round);
                for _ in 0..cfg.phase_steps_hp {
                    let step = trainer.step_action_maps(
                        model,
                        f,
                        Lambdas {
                            l0: cfg.lambda0,
                            l1: cfg.lambda1,
                            l2: 0.0,
                        },
                        lr,
                    )?;
                    phase.steps.push(step);
                    trace.mapped_steps += 1;
                }
                finish_phase(model, &mut phase);
                trace.phases.push(phase);

                // phase B: restore lambda2, zero lambda1, H and P fixed
                let mut phase = begin_phase(model, PhaseKind::ObservationMap, round);
                for _ in 0..cfg.phase_steps_g {
                    let step = trainer.step_observation_map(
                        model,
                        f,
                        Lambdas {
                            l0: cfg.lambda0,
                            l1: 0.0,
                            l2: cfg.lambda2,
                        },
                        lr,
                    )?;
                    phase.steps.push(step);
                    trace.mapped_steps += 1;
                }
                finish_phase(model, &mut phase);
                trace.phases.push(phase);
            }
        }
    }
    Ok(trace)
}

fn begin_phase(model: &AlignmentModel, kind: PhaseKind, round: usize) -> PhaseTrace {
    PhaseTrace {
        kind,
        round,
        steps: Vec::new(),
        g_digest_before: model.digest_g(),
        g_digest_after: [0; 32],
        hp_digest_before: model.digest_hp(),
        hp_digest_after: [0; 32],
    }
}

fn finish_phase(model: &AlignmentModel, phase: &mut PhaseTrace) {
    phase.g_digest_after = model.digest_g();
    phase.hp_digest_after = model.digest_hp();
}
