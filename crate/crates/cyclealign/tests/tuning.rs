//! Temporary calibration harness. Run with:
//!   cargo test -p cyclealign --test tuning -- --ignored --nocapture

use cyclealign::align::{AlignMode, TrainConfig};
use cyclealign::data::{build_paired_eval, collect, CollectionMode};
use cyclealign::envs::{Env, EnvSpec, Modality};
use cyclealign::forward::{eval_forward, train_forward, ForwardTrainConfig};
use cyclealign::transfer::{
    evaluate_state_estimation_scaled, run_baseline, run_method, state_std, BaselineKind,
    EvalParams, TaskSetup,
};

fn linear_envs(sys_seed: u64, enc_seed: u64) -> (Env, Env) {
    let spec_y = EnvSpec::linear_system(4, 2, sys_seed);
    let spec_x = spec_y.clone().with_modality(Modality::Scrambled, enc_seed);
    (Env::new(spec_x).unwrap(), Env::new(spec_y).unwrap())
}

#[test]
#[ignore]
fn tune_forward_model() {
    let (_, env_y) = linear_envs(0, 11);
    for (eps, epochs) in [(400, 10), (1000, 20)] {
        let t0 = std::time::Instant::now();
        let ds = collect(&env_y, CollectionMode::Random, eps, 50, 2).unwrap();
        let held = collect(&env_y, CollectionMode::Random, 40, 50, 77).unwrap();
        let (f, trace) = train_forward(
            &ds,
            &ForwardTrainConfig {
                epochs,
                ..Default::default()
            },
        )
        .unwrap();
        let err = eval_forward(&f, &held).unwrap();
        println!(
            "forward: {} triples, {epochs} epochs -> heldout L1 {err:.5} (last epoch {:.5}) in {:?}",
            ds.len(),
            trace.last().unwrap(),
            t0.elapsed()
        );
    }
}

#[test]
#[ignore]
fn tune_cross_modality_linear() {
    for seed in [0u64, 1, 2] {
        let (env_x, env_y) = linear_envs(0, 11);
        let paired = build_paired_eval(&env_x, &env_y, 1000, 5000).unwrap();
        let scale = state_std(&paired);
        for epochs in [16usize] {
            let t0 = std::time::Instant::now();
            let setup = TaskSetup {
                env_x: &env_x,
                env_y: &env_y,
                data_mode: CollectionMode::Random,
                episodes: 400,
                horizon: 50,
                seed_x: 100 + seed,
                seed_y: 200 + seed,
                forward_cfg: ForwardTrainConfig {
                    epochs: 15,
                    seed,
                    ..Default::default()
                },
                align_cfg: TrainConfig {
                    mode: AlignMode::CrossModality,
                    lambda0: 200.0,
                    lambda1: 0.0,
                    lambda2: 3.0,
                    lr: 1e-3,
                    batch: 32,
                    epochs,
                    outer_rounds: 0,
                    phase_steps_hp: 0,
                    phase_steps_g: 0,
                    seed,
                },
                correspondence: None,
                eval: EvalParams {
                    episodes: 1,
                    horizon: 5,
                    seeds: vec![0],
                    paired_count: 0,
                    paired_seed: 0,
                },
            };
            let outcome = run_method(&setup).unwrap();
            let l1 =
                evaluate_state_estimation_scaled(&outcome.model, &paired, Some(&scale)).unwrap();
            println!(
                "cross-modality seed {seed} epochs {epochs}: standardized L1 {l1:.4} in {:?}",
                t0.elapsed()
            );
        }
        // adversarial-only baseline at the larger budget
        let t0 = std::time::Instant::now();
        let setup = TaskSetup {
            env_x: &env_x,
            env_y: &env_y,
            data_mode: CollectionMode::Random,
            episodes: 400,
            horizon: 50,
            seed_x: 100 + seed,
            seed_y: 200 + seed,
            forward_cfg: ForwardTrainConfig {
                epochs: 10,
                seed,
                ..Default::default()
            },
            align_cfg: TrainConfig {
                mode: AlignMode::CrossModality,
                lambda0: 200.0,
                lambda1: 0.0,
                lambda2: 3.0,
                lr: 1e-3,
                batch: 32,
                epochs: 8,
                outer_rounds: 0,
                phase_steps_hp: 0,
                phase_steps_g: 0,
                seed,
            },
            correspondence: None,
            eval: EvalParams {
                episodes: 1,
                horizon: 5,
                seeds: vec![0],
                paired_count: 1000,
                paired_seed: 5000,
            },
        };
        let report = run_baseline(BaselineKind::CycleganStyle, &setup).unwrap();
        println!(
            "cyclegan_style seed {seed}: raw L1 {:?} in {:?}",
            report.state_estimation_l1,
            t0.elapsed()
        );
    }
}

#[test]
#[ignore]
fn tune_cross_physics_pointmass() {
    let spec_y = EnvSpec::point_mass(1, 1.0, 0.1);
    let spec_x = EnvSpec::point_mass(1, 3.0, 0.1);
    let env_x = Env::new(spec_x).unwrap();
    let env_y = Env::new(spec_y).unwrap();
    for seed in [0u64, 1, 2, 3, 4] {
        let t0 = std::time::Instant::now();
        let setup = TaskSetup {
            env_x: &env_x,
            env_y: &env_y,
            data_mode: CollectionMode::NoisyReference,
            episodes: 400,
            horizon: 50,
            seed_x: 100 + seed,
            seed_y: 200 + seed,
            forward_cfg: ForwardTrainConfig {
                epochs: 10,
                seed,
                ..Default::default()
            },
            align_cfg: TrainConfig {
                mode: AlignMode::CrossPhysics,
                lambda0: 200.0,
                lambda1: 1.0,
                lambda2: 0.0,
                lr: 1e-3,
                batch: 32,
                epochs: 8,
                outer_rounds: 0,
                phase_steps_hp: 0,
                phase_steps_g: 0,
                seed,
            },
            correspondence: None,
            eval: EvalParams {
                episodes: 20,
                horizon: 100,
                seeds: vec![1000 + seed],
                paired_count: 0,
                paired_seed: 0,
            },
        };
        let outcome = run_method(&setup).unwrap();
        let r = &outcome.report;
        println!(
            "cross-physics seed {seed}: transferred {:.3} direct {:.3} oracle_x {:.3} oracle_y {:.3} random {:.3} in {:?}",
            r.transferred_mean(),
            r.direct_mean(),
            cyclealign::transfer::TransferReport::mean(&r.oracle_x),
            cyclealign::transfer::TransferReport::mean(&r.oracle_y),
            cyclealign::transfer::TransferReport::mean(&r.random),
            t0.elapsed()
        );
    }
}

#[test]
#[ignore]
fn tune_cross_morphology_chain() {
    let base = EnvSpec::chain_mass(3, 1.0, 0.2);
    let (spec_x, spec_y, corr) = cyclealign::envs::make_morphology_pair(&base, 1).unwrap();
    let env_x = Env::new(spec_x).unwrap();
    let env_y = Env::new(spec_y).unwrap();
    let lr: f64 = std::env::var("TUNE_LR").map(|v| v.parse().unwrap()).unwrap_or(1e-4);
    let rounds: usize = std::env::var("TUNE_ROUNDS").map(|v| v.parse().unwrap()).unwrap_or(3);
    let e1: usize = std::env::var("TUNE_E1").map(|v| v.parse().unwrap()).unwrap_or(800);
    let e2: usize = std::env::var("TUNE_E2").map(|v| v.parse().unwrap()).unwrap_or(800);
    for seed in [0u64, 1, 2] {
        let t0 = std::time::Instant::now();
        let setup = TaskSetup {
            env_x: &env_x,
            env_y: &env_y,
            data_mode: CollectionMode::NoisyReference,
            episodes: 400,
            horizon: 50,
            seed_x: 100 + seed,
            seed_y: 200 + seed,
            forward_cfg: ForwardTrainConfig {
                epochs: 15,
                seed,
                ..Default::default()
            },
            align_cfg: TrainConfig {
                mode: AlignMode::Joint,
                lambda0: 200.0,
                lambda1: 1.0,
                lambda2: std::env::var("TUNE_L2").map(|v| v.parse().unwrap()).unwrap_or(3.0),
                lr,
                batch: 32,
                epochs: 0,
                outer_rounds: rounds,
                phase_steps_hp: e1,
                phase_steps_g: e2,
                seed,
            },
            correspondence: Some(corr.clone()),
            eval: EvalParams {
                episodes: 20,
                horizon: 100,
                seeds: vec![1000 + seed],
                paired_count: 0,
                paired_seed: 0,
            },
        };
        let outcome = run_method(&setup).unwrap();
        let ours = outcome.report.transferred_mean();
        let last_dyn = outcome
            .trace
            .phases
            .iter()
            .rev()
            .find(|p| p.kind == cyclealign::align::PhaseKind::ObservationMap)
            .and_then(|p| p.steps.last())
            .and_then(|s| s.dyn_cyc)
            .unwrap_or(f64::NAN);
        println!("  final weighted dyn_cyc (phase B): {last_dyn:.4}");
        let init_only = run_baseline(BaselineKind::InitOnly, &setup)
            .unwrap()
            .transferred_mean();
        let cyclegan = run_baseline(BaselineKind::CycleganStyle, &setup)
            .unwrap()
            .transferred_mean();
        println!(
            "morphology seed {seed}: ours {ours:.3} init_only {init_only:.3} cyclegan {cyclegan:.3} direct {:.3} oracle_x {:.3} in {:?}",
            outcome.report.direct_mean(),
            cyclealign::transfer::TransferReport::mean(&outcome.report.oracle_x),
            t0.elapsed()
        );
    }
}

#[test]
#[ignore]
fn probe_truncation_g_ceiling() {
    use cyclealign::align::{dynamics_cycle_loss, exact_linear_network, AlignmentModel, Dims};
    use cyclealign::nn::Matrix;

    let base = EnvSpec::chain_mass(3, 1.0, 0.2);
    let (spec_x, spec_y, corr) = cyclealign::envs::make_morphology_pair(&base, 1).unwrap();
    let env_x = Env::new(spec_x).unwrap();
    let env_y = Env::new(spec_y).unwrap();
    let ds_x = collect(&env_x, CollectionMode::Random, 400, 50, 100).unwrap();
    let ds_y = collect(&env_y, CollectionMode::Random, 400, 50, 200).unwrap();
    let (f, _) = train_forward(
        &ds_y,
        &ForwardTrainConfig {
            epochs: 15,
            ..Default::default()
        },
    )
    .unwrap();

    // truncation map: (p1..p4, v1..v4) -> (p1..p3, v1..v3)
    let mut t = Matrix::zeros(6, 8);
    for i in 0..3 {
        t.set(i, i, 1.0);
        t.set(3 + i, 4 + i, 1.0);
    }
    let dims = Dims {
        obs_x: 8,
        obs_y: 6,
        act_x: 4,
        act_y: 3,
    };
    let mut model = AlignmentModel::new(dims, AlignMode::Joint, Some(&corr), 0).unwrap();
    let g_spec = model.g().unwrap().spec.clone();
    model.set_g_for_tests(exact_linear_network(g_spec, &t, 0, 7).unwrap());

    let batch: Vec<_> = ds_x.triples.iter().take(512).collect();
    let dyn_loss = dynamics_cycle_loss(&model, &f, &batch).unwrap();
    println!("truncation-G dynamics-cycle loss: {dyn_loss:.4}");

    let eval = EvalParams {
        episodes: 20,
        horizon: 100,
        seeds: vec![1000],
        paired_count: 0,
        paired_seed: 0,
    };
    let policy = |obs: &[f64]| env_y.reference_policy(&cyclealign::envs::State(obs.to_vec())).0;
    let report =
        cyclealign::transfer::evaluate_transfer(&env_x, &env_y, &model, &policy, &eval).unwrap();
    println!(
        "truncation-G transfer: {:.3} (direct {:.3}, oracle_x {:.3})",
        report.transferred_mean(),
        report.direct_mean(),
        cyclealign::transfer::TransferReport::mean(&report.oracle_x)
    );
}
