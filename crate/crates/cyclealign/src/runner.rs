//! Experiment driver behind the CLI: stage commands, run manifest, and
//! report emission. Every stage writes its own artifacts into the run
//! directory and never mutates inputs, so re-running a stage with the same
//! config reproduces the same bytes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::align::{
    load_alignment, save_alignment, train_alternating, AlignmentModel, Dims, PhaseTrace,
    TrainTrace,
};
use crate::bytes::write_atomic;
use crate::config::RunConfig;
use crate::data::{self, TrajectoryDataset};
use crate::envs::{Env, Family, JointCorrespondence, State};
use crate::error::{Error, Result};
use crate::forward::{load_forward, save_forward, train_forward};
use crate::plot;
use crate::transfer;

pub const DATASET_X: &str = "dataset_x.cyds";
pub const DATASET_Y: &str = "dataset_y.cyds";
pub const FORWARD_CKPT: &str = "forward.cyfm";
pub const ALIGN_CKPT: &str = "align.cyam";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";
pub const MANIFEST: &str = "manifest.json";

/// Exit code classification per the CLI contract.
pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::MissingPrerequisite(_) => 2,
        Error::NonFinite { .. } => 3,
        _ => 1,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct StageRecord {
    pub seconds: f64,
    pub artifacts: BTreeMap<String, String>,
}

/// Run provenance: config snapshot, tool version, per-stage timings and
/// artifact digests. Written atomically at stage boundaries.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct RunManifest {
    pub tool_version: String,
    pub config: String,
    pub stages: BTreeMap<String, StageRecord>,
}

impl RunManifest {
    fn load_or_default(dir: &Path) -> Self {
        let path = dir.join(MANIFEST);
        fs::read_to_string(&path)
            .ok()
            .and_then(|t| serde_json::from_str(&t).ok())
            .unwrap_or_default()
    }

    fn record_stage(
        dir: &Path,
        cfg: &RunConfig,
        stage: &str,
        started: Instant,
        artifacts: &[PathBuf],
    ) -> Result<()> {
        let mut manifest = Self::load_or_default(dir);
        manifest.tool_version = env!("CARGO_PKG_VERSION").to_string();
        manifest.config = cfg.to_config_string();
        let mut record = StageRecord {
            seconds: started.elapsed().as_secs_f64(),
            ..Default::default()
        };
        for path in artifacts {
            let bytes = fs::read(path)?;
            let mut h = Sha256::new();
            h.update(&bytes);
            let digest: [u8; 32] = h.finalize().into();
            let rel = path
                .strip_prefix(dir)
                .unwrap_or(path)
                .display()
                .to_string();
            record.artifacts.insert(rel, crate::nn::hex(&digest));
        }
        manifest.stages.insert(stage.to_string(), record);
        write_atomic(&dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)?.as_bytes())
    }
}

fn require(path: &Path) -> Result<()> {
    if !path.exists() {
        return Err(Error::MissingPrerequisite(path.to_path_buf()));
    }
    Ok(())
}

fn load_dataset_checked(path: &Path, env: &Env) -> Result<TrajectoryDataset> {
    require(path)?;
    let ds = data::load(path)?;
    if ds.spec_digest != env.spec().digest() {
        return Err(Error::InvalidSpec(format!(
            "{} was collected under a different env spec than the config describes",
            path.display()
        )));
    }
    Ok(ds)
}

/// Joint correspondence for chain-morphology pairs: shared joints map by
/// index, novel X joints map to Y's tail joint.
fn derive_correspondence(cfg: &RunConfig) -> Result<Option<JointCorrespondence>> {
    if cfg.env_x.action_dim == cfg.env_y.action_dim {
        return Ok(None);
    }
    if cfg.env_x.family == Family::ChainMass
        && cfg.env_y.family == Family::ChainMass
        && cfg.env_x.num_links > cfg.env_y.num_links
    {
        let ky = cfg.env_y.num_links;
        return Ok(Some(JointCorrespondence(
            (0..cfg.env_x.num_links)
                .map(|i| if i < ky { i } else { ky - 1 })
                .collect(),
        )));
    }
    Err(Error::InvalidSpec(
        "action dimensions differ but no joint correspondence can be derived".into(),
    ))
}

pub fn cmd_collect(cfg: &RunConfig) -> Result<()> {
    let started = Instant::now();
    let env_x = Env::new(cfg.env_x.clone())?;
    let env_y = Env::new(cfg.env_y.clone())?;
    if cfg.data.seed_x == cfg.data.seed_y {
        return Err(Error::InvalidSpec(
            "domain datasets must carry different seeds (data.seed_x != data.seed_y)".into(),
        ));
    }
    let ds_x = data::collect(
        &env_x,
        cfg.data.mode,
        cfg.data.episodes,
        cfg.data.horizon,
        cfg.data.seed_x,
    )?;
    let ds_y = data::collect(
        &env_y,
        cfg.data.mode,
        cfg.data.episodes,
        cfg.data.horizon,
        cfg.data.seed_y,
    )?;
    let px = cfg.out_dir.join(DATASET_X);
    let py = cfg.out_dir.join(DATASET_Y);
    data::save(&ds_x, &px)?;
    data::save(&ds_y, &py)?;
    RunManifest::record_stage(&cfg.out_dir, cfg, "collect", started, &[px, py])
}

pub fn cmd_train_forward(cfg: &RunConfig) -> Result<()> {
    let started = Instant::now();
    let env_y = Env::new(cfg.env_y.clone())?;
    let ds_y = load_dataset_checked(&cfg.out_dir.join(DATASET_Y), &env_y)?;
    let (model, trace) = train_forward(&ds_y, &cfg.forward)?;
    let ckpt = cfg.out_dir.join(FORWARD_CKPT);
    save_forward(&model, &ckpt)?;
    let mut csv = String::from("epoch,loss\n");
    for (epoch, loss) in trace.iter().enumerate() {
        csv.push_str(&format!("{epoch},{loss}\n"));
    }
    let csv_path = cfg.out_dir.join("losses").join("forward_loss.csv");
    write_atomic(&csv_path, csv.as_bytes())?;
    RunManifest::record_stage(&cfg.out_dir, cfg, "train_forward", started, &[ckpt, csv_path])
}

fn phase_csv(phase: &PhaseTrace) -> String {
    let mut csv = String::from(
        "step,total,dyn_cyc,adv_h,adv_p,dom_cyc,adv_g,disc_u,disc_a,disc_y\n",
    );
    let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for (i, s) in phase.steps.iter().enumerate() {
        csv.push_str(&format!(
            "{i},{},{},{},{},{},{},{},{},{}\n",
            s.total,
            cell(s.dyn_cyc),
            cell(s.adv_h),
            cell(s.adv_p),
            cell(s.dom_cyc),
            cell(s.adv_g),
            cell(s.disc_u),
            cell(s.disc_a),
            cell(s.disc_y),
        ));
    }
    csv
}

fn write_phase_csvs(out_dir: &Path, trace: &TrainTrace) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for (i, phase) in trace.phases.iter().enumerate() {
        let path = out_dir
            .join("losses")
            .join(format!("align_phase{:02}_{}.csv", i, phase.kind.name()));
        write_atomic(&path, phase_csv(phase).as_bytes())?;
        paths.push(path);
    }
    Ok(paths)
}

pub fn cmd_train_align(cfg: &RunConfig) -> Result<()> {
    let started = Instant::now();
    let env_x = Env::new(cfg.env_x.clone())?;
    let env_y = Env::new(cfg.env_y.clone())?;
    let ds_x = load_dataset_checked(&cfg.out_dir.join(DATASET_X), &env_x)?;
    let ds_y = load_dataset_checked(&cfg.out_dir.join(DATASET_Y), &env_y)?;
    let fwd_path = cfg.out_dir.join(FORWARD_CKPT);
    require(&fwd_path)?;
    let forward = load_forward(&fwd_path)?;

    let correspondence = derive_correspondence(cfg)?;
    let dims = Dims {
        obs_x: ds_x.obs_dim,
        obs_y: ds_y.obs_dim,
        act_x: ds_x.action_dim,
        act_y: ds_y.action_dim,
    };
    let mut model =
        AlignmentModel::new(dims, cfg.align.mode, correspondence.as_ref(), cfg.align.seed)?;
    let trace = train_alternating(&mut model, &ds_x, &ds_y, &forward, &cfg.align)?;

    let ckpt = cfg.out_dir.join(ALIGN_CKPT);
    save_alignment(&model, &cfg.align, &ckpt)?;
    let mut artifacts = write_phase_csvs(&cfg.out_dir, &trace)?;
    artifacts.push(ckpt);
    RunManifest::record_stage(&cfg.out_dir, cfg, "train_align", started, &artifacts)
}

fn paired_eval_if_applicable(
    cfg: &RunConfig,
    env_x: &Env,
    env_y: &Env,
) -> Result<Option<crate::data::PairedEvalSet>> {
    if cfg.eval.paired_count == 0
        || cfg.env_x.family != cfg.env_y.family
        || cfg.env_x.state_dim != cfg.env_y.state_dim
    {
        return Ok(None);
    }
    Ok(Some(data::build_paired_eval(
        env_x,
        env_y,
        cfg.eval.paired_count,
        cfg.eval.paired_seed,
    )?))
}

pub fn cmd_eval(cfg: &RunConfig) -> Result<()> {
    let started = Instant::now();
    let env_x = Env::new(cfg.env_x.clone())?;
    let env_y = Env::new(cfg.env_y.clone())?;
    let ckpt = cfg.out_dir.join(ALIGN_CKPT);
    require(&ckpt)?;
    let (model, _train_cfg) = load_alignment(&ckpt)?;

    let policy = |obs: &[f64]| env_y.reference_policy(&State(obs.to_vec())).0;
    let mut report = transfer::evaluate_transfer(&env_x, &env_y, &model, &policy, &cfg.eval)?;

    let mut artifacts = Vec::new();
    if !model.identity_g {
        if let Some(paired) = paired_eval_if_applicable(cfg, &env_x, &env_y)? {
            let l1 = transfer::evaluate_state_estimation(&model, &paired)?;
            report.state_estimation_l1 = Some(l1);
            let csv = format!("pairs,l1\n{},{}\n", paired.len(), l1);
            let path = cfg.out_dir.join("metrics").join("state_estimation.csv");
            write_atomic(&path, csv.as_bytes())?;
            artifacts.push(path);
        }
    }

    if !cfg.scale_sweep.is_empty() {
        if let Some(path) = scale_sweep(cfg, &env_x, &env_y)? {
            artifacts.push(path);
        }
    }

    let json_path = cfg.out_dir.join(REPORT_JSON);
    let csv_path = cfg.out_dir.join(REPORT_CSV);
    write_atomic(&json_path, report.to_json()?.as_bytes())?;
    write_atomic(&csv_path, report.to_csv().as_bytes())?;
    artifacts.push(json_path);
    artifacts.push(csv_path);
    RunManifest::record_stage(&cfg.out_dir, cfg, "eval", started, &artifacts)
}

/// Retrains the alignment at several training-set sizes and records the
/// state-estimation error per size.
fn scale_sweep(cfg: &RunConfig, env_x: &Env, env_y: &Env) -> Result<Option<PathBuf>> {
    let Some(paired) = paired_eval_if_applicable(cfg, env_x, env_y)? else {
        eprintln!("warning: scale sweep needs a paired evaluation setting, skipping");
        return Ok(None);
    };
    let ds_x = load_dataset_checked(&cfg.out_dir.join(DATASET_X), env_x)?;
    let ds_y = load_dataset_checked(&cfg.out_dir.join(DATASET_Y), env_y)?;
    let forward = load_forward(&cfg.out_dir.join(FORWARD_CKPT))?;
    let correspondence = derive_correspondence(cfg)?;

    let mut csv = String::from("train_triples,l1\n");
    for &scale in &cfg.scale_sweep {
        let sub_x = ds_x.truncated(scale);
        let sub_y = ds_y.truncated(scale);
        let dims = Dims {
            obs_x: sub_x.obs_dim,
            obs_y: sub_y.obs_dim,
            act_x: sub_x.action_dim,
            act_y: sub_y.action_dim,
        };
        let mut model =
            AlignmentModel::new(dims, cfg.align.mode, correspondence.as_ref(), cfg.align.seed)?;
        train_alternating(&mut model, &sub_x, &sub_y, &forward, &cfg.align)?;
        let l1 = transfer::evaluate_state_estimation(&model, &paired)?;
        csv.push_str(&format!("{scale},{l1}\n"));
    }
    let path = cfg.out_dir.join("metrics").join("l1_vs_scale.csv");
    write_atomic(&path, csv.as_bytes())?;
    Ok(Some(path))
}

pub fn cmd_report(cfg: &RunConfig) -> Result<()> {
    let started = Instant::now();
    let report_path = cfg.out_dir.join(REPORT_JSON);
    require(&report_path)?;
    let report: transfer::TransferReport =
        serde_json::from_str(&fs::read_to_string(&report_path)?)?;

    let mut summary_txt = String::new();
    let mut summary_csv = String::from("condition,mean,std\n");
    summary_txt.push_str(&format!(
        "transfer evaluation: {} seeds x {} episodes, horizon {}\n\n",
        report.seeds.len(),
        report.episodes_per_seed,
        report.horizon
    ));
    summary_txt.push_str(&format!(
        "{:<14} {:>12} {:>12}\n",
        "condition", "mean", "std"
    ));
    for (name, values) in [
        ("oracle_y", &report.oracle_y),
        ("oracle_x", &report.oracle_x),
        ("transferred", &report.transferred),
        ("direct", &report.direct),
        ("random", &report.random),
    ] {
        let mean = transfer::TransferReport::mean(values);
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / values.len() as f64;
        let std = var.sqrt();
        summary_txt.push_str(&format!("{name:<14} {mean:>12.4} {std:>12.4}\n"));
        summary_csv.push_str(&format!("{name},{mean},{std}\n"));
    }
    if let Some(l1) = report.state_estimation_l1 {
        summary_txt.push_str(&format!("\nstate-estimation L1: {l1:.6}\n"));
        summary_csv.push_str(&format!("state_estimation_l1,{l1},0\n"));
    }
    let txt_path = cfg.out_dir.join("summary.txt");
    let scsv_path = cfg.out_dir.join("summary.csv");
    write_atomic(&txt_path, summary_txt.as_bytes())?;
    write_atomic(&scsv_path, summary_csv.as_bytes())?;
    let mut artifacts = vec![txt_path, scsv_path];

    // one SVG per recorded trace CSV
    for sub in ["losses", "metrics"] {
        let dir = cfg.out_dir.join(sub);
        if !dir.exists() {
            continue;
        }
        let mut entries: Vec<PathBuf> = fs::read_dir(&dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "csv"))
            .collect();
        entries.sort();
        for csv_path in entries {
            let stem = csv_path.file_stem().unwrap().to_string_lossy().to_string();
            let svg_path = cfg.out_dir.join("plots").join(format!("{stem}.svg"));
            if plot::plot_csv_file(&csv_path, &svg_path, &stem)? {
                artifacts.push(svg_path);
            }
        }
    }
    RunManifest::record_stage(&cfg.out_dir, cfg, "report", started, &artifacts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_map_per_contract() {
        assert_eq!(
            exit_code_for(&Error::MissingPrerequisite(PathBuf::from("x"))),
            2
        );
        assert_eq!(
            exit_code_for(&Error::NonFinite {
                what: "loss",
                step: 3
            }),
            3
        );
        assert_eq!(exit_code_for(&Error::InvalidSpec("bad".into())), 1);
    }
}
