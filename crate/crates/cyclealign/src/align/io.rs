//! Alignment checkpoint: identity flags, dimensions, the training config
//! used, and one parameter block per present network keyed by role.

use std::fs;
use std::path::Path;

use super::{AlignMode, AlignmentModel, Dims, TrainConfig};
use crate::bytes::{write_atomic, Reader, Writer};
use crate::error::{Error, Result};
use crate::nn::{read_params_block, write_params_block, MlpParams};

pub const ALIGN_MAGIC: &[u8; 4] = b"CYAM";
pub const ALIGN_VERSION: u32 = 1;

const ROLES: [&str; 6] = ["G", "H", "P", "DY", "DU", "DA"];

fn nets_of(model: &AlignmentModel) -> [&Option<MlpParams>; 6] {
    [
        &model.g, &model.h, &model.p, &model.d_y, &model.d_u, &model.d_a,
    ]
}

pub fn save_alignment(model: &AlignmentModel, cfg: &TrainConfig, path: &Path) -> Result<()> {
    let mut w = Writer::new();
    w.magic(ALIGN_MAGIC);
    w.u32(ALIGN_VERSION);
    w.u8(model.identity_g as u8);
    w.u8(model.identity_hp as u8);
    for d in [
        model.dims.obs_x,
        model.dims.obs_y,
        model.dims.act_x,
        model.dims.act_y,
    ] {
        w.u32(d as u32);
    }
    w.u8(cfg.mode.code());
    w.f64(cfg.lambda0);
    w.f64(cfg.lambda1);
    w.f64(cfg.lambda2);
    w.f64(cfg.lr);
    w.u32(cfg.batch as u32);
    w.u32(cfg.epochs as u32);
    w.u32(cfg.outer_rounds as u32);
    w.u32(cfg.phase_steps_hp as u32);
    w.u32(cfg.phase_steps_g as u32);
    w.u64(cfg.seed);

    let nets = nets_of(model);
    let present = nets.iter().filter(|n| n.is_some()).count();
    w.u8(present as u8);
    for (role, net) in nets.iter().enumerate() {
        if let Some(params) = net {
            w.u8(role as u8);
            write_params_block(&mut w, params);
        }
    }
    write_atomic(path, &w.into_bytes())
}

pub fn load_alignment(path: &Path) -> Result<(AlignmentModel, TrainConfig)> {
    let bytes = fs::read(path)?;
    let mut r = Reader::new(&bytes, &path.display().to_string());
    r.magic(ALIGN_MAGIC)?;
    r.version(ALIGN_VERSION)?;
    let identity_g = r.u8("identity_g")? != 0;
    let identity_hp = r.u8("identity_hp")? != 0;
    let dims = Dims {
        obs_x: r.u32("obs_x")? as usize,
        obs_y: r.u32("obs_y")? as usize,
        act_x: r.u32("act_x")? as usize,
        act_y: r.u32("act_y")? as usize,
    };
    let cfg = TrainConfig {
        mode: AlignMode::from_code(r.u8("mode")?)?,
        lambda0: r.f64("lambda0")?,
        lambda1: r.f64("lambda1")?,
        lambda2: r.f64("lambda2")?,
        lr: r.f64("lr")?,
        batch: r.u32("batch")? as usize,
        epochs: r.u32("epochs")? as usize,
        outer_rounds: r.u32("outer_rounds")? as usize,
        phase_steps_hp: r.u32("phase_steps_hp")? as usize,
        phase_steps_g: r.u32("phase_steps_g")? as usize,
        seed: r.u64("seed")?,
    };

    let present = r.u8("network count")? as usize;
    let mut nets: [Option<MlpParams>; 6] = Default::default();
    for _ in 0..present {
        let role = r.u8("network role")? as usize;
        if role >= ROLES.len() {
            return Err(Error::InvalidSpec(format!("unknown network role {role}")));
        }
        nets[role] = Some(read_params_block(&mut r)?);
    }
    r.done()?;
    let [g, h, p, d_y, d_u, d_a] = nets;
    Ok((
        AlignmentModel {
            dims,
            identity_g,
            identity_hp,
            g,
            h,
            p,
            d_y,
            d_u,
            d_a,
        },
        cfg,
    ))
}
