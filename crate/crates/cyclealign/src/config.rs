//! Run configuration: a strict line-oriented `section.key = value` format
//! with `#` comments, unknown-key rejection (with a nearest-key suggestion),
//! and `--set key=value` overrides applied after the file parse.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::align::{AlignMode, TrainConfig};
use crate::data::CollectionMode;
use crate::envs::{EnvSpec, Modality};
use crate::error::{Error, Result};
use crate::forward::ForwardTrainConfig;
use crate::transfer::EvalParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunScale {
    Full,
    Ci,
}

#[derive(Debug, Clone)]
pub struct DataConfig {
    pub mode: CollectionMode,
    pub episodes: usize,
    pub horizon: usize,
    pub seed_x: u64,
    pub seed_y: u64,
}

/// Fully resolved experiment configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub env_x: EnvSpec,
    pub env_y: EnvSpec,
    pub data: DataConfig,
    pub forward: ForwardTrainConfig,
    pub align: TrainConfig,
    pub eval: EvalParams,
    pub scale_sweep: Vec<usize>,
    pub out_dir: PathBuf,
    pub scale: RunScale,
}

const ENV_KEYS: [&str; 12] = [
    "family",
    "spatial_dims",
    "links",
    "state_dim",
    "action_dim",
    "linear_seed",
    "dt",
    "mass",
    "damping",
    "action_bound",
    "modality",
    "modality_seed",
];

const OTHER_KEYS: [&str; 26] = [
    "data.mode",
    "data.episodes",
    "data.horizon",
    "data.seed_x",
    "data.seed_y",
    "forward.epochs",
    "forward.lr",
    "forward.batch",
    "forward.seed",
    "align.mode",
    "align.lambda0",
    "align.lambda1",
    "align.lambda2",
    "align.lr",
    "align.batch",
    "align.epochs",
    "align.outer_rounds",
    "align.e1",
    "align.e2",
    "align.seed",
    "eval.episodes",
    "eval.horizon",
    "eval.seeds",
    "eval.paired_count",
    "eval.paired_seed",
    "eval.scale_sweep",
];

const RUN_KEYS: [&str; 2] = ["run.out_dir", "run.scale"];

fn known_keys() -> Vec<String> {
    let mut keys: Vec<String> = Vec::new();
    for side in ["X", "Y"] {
        for k in ENV_KEYS {
            keys.push(format!("env.{side}.{k}"));
        }
    }
    keys.extend(OTHER_KEYS.iter().map(|s| s.to_string()));
    keys.extend(RUN_KEYS.iter().map(|s| s.to_string()));
    keys
}

fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let cost = if ca == cb { 0 } else { 1 };
            cur[j + 1] = (prev[j] + cost).min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

fn suggest(key: &str) -> Option<String> {
    known_keys()
        .into_iter()
        .map(|k| (edit_distance(key, &k), k))
        .filter(|(d, _)| *d <= 3)
        .min_by_key(|(d, _)| *d)
        .map(|(_, k)| k)
}

struct RawEntry {
    value: String,
    origin: String,
    line: usize,
}

type RawMap = BTreeMap<String, RawEntry>;

fn parse_line(map: &mut RawMap, raw: &str, origin: &str, line_no: usize) -> Result<()> {
    let line = match raw.find('#') {
        Some(i) => &raw[..i],
        None => raw,
    };
    let line = line.trim();
    if line.is_empty() {
        return Ok(());
    }
    let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
        path: origin.to_string(),
        line: line_no,
        msg: format!("expected `section.key = value`, got '{line}'"),
    })?;
    let key = key.trim().to_string();
    let value = value.trim().to_string();
    if !known_keys().contains(&key) {
        let hint = suggest(&key)
            .map(|s| format!(" (did you mean '{s}'?)"))
            .unwrap_or_default();
        return Err(Error::Config {
            path: origin.to_string(),
            line: line_no,
            msg: format!("unknown key '{key}'{hint}"),
        });
    }
    map.insert(
        key,
        RawEntry {
            value,
            origin: origin.to_string(),
            line: line_no,
        },
    );
    Ok(())
}

struct Section<'a> {
    map: &'a RawMap,
}

impl<'a> Section<'a> {
    fn err(&self, entry: &RawEntry, msg: String) -> Error {
        Error::Config {
            path: entry.origin.clone(),
            line: entry.line,
            msg,
        }
    }

    fn str(&self, key: &str, default: &str) -> String {
        self.map
            .get(key)
            .map(|e| e.value.clone())
            .unwrap_or_else(|| default.to_string())
    }

    fn parse<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.map.get(key) {
            None => Ok(default),
            Some(e) => e.value.parse::<T>().map_err(|_| {
                self.err(
                    e,
                    format!(
                        "cannot parse '{}' as {} for key '{key}'",
                        e.value,
                        std::any::type_name::<T>()
                    ),
                )
            }),
        }
    }

    fn list_u64(&self, key: &str, default: Vec<u64>) -> Result<Vec<u64>> {
        match self.map.get(key) {
            None => Ok(default),
            Some(e) => {
                if e.value.trim().is_empty() {
                    return Ok(Vec::new());
                }
                e.value
                    .split(',')
                    .map(|s| {
                        s.trim()
                            .parse::<u64>()
                            .map_err(|_| self.err(e, format!("bad integer list for '{key}'")))
                    })
                    .collect()
            }
        }
    }
}

fn build_env(section: &Section, side: &str) -> Result<EnvSpec> {
    let k = |name: &str| format!("env.{side}.{name}");
    let family = section.str(&k("family"), "");
    if family.is_empty() {
        return Err(Error::Config {
            path: "<config>".into(),
            line: 0,
            msg: format!("missing required key 'env.{side}.family'"),
        });
    }
    let mass: f64 = section.parse(&k("mass"), 1.0)?;
    let damping: f64 = section.parse(&k("damping"), 0.1)?;
    let mut spec = match family.as_str() {
        "point_mass" => {
            let d: usize = section.parse(&k("spatial_dims"), 1)?;
            EnvSpec::point_mass(d, mass, damping)
        }
        "pendulum" => EnvSpec::pendulum(mass, damping),
        "linear_system" => {
            let n: usize = section.parse(&k("state_dim"), 4)?;
            let m: usize = section.parse(&k("action_dim"), 2)?;
            let seed: u64 = section.parse(&k("linear_seed"), 0)?;
            EnvSpec::linear_system(n, m, seed)
        }
        "chain_mass" => {
            let links: usize = section.parse(&k("links"), 3)?;
            let mut s = EnvSpec::chain_mass(links, mass, damping);
            s.mass = mass;
            s
        }
        other => {
            return Err(Error::Config {
                path: "<config>".into(),
                line: 0,
                msg: format!("unknown env family '{other}'"),
            })
        }
    };
    spec.dt = section.parse(&k("dt"), spec.dt)?;
    spec.action_bound = section.parse(&k("action_bound"), spec.action_bound)?;
    let modality = section.str(&k("modality"), "state");
    spec.modality = match modality.as_str() {
        "state" => Modality::State,
        "scrambled" => Modality::Scrambled,
        other => {
            return Err(Error::Config {
                path: "<config>".into(),
                line: 0,
                msg: format!("unknown modality '{other}'"),
            })
        }
    };
    spec.modality_seed = section.parse(&k("modality_seed"), 0)?;
    spec.validate()?;
    Ok(spec)
}

fn build_config(map: &RawMap) -> Result<RunConfig> {
    let s = Section { map };

    let env_x = build_env(&s, "X")?;
    let env_y = build_env(&s, "Y")?;

    let data = DataConfig {
        mode: match s.str("data.mode", "random").as_str() {
            "random" => CollectionMode::Random,
            "reference" => CollectionMode::Reference,
            "noisy_reference" => CollectionMode::NoisyReference,
            other => {
                return Err(Error::Config {
                    path: "<config>".into(),
                    line: 0,
                    msg: format!("unknown data.mode '{other}'"),
                })
            }
        },
        episodes: s.parse("data.episodes", 1000)?,
        horizon: s.parse("data.horizon", 50)?,
        seed_x: s.parse("data.seed_x", 1)?,
        seed_y: s.parse("data.seed_y", 2)?,
    };

    let forward = ForwardTrainConfig {
        epochs: s.parse("forward.epochs", 20)?,
        lr: s.parse("forward.lr", 0.001)?,
        batch: s.parse("forward.batch", 32)?,
        seed: s.parse("forward.seed", 0)?,
    };

    let mode = match s.str("align.mode", "").as_str() {
        "cross_physics" => AlignMode::CrossPhysics,
        "cross_modality" => AlignMode::CrossModality,
        "joint" => AlignMode::Joint,
        "" => {
            return Err(Error::Config {
                path: "<config>".into(),
                line: 0,
                msg: "missing required key 'align.mode'".into(),
            })
        }
        other => {
            return Err(Error::Config {
                path: "<config>".into(),
                line: 0,
                msg: format!("unknown align.mode '{other}'"),
            })
        }
    };
    let align = TrainConfig {
        mode,
        lambda0: s.parse("align.lambda0", 200.0)?,
        lambda1: s.parse("align.lambda1", 0.0)?,
        lambda2: s.parse("align.lambda2", 0.0)?,
        lr: s.parse("align.lr", 0.001)?,
        batch: s.parse("align.batch", 32)?,
        epochs: s.parse("align.epochs", 50)?,
        outer_rounds: s.parse("align.outer_rounds", 10)?,
        phase_steps_hp: s.parse("align.e1", 5000)?,
        phase_steps_g: s.parse("align.e2", 5000)?,
        seed: s.parse("align.seed", 0)?,
    };
    align.validate()?;

    let eval = EvalParams {
        episodes: s.parse("eval.episodes", 50)?,
        horizon: s.parse("eval.horizon", 100)?,
        seeds: s.list_u64("eval.seeds", vec![0, 1, 2, 3, 4])?,
        paired_count: s.parse("eval.paired_count", 1000)?,
        paired_seed: s.parse("eval.paired_seed", 9000)?,
    };
    let scale_sweep = s
        .list_u64("eval.scale_sweep", Vec::new())?
        .into_iter()
        .map(|v| v as usize)
        .collect();

    let out_dir = PathBuf::from(s.str("run.out_dir", "runs/default"));
    let scale = match s.str("run.scale", "full").as_str() {
        "full" => RunScale::Full,
        "ci" => RunScale::Ci,
        other => {
            return Err(Error::Config {
                path: "<config>".into(),
                line: 0,
                msg: format!("unknown run.scale '{other}' (full or ci)"),
            })
        }
    };

    let mut cfg = RunConfig {
        env_x,
        env_y,
        data,
        forward,
        align,
        eval,
        scale_sweep,
        out_dir,
        scale,
    };
    if cfg.scale == RunScale::Ci {
        apply_ci_scale(&mut cfg);
    }
    Ok(cfg)
}

/// Desk-scale shrink for fast runs: fewer episodes, shorter schedules,
/// smaller evaluation workload. Hyperparameters (loss weights, rates) are
/// untouched.
fn apply_ci_scale(cfg: &mut RunConfig) {
    cfg.data.episodes = cfg.data.episodes.min(100).max(1);
    cfg.forward.epochs = cfg.forward.epochs.min(5);
    cfg.align.epochs = cfg.align.epochs.min(3);
    cfg.align.outer_rounds = cfg.align.outer_rounds.min(2);
    cfg.align.phase_steps_hp = cfg.align.phase_steps_hp.min(200);
    cfg.align.phase_steps_g = cfg.align.phase_steps_g.min(200);
    cfg.eval.episodes = cfg.eval.episodes.min(10);
    cfg.eval.seeds.truncate(2);
    cfg.eval.paired_count = cfg.eval.paired_count.min(200);
}

/// Parses a config file, then applies `--set key=value` overrides in order.
pub fn parse_config(path: &Path, overrides: &[String]) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|_| {
        Error::MissingPrerequisite(path.to_path_buf())
    })?;
    let origin = path.display().to_string();
    let mut map = RawMap::new();
    for (i, line) in text.lines().enumerate() {
        parse_line(&mut map, line, &origin, i + 1)?;
    }
    for (i, ov) in overrides.iter().enumerate() {
        parse_line(&mut map, ov, &format!("--set[{}]", i + 1), 0)?;
    }
    build_config(&map)
}

/// Parses inline text (no file), mostly for tests.
pub fn parse_config_str(text: &str, overrides: &[String]) -> Result<RunConfig> {
    let mut map = RawMap::new();
    for (i, line) in text.lines().enumerate() {
        parse_line(&mut map, line, "<inline>", i + 1)?;
    }
    for (i, ov) in overrides.iter().enumerate() {
        parse_line(&mut map, ov, &format!("--set[{}]", i + 1), 0)?;
    }
    build_config(&map)
}

impl RunConfig {
    /// Canonical dump of the resolved configuration; the manifest's config
    /// snapshot.
    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        for (side, env) in [("X", &self.env_x), ("Y", &self.env_y)] {
            out.push_str(&format!("env.{side}.family = {}\n", env.family.name()));
            match env.family {
                crate::envs::Family::PointMass => {
                    out.push_str(&format!(
                        "env.{side}.spatial_dims = {}\n",
                        env.action_dim
                    ));
                }
                crate::envs::Family::ChainMass => {
                    out.push_str(&format!("env.{side}.links = {}\n", env.num_links));
                }
                crate::envs::Family::LinearSystem => {
                    out.push_str(&format!("env.{side}.state_dim = {}\n", env.state_dim));
                    out.push_str(&format!("env.{side}.action_dim = {}\n", env.action_dim));
                    out.push_str(&format!("env.{side}.linear_seed = {}\n", env.linear_seed));
                }
                crate::envs::Family::Pendulum => {}
            }
            out.push_str(&format!("env.{side}.dt = {}\n", env.dt));
            out.push_str(&format!("env.{side}.mass = {}\n", env.mass));
            out.push_str(&format!("env.{side}.damping = {}\n", env.damping));
            out.push_str(&format!("env.{side}.action_bound = {}\n", env.action_bound));
            let modality = match env.modality {
                Modality::State => "state",
                Modality::Scrambled => "scrambled",
            };
            out.push_str(&format!("env.{side}.modality = {modality}\n"));
            out.push_str(&format!("env.{side}.modality_seed = {}\n", env.modality_seed));
        }
        let mode = match self.data.mode {
            CollectionMode::Random => "random",
            CollectionMode::Reference => "reference",
            CollectionMode::NoisyReference => "noisy_reference",
        };
        out.push_str(&format!("data.mode = {mode}\n"));
        out.push_str(&format!("data.episodes = {}\n", self.data.episodes));
        out.push_str(&format!("data.horizon = {}\n", self.data.horizon));
        out.push_str(&format!("data.seed_x = {}\n", self.data.seed_x));
        out.push_str(&format!("data.seed_y = {}\n", self.data.seed_y));
        out.push_str(&format!("forward.epochs = {}\n", self.forward.epochs));
        out.push_str(&format!("forward.lr = {}\n", self.forward.lr));
        out.push_str(&format!("forward.batch = {}\n", self.forward.batch));
        out.push_str(&format!("forward.seed = {}\n", self.forward.seed));
        out.push_str(&format!("align.mode = {}\n", self.align.mode.name()));
        out.push_str(&format!("align.lambda0 = {}\n", self.align.lambda0));
        out.push_str(&format!("align.lambda1 = {}\n", self.align.lambda1));
        out.push_str(&format!("align.lambda2 = {}\n", self.align.lambda2));
        out.push_str(&format!("align.lr = {}\n", self.align.lr));
        out.push_str(&format!("align.batch = {}\n", self.align.batch));
        out.push_str(&format!("align.epochs = {}\n", self.align.epochs));
        out.push_str(&format!("align.outer_rounds = {}\n", self.align.outer_rounds));
        out.push_str(&format!("align.e1 = {}\n", self.align.phase_steps_hp));
        out.push_str(&format!("align.e2 = {}\n", self.align.phase_steps_g));
        out.push_str(&format!("align.seed = {}\n", self.align.seed));
        out.push_str(&format!("eval.episodes = {}\n", self.eval.episodes));
        out.push_str(&format!("eval.horizon = {}\n", self.eval.horizon));
        let seeds: Vec<String> = self.eval.seeds.iter().map(|s| s.to_string()).collect();
        out.push_str(&format!("eval.seeds = {}\n", seeds.join(",")));
        out.push_str(&format!("eval.paired_count = {}\n", self.eval.paired_count));
        out.push_str(&format!("eval.paired_seed = {}\n", self.eval.paired_seed));
        if !self.scale_sweep.is_empty() {
            let sweep: Vec<String> = self.scale_sweep.iter().map(|s| s.to_string()).collect();
            out.push_str(&format!("eval.scale_sweep = {}\n", sweep.join(",")));
        }
        out.push_str(&format!("run.out_dir = {}\n", self.out_dir.display()));
        out.push_str(&format!(
            "run.scale = {}\n",
            if self.scale == RunScale::Ci { "ci" } else { "full" }
        ));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "
env.X.family = point_mass
env.Y.family = point_mass
align.mode = cross_physics
align.lambda0 = 200
align.lambda1 = 1
align.lambda2 = 0
";

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = parse_config_str(MINIMAL, &[]).unwrap();
        assert_eq!(cfg.align.lambda0, 200.0);
        assert_eq!(cfg.align.lambda1, 1.0);
        assert_eq!(cfg.data.episodes, 1000);
        assert_eq!(cfg.eval.seeds, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn set_override_wins_over_file_value() {
        let cfg = parse_config_str(MINIMAL, &["align.seed=9".to_string()]).unwrap();
        assert_eq!(cfg.align.seed, 9);
    }

    #[test]
    fn misspelled_key_is_rejected_with_suggestion() {
        let err = parse_config_str("align.lamda0 = 200\n", &[]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("unknown key 'align.lamda0'"), "{msg}");
        assert!(msg.contains("did you mean 'align.lambda0'"), "{msg}");
        assert!(msg.contains(":1:"), "line number missing: {msg}");
    }

    #[test]
    fn type_errors_carry_line_numbers() {
        let bad = "env.X.family = point_mass\nenv.Y.family = point_mass\nalign.mode = cross_physics\nalign.batch = many\n";
        let err = parse_config_str(bad, &[]).unwrap_err();
        assert!(err.to_string().contains(":4:"), "{err}");
    }

    #[test]
    fn mode_constraints_revalidated() {
        let bad = "
env.X.family = point_mass
env.Y.family = point_mass
align.mode = cross_physics
align.lambda2 = 3
";
        assert!(parse_config_str(bad, &[]).is_err());
    }

    #[test]
    fn comments_and_blanks_ignored() {
        let cfg = parse_config_str(
            "# header\nenv.X.family = point_mass # trailing\n\nenv.Y.family = point_mass\nalign.mode = cross_physics\n",
            &[],
        )
        .unwrap();
        assert_eq!(cfg.env_x.family, crate::envs::Family::PointMass);
    }

    #[test]
    fn ci_scale_shrinks_workload() {
        let cfg = parse_config_str(MINIMAL, &["run.scale=ci".to_string()]).unwrap();
        assert!(cfg.data.episodes <= 100);
        assert!(cfg.align.epochs <= 3);
        assert_eq!(cfg.eval.seeds.len(), 2);
    }

    #[test]
    fn config_snapshot_reparses_identically() {
        let cfg = parse_config_str(MINIMAL, &["data.episodes=77".to_string()]).unwrap();
        let snapshot = cfg.to_config_string();
        let cfg2 = parse_config_str(&snapshot, &[]).unwrap();
        assert_eq!(cfg2.data.episodes, 77);
        assert_eq!(cfg2.align.lambda0, cfg.align.lambda0);
        assert_eq!(cfg2.env_x.digest(), cfg.env_x.digest());
    }
}
