//! Plain-text experiment configuration: `[section]` headers and
//! `key = value` pairs, `#` comments. Unknown sections or keys are
//! rejected with the offending line number.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::alignment::LoopConfig;
use crate::error::{RahError, Result};
use crate::gateway::BackendKind;
use crate::pipeline::WorldConfig;
use crate::recsys::{FitConfig, ModelKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub backend: BackendKind,
    pub seeds: Vec<u64>,
    pub world: WorldConfig,
    pub loop_config: LoopConfig,
    pub fit: FitConfig,
    pub models: Vec<ModelKind>,
    /// E2: first N users form the background training cohort.
    pub background_users: usize,
    /// E3 debias knobs.
    pub gamma: f64,
    pub clip: f64,
    pub unpopular_threshold: usize,
    pub test_size: usize,
    /// Stable hash of the source text, stamped into every report row.
    pub hash: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            backend: BackendKind::Oracle,
            seeds: vec![0],
            world: WorldConfig::default(),
            loop_config: LoopConfig::default(),
            fit: FitConfig::default(),
            models: ModelKind::all().to_vec(),
            background_users: 0,
            gamma: 1.0,
            clip: 0.01,
            unpopular_threshold: 10,
            test_size: 200,
            hash: config_hash(""),
        }
    }
}

/// Short content hash making report rows re-derivable from their config.
pub fn config_hash(text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    hex::encode(&hasher.finalize()[..6])
}

fn parse_num<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| RahError::Parse {
        line,
        msg: format!("invalid value {value:?} for key {key}"),
    })
}

pub fn parse(text: &str) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig {
        hash: config_hash(text),
        ..Default::default()
    };
    let mut section = String::new();
    for (n, raw) in text.lines().enumerate() {
        let n = n + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name.strip_suffix(']').ok_or_else(|| RahError::Parse {
                line: n,
                msg: format!("unterminated section header {line:?}"),
            })?;
            match name {
                "run" | "world" | "loop" | "models" | "e2" | "e3" => section = name.to_string(),
                other => {
                    return Err(RahError::Parse {
                        line: n,
                        msg: format!("unknown section [{other}]"),
                    })
                }
            }
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| RahError::Parse {
            line: n,
            msg: format!("expected key = value, got {line:?}"),
        })?;
        let (key, value) = (key.trim(), value.trim());
        match (section.as_str(), key) {
            ("run", "backend") => {
                config.backend = match value {
                    "oracle" => BackendKind::Oracle,
                    "remote" => BackendKind::Remote,
                    other => {
                        return Err(RahError::Parse {
                            line: n,
                            msg: format!("unknown backend {other:?}"),
                        })
                    }
                }
            }
            ("run", "seeds") => {
                config.seeds = value
                    .split(',')
                    .map(|s| parse_num(n, key, s.trim()))
                    .collect::<Result<_>>()?;
                if config.seeds.is_empty() {
                    return Err(RahError::Parse {
                        line: n,
                        msg: "seeds list is empty".into(),
                    });
                }
            }
            ("world", "users") => config.world.users = parse_num(n, key, value)?,
            ("world", "items") => config.world.items = parse_num(n, key, value)?,
            ("world", "tags") => config.world.tags = parse_num(n, key, value)?,
            ("world", "tags_per_item") => config.world.tags_per_item = parse_num(n, key, value)?,
            ("world", "liked_tags_per_user") => {
                config.world.liked_tags_per_user = parse_num(n, key, value)?
            }
            ("world", "disliked_tags_per_user") => {
                config.world.disliked_tags_per_user = parse_num(n, key, value)?
            }
            ("world", "interactions_per_user") => {
                config.world.interactions_per_user = parse_num(n, key, value)?
            }
            ("world", "like_bias") => config.world.like_bias = parse_num(n, key, value)?,
            ("world", "noise_rate") => config.world.noise_rate = parse_num(n, key, value)?,
            ("world", "zipf_exponent") => config.world.zipf_exponent = parse_num(n, key, value)?,
            ("loop", "max_iters") => config.loop_config.max_iters = parse_num(n, key, value)?,
            ("models", "kinds") => {
                config.models = value
                    .split(',')
                    .map(|s| ModelKind::parse(s.trim()))
                    .collect::<Result<_>>()?
            }
            ("models", "dim") => config.fit.dim = parse_num(n, key, value)?,
            ("models", "learning_rate") => config.fit.learning_rate = parse_num(n, key, value)?,
            ("models", "l2") => config.fit.l2 = parse_num(n, key, value)?,
            ("models", "epochs") => config.fit.epochs = parse_num(n, key, value)?,
            ("models", "neg_samples") => config.fit.neg_samples = parse_num(n, key, value)?,
            ("models", "neg_weight") => config.fit.neg_weight = parse_num(n, key, value)?,
            ("models", "knn_k") => config.fit.knn_k = parse_num(n, key, value)?,
            ("e2", "background_users") => config.background_users = parse_num(n, key, value)?,
            ("e3", "gamma") => config.gamma = parse_num(n, key, value)?,
            ("e3", "clip") => config.clip = parse_num(n, key, value)?,
            ("e3", "threshold") => config.unpopular_threshold = parse_num(n, key, value)?,
            ("e3", "test_size") => config.test_size = parse_num(n, key, value)?,
            (_, key) => {
                return Err(RahError::Parse {
                    line: n,
                    msg: format!("unknown key {key:?} in section [{section}]"),
                })
            }
        }
    }
    config.validate()?;
    Ok(config)
}

pub fn parse_file(path: &Path) -> Result<ExperimentConfig> {
    parse(&std::fs::read_to_string(path)?)
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        self.loop_config.validate()?;
        if self.models.is_empty() {
            return Err(RahError::Config("no model kinds configured".into()));
        }
        if self.background_users >= self.world.users {
            return Err(RahError::Config(format!(
                "{} background users leave no target users of {}",
                self.background_users, self.world.users
            )));
        }
        if !(0.0..=1.0).contains(&self.clip) || self.clip <= 0.0 {
            return Err(RahError::Config("clip must be in (0, 1]".into()));
        }
        Ok(())
    }
}
