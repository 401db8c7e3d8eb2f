//! Run configuration files: training hyperparameters plus file locations.
//!
//! Every key is optional. `preset` fills in corpus-specific sizes first and
//! explicit keys override it. Relative paths are resolved against the
//! directory holding the config file.
//!
//! | key                   | default                       |
//! |-----------------------|-------------------------------|
//! | `preset`              | none (`essays`, `wikipedia`)  |
//! | `model`               | `joint`                       |
//! | `learning_rate`       | 0.001                         |
//! | `batch_size`          | 50                            |
//! | `epochs`              | 200                           |
//! | `dropout`             | 0.5                           |
//! | `l2`                  | 0.001                         |
//! | `hidden`              | 150 (`wikipedia`: 80)         |
//! | `attention_hidden`    | 150                           |
//! | `embedding_dim`       | 300                           |
//! | `layers`              | 1                             |
//! | `seed`                | `$ARGBOUND_SEED`, else 0      |
//! | `undersample_ratio`   | none (no under-sampling)      |
//! | `loss_weight_cls`     | 1.0                           |
//! | `detach_p`            | false                         |
//! | `oracle_mode`         | false                         |
//! | `shared_dropout_mask` | false                         |
//! | `selection_metric`    | `token_macro_f1` (`classification_f1` for `classifier`) |
//! | `train_path`          | required unless `--train`     |
//! | `embeddings_path`     | required                      |
//! | `output_path`         | `model.json` unless `--out`   |
//! | `validation_fraction` | 0.1                           |
//! | `binary_sidecar`      | false                         |

use std::path::{Path, PathBuf};

use argbound::training::{SelectionMetric, TrainConfig};
use argbound::ModelKind;
use serde::Deserialize;

pub const SEED_ENV: &str = "ARGBOUND_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Essays,
    Wikipedia,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    preset: Option<Preset>,
    model: Option<ModelKind>,
    learning_rate: Option<f64>,
    batch_size: Option<usize>,
    epochs: Option<usize>,
    dropout: Option<f64>,
    l2: Option<f64>,
    hidden: Option<usize>,
    attention_hidden: Option<usize>,
    embedding_dim: Option<usize>,
    layers: Option<usize>,
    seed: Option<u64>,
    undersample_ratio: Option<f64>,
    loss_weight_cls: Option<f64>,
    detach_p: Option<bool>,
    oracle_mode: Option<bool>,
    shared_dropout_mask: Option<bool>,
    selection_metric: Option<SelectionMetric>,
    train_path: Option<PathBuf>,
    embeddings_path: Option<PathBuf>,
    output_path: Option<PathBuf>,
    validation_fraction: Option<f64>,
    binary_sidecar: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub train_path: Option<PathBuf>,
    pub embeddings_path: Option<PathBuf>,
    pub output_path: Option<PathBuf>,
    pub validation_fraction: f64,
    pub binary_sidecar: bool,
}

fn env_seed() -> Result<Option<u64>, String> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| format!("{SEED_ENV}=`{v}` is not an unsigned integer")),
        Err(_) => Ok(None),
    }
}

impl RunConfig {
    /// Parses config JSON; `base` is the directory relative paths hang off.
    pub fn from_json(text: &str, base: &Path) -> Result<Self, String> {
        let raw: RawConfig = serde_json::from_str(text).map_err(|e| e.to_string())?;
        let model = raw.model.unwrap_or(ModelKind::Joint);
        let mut cfg = TrainConfig::for_model(model);
        match raw.preset {
            Some(Preset::Essays) => {
                cfg.hidden = 150;
                cfg.embedding_dim = 300;
            }
            Some(Preset::Wikipedia) => {
                cfg.hidden = 80;
                cfg.embedding_dim = 300;
            }
            None => {}
        }
        macro_rules! set {
            ($($field:ident),*) => { $( if let Some(v) = raw.$field { cfg.$field = v; } )* };
        }
        set!(
            learning_rate,
            batch_size,
            epochs,
            dropout,
            l2,
            hidden,
            attention_hidden,
            embedding_dim,
            layers,
            loss_weight_cls,
            detach_p,
            oracle_mode,
            shared_dropout_mask,
            selection_metric
        );
        cfg.undersample_ratio = raw.undersample_ratio;
        cfg.seed = match raw.seed {
            Some(s) => s,
            None => env_seed()?.unwrap_or(0),
        };
        cfg.validate().map_err(|e| e.to_string())?;

        let validation_fraction = raw.validation_fraction.unwrap_or(0.1);
        if !(validation_fraction > 0.0 && validation_fraction < 1.0) {
            return Err(format!("validation_fraction must lie in (0, 1), got {validation_fraction}"));
        }
        let resolve = |p: Option<PathBuf>| p.map(|p| if p.is_absolute() { p } else { base.join(p) });
        Ok(RunConfig {
            train: cfg,
            train_path: resolve(raw.train_path),
            embeddings_path: resolve(raw.embeddings_path),
            output_path: resolve(raw.output_path),
            validation_fraction,
            binary_sidecar: raw.binary_sidecar.unwrap_or(false),
        })
    }
}
