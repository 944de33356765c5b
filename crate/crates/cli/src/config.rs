use std::path::{Path, PathBuf};

use clap::Args;
use gazebc::code_model::FeatureSpec;
use gazebc::policy::{BcConfig, TaskMode};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::Failure;

/// Flat run configuration shared by every subcommand.
///
/// Values come from the `--config` JSON file and are overridden by flags.
/// Keys a subcommand does not use are ignored by it.
#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    // training
    #[arg(long, global = true)]
    pub w_att: Option<f64>,
    #[arg(long, global = true)]
    pub w_aux: Option<f64>,
    #[arg(long, global = true)]
    pub d_emb: Option<usize>,
    #[arg(long, global = true)]
    pub d_hidden: Option<usize>,
    #[arg(long, global = true)]
    pub d_attn: Option<usize>,
    #[arg(long, global = true)]
    pub lr: Option<f64>,
    #[arg(long, global = true)]
    pub grad_clip: Option<f64>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    #[arg(long, global = true)]
    pub batch: Option<usize>,
    /// Seed for generation, initialisation, shuffling and augmentation.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// `none`, `classify` or `localize`.
    #[arg(long, global = true)]
    pub task: Option<String>,
    #[arg(long, global = true)]
    pub n_classes: Option<usize>,

    // features
    /// `one_hot`, `one_hot_pos`, `char_ngram` or `external`.
    #[arg(long, global = true)]
    pub features: Option<String>,
    #[arg(long, global = true)]
    pub ngram_n: Option<usize>,
    #[arg(long, global = true)]
    pub ngram_buckets: Option<usize>,
    /// Embedding table for `external` features.
    #[arg(long, global = true)]
    pub embeddings: Option<PathBuf>,
    #[arg(long, global = true)]
    pub vocab_min_count: Option<usize>,

    // paths
    #[arg(long, global = true)]
    pub corpus_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub labels: Option<PathBuf>,
    #[arg(long, global = true)]
    pub gaze_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub layout: Option<PathBuf>,
    #[arg(long, global = true)]
    pub trajectories: Option<PathBuf>,
    #[arg(long, global = true)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, global = true)]
    pub metrics_out: Option<PathBuf>,
    /// Output file for `tokenize` and `augment`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    // ingest and augment
    #[arg(long, global = true)]
    pub min_dur_ms: Option<f64>,
    #[arg(long, global = true)]
    pub radius_px: Option<f64>,
    #[arg(long, global = true)]
    pub sigma_tokens: Option<f64>,
    #[arg(long, global = true)]
    pub m: Option<usize>,

    // synth
    #[arg(long, global = true)]
    pub n_snippets: Option<usize>,
    #[arg(long, global = true)]
    pub bug_rate: Option<f64>,
    #[arg(long, global = true)]
    pub lines_min: Option<usize>,
    #[arg(long, global = true)]
    pub lines_max: Option<usize>,
    /// `linear`, `skim` or `bug`.
    #[arg(long, global = true)]
    pub expert: Option<String>,
    #[arg(long, global = true)]
    pub window: Option<usize>,
    /// Also write one fixation CSV per demonstration into `gaze_dir`.
    #[arg(long, global = true)]
    pub emit_fixations: Option<bool>,

    // evaluation
    /// `train`, `held_out` or `all`.
    #[arg(long, global = true)]
    pub split: Option<String>,
    #[arg(long, global = true)]
    pub snippet: Option<String>,
    #[arg(long, global = true)]
    pub max_steps: Option<usize>,
    #[arg(long, global = true)]
    pub eps: Option<f64>,
}

fn usage(message: impl Into<String>) -> Failure {
    Failure::usage(message)
}

impl RunConfig {
    /// Reads `file` (if any) and lays the flag values over it.
    pub fn resolve(file: Option<&Path>, flags: &RunConfig) -> Result<RunConfig, Failure> {
        let mut merged = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| usage(format!("{}: {e}", path.display())))?;
                let value: Value = serde_json::from_str(&text)
                    .map_err(|e| usage(format!("{}: {e}", path.display())))?;
                match value {
                    Value::Object(map) => map,
                    _ => return Err(usage(format!("{}: expected a JSON object", path.display()))),
                }
            }
            None => Map::new(),
        };
        let overrides = serde_json::to_value(flags).map_err(|e| usage(e.to_string()))?;
        if let Value::Object(map) = overrides {
            merged.extend(map.into_iter().filter(|(_, v)| !v.is_null()));
        }
        let origin = file.map_or_else(|| "flags".to_string(), |p| p.display().to_string());
        serde_json::from_value(Value::Object(merged)).map_err(|e| usage(format!("{origin}: {e}")))
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn task_mode(&self) -> Result<TaskMode, Failure> {
        match self.task.as_deref().unwrap_or("none") {
            "none" => Ok(TaskMode::None),
            "classify" => Ok(TaskMode::Classify {
                n_classes: self.n_classes.unwrap_or(3),
            }),
            "localize" => Ok(TaskMode::Localize),
            other => Err(usage(format!("task: unknown mode `{other}`"))),
        }
    }

    pub fn bc_config(&self) -> Result<BcConfig, Failure> {
        let d = BcConfig::default();
        let config = BcConfig {
            w_att: self.w_att.unwrap_or(d.w_att),
            w_aux: self.w_aux.unwrap_or(d.w_aux),
            d_emb: self.d_emb.unwrap_or(d.d_emb),
            d_hidden: self.d_hidden.unwrap_or(d.d_hidden),
            d_attn: self.d_attn.unwrap_or(d.d_attn),
            lr: self.lr.unwrap_or(d.lr),
            grad_clip: self.grad_clip.unwrap_or(d.grad_clip),
            epochs: self.epochs.unwrap_or(d.epochs),
            batch: self.batch.unwrap_or(d.batch),
            seed: self.seed(),
            task_mode: self.task_mode()?,
        };
        config.validate().map_err(|e| usage(e.to_string()))?;
        Ok(config)
    }

    pub fn feature_spec(&self) -> Result<FeatureSpec, Failure> {
        match self.features.as_deref().unwrap_or("one_hot_pos") {
            "one_hot" => Ok(FeatureSpec::OneHot),
            "one_hot_pos" => Ok(FeatureSpec::OneHotPos),
            "char_ngram" => Ok(FeatureSpec::CharNgram {
                n: self.ngram_n.unwrap_or(3),
                buckets: self.ngram_buckets.unwrap_or(64),
            }),
            "external" => Ok(FeatureSpec::External {
                path: input_file(&self.embeddings, "embeddings")?,
            }),
            other => Err(usage(format!("features: unknown mode `{other}`"))),
        }
    }
}

/// A required input file that must already exist.
pub fn input_file(value: &Option<PathBuf>, key: &str) -> Result<PathBuf, Failure> {
    let path = value
        .clone()
        .ok_or_else(|| usage(format!("missing required key `{key}`")))?;
    if !path.is_file() {
        return Err(usage(format!(
            "{key}: `{}` is not a readable file",
            path.display()
        )));
    }
    Ok(path)
}

/// A required input directory that must already exist.
pub fn input_dir(value: &Option<PathBuf>, key: &str) -> Result<PathBuf, Failure> {
    let path = value
        .clone()
        .ok_or_else(|| usage(format!("missing required key `{key}`")))?;
    if !path.is_dir() {
        return Err(usage(format!(
            "{key}: `{}` is not a directory",
            path.display()
        )));
    }
    Ok(path)
}

/// An optional input file; when given it must exist.
pub fn optional_input(value: &Option<PathBuf>, key: &str) -> Result<Option<PathBuf>, Failure> {
    match value {
        Some(_) => input_file(value, key).map(Some),
        None => Ok(None),
    }
}

/// A required output file whose parent directory must exist.
pub fn output_file(value: &Option<PathBuf>, key: &str) -> Result<PathBuf, Failure> {
    let path = value
        .clone()
        .ok_or_else(|| usage(format!("missing required key `{key}`")))?;
    check_parent(&path, key)?;
    Ok(path)
}

pub fn optional_output(value: &Option<PathBuf>, key: &str) -> Result<Option<PathBuf>, Failure> {
    match value {
        Some(_) => output_file(value, key).map(Some),
        None => Ok(None),
    }
}

fn check_parent(path: &Path, key: &str) -> Result<(), Failure> {
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(parent) = parent {
        if !parent.is_dir() {
            return Err(usage(format!(
                "{key}: directory `{}` does not exist",
                parent.display()
            )));
        }
    }
    if path.is_dir() {
        return Err(usage(format!("{key}: `{}` is a directory", path.display())));
    }
    Ok(())
}

/// A required output directory; created if missing, but its parent must exist.
pub fn output_dir(value: &Option<PathBuf>, key: &str) -> Result<PathBuf, Failure> {
    let path = value
        .clone()
        .ok_or_else(|| usage(format!("missing required key `{key}`")))?;
    if path.exists() && !path.is_dir() {
        return Err(usage(format!(
            "{key}: `{}` is not a directory",
            path.display()
        )));
    }
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(parent) = parent {
        if !parent.is_dir() {
            return Err(usage(format!(
                "{key}: directory `{}` does not exist",
                parent.display()
            )));
        }
    }
    Ok(path)
}
