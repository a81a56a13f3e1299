//! JSON run configs. Schema: `docs/config.md`.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use dial_core::datagen::{MoonShift, OddOneOutConfig};
use dial_core::trainer::AccuracyMetric;
use dial_core::{ModelConfig, TrainConfig};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, CliResult};

/// Overrides where relative output paths land.
pub const OUT_ROOT_ENV: &str = "DIAL_OUT_ROOT";

/// Relative output paths resolve under `$DIAL_OUT_ROOT` when it is set.
pub fn resolve_out(path: &Path) -> PathBuf {
    match std::env::var_os(OUT_ROOT_ENV) {
        Some(root) if path.is_relative() => PathBuf::from(root).join(path),
        _ => path.to_path_buf(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPaths {
    /// Source preference triples (JSONL).
    pub src: PathBuf,
    /// Unlabeled target examples (JSONL).
    pub tgt: PathBuf,
    /// Ground-truth records for source-side evaluation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_src: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_tgt: Option<PathBuf>,
}

/// `train` config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataPaths,
    /// `input_dim` may be omitted; it is then read off the data.
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub eval_metric: AccuracyMetric,
    /// Write a checkpoint every this many epochs; `0` keeps only the final one.
    #[serde(default)]
    pub checkpoint_every: usize,
    pub out_dir: PathBuf,
}

/// Parameters of a synthetic domain pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GenSpec {
    TwoMoons {
        n_src: usize,
        n_tgt: usize,
        shift: MoonShift,
        #[serde(default = "default_noise")]
        noise_sd: f64,
    },
    OddOneOut {
        categories: usize,
        items_per_cat: usize,
        src_base_cat: usize,
        tgt_base_cat: usize,
        n: usize,
        #[serde(default = "default_odd_dim")]
        dim: usize,
        #[serde(default = "default_cluster_sd")]
        cluster_sd: f64,
    },
    GaussianPair {
        dim: usize,
        mean_shift: f64,
        n: usize,
    },
}

fn default_noise() -> f64 {
    0.1
}

fn default_odd_dim() -> usize {
    OddOneOutConfig::new(2, 4, 0, 1, 1, 0).dim
}

fn default_cluster_sd() -> f64 {
    OddOneOutConfig::new(2, 4, 0, 1, 1, 0).cluster_sd
}

/// `scaling` base config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingConfig {
    /// Only `two-moons` is supported; its `n_src`/`n_tgt` are overwritten
    /// per grid point.
    pub task: GenSpec,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub eval_metric: AccuracyMetric,
    /// Held-out target records per seed.
    #[serde(default = "default_n_eval")]
    pub n_eval: usize,
}

fn default_n_eval() -> usize {
    500
}

fn struct_keys<T: Serialize + Default>() -> BTreeSet<String> {
    match serde_json::to_value(T::default()) {
        Ok(Value::Object(m)) => m.keys().cloned().collect(),
        _ => BTreeSet::new(),
    }
}

fn collect_unknown(v: &Value, known: &BTreeSet<String>, prefix: &str, out: &mut Vec<String>) {
    if let Value::Object(m) = v {
        for k in m.keys() {
            if !known.contains(k) {
                out.push(format!("{prefix}{k}"));
            }
        }
    }
}

fn set(keys: &[&str]) -> BTreeSet<String> {
    keys.iter().map(|s| s.to_string()).collect()
}

/// Every key of a run config that the schema does not know, dotted.
pub fn unknown_run_keys(v: &Value) -> Vec<String> {
    let mut out = Vec::new();
    collect_unknown(
        v,
        &set(&["data", "model", "train", "eval_metric", "checkpoint_every", "out_dir"]),
        "",
        &mut out,
    );
    collect_unknown(
        &v["data"],
        &set(&["src", "tgt", "eval_src", "eval_tgt"]),
        "data.",
        &mut out,
    );
    collect_unknown(&v["model"], &struct_keys::<ModelConfig>(), "model.", &mut out);
    collect_unknown(&v["train"], &struct_keys::<TrainConfig>(), "train.", &mut out);
    out
}

pub fn unknown_scaling_keys(v: &Value) -> Vec<String> {
    let mut out = Vec::new();
    collect_unknown(
        v,
        &set(&["task", "model", "train", "eval_metric", "n_eval"]),
        "",
        &mut out,
    );
    collect_unknown(&v["model"], &struct_keys::<ModelConfig>(), "model.", &mut out);
    collect_unknown(&v["train"], &struct_keys::<TrainConfig>(), "train.", &mut out);
    out
}

pub fn read_json(path: &Path) -> CliResult<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

/// Parses `path` after checking for unknown keys, so every offending key is
/// reported at once.
pub fn load<T: for<'de> Deserialize<'de>>(path: &Path, unknown: fn(&Value) -> Vec<String>) -> CliResult<(T, Value)> {
    let v = read_json(path)?;
    let keys = unknown(&v);
    if !keys.is_empty() {
        return Err(CliError::UnknownKeys {
            path: path.to_path_buf(),
            keys,
        });
    }
    let cfg = serde_json::from_value(v.clone()).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    Ok((cfg, v))
}

/// Resolves data paths against the config file's directory.
pub fn relative_to(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.parent().unwrap_or(Path::new(".")).join(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn lists_every_unknown_key() {
        let v = json!({
            "data": {"src": "a", "tgt": "b", "eval": "c"},
            "train": {"lamda_da": 1.0, "epochs": 2},
            "model": {"embed_dim": 4, "width": 3},
            "out_dir": "o",
            "extra": true
        });
        let mut keys = unknown_run_keys(&v);
        keys.sort();
        assert_eq!(keys, vec!["data.eval", "extra", "model.width", "train.lamda_da"]);
    }

    #[test]
    fn gen_spec_round_trip() {
        let s = json!({"task": "two-moons", "n_src": 50, "n_tgt": 500,
                       "shift": {"mode": "fewshot_subsample", "arc_fraction": 0.4, "arc_start": 0.0}});
        let g: GenSpec = serde_json::from_value(s).unwrap();
        assert!(matches!(g, GenSpec::TwoMoons { noise_sd, .. } if noise_sd == 0.1));
        let bad = json!({"task": "two-moons", "n_src": 5, "n_tgt": 5, "shift": {"mode": "rotate", "degrees": 1.0}, "nosie": 1});
        assert!(serde_json::from_value::<GenSpec>(bad).is_err());
    }

    #[test]
    fn out_root_applies_to_relative_paths_only() {
        // the variable is process-wide; only this test touches it
        std::env::set_var(OUT_ROOT_ENV, "/tmp/root");
        assert_eq!(resolve_out(Path::new("runs/a")), PathBuf::from("/tmp/root/runs/a"));
        assert_eq!(resolve_out(Path::new("/abs")), PathBuf::from("/abs"));
        std::env::remove_var(OUT_ROOT_ENV);
        assert_eq!(resolve_out(Path::new("runs/a")), PathBuf::from("runs/a"));
    }
}
