//! Experiment configuration files.
//!
//! ```json
//! {
//!   "task": "EXPR",
//!   "pack": "packs/train",
//!   "output": "runs/expr",
//!   "seed": 42,
//!   "fusion": { "modalities": ["face", "audio"], "weights": [0.6, 0.4], "k": 5 },
//!   "training": { "train": { "epochs": 20, "learning_rate": 0.05 }, "hidden_dim": 32 },
//!   "sweep": { "axis": "k", "values": [1, 3, 5, 9] }
//! }
//! ```
//!
//! Relative paths resolve against the directory holding the config file.

use std::fs;
use std::path::{Path, PathBuf};

use affuse_core::featpack::{FeaturePack, Task};
use affuse_core::pipeline::{FusionSpec, TrainSettings};
use affuse_core::seed::digest_hex;
use serde::{Deserialize, Serialize};
use serde_path_to_error::Segment;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    /// Smoothing kernel size.
    K,
    /// Filter threshold.
    T,
    /// First blend weight of a two-modality fusion; the second is `1 - w`.
    W,
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::K => "k",
            SweepAxis::T => "t",
            SweepAxis::W => "w",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    pub pack: PathBuf,
    pub output: PathBuf,
    /// Root seed of every random choice in training.
    #[serde(default)]
    pub seed: u64,
    pub fusion: FusionSpec,
    #[serde(default)]
    pub training: TrainSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

/// JSON pointer (RFC 6901) of a deserialization path.
fn pointer(path: &serde_path_to_error::Path) -> String {
    let mut out = String::new();
    for seg in path.iter() {
        out.push('/');
        match seg {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } => out.push_str(&key.replace('~', "~0").replace('/', "~1")),
            Segment::Enum { variant } => out.push_str(variant),
            Segment::Unknown => out.push('?'),
        }
    }
    if out.is_empty() {
        out.push('/');
    }
    out
}

fn schema(at: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Schema(format!("at {at}: {msg}"))
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<ExperimentConfig, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        let mut cfg: ExperimentConfig = serde_path_to_error::deserialize(de)
            .map_err(|e| schema(&pointer(e.path()), e.inner()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.pack = base.join(&cfg.pack);
        cfg.output = base.join(&cfg.output);
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<(), CliError> {
        if self.training.train.seed != 0 {
            return Err(schema("/training/train/seed", "set the root seed with /seed"));
        }
        self.fusion.check(self.task).map_err(|e| schema("/fusion", e))?;
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return Err(schema("/sweep/values", "no values to sweep"));
            }
            for (i, &v) in sweep.values.iter().enumerate() {
                self.spec_at(v).map_err(|e| schema(&format!("/sweep/values/{i}"), e))?;
            }
        }
        Ok(())
    }

    /// Training settings with the root seed applied.
    pub fn settings(&self) -> TrainSettings {
        let mut s = self.training.clone();
        s.train.seed = self.seed;
        s
    }

    /// The fusion spec with the sweep axis set to `value`.
    pub fn spec_at(&self, value: f64) -> Result<FusionSpec, String> {
        let axis = self.sweep.as_ref().map(|s| s.axis).ok_or("config has no sweep")?;
        let mut spec = self.fusion.clone();
        match axis {
            SweepAxis::K => {
                if value.fract() != 0.0 || value < 1.0 {
                    return Err(format!("k must be a positive odd integer, got {value}"));
                }
                spec.k = value as usize;
            }
            SweepAxis::T => {
                if spec.score_modality.is_none() {
                    return Err("sweeping t needs fusion.score_modality".into());
                }
                spec.t = Some(value);
            }
            SweepAxis::W => {
                if spec.modalities.len() != 2 {
                    return Err(format!(
                        "sweeping w needs exactly two modalities, got {}",
                        spec.modalities.len()
                    ));
                }
                if !(0.0..=1.0).contains(&value) {
                    return Err(format!("w must lie in [0, 1], got {value}"));
                }
                spec.weights = Some(vec![value, 1.0 - value]);
            }
        }
        spec.check(self.task).map_err(|e| e.to_string())?;
        Ok(spec)
    }

    /// Digest of everything that determines the trained models: task, seed,
    /// fusion and training settings, and the pack manifest. Paths are left
    /// out so that relocated runs agree.
    pub fn training_digest(&self, pack: &FeaturePack) -> String {
        let mut bytes = serde_json::to_vec(&(self.task, self.seed, &self.fusion, &self.training))
            .expect("config serializes");
        bytes.extend(serde_json::to_vec(pack.manifest()).expect("manifest serializes"));
        digest_hex(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, text: &str) -> PathBuf {
        let p = dir.join("cfg.json");
        fs::write(&p, text).unwrap();
        p
    }

    fn err(text: &str) -> String {
        let dir = tempfile::tempdir().unwrap();
        match ExperimentConfig::load(&write(dir.path(), text)) {
            Err(CliError::Schema(m)) => m,
            other => panic!("expected a schema error, got {other:?}"),
        }
    }

    const BASE: &str = r#""task": "EXPR", "pack": "p", "output": "o""#;

    #[test]
    fn schema_errors_carry_pointers() {
        let m = err(&format!(r#"{{{BASE}, "fusion": {{"modalities": ["face"], "k": "three"}}}}"#));
        assert!(m.starts_with("at /fusion/k:"), "{m}");
        let m = err(&format!(r#"{{{BASE}, "fusion": {{"modalities": ["face"]}}, "training": {{"train": {{"epochs": -1}}}}}}"#));
        assert!(m.starts_with("at /training/train/epochs:"), "{m}");
        let m = err(&format!(r#"{{{BASE}, "fusion": {{"modalities": ["face"]}}, "bogus": 1}}"#));
        assert!(m.contains("bogus"), "{m}");
        let m = err(&format!(r#"{{{BASE}, "fusion": {{"modalities": ["face"]}}, "sweep": {{"axis": "k", "values": [1, 4]}}}}"#));
        assert!(m.starts_with("at /sweep/values/1:"), "{m}");
        let m = err(&format!(r#"{{{BASE}, "fusion": {{"modalities": ["face"], "k": 2}}}}"#));
        assert!(m.starts_with("at /fusion:"), "{m}");
    }

    #[test]
    fn paths_resolve_against_the_config() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::load(&write(
            dir.path(),
            &format!(r#"{{{BASE}, "seed": 9, "fusion": {{"modalities": ["face", "audio"]}}, "sweep": {{"axis": "w", "values": [0, 0.5, 1]}}}}"#),
        ))
        .unwrap();
        assert_eq!(cfg.pack, dir.path().join("p"));
        assert_eq!(cfg.settings().train.seed, 9);
        assert_eq!(cfg.spec_at(0.25).unwrap().weights, Some(vec![0.25, 0.75]));
    }
}
