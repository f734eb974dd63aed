//! Task orchestration: dataset assembly from packs, fusion, gating and the
//! evaluation metrics for EXPR, EMI and AH.
//!
//! Every task follows the same two steps: `train_*` fits the per-modality
//! (or early-fused) heads from a labelled pack, and `run_*` applies a
//! [`FusionSpec`] on top of fixed models. Post-processing parameters (blend
//! weights, kernel size, filter threshold) only enter the second step, so
//! sweeping them never requires retraining.

mod ah;
mod data;
mod emi;
mod expr;
mod metrics;
mod models;
mod report;

use std::collections::BTreeMap;

use ndarray::{concatenate, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featpack::{FeatureSequence, Task};
use crate::neural::{TrainConfig, DEFAULT_HIDDEN};
use crate::temporal::{BlendSpec, FilterSpec, SmoothSpec};

pub use ah::{run_ah, train_ah};
pub use data::{frame_features, split_videos, video_descriptor};
pub use emi::{run_emi, train_emi};
pub use expr::{run_expr, train_expr};
pub use metrics::{
    metric_accuracy, metric_binary_f1, metric_macro_f1, metric_pearson, pearson, PearsonResult,
};
pub use models::{ModelSet, EARLY_KEY, GATE_KEY};
pub use report::{
    format_sig9, EmiOutcome, FrameOutcome, FramePredictions, FrameSource, MetricsReport, Outcome,
    VideoMetrics,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    /// Independent per-modality heads combined by convex weighting.
    LateBlend,
    /// One head over concatenated per-modality features.
    EarlyConcat,
    /// Early fusion plus a video-level logistic-regression gate (AH only).
    Gated,
}

/// Video-level pooling of a frame track for EMI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Descriptor {
    Mean,
    Stat,
}

/// How EMI "class counts" are derived from the training intensities before
/// inverse-count weighting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CountRule {
    /// Videos in which the emotion has the highest intensity.
    #[default]
    Dominant,
    /// Videos in which the emotion has non-zero intensity.
    Nonzero,
    /// All weights equal.
    Uniform,
}

fn default_mode() -> FusionMode {
    FusionMode::LateBlend
}

fn default_k() -> usize {
    1
}

/// Fusion hyperparameters applied on top of trained heads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionSpec {
    #[serde(default = "default_mode")]
    pub mode: FusionMode,
    /// Modalities in declaration order. For EXPR the first is the face track
    /// and an optional second is audio.
    pub modalities: Vec<String>,
    /// Convex weights over `modalities`; uniform when absent. For two
    /// modalities this is `(w, 1 - w)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    /// Odd smoothing kernel size.
    #[serde(default = "default_k")]
    pub k: usize,
    /// Confidence filter threshold against `score_modality`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score_modality: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gate_modality: Option<String>,
    /// Per-modality EMI descriptor override.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub descriptors: BTreeMap<String, Descriptor>,
}

impl FusionSpec {
    pub fn late(modalities: &[&str]) -> Self {
        FusionSpec {
            mode: FusionMode::LateBlend,
            modalities: modalities.iter().map(|s| s.to_string()).collect(),
            weights: None,
            k: 1,
            t: None,
            score_modality: None,
            gate_modality: None,
            descriptors: BTreeMap::new(),
        }
    }

    pub fn with_mode(mut self, mode: FusionMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Self {
        self.weights = Some(weights);
        self
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    pub fn with_filter(mut self, score_modality: &str, t: f64) -> Self {
        self.score_modality = Some(score_modality.into());
        self.t = Some(t);
        self
    }

    pub fn with_gate(mut self, modality: &str) -> Self {
        self.mode = FusionMode::Gated;
        self.gate_modality = Some(modality.into());
        self
    }

    pub fn smooth_spec(&self) -> Result<SmoothSpec> {
        SmoothSpec::new(self.k)
    }

    pub fn filter_spec(&self) -> Result<Option<FilterSpec>> {
        match (self.t, &self.score_modality) {
            (None, _) => Ok(None),
            (Some(t), Some(_)) => FilterSpec::new(t).map(Some),
            (Some(_), None) => Err(Error::invalid("filter threshold set without score_modality")),
        }
    }

    pub fn blend_spec(&self) -> Result<BlendSpec> {
        match &self.weights {
            Some(w) => {
                if w.len() != self.modalities.len() {
                    return Err(Error::dim("fusion weights", self.modalities.len(), w.len()));
                }
                BlendSpec::new(w.clone())
            }
            None => BlendSpec::uniform(self.modalities.len()),
        }
    }

    /// Structural checks that do not need the pack.
    pub fn check(&self, task: Task) -> Result<()> {
        if self.modalities.is_empty() {
            return Err(Error::invalid("fusion spec lists no modalities"));
        }
        self.smooth_spec()?;
        self.filter_spec()?;
        self.blend_spec()?;
        match (task, self.mode) {
            (Task::Expr, FusionMode::LateBlend) => {
                if self.modalities.len() > 2 {
                    return Err(Error::invalid("EXPR fuses a face and an optional audio modality"));
                }
            }
            (Task::Expr, mode) => {
                return Err(Error::invalid(format!("EXPR supports late_blend only, got {mode:?}")))
            }
            (Task::Emi, FusionMode::Gated) => {
                return Err(Error::invalid("gating applies to AH only"))
            }
            (Task::Emi, _) => {
                if self.t.is_some() || self.k != 1 {
                    return Err(Error::invalid("smoothing and filtering apply to frame tasks only"));
                }
            }
            (Task::Ah, FusionMode::Gated) => {
                if self.gate_modality.is_none() {
                    return Err(Error::invalid("gated mode requires gate_modality"));
                }
            }
            (Task::Ah, _) => {}
        }
        Ok(())
    }
}

fn default_hidden() -> usize {
    DEFAULT_HIDDEN
}

fn default_gate_train() -> TrainConfig {
    TrainConfig {
        learning_rate: 0.1,
        epochs: 200,
        batch_size: 16,
        ..TrainConfig::default()
    }
}

/// Everything needed to fit the heads of one task. `train.seed` is the root
/// seed; per-model seeds are derived from it by component name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSettings {
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_hidden")]
    pub hidden_dim: usize,
    /// Inverse-frequency class weights for frame classifiers.
    #[serde(default)]
    pub class_weights: bool,
    #[serde(default)]
    pub count_rule: CountRule,
    /// Optimizer settings for the AH video gate.
    #[serde(default = "default_gate_train")]
    pub gate: TrainConfig,
    /// Fraction of videos held out for validation history and early stopping.
    #[serde(default)]
    pub validation_fraction: f64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            train: TrainConfig::default(),
            hidden_dim: DEFAULT_HIDDEN,
            class_weights: false,
            count_rule: CountRule::default(),
            gate: default_gate_train(),
            validation_fraction: 0.0,
        }
    }
}

/// Column-wise concatenation of frame-aligned sequences in the given order.
pub fn early_fuse(sequences: &[FeatureSequence]) -> Result<FeatureSequence> {
    let first = sequences
        .first()
        .ok_or_else(|| Error::invalid("early_fuse needs at least one sequence"))?;
    if sequences.len() == 1 {
        return Ok(first.clone());
    }
    for s in &sequences[1..] {
        if s.len() != first.len() {
            return Err(Error::invalid(format!(
                "early_fuse length mismatch: `{}` has {} rows, `{}` has {}; align first",
                first.modality(),
                first.len(),
                s.modality(),
                s.len()
            )));
        }
    }
    let views: Vec<_> = sequences.iter().map(|s| s.data().view()).collect();
    let data: Array2<f32> = concatenate(Axis(1), &views).expect("equal row counts checked");
    let name = sequences
        .iter()
        .map(|s| s.modality())
        .collect::<Vec<_>>()
        .join("+");
    FeatureSequence::new(first.video_id(), name, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, s};

    #[test]
    fn early_fuse_orders_columns() {
        let a = FeatureSequence::new("v", "a", array![[1.0f32, 2.0], [3.0, 4.0]]).unwrap();
        let b = FeatureSequence::new("v", "b", array![[5.0f32, 6.0, 7.0], [8.0, 9.0, 10.0]]).unwrap();
        let fused = early_fuse(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(fused.dim(), 5);
        assert_eq!(fused.modality(), "a+b");
        assert_eq!(fused.data().slice(s![.., ..2]), a.data());
        assert_eq!(fused.data().slice(s![.., 2..]), b.data());
        assert_eq!(early_fuse(&[a.clone()]).unwrap(), a);
    }

    #[test]
    fn early_fuse_length_mismatch() {
        let a = FeatureSequence::new("v", "a", array![[1.0f32]]).unwrap();
        let b = FeatureSequence::new("v", "b", array![[1.0f32], [2.0]]).unwrap();
        assert!(early_fuse(&[a, b]).is_err());
    }

    #[test]
    fn spec_checks() {
        let spec = FusionSpec::late(&["face", "audio"]).with_k(4);
        assert!(spec.check(Task::Expr).is_err());
        let spec = FusionSpec::late(&["face"]).with_weights(vec![0.5, 0.5]);
        assert!(spec.check(Task::Expr).is_err());
        let mut spec = FusionSpec::late(&["face"]);
        spec.t = Some(0.5);
        assert!(spec.check(Task::Expr).is_err());
        assert!(FusionSpec::late(&["face"]).with_mode(FusionMode::Gated).check(Task::Ah).is_err());
        assert!(FusionSpec::late(&["face", "text"]).with_gate("text").check(Task::Ah).is_ok());
        assert!(FusionSpec::late(&["face"]).with_k(3).check(Task::Emi).is_err());
    }

    #[test]
    fn spec_json_is_compact_and_roundtrips() {
        let spec = FusionSpec::late(&["face", "audio"]).with_weights(vec![0.7, 0.3]).with_k(5);
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(
            json,
            r#"{"mode":"late_blend","modalities":["face","audio"],"weights":[0.7,0.3],"k":5}"#
        );
        assert_eq!(serde_json::from_str::<FusionSpec>(&json).unwrap(), spec);
    }
}

/// Human-readable summary of a fusion configuration for report tables.
pub(crate) fn describe(spec: &FusionSpec) -> String {
    let mode = match spec.mode {
        FusionMode::LateBlend => "blending",
        FusionMode::EarlyConcat => "early fusion",
        FusionMode::Gated => "early fusion + gate",
    };
    let mut parts = vec![format!("{} ({mode})", spec.modalities.join("+"))];
    if let Some(w) = &spec.weights {
        let w: Vec<String> = w.iter().map(|v| format_sig9(*v)).collect();
        parts.push(format!("w=[{}]", w.join(",")));
    }
    if spec.k > 1 {
        parts.push(format!("smoothing k={}", spec.k));
    }
    if let Some(t) = spec.t {
        parts.push(format!("filtering t={}", format_sig9(t)));
    }
    parts.join(", ")
}

/// Digest binding a report to its configuration, pack manifest and model
/// parameters.
pub(crate) fn run_digest(spec: &FusionSpec, pack: &crate::featpack::FeaturePack, models: &ModelSet) -> String {
    let mut bytes = serde_json::to_vec(spec).expect("spec serializes");
    bytes.extend(serde_json::to_vec(pack.manifest()).expect("manifest serializes"));
    bytes.extend(models.fingerprint().as_bytes());
    crate::seed::digest_hex(&bytes)
}

/// Fits one head with seeds derived from `component`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn fit_head(
    component: &str,
    features: &Array2<f64>,
    targets: &crate::neural::Targets,
    validation: Option<(&Array2<f64>, &crate::neural::Targets)>,
    loss: &crate::neural::LossSpec,
    head: crate::neural::Head,
    outputs: usize,
    settings: &TrainSettings,
) -> Result<(crate::neural::MlpModel, crate::neural::TrainHistory)> {
    use crate::seed::derive_seed;
    let root = settings.train.seed;
    let model = crate::neural::mlp_init(
        features.ncols(),
        settings.hidden_dim,
        outputs,
        head,
        derive_seed(root, &format!("init/{component}")),
    )?;
    let cfg = TrainConfig {
        seed: derive_seed(root, &format!("shuffle/{component}")),
        ..settings.train.clone()
    };
    crate::neural::train(model, features, targets, loss, &cfg, validation).map_err(|e| match e {
        Error::InvalidArgument(msg) => Error::InvalidArgument(format!("training `{component}`: {msg}")),
        other => other,
    })
}

/// Checks that a model accepts the declared dimension of its input.
pub(crate) fn check_model_dim(
    key: &str,
    model: &crate::neural::MlpModel,
    expected_dim: usize,
) -> Result<()> {
    if model.input_dim() != expected_dim {
        return Err(Error::dim(format!("input of model `{key}`"), expected_dim, model.input_dim()));
    }
    Ok(())
}
