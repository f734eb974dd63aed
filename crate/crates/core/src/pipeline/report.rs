use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::PearsonResult;
use crate::featpack::{Task, EMI_EMOTION_NAMES};
use crate::temporal::Source;

/// Origin of a frame's final label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameSource {
    Pretrained,
    Fused,
    /// Forced negative by the video gate.
    Gated,
}

impl FrameSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            FrameSource::Pretrained => "pretrained",
            FrameSource::Fused => "fused",
            FrameSource::Gated => "gated",
        }
    }
}

impl From<Source> for FrameSource {
    fn from(s: Source) -> Self {
        match s {
            Source::Pretrained => FrameSource::Pretrained,
            Source::Fused => FrameSource::Fused,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VideoMetrics {
    pub video_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frames: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub binary_f1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gated_out: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prediction: Option<Vec<f64>>,
}

/// Task evaluation. Only the metrics that belong to the task are present,
/// and they are absent altogether when the pack carries no labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub task: Task,
    pub method: String,
    pub modalities: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub macro_f1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_emotion_pcc: Option<Vec<Option<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_pcc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub binary_f1: Option<f64>,
    pub config_digest: String,
    pub per_video: Vec<VideoMetrics>,
}

impl MetricsReport {
    /// The task's headline metric: macro F1 (EXPR), mean PCC (EMI) or binary F1 (AH).
    pub fn primary_metric(&self) -> Option<f64> {
        match self.task {
            Task::Expr => self.macro_f1,
            Task::Emi => self.mean_pcc,
            Task::Ah => self.binary_f1,
        }
    }

    pub fn primary_metric_name(task: Task) -> &'static str {
        match task {
            Task::Expr => "macro_f1",
            Task::Emi => "mean_pcc",
            Task::Ah => "binary_f1",
        }
    }

    pub(crate) fn set_pearson(&mut self, r: PearsonResult) {
        self.per_emotion_pcc = Some(r.per_column);
        self.mean_pcc = r.mean;
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FramePredictions {
    pub video_id: String,
    pub labels: Vec<usize>,
    pub sources: Vec<FrameSource>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutcome {
    pub videos: Vec<FramePredictions>,
    pub report: MetricsReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmiOutcome {
    /// Per-video intensity predictions in video-id order.
    pub videos: Vec<(String, Vec<f64>)>,
    pub report: MetricsReport,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Frames(FrameOutcome),
    Videos(EmiOutcome),
}

impl Outcome {
    pub fn report(&self) -> &MetricsReport {
        match self {
            Outcome::Frames(f) => &f.report,
            Outcome::Videos(v) => &v.report,
        }
    }

    /// Frame tasks: `video_id,frame,label,source`. EMI: one row per video
    /// with one column per emotion.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        match self {
            Outcome::Frames(f) => {
                out.push_str("video_id,frame,label,source\n");
                for v in &f.videos {
                    for (i, (label, source)) in v.labels.iter().zip(&v.sources).enumerate() {
                        writeln!(out, "{},{},{},{}", v.video_id, i, label, source.as_str()).unwrap();
                    }
                }
            }
            Outcome::Videos(e) => {
                out.push_str("video_id");
                for name in EMI_EMOTION_NAMES {
                    out.push(',');
                    out.push_str(name);
                }
                out.push('\n');
                for (id, values) in &e.videos {
                    out.push_str(id);
                    for v in values {
                        out.push(',');
                        out.push_str(&format_sig9(*v));
                    }
                    out.push('\n');
                }
            }
        }
        out
    }
}

/// Decimal rendering with 9 significant digits, trailing zeros trimmed.
pub fn format_sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    // round to 9 significant digits first so the exponent is the rounded one
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if !(-6..21).contains(&exp) {
        let mantissa = mantissa.trim_end_matches('0').trim_end_matches('.');
        return format!("{mantissa}e{exp}");
    }
    let decimals = (8 - exp).max(0) as usize;
    let rounded: f64 = sci.parse().expect("round trip");
    let mut s = format!("{rounded:.decimals$}");
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    s
}
