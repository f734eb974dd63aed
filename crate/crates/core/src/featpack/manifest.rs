use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

/// Number of facial-expression categories in the EXPR task.
pub const EXPR_CLASSES: usize = 8;
/// Number of self-reported emotion intensities in the EMI task.
pub const EMI_EMOTIONS: usize = 6;
pub const EMI_EMOTION_NAMES: [&str; EMI_EMOTIONS] = [
    "admiration",
    "amusement",
    "determination",
    "empathic_pain",
    "excitement",
    "joy",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Task {
    #[serde(rename = "EXPR")]
    Expr,
    #[serde(rename = "EMI")]
    Emi,
    #[serde(rename = "AH")]
    Ah,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Expr => "EXPR",
            Task::Emi => "EMI",
            Task::Ah => "AH",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModalityKind {
    Embedding,
    Logits,
    Probabilities,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModalityDecl {
    pub name: String,
    pub dim: usize,
    pub kind: ModalityKind,
    /// Free-form record of the upstream encoder that produced the features.
    #[serde(default)]
    pub source_tag: String,
}

impl ModalityDecl {
    pub fn new(name: impl Into<String>, dim: usize, kind: ModalityKind) -> Self {
        ModalityDecl {
            name: name.into(),
            dim,
            kind,
            source_tag: String::new(),
        }
    }

    pub fn with_source(mut self, tag: impl Into<String>) -> Self {
        self.source_tag = tag.into();
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoDecl {
    pub id: String,
    /// Length of the video frame clock.
    pub frames: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels_file: Option<String>,
}

/// Pack manifest. The first declared modality defines the frame clock: its
/// matrices must have exactly `frames` rows, while other modalities may be
/// sampled at their own rate and are aligned on use.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub task: Task,
    pub modalities: Vec<ModalityDecl>,
    pub videos: Vec<VideoDecl>,
}

impl Manifest {
    pub fn new(task: Task, modalities: Vec<ModalityDecl>, videos: Vec<VideoDecl>) -> Self {
        Manifest {
            format_version: FORMAT_VERSION,
            task,
            modalities,
            videos,
        }
    }

    pub fn modality(&self, name: &str) -> Option<&ModalityDecl> {
        self.modalities.iter().find(|m| m.name == name)
    }

    pub fn video(&self, id: &str) -> Option<&VideoDecl> {
        self.videos.iter().find(|v| v.id == id)
    }

    /// Modality that carries the frame clock.
    pub fn frame_modality(&self) -> Option<&ModalityDecl> {
        self.modalities.first()
    }

    pub fn check(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::InvalidManifest(format!(
                "unsupported format_version {}",
                self.format_version
            )));
        }
        if self.modalities.is_empty() {
            return Err(Error::InvalidManifest("no modalities declared".into()));
        }
        let mut names = BTreeSet::new();
        for m in &self.modalities {
            if m.dim == 0 {
                return Err(Error::InvalidManifest(format!(
                    "modality `{}` has dim 0",
                    m.name
                )));
            }
            if m.name.is_empty() || m.name.contains("__") || m.name.contains(['/', '\\']) {
                return Err(Error::InvalidManifest(format!(
                    "modality name `{}` is not a valid file component",
                    m.name
                )));
            }
            if !names.insert(m.name.as_str()) {
                return Err(Error::InvalidManifest(format!(
                    "duplicate modality `{}`",
                    m.name
                )));
            }
        }
        let mut ids = BTreeSet::new();
        for v in &self.videos {
            if v.id.is_empty() || v.id.contains(['/', '\\']) {
                return Err(Error::InvalidManifest(format!(
                    "video id `{}` is not a valid file component",
                    v.id
                )));
            }
            if !ids.insert(v.id.as_str()) {
                return Err(Error::InvalidManifest(format!("duplicate video `{}`", v.id)));
            }
        }
        Ok(())
    }

    pub fn matrix_file_name(video: &str, modality: &str) -> String {
        format!("{video}__{modality}.fpk")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Frame,
    Video,
}

/// Ground truth for one video. Values are kept as stored; range checks are
/// the job of `validate_pack`.
#[derive(Debug, Clone, PartialEq)]
pub enum LabelPayload {
    /// EXPR class id per frame.
    Classes(Vec<u32>),
    /// AH presence flag per frame.
    Binary(Vec<u8>),
    /// EMI intensities for the whole video.
    Intensities(Vec<f64>),
}

impl LabelPayload {
    pub fn granularity(&self) -> Granularity {
        match self {
            LabelPayload::Classes(_) | LabelPayload::Binary(_) => Granularity::Frame,
            LabelPayload::Intensities(_) => Granularity::Video,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            LabelPayload::Classes(v) => v.len(),
            LabelPayload::Binary(v) => v.len(),
            LabelPayload::Intensities(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn task(&self) -> Task {
        match self {
            LabelPayload::Classes(_) => Task::Expr,
            LabelPayload::Binary(_) => Task::Ah,
            LabelPayload::Intensities(_) => Task::Emi,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelTrack {
    pub video_id: String,
    pub payload: LabelPayload,
}

#[derive(Serialize, Deserialize)]
struct LabelFile {
    granularity: Granularity,
    payload: serde_json::Value,
}

impl LabelTrack {
    pub fn new(video_id: impl Into<String>, payload: LabelPayload) -> Self {
        LabelTrack {
            video_id: video_id.into(),
            payload,
        }
    }

    pub fn granularity(&self) -> Granularity {
        self.payload.granularity()
    }

    pub fn matches_task(&self, task: Task) -> bool {
        self.payload.task() == task
    }

    pub fn to_json(&self) -> String {
        let payload = match &self.payload {
            LabelPayload::Classes(v) => serde_json::to_value(v),
            LabelPayload::Binary(v) => serde_json::to_value(v),
            LabelPayload::Intensities(v) => serde_json::to_value(v),
        }
        .expect("label payload serializes");
        let file = LabelFile {
            granularity: self.granularity(),
            payload,
        };
        serde_json::to_string(&file).expect("label file serializes")
    }

    /// Parses a label document; the payload type is decided by the task.
    pub fn from_json(video_id: &str, task: Task, text: &str) -> Result<Self> {
        let bad = |msg: String| {
            Error::InvalidArgument(format!("label file for video `{video_id}`: {msg}"))
        };
        let file: LabelFile = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
        let expected = match task {
            Task::Expr | Task::Ah => Granularity::Frame,
            Task::Emi => Granularity::Video,
        };
        if file.granularity != expected {
            return Err(bad(format!(
                "granularity {:?} does not fit task {task}",
                file.granularity
            )));
        }
        let payload = match task {
            Task::Expr => LabelPayload::Classes(
                serde_json::from_value(file.payload).map_err(|e| bad(e.to_string()))?,
            ),
            Task::Ah => LabelPayload::Binary(
                serde_json::from_value(file.payload).map_err(|e| bad(e.to_string()))?,
            ),
            Task::Emi => LabelPayload::Intensities(
                serde_json::from_value(file.payload).map_err(|e| bad(e.to_string()))?,
            ),
        };
        Ok(LabelTrack::new(video_id, payload))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest() -> Manifest {
        Manifest::new(
            Task::Expr,
            vec![ModalityDecl::new("face", 4, ModalityKind::Embedding)],
            vec![VideoDecl {
                id: "v1".into(),
                frames: 3,
                labels_file: None,
            }],
        )
    }

    #[test]
    fn manifest_json_keys() {
        let json = serde_json::to_value(manifest()).unwrap();
        assert_eq!(json["format_version"], 1);
        assert_eq!(json["task"], "EXPR");
        assert_eq!(json["modalities"][0]["kind"], "embedding");
        assert_eq!(json["videos"][0]["frames"], 3);
        assert!(json["videos"][0].get("labels_file").is_none());
    }

    #[test]
    fn duplicate_modality_rejected() {
        let mut m = manifest();
        m.modalities.push(ModalityDecl::new("face", 2, ModalityKind::Logits));
        assert!(m.check().is_err());
    }

    #[test]
    fn zero_dim_rejected() {
        let mut m = manifest();
        m.modalities[0].dim = 0;
        assert!(m.check().is_err());
    }

    #[test]
    fn label_file_roundtrip_per_task() {
        let t = LabelTrack::new("v", LabelPayload::Binary(vec![0, 1, 1]));
        let text = t.to_json();
        assert_eq!(text, r#"{"granularity":"frame","payload":[0,1,1]}"#);
        assert_eq!(LabelTrack::from_json("v", Task::Ah, &text).unwrap(), t);

        let e = LabelTrack::new("v", LabelPayload::Intensities(vec![0.5; 6]));
        assert_eq!(LabelTrack::from_json("v", Task::Emi, &e.to_json()).unwrap(), e);
    }

    #[test]
    fn granularity_must_fit_task() {
        let text = r#"{"granularity":"video","payload":[0,1]}"#;
        assert!(LabelTrack::from_json("v", Task::Expr, text).is_err());
    }
}
