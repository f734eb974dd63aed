use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use super::format::{self, MatrixHeader};
use super::{FeatureSequence, LabelTrack, Manifest, ModalityDecl};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

/// A validated, read-only feature pack. Headers are checked when the pack is
/// opened; matrix payloads are read on demand.
#[derive(Debug, Clone)]
pub struct FeaturePack {
    root: PathBuf,
    manifest: Manifest,
    headers: BTreeMap<(String, String), MatrixHeader>,
}

impl FeaturePack {
    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    /// Video ids in lexicographic order.
    pub fn video_ids(&self) -> Vec<&str> {
        let mut ids: Vec<&str> = self.manifest.videos.iter().map(|v| v.id.as_str()).collect();
        ids.sort_unstable();
        ids
    }

    pub fn frames(&self, video: &str) -> Result<usize> {
        self.manifest
            .video(video)
            .map(|v| v.frames)
            .ok_or_else(|| Error::invalid(format!("unknown video `{video}`")))
    }

    pub fn modality(&self, name: &str) -> Result<&ModalityDecl> {
        self.manifest
            .modality(name)
            .ok_or_else(|| Error::invalid(format!("pack has no modality `{name}`")))
    }

    pub fn has_matrix(&self, video: &str, modality: &str) -> bool {
        self.headers
            .contains_key(&(video.to_string(), modality.to_string()))
    }

    pub fn header(&self, video: &str, modality: &str) -> Option<MatrixHeader> {
        self.headers
            .get(&(video.to_string(), modality.to_string()))
            .copied()
    }

    pub fn matrix_path(&self, video: &str, modality: &str) -> PathBuf {
        self.root.join(Manifest::matrix_file_name(video, modality))
    }

    /// Matrix as stored, without the finiteness check.
    pub fn load_raw(&self, video: &str, modality: &str) -> Result<Array2<f32>> {
        if !self.has_matrix(video, modality) {
            return Err(Error::MissingMatrix {
                video: video.into(),
                modality: modality.into(),
            });
        }
        format::read_matrix(&self.matrix_path(video, modality))
    }

    pub fn sequence(&self, video: &str, modality: &str) -> Result<FeatureSequence> {
        FeatureSequence::new(video, modality, self.load_raw(video, modality)?)
    }

    /// Label track for a video, if the manifest references one.
    pub fn labels(&self, video: &str) -> Result<Option<LabelTrack>> {
        let decl = self
            .manifest
            .video(video)
            .ok_or_else(|| Error::invalid(format!("unknown video `{video}`")))?;
        let Some(file) = &decl.labels_file else {
            return Ok(None);
        };
        let path = self.root.join(file);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        LabelTrack::from_json(video, self.manifest.task, &text).map(Some)
    }
}

pub fn write_pack(root: &Path, manifest: &Manifest, sequences: &[FeatureSequence]) -> Result<()> {
    write_pack_with_labels(root, manifest, sequences, &[])
}

/// Writes a pack. Every (video, modality) of the manifest must be supplied
/// exactly once, and labels may only be given for videos whose declaration
/// names a `labels_file`.
pub fn write_pack_with_labels(
    root: &Path,
    manifest: &Manifest,
    sequences: &[FeatureSequence],
    labels: &[LabelTrack],
) -> Result<()> {
    manifest.check()?;
    let mut by_key: BTreeMap<(&str, &str), &FeatureSequence> = BTreeMap::new();
    for seq in sequences {
        let decl = manifest.modality(seq.modality()).ok_or_else(|| {
            Error::invalid(format!("sequence for undeclared modality `{}`", seq.modality()))
        })?;
        if manifest.video(seq.video_id()).is_none() {
            return Err(Error::invalid(format!(
                "sequence for undeclared video `{}`",
                seq.video_id()
            )));
        }
        if seq.dim() != decl.dim {
            return Err(Error::dim(
                format!("{}/{}", seq.video_id(), seq.modality()),
                decl.dim,
                seq.dim(),
            ));
        }
        if by_key
            .insert((seq.video_id(), seq.modality()), seq)
            .is_some()
        {
            return Err(Error::invalid(format!(
                "duplicate sequence for ({}, {})",
                seq.video_id(),
                seq.modality()
            )));
        }
    }
    for v in &manifest.videos {
        for m in &manifest.modalities {
            if !by_key.contains_key(&(v.id.as_str(), m.name.as_str())) {
                return Err(Error::MissingMatrix {
                    video: v.id.clone(),
                    modality: m.name.clone(),
                });
            }
        }
    }
    let mut labelled = BTreeSet::new();
    for track in labels {
        let decl = manifest.video(&track.video_id).ok_or_else(|| {
            Error::invalid(format!("labels for undeclared video `{}`", track.video_id))
        })?;
        if decl.labels_file.is_none() {
            return Err(Error::invalid(format!(
                "video `{}` declares no labels_file",
                track.video_id
            )));
        }
        if !track.matches_task(manifest.task) {
            return Err(Error::invalid(format!(
                "labels for `{}` do not fit task {}",
                track.video_id, manifest.task
            )));
        }
        if !labelled.insert(track.video_id.as_str()) {
            return Err(Error::invalid(format!(
                "duplicate labels for `{}`",
                track.video_id
            )));
        }
    }

    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let manifest_path = root.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    fs::write(&manifest_path, text + "\n").map_err(|e| Error::io(&manifest_path, e))?;
    for ((video, modality), seq) in by_key {
        let path = root.join(Manifest::matrix_file_name(video, modality));
        format::write_matrix(&path, seq.data())?;
    }
    for track in labels {
        let file = manifest
            .video(&track.video_id)
            .and_then(|v| v.labels_file.as_deref())
            .expect("checked above");
        let path = root.join(file);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(&path, track.to_json() + "\n").map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Opens a pack. Missing matrix files are tolerated here and reported by
/// `validate_pack`; malformed headers and dimension disagreements are errors.
pub fn read_pack(root: &Path) -> Result<FeaturePack> {
    let manifest_path = root.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|source| Error::Json {
        path: manifest_path.clone(),
        source,
    })?;
    manifest.check()?;

    let mut headers = BTreeMap::new();
    for v in &manifest.videos {
        for m in &manifest.modalities {
            let path = root.join(Manifest::matrix_file_name(&v.id, &m.name));
            if !path.exists() {
                continue;
            }
            let header = format::read_header(&path)?;
            if header.cols != m.dim {
                return Err(Error::dim(
                    format!(
                        "columns of {} (manifest dim {} vs file header {})",
                        path.display(),
                        m.dim,
                        header.cols
                    ),
                    m.dim,
                    header.cols,
                ));
            }
            headers.insert((v.id.clone(), m.name.clone()), header);
        }
    }
    Ok(FeaturePack {
        root: root.to_path_buf(),
        manifest,
        headers,
    })
}
