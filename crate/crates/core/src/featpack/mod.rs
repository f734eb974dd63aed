//! On-disk feature packs: a `manifest.json` plus one FPK1 matrix per
//! (video, modality), optional per-video label documents, and alignment of
//! variable-rate tracks onto the frame clock.

mod align;
pub mod format;
mod manifest;
mod pack;
mod validate;

use ndarray::Array2;

use crate::error::{Error, Result};

pub use align::align_to_frames;
pub use manifest::{
    Granularity, LabelPayload, LabelTrack, Manifest, ModalityDecl, ModalityKind, Task,
    VideoDecl, EMI_EMOTIONS, EMI_EMOTION_NAMES, EXPR_CLASSES, FORMAT_VERSION,
};
pub use pack::{read_pack, write_pack, write_pack_with_labels, FeaturePack, MANIFEST_FILE};
pub use validate::{validate_pack, Rule, ValidationReport, Violation};

/// A T×D matrix of frame-ordered features for one video and one modality.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    video_id: String,
    modality: String,
    data: Array2<f32>,
}

impl FeatureSequence {
    /// Builds a sequence, rejecting empty matrices and non-finite entries.
    pub fn new(
        video_id: impl Into<String>,
        modality: impl Into<String>,
        data: Array2<f32>,
    ) -> Result<Self> {
        let video_id = video_id.into();
        let modality = modality.into();
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::invalid(format!(
                "sequence {video_id}/{modality} is empty ({}x{})",
                data.nrows(),
                data.ncols()
            )));
        }
        if let Some(((row, col), _)) = data.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: format!("{video_id}/{modality}"),
                row,
                col,
            });
        }
        Ok(FeatureSequence {
            video_id,
            modality,
            data,
        })
    }

    pub fn video_id(&self) -> &str {
        &self.video_id
    }

    pub fn modality(&self) -> &str {
        &self.modality
    }

    pub fn data(&self) -> &Array2<f32> {
        &self.data
    }

    pub fn into_data(self) -> Array2<f32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    /// Feature matrix widened to f64 for the numeric layers.
    pub fn to_f64(&self) -> Array2<f64> {
        self.data.mapv(f64::from)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn rejects_nan_at_ingestion() {
        let err = FeatureSequence::new("v", "face", array![[0.0f32, f32::NAN]]).unwrap_err();
        assert!(matches!(err, Error::NonFinite { row: 0, col: 1, .. }));
    }

    #[test]
    fn rejects_empty() {
        assert!(FeatureSequence::new("v", "face", Array2::<f32>::zeros((0, 3))).is_err());
    }
}
