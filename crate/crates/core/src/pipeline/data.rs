use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Descriptor;
use crate::error::{Error, Result};
use crate::featpack::{align_to_frames, FeaturePack, FeatureSequence, LabelPayload, ModalityKind};
use crate::temporal::{mean_aggregate, stat_aggregate};

/// Sequence of `modality` resampled to the video's frame clock.
pub fn aligned_sequence(pack: &FeaturePack, video: &str, modality: &str) -> Result<FeatureSequence> {
    let decl = pack.modality(modality)?;
    let seq = pack.sequence(video, modality)?;
    if seq.dim() != decl.dim {
        return Err(Error::dim(format!("{video}/{modality}"), decl.dim, seq.dim()));
    }
    let frames = pack.frames(video)?;
    if seq.len() == frames {
        Ok(seq)
    } else {
        align_to_frames(&seq, frames)
    }
}

/// Frame-aligned features of one video as f64.
pub fn frame_features(pack: &FeaturePack, video: &str, modality: &str) -> Result<Array2<f64>> {
    Ok(aligned_sequence(pack, video, modality)?.to_f64())
}

fn labels_of(pack: &FeaturePack, video: &str) -> Result<LabelPayload> {
    pack.labels(video)?
        .map(|t| t.payload)
        .ok_or_else(|| Error::invalid(format!("video `{video}` has no labels")))
}

fn check_frame_len(pack: &FeaturePack, video: &str, len: usize) -> Result<()> {
    let frames = pack.frames(video)?;
    if len != frames {
        return Err(Error::dim(format!("frame labels of `{video}`"), frames, len));
    }
    Ok(())
}

pub(crate) fn class_labels(pack: &FeaturePack, video: &str) -> Result<Vec<usize>> {
    match labels_of(pack, video)? {
        LabelPayload::Classes(v) => {
            check_frame_len(pack, video, v.len())?;
            Ok(v.into_iter().map(|c| c as usize).collect())
        }
        _ => Err(Error::invalid(format!("video `{video}` does not carry class labels"))),
    }
}

pub(crate) fn binary_labels(pack: &FeaturePack, video: &str) -> Result<Vec<bool>> {
    match labels_of(pack, video)? {
        LabelPayload::Binary(v) => {
            check_frame_len(pack, video, v.len())?;
            if let Some(bad) = v.iter().find(|&&f| f > 1) {
                return Err(Error::invalid(format!("video `{video}` has flag value {bad}")));
            }
            Ok(v.into_iter().map(|f| f == 1).collect())
        }
        _ => Err(Error::invalid(format!("video `{video}` does not carry binary labels"))),
    }
}

pub(crate) fn intensity_labels(pack: &FeaturePack, video: &str) -> Result<Vec<f64>> {
    match labels_of(pack, video)? {
        LabelPayload::Intensities(v) => {
            if v.iter().any(|x| !(0.0..=1.0).contains(x)) {
                return Err(Error::invalid(format!("video `{video}` has intensities outside [0, 1]")));
            }
            Ok(v)
        }
        _ => Err(Error::invalid(format!("video `{video}` does not carry intensities"))),
    }
}

/// True when every listed video has a label document.
pub(crate) fn all_labelled(pack: &FeaturePack, videos: &[&str]) -> bool {
    videos
        .iter()
        .all(|v| pack.manifest().video(v).is_some_and(|d| d.labels_file.is_some()))
}

/// Default pooling for a modality kind: STAT over score/logit tracks, mean
/// over embeddings.
pub(crate) fn default_descriptor(kind: ModalityKind) -> Descriptor {
    match kind {
        ModalityKind::Embedding => Descriptor::Mean,
        ModalityKind::Logits | ModalityKind::Probabilities => Descriptor::Stat,
    }
}

/// Video-level descriptor of one modality track (at its native rate).
pub fn video_descriptor(
    pack: &FeaturePack,
    video: &str,
    modality: &str,
    descriptor: Descriptor,
) -> Result<Vec<f64>> {
    let seq = pack.sequence(video, modality)?;
    match descriptor {
        Descriptor::Mean => mean_aggregate(&seq),
        Descriptor::Stat => Ok(stat_aggregate(&seq)?.0),
    }
}

/// Deterministic video-level split: `fraction` of the (sorted) ids, chosen by
/// a seeded shuffle, go to validation. Both halves come back sorted.
pub fn split_videos<'a>(ids: &[&'a str], fraction: f64, seed: u64) -> Result<(Vec<&'a str>, Vec<&'a str>)> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::invalid(format!("validation fraction must lie in [0, 1), got {fraction}")));
    }
    let mut sorted = ids.to_vec();
    sorted.sort_unstable();
    let n_val = (sorted.len() as f64 * fraction).round() as usize;
    if n_val == 0 {
        return Ok((sorted, Vec::new()));
    }
    if n_val >= sorted.len() {
        return Err(Error::invalid("validation split leaves no training videos"));
    }
    let mut shuffled = sorted.clone();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut val: Vec<&str> = shuffled[..n_val].to_vec();
    let mut train: Vec<&str> = shuffled[n_val..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    Ok((train, val))
}

/// Row-stacks per-video blocks.
pub(crate) fn stack(blocks: &[Array2<f64>]) -> Result<Array2<f64>> {
    let views: Vec<_> = blocks.iter().map(|b| b.view()).collect();
    ndarray::concatenate(ndarray::Axis(0), &views)
        .map_err(|e| Error::invalid(format!("cannot stack feature blocks: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let ids = ["e", "b", "a", "d", "c", "f", "g", "h", "i", "j"];
        let (t1, v1) = split_videos(&ids, 0.3, 5).unwrap();
        let (t2, v2) = split_videos(&ids, 0.3, 5).unwrap();
        assert_eq!((t1.clone(), v1.clone()), (t2, v2));
        assert_eq!(v1.len(), 3);
        assert_eq!(t1.len(), 7);
        assert!(v1.iter().all(|v| !t1.contains(v)));
        let (all, none) = split_videos(&ids, 0.0, 5).unwrap();
        assert_eq!(all.len(), 10);
        assert!(none.is_empty());
        assert!(split_videos(&ids, 1.0, 5).is_err());
    }
}
