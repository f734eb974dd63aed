//! Frame-wise expression classification: per-modality softmax heads,
//! face/audio blending, box smoothing and confidence filtering against a
//! frozen model's probabilities.

use std::collections::BTreeMap;

use super::data::{all_labelled, class_labels, frame_features, split_videos, stack};
use super::metrics::{metric_accuracy, metric_macro_f1};
use super::report::{FrameOutcome, FramePredictions, FrameSource, MetricsReport, VideoMetrics};
use super::{check_model_dim, describe, fit_head, run_digest, FusionSpec, ModelSet, TrainSettings};
use crate::error::{Error, Result};
use crate::featpack::{FeaturePack, Task, EXPR_CLASSES};
use crate::neural::{Head, LossKind, LossSpec, Targets, TrainHistory};
use crate::seed::derive_seed;
use crate::temporal::{blend2, filter_select, smooth, ProbTrack};

fn check_task(pack: &FeaturePack, spec: &FusionSpec) -> Result<()> {
    if pack.manifest().task != Task::Expr {
        return Err(Error::invalid(format!(
            "pack task is {}, expected EXPR",
            pack.manifest().task
        )));
    }
    spec.check(Task::Expr)?;
    for m in &spec.modalities {
        pack.modality(m)?;
    }
    if let Some(s) = &spec.score_modality {
        pack.modality(s)?;
    }
    Ok(())
}

/// Inverse-frequency weights; classes never seen count once.
fn inverse_frequency(labels: &[usize], classes: usize) -> Vec<f64> {
    let mut counts = vec![0usize; classes];
    labels.iter().for_each(|&l| counts[l] += 1);
    counts.iter().map(|&c| 1.0 / c.max(1) as f64).collect()
}

/// Trains one softmax head per modality in `spec.modalities`.
pub fn train_expr(
    pack: &FeaturePack,
    spec: &FusionSpec,
    settings: &TrainSettings,
) -> Result<(ModelSet, BTreeMap<String, TrainHistory>)> {
    check_task(pack, spec)?;
    let ids = pack.video_ids();
    let (train_ids, val_ids) =
        split_videos(&ids, settings.validation_fraction, derive_seed(settings.train.seed, "split"))?;

    let labels_for = |videos: &[&str]| -> Result<Vec<usize>> {
        let mut all = Vec::new();
        for v in videos {
            all.extend(class_labels(pack, v)?);
        }
        if let Some(bad) = all.iter().find(|&&c| c >= EXPR_CLASSES) {
            return Err(Error::invalid(format!("class id {bad} outside [0, {EXPR_CLASSES})")));
        }
        Ok(all)
    };
    let train_labels = labels_for(&train_ids)?;
    let val_labels = labels_for(&val_ids)?;
    let loss = if settings.class_weights {
        LossSpec::with_weights(
            LossKind::CrossEntropy,
            &inverse_frequency(&train_labels, EXPR_CLASSES),
        )?
    } else {
        LossSpec::new(LossKind::CrossEntropy)
    };

    let mut models = ModelSet::default();
    let mut histories = BTreeMap::new();
    for modality in &spec.modalities {
        let features = |videos: &[&str]| -> Result<_> {
            let blocks = videos
                .iter()
                .map(|v| frame_features(pack, v, modality))
                .collect::<Result<Vec<_>>>()?;
            stack(&blocks)
        };
        let x = features(&train_ids)?;
        let targets = Targets::Classes(train_labels.clone());
        let val = if val_ids.is_empty() {
            None
        } else {
            Some((features(&val_ids)?, Targets::Classes(val_labels.clone())))
        };
        let (model, history) = fit_head(
            &format!("expr/{modality}"),
            &x,
            &targets,
            val.as_ref().map(|(a, b)| (a, b)),
            &loss,
            Head::Softmax,
            EXPR_CLASSES,
            settings,
        )?;
        models.mlps.insert(modality.clone(), model);
        histories.insert(modality.clone(), history);
    }
    Ok((models, histories))
}

/// Per video: face and (optional) audio posteriors from their heads, audio
/// aligned to the frame clock, blended with `w = weights[0]`, smoothed with
/// kernel `k`, then filtered against `score_modality` when `t` is set.
pub fn run_expr(pack: &FeaturePack, models: &ModelSet, spec: &FusionSpec) -> Result<FrameOutcome> {
    check_task(pack, spec)?;
    let smooth_spec = spec.smooth_spec()?;
    let filter = spec.filter_spec()?;
    let w = spec.blend_spec()?.weights()[0];
    for m in &spec.modalities {
        check_model_dim(m, models.mlp(m)?, pack.modality(m)?.dim)?;
    }
    let face_model = models.mlp(&spec.modalities[0])?;
    let classes = face_model.output_dim();
    if let Some(audio) = spec.modalities.get(1) {
        if models.mlp(audio)?.output_dim() != classes {
            return Err(Error::dim("audio model classes", classes, models.mlp(audio)?.output_dim()));
        }
    }

    let ids = pack.video_ids();
    let mut videos = Vec::with_capacity(ids.len());
    for id in &ids {
        let posterior = |modality: &str| -> Result<ProbTrack> {
            let x = frame_features(pack, id, modality)?;
            ProbTrack::new(*id, models.mlp(modality)?.forward(&x)?.outputs)
        };
        let face = posterior(&spec.modalities[0])?;
        let fused = match spec.modalities.get(1) {
            Some(audio) => blend2(&face, &posterior(audio)?, w)?,
            None => face,
        };
        let fused = smooth(&fused, smooth_spec);
        let (labels, sources) = match (filter, &spec.score_modality) {
            (Some(f), Some(scores)) => {
                let x = frame_features(pack, id, scores)?;
                if x.ncols() != classes {
                    return Err(Error::dim(format!("classes of `{scores}`"), classes, x.ncols()));
                }
                let pretrained = ProbTrack::new(*id, x)?;
                let (labels, sources) = filter_select(&pretrained, &fused, f.t())?;
                (labels, sources.into_iter().map(FrameSource::from).collect())
            }
            _ => {
                let labels = fused.argmax();
                let sources = vec![FrameSource::Fused; labels.len()];
                (labels, sources)
            }
        };
        videos.push(FramePredictions {
            video_id: id.to_string(),
            labels,
            sources,
        });
    }

    let mut report = MetricsReport {
        task: Task::Expr,
        method: describe(spec),
        modalities: spec.modalities.clone(),
        macro_f1: None,
        accuracy: None,
        per_emotion_pcc: None,
        mean_pcc: None,
        binary_f1: None,
        config_digest: run_digest(spec, pack, models),
        per_video: Vec::new(),
    };
    if all_labelled(pack, &ids) {
        let mut all_pred = Vec::new();
        let mut all_true = Vec::new();
        for v in &videos {
            let truth = class_labels(pack, &v.video_id)?;
            report.per_video.push(VideoMetrics {
                video_id: v.video_id.clone(),
                frames: Some(v.labels.len()),
                accuracy: Some(metric_accuracy(&v.labels, &truth)?),
                ..Default::default()
            });
            all_pred.extend_from_slice(&v.labels);
            all_true.extend(truth);
        }
        report.macro_f1 = Some(metric_macro_f1(&all_pred, &all_true, classes)?);
        report.accuracy = Some(metric_accuracy(&all_pred, &all_true)?);
    } else {
        report.per_video = videos
            .iter()
            .map(|v| VideoMetrics {
                video_id: v.video_id.clone(),
                frames: Some(v.labels.len()),
                ..Default::default()
            })
            .collect();
    }
    Ok(FrameOutcome { videos, report })
}
