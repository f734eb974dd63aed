//! Frame-wise ambivalence/hesitancy detection: sigmoid heads per modality
//! (late) or over concatenated aligned features (early), smoothing,
//! confidence filtering and an optional video gate on mean text features.

use std::collections::BTreeMap;

use ndarray::{concatenate, Array2, Axis};

use super::data::{all_labelled, binary_labels, frame_features, split_videos, stack};
use super::metrics::metric_binary_f1;
use super::report::{FrameOutcome, FramePredictions, FrameSource, MetricsReport, VideoMetrics};
use super::{check_model_dim, describe, fit_head, run_digest, FusionMode, FusionSpec, ModelSet, TrainSettings, EARLY_KEY};
use crate::error::{Error, Result};
use crate::featpack::{FeaturePack, Task};
use crate::neural::{logreg_predict, logreg_train, Head, LossKind, LossSpec, Targets, TrainConfig, TrainHistory};
use crate::seed::derive_seed;
use crate::temporal::{blend_n, filter_select, mean_aggregate, smooth, ProbTrack};

fn check_task(pack: &FeaturePack, spec: &FusionSpec) -> Result<()> {
    if pack.manifest().task != Task::Ah {
        return Err(Error::invalid(format!(
            "pack task is {}, expected AH",
            pack.manifest().task
        )));
    }
    spec.check(Task::Ah)?;
    for m in &spec.modalities {
        pack.modality(m)?;
    }
    if let Some(s) = &spec.score_modality {
        pack.modality(s)?;
    }
    if spec.mode == FusionMode::Gated {
        let gate = spec.gate_modality.as_deref().expect("checked by spec");
        pack.modality(gate)
            .map_err(|_| Error::invalid(format!("gate modality `{gate}` is not in the pack")))?;
    }
    Ok(())
}

/// Frame-aligned input of each head for one video.
fn head_inputs(pack: &FeaturePack, spec: &FusionSpec, video: &str) -> Result<Vec<(String, Array2<f64>)>> {
    let per_modality = spec
        .modalities
        .iter()
        .map(|m| Ok((m.clone(), frame_features(pack, video, m)?)))
        .collect::<Result<Vec<_>>>()?;
    if spec.mode == FusionMode::LateBlend {
        return Ok(per_modality);
    }
    let views: Vec<_> = per_modality.iter().map(|(_, x)| x.view()).collect();
    let joined = concatenate(Axis(1), &views).expect("aligned to the frame clock");
    Ok(vec![(EARLY_KEY.to_string(), joined)])
}

fn gate_features(pack: &FeaturePack, modality: &str, videos: &[&str]) -> Result<Array2<f64>> {
    let rows = videos
        .iter()
        .map(|v| mean_aggregate(&pack.sequence(v, modality)?))
        .collect::<Result<Vec<_>>>()?;
    let d = rows[0].len();
    Array2::from_shape_vec((videos.len(), d), rows.into_iter().flatten().collect())
        .map_err(|e| Error::invalid(format!("gate feature shape: {e}")))
}

fn dense_targets(videos: &[&str], pack: &FeaturePack) -> Result<Targets> {
    let mut y = Vec::new();
    for v in videos {
        y.extend(binary_labels(pack, v)?.into_iter().map(|b| if b { 1.0 } else { 0.0 }));
    }
    let n = y.len();
    Ok(Targets::Dense(Array2::from_shape_vec((n, 1), y).expect("n×1")))
}

/// Trains the frame heads and, in gated mode, the video gate. A video's gate
/// label is positive when any of its frames is.
pub fn train_ah(
    pack: &FeaturePack,
    spec: &FusionSpec,
    settings: &TrainSettings,
) -> Result<(ModelSet, BTreeMap<String, TrainHistory>)> {
    check_task(pack, spec)?;
    let ids = pack.video_ids();
    let (train_ids, val_ids) =
        split_videos(&ids, settings.validation_fraction, derive_seed(settings.train.seed, "split"))?;

    let features = |videos: &[&str]| -> Result<Vec<(String, Array2<f64>)>> {
        let per_video = videos
            .iter()
            .map(|v| head_inputs(pack, spec, v))
            .collect::<Result<Vec<_>>>()?;
        let keys: Vec<String> = per_video[0].iter().map(|(k, _)| k.clone()).collect();
        keys.iter()
            .enumerate()
            .map(|(i, k)| {
                let blocks: Vec<Array2<f64>> = per_video.iter().map(|h| h[i].1.clone()).collect();
                Ok((k.clone(), stack(&blocks)?))
            })
            .collect()
    };
    let targets = dense_targets(&train_ids, pack)?;
    let val = if val_ids.is_empty() {
        None
    } else {
        Some((features(&val_ids)?, dense_targets(&val_ids, pack)?))
    };
    let loss = LossSpec::new(LossKind::Bce);

    let mut models = ModelSet::default();
    let mut histories = BTreeMap::new();
    for (i, (key, x)) in features(&train_ids)?.into_iter().enumerate() {
        let validation = val.as_ref().map(|(vx, vy)| (&vx[i].1, vy));
        let (model, history) =
            fit_head(&format!("ah/{key}"), &x, &targets, validation, &loss, Head::Sigmoid, 1, settings)?;
        models.mlps.insert(key.clone(), model);
        histories.insert(key, history);
    }

    if spec.mode == FusionMode::Gated {
        let modality = spec.gate_modality.as_deref().expect("checked by spec");
        let x = gate_features(pack, modality, &train_ids)?;
        let y = train_ids
            .iter()
            .map(|v| Ok(binary_labels(pack, v)?.contains(&true)))
            .collect::<Result<Vec<bool>>>()?;
        let cfg = TrainConfig {
            seed: derive_seed(settings.train.seed, "shuffle/ah/gate"),
            ..settings.gate.clone()
        };
        models.gate = Some(logreg_train(&x, &y, &cfg).map_err(|e| match e {
            Error::InvalidArgument(msg) => Error::InvalidArgument(format!("training the gate: {msg}")),
            other => other,
        })?);
    }
    Ok((models, histories))
}

/// Per video: positive-class probabilities from the heads as two-column
/// tracks, blended (late) or taken directly (early), smoothed with `k`,
/// filtered against `score_modality` when `t` is set, and finally forced to
/// 0 when the gate rejects the video.
pub fn run_ah(pack: &FeaturePack, models: &ModelSet, spec: &FusionSpec) -> Result<FrameOutcome> {
    check_task(pack, spec)?;
    let smooth_spec = spec.smooth_spec()?;
    let filter = spec.filter_spec()?;
    let blend = match spec.mode {
        FusionMode::LateBlend => Some(spec.blend_spec()?),
        _ => None,
    };
    let ids = pack.video_ids();

    let accepted: Vec<bool> = match spec.mode {
        FusionMode::Gated => {
            let gate = models
                .gate
                .as_ref()
                .ok_or_else(|| Error::invalid("gated mode needs a trained gate"))?;
            let modality = spec.gate_modality.as_deref().expect("checked by spec");
            logreg_predict(gate, &gate_features(pack, modality, &ids)?)?.1
        }
        _ => vec![true; ids.len()],
    };

    let mut videos = Vec::with_capacity(ids.len());
    for (id, &accept) in ids.iter().zip(&accepted) {
        let mut tracks = Vec::new();
        for (key, x) in head_inputs(pack, spec, id)? {
            let model = models.mlp(&key)?;
            check_model_dim(&key, model, x.ncols())?;
            if model.output_dim() != 1 {
                return Err(Error::dim(format!("outputs of model `{key}`"), 1, model.output_dim()));
            }
            let p = model.forward(&x)?.outputs;
            tracks.push(ProbTrack::from_binary(*id, p.as_slice().expect("contiguous"))?);
        }
        let fused = match &blend {
            Some(b) => blend_n(&tracks, b)?,
            None => tracks.pop().expect("one early head"),
        };
        let fused = smooth(&fused, smooth_spec);
        let (mut labels, mut sources): (Vec<usize>, Vec<FrameSource>) = match (filter, &spec.score_modality) {
            (Some(f), Some(scores)) => {
                let x = frame_features(pack, id, scores)?;
                if x.ncols() != 2 {
                    return Err(Error::dim(format!("columns of `{scores}`"), 2, x.ncols()));
                }
                let (labels, sources) = filter_select(&ProbTrack::new(*id, x)?, &fused, f.t())?;
                (labels, sources.into_iter().map(FrameSource::from).collect())
            }
            _ => {
                let labels = fused.argmax();
                let n = labels.len();
                (labels, vec![FrameSource::Fused; n])
            }
        };
        if !accept {
            labels.iter_mut().for_each(|l| *l = 0);
            sources.iter_mut().for_each(|s| *s = FrameSource::Gated);
        }
        videos.push(FramePredictions { video_id: id.to_string(), labels, sources });
    }

    let mut report = MetricsReport {
        task: Task::Ah,
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
    let labelled = all_labelled(pack, &ids);
    let mut all_pred = Vec::new();
    let mut all_true = Vec::new();
    for (v, &accept) in videos.iter().zip(&accepted) {
        let mut row = VideoMetrics {
            video_id: v.video_id.clone(),
            frames: Some(v.labels.len()),
            gated_out: (spec.mode == FusionMode::Gated).then_some(!accept),
            ..Default::default()
        };
        if labelled {
            let pred: Vec<bool> = v.labels.iter().map(|&l| l == 1).collect();
            let truth = binary_labels(pack, &v.video_id)?;
            row.binary_f1 = Some(metric_binary_f1(&pred, &truth)?);
            all_pred.extend(pred);
            all_true.extend(truth);
        }
        report.per_video.push(row);
    }
    if labelled {
        report.binary_f1 = Some(metric_binary_f1(&all_pred, &all_true)?);
    }
    Ok(FrameOutcome { videos, report })
}
