//! Video-level emotional-mimicry intensity estimation: STAT or mean
//! descriptors per modality, six-output sigmoid heads trained on the negative
//! weighted Pearson loss, and late (weighted) or early (concatenated) fusion.

use std::collections::BTreeMap;

use ndarray::{concatenate, Array2, Axis};

use super::data::{all_labelled, default_descriptor, intensity_labels, split_videos, video_descriptor};
use super::metrics::metric_pearson;
use super::report::{EmiOutcome, MetricsReport, VideoMetrics};
use super::{describe, fit_head, run_digest, CountRule, Descriptor, FusionMode, FusionSpec, ModelSet, TrainSettings, EARLY_KEY};
use crate::error::{Error, Result};
use crate::featpack::{FeaturePack, Task, EMI_EMOTIONS};
use crate::neural::{emotion_weights_from_counts, Head, LossKind, LossSpec, Targets, TrainHistory};
use crate::seed::derive_seed;
use crate::temporal::blend_matrices;

fn check_task(pack: &FeaturePack, spec: &FusionSpec) -> Result<()> {
    if pack.manifest().task != Task::Emi {
        return Err(Error::invalid(format!(
            "pack task is {}, expected EMI",
            pack.manifest().task
        )));
    }
    spec.check(Task::Emi)?;
    for m in &spec.modalities {
        pack.modality(m)?;
    }
    if pack.manifest().videos.len() < 2 {
        return Err(Error::invalid("EMI needs at least 2 videos"));
    }
    Ok(())
}

fn descriptor_for(pack: &FeaturePack, spec: &FusionSpec, modality: &str) -> Result<Descriptor> {
    Ok(match spec.descriptors.get(modality) {
        Some(d) => *d,
        None => default_descriptor(pack.modality(modality)?.kind),
    })
}

/// N×d descriptor matrix of one modality over `videos`.
fn descriptor_matrix(pack: &FeaturePack, spec: &FusionSpec, modality: &str, videos: &[&str]) -> Result<Array2<f64>> {
    let kind = descriptor_for(pack, spec, modality)?;
    let rows = videos
        .iter()
        .map(|v| video_descriptor(pack, v, modality, kind))
        .collect::<Result<Vec<_>>>()?;
    let width = rows[0].len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Array2::from_shape_vec((videos.len(), width), flat)
        .map_err(|e| Error::invalid(format!("descriptor shape: {e}")))
}

fn inputs(pack: &FeaturePack, spec: &FusionSpec, videos: &[&str]) -> Result<Vec<(String, Array2<f64>)>> {
    let per_modality = spec
        .modalities
        .iter()
        .map(|m| Ok((m.clone(), descriptor_matrix(pack, spec, m, videos)?)))
        .collect::<Result<Vec<_>>>()?;
    if spec.mode == FusionMode::EarlyConcat {
        let views: Vec<_> = per_modality.iter().map(|(_, x)| x.view()).collect();
        let joined = concatenate(Axis(1), &views).expect("equal video counts");
        return Ok(vec![(EARLY_KEY.to_string(), joined)]);
    }
    Ok(per_modality)
}

fn target_matrix(pack: &FeaturePack, videos: &[&str]) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((videos.len(), EMI_EMOTIONS));
    for (i, v) in videos.iter().enumerate() {
        let y = intensity_labels(pack, v)?;
        if y.len() != EMI_EMOTIONS {
            return Err(Error::dim(format!("intensities of `{v}`"), EMI_EMOTIONS, y.len()));
        }
        out.row_mut(i).assign(&ndarray::ArrayView1::from(&y[..]));
    }
    Ok(out)
}

/// Per-emotion counts under `rule`, floored at one.
pub(crate) fn emotion_counts(targets: &Array2<f64>, rule: CountRule) -> Vec<u64> {
    let c = targets.ncols();
    let mut counts = vec![0u64; c];
    for row in targets.rows() {
        match rule {
            CountRule::Dominant => {
                let mut best = 0;
                for j in 1..c {
                    if row[j] > row[best] {
                        best = j;
                    }
                }
                counts[best] += 1;
            }
            CountRule::Nonzero => {
                for (j, &v) in row.iter().enumerate() {
                    if v > 0.0 {
                        counts[j] += 1;
                    }
                }
            }
            CountRule::Uniform => {}
        }
    }
    counts.into_iter().map(|n| n.max(1)).collect()
}

/// Trains the EMI heads: one per modality (late) or one over the
/// concatenated descriptors (early).
pub fn train_emi(
    pack: &FeaturePack,
    spec: &FusionSpec,
    settings: &TrainSettings,
) -> Result<(ModelSet, BTreeMap<String, TrainHistory>)> {
    check_task(pack, spec)?;
    let ids = pack.video_ids();
    let (train_ids, val_ids) =
        split_videos(&ids, settings.validation_fraction, derive_seed(settings.train.seed, "split"))?;
    let y = target_matrix(pack, &train_ids)?;
    for (c, col) in y.columns().into_iter().enumerate() {
        if col.iter().all(|&v| v == col[0]) {
            return Err(Error::invalid(format!(
                "target column {c} is constant over the training videos"
            )));
        }
    }
    let weights = emotion_weights_from_counts(&emotion_counts(&y, settings.count_rule))?;
    let loss = LossSpec::with_weights(LossKind::NegWeightedPearson, &weights)?;
    let val_y = if val_ids.is_empty() { None } else { Some(Targets::Dense(target_matrix(pack, &val_ids)?)) };
    let val_inputs = if val_ids.is_empty() { None } else { Some(inputs(pack, spec, &val_ids)?) };

    let targets = Targets::Dense(y);
    let mut models = ModelSet::default();
    let mut histories = BTreeMap::new();
    for (i, (key, x)) in inputs(pack, spec, &train_ids)?.into_iter().enumerate() {
        let val = match (&val_inputs, &val_y) {
            (Some(vx), Some(vy)) => Some((&vx[i].1, vy)),
            _ => None,
        };
        let (model, history) = fit_head(
            &format!("emi/{key}"),
            &x,
            &targets,
            val,
            &loss,
            Head::Sigmoid,
            EMI_EMOTIONS,
            settings,
        )?;
        models.mlps.insert(key.clone(), model);
        histories.insert(key, history);
    }
    Ok((models, histories))
}

/// Predicts the six intensities per video and reports per-emotion Pearson
/// correlation and its mean.
pub fn run_emi(pack: &FeaturePack, models: &ModelSet, spec: &FusionSpec) -> Result<EmiOutcome> {
    check_task(pack, spec)?;
    let ids = pack.video_ids();
    let mut outputs = Vec::new();
    for (key, x) in inputs(pack, spec, &ids)? {
        let model = models.mlp(&key)?;
        super::check_model_dim(&key, model, x.ncols())?;
        if model.output_dim() != EMI_EMOTIONS {
            return Err(Error::dim(format!("outputs of model `{key}`"), EMI_EMOTIONS, model.output_dim()));
        }
        outputs.push(model.forward(&x)?.outputs);
    }
    let fused = if spec.mode == FusionMode::EarlyConcat {
        outputs.pop().expect("one early head")
    } else {
        let refs: Vec<&Array2<f64>> = outputs.iter().collect();
        blend_matrices(&refs, &spec.blend_spec()?)?
    };

    let videos: Vec<(String, Vec<f64>)> = ids
        .iter()
        .zip(fused.rows())
        .map(|(id, row)| (id.to_string(), row.to_vec()))
        .collect();
    let mut report = MetricsReport {
        task: Task::Emi,
        method: describe(spec),
        modalities: spec.modalities.clone(),
        macro_f1: None,
        accuracy: None,
        per_emotion_pcc: None,
        mean_pcc: None,
        binary_f1: None,
        config_digest: run_digest(spec, pack, models),
        per_video: videos
            .iter()
            .map(|(id, p)| VideoMetrics {
                video_id: id.clone(),
                prediction: Some(p.clone()),
                ..Default::default()
            })
            .collect(),
    };
    if all_labelled(pack, &ids) {
        let y = target_matrix(pack, &ids)?;
        let targets: Vec<Vec<f64>> = y.rows().into_iter().map(|r| r.to_vec()).collect();
        let preds: Vec<Vec<f64>> = videos.iter().map(|(_, p)| p.clone()).collect();
        report.set_pearson(metric_pearson(&preds, &targets)?);
    }
    Ok(EmiOutcome { videos, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn count_rules() {
        let y = array![[0.9, 0.1, 0.0], [0.2, 0.8, 0.0], [0.7, 0.0, 0.3]];
        assert_eq!(emotion_counts(&y, CountRule::Dominant), vec![2, 1, 1]);
        assert_eq!(emotion_counts(&y, CountRule::Nonzero), vec![3, 2, 1]);
        assert_eq!(emotion_counts(&y, CountRule::Uniform), vec![1, 1, 1]);
    }
}
