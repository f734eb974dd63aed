use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{bce_from_logits, loss_cross_entropy, loss_weighted_pearson, LossKind, LossSpec, Targets};
use super::mlp::{argmax_rows, Cache, Head, MlpModel};
use crate::error::{Error, Result};

/// Mini-batch gradient descent settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    #[serde(default)]
    pub l2: f64,
    #[serde(default)]
    pub early_stop_patience: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            epochs: 100,
            batch_size: 64,
            seed: 0,
            l2: 0.0,
            early_stop_patience: None,
        }
    }
}

impl TrainConfig {
    pub fn check(&self, n: usize, loss: LossKind) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::invalid(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if !(self.l2.is_finite() && self.l2 >= 0.0) {
            return Err(Error::invalid(format!("l2 must be >= 0, got {}", self.l2)));
        }
        let min_batch = if loss == LossKind::NegWeightedPearson { 2 } else { 1 };
        if self.batch_size < min_batch {
            return Err(Error::invalid(format!(
                "batch_size must be at least {min_batch} for {loss:?}, got {}",
                self.batch_size
            )));
        }
        if self.batch_size > n {
            return Err(Error::invalid(format!(
                "batch_size {} exceeds the number of training samples {n}",
                self.batch_size
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    /// Accuracy for classification losses, weighted correlation for Pearson.
    pub val_metric: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were returned.
    pub best_epoch: usize,
}

/// Evaluates `spec` on the model outputs and maps the gradient back to logits.
pub(crate) fn loss_and_logit_grad(
    model: &MlpModel,
    cache: &Cache,
    targets: &Targets,
    spec: &LossSpec,
) -> Result<(f64, Array2<f64>)> {
    let fwd = &cache.forward;
    match (spec.kind, targets) {
        (LossKind::CrossEntropy, Targets::Classes(labels)) => {
            if model.head != Head::Softmax {
                return Err(Error::invalid("cross-entropy requires a softmax head"));
            }
            loss_cross_entropy(&fwd.logits, labels, spec.class_weights.as_deref())
        }
        (LossKind::Bce, Targets::Dense(t)) => {
            if model.head != Head::Sigmoid {
                return Err(Error::invalid("bce requires a sigmoid head"));
            }
            bce_from_logits(&fwd.logits, t)
        }
        (LossKind::NegWeightedPearson, Targets::Dense(t)) => {
            let c = model.output_dim();
            let uniform;
            let weights = match spec.class_weights.as_deref() {
                Some(w) => w,
                None => {
                    uniform = vec![1.0; c];
                    &uniform
                }
            };
            let (loss, dpred) = loss_weighted_pearson(&fwd.outputs, t, weights)?;
            let dlogits = match model.head {
                Head::Sigmoid => dpred * fwd.outputs.mapv(|p| p * (1.0 - p)),
                Head::Linear => dpred,
                Head::Softmax => {
                    return Err(Error::invalid("pearson loss needs a sigmoid or linear head"))
                }
            };
            Ok((loss, dlogits))
        }
        (kind, _) => Err(Error::invalid(format!(
            "targets do not match loss kind {kind:?}"
        ))),
    }
}

/// Loss of `model` on a batch, no gradient.
pub fn evaluate_loss(
    model: &MlpModel,
    features: &Array2<f64>,
    targets: &Targets,
    spec: &LossSpec,
) -> Result<f64> {
    let cache = model.forward_cached(features)?;
    Ok(loss_and_logit_grad(model, &cache, targets, spec)?.0)
}

fn validation_metric(
    model: &MlpModel,
    features: &Array2<f64>,
    targets: &Targets,
    spec: &LossSpec,
    val_loss: f64,
) -> Result<f64> {
    let out = model.forward(features)?.outputs;
    Ok(match (spec.kind, targets) {
        (LossKind::CrossEntropy, Targets::Classes(labels)) => {
            let pred = argmax_rows(&out);
            let hits = pred.iter().zip(labels).filter(|(a, b)| a == b).count();
            hits as f64 / labels.len() as f64
        }
        (LossKind::Bce, Targets::Dense(t)) => {
            let hits = out
                .iter()
                .zip(t.iter())
                .filter(|(p, y)| (**p > 0.5) == (**y > 0.5))
                .count();
            hits as f64 / t.len() as f64
        }
        _ => -val_loss,
    })
}

/// Shuffled mini-batch row indices for one epoch. A trailing batch smaller
/// than `min_len` is dropped.
pub(crate) fn epoch_batches(
    rng: &mut ChaCha8Rng,
    n: usize,
    batch_size: usize,
    min_len: usize,
) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order
        .chunks(batch_size)
        .filter(|c| c.len() >= min_len)
        .map(<[usize]>::to_vec)
        .collect()
}

/// Trains `model` with plain mini-batch gradient descent.
///
/// Shuffling is driven by `cfg.seed`, so identical inputs give bitwise
/// identical parameters. With `early_stop_patience` set, a validation split
/// is required and the best-validation-loss snapshot is returned.
pub fn train(
    mut model: MlpModel,
    features: &Array2<f64>,
    targets: &Targets,
    spec: &LossSpec,
    cfg: &TrainConfig,
    validation: Option<(&Array2<f64>, &Targets)>,
) -> Result<(MlpModel, TrainHistory)> {
    let n = features.nrows();
    if targets.len() != n {
        return Err(Error::dim("training targets", n, targets.len()));
    }
    if features.ncols() != model.input_dim() {
        return Err(Error::dim("training features", model.input_dim(), features.ncols()));
    }
    if let Some((vx, vt)) = validation {
        if vx.nrows() != vt.len() {
            return Err(Error::dim("validation targets", vx.nrows(), vt.len()));
        }
    }
    if cfg.early_stop_patience.is_some() && validation.is_none() {
        return Err(Error::invalid("early_stop_patience requires a validation split"));
    }
    cfg.check(n, spec.kind)?;

    let min_len = if spec.kind == LossKind::NegWeightedPearson { 2 } else { 1 };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, MlpModel, usize)> = None;
    let mut since_best = 0;

    for epoch in 0..cfg.epochs {
        let mut total = 0.0;
        let mut seen = 0usize;
        for (b, rows) in epoch_batches(&mut rng, n, cfg.batch_size, min_len)
            .into_iter()
            .enumerate()
        {
            let x = features.select(Axis(0), &rows);
            let t = targets.select(&rows);
            let cache = model.forward_cached(&x)?;
            let (loss, dlogits) = loss_and_logit_grad(&model, &cache, &t, spec)?;
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: b,
                    reason: format!("loss is {loss}"),
                });
            }
            let grads = model.backward(&x, &cache, &dlogits);
            model.apply(&grads, cfg.learning_rate, cfg.l2);
            if !model.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: b,
                    reason: "non-finite parameters after update".into(),
                });
            }
            total += loss * rows.len() as f64;
            seen += rows.len();
        }
        let train_loss = total / seen.max(1) as f64;

        let mut record = EpochRecord {
            epoch,
            train_loss,
            val_loss: None,
            val_metric: None,
        };
        if let Some((vx, vt)) = validation {
            let val_loss = evaluate_loss(&model, vx, vt, spec)?;
            record.val_loss = Some(val_loss);
            record.val_metric = Some(validation_metric(&model, vx, vt, spec, val_loss)?);
            if best.as_ref().is_none_or(|(l, _, _)| val_loss < *l) {
                best = Some((val_loss, model.clone(), epoch));
                since_best = 0;
            } else {
                since_best += 1;
            }
        }
        history.epochs.push(record);
        if let Some(patience) = cfg.early_stop_patience {
            if since_best > patience {
                break;
            }
        }
    }

    history.best_epoch = history.epochs.len() - 1;
    if cfg.early_stop_patience.is_some() {
        if let Some((_, snapshot, epoch)) = best {
            history.best_epoch = epoch;
            model = snapshot;
        }
    }
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::mlp::mlp_init;
    use rand::Rng;

    /// Two Gaussian blobs in 4-D, centred at ±2 on every axis.
    fn blobs(n: usize, seed: u64) -> (Array2<f64>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let mut x = Array2::zeros((n, 4));
        for (i, &l) in labels.iter().enumerate() {
            let centre = if l == 0 { -2.0 } else { 2.0 };
            for j in 0..4 {
                // uniform noise of width 2 keeps a hard margin between the blobs
                x[[i, j]] = centre + rng.random_range(-1.0..1.0);
            }
        }
        (x, labels)
    }

    fn accuracy(model: &MlpModel, x: &Array2<f64>, labels: &[usize]) -> f64 {
        let pred = argmax_rows(&model.forward(x).unwrap().outputs);
        pred.iter().zip(labels).filter(|(a, b)| a == b).count() as f64 / labels.len() as f64
    }

    #[test]
    fn separable_blobs_are_learned() {
        let (x, y) = blobs(500, 3);
        let model = mlp_init(4, 16, 2, Head::Softmax, 1).unwrap();
        let spec = LossSpec::new(LossKind::CrossEntropy);
        let (trained, history) =
            train(model, &x, &Targets::Classes(y.clone()), &spec, &TrainConfig::default(), None)
                .unwrap();
        assert_eq!(history.epochs.len(), 100);
        assert!(accuracy(&trained, &x, &y) >= 0.99);
        // held-out replication from a fresh draw
        let (hx, hy) = blobs(500, 4);
        assert!(accuracy(&trained, &hx, &hy) >= 0.99);
    }

    #[test]
    fn training_is_deterministic() {
        let (x, y) = blobs(100, 5);
        let spec = LossSpec::new(LossKind::CrossEntropy);
        let cfg = TrainConfig { epochs: 5, batch_size: 16, seed: 11, ..Default::default() };
        let run = || {
            let m = mlp_init(4, 8, 2, Head::Softmax, 2).unwrap();
            train(m, &x, &Targets::Classes(y.clone()), &spec, &cfg, None).unwrap().0
        };
        let (a, b) = (run(), run());
        let bits = |m: &MlpModel| m.w1.iter().chain(m.w2.iter()).map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert_eq!(a.b1, b.b1);
    }

    #[test]
    fn zero_epochs_rejected() {
        let (x, y) = blobs(10, 0);
        let m = mlp_init(4, 4, 2, Head::Softmax, 0).unwrap();
        let cfg = TrainConfig { epochs: 0, batch_size: 4, ..Default::default() };
        let err = train(m, &x, &Targets::Classes(y), &LossSpec::new(LossKind::CrossEntropy), &cfg, None);
        assert!(err.is_err());
    }

    #[test]
    fn batch_larger_than_n_names_both_numbers() {
        let (x, y) = blobs(10, 0);
        let m = mlp_init(4, 4, 2, Head::Softmax, 0).unwrap();
        let cfg = TrainConfig { batch_size: 64, ..Default::default() };
        let err = train(m, &x, &Targets::Classes(y), &LossSpec::new(LossKind::CrossEntropy), &cfg, None)
            .unwrap_err()
            .to_string();
        assert!(err.contains("64") && err.contains("10"), "{err}");
    }

    #[test]
    fn divergence_names_epoch_and_batch() {
        let (x, y) = blobs(64, 0);
        let x = x * 1e200;
        let m = mlp_init(4, 4, 2, Head::Softmax, 0).unwrap();
        let cfg = TrainConfig { learning_rate: 1e200, epochs: 3, batch_size: 32, ..Default::default() };
        let err = train(m, &x, &Targets::Classes(y), &LossSpec::new(LossKind::CrossEntropy), &cfg, None)
            .unwrap_err();
        assert!(matches!(err, Error::Diverged { epoch: 0, .. }), "{err}");
    }

    #[test]
    fn early_stopping_returns_best_snapshot() {
        let (x, y) = blobs(200, 1);
        let (vx, vy) = blobs(100, 2);
        let vt = Targets::Classes(vy);
        let spec = LossSpec::new(LossKind::CrossEntropy);
        let cfg = TrainConfig {
            learning_rate: 0.5,
            epochs: 60,
            batch_size: 8,
            early_stop_patience: Some(2),
            ..Default::default()
        };
        let m = mlp_init(4, 8, 2, Head::Softmax, 3).unwrap();
        let (trained, history) =
            train(m, &x, &Targets::Classes(y), &spec, &cfg, Some((&vx, &vt))).unwrap();
        let best = history
            .epochs
            .iter()
            .map(|r| r.val_loss.unwrap())
            .fold(f64::INFINITY, f64::min);
        assert_eq!(history.epochs[history.best_epoch].val_loss.unwrap(), best);
        assert_eq!(evaluate_loss(&trained, &vx, &vt, &spec).unwrap(), best);
    }

    #[test]
    fn patience_without_validation_is_rejected() {
        let (x, y) = blobs(10, 0);
        let m = mlp_init(4, 4, 2, Head::Softmax, 0).unwrap();
        let cfg = TrainConfig { batch_size: 4, early_stop_patience: Some(1), ..Default::default() };
        assert!(train(m, &x, &Targets::Classes(y), &LossSpec::new(LossKind::CrossEntropy), &cfg, None).is_err());
    }

    #[test]
    fn pearson_trailing_singleton_batch_is_dropped() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let batches = epoch_batches(&mut rng, 9, 4, 2);
        assert_eq!(batches.iter().map(Vec::len).collect::<Vec<_>>(), vec![4, 4]);
    }
}
