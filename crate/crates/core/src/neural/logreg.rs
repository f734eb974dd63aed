use ndarray::{Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::mlp::sigmoid;
use super::train::{epoch_batches, TrainConfig};
use super::loss::LossKind;
use crate::error::{Error, Result};

/// Video-level binary gate: `p = sigmoid(w·x + b)`, positive iff `p > threshold`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRegModel {
    pub w: Array1<f64>,
    pub b: f64,
    pub decision_threshold: f64,
}

impl LogRegModel {
    pub fn new(w: Array1<f64>, b: f64) -> Self {
        LogRegModel {
            w,
            b,
            decision_threshold: 0.5,
        }
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    pub fn with_threshold(mut self, threshold: f64) -> Result<Self> {
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(Error::invalid(format!(
                "decision threshold must lie in (0, 1), got {threshold}"
            )));
        }
        self.decision_threshold = threshold;
        Ok(self)
    }

    pub fn rounded_to_f32(&self) -> LogRegModel {
        LogRegModel {
            w: self.w.mapv(|v| f64::from(v as f32)),
            b: f64::from(self.b as f32),
            decision_threshold: self.decision_threshold,
        }
    }
}

/// Minimizes mean BCE plus `l2/2·|w|²` with the shared mini-batch scheme.
/// Parameters start at zero; `cfg.seed` drives shuffling.
pub fn logreg_train(features: &Array2<f64>, labels: &[bool], cfg: &TrainConfig) -> Result<LogRegModel> {
    let (n, d) = features.dim();
    if labels.len() != n {
        return Err(Error::dim("logistic regression labels", n, labels.len()));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 || positives == n {
        return Err(Error::invalid(
            "logistic regression needs both classes in the training labels",
        ));
    }
    if let Some(((r, c), _)) = features.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFinite { what: "logreg features".into(), row: r, col: c });
    }
    cfg.check(n, LossKind::Bce)?;

    let y: Array1<f64> = labels.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect();
    let mut w = Array1::<f64>::zeros(d);
    let mut b = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for epoch in 0..cfg.epochs {
        for (batch, rows) in epoch_batches(&mut rng, n, cfg.batch_size, 1).into_iter().enumerate() {
            let x = features.select(Axis(0), &rows);
            let t = y.select(Axis(0), &rows);
            let z = x.dot(&w) + b;
            let err = (z.mapv(sigmoid) - &t) / rows.len() as f64;
            let gw = x.t().dot(&err) + &w * cfg.l2;
            let gb = err.sum();
            w.scaled_add(-cfg.learning_rate, &gw);
            b -= cfg.learning_rate * gb;
            if !(b.is_finite() && w.iter().all(|v| v.is_finite())) {
                return Err(Error::Diverged {
                    epoch,
                    batch,
                    reason: "non-finite logistic regression parameters".into(),
                });
            }
        }
    }
    Ok(LogRegModel::new(w, b))
}

/// Probabilities and strict-threshold decisions for each row.
pub fn logreg_predict(model: &LogRegModel, features: &Array2<f64>) -> Result<(Vec<f64>, Vec<bool>)> {
    if features.ncols() != model.dim() {
        return Err(Error::dim("logistic regression input", model.dim(), features.ncols()));
    }
    let probs: Vec<f64> = (features.dot(&model.w) + model.b).mapv(sigmoid).to_vec();
    let decisions = probs.iter().map(|&p| p > model.decision_threshold).collect();
    Ok((probs, decisions))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn separable() -> (Array2<f64>, Vec<bool>) {
        let xs = [-3.0, -2.2, -1.5, -0.9, -0.4, 0.3, 0.8, 1.4, 2.5, 3.1];
        let x = Array2::from_shape_vec((xs.len(), 1), xs.to_vec()).unwrap();
        (x, xs.iter().map(|&v| v > 0.0).collect())
    }

    #[test]
    fn separable_1d_is_fit_exactly() {
        let (x, y) = separable();
        let cfg = TrainConfig { learning_rate: 0.5, epochs: 200, batch_size: 4, ..Default::default() };
        let model = logreg_train(&x, &y, &cfg).unwrap();
        let (_, pred) = logreg_predict(&model, &x).unwrap();
        assert_eq!(pred, y);
    }

    #[test]
    fn single_class_rejected() {
        let (x, _) = separable();
        let cfg = TrainConfig { batch_size: 4, ..Default::default() };
        assert!(logreg_train(&x, &[true; 10], &cfg).is_err());
    }

    #[test]
    fn deterministic() {
        let (x, y) = separable();
        let cfg = TrainConfig { epochs: 20, batch_size: 3, seed: 9, ..Default::default() };
        assert_eq!(logreg_train(&x, &y, &cfg).unwrap(), logreg_train(&x, &y, &cfg).unwrap());
    }

    #[test]
    fn zero_model_is_half_and_rejects_at_strict_threshold() {
        let m = LogRegModel::new(array![0.0, 0.0], 0.0);
        let (p, d) = logreg_predict(&m, &array![[1.0, 2.0], [-4.0, 0.0]]).unwrap();
        assert_eq!(p, vec![0.5, 0.5]);
        assert_eq!(d, vec![false, false]);
    }

    #[test]
    fn large_bias_accepts() {
        let m = LogRegModel::new(array![0.0], 1e6);
        assert_eq!(logreg_predict(&m, &array![[-3.0]]).unwrap().1, vec![true]);
    }

    #[test]
    fn hand_set_boundary() {
        let m = LogRegModel::new(array![1.0], -1.0);
        assert_eq!(logreg_predict(&m, &array![[1.0]]).unwrap().0, vec![0.5]);
        assert!(logreg_predict(&m, &array![[1.0, 2.0]]).is_err());
    }

    #[test]
    fn threshold_domain() {
        let m = LogRegModel::new(array![1.0], 0.0);
        assert!(m.clone().with_threshold(0.0).is_err());
        assert!(m.with_threshold(0.3).is_ok());
    }
}
