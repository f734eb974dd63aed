use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use super::mlp::{sigmoid, softmax_rows};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    CrossEntropy,
    Bce,
    NegWeightedPearson,
}

/// Loss selection plus optional per-class (CE) or per-emotion (Pearson)
/// weights. Weights are normalized to sum to the number of outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub kind: LossKind,
    pub class_weights: Option<Vec<f64>>,
}

impl LossSpec {
    pub fn new(kind: LossKind) -> Self {
        LossSpec {
            kind,
            class_weights: None,
        }
    }

    pub fn with_weights(kind: LossKind, weights: &[f64]) -> Result<Self> {
        if weights.is_empty() || weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::invalid("loss weights must be finite and positive"));
        }
        let sum: f64 = weights.iter().sum();
        let c = weights.len() as f64;
        Ok(LossSpec {
            kind,
            class_weights: Some(weights.iter().map(|w| w * c / sum).collect()),
        })
    }
}

/// Training targets matching a loss kind.
#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    /// Class id per row (cross-entropy).
    Classes(Vec<usize>),
    /// Dense N×C targets (BCE, Pearson).
    Dense(Array2<f64>),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Classes(v) => v.len(),
            Targets::Dense(m) => m.nrows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, rows: &[usize]) -> Targets {
        match self {
            Targets::Classes(v) => Targets::Classes(rows.iter().map(|&r| v[r]).collect()),
            Targets::Dense(m) => Targets::Dense(m.select(Axis(0), rows)),
        }
    }
}

/// Weighted mean softmax cross-entropy; returns the gradient w.r.t. logits.
pub fn loss_cross_entropy(
    logits: &Array2<f64>,
    labels: &[usize],
    class_weights: Option<&[f64]>,
) -> Result<(f64, Array2<f64>)> {
    let (n, c) = logits.dim();
    if labels.len() != n {
        return Err(Error::dim("cross-entropy labels", n, labels.len()));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::invalid(format!("label {bad} outside [0, {c})")));
    }
    if let Some(w) = class_weights {
        if w.len() != c {
            return Err(Error::dim("class weights", c, w.len()));
        }
    }
    let weight = |l: usize| class_weights.map_or(1.0, |w| w[l]);
    let total: f64 = labels.iter().map(|&l| weight(l)).sum();

    let probs = softmax_rows(logits);
    let mut loss = 0.0;
    let mut grad = probs;
    for (i, &label) in labels.iter().enumerate() {
        let row = logits.row(i);
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        let wi = weight(label) / total;
        loss += wi * (lse - row[label]);
        grad[[i, label]] -= 1.0;
        grad.row_mut(i).mapv_inplace(|g| g * wi);
    }
    Ok((loss, grad))
}

fn check_bce_targets(targets: &Array2<f64>) -> Result<()> {
    if targets.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(Error::invalid("bce targets must lie in [0, 1]"));
    }
    Ok(())
}

/// Mean binary cross-entropy over all entries of sigmoid outputs. The
/// gradient is taken with respect to the pre-sigmoid logits.
pub fn loss_bce(probs: &Array2<f64>, targets: &Array2<f64>) -> Result<(f64, Array2<f64>)> {
    if probs.dim() != targets.dim() {
        return Err(Error::invalid(format!(
            "bce shape mismatch: {:?} vs {:?}",
            probs.dim(),
            targets.dim()
        )));
    }
    check_bce_targets(targets)?;
    if probs.iter().any(|p| !(*p > 0.0 && *p < 1.0)) {
        return Err(Error::invalid("bce probabilities must lie in (0, 1)"));
    }
    let count = probs.len() as f64;
    let loss = probs
        .iter()
        .zip(targets.iter())
        .map(|(&p, &t)| -(t * p.ln() + (1.0 - t) * (1.0 - p).ln()))
        .sum::<f64>()
        / count;
    Ok((loss, (probs - targets) / count))
}

/// BCE evaluated from logits, stable for saturated outputs.
pub(crate) fn bce_from_logits(
    logits: &Array2<f64>,
    targets: &Array2<f64>,
) -> Result<(f64, Array2<f64>)> {
    if logits.dim() != targets.dim() {
        return Err(Error::invalid(format!(
            "bce shape mismatch: {:?} vs {:?}",
            logits.dim(),
            targets.dim()
        )));
    }
    check_bce_targets(targets)?;
    let count = logits.len() as f64;
    // softplus(z) - t z
    let loss = logits
        .iter()
        .zip(targets.iter())
        .map(|(&z, &t)| z.max(0.0) + (-z.abs()).exp().ln_1p() - t * z)
        .sum::<f64>()
        / count;
    let mut grad = logits.mapv(sigmoid);
    grad -= targets;
    grad /= count;
    Ok((loss, grad))
}

/// Per-column Pearson correlations; constant target or prediction columns
/// give 0. Also returns each column's gradient of rho w.r.t. preds.
pub(crate) fn pearson_columns(
    preds: &Array2<f64>,
    targets: &Array2<f64>,
) -> (Vec<f64>, Array2<f64>) {
    let (n, c) = preds.dim();
    let mut rhos = vec![0.0; c];
    let mut grad = Array2::zeros((n, c));
    for col in 0..c {
        let p = preds.column(col);
        let t = targets.column(col);
        // exact test: centring a constant column can leave roundoff in saa
        if p.iter().all(|&v| v == p[0]) || t.iter().all(|&v| v == t[0]) {
            continue;
        }
        let pm = p.sum() / n as f64;
        let tm = t.sum() / n as f64;
        let a: Vec<f64> = p.iter().map(|v| v - pm).collect();
        let b: Vec<f64> = t.iter().map(|v| v - tm).collect();
        let saa: f64 = a.iter().map(|v| v * v).sum();
        let sbb: f64 = b.iter().map(|v| v * v).sum();
        if saa == 0.0 || sbb == 0.0 {
            continue;
        }
        let sab: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        let norm = (saa * sbb).sqrt();
        let rho = sab / norm;
        rhos[col] = rho;
        // d rho / d p_i = b_i / (|a||b|) - rho a_i / |a|^2 (centering terms cancel)
        for i in 0..n {
            grad[[i, col]] = b[i] / norm - rho * a[i] / saa;
        }
    }
    (rhos, grad)
}

/// Negative weighted mean of per-column Pearson correlations; gradient is
/// with respect to the predictions.
pub fn loss_weighted_pearson(
    preds: &Array2<f64>,
    targets: &Array2<f64>,
    emotion_weights: &[f64],
) -> Result<(f64, Array2<f64>)> {
    let (n, c) = preds.dim();
    if targets.dim() != (n, c) {
        return Err(Error::invalid(format!(
            "pearson shape mismatch: {:?} vs {:?}",
            preds.dim(),
            targets.dim()
        )));
    }
    if n < 2 {
        return Err(Error::invalid(format!(
            "pearson loss needs at least 2 rows, got {n}"
        )));
    }
    if emotion_weights.len() != c {
        return Err(Error::dim("emotion weights", c, emotion_weights.len()));
    }
    let wsum: f64 = emotion_weights.iter().sum();
    if !(wsum > 0.0) {
        return Err(Error::invalid("emotion weights must have a positive sum"));
    }
    let (rhos, mut grad) = pearson_columns(preds, targets);
    let loss = -rhos
        .iter()
        .zip(emotion_weights)
        .map(|(r, w)| r * w)
        .sum::<f64>()
        / wsum;
    for (col, w) in emotion_weights.iter().enumerate() {
        grad.column_mut(col).mapv_inplace(|g| -g * w / wsum);
    }
    Ok((loss, grad))
}

/// Inverse counts normalized to sum to the number of entries.
pub fn emotion_weights_from_counts(counts: &[u64]) -> Result<Vec<f64>> {
    if counts.is_empty() {
        return Err(Error::invalid("counts must not be empty"));
    }
    if let Some(i) = counts.iter().position(|&c| c == 0) {
        return Err(Error::invalid(format!("count at index {i} is zero")));
    }
    let inv: Vec<f64> = counts.iter().map(|&c| 1.0 / c as f64).collect();
    let total: f64 = inv.iter().sum();
    let c = counts.len() as f64;
    Ok(inv.iter().map(|v| v * c / total).collect())
}
