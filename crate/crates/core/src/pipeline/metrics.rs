use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_pair<T>(preds: &[T], labels: &[T]) -> Result<()> {
    if preds.is_empty() {
        return Err(Error::invalid("metric over empty input"));
    }
    if preds.len() != labels.len() {
        return Err(Error::dim("metric inputs", labels.len(), preds.len()));
    }
    Ok(())
}

fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    let p = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let r = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Unweighted mean of per-class F1 over all `classes`; a class that never
/// occurs in either vector scores 0.
pub fn metric_macro_f1(preds: &[usize], labels: &[usize], classes: usize) -> Result<f64> {
    check_pair(preds, labels)?;
    if classes == 0 {
        return Err(Error::invalid("macro F1 needs at least one class"));
    }
    if let Some(bad) = preds.iter().chain(labels).find(|&&v| v >= classes) {
        return Err(Error::invalid(format!("class id {bad} outside [0, {classes})")));
    }
    let mut tp = vec![0usize; classes];
    let mut fp = vec![0usize; classes];
    let mut fn_ = vec![0usize; classes];
    for (&p, &l) in preds.iter().zip(labels) {
        if p == l {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fn_[l] += 1;
        }
    }
    Ok((0..classes).map(|c| f1(tp[c], fp[c], fn_[c])).sum::<f64>() / classes as f64)
}

pub fn metric_accuracy<T: PartialEq>(preds: &[T], labels: &[T]) -> Result<f64> {
    check_pair(preds, labels)?;
    let hits = preds.iter().zip(labels).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / preds.len() as f64)
}

/// F1 of the positive class; 0 when precision and recall are both 0.
pub fn metric_binary_f1(preds: &[bool], labels: &[bool]) -> Result<f64> {
    check_pair(preds, labels)?;
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (&p, &l) in preds.iter().zip(labels) {
        match (p, l) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    Ok(f1(tp, fp, fn_))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PearsonResult {
    /// Per-column correlation; `None` where a column is constant.
    pub per_column: Vec<Option<f64>>,
    /// Mean over the defined columns.
    pub mean: Option<f64>,
}

/// Sample Pearson correlation of two equal-length slices, `None` if either
/// is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let constant = |v: &[f64]| v.iter().all(|&a| a == v[0]);
    if x.is_empty() || constant(x) || constant(y) {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// Column-wise Pearson correlation between `preds` and `targets` (rows are
/// samples). Undefined columns are reported as `None`, excluded from the
/// mean, and logged.
pub fn metric_pearson(preds: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<PearsonResult> {
    check_pair(preds, targets)?;
    if preds.len() < 2 {
        return Err(Error::invalid("pearson needs at least 2 samples"));
    }
    let cols = targets[0].len();
    if preds.iter().chain(targets).any(|r| r.len() != cols) {
        return Err(Error::invalid("pearson rows have inconsistent widths"));
    }
    let mut per_column = Vec::with_capacity(cols);
    for c in 0..cols {
        let x: Vec<f64> = preds.iter().map(|r| r[c]).collect();
        let y: Vec<f64> = targets.iter().map(|r| r[c]).collect();
        let rho = pearson(&x, &y);
        if rho.is_none() {
            warn!("pearson column {c} is constant; excluded from the mean");
        }
        per_column.push(rho);
    }
    let defined: Vec<f64> = per_column.iter().flatten().copied().collect();
    let mean = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    Ok(PearsonResult { per_column, mean })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Brute-force oracle: full confusion matrix, then textbook P/R/F1.
    fn oracle_macro_f1(preds: &[usize], labels: &[usize], classes: usize) -> f64 {
        let mut cm = vec![vec![0usize; classes]; classes];
        for (&p, &l) in preds.iter().zip(labels) {
            cm[l][p] += 1;
        }
        let mut total = 0.0;
        for c in 0..classes {
            let tp = cm[c][c] as f64;
            let predicted: usize = (0..classes).map(|l| cm[l][c]).sum();
            let actual: usize = cm[c].iter().sum();
            let p = if predicted == 0 { 0.0 } else { tp / predicted as f64 };
            let r = if actual == 0 { 0.0 } else { tp / actual as f64 };
            total += if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        }
        total / classes as f64
    }

    #[test]
    fn macro_f1_hand_cases() {
        assert_eq!(metric_macro_f1(&[0, 1, 2], &[0, 1, 2], 3).unwrap(), 1.0);
        assert_eq!(metric_macro_f1(&[1, 0, 1, 0], &[0, 1, 0, 1], 2).unwrap(), 0.0);
        let f = metric_macro_f1(&[0, 0, 1, 1], &[0, 1, 1, 1], 2).unwrap();
        assert!((f - 11.0 / 15.0).abs() < 1e-15);
    }

    #[test]
    fn macro_f1_absent_class_scores_zero() {
        // class 2 never occurs: (1 + 1 + 0) / 3
        let f = metric_macro_f1(&[0, 1], &[0, 1], 3).unwrap();
        assert!((f - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn macro_f1_errors() {
        assert!(metric_macro_f1(&[], &[], 2).is_err());
        assert!(metric_macro_f1(&[0], &[0, 1], 2).is_err());
        assert!(metric_macro_f1(&[2], &[0], 2).is_err());
    }

    #[test]
    fn macro_f1_matches_oracle_exhaustively() {
        // every (preds, labels) pair for T = 4, C = 2 and T = 3, C = 3
        for (t, c) in [(4usize, 2usize), (3, 3)] {
            let total = c.pow(t as u32);
            let decode = |mut code: usize| {
                (0..t).map(|_| { let v = code % c; code /= c; v }).collect::<Vec<_>>()
            };
            for a in 0..total {
                for b in 0..total {
                    let (p, l) = (decode(a), decode(b));
                    assert_eq!(metric_macro_f1(&p, &l, c).unwrap(), oracle_macro_f1(&p, &l, c));
                }
            }
        }
    }

    proptest! {
        #[test]
        fn macro_f1_matches_oracle(c in 1usize..=4, pairs in prop::collection::vec((0usize..4, 0usize..4), 1..=12)) {
            let preds: Vec<usize> = pairs.iter().map(|p| p.0 % c).collect();
            let labels: Vec<usize> = pairs.iter().map(|p| p.1 % c).collect();
            prop_assert_eq!(metric_macro_f1(&preds, &labels, c).unwrap(), oracle_macro_f1(&preds, &labels, c));
        }
    }

    #[test]
    fn accuracy_cases() {
        assert_eq!(metric_accuracy(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        assert_eq!(metric_accuracy(&[1, 2], &[3, 4]).unwrap(), 0.0);
        assert_eq!(metric_accuracy(&[1, 2, 3, 4], &[1, 2, 3, 0]).unwrap(), 0.75);
        assert!(metric_accuracy::<u8>(&[], &[]).is_err());
    }

    #[test]
    fn binary_f1_cases() {
        assert_eq!(metric_binary_f1(&[true, false], &[true, false]).unwrap(), 1.0);
        assert_eq!(metric_binary_f1(&[false, false], &[true, false]).unwrap(), 0.0);
        assert_eq!(metric_binary_f1(&[false, false], &[false, false]).unwrap(), 0.0);
        let f = metric_binary_f1(&[true, true, false], &[true, false, false]).unwrap();
        assert!((f - 2.0 / 3.0).abs() < 1e-15);
    }

    fn rows(cols: &[&[f64]]) -> Vec<Vec<f64>> {
        (0..cols[0].len()).map(|i| cols.iter().map(|c| c[i]).collect()).collect()
    }

    #[test]
    fn pearson_hand_value() {
        let r = metric_pearson(&rows(&[&[1.0, 2.0, 3.0]]), &rows(&[&[1.0, 2.0, 4.0]])).unwrap();
        // centred sums: sxy = 3, sxx = 2, syy = 14/3
        let expected = 3.0 / (2.0 * 14.0 / 3.0f64).sqrt();
        assert!((r.per_column[0].unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.98198).abs() < 1e-5);
    }

    #[test]
    fn pearson_identity_and_negation() {
        let t = rows(&[&[0.1, 0.5, 0.2], &[0.9, 0.3, 0.4]]);
        let r = metric_pearson(&t, &t).unwrap();
        assert!(r.per_column.iter().all(|v| (v.unwrap() - 1.0).abs() < 1e-12));
        assert!((r.mean.unwrap() - 1.0).abs() < 1e-12);
        let neg: Vec<Vec<f64>> = t.iter().map(|r| r.iter().map(|v| -v).collect()).collect();
        let r = metric_pearson(&neg, &t).unwrap();
        assert!(r.per_column.iter().all(|v| (v.unwrap() + 1.0).abs() < 1e-12));
    }

    #[test]
    fn pearson_constant_column_excluded() {
        let p = rows(&[&[0.1, 0.5, 0.2], &[0.9, 0.3, 0.4]]);
        let t = rows(&[&[0.2, 0.4, 0.3], &[0.5, 0.5, 0.5]]);
        let r = metric_pearson(&p, &t).unwrap();
        assert!(r.per_column[1].is_none());
        assert_eq!(r.mean, r.per_column[0]);
        assert!(metric_pearson(&p[..1], &t[..1]).is_err());
    }

    #[test]
    fn pearson_constant_with_inexact_mean() {
        assert_eq!(pearson(&[0.1, 0.1, 0.1], &[0.2, 0.7, 0.1]), None);
        assert_eq!(pearson(&[0.2, 0.7, 0.1], &[0.1, 0.1, 0.1]), None);
    }
}
