//! Post-processing and pooling operators over frame tracks.
//!
//! All functions are pure; per-video calls may run concurrently.

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featpack::FeatureSequence;

pub const SIMPLEX_TOL: f64 = 1e-5;
pub const BLEND_TOL: f64 = 1e-9;

/// Per-frame class posteriors for one video; rows lie on the simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbTrack {
    video_id: String,
    data: Array2<f64>,
}

impl ProbTrack {
    pub fn new(video_id: impl Into<String>, data: Array2<f64>) -> Result<Self> {
        let video_id = video_id.into();
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::invalid(format!("empty probability track for `{video_id}`")));
        }
        for (i, row) in data.rows().into_iter().enumerate() {
            let sum = row.sum();
            if !sum.is_finite()
                || (sum - 1.0).abs() > SIMPLEX_TOL
                || row.iter().any(|&v| v < -SIMPLEX_TOL)
            {
                return Err(Error::invalid(format!(
                    "row {i} of `{video_id}` is off the simplex (sum {sum})"
                )));
            }
        }
        Ok(ProbTrack { video_id, data })
    }

    /// Two-column track `(1 - p, p)` from per-frame positive-class probabilities.
    pub fn from_binary(video_id: impl Into<String>, positive: &[f64]) -> Result<Self> {
        let mut data = Array2::zeros((positive.len(), 2));
        for (i, &p) in positive.iter().enumerate() {
            data[[i, 0]] = 1.0 - p;
            data[[i, 1]] = p;
        }
        ProbTrack::new(video_id, data)
    }

    pub fn from_sequence(seq: &FeatureSequence) -> Result<Self> {
        ProbTrack::new(seq.video_id(), seq.to_f64())
    }

    pub fn video_id(&self) -> &str {
        &self.video_id
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }

    pub fn classes(&self) -> usize {
        self.data.ncols()
    }

    /// Row argmax, ties to the lowest class index.
    pub fn argmax(&self) -> Vec<usize> {
        crate::neural::argmax_rows(&self.data)
    }
}

/// Odd box-filter width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmoothSpec {
    k: usize,
}

impl SmoothSpec {
    pub fn new(k: usize) -> Result<Self> {
        if k == 0 || k % 2 == 0 {
            return Err(Error::invalid(format!(
                "smoothing kernel size must be a positive odd integer, got {k}"
            )));
        }
        Ok(SmoothSpec { k })
    }

    pub fn k(&self) -> usize {
        self.k
    }
}

impl Default for SmoothSpec {
    fn default() -> Self {
        SmoothSpec { k: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    t: f64,
}

impl FilterSpec {
    pub fn new(t: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::invalid(format!("filter threshold must lie in [0, 1], got {t}")));
        }
        Ok(FilterSpec { t })
    }

    pub fn t(&self) -> f64 {
        self.t
    }
}

/// Convex weights over n tracks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlendSpec {
    weights: Vec<f64>,
}

impl BlendSpec {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::invalid("blend needs at least one weight"));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::invalid(format!("blend weights must be non-negative: {weights:?}")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > BLEND_TOL {
            return Err(Error::invalid(format!("blend weights sum to {sum}, expected 1")));
        }
        Ok(BlendSpec { weights })
    }

    pub fn two(w: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&w) {
            return Err(Error::invalid(format!("blend weight must lie in [0, 1], got {w}")));
        }
        BlendSpec::new(vec![w, 1.0 - w])
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("blend needs at least one weight"));
        }
        BlendSpec::new(vec![1.0 / n as f64; n])
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Which track decided a frame's label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Pretrained,
    Fused,
}

/// Centered box filter; windows shrink at the track ends.
pub fn smooth(track: &ProbTrack, spec: SmoothSpec) -> ProbTrack {
    let half = (spec.k - 1) / 2;
    if half == 0 {
        return track.clone();
    }
    let (t, c) = track.data.dim();
    let mut out = Array2::zeros((t, c));
    for i in 0..t {
        let lo = i.saturating_sub(half);
        let hi = (i + half).min(t - 1);
        let window = track.data.slice(ndarray::s![lo..=hi, ..]);
        let mut row = out.row_mut(i);
        row.assign(&window.sum_axis(Axis(0)));
        row /= (hi - lo + 1) as f64;
    }
    ProbTrack {
        video_id: track.video_id.clone(),
        data: out,
    }
}

fn same_shape(a: &ProbTrack, b: &ProbTrack) -> Result<()> {
    if a.data.dim() != b.data.dim() {
        return Err(Error::invalid(format!(
            "track shape mismatch: {:?} vs {:?}",
            a.data.dim(),
            b.data.dim()
        )));
    }
    Ok(())
}

/// `w·a + (1 - w)·b`.
pub fn blend2(track_a: &ProbTrack, track_b: &ProbTrack, w: f64) -> Result<ProbTrack> {
    BlendSpec::two(w)?;
    same_shape(track_a, track_b)?;
    let data = if w == 1.0 {
        track_a.data.clone()
    } else if w == 0.0 {
        track_b.data.clone()
    } else {
        &track_a.data * w + &track_b.data * (1.0 - w)
    };
    Ok(ProbTrack {
        video_id: track_a.video_id.clone(),
        data,
    })
}

pub fn blend_n(tracks: &[ProbTrack], spec: &BlendSpec) -> Result<ProbTrack> {
    let first = tracks.first().ok_or_else(|| Error::invalid("blend_n needs at least one track"))?;
    let data: Vec<&Array2<f64>> = tracks.iter().map(|t| &t.data).collect();
    Ok(ProbTrack {
        video_id: first.video_id.clone(),
        data: blend_matrices(&data, spec)?,
    })
}

/// Convex combination of equally shaped matrices. A weight of exactly 1
/// reproduces that input bitwise.
pub fn blend_matrices(inputs: &[&Array2<f64>], spec: &BlendSpec) -> Result<Array2<f64>> {
    let first = inputs.first().ok_or_else(|| Error::invalid("blend needs at least one input"))?;
    if spec.weights.len() != inputs.len() {
        return Err(Error::dim("blend weights", inputs.len(), spec.weights.len()));
    }
    if let Some(bad) = inputs.iter().find(|m| m.dim() != first.dim()) {
        return Err(Error::invalid(format!(
            "track shape mismatch: {:?} vs {:?}",
            first.dim(),
            bad.dim()
        )));
    }
    let mut data = Array2::zeros(first.dim());
    for (m, &w) in inputs.iter().zip(&spec.weights) {
        if w == 1.0 {
            data.assign(*m);
        } else if w != 0.0 {
            data.scaled_add(w, *m);
        }
    }
    Ok(data)
}

/// Frames where the pretrained model is confident (max prob strictly above
/// `t`) keep its argmax; the rest take the fused argmax.
pub fn filter_select(
    pretrained: &ProbTrack,
    fused: &ProbTrack,
    t: f64,
) -> Result<(Vec<usize>, Vec<Source>)> {
    FilterSpec::new(t)?;
    same_shape(pretrained, fused)?;
    let pre = pretrained.argmax();
    let fus = fused.argmax();
    let mut labels = Vec::with_capacity(pre.len());
    let mut sources = Vec::with_capacity(pre.len());
    for (i, row) in pretrained.data.rows().into_iter().enumerate() {
        let confidence = row[pre[i]];
        if confidence > t {
            labels.push(pre[i]);
            sources.push(Source::Pretrained);
        } else {
            labels.push(fus[i]);
            sources.push(Source::Fused);
        }
    }
    Ok((labels, sources))
}

/// Video descriptor `(mean_1..D, std_1..D, min_1..D, max_1..D)` with the
/// population standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct StatDescriptor(pub Vec<f64>);

impl StatDescriptor {
    pub fn dim(&self) -> usize {
        self.0.len() / 4
    }

    pub fn mean(&self) -> &[f64] {
        &self.0[..self.dim()]
    }

    pub fn std(&self) -> &[f64] {
        &self.0[self.dim()..2 * self.dim()]
    }

    pub fn min(&self) -> &[f64] {
        &self.0[2 * self.dim()..3 * self.dim()]
    }

    pub fn max(&self) -> &[f64] {
        &self.0[3 * self.dim()..]
    }
}

fn column_means(data: &Array2<f32>) -> Vec<f64> {
    let t = data.nrows() as f64;
    data.columns()
        .into_iter()
        .map(|c| c.iter().map(|&v| f64::from(v)).sum::<f64>() / t)
        .collect()
}

pub fn stat_aggregate(seq: &FeatureSequence) -> Result<StatDescriptor> {
    let data = seq.data();
    if data.nrows() == 0 {
        return Err(Error::invalid("stat_aggregate of an empty sequence"));
    }
    let d = data.ncols();
    let mut out = vec![0.0; 4 * d];
    let means = column_means(data);
    for (j, col) in data.columns().into_iter().enumerate() {
        let lo = col.iter().fold(f64::INFINITY, |m, &v| m.min(f64::from(v)));
        let hi = col.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(f64::from(v)));
        // rounding can push the mean a ulp outside the observed range
        let mean = means[j].clamp(lo, hi);
        let var = col
            .iter()
            .map(|&v| (f64::from(v) - mean).powi(2))
            .sum::<f64>()
            / col.len() as f64;
        out[j] = mean;
        out[d + j] = var.sqrt();
        out[2 * d + j] = lo;
        out[3 * d + j] = hi;
    }
    Ok(StatDescriptor(out))
}

pub fn mean_aggregate(seq: &FeatureSequence) -> Result<Vec<f64>> {
    if seq.data().nrows() == 0 {
        return Err(Error::invalid("mean_aggregate of an empty sequence"));
    }
    Ok(stat_aggregate(seq)?.mean().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn track(data: Array2<f64>) -> ProbTrack {
        ProbTrack::new("v", data).unwrap()
    }

    fn seq(data: Array2<f32>) -> FeatureSequence {
        FeatureSequence::new("v", "m", data).unwrap()
    }

    #[test]
    fn smooth_k1_identity() {
        let t = track(array![[0.2, 0.8], [0.6, 0.4]]);
        assert_eq!(smooth(&t, SmoothSpec::new(1).unwrap()), t);
    }

    #[test]
    fn smooth_impulse_hand_averages() {
        let t = track(array![[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 0.0]]);
        let out = smooth(&t, SmoothSpec::new(3).unwrap());
        let third = 1.0 / 3.0;
        let expected = array![
            [1.0, 0.0],
            [2.0 * third, third],
            [2.0 * third, third],
            [2.0 * third, third],
            [1.0, 0.0]
        ];
        assert!((out.data() - &expected).iter().all(|d| d.abs() < 1e-12));
    }

    #[test]
    fn smooth_boundary_windows_shrink() {
        let t = track(array![[1.0, 0.0], [0.0, 1.0], [0.0, 1.0]]);
        let out = smooth(&t, SmoothSpec::new(5).unwrap());
        // frame 0 averages frames 0..=2
        assert!((out.data()[[0, 0]] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn smooth_constant_fixed_point() {
        let t = track(Array2::from_shape_fn((7, 3), |(_, j)| [0.2, 0.3, 0.5][j]));
        for k in [1, 3, 5, 9, 15] {
            let out = smooth(&t, SmoothSpec::new(k).unwrap());
            assert!((out.data() - t.data()).iter().all(|d| d.abs() < 1e-15));
        }
    }

    #[test]
    fn even_k_rejected() {
        assert!(SmoothSpec::new(4).is_err());
        assert!(SmoothSpec::new(0).is_err());
    }

    #[test]
    fn blend2_endpoints_and_midpoint() {
        let a = track(array![[1.0, 0.0]]);
        let b = track(array![[0.0, 1.0]]);
        assert_eq!(blend2(&a, &b, 1.0).unwrap().data(), a.data());
        assert_eq!(blend2(&a, &b, 0.0).unwrap().data(), b.data());
        assert_eq!(blend2(&a, &b, 0.5).unwrap().data(), &array![[0.5, 0.5]]);
        assert!(blend2(&a, &track(array![[0.5, 0.5], [0.5, 0.5]]), 0.5).is_err());
        assert!(blend2(&a, &b, 1.5).is_err());
    }

    #[test]
    fn blend_n_cases() {
        let a = track(array![[0.3, 0.7], [0.9, 0.1]]);
        let b = track(array![[0.6, 0.4], [0.2, 0.8]]);
        assert_eq!(blend_n(&[a.clone()], &BlendSpec::uniform(1).unwrap()).unwrap(), a);
        let three = blend_n(&[a.clone(), a.clone(), a.clone()], &BlendSpec::uniform(3).unwrap()).unwrap();
        assert!((three.data() - a.data()).iter().all(|d| d.abs() < 1e-15));
        let n = blend_n(&[a.clone(), b.clone()], &BlendSpec::new(vec![0.25, 0.75]).unwrap()).unwrap();
        let two = blend2(&a, &b, 0.25).unwrap();
        assert!((n.data() - two.data()).iter().all(|d| d.abs() < 1e-15));
        assert!(blend_n(&[], &BlendSpec::uniform(1).unwrap()).is_err());
        assert!(BlendSpec::new(vec![0.5, 0.6]).is_err());
    }

    #[test]
    fn filter_select_rule() {
        let pre = track(array![[0.8, 0.2]]);
        let fused = track(array![[0.1, 0.9]]);
        assert_eq!(filter_select(&pre, &fused, 0.7).unwrap(), (vec![0], vec![Source::Pretrained]));
        assert_eq!(filter_select(&pre, &fused, 0.9).unwrap(), (vec![1], vec![Source::Fused]));
        // strict inequality at the boundary
        assert_eq!(filter_select(&pre, &fused, 0.8).unwrap().1, vec![Source::Fused]);
    }

    #[test]
    fn filter_select_boundaries() {
        let pre = track(array![[0.5, 0.5], [0.1, 0.9], [1.0, 0.0]]);
        let fused = track(array![[0.2, 0.8], [0.7, 0.3], [0.0, 1.0]]);
        let (_, s0) = filter_select(&pre, &fused, 0.0).unwrap();
        assert!(s0.iter().all(|&s| s == Source::Pretrained));
        let (l1, s1) = filter_select(&pre, &fused, 1.0).unwrap();
        assert!(s1.iter().all(|&s| s == Source::Fused));
        assert_eq!(l1, fused.argmax());
    }

    #[test]
    fn stat_constant_and_pair() {
        let d = stat_aggregate(&seq(array![[3.5f32], [3.5], [3.5]])).unwrap();
        assert_eq!(d.0, vec![3.5, 0.0, 3.5, 3.5]);
        let d = stat_aggregate(&seq(array![[0.0f32], [2.0]])).unwrap();
        assert_eq!(d.0, vec![1.0, 1.0, 0.0, 2.0]);
    }

    #[test]
    fn stat_of_seven_logits_is_28() {
        let d = stat_aggregate(&seq(Array2::from_shape_fn((10, 7), |(i, j)| (i * j) as f32))).unwrap();
        assert_eq!(d.0.len(), 28);
    }

    #[test]
    fn mean_aggregate_cases() {
        assert_eq!(mean_aggregate(&seq(array![[1.0f32, -2.0]])).unwrap(), vec![1.0, -2.0]);
        assert_eq!(mean_aggregate(&seq(array![[1.0f32], [2.0], [3.0]])).unwrap(), vec![2.0]);
        let s = seq(array![[1.0f32, 4.0], [2.0, 8.0]]);
        assert_eq!(mean_aggregate(&s).unwrap(), stat_aggregate(&s).unwrap().mean().to_vec());
    }

    #[test]
    fn prob_track_rejects_off_simplex() {
        assert!(ProbTrack::new("v", array![[0.5, 0.3]]).is_err());
        assert!(ProbTrack::new("v", array![[1.2, -0.2]]).is_err());
    }
}
