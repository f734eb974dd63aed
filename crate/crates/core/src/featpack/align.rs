use ndarray::Array2;

use super::FeatureSequence;
use crate::error::{Error, Result};

/// Resamples a track of S rows onto `target_len` frames by per-column
/// piecewise-linear interpolation.
///
/// Input row `i` sits at position `i * (T - 1) / (S - 1)`, so both endpoints
/// are preserved. A single-row input is repeated. For `T = 1` the output is
/// the first input row.
pub fn align_to_frames(seq: &FeatureSequence, target_len: usize) -> Result<FeatureSequence> {
    if target_len == 0 {
        return Err(Error::invalid("align_to_frames: target length must be positive"));
    }
    let src = seq.data();
    let (s, d) = src.dim();
    if s == target_len {
        return Ok(seq.clone());
    }
    let mut out = Array2::<f32>::zeros((target_len, d));
    if s == 1 || target_len == 1 {
        for mut row in out.rows_mut() {
            row.assign(&src.row(0));
        }
    } else {
        let span = (target_len - 1) as f64;
        for j in 0..target_len {
            // position of output frame j in input-index units
            let u = (j * (s - 1)) as f64 / span;
            let lo = (u.floor() as usize).min(s - 1);
            let frac = u - lo as f64;
            for c in 0..d {
                let a = f64::from(src[[lo, c]]);
                out[[j, c]] = if frac == 0.0 || lo == s - 1 {
                    a as f32
                } else {
                    let b = f64::from(src[[lo + 1, c]]);
                    (a + (b - a) * frac) as f32
                };
            }
        }
    }
    FeatureSequence::new(seq.video_id(), seq.modality(), out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1};
    use proptest::prelude::*;

    fn col(values: &[f32]) -> FeatureSequence {
        let data = Array1::from(values.to_vec()).insert_axis(ndarray::Axis(1));
        FeatureSequence::new("v", "audio", data).unwrap()
    }

    fn column_of(seq: &FeatureSequence) -> Vec<f32> {
        seq.data().column(0).to_vec()
    }

    #[test]
    fn same_length_is_identity() {
        let s = FeatureSequence::new("v", "a", array![[0.1f32, 7.0], [0.3, -2.0]]).unwrap();
        assert_eq!(align_to_frames(&s, 2).unwrap(), s);
    }

    #[test]
    fn linear_midpoint() {
        assert_eq!(column_of(&align_to_frames(&col(&[0.0, 1.0]), 3).unwrap()), [0.0, 0.5, 1.0]);
    }

    #[test]
    fn piecewise_segments() {
        // knots at 0, 2, 4 evaluated at 0..4
        let out = align_to_frames(&col(&[1.0, 3.0, 2.0]), 5).unwrap();
        assert_eq!(column_of(&out), [1.0, 2.0, 3.0, 2.5, 2.0]);
    }

    #[test]
    fn single_row_is_repeated() {
        let out = align_to_frames(&col(&[4.0]), 4).unwrap();
        assert_eq!(column_of(&out), [4.0; 4]);
    }

    #[test]
    fn downsampling_keeps_endpoints() {
        let out = align_to_frames(&col(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0]), 3).unwrap();
        assert_eq!(column_of(&out), [0.0, 3.0, 6.0]);
    }

    #[test]
    fn zero_target_is_error() {
        assert!(align_to_frames(&col(&[1.0]), 0).is_err());
    }

    proptest! {
        #[test]
        fn output_within_input_range(
            values in prop::collection::vec(-100.0f32..100.0, 1..40),
            target in 1usize..80,
        ) {
            let out = column_of(&align_to_frames(&col(&values), target).unwrap());
            let lo = values.iter().cloned().fold(f32::INFINITY, f32::min);
            let hi = values.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
            prop_assert_eq!(out.len(), target);
            for v in &out {
                prop_assert!(*v >= lo && *v <= hi);
            }
            prop_assert_eq!(out[0], values[0]);
            if target > 1 {
                prop_assert_eq!(out[target - 1], values[values.len() - 1]);
            }
        }

        #[test]
        fn monotone_input_gives_monotone_output(
            mut values in prop::collection::vec(-100.0f32..100.0, 1..40),
            target in 1usize..80,
        ) {
            values.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let out = column_of(&align_to_frames(&col(&values), target).unwrap());
            for w in out.windows(2) {
                prop_assert!(w[0] <= w[1]);
            }
        }
    }
}
