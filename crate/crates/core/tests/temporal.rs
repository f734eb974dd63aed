use affuse_core::featpack::FeatureSequence;
use affuse_core::temporal::*;
use ndarray::Array2;
use proptest::prelude::*;

const CASES: u32 = 1000;

fn simplex_track() -> impl Strategy<Value = Array2<f64>> {
    (1usize..40, 2usize..9).prop_flat_map(|(t, c)| {
        prop::collection::vec(0.0f64..1.0, t * c).prop_map(move |raw| {
            let mut m = Array2::from_shape_vec((t, c), raw).unwrap();
            for mut row in m.rows_mut() {
                let s: f64 = row.sum() + 1e-3;
                row.mapv_inplace(|v| (v + 1e-3 / c as f64) / s);
            }
            m
        })
    })
}

fn pair() -> impl Strategy<Value = (Array2<f64>, Array2<f64>)> {
    simplex_track().prop_flat_map(|a| {
        let (t, c) = a.dim();
        (Just(a), prop::collection::vec(0.0f64..1.0, t * c).prop_map(move |raw| {
            let mut m = Array2::from_shape_vec((t, c), raw).unwrap();
            for mut row in m.rows_mut() {
                let s = row.sum() + 1e-3;
                row.mapv_inplace(|v| (v + 1e-3 / c as f64) / s);
            }
            m
        }))
    })
}

fn odd_k() -> impl Strategy<Value = usize> {
    (0usize..12).prop_map(|h| 2 * h + 1)
}

// naive per-frame window average, written independently of the operator
fn box_oracle(m: &Array2<f64>, k: usize) -> Array2<f64> {
    let (t, c) = m.dim();
    let half = (k / 2) as isize;
    let mut out = Array2::zeros((t, c));
    for i in 0..t as isize {
        for j in 0..c {
            let mut sum = 0.0;
            let mut n = 0.0;
            for d in -half..=half {
                let r = i + d;
                if r >= 0 && r < t as isize {
                    sum += m[[r as usize, j]];
                    n += 1.0;
                }
            }
            out[[i as usize, j]] = sum / n;
        }
    }
    out
}

fn seq(data: Array2<f64>) -> FeatureSequence {
    FeatureSequence::new("v", "m", data.mapv(|v| v as f32)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(CASES))]

    #[test]
    fn smooth_stays_on_simplex(m in simplex_track(), k in odd_k()) {
        let out = smooth(&ProbTrack::new("v", m.clone()).unwrap(), SmoothSpec::new(k).unwrap());
        prop_assert_eq!(out.data().dim(), m.dim());
        for row in out.data().rows() {
            prop_assert!((row.sum() - 1.0).abs() <= 1e-6);
            prop_assert!(row.iter().all(|&v| v >= 0.0));
        }
        let oracle = box_oracle(&m, k);
        for (a, b) in out.data().iter().zip(oracle.iter()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn smooth_k1_is_identity(m in simplex_track()) {
        let track = ProbTrack::new("v", m).unwrap();
        prop_assert_eq!(smooth(&track, SmoothSpec::new(1).unwrap()), track);
    }

    #[test]
    fn blend_boundaries((a, b) in pair(), w in 0.0f64..=1.0) {
        let ta = ProbTrack::new("v", a).unwrap();
        let tb = ProbTrack::new("v", b).unwrap();
        prop_assert_eq!(blend2(&ta, &tb, 1.0).unwrap().data().clone(), ta.data().clone());
        prop_assert_eq!(blend2(&ta, &tb, 0.0).unwrap().data().clone(), tb.data().clone());
        let mid = blend2(&ta, &tb, w).unwrap();
        for row in mid.data().rows() {
            prop_assert!((row.sum() - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn blend_n_is_permutation_equivariant((a, b) in pair(), w in 0.0f64..=1.0) {
        let c = &a * 0.5 + &b * 0.5;
        let tracks = [a, b, c].map(|m| ProbTrack::new("v", m).unwrap());
        let weights = [w * 0.5, (1.0 - w) * 0.5, 0.5];
        let forward = blend_n(&tracks, &BlendSpec::new(weights.to_vec()).unwrap()).unwrap();
        let rev_tracks = [tracks[2].clone(), tracks[0].clone(), tracks[1].clone()];
        let rev = blend_n(&rev_tracks, &BlendSpec::new(vec![weights[2], weights[0], weights[1]]).unwrap()).unwrap();
        for (x, y) in forward.data().iter().zip(rev.data().iter()) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn filter_nests_in_threshold((pre, fused) in pair(), t1 in 0.0f64..=1.0, t2 in 0.0f64..=1.0) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let p = ProbTrack::new("v", pre).unwrap();
        let f = ProbTrack::new("v", fused).unwrap();
        let (_, s_lo) = filter_select(&p, &f, lo).unwrap();
        let (_, s_hi) = filter_select(&p, &f, hi).unwrap();
        for (a, b) in s_lo.iter().zip(&s_hi) {
            if *b == Source::Pretrained {
                prop_assert_eq!(*a, Source::Pretrained);
            }
        }
        let (l0, _) = filter_select(&p, &f, 0.0).unwrap();
        let (l1, _) = filter_select(&p, &f, 1.0).unwrap();
        prop_assert_eq!(l0, p.argmax());
        prop_assert_eq!(l1, f.argmax());
    }

    #[test]
    fn stat_descriptor_ordering(
        (t, d, raw) in (1usize..30, 1usize..10).prop_flat_map(|(t, d)| (Just(t), Just(d), prop::collection::vec(-1e3f64..1e3, t * d))),
        constant_col in 0usize..10,
    ) {
        let mut m = Array2::from_shape_vec((t, d), raw).unwrap();
        let constant_col = constant_col % d;
        let v = m[[0, constant_col]];
        m.column_mut(constant_col).fill(v);
        let s = stat_aggregate(&seq(m.clone())).unwrap();
        prop_assert_eq!(s.dim(), d);
        prop_assert_eq!(s.0.len(), 4 * d);
        let stored = m.mapv(|v| v as f32);
        for j in 0..d {
            prop_assert!(s.min()[j] <= s.mean()[j] && s.mean()[j] <= s.max()[j]);
            let constant = stored.column(j).iter().all(|&x| x == stored[[0, j]]);
            prop_assert_eq!(s.std()[j] == 0.0, constant);
        }
        prop_assert_eq!(mean_aggregate(&seq(m)).unwrap(), s.mean().to_vec());
    }

    #[test]
    fn seven_logits_give_28_values(t in 1usize..50, raw in prop::collection::vec(-5.0f64..5.0, 7 * 50)) {
        let m = Array2::from_shape_vec((t, 7), raw[..7 * t].to_vec()).unwrap();
        prop_assert_eq!(stat_aggregate(&seq(m)).unwrap().0.len(), 28);
    }
}
