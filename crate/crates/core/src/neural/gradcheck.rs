use ndarray::Array2;

use super::loss::{LossSpec, Targets};
use super::mlp::MlpModel;
use super::train::{evaluate_loss, loss_and_logit_grad};
use crate::error::{Error, Result};

pub const FD_EPS: f64 = 1e-4;
/// Floor on the relative-error denominator so that parameters with an exactly
/// zero gradient (e.g. dead ReLU units) do not divide by zero.
pub const REL_FLOOR: f64 = 1e-8;
pub const MAX_PROBE_ROWS: usize = 8;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Worst relative error between backpropagated gradients and central finite
/// differences (step `FD_EPS`) over every parameter of `model`.
pub fn gradient_check(
    model: &MlpModel,
    loss: &LossSpec,
    probe: &Array2<f64>,
    targets: &Targets,
) -> Result<f64> {
    if probe.nrows() > MAX_PROBE_ROWS {
        return Err(Error::invalid(format!(
            "gradient_check probe has {} rows, at most {MAX_PROBE_ROWS} allowed",
            probe.nrows()
        )));
    }
    let cache = model.forward_cached(probe)?;
    let (_, dlogits) = loss_and_logit_grad(model, &cache, targets, loss)?;
    let analytic = model.backward(probe, &cache, &dlogits).flat();

    let mut worst: f64 = 0.0;
    let mut shifted = model.clone();
    for (idx, &a) in analytic.iter().enumerate() {
        let original = *shifted.params_mut().nth(idx).unwrap();
        *shifted.params_mut().nth(idx).unwrap() = original + FD_EPS;
        let up = evaluate_loss(&shifted, probe, targets, loss)?;
        *shifted.params_mut().nth(idx).unwrap() = original - FD_EPS;
        let down = evaluate_loss(&shifted, probe, targets, loss)?;
        *shifted.params_mut().nth(idx).unwrap() = original;
        let numeric = (up - down) / (2.0 * FD_EPS);
        worst = worst.max(relative_error(a, numeric));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::loss::LossKind;
    use crate::neural::mlp::{mlp_init, Head};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn probe(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Array2<f64> {
        Array2::from_shape_simple_fn((n, d), || rng.random_range(-1.0..1.0))
    }

    #[test]
    fn softmax_cross_entropy() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = mlp_init(3, 5, 4, Head::Softmax, 1).unwrap();
        let x = probe(&mut rng, 6, 3);
        let labels = Targets::Classes(vec![0, 1, 2, 3, 1, 0]);
        let spec = LossSpec::with_weights(LossKind::CrossEntropy, &[1.0, 2.0, 1.0, 0.5]).unwrap();
        assert!(gradient_check(&model, &spec, &x, &labels).unwrap() <= 1e-4);
    }

    #[test]
    fn sigmoid_bce() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let model = mlp_init(3, 5, 2, Head::Sigmoid, 2).unwrap();
        let x = probe(&mut rng, 5, 3);
        let t = Targets::Dense(Array2::from_shape_simple_fn((5, 2), || rng.random_range(0.0..1.0)));
        let spec = LossSpec::new(LossKind::Bce);
        assert!(gradient_check(&model, &spec, &x, &t).unwrap() <= 1e-4);
    }

    #[test]
    fn sigmoid_pearson() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = mlp_init(3, 5, 6, Head::Sigmoid, 3).unwrap();
        let x = probe(&mut rng, 8, 3);
        let t = Targets::Dense(Array2::from_shape_simple_fn((8, 6), || rng.random_range(0.0..1.0)));
        let spec = LossSpec::with_weights(LossKind::NegWeightedPearson, &[1.0; 6]).unwrap();
        assert!(gradient_check(&model, &spec, &x, &t).unwrap() <= 1e-4);
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1.0, 1.1) - 0.1 / 1.1).abs() < 1e-15);
        // below the floor the error is measured against 1e-8
        assert!((relative_error(1e-9, -1e-9) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn oversized_probe_rejected() {
        let model = mlp_init(2, 2, 2, Head::Softmax, 0).unwrap();
        let x = Array2::zeros((9, 2));
        let spec = LossSpec::new(LossKind::CrossEntropy);
        assert!(gradient_check(&model, &spec, &x, &Targets::Classes(vec![0; 9])).is_err());
    }
}
