use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_HIDDEN: usize = 128;

/// Output nonlinearity applied on top of the logits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    Softmax,
    Sigmoid,
    Linear,
}

/// One-hidden-layer ReLU network: `head(W2 · relu(W1 · x + b1) + b2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub head: Head,
    pub seed: u64,
}

/// Result of a forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    pub outputs: Array2<f64>,
    pub logits: Array2<f64>,
}

/// Intermediate activations kept for backpropagation.
#[derive(Debug, Clone)]
pub(crate) struct Cache {
    pub pre_hidden: Array2<f64>,
    pub hidden: Array2<f64>,
    pub forward: Forward,
}

#[derive(Debug, Clone)]
pub struct Gradients {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

/// Seeded init: weights uniform in ±1/sqrt(fan_in), biases zero.
pub fn mlp_init(
    input_dim: usize,
    hidden_dim: usize,
    output_dim: usize,
    head: Head,
    seed: u64,
) -> Result<MlpModel> {
    if input_dim == 0 || hidden_dim == 0 || output_dim == 0 {
        return Err(Error::invalid(format!(
            "mlp dimensions must be positive (D={input_dim}, H={hidden_dim}, C={output_dim})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut uniform = |rows: usize, cols: usize| {
        let bound = 1.0 / (cols as f64).sqrt();
        Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-bound..bound))
    };
    let w1 = uniform(hidden_dim, input_dim);
    let w2 = uniform(output_dim, hidden_dim);
    Ok(MlpModel {
        w1,
        b1: Array1::zeros(hidden_dim),
        w2,
        b2: Array1::zeros(output_dim),
        head,
        seed,
    })
}

pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    out
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl MlpModel {
    pub fn input_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.w2.nrows()
    }

    pub fn is_finite(&self) -> bool {
        self.w1.iter().all(|v| v.is_finite())
            && self.b1.iter().all(|v| v.is_finite())
            && self.w2.iter().all(|v| v.is_finite())
            && self.b2.iter().all(|v| v.is_finite())
    }

    /// Parameters rounded through f32, i.e. the values a saved model reloads with.
    pub fn rounded_to_f32(&self) -> MlpModel {
        let r = |v: f64| f64::from(v as f32);
        MlpModel {
            w1: self.w1.mapv(r),
            b1: self.b1.mapv(r),
            w2: self.w2.mapv(r),
            b2: self.b2.mapv(r),
            head: self.head,
            seed: self.seed,
        }
    }

    pub fn forward(&self, batch: &Array2<f64>) -> Result<Forward> {
        Ok(self.forward_cached(batch)?.forward)
    }

    pub(crate) fn forward_cached(&self, batch: &Array2<f64>) -> Result<Cache> {
        if batch.ncols() != self.input_dim() {
            return Err(Error::dim("mlp input columns", self.input_dim(), batch.ncols()));
        }
        let pre_hidden = batch.dot(&self.w1.t()) + &self.b1;
        let hidden = pre_hidden.mapv(|v| v.max(0.0));
        let logits = hidden.dot(&self.w2.t()) + &self.b2;
        let outputs = match self.head {
            Head::Softmax => softmax_rows(&logits),
            Head::Sigmoid => logits.mapv(sigmoid),
            Head::Linear => logits.clone(),
        };
        Ok(Cache {
            pre_hidden,
            hidden,
            forward: Forward { outputs, logits },
        })
    }

    /// Backpropagates a gradient with respect to the logits.
    pub(crate) fn backward(
        &self,
        batch: &Array2<f64>,
        cache: &Cache,
        dlogits: &Array2<f64>,
    ) -> Gradients {
        let w2 = dlogits.t().dot(&cache.hidden);
        let b2 = dlogits.sum_axis(Axis(0));
        let mut dz1 = dlogits.dot(&self.w2);
        dz1.zip_mut_with(&cache.pre_hidden, |g, &z| {
            if z <= 0.0 {
                *g = 0.0;
            }
        });
        let w1 = dz1.t().dot(batch);
        let b1 = dz1.sum_axis(Axis(0));
        Gradients { w1, b1, w2, b2 }
    }

    pub(crate) fn apply(&mut self, grads: &Gradients, learning_rate: f64, l2: f64) {
        let step = |p: &mut f64, g: &f64| *p -= learning_rate * g;
        if l2 > 0.0 {
            let decay = 1.0 - learning_rate * l2;
            self.w1.mapv_inplace(|v| v * decay);
            self.w2.mapv_inplace(|v| v * decay);
        }
        self.w1.zip_mut_with(&grads.w1, step);
        self.b1.zip_mut_with(&grads.b1, step);
        self.w2.zip_mut_with(&grads.w2, step);
        self.b2.zip_mut_with(&grads.b2, step);
    }

    /// Flat mutable view over every parameter, in (W1, b1, W2, b2) order.
    pub(crate) fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.w1
            .iter_mut()
            .chain(self.b1.iter_mut())
            .chain(self.w2.iter_mut())
            .chain(self.b2.iter_mut())
    }

    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }
}

impl Gradients {
    pub(crate) fn flat(&self) -> Vec<f64> {
        self.w1
            .iter()
            .chain(self.b1.iter())
            .chain(self.w2.iter())
            .chain(self.b2.iter())
            .copied()
            .collect()
    }
}

/// Row-wise argmax with ties going to the lowest index.
pub fn argmax_rows(m: &Array2<f64>) -> Vec<usize> {
    m.rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}
