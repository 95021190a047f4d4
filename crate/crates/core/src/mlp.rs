//! Feature network: sigmoid hidden layers, linear output layer.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::CoreError;

pub const FEATURE_DIM: usize = 7;
pub const HIDDEN: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub w: DMatrix<f64>,
    pub b: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpWeights {
    pub layers: Vec<Layer>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl MlpWeights {
    /// The shipped 7 -> 16 -> 16 -> 7 network with seeded Xavier-uniform weights.
    pub fn standard(seed: u64) -> Self {
        Self::xavier(&[FEATURE_DIM, HIDDEN, HIDDEN, FEATURE_DIM], seed)
    }

    pub fn xavier(widths: &[usize], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = widths
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                Layer {
                    w: DMatrix::from_fn(fan_out, fan_in, |_, _| rng.random_range(-bound..bound)),
                    b: DVector::zeros(fan_out),
                }
            })
            .collect();
        Self { layers }
    }

    pub fn zeros(widths: &[usize]) -> Self {
        let layers = widths
            .windows(2)
            .map(|w| Layer { w: DMatrix::zeros(w[1], w[0]), b: DVector::zeros(w[1]) })
            .collect();
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.w.ncols())
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.w.nrows())
    }

    pub fn forward(&self, x: &[f64]) -> Result<DVector<f64>, CoreError> {
        Ok(self.forward_cache(x)?.pop().expect("network has layers"))
    }

    /// Activations of every layer, input first and output last.
    pub fn forward_cache(&self, x: &[f64]) -> Result<Vec<DVector<f64>>, CoreError> {
        if x.len() != self.input_dim() {
            return Err(CoreError::Dimension { expected: self.input_dim(), got: x.len() });
        }
        let mut acts = vec![DVector::from_column_slice(x)];
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = &layer.w * acts.last().unwrap() + &layer.b;
            if k < last {
                z.apply(|v| *v = sigmoid(*v));
            }
            acts.push(z);
        }
        Ok(acts)
    }

    /// Accumulates into `grads` the gradient of `grad_out . output` with respect
    /// to every weight and bias.
    pub fn backward(&self, acts: &[DVector<f64>], grad_out: &DVector<f64>, grads: &mut MlpWeights) {
        let mut delta = grad_out.clone();
        for k in (0..self.layers.len()).rev() {
            grads.layers[k].w += &delta * acts[k].transpose();
            grads.layers[k].b += &delta;
            if k > 0 {
                let mut back = self.layers[k].w.transpose() * &delta;
                // acts[k] is the sigmoid output of layer k-1
                back.zip_apply(&acts[k], |g, a| *g *= a * (1.0 - a));
                delta = back;
            }
        }
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Flattened parameters: per layer, `W` column-major then `b`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            v.extend_from_slice(l.w.as_slice());
            v.extend_from_slice(l.b.as_slice());
        }
        v
    }

    pub fn set_from_slice(&mut self, v: &[f64]) {
        let mut at = 0;
        for l in &mut self.layers {
            let n = l.w.len();
            l.w.as_mut_slice().copy_from_slice(&v[at..at + n]);
            at += n;
            let n = l.b.len();
            l.b.as_mut_slice().copy_from_slice(&v[at..at + n]);
            at += n;
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Layer { w: DMatrix::zeros(l.w.nrows(), l.w.ncols()), b: DVector::zeros(l.b.len()) })
                .collect(),
        }
    }
}

/// Convenience wrapper over [`MlpWeights::forward`].
pub fn mlp_forward(xi: &[f64], w: &MlpWeights) -> Result<DVector<f64>, CoreError> {
    w.forward(xi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_network_outputs_zero() {
        let w = MlpWeights::zeros(&[7, 16, 16, 7]);
        let out = mlp_forward(&[1.0, -2.0, 3.0, 0.5, 0.0, 9.0, 1.0], &w).unwrap();
        assert_eq!(out, DVector::zeros(7));
    }

    #[test]
    fn single_path_matches_hand_evaluation() {
        let mut w = MlpWeights::zeros(&[2, 2, 2, 2]);
        w.layers[0].w[(0, 0)] = 1.0;
        w.layers[1].w[(0, 0)] = 1.0;
        w.layers[2].w[(1, 0)] = 1.0;
        let x: f64 = 0.7;
        let h1: f64 = 1.0 / (1.0 + (-x).exp());
        let h2 = 1.0 / (1.0 + (-h1).exp());
        let out = w.forward(&[x, 5.0]).unwrap();
        assert!((out[1] - h2).abs() < 1e-15);
        assert_eq!(out[0], 0.0);
    }

    #[test]
    fn dimension_and_determinism() {
        let w = MlpWeights::standard(3);
        assert!(w.forward(&[1.0; 6]).is_err());
        assert_eq!(w.forward(&[0.2; 7]).unwrap(), w.forward(&[0.2; 7]).unwrap());
        assert_eq!(w.output_dim(), FEATURE_DIM);
        assert_eq!(w.n_params(), 7 * 16 + 16 + 16 * 16 + 16 + 16 * 7 + 7);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let w = MlpWeights::standard(11);
        let x = [0.3, -1.2, 0.8, 2.0, -0.1, 0.0, 1.5];
        let g_out = DVector::from_fn(7, |i, _| (i as f64 - 3.0) * 0.4);
        let acts = w.forward_cache(&x).unwrap();
        let mut grads = w.zeros_like();
        w.backward(&acts, &g_out, &mut grads);
        let flat = w.to_vec();
        let analytic = grads.to_vec();
        let h = 1e-6;
        for i in (0..flat.len()).step_by(7) {
            let mut p = w.clone();
            let mut v = flat.clone();
            v[i] += h;
            p.set_from_slice(&v);
            let fp = g_out.dot(&p.forward(&x).unwrap());
            v[i] -= 2.0 * h;
            p.set_from_slice(&v);
            let fm = g_out.dot(&p.forward(&x).unwrap());
            let fd = (fp - fm) / (2.0 * h);
            assert!((fd - analytic[i]).abs() < 1e-7 * fd.abs().max(1.0), "{i}");
        }
    }
}
