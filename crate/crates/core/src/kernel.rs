//! ARD squared-exponential kernel over `[w(x), Phi(xi)]`.

use serde::{Deserialize, Serialize};

use crate::mlp::FEATURE_DIM;
use crate::warp::D;

/// Kernel input width: warped solver dims followed by network outputs.
pub const INPUT_DIM: usize = D + FEATURE_DIM;

/// GP hyperparameters, positive quantities stored as natural logs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpHyperparams {
    pub log_theta0: f64,
    /// Inverse squared lengthscales `theta_1..theta_11`, warped dims first.
    pub log_theta: Vec<f64>,
    pub mean_const: f64,
    pub log_noise: f64,
}

impl GpHyperparams {
    pub fn new(theta0: f64, theta_x: f64, theta_xi: f64, mean_const: f64, noise_var: f64) -> Self {
        let log_theta = (0..INPUT_DIM).map(|d| if d < D { theta_x.ln() } else { theta_xi.ln() }).collect();
        Self { log_theta0: theta0.ln(), log_theta, mean_const, log_noise: noise_var.ln() }
    }

    pub fn theta0(&self) -> f64 {
        self.log_theta0.exp()
    }

    pub fn theta(&self) -> Vec<f64> {
        self.log_theta.iter().map(|v| v.exp()).collect()
    }

    pub fn noise_var(&self) -> f64 {
        self.log_noise.exp()
    }
}

impl Default for GpHyperparams {
    fn default() -> Self {
        Self::new(1.0, 10.0, 0.5, 0.0, 0.05)
    }
}

/// `theta0 * exp(-sum_d theta_d (a_d - b_d)^2)`.
pub fn ard_kernel(a: &[f64], b: &[f64], theta0: f64, theta: &[f64]) -> f64 {
    let s: f64 = a.iter().zip(b).zip(theta).map(|((x, y), t)| t * (x - y) * (x - y)).sum();
    theta0 * (-s).exp()
}

/// Kernel on the concatenated input `[w, phi]`.
pub fn composite_kernel(w: &[f64], phi: &[f64], w2: &[f64], phi2: &[f64], hp: &GpHyperparams) -> f64 {
    let a: Vec<f64> = w.iter().chain(phi).copied().collect();
    let b: Vec<f64> = w2.iter().chain(phi2).copied().collect();
    ard_kernel(&a, &b, hp.theta0(), &hp.theta())
}

/// Warped-parameter factor `k1 = theta0 exp(-sum_{d<4} ...)`.
pub fn k1(w: &[f64], w2: &[f64], hp: &GpHyperparams) -> f64 {
    ard_kernel(w, w2, hp.theta0(), &hp.theta()[..D])
}

/// Feature factor `k2 = theta0 exp(-sum_{d>=4} ...)`; `k = k1 k2 / theta0`.
pub fn k2(phi: &[f64], phi2: &[f64], hp: &GpHyperparams) -> f64 {
    ard_kernel(phi, phi2, hp.theta0(), &hp.theta()[D..])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn limits() {
        let hp = GpHyperparams::default();
        let w = [0.1, 0.2, 0.3, 0.4];
        let phi = [0.5; FEATURE_DIM];
        assert_eq!(composite_kernel(&w, &phi, &w, &phi, &hp), hp.theta0());
        let far = [1e6; FEATURE_DIM];
        assert_eq!(composite_kernel(&w, &phi, &w, &far, &hp), 0.0);
    }

    #[test]
    fn product_form_agrees() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let mut hp = GpHyperparams::default();
            hp.log_theta0 = rng.random_range(-2.0..2.0);
            hp.log_theta.iter_mut().for_each(|t| *t = rng.random_range(-3.0..3.0));
            let v: Vec<f64> = (0..2 * INPUT_DIM).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (a, b) = v.split_at(INPUT_DIM);
            let full = composite_kernel(&a[..D], &a[D..], &b[..D], &b[D..], &hp);
            let prod = k1(&a[..D], &b[..D], &hp) * k2(&a[D..], &b[D..], &hp) / hp.theta0();
            assert!((full - prod).abs() <= 1e-12 * full.abs().max(1e-300));
        }
    }
}
