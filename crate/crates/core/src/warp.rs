//! Input warping of the solver parameters through Beta CDFs whose shape
//! parameters carry a log-Gaussian variational posterior.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::special::{beta_cdf, beta_cdf_grad, beta_pdf};

/// Number of warped solver dimensions.
pub const D: usize = 4;
/// Length of the latent vector `gamma = (ln alpha_1..4, ln beta_1..4)`.
pub const GAMMA_DIM: usize = 2 * D;

/// Maps a raw solver parameter in `[1e-7, 1e7]` to `[0, 1]` in log10 space.
pub fn unit_from_raw(x: f64) -> f64 {
    ((x.log10() + 7.0) / 14.0).clamp(0.0, 1.0)
}

/// Regularized incomplete beta warp `I_{x01}(alpha, beta)`.
pub fn betacdf_warp(x01: f64, alpha: f64, beta: f64) -> Result<f64, CoreError> {
    if !(alpha > 0.0 && beta > 0.0) {
        return Err(CoreError::InvalidWarp { alpha, beta });
    }
    Ok(beta_cdf(x01.clamp(0.0, 1.0), alpha, beta))
}

/// Derivative of the warp with respect to its input.
pub fn betacdf_warp_dx(x01: f64, alpha: f64, beta: f64) -> f64 {
    beta_pdf(x01, alpha, beta)
}

/// Per-dimension log-normal prior on `alpha_d` and `beta_d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WarpPrior {
    pub mu_a: f64,
    pub sigma_a: f64,
    pub mu_b: f64,
    pub sigma_b: f64,
}

impl Default for WarpPrior {
    fn default() -> Self {
        Self { mu_a: 0.0, sigma_a: 1.0, mu_b: 0.0, sigma_b: 1.0 }
    }
}

/// `q(gamma) = N(mu_gamma, Lambda Lambda^T)` over the log shape parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarpPosterior {
    pub mu_gamma: DVector<f64>,
    /// Lower-triangular factor with positive diagonal.
    pub lambda: DMatrix<f64>,
    pub prior: [WarpPrior; D],
}

/// One draw of shape parameters with the noise that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarpSample {
    pub alpha: [f64; D],
    pub beta: [f64; D],
    pub eps: Vec<f64>,
}

impl WarpPosterior {
    /// Identity-centred posterior (`alpha = beta = 1`) with diagonal spread `scale`.
    pub fn identity(scale: f64) -> Self {
        Self {
            mu_gamma: DVector::zeros(GAMMA_DIM),
            lambda: DMatrix::from_diagonal_element(GAMMA_DIM, GAMMA_DIM, scale),
            prior: [WarpPrior::default(); D],
        }
    }

    pub fn validate(&self) -> Result<(), CoreError> {
        let ok = self.mu_gamma.len() == GAMMA_DIM
            && self.lambda.shape() == (GAMMA_DIM, GAMMA_DIM)
            && (0..GAMMA_DIM).all(|i| self.lambda[(i, i)] > 0.0)
            && (0..GAMMA_DIM).all(|i| (i + 1..GAMMA_DIM).all(|j| self.lambda[(i, j)] == 0.0));
        if ok {
            Ok(())
        } else {
            Err(CoreError::InvalidPosterior)
        }
    }

    /// `gamma_hat = exp(mu + Lambda eps)`.
    pub fn sample_with(&self, eps: &[f64]) -> WarpSample {
        let e = DVector::from_column_slice(eps);
        let g = &self.mu_gamma + &self.lambda * e;
        let mut alpha = [0.0; D];
        let mut beta = [0.0; D];
        for d in 0..D {
            alpha[d] = g[d].exp();
            beta[d] = g[D + d].exp();
        }
        WarpSample { alpha, beta, eps: eps.to_vec() }
    }

    /// Per-dimension prior mean and standard deviation of `gamma_i`.
    fn prior_moments(&self, i: usize) -> (f64, f64) {
        let p = &self.prior[i % D];
        if i < D {
            (p.mu_a, p.sigma_a)
        } else {
            (p.mu_b, p.sigma_b)
        }
    }

    /// `KL(q || p)` between Gaussians in log space.
    pub fn kl(&self) -> f64 {
        let mut kl = 0.0;
        for i in 0..GAMMA_DIM {
            let (m, s) = self.prior_moments(i);
            let s2 = s * s;
            let row_sq: f64 = (0..=i).map(|j| self.lambda[(i, j)].powi(2)).sum();
            kl += row_sq / s2 + (self.mu_gamma[i] - m).powi(2) / s2 - 1.0 + s2.ln() - 2.0 * self.lambda[(i, i)].ln();
        }
        0.5 * kl
    }

    /// Gradient of [`kl`](Self::kl) with respect to `mu_gamma` and the lower
    /// triangle of `Lambda` (diagonal entries differentiated in log space).
    pub fn kl_grad(&self) -> (DVector<f64>, DMatrix<f64>) {
        let mut gm = DVector::zeros(GAMMA_DIM);
        let mut gl = DMatrix::zeros(GAMMA_DIM, GAMMA_DIM);
        for i in 0..GAMMA_DIM {
            let (m, s) = self.prior_moments(i);
            let s2 = s * s;
            gm[i] = (self.mu_gamma[i] - m) / s2;
            for j in 0..i {
                gl[(i, j)] = self.lambda[(i, j)] / s2;
            }
            let l = self.lambda[(i, i)];
            gl[(i, i)] = l * l / s2 - 1.0;
        }
        (gm, gl)
    }
}

/// Standard normal noise for `s` reparameterized draws.
pub fn draw_eps(s: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..s).map(|_| (0..GAMMA_DIM).map(|_| StandardNormal.sample(&mut rng)).collect()).collect()
}

/// `s` seeded draws `gamma_hat = exp(mu + Lambda eps)`, `eps ~ N(0, I)`.
pub fn sample_warp_params(post: &WarpPosterior, s: usize, seed: u64) -> Vec<WarpSample> {
    draw_eps(s, seed).iter().map(|e| post.sample_with(e)).collect()
}

/// Sample-averaged warp of a 4-vector of unit inputs.
pub fn warp_point(x01: &[f64; D], samples: &[WarpSample]) -> [f64; D] {
    let mut out = [0.0; D];
    for s in samples {
        for d in 0..D {
            out[d] += beta_cdf(x01[d], s.alpha[d], s.beta[d]);
        }
    }
    out.map(|v| v / samples.len() as f64)
}

/// Warp values with their derivatives with respect to `ln alpha_d`, `ln beta_d`
/// for a single sample: `(w, dw/dln_alpha, dw/dln_beta)` per dimension.
pub fn warp_point_grad(x01: &[f64; D], s: &WarpSample) -> [(f64, f64, f64); D] {
    let mut out = [(0.0, 0.0, 0.0); D];
    for d in 0..D {
        let (a, b) = (s.alpha[d], s.beta[d]);
        let (v, da, db) = beta_cdf_grad(x01[d], a, b);
        out[d] = (v, da * a, db * b);
    }
    out
}
