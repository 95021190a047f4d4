//! Exact Gaussian-process regression on precomputed kernel inputs.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::CoreError;
use crate::kernel::GpHyperparams;

/// Diagonal jitter tried in order until the Cholesky factorization succeeds.
pub const JITTER_LADDER: [f64; 6] = [0.0, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4];

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// A GP conditioned on `N` inputs (rows of `inputs`) and targets `y`.
#[derive(Debug, Clone)]
pub struct GpFit {
    pub inputs: DMatrix<f64>,
    pub y: DVector<f64>,
    pub hp: GpHyperparams,
    theta0: f64,
    theta: Vec<f64>,
    /// Noise plus whatever jitter the factorization needed.
    pub noise: f64,
    pub jitter: f64,
    /// Kernel matrix without the diagonal noise.
    pub k: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    pub alpha: DVector<f64>,
}

/// Gradient of the log marginal likelihood.
#[derive(Debug, Clone)]
pub struct LikelihoodGrad {
    pub log_theta0: f64,
    pub log_theta: Vec<f64>,
    pub mean_const: f64,
    pub log_noise: f64,
    /// `dL / d inputs`, same shape as the input matrix.
    pub inputs: DMatrix<f64>,
}

impl GpFit {
    pub fn new(inputs: DMatrix<f64>, y: DVector<f64>, hp: &GpHyperparams) -> Result<Self, CoreError> {
        let n = inputs.nrows();
        if n == 0 || y.len() != n {
            return Err(CoreError::Dimension { expected: n.max(1), got: y.len() });
        }
        if inputs.ncols() != hp.log_theta.len() {
            return Err(CoreError::Dimension { expected: hp.log_theta.len(), got: inputs.ncols() });
        }
        let theta0 = hp.theta0();
        let theta = hp.theta();
        let mut k = DMatrix::zeros(n, n);
        for i in 0..n {
            k[(i, i)] = theta0;
            for j in 0..i {
                let mut s = 0.0;
                for (d, t) in theta.iter().enumerate() {
                    let diff = inputs[(i, d)] - inputs[(j, d)];
                    s += t * diff * diff;
                }
                let v = theta0 * (-s).exp();
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        let noise_var = hp.noise_var();
        for jitter in JITTER_LADDER {
            let mut ky = k.clone();
            for i in 0..n {
                ky[(i, i)] += noise_var + jitter;
            }
            if let Some(chol) = Cholesky::new(ky) {
                let r = y.add_scalar(-hp.mean_const);
                let alpha = chol.solve(&r);
                return Ok(Self {
                    inputs,
                    y,
                    hp: hp.clone(),
                    theta0,
                    theta,
                    noise: noise_var + jitter,
                    jitter,
                    k,
                    chol,
                    alpha,
                });
            }
        }
        Err(CoreError::NotPositiveDefinite)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn theta0(&self) -> f64 {
        self.theta0
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// `-1/2 r^T Ky^-1 r - 1/2 ln|Ky| - N/2 ln 2 pi`.
    pub fn log_likelihood(&self) -> f64 {
        let r = self.y.add_scalar(-self.hp.mean_const);
        let logdet: f64 = 2.0 * self.chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        -0.5 * r.dot(&self.alpha) - 0.5 * logdet - 0.5 * self.len() as f64 * LN_2PI
    }

    /// Closed-form gradient through `G = 1/2 (alpha alpha^T - Ky^-1)`.
    pub fn log_likelihood_grad(&self) -> LikelihoodGrad {
        let n = self.len();
        let kinv = self.chol.inverse();
        let g = (&self.alpha * self.alpha.transpose() - kinv) * 0.5;
        let dim = self.theta.len();
        let mut d_theta = vec![0.0; dim];
        let mut d_theta0 = 0.0;
        let mut d_inputs = DMatrix::zeros(n, dim);
        for i in 0..n {
            d_theta0 += g[(i, i)] * self.k[(i, i)];
            for j in 0..i {
                let gk = 2.0 * g[(i, j)] * self.k[(i, j)];
                d_theta0 += gk;
                for d in 0..dim {
                    let diff = self.inputs[(i, d)] - self.inputs[(j, d)];
                    d_theta[d] -= gk * self.theta[d] * diff * diff;
                    let de = -2.0 * self.theta[d] * diff * gk;
                    d_inputs[(i, d)] += de;
                    d_inputs[(j, d)] -= de;
                }
            }
        }
        LikelihoodGrad {
            log_theta0: d_theta0,
            log_theta: d_theta,
            mean_const: self.alpha.sum(),
            log_noise: self.hp.noise_var() * g.trace(),
            inputs: d_inputs,
        }
    }

    /// Cross-covariances between `x` and every training input.
    pub fn cross_kernel(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_fn(self.len(), |i, _| {
            let mut s = 0.0;
            for (d, t) in self.theta.iter().enumerate() {
                let diff = x[d] - self.inputs[(i, d)];
                s += t * diff * diff;
            }
            self.theta0 * (-s).exp()
        })
    }

    /// Posterior mean and variance (noise included) at `x`.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let k = self.cross_kernel(x);
        self.predict_from_cross(&k)
    }

    pub fn predict_from_cross(&self, k: &DVector<f64>) -> (f64, f64) {
        let mu = self.hp.mean_const + k.dot(&self.alpha);
        let v = self.chol.l_dirty().solve_lower_triangular(k).expect("factor is non-singular");
        let var = (self.noise + self.theta0 - v.norm_squared()).max(0.0);
        (mu, var)
    }

    /// `Ky^-1 k`.
    pub fn solve(&self, k: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::GpHyperparams;

    fn hp_1d(theta0: f64, theta: f64, m0: f64, noise: f64) -> GpHyperparams {
        GpHyperparams { log_theta0: theta0.ln(), log_theta: vec![theta.ln()], mean_const: m0, log_noise: noise.ln() }
    }

    #[test]
    fn scalar_gaussian() {
        let hp = hp_1d(2.0, 1.0, 0.3, 0.5);
        let fit = GpFit::new(DMatrix::from_element(1, 1, 0.4), DVector::from_element(1, 0.3), &hp).unwrap();
        let expect = -0.5 * (2.0 * std::f64::consts::PI * 2.5).ln();
        assert!((fit.log_likelihood() - expect).abs() < 1e-14);
    }

    #[test]
    fn two_point_hand_oracle() {
        let (t0, t, m0, s2) = (1.5, 2.0, 0.1, 0.01);
        let hp = hp_1d(t0, t, m0, s2);
        let x = [0.2, 0.7];
        let y = [1.0, -0.5];
        let fit = GpFit::new(DMatrix::from_column_slice(2, 1, &x), DVector::from_column_slice(&y), &hp).unwrap();
        let k12 = t0 * (-t * 0.25f64).exp();
        let (a, b, c) = (t0 + s2, k12, t0 + s2);
        let det = a * c - b * b;
        let inv = [[c / det, -b / det], [-b / det, a / det]];
        let r = [y[0] - m0, y[1] - m0];
        let xs = 0.5;
        let ks = [t0 * (-t * 0.09f64).exp(), t0 * (-t * 0.04f64).exp()];
        let w = [inv[0][0] * ks[0] + inv[0][1] * ks[1], inv[1][0] * ks[0] + inv[1][1] * ks[1]];
        let mu = m0 + w[0] * r[0] + w[1] * r[1];
        let var = s2 + t0 - (w[0] * ks[0] + w[1] * ks[1]);
        let (pm, pv) = fit.predict(&[xs]);
        assert!((pm - mu).abs() < 1e-10 && (pv - var).abs() < 1e-10);
        let quad = r[0] * (inv[0][0] * r[0] + inv[0][1] * r[1]) + r[1] * (inv[1][0] * r[0] + inv[1][1] * r[1]);
        let ll = -0.5 * quad - 0.5 * det.ln() - LN_2PI;
        assert!((fit.log_likelihood() - ll).abs() < 1e-10);
    }

    #[test]
    fn interpolates_and_reverts() {
        let hp = hp_1d(1.0, 5.0, 0.0, 1e-10);
        let x = [0.0, 0.3, 0.5, 0.9];
        let y = [0.2, -0.4, 1.0, 0.0];
        let fit = GpFit::new(DMatrix::from_column_slice(4, 1, &x), DVector::from_column_slice(&y), &hp).unwrap();
        for (xi, yi) in x.iter().zip(y) {
            let (m, v) = fit.predict(&[*xi]);
            assert!((m - yi).abs() < 1e-6);
            assert!(v <= 2.0 * fit.noise + 1e-9);
        }
        let (m, v) = fit.predict(&[1e4]);
        assert!((m - 0.0).abs() < 1e-12 && (v - 1.0 - fit.noise).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let inputs = DMatrix::from_row_slice(5, 2, &[0.1, 0.3, 0.4, -0.2, 0.8, 0.5, 0.35, 0.9, -0.5, 0.0]);
        let y = DVector::from_column_slice(&[0.3, -1.0, 0.8, 0.1, 1.4]);
        let hp = GpHyperparams { log_theta0: 0.2, log_theta: vec![0.5, -0.3], mean_const: 0.1, log_noise: -2.0 };
        let fit = GpFit::new(inputs.clone(), y.clone(), &hp).unwrap();
        let g = fit.log_likelihood_grad();
        let h = 1e-6;
        let ll = |hp: &GpHyperparams, inp: &DMatrix<f64>| GpFit::new(inp.clone(), y.clone(), hp).unwrap().log_likelihood();
        let check = |an: f64, fd: f64| assert!((an - fd).abs() < 1e-6 * fd.abs().max(1.0), "{an} {fd}");
        let mut p = hp.clone();
        p.log_theta0 += h;
        let mut m = hp.clone();
        m.log_theta0 -= h;
        check(g.log_theta0, (ll(&p, &inputs) - ll(&m, &inputs)) / (2.0 * h));
        for d in 0..2 {
            let mut p = hp.clone();
            p.log_theta[d] += h;
            let mut m = hp.clone();
            m.log_theta[d] -= h;
            check(g.log_theta[d], (ll(&p, &inputs) - ll(&m, &inputs)) / (2.0 * h));
        }
        let mut p = hp.clone();
        p.mean_const += h;
        let mut m = hp.clone();
        m.mean_const -= h;
        check(g.mean_const, (ll(&p, &inputs) - ll(&m, &inputs)) / (2.0 * h));
        let mut p = hp.clone();
        p.log_noise += h;
        let mut m = hp.clone();
        m.log_noise -= h;
        check(g.log_noise, (ll(&p, &inputs) - ll(&m, &inputs)) / (2.0 * h));
        for i in 0..5 {
            for d in 0..2 {
                let mut ip = inputs.clone();
                ip[(i, d)] += h;
                let mut im = inputs.clone();
                im[(i, d)] -= h;
                check(g.inputs[(i, d)], (ll(&hp, &ip) - ll(&hp, &im)) / (2.0 * h));
            }
        }
    }

    #[test]
    fn duplicate_rows_stay_factorizable() {
        // the added row lowers the likelihood once its conditional variance exceeds 1/(2 pi)
        let hp = hp_1d(1.0, 1.0, 0.0, 0.5);
        let x1 = DMatrix::from_column_slice(1, 1, &[0.5]);
        let x2 = DMatrix::from_column_slice(2, 1, &[0.5, 0.5]);
        let one = GpFit::new(x1, DVector::from_column_slice(&[0.7]), &hp).unwrap();
        let two = GpFit::new(x2.clone(), DVector::from_column_slice(&[0.7, 0.7]), &hp).unwrap();
        assert!(two.log_likelihood() <= one.log_likelihood());
        let tiny = hp_1d(1.0, 1.0, 0.0, 1e-300);
        let fit = GpFit::new(x2, DVector::from_column_slice(&[0.7, 0.7]), &tiny).unwrap();
        assert!(fit.jitter > 0.0 && fit.log_likelihood().is_finite());
    }
}
