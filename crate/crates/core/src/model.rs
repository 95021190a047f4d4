//! The surrogate: warped solver parameters and network-transformed circuit
//! features feeding an exact GP, trained jointly on the log likelihood minus
//! the warp posterior's KL divergence.

use boapta_circuit::{FeatureVector, SolverParams};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Standardizer};
use crate::error::CoreError;
use crate::gp::GpFit;
use crate::kernel::{GpHyperparams, INPUT_DIM};
use crate::mlp::{MlpWeights, FEATURE_DIM};
use crate::optim::{minimize, LbfgsOptions};
use crate::warp::{draw_eps, unit_from_raw, warp_point, warp_point_grad, WarpPosterior, WarpSample, D, GAMMA_DIM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum YTransform {
    /// Standardize raw iteration counts.
    Identity,
    /// Standardize `ln y`.
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateConfig {
    /// Quasi-Newton iterations per training call.
    pub train_iters: usize,
    /// Reparameterized warp draws per round.
    pub warp_samples: usize,
    /// When false the warp is pinned to the identity (`alpha = beta = 1`).
    pub learn_warp: bool,
    pub y_transform: YTransform,
    pub seed: u64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self { train_iters: 5, warp_samples: 1, learn_warp: true, y_transform: YTransform::Identity, seed: 0 }
    }
}

/// Trained surrogate. The GP factorization is rebuilt by [`SurrogateModel::refit`]
/// after deserialization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurrogateModel {
    pub hp: GpHyperparams,
    pub mlp: MlpWeights,
    pub warp: WarpPosterior,
    /// Noise behind the warp draws of the current round.
    pub eps: Vec<Vec<f64>>,
    pub feature_stats: [Standardizer; FEATURE_DIM],
    pub y_stats: Standardizer,
    pub config: SurrogateConfig,
    /// All targets equal (or fewer than two rows): predict the mean only.
    pub degenerate: bool,
    pub rounds: u64,
    #[serde(skip)]
    fit: Option<GpFit>,
}

// parameter vector layout: [log theta0, log theta (11), m0, log noise, mu_gamma (8),
// Lambda lower triangle row-major with log diagonal (36), network weights]
const HP_LEN: usize = 1 + INPUT_DIM + 2;
const LAMBDA_LEN: usize = GAMMA_DIM * (GAMMA_DIM + 1) / 2;
const WARP_LEN: usize = GAMMA_DIM + LAMBDA_LEN;

impl SurrogateModel {
    pub fn new(config: SurrogateConfig) -> Self {
        let warp = if config.learn_warp { WarpPosterior::identity(0.05) } else { WarpPosterior::identity(1.0) };
        Self {
            hp: GpHyperparams::default(),
            mlp: MlpWeights::standard(config.seed),
            warp,
            eps: Vec::new(),
            feature_stats: [Standardizer::default(); FEATURE_DIM],
            y_stats: Standardizer::default(),
            config,
            degenerate: true,
            rounds: 0,
            fit: None,
        }
    }

    pub fn is_trained(&self) -> bool {
        self.degenerate || self.fit.is_some()
    }

    pub fn fit(&self) -> Option<&GpFit> {
        self.fit.as_ref()
    }

    fn transform_y(&self, y: f64) -> f64 {
        match self.config.y_transform {
            YTransform::Identity => y,
            YTransform::Log => y.max(1e-300).ln(),
        }
    }

    /// Standardized target of a raw `y`.
    pub fn standardize_y(&self, y: f64) -> f64 {
        self.y_stats.apply(self.transform_y(y))
    }

    /// Raw-space value of a standardized prediction mean.
    pub fn unstandardize_y(&self, v: f64) -> f64 {
        let t = self.y_stats.invert(v);
        match self.config.y_transform {
            YTransform::Identity => t,
            YTransform::Log => t.exp(),
        }
    }

    pub fn standardized_features(&self, xi: &[f64; FEATURE_DIM]) -> [f64; FEATURE_DIM] {
        std::array::from_fn(|d| self.feature_stats[d].apply(xi[d]))
    }

    /// Network output for a raw feature vector.
    pub fn phi(&self, xi: &[f64; FEATURE_DIM]) -> DVector<f64> {
        self.mlp.forward(&self.standardized_features(xi)).expect("network input width is fixed")
    }

    pub fn warp_samples(&self) -> Vec<WarpSample> {
        if self.config.learn_warp {
            self.eps.iter().map(|e| self.warp.sample_with(e)).collect()
        } else {
            vec![WarpSample { alpha: [1.0; D], beta: [1.0; D], eps: vec![0.0; GAMMA_DIM] }]
        }
    }

    /// Kernel input `[w(x01), Phi(xi)]`.
    pub fn kernel_input(&self, x01: &[f64; D], phi: &DVector<f64>, samples: &[WarpSample]) -> Vec<f64> {
        let w = warp_point(x01, samples);
        w.iter().chain(phi.iter()).copied().collect()
    }

    /// Posterior in standardized target units.
    pub fn predict_standardized(&self, x01: &[f64; D], xi: &[f64; FEATURE_DIM]) -> Result<(f64, f64), CoreError> {
        if self.degenerate {
            return Ok((0.0, 0.0));
        }
        let fit = self.fit.as_ref().ok_or(CoreError::Untrained)?;
        let input = self.kernel_input(x01, &self.phi(xi), &self.warp_samples());
        Ok(fit.predict(&input))
    }

    /// Posterior mean and variance of `y` in raw units (for the log transform,
    /// the variance is that of `ln y`).
    pub fn gp_predict(&self, x: &SolverParams, xi: &FeatureVector) -> Result<(f64, f64), CoreError> {
        let x01 = x.vector().map(unit_from_raw);
        let (m, v) = self.predict_standardized(&x01, &xi.to_array())?;
        Ok((self.unstandardize_y(m), v * self.y_stats.std * self.y_stats.std))
    }

    fn pack(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(HP_LEN + WARP_LEN + self.mlp.n_params());
        p.push(self.hp.log_theta0);
        p.extend_from_slice(&self.hp.log_theta);
        p.push(self.hp.mean_const);
        p.push(self.hp.log_noise);
        p.extend(self.warp.mu_gamma.iter());
        for i in 0..GAMMA_DIM {
            for j in 0..i {
                p.push(self.warp.lambda[(i, j)]);
            }
            p.push(self.warp.lambda[(i, i)].ln());
        }
        p.extend(self.mlp.to_vec());
        p
    }

    fn unpack(&mut self, p: &[f64]) {
        self.hp.log_theta0 = p[0];
        self.hp.log_theta.copy_from_slice(&p[1..1 + INPUT_DIM]);
        self.hp.mean_const = p[1 + INPUT_DIM];
        self.hp.log_noise = p[2 + INPUT_DIM];
        let mut at = HP_LEN;
        for i in 0..GAMMA_DIM {
            self.warp.mu_gamma[i] = p[at + i];
        }
        at += GAMMA_DIM;
        for i in 0..GAMMA_DIM {
            for j in 0..i {
                self.warp.lambda[(i, j)] = p[at];
                at += 1;
            }
            self.warp.lambda[(i, i)] = p[at].exp();
            at += 1;
        }
        self.mlp.set_from_slice(&p[at..]);
    }

    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let n = HP_LEN + WARP_LEN + self.mlp.n_params();
        let mut lo = vec![f64::NEG_INFINITY; n];
        let mut hi = vec![f64::INFINITY; n];
        let mut set = |i: usize, l: f64, h: f64| {
            lo[i] = l;
            hi[i] = h;
        };
        set(0, 1e-3f64.ln(), 1e3f64.ln());
        for d in 0..INPUT_DIM {
            set(1 + d, 1e-4f64.ln(), 1e4f64.ln());
        }
        set(1 + INPUT_DIM, -10.0, 10.0);
        set(2 + INPUT_DIM, 1e-8f64.ln(), 0.0);
        let mut at = HP_LEN;
        for _ in 0..GAMMA_DIM {
            set(at, -4.0, 4.0);
            at += 1;
        }
        for i in 0..GAMMA_DIM {
            for _ in 0..i {
                set(at, -3.0, 3.0);
                at += 1;
            }
            set(at, 1e-3f64.ln(), 3f64.ln());
            at += 1;
        }
        if !self.config.learn_warp {
            // pin the warp block at its current values
            for i in HP_LEN..HP_LEN + WARP_LEN {
                lo[i] = f64::NAN;
                hi[i] = f64::NAN;
            }
        }
        (lo, hi)
    }

    /// Retrains on `data`, warm-starting from the current parameters.
    pub fn train(&mut self, data: &Dataset) -> Result<(), CoreError> {
        self.feature_stats = data.feature_stats();
        let ty: Vec<f64> = data.rows.iter().map(|r| self.transform_y(r.y)).collect();
        let spread = ty.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - ty.iter().cloned().fold(f64::INFINITY, f64::min);
        self.y_stats = Standardizer::fit(ty.iter().copied());
        self.rounds += 1;
        self.eps = draw_eps(self.config.warp_samples.max(1), self.config.seed ^ self.rounds.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        if data.len() < 2 || !(spread > 0.0) {
            self.degenerate = true;
            self.fit = None;
            self.hp.mean_const = 0.0;
            return Ok(());
        }
        self.degenerate = false;
        let problem = TrainingProblem::new(self, data);
        let (mut lo, mut hi) = self.bounds();
        let mut x0 = self.pack();
        for i in 0..x0.len() {
            if lo[i].is_nan() {
                lo[i] = x0[i];
                hi[i] = x0[i];
            } else {
                x0[i] = x0[i].clamp(lo[i], hi[i]);
            }
        }
        let opts = LbfgsOptions { max_iter: self.config.train_iters, ..Default::default() };
        let mut scratch = self.clone();
        let result = minimize(|p, g| problem.objective(&mut scratch, p, g), &x0, &lo, &hi, &opts);
        if result.f.is_finite() {
            self.unpack(&result.x);
        } else {
            self.unpack(&x0);
        }
        self.refit(data)
    }

    /// Rebuilds the cached factorization for the current parameters without
    /// optimizing anything.
    pub fn refit(&mut self, data: &Dataset) -> Result<(), CoreError> {
        if self.degenerate {
            self.fit = None;
            return Ok(());
        }
        let problem = TrainingProblem::new(self, data);
        let samples = self.warp_samples();
        let inputs = problem.inputs(self, &samples);
        self.fit = Some(GpFit::new(inputs, problem.y.clone(), &self.hp)?);
        Ok(())
    }

    /// `log p(y | params) - KL(q || p)` at the current parameters.
    pub fn objective(&self, data: &Dataset) -> Result<f64, CoreError> {
        let problem = TrainingProblem::new(self, data);
        let mut g = vec![0.0; self.pack().len()];
        let mut scratch = self.clone();
        let v = -problem.objective(&mut scratch, &self.pack(), &mut g);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(CoreError::NotPositiveDefinite)
        }
    }

    /// Objective and its gradient over the packed parameter vector, exposed for
    /// gradient checking.
    pub fn objective_and_gradient(&self, data: &Dataset) -> (f64, Vec<f64>, Vec<f64>) {
        let problem = TrainingProblem::new(self, data);
        let p = self.pack();
        let mut g = vec![0.0; p.len()];
        let mut scratch = self.clone();
        let v = problem.objective(&mut scratch, &p, &mut g);
        (-v, g.iter().map(|x| -x).collect(), p)
    }

    /// Objective at an arbitrary packed parameter vector.
    pub fn objective_at(&self, data: &Dataset, p: &[f64]) -> f64 {
        let problem = TrainingProblem::new(self, data);
        let mut g = vec![0.0; p.len()];
        let mut scratch = self.clone();
        -problem.objective(&mut scratch, p, &mut g)
    }
}

/// Fixed per-round training inputs.
struct TrainingProblem {
    x01: Vec<[f64; D]>,
    feats: Vec<[f64; FEATURE_DIM]>,
    y: DVector<f64>,
}

impl TrainingProblem {
    fn new(model: &SurrogateModel, data: &Dataset) -> Self {
        Self {
            x01: data.rows.iter().map(|r| r.unit_x()).collect(),
            feats: data.rows.iter().map(|r| model.standardized_features(&r.features)).collect(),
            y: DVector::from_iterator(data.len(), data.rows.iter().map(|r| model.standardize_y(r.y))),
        }
    }

    fn inputs(&self, model: &SurrogateModel, samples: &[WarpSample]) -> DMatrix<f64> {
        let n = self.x01.len();
        let mut e = DMatrix::zeros(n, INPUT_DIM);
        for i in 0..n {
            let w = warp_point(&self.x01[i], samples);
            let phi = model.mlp.forward(&self.feats[i]).expect("network input width is fixed");
            for d in 0..D {
                e[(i, d)] = w[d];
            }
            for d in 0..FEATURE_DIM {
                e[(i, D + d)] = phi[d];
            }
        }
        e
    }

    /// Negated training objective `-(L - KL)` with its gradient, in the
    /// minimization form the optimizer expects. Returns +inf when the kernel
    /// matrix cannot be factorized.
    fn objective(&self, model: &mut SurrogateModel, p: &[f64], grad: &mut [f64]) -> f64 {
        model.unpack(p);
        grad.iter_mut().for_each(|g| *g = 0.0);
        let n = self.x01.len();
        let samples = model.warp_samples();
        let s_count = samples.len() as f64;

        let mut e = DMatrix::zeros(n, INPUT_DIM);
        // dw_id / d gamma_s for each sample: (d ln alpha_d, d ln beta_d)
        let mut wgrad = vec![vec![[(0.0, 0.0); D]; samples.len()]; n];
        let mut acts = Vec::with_capacity(n);
        for i in 0..n {
            for (s, sample) in samples.iter().enumerate() {
                let wg = warp_point_grad(&self.x01[i], sample);
                for d in 0..D {
                    e[(i, d)] += wg[d].0 / s_count;
                    wgrad[i][s][d] = (wg[d].1 / s_count, wg[d].2 / s_count);
                }
            }
            let a = model.mlp.forward_cache(&self.feats[i]).expect("network input width is fixed");
            for d in 0..FEATURE_DIM {
                e[(i, D + d)] = a.last().unwrap()[d];
            }
            acts.push(a);
        }
        let Ok(fit) = GpFit::new(e, self.y.clone(), &model.hp) else {
            return f64::INFINITY;
        };
        let ll = fit.log_likelihood();
        let lg = fit.log_likelihood_grad();
        let kl = if model.config.learn_warp { model.warp.kl() } else { 0.0 };

        grad[0] = -lg.log_theta0;
        for d in 0..INPUT_DIM {
            grad[1 + d] = -lg.log_theta[d];
        }
        grad[1 + INPUT_DIM] = -lg.mean_const;
        grad[2 + INPUT_DIM] = -lg.log_noise;

        if model.config.learn_warp {
            let mut d_mu = DVector::<f64>::zeros(GAMMA_DIM);
            let mut d_lambda = DMatrix::<f64>::zeros(GAMMA_DIM, GAMMA_DIM);
            for (s, sample) in samples.iter().enumerate() {
                let mut d_gamma = DVector::<f64>::zeros(GAMMA_DIM);
                for i in 0..n {
                    for d in 0..D {
                        let de = lg.inputs[(i, d)];
                        d_gamma[d] += de * wgrad[i][s][d].0;
                        d_gamma[D + d] += de * wgrad[i][s][d].1;
                    }
                }
                d_mu += &d_gamma;
                for r in 0..GAMMA_DIM {
                    for c in 0..=r {
                        d_lambda[(r, c)] += d_gamma[r] * sample.eps[c];
                    }
                }
            }
            let (kl_mu, kl_lambda) = model.warp.kl_grad();
            let mut at = HP_LEN;
            for r in 0..GAMMA_DIM {
                grad[at + r] = -d_mu[r] + kl_mu[r];
            }
            at += GAMMA_DIM;
            for r in 0..GAMMA_DIM {
                for c in 0..r {
                    grad[at] = -d_lambda[(r, c)] + kl_lambda[(r, c)];
                    at += 1;
                }
                grad[at] = -d_lambda[(r, r)] * model.warp.lambda[(r, r)] + kl_lambda[(r, r)];
                at += 1;
            }
        }

        let mut mg = model.mlp.zeros_like();
        for (i, a) in acts.iter().enumerate() {
            let g_out = DVector::from_fn(FEATURE_DIM, |d, _| lg.inputs[(i, D + d)]);
            model.mlp.backward(a, &g_out, &mut mg);
        }
        for (g, v) in grad[HP_LEN + WARP_LEN..].iter_mut().zip(mg.to_vec()) {
            *g = -v;
        }
        -(ll - kl)
    }
}

/// Trains a fresh model on `data`.
pub fn train_surrogate(data: &Dataset, config: SurrogateConfig) -> Result<SurrogateModel, CoreError> {
    let mut model = SurrogateModel::new(config);
    model.train(data)?;
    Ok(model)
}
