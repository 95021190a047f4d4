//! Acquisition functions and their maximization over the unconstrained
//! `z`-space of solver parameters.
//!
//! All scores work on the negated standardized objective, so larger is better.

use boapta_circuit::{FeatureVector, SolverParams};
use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::CoreError;
use crate::model::SurrogateModel;
use crate::optim::{minimize, LbfgsOptions};
use crate::special::{beta_pdf, mills_ratio_inv, norm_cdf, norm_log_cdf, norm_pdf};
use crate::warp::{unit_from_raw, warp_point, WarpSample, D};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AcquisitionKind {
    Ei,
    Ucb,
    Mes,
}

impl std::str::FromStr for AcquisitionKind {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ei" => Ok(Self::Ei),
            "ucb" => Ok(Self::Ucb),
            "mes" => Ok(Self::Mes),
            other => Err(CoreError::Config(format!("unknown acquisition '{other}' (expected ei, ucb or mes)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionConfig {
    pub kind: AcquisitionKind,
    pub ucb_beta: f64,
    pub mes_num_max_samples: usize,
    /// Candidate points for the max-value distribution fit.
    pub mes_grid: usize,
    pub restarts: usize,
    /// Quasi-Newton iterations per restart.
    pub inner_iters: usize,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        Self { kind: AcquisitionKind::Mes, ucb_beta: 0.1, mes_num_max_samples: 10, mes_grid: 512, restarts: 16, inner_iters: 5 }
    }
}

impl AcquisitionConfig {
    pub fn validate(&self) -> Result<(), CoreError> {
        if !(self.ucb_beta > 0.0 && self.ucb_beta.is_finite()) {
            return Err(CoreError::Config(format!("ucb_beta must be positive, got {}", self.ucb_beta)));
        }
        if self.restarts == 0 {
            return Err(CoreError::Config("restarts must be at least 1".into()));
        }
        if self.kind == AcquisitionKind::Mes && (self.mes_num_max_samples == 0 || self.mes_grid == 0) {
            return Err(CoreError::Config("MES needs at least one max-value sample and grid point".into()));
        }
        Ok(())
    }
}

/// Box on `z` used by the inner optimizer; `x` saturates long before it.
pub const Z_BOUND: f64 = 10.0;

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// `x_d = 10^(14 sigma(z_d) - 7)`.
pub fn z_to_raw(z: f64) -> f64 {
    10f64.powf(14.0 * sigmoid(z) - 7.0)
}

/// `dx/dz` of [`z_to_raw`].
pub fn z_to_raw_derivative(z: f64) -> f64 {
    let s = sigmoid(z);
    z_to_raw(z) * std::f64::consts::LN_10 * 14.0 * s * (1.0 - s)
}

/// Inverse of [`z_to_raw`] for interior points.
pub fn raw_to_z(x: f64) -> f64 {
    let u = unit_from_raw(x).clamp(1e-12, 1.0 - 1e-12);
    (u / (1.0 - u)).ln()
}

pub fn z_to_x(z: &[f64; D], tau: f64) -> SolverParams {
    let x = z.map(z_to_raw).map(|v| v.clamp(1e-7, 1e7));
    SolverParams::from_vector(x, tau).expect("z image lies inside the parameter box")
}

/// `Delta Phi(Delta/s) + s phi(Delta/s)` with `Delta = mu - y_best`.
pub fn expected_improvement(mu: f64, var: f64, y_best: f64) -> Result<f64, CoreError> {
    if var < 0.0 {
        return Err(CoreError::NegativeVariance(var));
    }
    Ok(ei_parts(mu - y_best, var.sqrt()).0)
}

/// EI and its partials `(d/dDelta, d/ds)`.
fn ei_parts(delta: f64, s: f64) -> (f64, f64, f64) {
    if s <= 0.0 {
        return (delta.max(0.0), if delta > 0.0 { 1.0 } else { 0.0 }, 0.0);
    }
    let u = delta / s;
    let (cdf, pdf) = (norm_cdf(u), norm_pdf(u));
    ((delta * cdf + s * pdf).max(0.0), cdf, pdf)
}

/// `mu + sqrt(beta) sqrt(var)`.
pub fn ucb_score(mu: f64, var: f64, beta: f64) -> f64 {
    mu + beta.sqrt() * var.max(0.0).sqrt()
}

/// Mean over `y*` samples of `gamma phi(gamma) / (2 Phi(gamma)) - ln Phi(gamma)`,
/// `gamma = (y* - mu) / sqrt(var)`.
pub fn mes_score(mu: f64, var: f64, max_samples: &[f64]) -> Result<f64, CoreError> {
    if max_samples.is_empty() {
        return Err(CoreError::NoMaxSamples);
    }
    let s = var.max(1e-300).sqrt();
    let total: f64 = max_samples.iter().map(|y| mes_term((y - mu) / s).0).sum();
    Ok(total / max_samples.len() as f64)
}

/// Per-sample MES term and its derivative in `gamma`.
fn mes_term(gamma: f64) -> (f64, f64) {
    let r = mills_ratio_inv(gamma);
    let value = 0.5 * gamma * r - norm_log_cdf(gamma);
    let deriv = -0.5 * r * (1.0 + gamma * gamma + gamma * r);
    (value.max(0.0), deriv)
}

/// Acquisition surface for one circuit, with the feature-side kernel factor
/// precomputed.
pub struct AcquisitionSurface<'a> {
    model: &'a SurrogateModel,
    samples: Vec<WarpSample>,
    /// `theta0 * k2(Phi(xi*), Phi_i)` per training row.
    k2: DVector<f64>,
    kind: AcquisitionKind,
    ucb_beta: f64,
    y_best: f64,
    max_samples: Vec<f64>,
}

impl<'a> AcquisitionSurface<'a> {
    /// Precomputes the feature factor. `y_best` is the best negated standardized
    /// observation for the target circuit.
    pub fn new(model: &'a SurrogateModel, xi: &FeatureVector, config: &AcquisitionConfig, y_best: f64) -> Result<Self, CoreError> {
        let fit = model.fit().ok_or(CoreError::Untrained)?;
        let phi = model.phi(&xi.to_array());
        let theta = fit.theta();
        let k2 = DVector::from_fn(fit.len(), |i, _| {
            let mut s = 0.0;
            for d in 0..phi.len() {
                let diff = phi[d] - fit.inputs[(i, D + d)];
                s += theta[D + d] * diff * diff;
            }
            fit.theta0() * (-s).exp()
        });
        Ok(Self {
            model,
            samples: model.warp_samples(),
            k2,
            kind: config.kind,
            ucb_beta: config.ucb_beta,
            y_best,
            max_samples: Vec::new(),
        })
    }

    /// Negated standardized posterior mean and variance at `x01`, with gradients
    /// with respect to `x01`.
    pub fn posterior(&self, x01: &[f64; D]) -> (f64, f64, [f64; D], [f64; D]) {
        let fit = self.model.fit().expect("surface is built from a trained model");
        let theta = fit.theta();
        let w = warp_point(x01, &self.samples);
        let mut dw = [0.0; D];
        for s in &self.samples {
            for d in 0..D {
                dw[d] += beta_pdf(x01[d], s.alpha[d], s.beta[d]);
            }
        }
        dw.iter_mut().for_each(|v| *v /= self.samples.len() as f64);
        let n = fit.len();
        let k = DVector::from_fn(n, |i, _| {
            let mut s = 0.0;
            for d in 0..D {
                let diff = w[d] - fit.inputs[(i, d)];
                s += theta[d] * diff * diff;
            }
            self.k2[i] * (-s).exp()
        });
        let (mu, var) = fit.predict_from_cross(&k);
        let kinv_k = fit.solve(&k);
        let mut dmu = [0.0; D];
        let mut dvar = [0.0; D];
        for d in 0..D {
            let mut gm = 0.0;
            let mut gv = 0.0;
            for i in 0..n {
                let dk = -2.0 * theta[d] * (w[d] - fit.inputs[(i, d)]) * k[i];
                gm += fit.alpha[i] * dk;
                gv += kinv_k[i] * dk;
            }
            dmu[d] = -gm * dw[d];
            dvar[d] = if var > 0.0 { -2.0 * gv * dw[d] } else { 0.0 };
        }
        (-mu, var, dmu, dvar)
    }

    /// Acquisition value and gradient with respect to `x01`.
    pub fn value_grad(&self, x01: &[f64; D]) -> (f64, [f64; D]) {
        let (mu, var, dmu, dvar) = self.posterior(x01);
        let s = var.sqrt();
        let ds: [f64; D] = std::array::from_fn(|d| if s > 0.0 { dvar[d] / (2.0 * s) } else { 0.0 });
        let (value, a_mu, a_s) = match self.kind {
            AcquisitionKind::Ei => ei_parts(mu - self.y_best, s),
            AcquisitionKind::Ucb => (ucb_score(mu, var, self.ucb_beta), 1.0, self.ucb_beta.sqrt()),
            AcquisitionKind::Mes => {
                let s = s.max(1e-150);
                let m = self.max_samples.len() as f64;
                let (mut v, mut gm, mut gs) = (0.0, 0.0, 0.0);
                for y in &self.max_samples {
                    let gamma = (y - mu) / s;
                    let (t, dt) = mes_term(gamma);
                    v += t / m;
                    gm += -dt / s / m;
                    gs += -dt * gamma / s / m;
                }
                (v, gm, gs)
            }
        };
        (value, std::array::from_fn(|d| a_mu * dmu[d] + a_s * ds[d]))
    }

    pub fn value(&self, x01: &[f64; D]) -> f64 {
        self.value_grad(x01).0
    }

    /// Fits a Gumbel distribution to `P(max f <= y) = prod_j Phi((y - mu_j)/s_j)`
    /// over `grid` Halton points and draws `count` max-value samples, each kept
    /// at or above the incumbent.
    pub fn sample_max_values(&mut self, grid: usize, count: usize, rng: &mut ChaCha8Rng) {
        let post: Vec<(f64, f64)> = (0..grid)
            .map(|j| {
                let u: [f64; D] = std::array::from_fn(|d| halton(j + 1, PRIMES[d]));
                let (m, v, _, _) = self.posterior(&u);
                (m, v.sqrt().max(1e-9))
            })
            .collect();
        let log_cdf = |y: f64| post.iter().map(|(m, s)| norm_log_cdf((y - m) / s)).sum::<f64>();
        let top = post.iter().map(|(m, s)| m + 8.0 * s).fold(self.y_best, f64::max);
        let bottom = post.iter().map(|(m, _)| *m).fold(self.y_best, f64::max) - 1.0;
        let quantile = |q: f64| {
            let target = q.ln();
            let (mut lo, mut hi) = (bottom, top);
            while log_cdf(lo) > target {
                lo -= hi - lo;
            }
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if log_cdf(mid) < target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        };
        let (y25, y50, y75) = (quantile(0.25), quantile(0.5), quantile(0.75));
        let b = ((y75 - y25) / ((-(0.25f64).ln()).ln() - (-(0.75f64).ln()).ln())).max(1e-12);
        let a = y50 + b * (2f64.ln()).ln();
        self.max_samples = (0..count)
            .map(|_| {
                let u: f64 = rng.random_range(1e-12..1.0 - 1e-12);
                (a - b * (-u.ln()).ln()).max(self.y_best + 1e-9)
            })
            .collect();
    }

    pub fn max_samples(&self) -> &[f64] {
        &self.max_samples
    }
}

const PRIMES: [usize; D] = [2, 3, 5, 7];

fn halton(mut i: usize, base: usize) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// Latin-hypercube sample of `n` points in the open unit cube.
fn latin_hypercube(n: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; D]> {
    let mut pts = vec![[0.0; D]; n];
    for d in 0..D {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(rng);
        for (p, s) in pts.iter_mut().zip(strata) {
            p[d] = (s as f64 + rng.random_range(0.0..1.0)) / n as f64;
        }
    }
    pts
}

/// Starting points of the inner search: a Latin-hypercube design in the unit
/// cube mapped to `z`, then the incumbent `x`.
pub fn restart_points(restarts: usize, incumbent: &[f64; D], seed: u64) -> Vec<[f64; D]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_1a7e_4c0d_e5a1);
    let mut starts: Vec<[f64; D]> = latin_hypercube(restarts, &mut rng)
        .into_iter()
        .map(|u| u.map(|v| (v / (1.0 - v)).ln().clamp(-Z_BOUND, Z_BOUND)))
        .collect();
    starts.push(incumbent.map(|x| raw_to_z(x).clamp(-Z_BOUND, Z_BOUND)));
    starts
}

/// Outcome of [`optimize_acquisition`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub params: SolverParams,
    pub z: [f64; D],
    pub acquisition: f64,
}

/// Multi-start quasi-Newton ascent of the acquisition over `z` for the circuit
/// `circuit_id` with features `xi`. Starts are a Latin-hypercube design plus the
/// circuit's incumbent; the best of all starts and end points wins, ties going
/// to the earliest. An untrained or degenerate model yields the centre `z = 0`.
pub fn optimize_acquisition(
    model: &SurrogateModel,
    data: &Dataset,
    circuit_id: &str,
    xi: &FeatureVector,
    config: &AcquisitionConfig,
    tau: f64,
    seed: u64,
) -> Result<Proposal, CoreError> {
    config.validate()?;
    let center = || Proposal { params: z_to_x(&[0.0; D], tau), z: [0.0; D], acquisition: 0.0 };
    if model.degenerate || model.fit().is_none() || data.is_empty() {
        return Ok(center());
    }
    let incumbent = data.best_for(circuit_id).or_else(|| data.rows.iter().min_by(|a, b| a.y.total_cmp(&b.y)));
    let incumbent = incumbent.expect("data is not empty");
    let y_best = -model.standardize_y(incumbent.y);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut surface = AcquisitionSurface::new(model, xi, config, y_best)?;
    if config.kind == AcquisitionKind::Mes {
        surface.sample_max_values(config.mes_grid, config.mes_num_max_samples, &mut rng);
    }

    let starts = restart_points(config.restarts, &incumbent.x, seed);

    let objective = |z: &[f64], g: &mut [f64]| {
        let u: [f64; D] = std::array::from_fn(|d| sigmoid(z[d]));
        let (v, gu) = surface.value_grad(&u);
        for d in 0..D {
            g[d] = -gu[d] * u[d] * (1.0 - u[d]);
        }
        -v
    };
    let lo = [-Z_BOUND; D];
    let hi = [Z_BOUND; D];
    let opts = LbfgsOptions { max_iter: config.inner_iters, memory: 5, ..Default::default() };
    let mut best: Option<([f64; D], f64)> = None;
    let mut consider = |z: [f64; D], v: f64| {
        if v.is_finite() && best.is_none_or(|(_, b)| v > b) {
            best = Some((z, v));
        }
    };
    for start in &starts {
        let v0 = surface.value(&start.map(sigmoid));
        consider(*start, v0);
        let r = minimize(objective, start, &lo, &hi, &opts);
        let z: [f64; D] = std::array::from_fn(|d| r.x[d]);
        consider(z, -r.f);
    }
    let Some((z, v)) = best else {
        return Ok(center());
    };
    Ok(Proposal { params: z_to_x(&z, tau), z, acquisition: v })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{SurrogateConfig, SurrogateModel};

    #[test]
    fn z_transform() {
        assert!((z_to_raw(0.0) - 1.0).abs() < 1e-15);
        let z = (0.75f64 / 0.25).ln();
        assert!((z_to_raw(z) - 10f64.powf(3.5)).abs() < 1e-9);
        assert!((z_to_raw(50.0) - 1e7).abs() < 1e-3 && z_to_raw(-50.0) < 1.0000001e-7);
        for &z in &[-3.0, -0.4, 0.0, 1.1, 6.0] {
            let h = 1e-6;
            let fd = (z_to_raw(z + h) - z_to_raw(z - h)) / (2.0 * h);
            assert!((fd - z_to_raw_derivative(z)).abs() < 1e-6 * fd.abs());
            assert!((raw_to_z(z_to_raw(z)) - z).abs() < 1e-9);
        }
    }

    #[test]
    fn ei_special_cases() {
        assert!((expected_improvement(0.0, 1.0, 0.0).unwrap() - 0.398_942_280_401_432_7).abs() < 1e-15);
        assert_eq!(expected_improvement(2.0, 0.0, 0.0).unwrap(), 2.0);
        assert_eq!(expected_improvement(-1.0, 0.0, 0.0).unwrap(), 0.0);
        assert!(expected_improvement(0.0, -1.0, 0.0).is_err());
    }

    #[test]
    fn ucb_arithmetic() {
        assert!((ucb_score(1.0, 4.0, 0.1) - (1.0 + 0.1f64.sqrt() * 2.0)).abs() < 1e-15);
        assert_eq!(ucb_score(0.7, 0.0, 3.0), 0.7);
        assert_eq!(ucb_score(0.7, 2.0, 0.0), 0.7);
    }

    #[test]
    fn mes_limits() {
        assert!((mes_score(0.0, 1.0, &[0.0]).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!(mes_score(0.0, 1.0, &[10.0]).unwrap() < 1e-20);
        assert!(mes_score(0.0, 1.0, &[]).is_err());
        assert!(mes_score(0.0, 1.0, &[-40.0]).unwrap().is_finite());
    }

    #[test]
    fn mes_derivative() {
        for &g in &[-35.0, -29.0, -3.0, -0.5, 0.0, 1.2, 5.0] {
            let h = 1e-4;
            let fd = (mes_term(g + h).0 - mes_term(g - h).0) / (2.0 * h);
            assert!((fd - mes_term(g).1).abs() < 1e-6 * fd.abs().max(1.0), "{g}: {fd} vs {}", mes_term(g).1);
        }
    }

    fn trained_1d(train_iters: usize) -> (SurrogateModel, Dataset, FeatureVector) {
        let f = FeatureVector { n_nodes: 3, n_mna_equations: 4, n_resistors: 2, n_vsources: 1, ..Default::default() };
        let mut data = Dataset::new();
        for k in 0..9 {
            let l = -6.0 + 1.5 * k as f64;
            let y = 50.0 + 4.0 * (l - 1.0) * (l - 1.0);
            let x = SolverParams::new(10f64.powf(l), 1.0, 1.0, 1.0, 1.0).unwrap();
            data.push("c", &x, &f, y, false).unwrap();
        }
        let config = SurrogateConfig { train_iters, learn_warp: false, ..Default::default() };
        let mut m = SurrogateModel::new(config);
        m.train(&data).unwrap();
        (m, data, f)
    }

    #[test]
    fn acquisition_gradient_matches_finite_differences() {
        let (m, data, f) = trained_1d(0);
        for kind in [AcquisitionKind::Ei, AcquisitionKind::Ucb, AcquisitionKind::Mes] {
            let config = AcquisitionConfig { kind, ..Default::default() };
            let best = -m.standardize_y(data.best_for("c").unwrap().y);
            let mut s = AcquisitionSurface::new(&m, &f, &config, best).unwrap();
            s.sample_max_values(64, 5, &mut ChaCha8Rng::seed_from_u64(1));
            for u in [[0.3, 0.5, 0.5, 0.5], [0.61, 0.4, 0.55, 0.7], [0.8, 0.2, 0.9, 0.1]] {
                let (_, g) = s.value_grad(&u);
                for d in 0..D {
                    let h = 1e-6;
                    let mut up = u;
                    up[d] += h;
                    let mut um = u;
                    um[d] -= h;
                    let fd = (s.value(&up) - s.value(&um)) / (2.0 * h);
                    assert!((fd - g[d]).abs() < 1e-5 * fd.abs().max(1e-4), "{kind:?} {d}: {} vs {fd}", g[d]);
                }
            }
        }
    }

    #[test]
    fn proposal_tracks_grid_optimum() {
        let (m, data, f) = trained_1d(30);
        let config = AcquisitionConfig { kind: AcquisitionKind::Ucb, ucb_beta: 1e-6, ..Default::default() };
        let p = optimize_acquisition(&m, &data, "c", &f, &config, 1.0, 3).unwrap();
        let best = -m.standardize_y(50.0);
        let s = AcquisitionSurface::new(&m, &f, &config, best).unwrap();
        let grid_best = (0..10_000)
            .map(|i| (i as f64 + 0.5) / 10_000.0)
            .max_by(|a, b| s.value(&[*a, 0.5, 0.5, 0.5]).total_cmp(&s.value(&[*b, 0.5, 0.5, 0.5])))
            .unwrap();
        let got = unit_from_raw(p.params.c_pseudo);
        assert!((got - grid_best).abs() < 0.05, "{got} vs {grid_best}");
        let again = optimize_acquisition(&m, &data, "c", &f, &config, 1.0, 3).unwrap();
        assert_eq!(p, again);
    }

    #[test]
    fn degenerate_model_returns_center() {
        let f = FeatureVector::default();
        let mut data = Dataset::new();
        for c in [1e-3, 1.0] {
            data.push("c", &SolverParams::new(c, 1.0, 1.0, 1.0, 1.0).unwrap(), &f, 7.0, false).unwrap();
        }
        let mut m = SurrogateModel::new(SurrogateConfig::default());
        m.train(&data).unwrap();
        let config = AcquisitionConfig { kind: AcquisitionKind::Ei, ..Default::default() };
        let p = optimize_acquisition(&m, &data, "c", &f, &config, 1.0, 0).unwrap();
        assert_eq!(p.z, [0.0; D]);
        assert_eq!(p.params.vector(), [1.0; 4]);
    }
}
