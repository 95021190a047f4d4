use boapta_circuit::{FeatureVector, SolverParams};
use boapta_core::acquisition::{
    optimize_acquisition, restart_points, sigmoid, z_to_raw, z_to_raw_derivative, z_to_x, AcquisitionConfig,
    AcquisitionKind, AcquisitionSurface,
};
use boapta_core::special::{norm_cdf, norm_pdf};
use boapta_core::{expected_improvement, mes_score, Dataset, SurrogateConfig, SurrogateModel};
use proptest::prelude::*;
use quadrature::double_exponential;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// `H[N(mu, s^2)] - H[N(mu, s^2) truncated to (-inf, y*]]` by quadrature.
fn truncated_entropy_gap(mu: f64, var: f64, y_star: f64) -> f64 {
    let s = var.sqrt();
    let gamma = (y_star - mu) / s;
    let z = norm_cdf(gamma);
    let h_trunc = double_exponential::integrate(
        |u: f64| {
            let p = norm_pdf(u) / z;
            if p > 0.0 {
                -p * p.ln()
            } else {
                0.0
            }
        },
        gamma.min(0.0) - 40.0,
        gamma,
        1e-14,
    )
    .integral
        + s.ln();
    let h_full = 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E * var).ln();
    h_full - h_trunc
}

#[test]
fn mes_matches_truncated_entropy() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..50 {
        let mu: f64 = rng.random_range(-2.0..2.0);
        let var: f64 = rng.random_range(0.1..4.0);
        let y = mu + var.sqrt() * rng.random_range(-2.5..3.0);
        let got = mes_score(mu, var, &[y]).unwrap();
        let want = truncated_entropy_gap(mu, var, y);
        assert!((got - want).abs() <= 1e-6, "({mu}, {var}, {y}): {got} vs {want}");
    }
}

#[test]
fn ei_matches_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 1_000_000;
    let (delta, s) = (0.5, 2.0);
    let normal = Normal::new(delta, s).unwrap();
    let draws: Vec<f64> = (0..n).map(|_| { let v: f64 = normal.sample(&mut rng); v.max(0.0) }).collect();
    let mean = draws.iter().sum::<f64>() / n as f64;
    let sd = (draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    let ei = expected_improvement(delta, s * s, 0.0).unwrap();
    assert!((ei - mean).abs() <= 3.0 * sd / (n as f64).sqrt(), "{ei} vs {mean}");
}

proptest! {
    #[test]
    fn z_map_is_monotone_with_exact_jacobian(z in -10.0f64..10.0, dz in 1e-3f64..3.0) {
        prop_assert!(z_to_raw(z + dz) > z_to_raw(z));
        // relative derivative, since x spans 14 decades
        let h = 1e-5;
        let fd = (z_to_raw(z + h).ln() - z_to_raw(z - h).ln()) / (2.0 * h);
        let an = z_to_raw_derivative(z) / z_to_raw(z);
        prop_assert!((fd - an).abs() <= 1e-6 * an.abs().max(1e-3), "{fd} vs {an}");
        let x = z_to_x(&[z, -z, z / 2.0, 0.0], 1.0);
        prop_assert!(x.validate().is_ok());
    }

    #[test]
    fn ei_non_negative_and_increasing_in_variance(delta in -5.0f64..0.0, v in 0.0f64..9.0, dv in 1e-3f64..4.0) {
        let a = expected_improvement(delta, v, 0.0).unwrap();
        let b = expected_improvement(delta, v + dv, 0.0).unwrap();
        prop_assert!(a >= 0.0 && b >= a);
    }
}

fn synthetic_model() -> (SurrogateModel, Dataset, FeatureVector) {
    let f = FeatureVector { n_nodes: 5, n_mna_equations: 6, n_resistors: 4, n_vsources: 1, n_bjt: 1, ..Default::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut data = Dataset::new();
    for _ in 0..15 {
        let x: [f64; 4] = std::array::from_fn(|_| 10f64.powf(rng.random_range(-7.0..7.0)));
        let y = 60.0 + 5.0 * (x[0].log10() - 1.0).powi(2) + 2.0 * (x[2].log10() + 2.0).powi(2);
        data.push("c", &SolverParams::from_vector(x, 1.0).unwrap(), &f, y, false).unwrap();
    }
    let mut m = SurrogateModel::new(SurrogateConfig::default());
    m.train(&data).unwrap();
    (m, data, f)
}

#[test]
fn returned_point_dominates_every_restart() {
    let (m, data, f) = synthetic_model();
    let best = data.best_for("c").unwrap();
    for kind in [AcquisitionKind::Ei, AcquisitionKind::Ucb] {
        let config = AcquisitionConfig { kind, ..Default::default() };
        let p = optimize_acquisition(&m, &data, "c", &f, &config, 1.0, 11).unwrap();
        let surface = AcquisitionSurface::new(&m, &f, &config, -m.standardize_y(best.y)).unwrap();
        assert!((surface.value(&p.z.map(sigmoid)) - p.acquisition).abs() < 1e-12);
        for z in restart_points(config.restarts, &best.x, 11) {
            assert!(p.acquisition >= surface.value(&z.map(sigmoid)), "{kind:?}");
        }
        assert!(p.z.iter().all(|z| z.abs() <= 10.0));
    }
}

#[test]
fn proposals_are_reproducible() {
    let (m, data, f) = synthetic_model();
    let config = AcquisitionConfig::default();
    let a = optimize_acquisition(&m, &data, "c", &f, &config, 1.0, 5).unwrap();
    let b = optimize_acquisition(&m, &data, "c", &f, &config, 1.0, 5).unwrap();
    assert_eq!(a, b);
}

#[test]
fn flat_posterior_still_proposes() {
    let f = FeatureVector::default();
    let mut data = Dataset::new();
    for c in [1e-4, 1e-1, 1e2] {
        data.push("c", &SolverParams::new(c, 1.0, 1.0, 1.0, 1.0).unwrap(), &f, 77.0, false).unwrap();
    }
    let mut m = SurrogateModel::new(SurrogateConfig::default());
    m.train(&data).unwrap();
    let config = AcquisitionConfig { kind: AcquisitionKind::Ei, ..Default::default() };
    let p = optimize_acquisition(&m, &data, "c", &f, &config, 1.0, 0).unwrap();
    assert!(p.params.validate().is_ok());
    assert_eq!(expected_improvement(0.0, 0.0, 0.0).unwrap(), 0.0);
}
