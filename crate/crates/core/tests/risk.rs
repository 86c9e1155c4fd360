//! Monte Carlo and closed-form oracles for predictive risk measures.

mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Exp};

use collective_risk::inference::ChainDraws;
use collective_risk::model::{
    BlockState, CountFamily, GammaHyper, ModelSpec, ParameterLayout, ParameterState, PriorConfig, SizeFamily,
};
use collective_risk::risk::{
    coefficient_of_variation, draw_predictive, expected_shortfall, premium, simulate_class_totals,
    tail_value_at_risk, value_at_risk, PredictiveConfig,
};

const M1: ModelSpec = ModelSpec::new(SizeFamily::Gamma, CountFamily::Poisson);

fn state(lambda: f64, theta: f64) -> ParameterState {
    let b = |v| BlockState { values: vec![v], hyper: GammaHyper::new(1.0, 1.0) };
    ParameterState { lambda: b(lambda), theta: b(theta), nu: None, delta: None }
}

/// A degenerate posterior: `n` identical draws of one state, in two chains.
fn point_mass(s: &ParameterState, n: usize) -> ChainDraws {
    let layout = ParameterLayout::new(M1, PriorConfig::gamma(), 1);
    let flat = layout.flatten(s).unwrap();
    ChainDraws {
        spec: M1,
        prior: PriorConfig::gamma(),
        n_age_classes: 1,
        names: layout.names(),
        draws: vec![vec![flat; n]; 2],
        log_post: vec![vec![0.0; n]; 2],
        stats: Vec::new(),
        warnings: Vec::new(),
    }
}

#[test]
fn compound_poisson_mean_follows_wald() {
    // E[X] = H λ Π / θ for Poisson counts with exponential-mean claims
    let (lambda, theta, pop, h) = (0.02, 0.5, 300.0, 12);
    let s = state(lambda, theta);
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let n = 40_000;
    let xs: Vec<f64> = (0..n).map(|_| simulate_class_totals(&M1, &s, 0, pop, h, &mut rng).unwrap()).collect();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt();
    let expected = h as f64 * lambda * pop / theta;
    assert!((mean - expected).abs() < 4.0 * sd / (n as f64).sqrt(), "{mean} vs {expected}");
}

#[test]
fn horizon_totals_add_over_months() {
    // two one-month draws have the law of one two-month draw: compare means and variances
    let s = state(0.05, 1.0);
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let n = 40_000;
    let one: Vec<f64> = (0..n)
        .map(|_| {
            simulate_class_totals(&M1, &s, 0, 100.0, 1, &mut rng).unwrap()
                + simulate_class_totals(&M1, &s, 0, 100.0, 1, &mut rng).unwrap()
        })
        .collect();
    let two: Vec<f64> = (0..n).map(|_| simulate_class_totals(&M1, &s, 0, 100.0, 2, &mut rng).unwrap()).collect();
    let mv = |x: &[f64]| {
        let m = x.iter().sum::<f64>() / x.len() as f64;
        (m, x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0))
    };
    let ((m1, v1), (m2, v2)) = (mv(&one), mv(&two));
    let se = ((v1 + v2) / n as f64).sqrt();
    assert!((m1 - m2).abs() < 4.0 * se, "{m1} vs {m2}");
    assert!((v1 / v2 - 1.0).abs() < 0.05, "{v1} vs {v2}");
}

#[test]
fn predictive_is_per_insured_and_seeded() {
    let draws = point_mass(&state(0.05, 1.0), 500);
    let mut cfg = PredictiveConfig::new(3, vec![200]);
    cfg.replicates_per_draw = 4;
    let a = draw_predictive(&draws, &cfg).unwrap();
    assert_eq!(a.n_samples(), 4000);
    let mean = a.r_samples[0].iter().sum::<f64>() / 4000.0;
    // E[R] = H λ / θ
    assert!((mean - 0.15).abs() < 0.01, "{mean}");
    assert_eq!(a, draw_predictive(&draws, &cfg).unwrap());
    let p = premium(&a, 0.95).unwrap();
    assert_eq!(p[0], value_at_risk(&a.r_samples[0], 0.95).unwrap());
}

#[test]
fn uniform_median() {
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let xs: Vec<f64> = (0..1_000_000).map(|_| rng.gen::<f64>()).collect();
    let v = value_at_risk(&xs, 0.5).unwrap();
    assert!((0.498..=0.502).contains(&v), "{v}");
}

#[test]
fn exponential_cv_is_one() {
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    let d = Exp::new(2.0).unwrap();
    let xs: Vec<f64> = (0..1_000_000).map(|_| d.sample(&mut rng)).collect();
    let cv = coefficient_of_variation(&xs).unwrap();
    assert!((0.99..=1.01).contains(&cv), "{cv}");
}

#[test]
fn integer_grid_values() {
    let xs: Vec<f64> = (1..=100).map(f64::from).collect();
    assert_eq!(value_at_risk(&xs, 0.95).unwrap(), 95.0);
    assert!((tail_value_at_risk(&xs, 0.95).unwrap() - 98.0).abs() < 1e-12);
    assert_eq!(expected_shortfall(&[0.0, 10.0], 0.25).unwrap(), 5.0);
}

#[test]
fn tvar_equals_var_plus_scaled_shortfall() {
    let (worst, monotone) = common::tvar_decomposition(1000, 5);
    assert!(worst < 1e-10, "{worst}");
    assert!(monotone);
}
