//! Quadrature and enumeration oracles for the size and count distributions.

mod common;

use std::f64::consts::{FRAC_PI_2, PI};

use collective_risk::model::{log_pdf_gamma, log_pdf_half_cauchy, log_pdf_log_t, log_pdf_lognormal, log_pmf_negbinomial};
use common::integrate_positive_line;
use quadrature::double_exponential::integrate;
use statrs::function::gamma::ln_gamma;

#[test]
fn lognormal_and_gamma_densities_integrate_to_one() {
    for (mu, s2) in [(0.0, 1.0_f64), (2.0, 0.05), (-1.0, 3.0)] {
        let total = integrate_positive_line(|x| log_pdf_lognormal(x, mu, s2).map_or(0.0, f64::exp), mu, s2.sqrt());
        assert!((total - 1.0).abs() < 1e-8, "lognormal {mu} {s2}: {total}");
    }
    for (shape, rate) in [(1.0_f64, 2.0_f64), (3.5, 0.4), (120.0, 11.0)] {
        let m = (shape / rate).ln();
        let total = integrate_positive_line(|x| log_pdf_gamma(x, shape, rate).map_or(0.0, f64::exp), m, 1.0);
        assert!((total - 1.0).abs() < 1e-8, "gamma {shape} {rate}: {total}");
    }
}

#[test]
fn half_cauchy_integrates_to_one() {
    let total = integrate(|u: f64| log_pdf_half_cauchy(u.tan()).map_or(0.0, f64::exp) / u.cos().powi(2), 0.0, FRAC_PI_2, 1e-12)
        .integral;
    assert!((total - 1.0).abs() < 1e-8, "{total}");
}

#[test]
fn log_t_density_matches_printed_form() {
    // Γ((ν+1)/2) / (Γ(ν/2) sqrt(π ν σ² x²)) · [1 + (ln x − μ)²/(ν σ²)]^(−(ν+1)/2),
    // the Student-t density of ln x divided by x
    let (x, mu, s2, nu) = (3.7_f64, 1.1, 0.4, 4.2);
    let core = ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu) - 0.5 * (PI * nu * s2).ln();
    let tail = -0.5 * (nu + 1.0) * (1.0 + (x.ln() - mu).powi(2) / (nu * s2)).ln();
    let expected = core + tail - x.ln();
    assert!((log_pdf_log_t(x, mu, s2, nu).unwrap() - expected).abs() < 1e-12);
}

#[test]
fn log_t_density_integrates_to_one() {
    let err = common::log_t_normalization_error();
    assert!(err < 1e-8, "{err}");
}

#[test]
fn negative_binomial_is_poisson_gamma_mixture() {
    let err = common::nb_mixture_error();
    assert!(err < 1e-8, "{err}");
}

#[test]
fn negative_binomial_moments_by_enumeration() {
    for (mu, delta) in [(3.0, 2.0), (25.0, 7.5)] {
        let mut total = 0.0;
        let mut mean = 0.0;
        let mut second = 0.0;
        for n in 0..5000u64 {
            let p = log_pmf_negbinomial(n, mu, delta).unwrap().exp();
            total += p;
            mean += n as f64 * p;
            second += (n * n) as f64 * p;
        }
        let var = second - mean * mean;
        assert!((total - 1.0).abs() < 1e-10);
        assert!((mean - mu).abs() < 1e-8);
        assert!((var - mu * (1.0 + mu / delta)).abs() < 1e-6);
    }
}

#[test]
fn moment_match_reproduces_gamma_moments() {
    assert!(common::moment_match_error() < 1e-12);
    assert!(collective_risk::model::moment_match(0, 1.0).is_err());
}
