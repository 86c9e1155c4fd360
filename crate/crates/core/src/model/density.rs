//! Log densities and mass functions for claim sizes and claim counts.
//!
//! Everything here works in log space and uses `ln_gamma` for every Gamma
//! function evaluation, so counts in the thousands never overflow.

use std::f64::consts::PI;

use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{domain, Result};

/// Above this many degrees of freedom the log-t normalizer switches to its
/// asymptotic series; the direct lnΓ difference cancels catastrophically.
const NU_SERIES: f64 = 100.0;
/// Above this dispersion the Gamma-function ratios of the negative binomial
/// use Stirling series.
const DELTA_SERIES: f64 = 1000.0;

/// `lnΓ((ν+1)/2) - lnΓ(ν/2) - ½ ln(πν)`, the log normalizer of a unit-scale
/// Student-t density.
pub fn log_t_normalizer(nu: f64) -> f64 {
    if nu < NU_SERIES {
        ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu) - 0.5 * (PI * nu).ln()
    } else {
        let inv = 1.0 / nu;
        let inv2 = inv * inv;
        let inv3 = inv * inv2;
        -0.5 * (2.0 * PI).ln() - 0.25 * inv + inv3 / 24.0 - inv3 * inv2 / 20.0 + 17.0 * inv3 * inv2 * inv2 / 112.0
    }
}

/// Derivative of [`log_t_normalizer`] with respect to `nu`.
pub fn log_t_normalizer_deriv(nu: f64) -> f64 {
    if nu < NU_SERIES {
        0.5 * (digamma(0.5 * (nu + 1.0)) - digamma(0.5 * nu)) - 0.5 / nu
    } else {
        let inv2 = 1.0 / (nu * nu);
        let inv4 = inv2 * inv2;
        0.25 * inv2 - 0.125 * inv4 + 0.25 * inv4 * inv2 - 17.0 * inv4 * inv4 / 16.0
    }
}

/// `lnΓ(n + δ) - lnΓ(δ)`.
pub fn ln_gamma_ratio(n: f64, delta: f64) -> f64 {
    if delta < DELTA_SERIES {
        return ln_gamma(n + delta) - ln_gamma(delta);
    }
    let (z0, z1) = (delta, delta + n);
    (delta - 0.5) * (n / delta).ln_1p() + n * z1.ln() - n - n / (12.0 * z0 * z1)
        - (1.0 / z1.powi(3) - 1.0 / z0.powi(3)) / 360.0
}

/// `ψ(n + δ) - ψ(δ)`.
pub fn digamma_diff(n: f64, delta: f64) -> f64 {
    if delta < DELTA_SERIES {
        return digamma(n + delta) - digamma(delta);
    }
    let (z0, z1) = (delta, delta + n);
    (n / delta).ln_1p() + 0.5 * n / (z0 * z1) + n * (z0 + z1) / (12.0 * z0 * z0 * z1 * z1)
        + (1.0 / z1.powi(4) - 1.0 / z0.powi(4)) / 120.0
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        domain(format!("{name} must be positive and finite, got {v}"))
    }
}

/// Log density of the log Student-t distribution: the Student-t density of
/// `ln x` (location `mu`, scale `sqrt(sigma2)`, `nu` degrees of freedom)
/// divided by `x`.
pub fn log_pdf_log_t(x: f64, mu: f64, sigma2: f64, nu: f64) -> Result<f64> {
    check_positive("x", x)?;
    check_positive("sigma2", sigma2)?;
    check_positive("nu", nu)?;
    if !mu.is_finite() {
        return domain(format!("mu must be finite, got {mu}"));
    }
    let lx = x.ln();
    let z2 = (lx - mu).powi(2) / sigma2;
    Ok(log_t_normalizer(nu) - 0.5 * sigma2.ln() - 0.5 * (nu + 1.0) * (z2 / nu).ln_1p() - lx)
}

/// Log density of the lognormal with log-scale mean `mu` and log-scale
/// variance `sigma2`.
pub fn log_pdf_lognormal(x: f64, mu: f64, sigma2: f64) -> Result<f64> {
    check_positive("x", x)?;
    check_positive("sigma2", sigma2)?;
    if !mu.is_finite() {
        return domain(format!("mu must be finite, got {mu}"));
    }
    let lx = x.ln();
    Ok(-0.5 * (2.0 * PI * sigma2).ln() - (lx - mu).powi(2) / (2.0 * sigma2) - lx)
}

/// Log density of Gamma(shape, rate).
pub fn log_pdf_gamma(x: f64, shape: f64, rate: f64) -> Result<f64> {
    check_positive("x", x)?;
    check_positive("shape", shape)?;
    check_positive("rate", rate)?;
    Ok(shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x)
}

/// Log-scale location and variance that give a lognormal (or log-t) claim
/// total the same mean `n/theta` and variance `n/theta^2` as a
/// Gamma(n, theta) sum of `n` exponential claims.
///
/// Undefined for `n = 0`; zero-claim cells carry no size term.
pub fn moment_match(n: u64, theta: f64) -> Result<(f64, f64)> {
    if n == 0 {
        return domain("moment matching is undefined for zero claims");
    }
    check_positive("theta", theta)?;
    let n = n as f64;
    let sigma2 = (1.0 / n).ln_1p();
    let mu = (n / theta).ln() - 0.5 * sigma2;
    Ok((mu, sigma2))
}

/// Log Poisson mass at `n` with the given mean.
pub fn log_pmf_poisson(n: u64, mean: f64) -> Result<f64> {
    check_positive("mean", mean)?;
    let n = n as f64;
    Ok(n * mean.ln() - mean - ln_gamma(n + 1.0))
}

/// Log negative binomial mass with mean `mu` and dispersion `delta`
/// (variance `mu (1 + mu/delta)`), the Poisson-Gamma(delta, delta) mixture.
pub fn log_pmf_negbinomial(n: u64, mu: f64, delta: f64) -> Result<f64> {
    check_positive("mu", mu)?;
    check_positive("delta", delta)?;
    let n = n as f64;
    let ratio = mu / delta;
    Ok(ln_gamma_ratio(n, delta) - ln_gamma(n + 1.0) + n * ratio.ln() - (delta + n) * ratio.ln_1p())
}

/// Variance-to-mean ratio of the negative binomial count, `1 + mu/delta`.
pub fn overdispersion_factor(mu: f64, delta: f64) -> Result<f64> {
    check_positive("mu", mu)?;
    check_positive("delta", delta)?;
    Ok(1.0 + mu / delta)
}

/// Log density of the Half-Cauchy(0, 1) distribution.
pub fn log_pdf_half_cauchy(h: f64) -> Result<f64> {
    check_positive("h", h)?;
    Ok((2.0 / PI).ln() - (h * h).ln_1p())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_t_at_one_is_normalizer() {
        for nu in [0.5, 1.0, 4.0, 30.0] {
            let expected = ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu) - 0.5 * (PI * nu).ln();
            let got = log_pdf_log_t(1.0, 0.0, 1.0, nu).unwrap();
            assert!((got - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn series_branches_agree_with_direct_forms() {
        // (ν, normalizer, derivative) computed at 40 digits
        let reference = [
            (100.0, -0.921_438_491_543_004_6, 2.499_875_024_989_382_7e-5),
            (150.0, -0.920_605_187_526_318_7, 1.111_086_421_947_459_4e-5),
            (400.0, -0.919_563_532_553_636, 1.562_495_117_248_533_5e-6),
            (1000.0, -0.919_188_533_163_006_1, 2.499_998_750_002_5e-7),
        ];
        for (nu, value, deriv) in reference {
            assert!((log_t_normalizer(nu) - value).abs() < 1e-15, "nu={nu}");
            assert!((log_t_normalizer_deriv(nu) / deriv - 1.0).abs() < 1e-13, "nu={nu}");
        }
        for delta in [1000.0, 2500.0, 1e4] {
            for n in [0.0, 1.0, 7.0, 350.0] {
                let direct = ln_gamma(n + delta) - ln_gamma(delta);
                assert!((ln_gamma_ratio(n, delta) - direct).abs() < 1e-9, "delta={delta} n={n}");
                let exact: f64 = (0..n as usize).map(|k| 1.0 / (delta + k as f64)).sum();
                assert!((digamma_diff(n, delta) - exact).abs() < 1e-13, "delta={delta} n={n}");
            }
        }
        // large arguments stay smooth where the direct forms would cancel
        assert!((log_t_normalizer(1e16) + 0.5 * (2.0 * PI).ln()).abs() < 1e-15);
        assert!((digamma_diff(3.0, 1e15) - 3e-15).abs() < 1e-25);
    }

    #[test]
    fn log_t_degrades_to_lognormal() {
        for x in [0.5, 1.0, 2.0] {
            let t = log_pdf_log_t(x, 0.2, 0.7, 1e6).unwrap();
            let ln = log_pdf_lognormal(x, 0.2, 0.7).unwrap();
            assert!((t - ln).abs() < 1e-3, "x={x}: {t} vs {ln}");
        }
    }

    #[test]
    fn lognormal_standard_point() {
        let got = log_pdf_lognormal(1.0, 0.0, 1.0).unwrap();
        assert!((got + 0.5 * (2.0 * PI).ln()).abs() < 1e-15);
    }

    #[test]
    fn gamma_exponential_case() {
        let got = log_pdf_gamma(0.5, 1.0, 2.0).unwrap();
        assert!((got - (2f64.ln() - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn domain_errors() {
        assert!(log_pdf_log_t(0.0, 0.0, 1.0, 1.0).is_err());
        assert!(log_pdf_log_t(1.0, 0.0, -1.0, 1.0).is_err());
        assert!(log_pdf_log_t(1.0, 0.0, 1.0, 0.0).is_err());
        assert!(log_pdf_lognormal(-1.0, 0.0, 1.0).is_err());
        assert!(log_pdf_gamma(1.0, 0.0, 1.0).is_err());
        assert!(log_pmf_poisson(1, 0.0).is_err());
        assert!(log_pmf_negbinomial(1, 1.0, 0.0).is_err());
        assert!(overdispersion_factor(-1.0, 1.0).is_err());
        assert!(moment_match(0, 1.0).is_err());
    }

    #[test]
    fn moment_match_unit_case() {
        let (mu, s2) = moment_match(1, 1.0).unwrap();
        assert!((s2 - 2f64.ln()).abs() < 1e-15);
        assert!((mu + 0.5 * 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn moment_match_reproduces_gamma_moments() {
        let (mu, s2) = moment_match(4, 2.0).unwrap();
        let mean = (mu + 0.5 * s2).exp();
        let var = (s2.exp() - 1.0) * (2.0 * mu + s2).exp();
        assert!((mean - 2.0).abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-12);
    }

    #[test]
    fn moment_match_variance_decreasing() {
        let s = |n| moment_match(n, 1.0).unwrap().1;
        assert!(s(1) > s(10) && s(10) > s(100));
    }

    #[test]
    fn poisson_zero_and_mode() {
        assert!((log_pmf_poisson(0, 3.5).unwrap() + 3.5).abs() < 1e-15);
        let mode = (0..=100u64)
            .max_by(|a, b| {
                log_pmf_poisson(*a, 7.3)
                    .unwrap()
                    .partial_cmp(&log_pmf_poisson(*b, 7.3).unwrap())
                    .unwrap()
            })
            .unwrap();
        assert_eq!(mode, 7);
    }

    #[test]
    fn negbinomial_poisson_limit() {
        for n in [0, 2, 8] {
            let nb = log_pmf_negbinomial(n, 3.0, 1e7).unwrap();
            let p = log_pmf_poisson(n, 3.0).unwrap();
            assert!((nb - p).abs() < 1e-4);
        }
    }

    #[test]
    fn overdispersion_values() {
        assert_eq!(overdispersion_factor(3.0, 3.0).unwrap(), 2.0);
        let f = overdispersion_factor(3.0, 1e9).unwrap();
        assert!((f - (1.0 + 3e-9)).abs() < 1e-15);
    }

    #[test]
    fn half_cauchy_at_one() {
        let v = log_pdf_half_cauchy(1.0).unwrap();
        assert!((v - (1.0 / PI).ln()).abs() < 1e-15);
    }
}
