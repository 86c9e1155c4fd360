//! Log-likelihood, log-prior and unnormalized log-posterior of the six
//! collective risk models, evaluated in the natural parameter scale.

use crate::error::{domain, Result};
use crate::model::data::PortfolioData;
use crate::model::density::{
    log_pdf_gamma, log_pdf_half_cauchy, log_pdf_log_t, log_pdf_lognormal, log_pmf_negbinomial, log_pmf_poisson,
    moment_match,
};
use crate::model::spec::{Block, CountFamily, GammaHyper, HyperPrior, ModelSpec, ParameterState, PriorConfig, SizeFamily};

/// Log mass of the count model for one cell.
pub fn log_count_term(spec: &ModelSpec, n: u64, mean: f64, delta: Option<f64>) -> Result<f64> {
    match spec.count {
        CountFamily::Poisson => log_pmf_poisson(n, mean),
        CountFamily::NegBinomial => match delta {
            Some(d) => log_pmf_negbinomial(n, mean, d),
            None => domain("negative binomial counts need a dispersion"),
        },
    }
}

/// Log density of the claim total `x` given `n >= 1` claims.
pub fn log_size_term(spec: &ModelSpec, n: u64, x: f64, theta: f64, nu: Option<f64>) -> Result<f64> {
    match spec.size {
        SizeFamily::Gamma => log_pdf_gamma(x, n as f64, theta),
        SizeFamily::LogNormal => {
            let (mu, s2) = moment_match(n, theta)?;
            log_pdf_lognormal(x, mu, s2)
        }
        SizeFamily::LogT => {
            let (mu, s2) = moment_match(n, theta)?;
            match nu {
                Some(nu) => log_pdf_log_t(x, mu, s2, nu),
                None => domain("log-t sizes need degrees of freedom"),
            }
        }
    }
}

/// Sum over every cell of the count log mass plus, for cells with at least
/// one claim, the claim-total log density. Zero-claim cells contribute only
/// the count term.
pub fn log_likelihood(data: &PortfolioData, params: &ParameterState, spec: &ModelSpec) -> Result<f64> {
    params.validate(spec)?;
    if data.n_age_classes() > params.n_age_classes() {
        return domain(format!(
            "data has {} age classes but parameters cover {}",
            data.n_age_classes(),
            params.n_age_classes()
        ));
    }
    let mut total = 0.0;
    for r in data.records() {
        let a = r.age_class - 1;
        let mean = params.lambda.values[a] * r.population as f64;
        let delta = params.delta.as_ref().map(|d| d.values[a]);
        total += log_count_term(spec, r.n_claims, mean, delta)?;
        if r.n_claims > 0 {
            let nu = params.nu.as_ref().map(|v| v.values[a]);
            total += log_size_term(spec, r.n_claims, r.claim_total, params.theta.values[a], nu)?;
        }
    }
    Ok(total)
}

/// Log density of one hyperparameter under its third-level prior.
pub fn log_hyperprior(family: HyperPrior, h: f64) -> Result<f64> {
    match family {
        HyperPrior::Gamma => log_pdf_gamma(h, HyperPrior::GAMMA_SHAPE, HyperPrior::GAMMA_RATE),
        HyperPrior::HalfCauchy => log_pdf_half_cauchy(h),
        HyperPrior::Pinned { .. } => Ok(0.0),
    }
}

/// Gamma prior log densities of every per-class parameter plus the
/// hyperprior log densities of every sampled hyperparameter.
pub fn log_prior(params: &ParameterState, prior: &PriorConfig) -> Result<f64> {
    let mut total = 0.0;
    let blocks = [
        (Block::Lambda, Some(&params.lambda)),
        (Block::Theta, Some(&params.theta)),
        (Block::Nu, params.nu.as_ref()),
        (Block::Delta, params.delta.as_ref()),
    ];
    for (b, state) in blocks {
        let Some(bs) = state else { continue };
        let family = prior.block(b);
        let hyper = match family {
            HyperPrior::Pinned { shape, rate } => GammaHyper::new(shape, rate),
            _ => bs.hyper,
        };
        for &v in &bs.values {
            total += log_pdf_gamma(v, hyper.shape, hyper.rate)?;
        }
        total += log_hyperprior(family, hyper.shape)? + log_hyperprior(family, hyper.rate)?;
    }
    Ok(total)
}

/// Unnormalized log posterior: log-likelihood plus log-prior.
pub fn log_posterior(data: &PortfolioData, params: &ParameterState, spec: &ModelSpec, prior: &PriorConfig) -> Result<f64> {
    Ok(log_likelihood(data, params, spec)? + log_prior(params, prior)?)
}
