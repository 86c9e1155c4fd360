//! Densities, parameter containers and likelihood evaluation.

pub mod data;
pub mod density;
pub mod likelihood;
pub mod random;
pub mod spec;

pub use data::{PortfolioData, Record};
pub use density::{
    log_pdf_gamma, log_pdf_half_cauchy, log_pdf_log_t, log_pdf_lognormal, log_pmf_negbinomial, log_pmf_poisson,
    moment_match, overdispersion_factor,
};
pub use likelihood::{log_likelihood, log_posterior, log_prior};
pub use spec::{
    Block, BlockState, CountFamily, GammaHyper, HyperPrior, ModelSpec, ParameterLayout, ParameterState, PriorConfig,
    SizeFamily,
};
