//! Hierarchical Bayesian collective risk models for insurance portfolios.
//!
//! Claim totals follow a Gamma, lognormal or log Student-t law whose
//! location and scale are moment-matched to a Gamma(n, θ) sum; claim counts
//! are Poisson or negative binomial. Posterior draws come from an adaptive
//! no-U-turn sampler and feed predictive premiums, VaR/TVaR, DIC/CRPS model
//! comparison and a simulation-recovery study.

pub mod cli;
pub mod error;
pub mod inference;
pub mod io;
pub mod model;
pub mod risk;
pub mod selection;
pub mod simulation;

pub use error::{Error, Result};
