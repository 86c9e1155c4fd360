//! Random generation of claim counts and claim totals from a fitted model.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal, StudentT};

use crate::error::{domain, Result};
use crate::model::density::moment_match;
use crate::model::spec::{CountFamily, ModelSpec, ParameterState, SizeFamily};

const MAX_LOG_TOTAL: f64 = 700.0;

/// Parameters of one age class needed for simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassParams {
    pub lambda: f64,
    pub theta: f64,
    pub nu: Option<f64>,
    pub delta: Option<f64>,
}

impl ParameterState {
    /// Parameters of age class `a` (0-based).
    pub fn class(&self, a: usize) -> ClassParams {
        ClassParams {
            lambda: self.lambda.values[a],
            theta: self.theta.values[a],
            nu: self.nu.as_ref().map(|b| b.values[a]),
            delta: self.delta.as_ref().map(|b| b.values[a]),
        }
    }
}

fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> Result<u64> {
    if mean <= 0.0 || !mean.is_finite() {
        return domain(format!("Poisson mean must be positive, got {mean}"));
    }
    let d = Poisson::new(mean).map_err(|e| crate::Error::Domain(e.to_string()))?;
    let v: f64 = d.sample(rng);
    Ok(v as u64)
}

/// Draws a claim count with mean `lambda * population`. Negative binomial
/// counts go through the Poisson-Gamma(delta, delta) mixture.
pub fn sample_count<R: Rng + ?Sized>(spec: &ModelSpec, p: &ClassParams, population: f64, rng: &mut R) -> Result<u64> {
    let mean = p.lambda * population;
    match spec.count {
        CountFamily::Poisson => poisson(mean, rng),
        CountFamily::NegBinomial => {
            let Some(delta) = p.delta else {
                return domain("negative binomial counts need a dispersion");
            };
            let g = Gamma::new(delta, 1.0 / delta).map_err(|e| crate::Error::Domain(e.to_string()))?;
            let mix: f64 = g.sample(rng);
            if mix <= 0.0 {
                return Ok(0);
            }
            poisson(mean * mix, rng)
        }
    }
}

/// Draws the total of `n` claims; zero when `n` is zero.
pub fn sample_total<R: Rng + ?Sized>(spec: &ModelSpec, p: &ClassParams, n: u64, rng: &mut R) -> Result<f64> {
    if n == 0 {
        return Ok(0.0);
    }
    match spec.size {
        SizeFamily::Gamma => {
            let g = Gamma::new(n as f64, 1.0 / p.theta).map_err(|e| crate::Error::Domain(e.to_string()))?;
            Ok(g.sample(rng))
        }
        SizeFamily::LogNormal => {
            let (mu, s2) = moment_match(n, p.theta)?;
            let z: f64 = rng.sample(StandardNormal);
            Ok((mu + s2.sqrt() * z).clamp(-MAX_LOG_TOTAL, MAX_LOG_TOTAL).exp())
        }
        SizeFamily::LogT => {
            let (mu, s2) = moment_match(n, p.theta)?;
            let Some(nu) = p.nu else {
                return domain("log-t sizes need degrees of freedom");
            };
            let t = StudentT::new(nu).map_err(|e| crate::Error::Domain(e.to_string()))?;
            // exponent capped so extreme draws stay finite and positive
            Ok((mu + s2.sqrt() * t.sample(rng)).clamp(-MAX_LOG_TOTAL, MAX_LOG_TOTAL).exp())
        }
    }
}
