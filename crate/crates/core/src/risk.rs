//! Posterior predictive premiums and risk measures.
//!
//! All measures are empirical: `VaR(τ) = inf{r : F̂(r) ≥ τ}` on the sorted
//! sample, with TVaR averaging exactly `(1 - τ)` of the sample mass (ties at
//! the VaR atom are included fractionally).

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::ChainDraws;
use crate::model::random::{sample_count, sample_total};
use crate::model::{overdispersion_factor, ModelSpec, ParameterState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveConfig {
    /// Planning horizon in months.
    pub horizon: usize,
    /// Insured population per age class during the horizon.
    pub future_population: Vec<u64>,
    pub replicates_per_draw: usize,
    pub quantile_level: f64,
    pub seed: u64,
}

impl PredictiveConfig {
    pub fn new(horizon: usize, future_population: Vec<u64>) -> Self {
        Self { horizon, future_population, replicates_per_draw: 1, quantile_level: 0.95, seed: 7 }
    }

    pub fn validate(&self, n_age_classes: usize) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least one month".into()));
        }
        if self.replicates_per_draw == 0 {
            return Err(Error::Config("need at least one replicate per posterior draw".into()));
        }
        if !(self.quantile_level > 0.0 && self.quantile_level < 1.0) {
            return Err(Error::Config("quantile level must lie in (0, 1)".into()));
        }
        if self.future_population.len() < n_age_classes {
            return Err(Error::Config(format!(
                "future population missing for age class {}",
                self.future_population.len() + 1
            )));
        }
        if self.future_population.contains(&0) {
            return Err(Error::Config("future populations must be positive".into()));
        }
        Ok(())
    }
}

/// Draws of per-insured aggregate claims over the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveSamples {
    /// `[age class][sample]`
    pub r_samples: Vec<Vec<f64>>,
    /// (flattened posterior draw index, replicate index) of each sample.
    pub provenance: Vec<(usize, usize)>,
}

impl PredictiveSamples {
    pub fn n_age_classes(&self) -> usize {
        self.r_samples.len()
    }

    pub fn n_samples(&self) -> usize {
        self.provenance.len()
    }
}

/// Simulated aggregate claim total of one class over `horizon` months.
pub fn simulate_class_totals(
    spec: &ModelSpec,
    state: &ParameterState,
    class: usize,
    population: f64,
    horizon: usize,
    rng: &mut ChaCha20Rng,
) -> Result<f64> {
    let p = state.class(class);
    let mut total = 0.0;
    for _ in 0..horizon {
        let n = sample_count(spec, &p, population, rng)?;
        total += sample_total(spec, &p, n, rng)?;
    }
    Ok(total)
}

fn draw_rng(seed: u64, draw: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(draw as u64);
    rng
}

/// Aggregate claim totals `[class][sample]` for every posterior draw and
/// replicate.
fn simulate_totals(draws: &ChainDraws, cfg: &PredictiveConfig) -> Result<Vec<Vec<f64>>> {
    let a = draws.n_age_classes;
    cfg.validate(a)?;
    let layout = draws.layout();
    let flat: Vec<&Vec<f64>> = draws.iter_draws().collect();
    let per_draw: Vec<Vec<Vec<f64>>> = flat
        .par_iter()
        .enumerate()
        .map(|(i, d)| {
            let state = layout.unflatten(d)?;
            let mut rng = draw_rng(cfg.seed, i);
            (0..cfg.replicates_per_draw)
                .map(|_| {
                    (0..a)
                        .map(|c| {
                            simulate_class_totals(
                                &draws.spec,
                                &state,
                                c,
                                cfg.future_population[c] as f64,
                                cfg.horizon,
                                &mut rng,
                            )
                        })
                        .collect::<Result<Vec<f64>>>()
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mut out = vec![Vec::with_capacity(flat.len() * cfg.replicates_per_draw); a];
    for reps in per_draw {
        for rep in reps {
            for (c, x) in rep.into_iter().enumerate() {
                out[c].push(x);
            }
        }
    }
    Ok(out)
}

fn provenance(n_draws: usize, reps: usize) -> Vec<(usize, usize)> {
    (0..n_draws).flat_map(|d| (0..reps).map(move |r| (d, r))).collect()
}

/// Posterior predictive draws of `R = X / Π` per age class, where `X` sums
/// simulated monthly claim totals over the horizon.
pub fn draw_predictive(draws: &ChainDraws, cfg: &PredictiveConfig) -> Result<PredictiveSamples> {
    let totals = simulate_totals(draws, cfg)?;
    let r_samples = totals
        .into_iter()
        .enumerate()
        .map(|(c, xs)| {
            let pop = cfg.future_population[c] as f64;
            xs.into_iter().map(|x| x / pop).collect()
        })
        .collect();
    Ok(PredictiveSamples { r_samples, provenance: provenance(draws.n_chains() * draws.n_draws(), cfg.replicates_per_draw) })
}

/// Predictive draws for a portfolio fitted separately per service: totals
/// are simulated per service (sample `k` of every service shares its
/// posterior-draw and replicate index), summed, and divided by the summed
/// future population.
pub fn draw_predictive_aggregated(fits: &[(&ChainDraws, PredictiveConfig)]) -> Result<PredictiveSamples> {
    let Some((first, _)) = fits.first() else {
        return Err(Error::Config("no fitted services to aggregate".into()));
    };
    let a = first.n_age_classes;
    let n = first.n_chains() * first.n_draws();
    let mut sum_totals: Option<Vec<Vec<f64>>> = None;
    let mut sum_pop = vec![0.0; a];
    let mut reps = None;
    for (draws, cfg) in fits {
        if draws.n_age_classes != a || draws.n_chains() * draws.n_draws() != n {
            return Err(Error::Config("services must share age classes and draw counts".into()));
        }
        if *reps.get_or_insert(cfg.replicates_per_draw) != cfg.replicates_per_draw {
            return Err(Error::Config("services must share the replicate count".into()));
        }
        let totals = simulate_totals(draws, cfg)?;
        for c in 0..a {
            sum_pop[c] += cfg.future_population[c] as f64;
        }
        match sum_totals.as_mut() {
            None => sum_totals = Some(totals),
            Some(acc) => {
                for (row, new) in acc.iter_mut().zip(totals) {
                    row.iter_mut().zip(new).for_each(|(x, y)| *x += y);
                }
            }
        }
    }
    let r_samples = sum_totals
        .expect("at least one service")
        .into_iter()
        .zip(&sum_pop)
        .map(|(xs, pop)| xs.into_iter().map(|x| x / pop).collect())
        .collect();
    Ok(PredictiveSamples { r_samples, provenance: provenance(n, reps.unwrap_or(1)) })
}

fn sorted(samples: &[f64]) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(s)
}

fn check_level(tau: f64) -> Result<()> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("level must lie in (0, 1), got {tau}")))
    }
}

/// Smallest `k` (1-based) with `k / n >= tau`.
fn quantile_rank(n: usize, tau: f64) -> usize {
    let nf = n as f64;
    let mut k = ((tau * nf).ceil() as usize).clamp(1, n);
    while k > 1 && (k - 1) as f64 / nf >= tau {
        k -= 1;
    }
    while k < n && (k as f64) / nf < tau {
        k += 1;
    }
    k
}

fn var_sorted(s: &[f64], tau: f64) -> f64 {
    s[quantile_rank(s.len(), tau) - 1]
}

/// Empirical inverse CDF at `tau`.
pub fn value_at_risk(samples: &[f64], tau: f64) -> Result<f64> {
    check_level(tau)?;
    Ok(var_sorted(&sorted(samples)?, tau))
}

/// Mean excess over the VaR, `E[(R - VaR(τ))+]`.
pub fn expected_shortfall(samples: &[f64], tau: f64) -> Result<f64> {
    check_level(tau)?;
    let s = sorted(samples)?;
    let v = var_sorted(&s, tau);
    Ok(s.iter().map(|x| (x - v).max(0.0)).sum::<f64>() / s.len() as f64)
}

/// Average of the upper `(1 - τ)` fraction of the sample mass.
pub fn tail_value_at_risk(samples: &[f64], tau: f64) -> Result<f64> {
    check_level(tau)?;
    let s = sorted(samples)?;
    let n = s.len() as f64;
    let v = var_sorted(&s, tau);
    let tail_mass = (1.0 - tau) * n;
    let above: Vec<f64> = s.iter().copied().filter(|x| *x > v).collect();
    let atom_mass = tail_mass - above.len() as f64;
    Ok((above.iter().sum::<f64>() + atom_mass * v) / tail_mass)
}

/// Per-class premium: the `level` quantile of each class's predictive draws.
pub fn premium(samples: &PredictiveSamples, level: f64) -> Result<Vec<f64>> {
    samples.r_samples.iter().map(|r| value_at_risk(r, level)).collect()
}

/// Premium with a lower and an upper predictive quantile band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PremiumBand {
    pub lower: f64,
    pub premium: f64,
    pub upper: f64,
}

pub fn premium_bands(samples: &PredictiveSamples, level: f64, lower: f64, upper: f64) -> Result<Vec<PremiumBand>> {
    samples
        .r_samples
        .iter()
        .map(|r| {
            Ok(PremiumBand {
                lower: value_at_risk(r, lower)?,
                premium: value_at_risk(r, level)?,
                upper: value_at_risk(r, upper)?,
            })
        })
        .collect()
}

/// Sample standard deviation over sample mean.
pub fn coefficient_of_variation(samples: &[f64]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::InsufficientDraws("coefficient of variation needs at least two samples".into()));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return Err(Error::Domain("coefficient of variation is undefined for a zero mean".into()));
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(var.sqrt() / mean)
}

/// Posterior mean of the count overdispersion factor `1 + λΠ/δ` per class.
/// Returns ones for Poisson models.
pub fn overdispersion_by_class(draws: &ChainDraws, population: &[u64]) -> Result<Vec<f64>> {
    let layout = draws.layout();
    let a = draws.n_age_classes;
    if population.len() < a {
        return Err(Error::Config("population missing for some age class".into()));
    }
    if !draws.spec.has_delta() {
        return Ok(vec![1.0; a]);
    }
    let mut acc = vec![0.0; a];
    let mut n = 0.0;
    for d in draws.iter_draws() {
        let s = layout.unflatten(d)?;
        n += 1.0;
        for (c, v) in acc.iter_mut().enumerate() {
            let p = s.class(c);
            *v += overdispersion_factor(p.lambda * population[c] as f64, p.delta.expect("NB model"))?;
        }
    }
    Ok(acc.into_iter().map(|v| v / n).collect())
}

/// One row of a VaR/TVaR curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskPoint {
    pub tau: f64,
    pub var: f64,
    pub tvar: f64,
    pub es: f64,
}

pub fn risk_curve(samples: &[f64], taus: &[f64]) -> Result<Vec<RiskPoint>> {
    taus.iter()
        .map(|&tau| {
            Ok(RiskPoint {
                tau,
                var: value_at_risk(samples, tau)?,
                tvar: tail_value_at_risk(samples, tau)?,
                es: expected_shortfall(samples, tau)?,
            })
        })
        .collect()
}

/// `n - 1` evenly spaced levels strictly inside (0, 1): 1/n, ..., (n-1)/n.
pub fn tau_grid(n: usize) -> Vec<f64> {
    (1..n).map(|i| i as f64 / n as f64).collect()
}
