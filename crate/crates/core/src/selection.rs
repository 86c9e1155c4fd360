//! Model comparison by the deviance information criterion and the
//! continuous ranked probability score of per-cell claim totals.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::ChainDraws;
use crate::model::random::{sample_count, sample_total};
use crate::model::{log_likelihood, PortfolioData};

/// Deviance summaries of one fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dic {
    /// Posterior mean of `-2 log L`.
    pub d_bar: f64,
    /// `-2 log L` at the posterior mean of the natural-scale parameters.
    pub d_at_mean: f64,
    pub p_d: f64,
    pub dic: f64,
}

pub fn dic(draws: &ChainDraws, data: &PortfolioData) -> Result<Dic> {
    let layout = draws.layout();
    let flat: Vec<&Vec<f64>> = draws.iter_draws().collect();
    if flat.is_empty() {
        return Err(Error::EmptySamples);
    }
    let devs: Vec<f64> = flat
        .par_iter()
        .map(|d| Ok(-2.0 * log_likelihood(data, &layout.unflatten(d)?, &draws.spec)?))
        .collect::<Result<_>>()?;
    let d_bar = devs.iter().sum::<f64>() / devs.len() as f64;
    let mean_state = layout.unflatten(&draws.posterior_mean())?;
    let d_at_mean = -2.0 * log_likelihood(data, &mean_state, &draws.spec)?;
    if !d_at_mean.is_finite() || !d_bar.is_finite() {
        return Err(Error::Domain(format!(
            "non-finite deviance ({d_bar} mean, {d_at_mean} at the posterior mean)"
        )));
    }
    let p_d = d_bar - d_at_mean;
    Ok(Dic { d_bar, d_at_mean, p_d, dic: d_at_mean + 2.0 * p_d })
}

/// CRPS of one observation from two independent replicate streams:
/// `mean|a - y| - 0.5 mean|a - b|`.
pub fn crps_sample(observation: f64, reps: &[f64], reps_indep: &[f64]) -> Result<f64> {
    if reps.is_empty() || reps.len() != reps_indep.len() {
        return Err(Error::InsufficientDraws("replicate streams must be nonempty and of equal length".into()));
    }
    let l = reps.len() as f64;
    let first = reps.iter().map(|r| (r - observation).abs()).sum::<f64>() / l;
    let second = reps.iter().zip(reps_indep).map(|(a, b)| (a - b).abs()).sum::<f64>() / l;
    Ok(first - 0.5 * second)
}

/// Monte Carlo CRPS of the fitted model on the observed claim totals,
/// averaged over every cell. Each posterior draw yields
/// `replicates_per_draw` replicate portfolios; every replicate is paired
/// with one from an independently chosen posterior draw.
pub fn crps(draws: &ChainDraws, data: &PortfolioData, replicates_per_draw: usize, seed: u64) -> Result<f64> {
    let layout = draws.layout();
    let flat: Vec<&Vec<f64>> = draws.iter_draws().collect();
    if flat.len() * replicates_per_draw < 2 {
        return Err(Error::InsufficientDraws("CRPS needs at least two replicates".into()));
    }
    if data.is_empty() {
        return Err(Error::Data("no observations to score".into()));
    }
    let records = data.records();
    let per_draw: Vec<(Vec<f64>, Vec<f64>)> = flat
        .par_iter()
        .enumerate()
        .map(|(i, d)| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let own = layout.unflatten(d)?;
            let mut first = vec![0.0; records.len()];
            let mut second = vec![0.0; records.len()];
            for _ in 0..replicates_per_draw {
                let other = layout.unflatten(flat[rng.gen_range(0..flat.len())])?;
                for (k, r) in records.iter().enumerate() {
                    let pop = r.population as f64;
                    let p = own.class(r.age_class - 1);
                    let n = sample_count(&draws.spec, &p, pop, &mut rng)?;
                    let y = sample_total(&draws.spec, &p, n, &mut rng)?;
                    let q = other.class(r.age_class - 1);
                    let n2 = sample_count(&draws.spec, &q, pop, &mut rng)?;
                    let y2 = sample_total(&draws.spec, &q, n2, &mut rng)?;
                    first[k] += (y - r.claim_total).abs();
                    second[k] += (y - y2).abs();
                }
            }
            Ok((first, second))
        })
        .collect::<Result<_>>()?;
    let l = (flat.len() * replicates_per_draw) as f64;
    let mut total = 0.0;
    for k in 0..records.len() {
        let first: f64 = per_draw.iter().map(|(f, _)| f[k]).sum();
        let second: f64 = per_draw.iter().map(|(_, s)| s[k]).sum();
        total += (first - 0.5 * second) / l;
    }
    Ok(total / records.len() as f64)
}

/// DIC and CRPS of one model, possibly accumulated over several services.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelScore {
    pub model: String,
    pub d_bar: f64,
    pub d_at_mean: f64,
    pub p_d: f64,
    pub dic: f64,
    pub crps: f64,
    /// Number of scored cells, used to weight CRPS when combining.
    pub n_cells: usize,
}

impl ModelScore {
    pub fn score(draws: &ChainDraws, data: &PortfolioData, replicates_per_draw: usize, seed: u64) -> Result<Self> {
        let d = dic(draws, data)?;
        Ok(Self {
            model: draws.spec.name().to_string(),
            d_bar: d.d_bar,
            d_at_mean: d.d_at_mean,
            p_d: d.p_d,
            dic: d.dic,
            crps: crps(draws, data, replicates_per_draw, seed)?,
            n_cells: data.records().len(),
        })
    }

    /// Scores of independent fits (one per service) for the same model.
    /// Deviances add; CRPS is the cell-weighted mean.
    pub fn combine(parts: &[ModelScore]) -> Result<Self> {
        let first = parts.first().ok_or(Error::EmptySamples)?;
        let n_cells: usize = parts.iter().map(|p| p.n_cells).sum();
        Ok(Self {
            model: first.model.clone(),
            d_bar: parts.iter().map(|p| p.d_bar).sum(),
            d_at_mean: parts.iter().map(|p| p.d_at_mean).sum(),
            p_d: parts.iter().map(|p| p.p_d).sum(),
            dic: parts.iter().map(|p| p.dic).sum(),
            crps: parts.iter().map(|p| p.crps * p.n_cells as f64).sum::<f64>() / n_cells as f64,
            n_cells,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub models: Vec<ModelScore>,
}

impl ComparisonReport {
    /// Name of the model with the smallest DIC.
    pub fn best_by_dic(&self) -> Option<&str> {
        self.models
            .iter()
            .min_by(|a, b| a.dic.total_cmp(&b.dic))
            .map(|m| m.model.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_replicates_score_zero() {
        let reps = vec![3.5; 10];
        assert_eq!(crps_sample(3.5, &reps, &reps).unwrap(), 0.0);
    }

    #[test]
    fn mismatched_streams_rejected() {
        assert!(crps_sample(0.0, &[1.0], &[]).is_err());
        assert!(crps_sample(0.0, &[], &[]).is_err());
    }

    #[test]
    fn combine_adds_deviances() {
        let s = |dic, crps, n| ModelScore {
            model: "M1".into(),
            d_bar: dic,
            d_at_mean: dic,
            p_d: 0.0,
            dic,
            crps,
            n_cells: n,
        };
        let c = ModelScore::combine(&[s(10.0, 1.0, 1), s(20.0, 4.0, 3)]).unwrap();
        assert_eq!(c.dic, 30.0);
        assert_eq!(c.crps, 3.25);
        assert_eq!(c.n_cells, 4);
    }
}
