//! Convergence diagnostics: split-R̂, effective sample size, Geweke
//! z-scores, lagged autocorrelations and the posterior correlation matrix.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::sampler::ChainDraws;

/// Minimum post-burn-in draws per chain for diagnostics.
pub const MIN_DRAWS: usize = 100;
/// Lags reported in `lag_autocorr`.
pub const REPORTED_LAGS: usize = 20;
/// Geweke window fractions: first 10% against last 50%.
pub const GEWEKE_FIRST: f64 = 0.1;
pub const GEWEKE_LAST: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub names: Vec<String>,
    pub rhat: Vec<f64>,
    pub ess: Vec<f64>,
    /// `[parameter][chain]`
    pub geweke_z: Vec<Vec<f64>>,
    /// `[parameter][lag - 1]`, lags `1..=REPORTED_LAGS`, pooled over chains.
    pub lag_autocorr: Vec<Vec<f64>>,
    /// Posterior correlation matrix of the parameters, all chains pooled.
    pub correlation: Vec<Vec<f64>>,
}

impl Diagnostics {
    pub fn max_rhat(&self) -> f64 {
        self.rhat.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_ess(&self) -> f64 {
        self.ess.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Autocovariance at `lag` with the biased (divide by n) estimator.
fn autocov(x: &[f64], m: f64, lag: usize) -> f64 {
    let n = x.len();
    if lag >= n {
        return 0.0;
    }
    x[..n - lag].iter().zip(&x[lag..]).map(|(a, b)| (a - m) * (b - m)).sum::<f64>() / n as f64
}

fn split(chains: &[Vec<f64>]) -> Vec<&[f64]> {
    let n = chains.iter().map(Vec::len).min().unwrap_or(0);
    let half = n / 2;
    chains
        .iter()
        .flat_map(|c| [&c[..half], &c[n - half..n]])
        .collect()
}

fn check_shape(chains: &[Vec<f64>]) -> Result<()> {
    if chains.len() < 2 {
        return Err(Error::InsufficientDraws(format!("need at least 2 chains, got {}", chains.len())));
    }
    let n = chains.iter().map(Vec::len).min().unwrap_or(0);
    if n < MIN_DRAWS {
        return Err(Error::InsufficientDraws(format!("need at least {MIN_DRAWS} draws per chain, got {n}")));
    }
    Ok(())
}

/// Split-R̂ of one scalar quantity.
pub fn split_rhat(chains: &[Vec<f64>]) -> Result<f64> {
    check_shape(chains)?;
    let parts = split(chains);
    let n = parts[0].len() as f64;
    let means: Vec<f64> = parts.iter().map(|p| mean(p)).collect();
    let w = parts.iter().map(|p| variance(p)).sum::<f64>() / parts.len() as f64;
    let b = n * variance(&means);
    if w == 0.0 {
        return Ok(if b == 0.0 { 1.0 } else { f64::INFINITY });
    }
    let var_plus = (n - 1.0) / n * w + b / n;
    Ok((var_plus / w).sqrt())
}

/// Integrated autocorrelation time from a sequence of autocorrelations
/// (starting at lag 0), truncated where a pair sum first turns negative,
/// with the pair sums forced monotone.
fn autocorr_time(rho: impl Fn(usize) -> f64, max_lag: usize) -> f64 {
    let mut sum_pairs = 0.0;
    let mut prev = f64::INFINITY;
    let mut k = 0;
    while 2 * k + 1 < max_lag {
        let mut pair = rho(2 * k) + rho(2 * k + 1);
        if pair < 0.0 {
            break;
        }
        if pair > prev {
            pair = prev;
        }
        prev = pair;
        sum_pairs += pair;
        k += 1;
    }
    (-1.0 + 2.0 * sum_pairs).max(1e-6)
}

/// Multi-chain effective sample size of one scalar quantity, computed on
/// split chains and capped at the total number of draws.
pub fn effective_sample_size(chains: &[Vec<f64>]) -> Result<f64> {
    check_shape(chains)?;
    let parts = split(chains);
    let m = parts.len() as f64;
    let n = parts[0].len();
    let means: Vec<f64> = parts.iter().map(|p| mean(p)).collect();
    let w = parts.iter().map(|p| variance(p)).sum::<f64>() / m;
    let total = m * n as f64;
    if w == 0.0 {
        return Ok(total);
    }
    let nf = n as f64;
    let b_over_n = variance(&means);
    let var_plus = (nf - 1.0) / nf * w + b_over_n;
    let rho = |lag: usize| {
        if lag == 0 {
            return 1.0;
        }
        let mean_acov = parts.iter().zip(&means).map(|(p, &mu)| autocov(p, mu, lag)).sum::<f64>() / m;
        1.0 - (w * (nf - 1.0) / nf - mean_acov) / var_plus
    };
    let tau = autocorr_time(rho, n);
    Ok((total / tau).min(total))
}

/// Autocorrelations at lags `1..=max_lag`, pooled across chains.
pub fn autocorrelations(chains: &[Vec<f64>], max_lag: usize) -> Vec<f64> {
    (1..=max_lag)
        .map(|lag| {
            let mut num = 0.0;
            let mut den = 0.0;
            for c in chains {
                let m = mean(c);
                num += autocov(c, m, lag);
                den += autocov(c, m, 0);
            }
            if den == 0.0 {
                0.0
            } else {
                num / den
            }
        })
        .collect()
}

/// Variance of the mean of a single series, inflated by its
/// autocorrelation time.
fn mean_variance(x: &[f64]) -> f64 {
    let m = mean(x);
    let g0 = autocov(x, m, 0);
    if g0 == 0.0 {
        return 0.0;
    }
    let tau = autocorr_time(|lag| autocov(x, m, lag) / g0, x.len());
    g0 * tau / x.len() as f64
}

/// Geweke z-score comparing the mean of the first 10% of a chain with the
/// mean of its last 50%.
pub fn geweke_z(chain: &[f64]) -> f64 {
    let n = chain.len();
    let a = &chain[..((GEWEKE_FIRST * n as f64) as usize).max(2)];
    let b = &chain[n - ((GEWEKE_LAST * n as f64) as usize).max(2)..];
    let se = (mean_variance(a) + mean_variance(b)).sqrt();
    if se == 0.0 {
        0.0
    } else {
        (mean(a) - mean(b)) / se
    }
}

/// Pearson correlation matrix of the pooled draws.
pub fn correlation_matrix(draws: &ChainDraws) -> Vec<Vec<f64>> {
    let p = draws.n_params();
    let all: Vec<&Vec<f64>> = draws.iter_draws().collect();
    let n = all.len() as f64;
    let means: Vec<f64> = (0..p).map(|j| all.iter().map(|d| d[j]).sum::<f64>() / n).collect();
    let mut cov = vec![vec![0.0; p]; p];
    for d in &all {
        for i in 0..p {
            let di = d[i] - means[i];
            for j in i..p {
                cov[i][j] += di * (d[j] - means[j]);
            }
        }
    }
    let mut corr = vec![vec![0.0; p]; p];
    for i in 0..p {
        for j in i..p {
            let denom = (cov[i][i] * cov[j][j]).sqrt();
            let r = if denom > 0.0 { cov[i][j] / denom } else if i == j { 1.0 } else { 0.0 };
            corr[i][j] = r;
            corr[j][i] = r;
        }
    }
    corr
}

pub fn compute_diagnostics(draws: &ChainDraws) -> Result<Diagnostics> {
    let mut rhat = Vec::with_capacity(draws.n_params());
    let mut ess = Vec::with_capacity(draws.n_params());
    let mut geweke = Vec::with_capacity(draws.n_params());
    let mut acf = Vec::with_capacity(draws.n_params());
    for j in 0..draws.n_params() {
        let chains = draws.parameter(j);
        rhat.push(split_rhat(&chains)?);
        ess.push(effective_sample_size(&chains)?);
        geweke.push(chains.iter().map(|c| geweke_z(c)).collect());
        acf.push(autocorrelations(&chains, REPORTED_LAGS));
    }
    Ok(Diagnostics {
        names: draws.names.clone(),
        rhat,
        ess,
        geweke_z: geweke,
        lag_autocorr: acf,
        correlation: correlation_matrix(draws),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_short_or_single_chains() {
        assert!(split_rhat(&[vec![0.0; 500]]).is_err());
        assert!(effective_sample_size(&[vec![0.0; 50], vec![0.0; 50]]).is_err());
    }

    #[test]
    fn constant_chains() {
        let c = vec![vec![2.0; 200], vec![2.0; 200]];
        assert_eq!(split_rhat(&c).unwrap(), 1.0);
        assert_eq!(effective_sample_size(&c).unwrap(), 400.0);
        assert_eq!(geweke_z(&c[0]), 0.0);
    }

    #[test]
    fn autocorrelation_of_alternating_series() {
        let c: Vec<f64> = (0..1000).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let r = autocorrelations(&[c], 2);
        assert!((r[0] + 1.0).abs() < 1e-2);
        assert!((r[1] - 1.0).abs() < 1e-2);
    }
}
