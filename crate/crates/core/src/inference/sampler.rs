use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::adapt::{DualAveraging, RunningVariance, WindowSchedule};
use crate::inference::nuts::{find_reasonable_step, transition, Point};
use crate::inference::target::{LogDensity, Posterior};
use crate::inference::transform::log_jacobian;
use crate::model::{HyperPrior, ModelSpec, ParameterLayout, ParameterState, PortfolioData, PriorConfig};

/// Post-burn-in divergence rate above which a warning is attached to the draws.
pub const DIVERGENCE_WARN_RATE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Kernel {
    /// Multinomial no-U-turn Hamiltonian transitions.
    Nuts,
    /// Adaptive random-walk Metropolis with a diagonal proposal.
    RandomWalk,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub n_chains: usize,
    /// Iterations per chain, burn-in included.
    pub n_iterations: usize,
    pub n_burnin: usize,
    pub seed: u64,
    pub target_accept: f64,
    pub max_tree_depth: usize,
    pub kernel: Kernel,
}

impl Default for SamplerConfig {
    /// Three chains of 10,000 iterations with 5,000 discarded.
    fn default() -> Self {
        Self {
            n_chains: 3,
            n_iterations: 10_000,
            n_burnin: 5_000,
            seed: 20_240_601,
            target_accept: 0.8,
            max_tree_depth: 10,
            kernel: Kernel::Nuts,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_chains < 2 {
            return Err(Error::Config("at least two chains are required".into()));
        }
        if self.n_iterations == 0 || self.n_burnin >= self.n_iterations {
            return Err(Error::Config(format!(
                "burn-in ({}) must be smaller than the iteration count ({})",
                self.n_burnin, self.n_iterations
            )));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::Config("target_accept must lie in (0, 1)".into()));
        }
        if self.max_tree_depth == 0 {
            return Err(Error::Config("max_tree_depth must be positive".into()));
        }
        Ok(())
    }

    pub fn n_kept(&self) -> usize {
        self.n_iterations - self.n_burnin
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainStats {
    pub mean_accept: f64,
    pub step_size: f64,
    pub n_divergent: usize,
    pub mean_tree_depth: f64,
    pub n_gradient_evals: usize,
    /// Diagonal inverse metric in force after burn-in.
    pub inv_metric: Vec<f64>,
}

/// Post-burn-in posterior draws, natural scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainDraws {
    pub spec: ModelSpec,
    pub prior: PriorConfig,
    pub n_age_classes: usize,
    pub names: Vec<String>,
    /// Indexed `[chain][iteration][parameter]`.
    pub draws: Vec<Vec<Vec<f64>>>,
    /// Unnormalized log posterior, natural scale, `[chain][iteration]`.
    pub log_post: Vec<Vec<f64>>,
    pub stats: Vec<ChainStats>,
    pub warnings: Vec<String>,
}

impl ChainDraws {
    pub fn n_chains(&self) -> usize {
        self.draws.len()
    }

    pub fn n_draws(&self) -> usize {
        self.draws.first().map_or(0, Vec::len)
    }

    pub fn n_params(&self) -> usize {
        self.names.len()
    }

    pub fn layout(&self) -> ParameterLayout {
        ParameterLayout::new(self.spec, self.prior, self.n_age_classes)
    }

    /// Per-chain traces of one parameter.
    pub fn parameter(&self, index: usize) -> Vec<Vec<f64>> {
        self.draws.iter().map(|c| c.iter().map(|d| d[index]).collect()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Draws of every chain in chain-major order.
    pub fn iter_draws(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.draws.iter().flatten()
    }

    pub fn state(&self, chain: usize, iteration: usize) -> Result<ParameterState> {
        self.layout().unflatten(&self.draws[chain][iteration])
    }

    /// Posterior mean of each natural-scale coordinate.
    pub fn posterior_mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.n_params()];
        let mut n = 0.0;
        for d in self.iter_draws() {
            n += 1.0;
            for (m, v) in mean.iter_mut().zip(d) {
                *m += (v - *m) / n;
            }
        }
        mean
    }

    pub fn total_divergent(&self) -> usize {
        self.stats.iter().map(|s| s.n_divergent).sum()
    }
}

/// Starting point for one chain: hyperparameters near their prior centre
/// (jittered), per-class values drawn from the resulting Gamma priors.
fn initial_point<R: Rng>(layout: &ParameterLayout, rng: &mut R) -> Vec<f64> {
    let a = layout.n_age_classes;
    let mut values = vec![0.0; layout.dim()];
    for &(b, off, sampled) in layout.blocks() {
        let (shape, rate) = match layout.prior.block(b) {
            HyperPrior::Pinned { shape, rate } => (shape, rate),
            // Gamma(0.1, 0.1) has mean 1; the Half-Cauchy(0, 1) median is 1.
            HyperPrior::Gamma | HyperPrior::HalfCauchy => {
                let jitter = |rng: &mut R| (rng.gen_range(-0.5..0.5f64)).exp();
                (jitter(rng), jitter(rng))
            }
        };
        let g = Gamma::new(shape, 1.0 / rate).expect("positive shape and scale");
        for i in 0..a {
            values[off + i] = g.sample(rng).clamp((-6f64).exp(), 6f64.exp());
        }
        if sampled {
            values[off + a] = shape;
            values[off + a + 1] = rate;
        }
    }
    values.iter().map(|v| v.ln()).collect()
}

pub(crate) struct ChainOutput {
    pub draws: Vec<Vec<f64>>,
    pub log_density: Vec<f64>,
    pub stats: ChainStats,
    /// Step size used at each kept iteration.
    #[cfg_attr(not(test), allow(dead_code))]
    pub step_sizes: Vec<f64>,
}

/// Runs one chain on the unconstrained space. Returned draws are the raw
/// unconstrained coordinates.
pub(crate) fn run_chain<T: LogDensity + ?Sized>(
    target: &T,
    init: Vec<f64>,
    config: &SamplerConfig,
    rng: &mut ChaCha20Rng,
) -> Result<ChainOutput> {
    let dim = target.dim();
    let mut current = Point::new(target, init).ok_or_else(|| {
        Error::Sampler("initial point has no finite log density".into())
    })?;
    let mut inv_metric = vec![1.0; dim];
    let schedule = WindowSchedule::new(config.n_burnin);
    let n_kept = config.n_kept();

    let mut draws = Vec::with_capacity(n_kept);
    let mut log_density = Vec::with_capacity(n_kept);
    let mut step_sizes = Vec::with_capacity(n_kept);
    let (mut sum_accept, mut sum_depth, mut n_div, mut n_grad) = (0.0, 0.0, 0usize, 0usize);

    match config.kernel {
        Kernel::Nuts => {
            let mut eps = find_reasonable_step(target, &current, &inv_metric, 1.0, rng);
            let mut da = DualAveraging::new(config.target_accept, eps);
            let mut var = RunningVariance::new(dim);
            let mut window_accept = 0.0;
            let mut window_len = 0usize;
            for it in 0..config.n_iterations {
                let (next, st) = transition(target, &current, eps, &inv_metric, config.max_tree_depth, rng);
                current = next;
                n_grad += st.n_leapfrog;
                if it < config.n_burnin {
                    window_accept += st.accept_stat;
                    window_len += 1;
                    eps = da.update(st.accept_stat);
                    if schedule.in_slow_window(it) {
                        var.push(&current.q);
                    }
                    if schedule.ends_window(it) {
                        if window_accept == 0.0 && window_len > 0 {
                            return Err(Error::Sampler(format!(
                                "every proposal rejected during the adaptation window ending at iteration {}",
                                it + 1
                            )));
                        }
                        window_accept = 0.0;
                        window_len = 0;
                        inv_metric = var.regularized();
                        var.reset();
                        eps = find_reasonable_step(target, &current, &inv_metric, eps, rng);
                        da.restart(eps);
                    }
                    if it + 1 == config.n_burnin {
                        eps = da.final_step_size();
                    }
                } else {
                    sum_accept += st.accept_stat;
                    sum_depth += st.depth as f64;
                    if st.divergent {
                        n_div += 1;
                    }
                    draws.push(current.q.clone());
                    log_density.push(current.logp);
                    step_sizes.push(eps);
                }
            }
            let n = n_kept as f64;
            Ok(ChainOutput {
                draws,
                log_density,
                stats: ChainStats {
                    mean_accept: sum_accept / n,
                    step_size: eps,
                    n_divergent: n_div,
                    mean_tree_depth: sum_depth / n,
                    n_gradient_evals: n_grad,
                    inv_metric,
                },
                step_sizes,
            })
        }
        Kernel::RandomWalk => {
            let mut var = RunningVariance::new(dim);
            let mut log_scale = (2.38f64 * 2.38 / dim as f64).ln();
            let mut window_accepts = 0usize;
            for it in 0..config.n_iterations {
                let scale = log_scale.exp();
                let proposal: Vec<f64> = current
                    .q
                    .iter()
                    .zip(&inv_metric)
                    .map(|(q, m)| {
                        let z: f64 = rng.sample(StandardNormal);
                        q + z * (scale * m).sqrt()
                    })
                    .collect();
                n_grad += 1;
                let accept_prob = match Point::new(target, proposal) {
                    Some(p) => {
                        let a = (p.logp - current.logp).min(0.0).exp();
                        if rng.gen::<f64>() < a {
                            current = p;
                            if it < config.n_burnin {
                                window_accepts += 1;
                            }
                        }
                        a
                    }
                    None => 0.0,
                };
                if it < config.n_burnin {
                    log_scale += (accept_prob - 0.234) / ((it + 1) as f64).powf(0.6);
                    if schedule.in_slow_window(it) {
                        var.push(&current.q);
                    }
                    if schedule.ends_window(it) {
                        if window_accepts == 0 {
                            return Err(Error::Sampler(format!(
                                "every proposal rejected during the adaptation window ending at iteration {}",
                                it + 1
                            )));
                        }
                        window_accepts = 0;
                        if var.count() > 2 * dim {
                            inv_metric = var.regularized();
                        }
                        var.reset();
                    }
                } else {
                    sum_accept += accept_prob;
                    draws.push(current.q.clone());
                    log_density.push(current.logp);
                    step_sizes.push(log_scale.exp());
                }
            }
            Ok(ChainOutput {
                draws,
                log_density,
                stats: ChainStats {
                    mean_accept: sum_accept / n_kept as f64,
                    step_size: log_scale.exp(),
                    n_divergent: 0,
                    mean_tree_depth: 0.0,
                    n_gradient_evals: n_grad,
                    inv_metric,
                },
                step_sizes,
            })
        }
    }
}

/// Independent RNG stream for `chain`, derived from the configured seed.
pub(crate) fn chain_rng(seed: u64, chain: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64 + 1);
    rng
}

/// Samples a generic target with independent chains started at `inits`
/// (one unconstrained vector per chain). Returns unconstrained draws.
pub(crate) fn sample_target<T: LogDensity>(
    target: &T,
    config: &SamplerConfig,
    init: impl Fn(&mut ChaCha20Rng) -> Vec<f64> + Sync,
) -> Result<Vec<ChainOutput>> {
    config.validate()?;
    (0..config.n_chains)
        .into_par_iter()
        .map(|c| {
            let mut rng = chain_rng(config.seed, c);
            let mut start = init(&mut rng);
            let mut tries = 0;
            while Point::new(target, start.clone()).is_none() {
                tries += 1;
                if tries > 100 {
                    return Err(Error::Sampler(format!("chain {c}: no finite starting point found")));
                }
                start = init(&mut rng);
            }
            run_chain(target, start, config, &mut rng)
        })
        .collect()
}

/// Draws posterior samples of a model's parameters.
pub fn run_chains(
    data: &PortfolioData,
    spec: ModelSpec,
    prior: PriorConfig,
    config: &SamplerConfig,
) -> Result<ChainDraws> {
    let posterior = Posterior::new(data, spec, prior, data.n_age_classes())?;
    let layout = posterior.layout().clone();
    let outputs = sample_target(&posterior, config, |rng| initial_point(&layout, rng))?;

    let mut draws = Vec::with_capacity(outputs.len());
    let mut log_post = Vec::with_capacity(outputs.len());
    let mut stats = Vec::with_capacity(outputs.len());
    let mut warnings = Vec::new();
    for (c, out) in outputs.into_iter().enumerate() {
        let rate = out.stats.n_divergent as f64 / config.n_kept() as f64;
        if rate > DIVERGENCE_WARN_RATE {
            warnings.push(format!(
                "{spec}: chain {c} had {} divergent transitions after burn-in ({:.1}%)",
                out.stats.n_divergent,
                100.0 * rate
            ));
        }
        log_post.push(out.draws.iter().zip(&out.log_density).map(|(z, lp)| lp - log_jacobian(z)).collect());
        draws.push(out.draws.into_iter().map(|z| z.iter().map(|v| v.exp()).collect()).collect());
        stats.push(out.stats);
    }
    Ok(ChainDraws {
        spec,
        prior,
        n_age_classes: layout.n_age_classes,
        names: layout.names(),
        draws,
        log_post,
        stats,
        warnings,
    })
}
