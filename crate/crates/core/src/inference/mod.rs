//! Posterior sampling and convergence diagnostics.

pub mod adapt;
pub mod diagnostics;
mod nuts;
pub mod sampler;
pub mod target;
pub mod transform;

pub use diagnostics::{compute_diagnostics, effective_sample_size, geweke_z, split_rhat, Diagnostics};
pub use nuts::TransitionStats;
pub use sampler::{run_chains, ChainDraws, ChainStats, Kernel, SamplerConfig};
pub use target::{LogDensity, Posterior};
pub use transform::{log_jacobian, transform_from_unconstrained, transform_to_unconstrained};

use crate::error::Result;
use crate::model::{ModelSpec, PortfolioData, PriorConfig};

/// Gradient of the log posterior (plus log-Jacobian) at unconstrained `z`.
pub fn grad_log_posterior_unconstrained(
    data: &PortfolioData,
    z: &[f64],
    spec: ModelSpec,
    prior: PriorConfig,
) -> Result<Vec<f64>> {
    let post = Posterior::new(data, spec, prior, data.n_age_classes().max(1))?;
    let mut g = vec![0.0; z.len()];
    post.log_density_and_grad(z, &mut g)?;
    Ok(g)
}
