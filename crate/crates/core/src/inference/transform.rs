//! Log/exp map between positive parameters and the unconstrained space the
//! sampler moves in.

use crate::error::{domain, Result};
use crate::model::{ParameterLayout, ParameterState};

/// Elementwise log of positive values.
pub fn log_map(values: &[f64]) -> Result<Vec<f64>> {
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if v > 0.0 && v.is_finite() {
                Ok(v.ln())
            } else {
                domain(format!("coordinate {i} = {v} is not positive"))
            }
        })
        .collect()
}

pub fn exp_map(z: &[f64]) -> Vec<f64> {
    z.iter().map(|v| v.exp()).collect()
}

/// Log-Jacobian of the inverse map `z -> exp(z)`, which is `sum(z)`.
pub fn log_jacobian(z: &[f64]) -> f64 {
    z.iter().sum()
}

pub fn transform_to_unconstrained(layout: &ParameterLayout, state: &ParameterState) -> Result<Vec<f64>> {
    log_map(&layout.flatten(state)?)
}

pub fn transform_from_unconstrained(layout: &ParameterLayout, z: &[f64]) -> Result<ParameterState> {
    layout.unflatten(&exp_map(z))
}
