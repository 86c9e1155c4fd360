use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SizeFamily {
    Gamma,
    LogNormal,
    LogT,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CountFamily {
    Poisson,
    NegBinomial,
}

/// A claim-size family paired with a claim-count family. The shape
/// parameter of the Gamma size baseline is fixed at one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelSpec {
    pub size: SizeFamily,
    pub count: CountFamily,
}

impl ModelSpec {
    pub const ALL: [ModelSpec; 6] = [
        ModelSpec::new(SizeFamily::Gamma, CountFamily::Poisson),
        ModelSpec::new(SizeFamily::LogNormal, CountFamily::Poisson),
        ModelSpec::new(SizeFamily::LogT, CountFamily::Poisson),
        ModelSpec::new(SizeFamily::Gamma, CountFamily::NegBinomial),
        ModelSpec::new(SizeFamily::LogNormal, CountFamily::NegBinomial),
        ModelSpec::new(SizeFamily::LogT, CountFamily::NegBinomial),
    ];

    pub const fn new(size: SizeFamily, count: CountFamily) -> Self {
        Self { size, count }
    }

    pub fn kappa(&self) -> f64 {
        1.0
    }

    pub fn has_nu(&self) -> bool {
        self.size == SizeFamily::LogT
    }

    pub fn has_delta(&self) -> bool {
        self.count == CountFamily::NegBinomial
    }

    /// Short identifier `M1`..`M6`.
    pub fn name(&self) -> &'static str {
        match (self.size, self.count) {
            (SizeFamily::Gamma, CountFamily::Poisson) => "M1",
            (SizeFamily::LogNormal, CountFamily::Poisson) => "M2",
            (SizeFamily::LogT, CountFamily::Poisson) => "M3",
            (SizeFamily::Gamma, CountFamily::NegBinomial) => "M4",
            (SizeFamily::LogNormal, CountFamily::NegBinomial) => "M5",
            (SizeFamily::LogT, CountFamily::NegBinomial) => "M6",
        }
    }

    pub fn label(&self) -> &'static str {
        match self.name() {
            "M1" => "G-P",
            "M2" => "LN-P",
            "M3" => "LT-P",
            "M4" => "G-NB",
            "M5" => "LN-NB",
            _ => "LT-NB",
        }
    }

    pub fn blocks(&self) -> Vec<Block> {
        let mut b = vec![Block::Lambda, Block::Theta];
        if self.has_nu() {
            b.push(Block::Nu);
        }
        if self.has_delta() {
            b.push(Block::Delta);
        }
        b
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelSpec::ALL
            .iter()
            .find(|m| m.name().eq_ignore_ascii_case(s) || m.label().eq_ignore_ascii_case(s))
            .copied()
            .ok_or_else(|| Error::Config(format!("unknown model {s:?}; expected one of M1..M6")))
    }
}

/// Per-age-class parameter groups, each with its own Gamma(shape, rate) prior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Block {
    Lambda,
    Theta,
    Nu,
    Delta,
}

impl Block {
    pub fn name(&self) -> &'static str {
        match self {
            Block::Lambda => "lambda",
            Block::Theta => "theta",
            Block::Nu => "nu",
            Block::Delta => "delta",
        }
    }
}

/// Third-level prior placed on the shape and rate of a block's Gamma prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum HyperPrior {
    /// Gamma(0.1, 0.1) on each hyperparameter.
    Gamma,
    /// Half-Cauchy(0, 1) on each hyperparameter.
    HalfCauchy,
    /// Hyperparameters held at known values and not sampled.
    Pinned { shape: f64, rate: f64 },
}

impl HyperPrior {
    pub const GAMMA_SHAPE: f64 = 0.1;
    pub const GAMMA_RATE: f64 = 0.1;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    pub lambda: HyperPrior,
    pub theta: HyperPrior,
    pub nu: HyperPrior,
    pub delta: HyperPrior,
}

impl PriorConfig {
    pub fn uniform(family: HyperPrior) -> Self {
        Self { lambda: family, theta: family, nu: family, delta: family }
    }

    pub fn gamma() -> Self {
        Self::uniform(HyperPrior::Gamma)
    }

    pub fn half_cauchy() -> Self {
        Self::uniform(HyperPrior::HalfCauchy)
    }

    pub fn block(&self, b: Block) -> HyperPrior {
        match b {
            Block::Lambda => self.lambda,
            Block::Theta => self.theta,
            Block::Nu => self.nu,
            Block::Delta => self.delta,
        }
    }

    pub fn set_block(&mut self, b: Block, h: HyperPrior) {
        match b {
            Block::Lambda => self.lambda = h,
            Block::Theta => self.theta = h,
            Block::Nu => self.nu = h,
            Block::Delta => self.delta = h,
        }
    }
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self::gamma()
    }
}

impl FromStr for PriorConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gamma" => Ok(Self::gamma()),
            "half-cauchy" | "halfcauchy" | "hc" => Ok(Self::half_cauchy()),
            _ => Err(Error::Config(format!("unknown prior {s:?}; expected gamma or half-cauchy"))),
        }
    }
}

/// Shape and rate of a Gamma prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaHyper {
    pub shape: f64,
    pub rate: f64,
}

impl GammaHyper {
    pub fn new(shape: f64, rate: f64) -> Self {
        Self { shape, rate }
    }

    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }
}

/// Values of one active block: the per-class parameters and their hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockState {
    pub values: Vec<f64>,
    pub hyper: GammaHyper,
}

/// Full parameter vector of a fitted model in the natural (positive) scale.
///
/// `nu` is present only for log-t sizes and `delta` only for negative
/// binomial counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterState {
    pub lambda: BlockState,
    pub theta: BlockState,
    pub nu: Option<BlockState>,
    pub delta: Option<BlockState>,
}

impl ParameterState {
    pub fn n_age_classes(&self) -> usize {
        self.lambda.values.len()
    }

    pub fn block(&self, b: Block) -> Option<&BlockState> {
        match b {
            Block::Lambda => Some(&self.lambda),
            Block::Theta => Some(&self.theta),
            Block::Nu => self.nu.as_ref(),
            Block::Delta => self.delta.as_ref(),
        }
    }

    fn block_mut(&mut self, b: Block) -> Option<&mut BlockState> {
        match b {
            Block::Lambda => Some(&mut self.lambda),
            Block::Theta => Some(&mut self.theta),
            Block::Nu => self.nu.as_mut(),
            Block::Delta => self.delta.as_mut(),
        }
    }

    /// Checks that exactly the blocks used by `spec` are present, that every
    /// block has one value per age class, and that everything is positive.
    pub fn validate(&self, spec: &ModelSpec) -> Result<()> {
        if self.nu.is_some() != spec.has_nu() {
            return domain(format!("nu block presence does not match model {spec}"));
        }
        if self.delta.is_some() != spec.has_delta() {
            return domain(format!("delta block presence does not match model {spec}"));
        }
        let a = self.n_age_classes();
        for b in spec.blocks() {
            let bs = self.block(b).expect("checked above");
            if bs.values.len() != a {
                return domain(format!("{} block has {} values, expected {a}", b.name(), bs.values.len()));
            }
            for (i, v) in bs.values.iter().enumerate() {
                if !(*v > 0.0 && v.is_finite()) {
                    return domain(format!("{}[{}] = {v} is not positive", b.name(), i + 1));
                }
            }
            for (n, v) in [("shape", bs.hyper.shape), ("rate", bs.hyper.rate)] {
                if !(v > 0.0 && v.is_finite()) {
                    return domain(format!("{} hyper {n} = {v} is not positive", b.name()));
                }
            }
        }
        Ok(())
    }
}

/// Mapping between a `ParameterState` and a flat vector of sampled
/// coordinates. Per active block: one entry per age class, then the shape
/// and rate unless the block's hyperprior is pinned.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterLayout {
    pub spec: ModelSpec,
    pub prior: PriorConfig,
    pub n_age_classes: usize,
    offsets: Vec<(Block, usize, bool)>,
    dim: usize,
}

impl ParameterLayout {
    pub fn new(spec: ModelSpec, prior: PriorConfig, n_age_classes: usize) -> Self {
        let mut offsets = Vec::new();
        let mut dim = 0;
        for b in spec.blocks() {
            let sampled_hyper = !matches!(prior.block(b), HyperPrior::Pinned { .. });
            offsets.push((b, dim, sampled_hyper));
            dim += n_age_classes + if sampled_hyper { 2 } else { 0 };
        }
        Self { spec, prior, n_age_classes, offsets, dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Active blocks with their start offset and whether hyperparameters are sampled.
    pub fn blocks(&self) -> &[(Block, usize, bool)] {
        &self.offsets
    }

    pub fn names(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.dim);
        for &(b, _, sampled) in &self.offsets {
            for a in 1..=self.n_age_classes {
                out.push(format!("{}[{a}]", b.name()));
            }
            if sampled {
                out.push(format!("a_{}", b.name()));
                out.push(format!("b_{}", b.name()));
            }
        }
        out
    }

    /// Flattens a state into natural-scale coordinates.
    pub fn flatten(&self, state: &ParameterState) -> Result<Vec<f64>> {
        state.validate(&self.spec)?;
        if state.n_age_classes() != self.n_age_classes {
            return domain("state has the wrong number of age classes");
        }
        let mut out = Vec::with_capacity(self.dim);
        for &(b, _, sampled) in &self.offsets {
            let bs = state.block(b).expect("validated");
            out.extend_from_slice(&bs.values);
            if sampled {
                out.push(bs.hyper.shape);
                out.push(bs.hyper.rate);
            }
        }
        Ok(out)
    }

    /// Rebuilds a state from natural-scale coordinates. Pinned
    /// hyperparameters are filled from the prior configuration.
    pub fn unflatten(&self, values: &[f64]) -> Result<ParameterState> {
        if values.len() != self.dim {
            return domain(format!("expected {} coordinates, got {}", self.dim, values.len()));
        }
        let a = self.n_age_classes;
        let empty = BlockState { values: Vec::new(), hyper: GammaHyper::new(1.0, 1.0) };
        let mut state = ParameterState {
            lambda: empty.clone(),
            theta: empty.clone(),
            nu: self.spec.has_nu().then(|| empty.clone()),
            delta: self.spec.has_delta().then(|| empty.clone()),
        };
        for &(b, off, sampled) in &self.offsets {
            let hyper = if sampled {
                GammaHyper::new(values[off + a], values[off + a + 1])
            } else {
                match self.prior.block(b) {
                    HyperPrior::Pinned { shape, rate } => GammaHyper::new(shape, rate),
                    _ => unreachable!("unsampled hyper must be pinned"),
                }
            };
            let bs = state.block_mut(b).expect("block allocated for active spec");
            bs.values = values[off..off + a].to_vec();
            bs.hyper = hyper;
        }
        state.validate(&self.spec)?;
        Ok(state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_names_round_trip() {
        for m in ModelSpec::ALL {
            assert_eq!(m.name().parse::<ModelSpec>().unwrap(), m);
            assert_eq!(m.kappa(), 1.0);
        }
        assert!("M7".parse::<ModelSpec>().is_err());
    }

    #[test]
    fn layout_dims() {
        let m6: ModelSpec = "M6".parse().unwrap();
        assert_eq!(ParameterLayout::new(m6, PriorConfig::gamma(), 7).dim(), 36);
        let m1: ModelSpec = "M1".parse().unwrap();
        let mut prior = PriorConfig::gamma();
        prior.lambda = HyperPrior::Pinned { shape: 2.0, rate: 1.0 };
        let l = ParameterLayout::new(m1, prior, 3);
        assert_eq!(l.dim(), 3 + 5);
        assert_eq!(l.names()[..4], ["lambda[1]", "lambda[2]", "lambda[3]", "theta[1]"]);
    }

    #[test]
    fn flatten_round_trip() {
        let m = ModelSpec::ALL[5];
        let l = ParameterLayout::new(m, PriorConfig::gamma(), 2);
        let v: Vec<f64> = (1..=l.dim()).map(|i| i as f64 * 0.5).collect();
        let s = l.unflatten(&v).unwrap();
        assert_eq!(l.flatten(&s).unwrap(), v);
        assert!(s.nu.is_some() && s.delta.is_some());
    }

    #[test]
    fn absent_blocks_rejected() {
        let l = ParameterLayout::new(ModelSpec::ALL[0], PriorConfig::gamma(), 1);
        let mut s = l.unflatten(&[1.0, 1.0, 1.0, 1.0, 1.0, 1.0]).unwrap();
        s.nu = Some(s.theta.clone());
        assert!(s.validate(&ModelSpec::ALL[0]).is_err());
    }
}
