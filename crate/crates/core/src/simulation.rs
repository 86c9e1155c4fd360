//! Simulation-recovery study: generate portfolios from the log-t /
//! negative binomial model, refit, and score hyperparameter recovery and
//! premium protection.

use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{compute_diagnostics, run_chains, SamplerConfig};
use crate::model::random::{sample_count, sample_total};
use crate::model::{BlockState, GammaHyper, ModelSpec, ParameterState, PortfolioData, PriorConfig, Record};
use crate::risk::{draw_predictive, premium, simulate_class_totals, PredictiveConfig};

/// Solves `mean = shape/rate` and `precision = rate^2/shape` for a Gamma prior.
pub fn hyper_from_mean_precision(mean: f64, precision: f64) -> Result<GammaHyper> {
    if !(mean > 0.0 && precision > 0.0 && mean.is_finite() && precision.is_finite()) {
        return Err(Error::Domain(format!("mean and precision must be positive, got ({mean}, {precision})")));
    }
    let rate = precision * mean;
    Ok(GammaHyper::new(mean * rate, rate))
}

/// Generating hyperparameters for the four parameter blocks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrueHyper {
    pub lambda: GammaHyper,
    pub delta: GammaHyper,
    pub theta: GammaHyper,
    pub nu: GammaHyper,
}

impl TrueHyper {
    /// Values used by the reference simulation study.
    pub fn reference() -> Self {
        Self {
            lambda: GammaHyper::new(2.85, 5.62),
            delta: GammaHyper::new(12.37, 3.71),
            theta: GammaHyper::new(1.11, 11.11),
            nu: GammaHyper::new(10.12, 3.35),
        }
    }

    /// Hyperparameter names in reporting order.
    pub const NAMES: [&'static str; 8] =
        ["a_lambda", "b_lambda", "a_delta", "b_delta", "a_theta", "b_theta", "a_nu", "b_nu"];

    pub fn as_array(&self) -> [f64; 8] {
        [
            self.lambda.shape,
            self.lambda.rate,
            self.delta.shape,
            self.delta.rate,
            self.theta.shape,
            self.theta.rate,
            self.nu.shape,
            self.nu.rate,
        ]
    }
}

/// Exposed population per (age class, month), both 0-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationTable {
    pub values: Vec<Vec<u64>>,
}

impl PopulationTable {
    /// Synthetic seven-class, twelve-month exposure table of a small
    /// self-administered health plan: a few hundred insureds per class,
    /// fewer in the oldest classes, with slow monthly growth.
    pub fn bundled() -> Self {
        let base = [420u64, 310, 265, 240, 205, 150, 95];
        let values = base
            .iter()
            .map(|&b| (0..12u64).map(|t| b + (b * t) / 150).collect())
            .collect();
        Self { values }
    }

    pub fn n_age_classes(&self) -> usize {
        self.values.len()
    }

    pub fn n_months(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.n_months();
        if self.values.is_empty() || t == 0 {
            return Err(Error::Config("population table is empty".into()));
        }
        if self.values.iter().any(|row| row.len() != t || row.contains(&0)) {
            return Err(Error::Config("population table must be rectangular and strictly positive".into()));
        }
        Ok(())
    }

    /// Population in the last month for each class.
    pub fn last(&self) -> Vec<u64> {
        self.values.iter().map(|r| *r.last().expect("nonempty")).collect()
    }
}

/// A generated portfolio together with the parameters that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedDataset {
    pub data: PortfolioData,
    pub truth: ParameterState,
}

/// Draws per-class parameters from the generating Gamma priors and then a
/// full portfolio from the log-t / negative binomial model.
pub fn generate_dataset(truth: &TrueHyper, populations: &PopulationTable, seed: u64) -> Result<SimulatedDataset> {
    populations.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let a = populations.n_age_classes();
    let mut draw_block = |h: GammaHyper| -> Result<BlockState> {
        let g = Gamma::new(h.shape, 1.0 / h.rate).map_err(|e| Error::Domain(e.to_string()))?;
        Ok(BlockState { values: (0..a).map(|_| g.sample(&mut rng).max(f64::MIN_POSITIVE)).collect(), hyper: h })
    };
    let state = ParameterState {
        lambda: draw_block(truth.lambda)?,
        theta: draw_block(truth.theta)?,
        nu: Some(draw_block(truth.nu)?),
        delta: Some(draw_block(truth.delta)?),
    };
    let spec: ModelSpec = ModelSpec::ALL[5];
    let mut records = Vec::with_capacity(a * populations.n_months());
    for (ai, row) in populations.values.iter().enumerate() {
        let p = state.class(ai);
        for (t, &pop) in row.iter().enumerate() {
            let n = sample_count(&spec, &p, pop as f64, &mut rng)?;
            let x = sample_total(&spec, &p, n, &mut rng)?;
            records.push(Record {
                service: 1,
                age_class: ai + 1,
                month: t + 1,
                n_claims: n,
                claim_total: x,
                population: pop,
            });
        }
    }
    Ok(SimulatedDataset { data: PortfolioData::new(records)?, truth: state })
}

/// Portfolio with `n_services` independently generated services (ids
/// `1..=n_services`), each drawn as in [`generate_dataset`].
pub fn generate_portfolio(
    truth: &TrueHyper,
    populations: &PopulationTable,
    n_services: u32,
    seed: u64,
) -> Result<PortfolioData> {
    let mut records = Vec::new();
    for s in 1..=n_services {
        let ds = generate_dataset(truth, populations, seed.wrapping_add(u64::from(s) - 1))?;
        records.extend(ds.data.records().iter().map(|r| Record { service: s, ..*r }));
    }
    PortfolioData::new(records)
}

/// Settings of a simulation-recovery study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub n_datasets: usize,
    pub truth: TrueHyper,
    pub populations: PopulationTable,
    pub sampler: SamplerConfig,
    pub prior: PriorConfig,
    /// Months over which premiums and realized claims are accumulated.
    pub horizon: usize,
    pub quantile_level: f64,
    /// Fits whose largest split-R̂ exceeds this are refitted once with
    /// doubled iterations, then excluded if they still fail.
    pub max_rhat: f64,
    pub seed: u64,
}

impl StudyConfig {
    pub fn new(n_datasets: usize, sampler: SamplerConfig, seed: u64) -> Self {
        Self {
            n_datasets,
            truth: TrueHyper::reference(),
            populations: PopulationTable::bundled(),
            sampler,
            prior: PriorConfig::gamma(),
            horizon: 12,
            quantile_level: 0.95,
            max_rhat: 1.1,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_datasets < 2 {
            return Err(Error::Config("a study needs at least two datasets".into()));
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least one month".into()));
        }
        if !(self.quantile_level > 0.0 && self.quantile_level < 1.0) {
            return Err(Error::Config("quantile level must lie in (0, 1)".into()));
        }
        if !(self.max_rhat >= 1.0 && self.max_rhat.is_finite()) {
            return Err(Error::Config(format!("R-hat threshold must be finite and at least 1, got {}", self.max_rhat)));
        }
        for h in self.truth.as_array() {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::Config("true hyperparameters must be positive".into()));
            }
        }
        self.populations.validate()?;
        self.sampler.validate()
    }

    /// Seed of dataset `index`; also seeds its fit and predictive draws.
    pub fn dataset_seed(&self, index: usize) -> u64 {
        self.seed.wrapping_add((index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FitStatus {
    Converged,
    /// Converged only after the refit with doubled iterations.
    Refitted,
    Excluded,
}

/// Result of one study dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetOutcome {
    pub index: usize,
    pub seed: u64,
    pub status: FitStatus,
    /// Largest split-R̂ of the last fit; absent when it could not be
    /// computed or was not finite.
    pub max_rhat: Option<f64>,
    /// Why the dataset was excluded, if it was.
    pub reason: Option<String>,
    /// Posterior means of the hyperparameters, in `TrueHyper::NAMES` order.
    pub estimates: Vec<f64>,
    /// Fitted premium per age class.
    pub premiums: Vec<f64>,
    /// Per-insured claims over the horizon simulated from the dataset's
    /// true parameters.
    pub realized: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub names: Vec<String>,
    pub truth: Vec<f64>,
    /// `100 · mean(θ̂ - θ) / θ`
    pub mrb_percent: Vec<f64>,
    /// `100 · mean((θ̂ - θ)²)`
    pub mse_percent: Vec<f64>,
    /// `100 · mean(((θ̂ - θ) / θ)²)`, the scale-free companion of `mse_percent`.
    pub relative_mse_percent: Vec<f64>,
    /// Share of datasets, per age class, whose realized claims exceed the
    /// fitted premium.
    pub u_a_percent: Vec<f64>,
    pub n_included: usize,
    pub n_excluded: usize,
    pub datasets: Vec<DatasetOutcome>,
}

impl StudyReport {
    pub fn mean_u_a(&self) -> f64 {
        self.u_a_percent.iter().sum::<f64>() / self.u_a_percent.len().max(1) as f64
    }
}

/// Mean relative bias, mean squared error and relative mean squared error
/// (all in percent) of `estimates[s][k]` against `truth[k]`.
pub fn recovery_metrics(truth: &[f64], estimates: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    if estimates.is_empty() {
        return Err(Error::EmptySamples);
    }
    if estimates.iter().any(|e| e.len() != truth.len()) {
        return Err(Error::Config("estimate vectors must match the truth length".into()));
    }
    let s = estimates.len() as f64;
    let mut mrb = Vec::with_capacity(truth.len());
    let mut mse = Vec::with_capacity(truth.len());
    let mut rel = Vec::with_capacity(truth.len());
    for (k, &t) in truth.iter().enumerate() {
        let bias: f64 = estimates.iter().map(|e| e[k] - t).sum();
        let sq: f64 = estimates.iter().map(|e| (e[k] - t).powi(2)).sum();
        mrb.push(100.0 * bias / (t * s));
        mse.push(100.0 * sq / s);
        rel.push(100.0 * sq / (t * t * s));
    }
    Ok((mrb, mse, rel))
}

fn build_report(cfg: &StudyConfig, mut datasets: Vec<DatasetOutcome>) -> Result<StudyReport> {
    datasets.sort_by_key(|d| d.index);
    let included: Vec<&DatasetOutcome> = datasets.iter().filter(|d| d.status != FitStatus::Excluded).collect();
    let truth = cfg.truth.as_array().to_vec();
    let a = cfg.populations.n_age_classes();
    let (mrb, mse, rel, u_a) = if included.is_empty() {
        let nan = vec![f64::NAN; truth.len()];
        (nan.clone(), nan.clone(), nan, vec![f64::NAN; a])
    } else {
        let est: Vec<Vec<f64>> = included.iter().map(|d| d.estimates.clone()).collect();
        let (mrb, mse, rel) = recovery_metrics(&truth, &est)?;
        let u_a = (0..a)
            .map(|c| {
                let hits = included.iter().filter(|d| d.realized[c] > d.premiums[c]).count();
                100.0 * hits as f64 / included.len() as f64
            })
            .collect();
        (mrb, mse, rel, u_a)
    };
    Ok(StudyReport {
        names: TrueHyper::NAMES.iter().map(|s| s.to_string()).collect(),
        truth,
        mrb_percent: mrb,
        mse_percent: mse,
        relative_mse_percent: rel,
        u_a_percent: u_a,
        n_included: included.len(),
        n_excluded: datasets.len() - included.len(),
        datasets,
    })
}

/// Fits one dataset, refitting once with doubled iterations when R̂ is too
/// large.
fn fit_converged(
    data: &PortfolioData,
    cfg: &StudyConfig,
    seed: u64,
) -> (Result<crate::inference::ChainDraws>, FitStatus, f64) {
    let spec = ModelSpec::ALL[5];
    let mut sampler = SamplerConfig { seed, ..cfg.sampler };
    let mut max_rhat = f64::NAN;
    for (attempt, status) in [FitStatus::Converged, FitStatus::Refitted].into_iter().enumerate() {
        if attempt == 1 {
            sampler.n_iterations *= 2;
            sampler.n_burnin *= 2;
        }
        let draws = match run_chains(data, spec, cfg.prior, &sampler) {
            Ok(d) => d,
            Err(e) => return (Err(e), FitStatus::Excluded, max_rhat),
        };
        max_rhat = match compute_diagnostics(&draws) {
            Ok(d) => d.max_rhat(),
            Err(e) => return (Err(e), FitStatus::Excluded, max_rhat),
        };
        if max_rhat <= cfg.max_rhat {
            return (Ok(draws), status, max_rhat);
        }
    }
    let msg = format!("split R-hat {max_rhat:.3} above {} after refit", cfg.max_rhat);
    (Err(Error::Convergence(msg)), FitStatus::Excluded, max_rhat)
}

/// Runs the whole pipeline for dataset `index`. Fit failures become an
/// excluded outcome; only generation errors propagate.
pub fn run_dataset(cfg: &StudyConfig, index: usize) -> Result<DatasetOutcome> {
    let seed = cfg.dataset_seed(index);
    let ds = generate_dataset(&cfg.truth, &cfg.populations, seed)?;
    let future = cfg.populations.last();

    // realized claims come from the generating parameters on their own stream
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    let spec = ModelSpec::ALL[5];
    let realized = (0..future.len())
        .map(|c| {
            let x = simulate_class_totals(&spec, &ds.truth, c, future[c] as f64, cfg.horizon, &mut rng)?;
            Ok(x / future[c] as f64)
        })
        .collect::<Result<Vec<f64>>>()?;

    let (fit, status, max_rhat) = fit_converged(&ds.data, cfg, seed);
    let mut out = DatasetOutcome {
        index,
        seed,
        status,
        max_rhat: max_rhat.is_finite().then_some(max_rhat),
        reason: None,
        estimates: Vec::new(),
        premiums: Vec::new(),
        realized,
    };
    let draws = match fit {
        Ok(d) => d,
        Err(e) => {
            out.status = FitStatus::Excluded;
            out.reason = Some(e.to_string());
            return Ok(out);
        }
    };
    let mean = draws.posterior_mean();
    let est: Option<Vec<f64>> = TrueHyper::NAMES.iter().map(|n| draws.index_of(n).map(|j| mean[j])).collect();
    out.estimates = est.ok_or_else(|| Error::Sampler("fitted layout lacks a hyperparameter".into()))?;
    let pcfg = PredictiveConfig {
        quantile_level: cfg.quantile_level,
        seed,
        ..PredictiveConfig::new(cfg.horizon, future)
    };
    out.premiums = premium(&draw_predictive(&draws, &pcfg)?, cfg.quantile_level)?;
    Ok(out)
}

const CHECKPOINT_CONFIG: &str = "study_config.json";
const CHECKPOINT_OUTCOMES: &str = "study_outcomes.jsonl";

fn load_checkpoint(dir: &Path, cfg: &StudyConfig) -> Result<Vec<DatasetOutcome>> {
    let cfg_path = dir.join(CHECKPOINT_CONFIG);
    if cfg_path.exists() {
        let saved: StudyConfig = serde_json::from_str(&fs::read_to_string(&cfg_path)?)?;
        if saved != *cfg {
            return Err(Error::Config(format!(
                "checkpoint in {} was written with a different study configuration",
                dir.display()
            )));
        }
    } else {
        fs::create_dir_all(dir)?;
        fs::write(&cfg_path, serde_json::to_string_pretty(cfg)?)?;
    }
    let path = dir.join(CHECKPOINT_OUTCOMES);
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut done = Vec::new();
    for line in BufReader::new(fs::File::open(&path)?).lines() {
        let line = line?;
        // a torn final line from an interrupted write is simply redone
        match serde_json::from_str::<DatasetOutcome>(&line) {
            Ok(o) if o.index < cfg.n_datasets => done.push(o),
            _ => continue,
        }
    }
    done.sort_by_key(|o| o.index);
    done.dedup_by_key(|o| o.index);
    Ok(done)
}

/// Runs the study over all datasets in parallel. With a checkpoint
/// directory, every finished dataset is appended there and already
/// finished datasets are skipped on the next call.
pub fn run_study(cfg: &StudyConfig, checkpoint: Option<&Path>) -> Result<StudyReport> {
    cfg.validate()?;
    let done = match checkpoint {
        Some(dir) => load_checkpoint(dir, cfg)?,
        None => Vec::new(),
    };
    let todo: Vec<usize> = (0..cfg.n_datasets).filter(|i| !done.iter().any(|o| o.index == *i)).collect();
    let sink = match checkpoint {
        Some(dir) => {
            Some(Mutex::new(OpenOptions::new().create(true).append(true).open(dir.join(CHECKPOINT_OUTCOMES))?))
        }
        None => None,
    };
    let fresh: Vec<DatasetOutcome> = todo
        .par_iter()
        .map(|&i| {
            let out = run_dataset(cfg, i)?;
            if let Some(sink) = &sink {
                let line = serde_json::to_string(&out)?;
                let mut f = sink.lock().map_err(|_| Error::Sampler("checkpoint lock poisoned".into()))?;
                writeln!(f, "{line}")?;
                f.flush()?;
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    build_report(cfg, done.into_iter().chain(fresh).collect())
}
