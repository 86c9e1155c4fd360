//! Command implementations behind the `crisk` binary.
//!
//! Each command reads a portfolio, fits the requested models (per service
//! unless pooled), and writes deterministic CSV/JSON payloads into the
//! output directory. Timestamps go only to a `<command>.meta.json` sidecar.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{compute_diagnostics, run_chains, ChainDraws, Diagnostics, SamplerConfig};
use crate::io::report::{
    autocorr_rows, diagnostic_rows, emit_plot_data, save_table, study_rows, write_correlation, write_metadata,
    CvRow, PlotKind, PremiumRow, QuantileRow, ReportBundle, RiskRow, RunMetadata, AUTOCORR_HEADER, BOX_LEVELS,
    COMPARISON_HEADER, CV_HEADER, DIAGNOSTIC_HEADER, PREMIUM_HEADER, PROTECTION_HEADER, QUANTILE_HEADER,
    RISK_HEADER, STUDY_HEADER,
};
use crate::io::{load_draws, load_portfolio, save_draws};
use crate::model::{ModelSpec, PortfolioData, PriorConfig};
use crate::risk::{
    coefficient_of_variation, draw_predictive_aggregated, overdispersion_by_class, premium_bands, risk_curve,
    value_at_risk, PredictiveConfig, PredictiveSamples,
};
use crate::selection::ModelScore;
use crate::simulation::{run_study, StudyConfig, StudyReport};

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_CONVERGENCE: i32 = 4;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_CONFIG,
        Error::Data(_) | Error::DataRow { .. } | Error::Format(_) | Error::Csv(_) => EXIT_DATA,
        Error::Convergence(_) => EXIT_CONVERGENCE,
        _ => EXIT_FAILURE,
    }
}

/// `M1`..`M6` or `all`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSelection(pub Vec<ModelSpec>);

impl FromStr for ModelSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("all") {
            return Ok(Self(ModelSpec::ALL.to_vec()));
        }
        let specs = s
            .split(',')
            .map(|m| m.trim().parse::<ModelSpec>().map_err(|_| Error::Config(format!("unknown model {m:?}"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self(specs))
    }
}

/// Levels for risk curves: either a count `n` giving `1/n, ..., (n-1)/n`,
/// or an explicit comma-separated list.
pub fn parse_tau_grid(s: &str) -> Result<Vec<f64>> {
    let taus: Vec<f64> = if s.contains(',') {
        s.split(',')
            .map(|t| t.trim().parse().map_err(|_| Error::Config(format!("bad level {t:?} in tau grid"))))
            .collect::<Result<_>>()?
    } else {
        let n: usize = s.trim().parse().map_err(|_| Error::Config(format!("bad tau grid {s:?}")))?;
        if n < 2 {
            return Err(Error::Config("tau grid needs n >= 2".into()));
        }
        crate::risk::tau_grid(n)
    };
    if taus.is_empty() || taus.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
        return Err(Error::Config("tau levels must lie in (0, 1)".into()));
    }
    Ok(taus)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub models: Vec<ModelSpec>,
    pub prior: PriorConfig,
    pub sampler: SamplerConfig,
    pub input: PathBuf,
    pub out: PathBuf,
    /// Months accumulated in premiums and risk measures.
    pub horizon: usize,
    pub tau_grid: Vec<f64>,
    /// Fit one model to all services summed together instead of per service.
    pub pooled: bool,
    /// Fits with a larger split-R̂ are reported as convergence failures.
    pub max_rhat: f64,
    /// Replicate pairs per posterior draw in CRPS.
    pub crps_replicates: usize,
    pub quantile_level: f64,
}

impl RunConfig {
    pub fn new(input: PathBuf, out: PathBuf) -> Self {
        Self {
            models: ModelSpec::ALL.to_vec(),
            prior: PriorConfig::gamma(),
            sampler: SamplerConfig::default(),
            input,
            out,
            horizon: 12,
            tau_grid: crate::risk::tau_grid(100),
            pooled: false,
            max_rhat: 1.1,
            crps_replicates: 1,
            quantile_level: 0.95,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(Error::Config("no models selected".into()));
        }
        if !self.input.exists() {
            return Err(Error::Config(format!("input {} does not exist", self.input.display())));
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least one month".into()));
        }
        if self.crps_replicates == 0 {
            return Err(Error::Config("CRPS needs at least one replicate per draw".into()));
        }
        if !(self.quantile_level > 0.0 && self.quantile_level < 1.0) {
            return Err(Error::Config("quantile level must lie in (0, 1)".into()));
        }
        self.sampler.validate()
    }
}

/// What a command wrote. `convergence_failures` lists fits above the R̂
/// threshold; `warnings` carries everything else worth reporting.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub convergence_failures: Vec<String>,
    pub warnings: Vec<String>,
}

/// One fitted (model, service) pair.
pub struct Fit {
    pub spec: ModelSpec,
    /// Service id as text, or `pooled`.
    pub service: String,
    pub data: PortfolioData,
    pub draws: ChainDraws,
    pub diagnostics: Diagnostics,
}

/// Portfolios to fit separately, labelled by service.
pub fn fitting_units(data: &PortfolioData, pooled: bool) -> Result<Vec<(String, PortfolioData)>> {
    if data.is_empty() {
        return Err(Error::Data("portfolio has no records".into()));
    }
    if pooled {
        return Ok(vec![("pooled".into(), data.pooled())]);
    }
    data.services().into_iter().map(|s| Ok((s.to_string(), data.service(s)?))).collect()
}

/// Fits every selected model to every fitting unit. Unit `k` uses sampler
/// seed `seed + k`.
pub fn fit_models(cfg: &RunConfig, data: &PortfolioData) -> Result<Vec<Fit>> {
    let units = fitting_units(data, cfg.pooled)?;
    let mut fits = Vec::new();
    for &spec in &cfg.models {
        for (k, (service, unit)) in units.iter().enumerate() {
            let sampler = SamplerConfig { seed: cfg.sampler.seed.wrapping_add(k as u64), ..cfg.sampler };
            let draws = run_chains(unit, spec, cfg.prior, &sampler)?;
            let diagnostics = compute_diagnostics(&draws)?;
            fits.push(Fit { spec, service: service.clone(), data: unit.clone(), draws, diagnostics });
        }
    }
    Ok(fits)
}

fn fit_outcome(cfg: &RunConfig, fits: &[Fit], files: Vec<PathBuf>) -> Outcome {
    let mut out = Outcome { files, ..Default::default() };
    for f in fits {
        let r = f.diagnostics.max_rhat();
        if !(r <= cfg.max_rhat) {
            out.convergence_failures
                .push(format!("{} service {}: max split R-hat {r:.3} exceeds {}", f.spec, f.service, cfg.max_rhat));
        }
        out.warnings.extend(f.draws.warnings.iter().map(|w| format!("service {}: {w}", f.service)));
    }
    out
}

fn prepare(cfg: &RunConfig) -> Result<PortfolioData> {
    cfg.validate()?;
    let data = load_portfolio(&cfg.input)?;
    fs::create_dir_all(&cfg.out)?;
    Ok(data)
}

fn finish(command: &str, out: &Path, started: Instant, mut outcome: Outcome) -> Result<Outcome> {
    let finished_unix = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let meta = RunMetadata {
        command: command.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        finished_unix,
        elapsed_seconds: started.elapsed().as_secs_f64(),
        files: outcome
            .files
            .iter()
            .map(|p| p.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned()))
            .collect(),
    };
    write_metadata(out, &meta)?;
    outcome.files.push(out.join(format!("{command}.meta.json")));
    Ok(outcome)
}

fn write_diagnostics(out: &Path, tag: &str, model: &str, service: &str, d: &Diagnostics) -> Result<Vec<PathBuf>> {
    let diag = out.join(format!("diagnostics_{tag}.csv"));
    save_table(&diag, &DIAGNOSTIC_HEADER, &diagnostic_rows(model, service, d))?;
    let acf = out.join(format!("autocorr_{tag}.csv"));
    save_table(&acf, &AUTOCORR_HEADER, &autocorr_rows(model, service, d))?;
    let corr = out.join(format!("correlation_{tag}.csv"));
    write_correlation(fs::File::create(&corr)?, d)?;
    Ok(vec![diag, acf, corr])
}

/// Draw file name of a (model, service) fit.
pub fn draws_file_name(spec: ModelSpec, service: &str) -> String {
    format!("draws_{}_{service}.csv", spec.name())
}

/// Fits and persists draws plus diagnostics for every model and service.
pub fn cmd_fit(cfg: &RunConfig) -> Result<Outcome> {
    let started = Instant::now();
    let data = prepare(cfg)?;
    let fits = fit_models(cfg, &data)?;
    let mut outcome = fit_outcome(cfg, &fits, Vec::new());
    for f in &fits {
        let path = cfg.out.join(draws_file_name(f.spec, &f.service));
        save_draws(&f.draws, &path)?;
        outcome.files.push(path);
        let tag = format!("{}_{}", f.spec.name(), f.service);
        outcome.files.extend(write_diagnostics(&cfg.out, &tag, f.spec.name(), &f.service, &f.diagnostics)?);
    }
    finish("fit", &cfg.out, started, outcome)
}

/// Scores for each model, combined over services.
pub fn compare_fits(cfg: &RunConfig, fits: &[Fit]) -> Result<Vec<ModelScore>> {
    cfg.models
        .iter()
        .map(|spec| {
            let parts = fits
                .iter()
                .filter(|f| f.spec == *spec)
                .enumerate()
                .map(|(k, f)| {
                    ModelScore::score(&f.draws, &f.data, cfg.crps_replicates, cfg.sampler.seed.wrapping_add(k as u64))
                })
                .collect::<Result<Vec<_>>>()?;
            ModelScore::combine(&parts)
        })
        .collect()
}

pub fn cmd_compare(cfg: &RunConfig) -> Result<Outcome> {
    let started = Instant::now();
    let data = prepare(cfg)?;
    let fits = fit_models(cfg, &data)?;
    let scores = compare_fits(cfg, &fits)?;
    let path = cfg.out.join("comparison.csv");
    save_table(&path, &COMPARISON_HEADER, &scores)?;
    let outcome = fit_outcome(cfg, &fits, vec![path]);
    finish("compare", &cfg.out, started, outcome)
}

/// Posterior predictive per-insured claims of one model, with totals
/// aggregated over that model's per-service fits.
pub fn predictive_for(cfg: &RunConfig, fits: &[Fit], spec: ModelSpec, horizon: usize) -> Result<PredictiveSamples> {
    let parts: Vec<(&ChainDraws, PredictiveConfig)> = fits
        .iter()
        .filter(|f| f.spec == spec)
        .enumerate()
        .map(|(k, f)| {
            let pcfg = PredictiveConfig {
                quantile_level: cfg.quantile_level,
                seed: cfg.sampler.seed.wrapping_add(1 + k as u64),
                ..PredictiveConfig::new(horizon, f.data.last_population())
            };
            (&f.draws, pcfg)
        })
        .collect();
    draw_predictive_aggregated(&parts)
}

pub fn premium_rows(model: &str, samples: &PredictiveSamples, level: f64) -> Result<Vec<PremiumRow>> {
    Ok(premium_bands(samples, level, 0.025, 0.975)?
        .into_iter()
        .enumerate()
        .map(|(a, b)| PremiumRow { model: model.to_string(), age_class: a + 1, l_i: b.lower, p: b.premium, l_u: b.upper })
        .collect())
}

fn quantile_rows(model: &str, samples: &PredictiveSamples) -> Result<Vec<QuantileRow>> {
    let mut rows = Vec::new();
    for (a, r) in samples.r_samples.iter().enumerate() {
        for level in BOX_LEVELS {
            rows.push(QuantileRow {
                model: model.to_string(),
                age_class: a + 1,
                level,
                value: value_at_risk(r, level)?,
            });
        }
    }
    Ok(rows)
}

pub fn cmd_premium(cfg: &RunConfig) -> Result<Outcome> {
    let started = Instant::now();
    let data = prepare(cfg)?;
    let fits = fit_models(cfg, &data)?;
    let mut rows = Vec::new();
    let mut bundle = ReportBundle::default();
    for &spec in &cfg.models {
        let samples = predictive_for(cfg, &fits, spec, cfg.horizon)?;
        rows.extend(premium_rows(spec.name(), &samples, cfg.quantile_level)?);
        bundle.premium_quantiles.extend(quantile_rows(spec.name(), &samples)?);
    }
    let path = cfg.out.join("premium.csv");
    save_table(&path, &PREMIUM_HEADER, &rows)?;
    let quant = cfg.out.join("premium_quantiles.csv");
    save_table(&quant, &QUANTILE_HEADER, &bundle.premium_quantiles)?;
    let plot = emit_plot_data(&bundle, PlotKind::PremiumBox, &cfg.out)?;
    let outcome = fit_outcome(cfg, &fits, vec![path, quant, plot]);
    finish("premium", &cfg.out, started, outcome)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverdispersionRow {
    pub model: String,
    pub service: String,
    pub age_class: usize,
    pub factor: f64,
}

pub const OVERDISPERSION_HEADER: [&str; 4] = ["model", "service", "age_class", "factor"];

pub fn risk_rows(model: &str, samples: &PredictiveSamples, taus: &[f64]) -> Result<Vec<RiskRow>> {
    let mut rows = Vec::new();
    for (a, r) in samples.r_samples.iter().enumerate() {
        for p in risk_curve(r, taus)? {
            rows.push(RiskRow { model: model.to_string(), age_class: a + 1, tau: p.tau, var: p.var, tvar: p.tvar, es: p.es });
        }
    }
    Ok(rows)
}

/// CV of accumulated per-insured claims for horizons `1..=horizon`.
/// Classes whose predictive mean is zero are skipped.
pub fn cv_rows(cfg: &RunConfig, fits: &[Fit], spec: ModelSpec) -> Result<Vec<CvRow>> {
    let mut rows = Vec::new();
    for month in 1..=cfg.horizon {
        let samples = predictive_for(cfg, fits, spec, month)?;
        for (a, r) in samples.r_samples.iter().enumerate() {
            match coefficient_of_variation(r) {
                Ok(cv) => rows.push(CvRow { model: spec.name().to_string(), age_class: a + 1, month, cv }),
                Err(Error::Domain(_)) => continue,
                Err(e) => return Err(e),
            }
        }
    }
    Ok(rows)
}

pub fn cmd_risk(cfg: &RunConfig) -> Result<Outcome> {
    let started = Instant::now();
    let data = prepare(cfg)?;
    let fits = fit_models(cfg, &data)?;
    let mut bundle = ReportBundle::default();
    let mut od = Vec::new();
    for &spec in &cfg.models {
        let samples = predictive_for(cfg, &fits, spec, cfg.horizon)?;
        bundle.risk.extend(risk_rows(spec.name(), &samples, &cfg.tau_grid)?);
        bundle.cv.extend(cv_rows(cfg, &fits, spec)?);
        for f in fits.iter().filter(|f| f.spec == spec) {
            let factors = overdispersion_by_class(&f.draws, &f.data.last_population())?;
            od.extend(factors.into_iter().enumerate().map(|(a, factor)| OverdispersionRow {
                model: spec.name().to_string(),
                service: f.service.clone(),
                age_class: a + 1,
                factor,
            }));
        }
    }
    let risk = cfg.out.join("risk.csv");
    save_table(&risk, &RISK_HEADER, &bundle.risk)?;
    let cv = cfg.out.join("cv.csv");
    save_table(&cv, &CV_HEADER, &bundle.cv)?;
    let odp = cfg.out.join("overdispersion.csv");
    save_table(&odp, &OVERDISPERSION_HEADER, &od)?;
    let mut files = vec![risk, cv, odp];
    for kind in [PlotKind::VarCurve, PlotKind::TvarCurve, PlotKind::CvCurve] {
        files.push(emit_plot_data(&bundle, kind, &cfg.out)?);
    }
    let outcome = fit_outcome(cfg, &fits, files);
    finish("risk", &cfg.out, started, outcome)
}

/// Runs the simulation study, checkpointing into `out/study_checkpoint`.
/// Without `resume` any earlier checkpoint is discarded first.
pub fn cmd_simulate(study: &StudyConfig, out: &Path, resume: bool) -> Result<(Outcome, StudyReport)> {
    let started = Instant::now();
    fs::create_dir_all(out)?;
    let ckpt = out.join("study_checkpoint");
    if !resume && ckpt.exists() {
        fs::remove_dir_all(&ckpt)?;
    }
    let report = run_study(study, Some(&ckpt))?;
    let (rows, prot) = study_rows(&report);
    let s = out.join("study.csv");
    save_table(&s, &STUDY_HEADER, &rows)?;
    let p = out.join("protection.csv");
    save_table(&p, &PROTECTION_HEADER, &prot)?;
    let j = out.join("study.json");
    fs::write(&j, serde_json::to_string_pretty(&report)?)?;
    let warnings = report
        .datasets
        .iter()
        .filter_map(|d| d.reason.as_ref().map(|r| format!("dataset {} excluded: {r}", d.index)))
        .collect();
    let outcome = Outcome { files: vec![s, p, j], warnings, ..Default::default() };
    let outcome = finish("simulate", out, started, outcome)?;
    Ok((outcome, report))
}

/// Diagnostics for saved draw files: `input` is one draw file or a
/// directory whose `draws_*.csv` files are all read.
pub fn cmd_diagnose(input: &Path, out: &Path, max_rhat: f64) -> Result<Outcome> {
    let started = Instant::now();
    let paths: Vec<PathBuf> = if input.is_dir() {
        let mut v: Vec<PathBuf> = fs::read_dir(input)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("draws_") && n.ends_with(".csv"))
            })
            .collect();
        v.sort();
        v
    } else if input.exists() {
        vec![input.to_path_buf()]
    } else {
        return Err(Error::Config(format!("input {} does not exist", input.display())));
    };
    if paths.is_empty() {
        return Err(Error::Data(format!("no draw files found in {}", input.display())));
    }
    fs::create_dir_all(out)?;
    let mut outcome = Outcome::default();
    for path in paths {
        let draws = load_draws(&path)?;
        let d = compute_diagnostics(&draws)?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("draws");
        let tag = stem.strip_prefix("draws_").unwrap_or(stem);
        let service = tag.split_once('_').map_or("", |(_, s)| s);
        if !(d.max_rhat() <= max_rhat) {
            outcome
                .convergence_failures
                .push(format!("{}: max split R-hat {:.3} exceeds {max_rhat}", path.display(), d.max_rhat()));
        }
        outcome.files.extend(write_diagnostics(out, tag, draws.spec.name(), service, &d)?);
    }
    finish("diagnose", out, started, outcome)
}
