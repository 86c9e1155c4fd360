//! Report tables and long-format plot data, written as CSV.
//!
//! Every table has a fixed header that is written even when the table has
//! no rows, and every file parses back to the same rows.

use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::Diagnostics;
use crate::selection::ModelScore;
use crate::simulation::StudyReport;

/// Writes `rows` under `header`; the header appears even with no rows.
pub fn write_table<W: Write, T: Serialize>(writer: W, header: &[&str], rows: &[T]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a table written by [`write_table`], checking its header.
pub fn read_table<R: Read, T: DeserializeOwned>(reader: R, header: &[&str]) -> Result<Vec<T>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let found: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if found != header {
        return Err(Error::Format(format!("expected header {}, found {}", header.join(","), found.join(","))));
    }
    Ok(rdr.deserialize().collect::<std::result::Result<_, _>>()?)
}

pub fn save_table<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<()> {
    write_table(File::create(path)?, header, rows)
}

pub fn load_table<T: DeserializeOwned>(path: &Path, header: &[&str]) -> Result<Vec<T>> {
    read_table(File::open(path)?, header)
}

pub const COMPARISON_HEADER: [&str; 7] = ["model", "d_bar", "d_at_mean", "p_d", "dic", "crps", "n_cells"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PremiumRow {
    pub model: String,
    pub age_class: usize,
    pub l_i: f64,
    #[serde(rename = "P")]
    pub p: f64,
    pub l_u: f64,
}

pub const PREMIUM_HEADER: [&str; 5] = ["model", "age_class", "l_i", "P", "l_u"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskRow {
    pub model: String,
    pub age_class: usize,
    pub tau: f64,
    pub var: f64,
    pub tvar: f64,
    pub es: f64,
}

pub const RISK_HEADER: [&str; 6] = ["model", "age_class", "tau", "var", "tvar", "es"];

/// Coefficient of variation of per-insured claims accumulated over the
/// first `month` months of the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub model: String,
    pub age_class: usize,
    pub month: usize,
    pub cv: f64,
}

pub const CV_HEADER: [&str; 4] = ["model", "age_class", "month", "cv"];

/// Predictive quantile of per-insured claims, for box plots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileRow {
    pub model: String,
    pub age_class: usize,
    pub level: f64,
    pub value: f64,
}

pub const QUANTILE_HEADER: [&str; 4] = ["model", "age_class", "level", "value"];

/// Levels summarised for premium box plots.
pub const BOX_LEVELS: [f64; 7] = [0.025, 0.25, 0.5, 0.75, 0.95, 0.975, 0.99];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRow {
    pub model: String,
    pub service: String,
    pub parameter: String,
    pub rhat: f64,
    pub ess: f64,
    pub geweke_z_min: f64,
    pub geweke_z_max: f64,
    pub autocorr_lag1: f64,
    pub autocorr_lag10: f64,
}

pub const DIAGNOSTIC_HEADER: [&str; 9] = [
    "model",
    "service",
    "parameter",
    "rhat",
    "ess",
    "geweke_z_min",
    "geweke_z_max",
    "autocorr_lag1",
    "autocorr_lag10",
];

pub fn diagnostic_rows(model: &str, service: &str, d: &Diagnostics) -> Vec<DiagnosticRow> {
    (0..d.names.len())
        .map(|j| {
            let z = &d.geweke_z[j];
            DiagnosticRow {
                model: model.to_string(),
                service: service.to_string(),
                parameter: d.names[j].clone(),
                rhat: d.rhat[j],
                ess: d.ess[j],
                geweke_z_min: z.iter().copied().fold(f64::INFINITY, f64::min),
                geweke_z_max: z.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                autocorr_lag1: d.lag_autocorr[j][0],
                autocorr_lag10: d.lag_autocorr[j].get(9).copied().unwrap_or(f64::NAN),
            }
        })
        .collect()
}

/// Lagged autocorrelations in long format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutocorrRow {
    pub model: String,
    pub service: String,
    pub parameter: String,
    pub lag: usize,
    pub autocorr: f64,
}

pub const AUTOCORR_HEADER: [&str; 5] = ["model", "service", "parameter", "lag", "autocorr"];

pub fn autocorr_rows(model: &str, service: &str, d: &Diagnostics) -> Vec<AutocorrRow> {
    d.names
        .iter()
        .zip(&d.lag_autocorr)
        .flat_map(|(name, acf)| {
            acf.iter().enumerate().map(move |(k, &r)| AutocorrRow {
                model: model.to_string(),
                service: service.to_string(),
                parameter: name.clone(),
                lag: k + 1,
                autocorr: r,
            })
        })
        .collect()
}

/// Writes the posterior correlation matrix with parameter names as the
/// first column and header.
pub fn write_correlation<W: Write>(writer: W, d: &Diagnostics) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["parameter".to_string()];
    header.extend(d.names.iter().cloned());
    w.write_record(&header)?;
    for (name, row) in d.names.iter().zip(&d.correlation) {
        let mut rec = vec![name.clone()];
        rec.extend(row.iter().map(|v| format!("{v:?}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub hyperparameter: String,
    pub truth: f64,
    pub mrb_percent: f64,
    pub mse_percent: f64,
    pub relative_mse_percent: f64,
}

pub const STUDY_HEADER: [&str; 5] = ["hyperparameter", "truth", "mrb_percent", "mse_percent", "relative_mse_percent"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtectionRow {
    pub age_class: usize,
    pub u_a_percent: f64,
}

pub const PROTECTION_HEADER: [&str; 2] = ["age_class", "u_a_percent"];

pub fn study_rows(r: &StudyReport) -> (Vec<StudyRow>, Vec<ProtectionRow>) {
    let rows = (0..r.names.len())
        .map(|k| StudyRow {
            hyperparameter: r.names[k].clone(),
            truth: r.truth[k],
            mrb_percent: r.mrb_percent[k],
            mse_percent: r.mse_percent[k],
            relative_mse_percent: r.relative_mse_percent[k],
        })
        .collect();
    let prot = r
        .u_a_percent
        .iter()
        .enumerate()
        .map(|(a, &u)| ProtectionRow { age_class: a + 1, u_a_percent: u })
        .collect();
    (rows, prot)
}

/// Report content that plot data can be drawn from. Missing parts emit
/// header-only files.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReportBundle {
    pub comparison: Vec<ModelScore>,
    pub premium_quantiles: Vec<QuantileRow>,
    pub risk: Vec<RiskRow>,
    pub cv: Vec<CvRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    /// Predictive quantiles per class for premium box plots.
    PremiumBox,
    VarCurve,
    TvarCurve,
    CvCurve,
}

impl PlotKind {
    pub const ALL: [PlotKind; 4] = [PlotKind::PremiumBox, PlotKind::VarCurve, PlotKind::TvarCurve, PlotKind::CvCurve];

    pub fn name(&self) -> &'static str {
        match self {
            PlotKind::PremiumBox => "premium-box",
            PlotKind::VarCurve => "var-curve",
            PlotKind::TvarCurve => "tvar-curve",
            PlotKind::CvCurve => "cv-curve",
        }
    }

    pub fn file_name(&self) -> String {
        format!("plot_{}.csv", self.name().replace('-', "_"))
    }

    pub fn header(&self) -> [&'static str; 4] {
        match self {
            PlotKind::PremiumBox => QUANTILE_HEADER,
            PlotKind::VarCurve | PlotKind::TvarCurve => ["model", "age_class", "tau", "value"],
            PlotKind::CvCurve => ["model", "age_class", "month", "value"],
        }
    }
}

impl FromStr for PlotKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown plot kind {s:?}")))
    }
}

/// One long-format plot row: `(model, age_class, key, value)` where the key
/// is a level, τ or month depending on the kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub model: String,
    pub age_class: usize,
    pub key: f64,
    pub value: f64,
}

pub fn plot_rows(bundle: &ReportBundle, kind: PlotKind) -> Vec<PlotRow> {
    let row = |model: &str, age_class, key, value| PlotRow { model: model.to_string(), age_class, key, value };
    match kind {
        PlotKind::PremiumBox => {
            bundle.premium_quantiles.iter().map(|q| row(&q.model, q.age_class, q.level, q.value)).collect()
        }
        PlotKind::VarCurve => bundle.risk.iter().map(|r| row(&r.model, r.age_class, r.tau, r.var)).collect(),
        PlotKind::TvarCurve => bundle.risk.iter().map(|r| row(&r.model, r.age_class, r.tau, r.tvar)).collect(),
        PlotKind::CvCurve => bundle.cv.iter().map(|c| row(&c.model, c.age_class, c.month as f64, c.cv)).collect(),
    }
}

pub fn write_plot_data<W: Write>(writer: W, bundle: &ReportBundle, kind: PlotKind) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    w.write_record(kind.header())?;
    for r in plot_rows(bundle, kind) {
        let key = if kind == PlotKind::CvCurve { (r.key as usize).to_string() } else { format!("{:?}", r.key) };
        w.write_record([r.model, r.age_class.to_string(), key, format!("{:?}", r.value)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_plot_data<R: Read>(reader: R, kind: PlotKind) -> Result<Vec<PlotRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let found: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if found != kind.header() {
        return Err(Error::Format(format!("unexpected header for {} data", kind.name())));
    }
    rdr.records()
        .map(|rec| {
            let rec = rec?;
            let num = |i: usize| -> Result<f64> {
                rec[i].parse().map_err(|_| Error::Format(format!("bad number {:?}", &rec[i])))
            };
            Ok(PlotRow {
                model: rec[0].to_string(),
                age_class: rec[1].parse().map_err(|_| Error::Format(format!("bad age class {:?}", &rec[1])))?,
                key: num(2)?,
                value: num(3)?,
            })
        })
        .collect()
}

/// Writes the plot data of `kind` into `dir` and returns the file path.
pub fn emit_plot_data(bundle: &ReportBundle, kind: PlotKind, dir: &Path) -> Result<PathBuf> {
    let path = dir.join(kind.file_name());
    write_plot_data(File::create(&path)?, bundle, kind)?;
    Ok(path)
}

/// Run metadata kept apart from the deterministic payload files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub command: String,
    pub version: String,
    /// Seconds since the Unix epoch at completion.
    pub finished_unix: u64,
    pub elapsed_seconds: f64,
    pub files: Vec<String>,
}

pub fn write_metadata(dir: &Path, meta: &RunMetadata) -> Result<()> {
    let path = dir.join(format!("{}.meta.json", meta.command));
    std::fs::write(path, serde_json::to_string_pretty(meta)?)?;
    Ok(())
}
