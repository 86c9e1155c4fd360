//! Versioned, self-describing draw files.
//!
//! Layout (UTF-8 text, `\n` line endings):
//!
//! ```text
//! # collective-risk draws v1
//! # {"model":"M6","prior":{...},"n_age_classes":7,"n_chains":3,"n_draws":5000}
//! chain,iteration,log_post,lambda[1],...,b_delta
//! 0,0,-1523.25,0.41,...
//! ```
//!
//! Line 1 is the version tag, line 2 a JSON manifest, line 3 the column
//! header (the parameter-name manifest), then one row per kept draw in
//! chain-major order. `chain` and `iteration` are 0-based; `iteration`
//! counts post-burn-in draws. Values are natural-scale and written in the
//! shortest form that parses back to the identical `f64`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::ChainDraws;
use crate::model::{ModelSpec, PriorConfig};

pub const DRAWS_VERSION_LINE: &str = "# collective-risk draws v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    model: String,
    prior: PriorConfig,
    n_age_classes: usize,
    n_chains: usize,
    n_draws: usize,
}

pub fn write_draws<W: Write>(draws: &ChainDraws, writer: W) -> Result<()> {
    let mut w = BufWriter::new(writer);
    let manifest = Manifest {
        model: draws.spec.name().to_string(),
        prior: draws.prior,
        n_age_classes: draws.n_age_classes,
        n_chains: draws.n_chains(),
        n_draws: draws.n_draws(),
    };
    writeln!(w, "{DRAWS_VERSION_LINE}")?;
    writeln!(w, "# {}", serde_json::to_string(&manifest)?)?;
    let mut csv = csv::WriterBuilder::new().from_writer(w);
    let mut header = vec!["chain".to_string(), "iteration".into(), "log_post".into()];
    header.extend(draws.names.iter().cloned());
    csv.write_record(&header)?;
    let mut row = Vec::with_capacity(header.len());
    for (c, chain) in draws.draws.iter().enumerate() {
        for (i, d) in chain.iter().enumerate() {
            row.clear();
            row.push(c.to_string());
            row.push(i.to_string());
            row.push(format!("{:?}", draws.log_post[c][i]));
            row.extend(d.iter().map(|v| format!("{v:?}")));
            csv.write_record(&row)?;
        }
    }
    csv.flush()?;
    Ok(())
}

pub fn save_draws(draws: &ChainDraws, path: &Path) -> Result<()> {
    write_draws(draws, File::create(path)?)
}

fn parse_f64(s: &str, line: usize) -> Result<f64> {
    s.parse().map_err(|_| Error::Format(format!("line {line}: bad number {s:?}")))
}

/// Reads a draw file. Sampler statistics are not stored, so `stats` and
/// `warnings` come back empty.
pub fn read_draws<R: Read>(reader: R) -> Result<ChainDraws> {
    let mut r = BufReader::new(reader);
    let mut line = String::new();
    r.read_line(&mut line)?;
    if line.trim_end() != DRAWS_VERSION_LINE {
        return Err(Error::Format(format!("unsupported draw file version line {:?}", line.trim_end())));
    }
    line.clear();
    r.read_line(&mut line)?;
    let json = line
        .trim_end()
        .strip_prefix("# ")
        .ok_or_else(|| Error::Format("missing manifest line".into()))?;
    let m: Manifest = serde_json::from_str(json)?;
    let spec: ModelSpec = m.model.parse()?;
    let layout = crate::model::ParameterLayout::new(spec, m.prior, m.n_age_classes);
    let expected = layout.names();

    let mut csv = csv::ReaderBuilder::new().from_reader(r);
    let header: Vec<String> = csv.headers()?.iter().map(str::to_string).collect();
    if header.len() != expected.len() + 3 || header[..3] != ["chain", "iteration", "log_post"] || header[3..] != expected[..]
    {
        return Err(Error::Format("column header does not match the manifest".into()));
    }
    let mut draws = vec![Vec::with_capacity(m.n_draws); m.n_chains];
    let mut log_post = vec![Vec::with_capacity(m.n_draws); m.n_chains];
    for (k, rec) in csv.records().enumerate() {
        let rec = rec?;
        let line = k + 4;
        let chain: usize = rec[0].parse().map_err(|_| Error::Format(format!("line {line}: bad chain index")))?;
        let iter: usize = rec[1].parse().map_err(|_| Error::Format(format!("line {line}: bad iteration index")))?;
        if chain >= m.n_chains || iter != draws[chain].len() {
            return Err(Error::Format(format!("line {line}: draws out of order")));
        }
        log_post[chain].push(parse_f64(&rec[2], line)?);
        draws[chain].push(rec.iter().skip(3).map(|s| parse_f64(s, line)).collect::<Result<Vec<f64>>>()?);
    }
    if draws.iter().any(|c| c.len() != m.n_draws) {
        return Err(Error::Format("draw count does not match the manifest".into()));
    }
    Ok(ChainDraws {
        spec,
        prior: m.prior,
        n_age_classes: m.n_age_classes,
        names: expected,
        draws,
        log_post,
        stats: Vec::new(),
        warnings: Vec::new(),
    })
}

pub fn load_draws(path: &Path) -> Result<ChainDraws> {
    read_draws(File::open(path)?)
}
