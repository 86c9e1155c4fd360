//! Portfolio CSV ingestion and export.
//!
//! Header: `service,age_class,month,n_claims,claim_total,population`.
//! Claim totals are decimal strings parsed to the nearest `f64`; writing
//! uses the shortest representation that parses back to the same value.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{PortfolioData, Record};

pub const HEADER: [&str; 6] = ["service", "age_class", "month", "n_claims", "claim_total", "population"];

/// Parses a portfolio from any reader. Row numbers in errors count the
/// header as row 1.
pub fn read_portfolio<R: Read>(reader: R) -> Result<PortfolioData> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != HEADER {
        return Err(Error::Format(format!("expected header {}, found {}", HEADER.join(","), header.join(","))));
    }
    let mut records = Vec::new();
    for (i, row) in rdr.deserialize::<Record>().enumerate() {
        let row_no = i + 2;
        let rec = row.map_err(|e| Error::DataRow { row: row_no, message: e.to_string() })?;
        records.push(rec);
    }
    PortfolioData::new(records)
}

pub fn load_portfolio(path: &Path) -> Result<PortfolioData> {
    let file = File::open(path).map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    read_portfolio(file)
}

pub fn write_portfolio<W: Write>(data: &PortfolioData, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in data.records() {
        w.serialize(r)?;
    }
    if data.is_empty() {
        w.write_record(HEADER)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_portfolio(data: &PortfolioData, path: &Path) -> Result<()> {
    write_portfolio(data, File::create(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file() {
        let csv = "service,age_class,month,n_claims,claim_total,population\n1,1,1,2,130.5,400\n";
        let d = read_portfolio(csv.as_bytes()).unwrap();
        assert_eq!(d.records().len(), 1);
        assert_eq!(d.records()[0].claim_total, 130.5);
    }

    #[test]
    fn rejects_total_without_claims_with_row() {
        let csv = "service,age_class,month,n_claims,claim_total,population\n1,1,1,2,10,5\n1,1,2,0,3.5,5\n";
        match read_portfolio(csv.as_bytes()) {
            Err(Error::DataRow { row, message }) => {
                assert_eq!(row, 3);
                assert!(message.contains("zero claims"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_header_and_unparsable_rows() {
        assert!(matches!(read_portfolio("a,b\n1,2\n".as_bytes()), Err(Error::Format(_))));
        let csv = "service,age_class,month,n_claims,claim_total,population\n1,1,1,-2,10,5\n";
        assert!(matches!(read_portfolio(csv.as_bytes()), Err(Error::DataRow { row: 2, .. })));
    }
}
