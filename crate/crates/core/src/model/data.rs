use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One (service, age class, month) observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub service: u32,
    /// 1-based age class index.
    pub age_class: usize,
    /// 1-based month index.
    pub month: usize,
    pub n_claims: u64,
    pub claim_total: f64,
    pub population: u64,
}

impl Record {
    /// Checks the per-record invariants. Returns a message suitable for a
    /// row-level data error.
    pub fn check(&self) -> std::result::Result<(), String> {
        if self.age_class == 0 {
            return Err("age_class must be >= 1".into());
        }
        if self.month == 0 {
            return Err("month must be >= 1".into());
        }
        if self.population == 0 {
            return Err("population must be >= 1".into());
        }
        if !self.claim_total.is_finite() || self.claim_total < 0.0 {
            return Err(format!("claim_total must be finite and nonnegative, got {}", self.claim_total));
        }
        if self.n_claims == 0 && self.claim_total != 0.0 {
            return Err(format!(
                "claim_total {} with zero claims: the total must be 0 when no claims occur",
                self.claim_total
            ));
        }
        if self.n_claims > 0 && self.claim_total == 0.0 {
            return Err(format!("{} claims with a zero claim total", self.n_claims));
        }
        Ok(())
    }
}

/// Claim counts, totals and exposures indexed by service, age class and month.
///
/// Construction validates every invariant; a value of this type is always a
/// dense grid: each service carries every (age class, month) pair exactly once.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PortfolioData {
    records: Vec<Record>,
    n_age_classes: usize,
    n_months: usize,
}

impl PortfolioData {
    pub fn new(records: Vec<Record>) -> Result<Self> {
        for (i, r) in records.iter().enumerate() {
            r.check().map_err(|message| Error::DataRow { row: i + 2, message })?;
        }
        let mut seen = HashSet::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if !seen.insert((r.service, r.age_class, r.month)) {
                return Err(Error::DataRow {
                    row: i + 2,
                    message: format!(
                        "duplicate key (service {}, age_class {}, month {})",
                        r.service, r.age_class, r.month
                    ),
                });
            }
        }
        let n_age_classes = records.iter().map(|r| r.age_class).max().unwrap_or(0);
        let n_months = records.iter().map(|r| r.month).max().unwrap_or(0);
        let services: BTreeSet<u32> = records.iter().map(|r| r.service).collect();
        for s in &services {
            for a in 1..=n_age_classes {
                for t in 1..=n_months {
                    if !seen.contains(&(*s, a, t)) {
                        return Err(Error::Data(format!(
                            "sparse grid: service {s} has no record for age_class {a}, month {t}"
                        )));
                    }
                }
            }
        }
        Ok(Self { records, n_age_classes, n_months })
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn n_age_classes(&self) -> usize {
        self.n_age_classes
    }

    pub fn n_months(&self) -> usize {
        self.n_months
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn services(&self) -> Vec<u32> {
        let set: BTreeSet<u32> = self.records.iter().map(|r| r.service).collect();
        set.into_iter().collect()
    }

    /// Records of one service, as a standalone portfolio.
    pub fn service(&self, service: u32) -> Result<Self> {
        let recs: Vec<Record> = self.records.iter().copied().filter(|r| r.service == service).collect();
        if recs.is_empty() {
            return Err(Error::Data(format!("no records for service {service}")));
        }
        Self::new(recs)
    }

    /// Collapses all services into one by summing counts, totals and
    /// populations per (age class, month).
    pub fn pooled(&self) -> Self {
        let mut acc: BTreeMap<(usize, usize), Record> = BTreeMap::new();
        for r in &self.records {
            let e = acc.entry((r.age_class, r.month)).or_insert(Record {
                service: 1,
                age_class: r.age_class,
                month: r.month,
                n_claims: 0,
                claim_total: 0.0,
                population: 0,
            });
            e.n_claims += r.n_claims;
            e.claim_total += r.claim_total;
            e.population += r.population;
        }
        Self {
            records: acc.into_values().collect(),
            n_age_classes: self.n_age_classes,
            n_months: self.n_months,
        }
    }

    /// Latest population per age class (the exposure at the last month,
    /// summed over services).
    pub fn last_population(&self) -> Vec<u64> {
        let mut pops = vec![0u64; self.n_age_classes];
        for r in self.records.iter().filter(|r| r.month == self.n_months) {
            pops[r.age_class - 1] += r.population;
        }
        pops
    }
}
