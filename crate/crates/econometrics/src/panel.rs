//! Long-form import transaction panel.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{EconError, Result};

/// Version tag written as the first line of every emitted table.
pub const SCHEMA_VERSION: u32 = 1;

pub fn schema_line(kind: &str) -> String {
    format!("# schema_version={SCHEMA_VERSION} table={kind}")
}

/// A firm's import flow from one supplier, of one product, from one source
/// country, in one period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transaction {
    pub firm: u32,
    pub supplier: u32,
    pub product: u32,
    pub country: u32,
    pub period: i32,
    pub value: f64,
    pub quantity: f64,
    pub unit_price: f64,
    /// Optional covariate, e.g. log bilateral real exchange rate.
    #[serde(default)]
    pub rer: Option<f64>,
}

/// The import instance a transaction belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Instance {
    pub firm: u32,
    pub supplier: u32,
    pub product: u32,
    pub country: u32,
}

impl Transaction {
    pub fn new(firm: u32, supplier: u32, product: u32, country: u32, period: i32, value: f64, quantity: f64) -> Self {
        Self { firm, supplier, product, country, period, value, quantity, unit_price: value / quantity, rer: None }
    }

    pub fn instance(&self) -> Instance {
        Instance { firm: self.firm, supplier: self.supplier, product: self.product, country: self.country }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TransactionPanel {
    pub records: Vec<Transaction>,
}

impl TransactionPanel {
    pub fn new(records: Vec<Transaction>) -> Result<Self> {
        let p = Self { records };
        p.validate()?;
        Ok(p)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::with_capacity(self.records.len());
        for r in &self.records {
            if !(r.value > 0.0 && r.value.is_finite()) || !(r.quantity > 0.0 && r.quantity.is_finite()) {
                return Err(EconError::InvalidPanel(format!(
                    "non-positive value or quantity for firm {} supplier {} period {}",
                    r.firm, r.supplier, r.period
                )));
            }
            let implied = r.value / r.quantity;
            if (r.unit_price - implied).abs() > 1e-9 * implied.max(1.0) {
                return Err(EconError::InvalidPanel(format!(
                    "unit price of firm {} supplier {} period {} inconsistent with value/quantity",
                    r.firm, r.supplier, r.period
                )));
            }
            if !seen.insert((r.instance(), r.period)) {
                return Err(EconError::InvalidPanel(format!(
                    "duplicate record for firm {} supplier {} product {} country {} period {}",
                    r.firm, r.supplier, r.product, r.country, r.period
                )));
            }
        }
        Ok(())
    }

    /// Sorts by period, then instance.
    pub fn sort(&mut self) {
        self.records.sort_by_key(|r| (r.period, r.instance()));
    }

    pub fn periods(&self) -> Vec<i32> {
        let mut p: Vec<i32> = self.records.iter().map(|r| r.period).collect();
        p.sort_unstable();
        p.dedup();
        p
    }

    /// Total import value per (firm, supplier, period).
    pub fn link_values(&self) -> BTreeMap<(u32, u32, i32), f64> {
        let mut m = BTreeMap::new();
        for r in &self.records {
            *m.entry((r.firm, r.supplier, r.period)).or_insert(0.0) += r.value;
        }
        m
    }

    /// Total import value per (firm, period).
    pub fn firm_values(&self) -> BTreeMap<(u32, i32), f64> {
        let mut m = BTreeMap::new();
        for r in &self.records {
            *m.entry((r.firm, r.period)).or_insert(0.0) += r.value;
        }
        m
    }

    /// CSV with a schema line, a header and one row per record.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", schema_line("transactions"))?;
        let mut w = csv::Writer::from_writer(out);
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a panel written by [`write_csv`](Self::write_csv). Unit prices
    /// are recomputed from value and quantity; further `#` lines are skipped.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut reader = BufReader::new(input);
        let mut first = String::new();
        reader.read_line(&mut first)?;
        let expected = format!("# schema_version={SCHEMA_VERSION}");
        if !first.trim_start().starts_with(&expected) {
            return Err(EconError::InvalidPanel(format!(
                "missing or unsupported schema line: {:?}",
                first.trim_end()
            )));
        }
        let mut rd = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(reader);
        let mut records = Vec::new();
        for row in rd.deserialize() {
            let mut r: Transaction = row?;
            r.unit_price = r.value / r.quantity;
            records.push(r);
        }
        Self::new(records)
    }
}
