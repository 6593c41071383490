//! Instance-level price changes between consecutive periods.

use std::collections::HashMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::panel::{schema_line, Instance, TransactionPanel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriceDefinition {
    /// `ln P_t − ln P_{t−1}`.
    LogDiff,
    /// `(P_t − P_{t−1}) / (½ (P_t + P_{t−1}))`.
    PctDiff,
}

impl PriceDefinition {
    pub fn change(self, old: f64, new: f64) -> f64 {
        match self {
            PriceDefinition::LogDiff => new.ln() - old.ln(),
            PriceDefinition::PctDiff => (new - old) / (0.5 * (new + old)),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "log_diff" | "log" => Some(PriceDefinition::LogDiff),
            "pct_diff" | "pct" => Some(PriceDefinition::PctDiff),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceChange {
    pub firm: u32,
    pub supplier: u32,
    pub product: u32,
    pub country: u32,
    pub period: i32,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceChangePanel {
    pub definition: PriceDefinition,
    /// Sorted by period, then instance.
    pub records: Vec<PriceChange>,
    /// Records skipped because a price in the pair was not positive.
    pub rejected: usize,
}

impl PriceChangePanel {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", schema_line("price_changes"))?;
        let mut w = csv::Writer::from_writer(out);
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Joins each instance with its own observation in the previous period.
/// Instances without a `t−1` observation produce no change.
pub fn price_changes(panel: &TransactionPanel, definition: PriceDefinition) -> PriceChangePanel {
    let prices: HashMap<(Instance, i32), f64> =
        panel.records.iter().map(|r| ((r.instance(), r.period), r.unit_price)).collect();
    let mut records = Vec::new();
    let mut rejected = 0;
    for r in &panel.records {
        let Some(&old) = prices.get(&(r.instance(), r.period - 1)) else {
            continue;
        };
        let new = r.unit_price;
        if !(old > 0.0 && new > 0.0) {
            rejected += 1;
            continue;
        }
        records.push(PriceChange {
            firm: r.firm,
            supplier: r.supplier,
            product: r.product,
            country: r.country,
            period: r.period,
            delta: definition.change(old, new),
        });
    }
    records.sort_by(|a, b| {
        (a.period, a.firm, a.supplier, a.product, a.country).cmp(&(b.period, b.firm, b.supplier, b.product, b.country))
    });
    PriceChangePanel { definition, records, rejected }
}
