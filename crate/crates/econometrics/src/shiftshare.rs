//! Firm-level supplier shocks: supplier-time effects weighted by the firm's
//! lagged supplier expenditure shares.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fe::FEEstimate;
use crate::panel::{schema_line, TransactionPanel};
use crate::prices::PriceDefinition;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShockRow {
    pub firm: u32,
    pub period: i32,
    pub shock: f64,
    /// Lagged share of the firm's imports held by suppliers with an
    /// estimated effect in `period`.
    pub coverage: f64,
    pub n_suppliers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShareWeight {
    pub firm: u32,
    pub supplier: u32,
    /// Period the share is measured in (`t − 1`).
    pub period: i32,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShockMoments {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShockStats {
    pub by_period: Vec<(i32, ShockMoments)>,
    pub pooled: ShockMoments,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShockSeries {
    pub definition: PriceDefinition,
    /// Sorted by firm, then period.
    pub rows: Vec<ShockRow>,
    pub weights: Vec<ShareWeight>,
}

/// Mean and sample standard deviation (n − 1).
pub fn moments(values: &[f64]) -> ShockMoments {
    let n = values.len();
    if n == 0 {
        return ShockMoments { n, mean: f64::NAN, sd: f64::NAN };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        f64::NAN
    };
    ShockMoments { n, mean, sd }
}

impl ShockSeries {
    pub fn get(&self) -> HashMap<(u32, i32), f64> {
        self.rows.iter().map(|r| ((r.firm, r.period), r.shock)).collect()
    }

    /// Mean and standard deviation per period and pooled.
    pub fn stats(&self) -> ShockStats {
        let mut by: BTreeMap<i32, Vec<f64>> = BTreeMap::new();
        for r in &self.rows {
            by.entry(r.period).or_default().push(r.shock);
        }
        let all: Vec<f64> = self.rows.iter().map(|r| r.shock).collect();
        ShockStats { by_period: by.into_iter().map(|(t, v)| (t, moments(&v))).collect(), pooled: moments(&all) }
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", schema_line("supplier_shocks"))?;
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Per-period and pooled mean and standard deviation, in percent.
    pub fn write_stats_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", schema_line("supplier_shock_stats"))?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["period", "n", "mean_pct", "sd_pct"])?;
        let s = self.stats();
        let row = |label: String, m: &ShockMoments| {
            vec![label, m.n.to_string(), format!("{}", 100.0 * m.mean), format!("{}", 100.0 * m.sd)]
        };
        for (t, m) in &s.by_period {
            w.write_record(row(t.to_string(), m))?;
        }
        w.write_record(row("pooled".into(), &s.pooled))?;
        w.flush()?;
        Ok(())
    }
}

/// `shock_{i,t} = Σ_s ω_{i,s,t−1} γ_{s,t}` over suppliers with an effect at
/// `t`, with `ω` the supplier's share of the firm's total imports at `t−1`.
/// Firms absent at `t−1` get no row; periods run up to the last panel period.
pub fn build_shock(fe: &FEEstimate, panel: &TransactionPanel, definition: PriceDefinition) -> ShockSeries {
    let gamma = fe.gamma();
    let links = panel.link_values();
    let totals = panel.firm_values();
    let last = panel.periods().last().copied().unwrap_or(i32::MIN);

    let mut weights = Vec::with_capacity(links.len());
    let mut acc: BTreeMap<(u32, i32), (f64, f64, usize)> = BTreeMap::new();
    for (&(firm, supplier, lag), &value) in &links {
        let w = value / totals[&(firm, lag)];
        weights.push(ShareWeight { firm, supplier, period: lag, weight: w });
        if lag >= last {
            continue;
        }
        let e = acc.entry((firm, lag + 1)).or_insert((0.0, 0.0, 0));
        if let Some(g) = gamma.get(&(supplier, lag + 1)) {
            e.0 += w * g;
            e.1 += w;
            e.2 += 1;
        }
    }
    let rows = acc
        .into_iter()
        .map(|((firm, period), (shock, coverage, n))| ShockRow { firm, period, shock, coverage, n_suppliers: n })
        .collect();
    ShockSeries { definition, rows, weights }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fe::{fe_extract, FeSettings, SupplierEffect};
    use crate::panel::Transaction;
    use crate::prices::price_changes;

    fn fe_with(gammas: &[(u32, i32, f64)]) -> FEEstimate {
        FEEstimate {
            definition: PriceDefinition::LogDiff,
            firm_effects: vec![],
            supplier_effects: gammas
                .iter()
                .map(|&(supplier, period, value)| SupplierEffect { supplier, period, value, component: 0 })
                .collect(),
            residuals: vec![],
            record_component: vec![],
            components: vec![],
            sweeps: 0,
            converged: true,
            dense_gap: None,
        }
    }

    fn two_supplier_panel() -> TransactionPanel {
        TransactionPanel::new(vec![
            Transaction::new(1, 1, 0, 0, 0, 70.0, 7.0),
            Transaction::new(1, 2, 0, 0, 0, 30.0, 3.0),
            Transaction::new(1, 1, 0, 0, 1, 50.0, 5.0),
        ])
        .unwrap()
    }

    #[test]
    fn weighted_sum_example() {
        let s = build_shock(&fe_with(&[(1, 1, 0.1), (2, 1, -0.2)]), &two_supplier_panel(), PriceDefinition::LogDiff);
        assert_eq!(s.rows.len(), 1);
        assert!((s.rows[0].shock - 0.01).abs() < 1e-15);
        assert_eq!((s.rows[0].coverage, s.rows[0].n_suppliers), (1.0, 2));
        let w0: f64 = s.weights.iter().filter(|w| w.period == 0).map(|w| w.weight).sum();
        assert!((w0 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_effects_and_linearity() {
        let p = two_supplier_panel();
        let z = build_shock(&fe_with(&[(1, 1, 0.0), (2, 1, 0.0)]), &p, PriceDefinition::LogDiff);
        assert_eq!(z.rows[0].shock, 0.0);
        let a = build_shock(&fe_with(&[(1, 1, 0.3), (2, 1, 0.5)]), &p, PriceDefinition::LogDiff);
        let b = build_shock(&fe_with(&[(1, 1, 0.9), (2, 1, 1.5)]), &p, PriceDefinition::LogDiff);
        assert!((b.rows[0].shock - 3.0 * a.rows[0].shock).abs() < 1e-15);
    }

    #[test]
    fn firm_absent_at_lag_has_no_row() {
        let p = TransactionPanel::new(vec![
            Transaction::new(1, 1, 0, 0, 0, 1.0, 1.0),
            Transaction::new(1, 1, 0, 0, 1, 1.0, 1.0),
            Transaction::new(2, 1, 0, 0, 1, 1.0, 1.0),
        ])
        .unwrap();
        let e = fe_extract(&price_changes(&p, PriceDefinition::LogDiff), &FeSettings::default()).unwrap();
        let s = build_shock(&e, &p, PriceDefinition::LogDiff);
        assert_eq!(s.rows.iter().map(|r| (r.firm, r.period)).collect::<Vec<_>>(), vec![(1, 1)]);
    }

    #[test]
    fn moments_use_sample_sd() {
        let m = moments(&[1.0, 2.0, 3.0]);
        assert_eq!((m.n, m.mean, m.sd), (3, 2.0, 1.0));
    }
}
