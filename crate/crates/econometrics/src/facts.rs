//! Descriptive statistics of firms' supplier networks.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::panel::TransactionPanel;

/// Linear-interpolation quantile of sorted data (`h = (n−1)p`).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupplierCountStats {
    pub mean: f64,
    pub median: f64,
    pub p75: f64,
    pub p90: f64,
    pub p95: f64,
    pub p99: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopShareStats {
    pub mean: f64,
    pub p10: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub p90: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodFacts {
    /// `None` for the pooled row.
    pub period: Option<i32>,
    pub n_firms: usize,
    pub suppliers: SupplierCountStats,
    pub top_share: TopShareStats,
    /// Share of firms adding at least one new supplier; `None` inside the
    /// burn-in window.
    pub new_link_firm_share: Option<f64>,
    /// Share of import value bought from new suppliers.
    pub new_link_import_share: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactsReport {
    pub burn_in: usize,
    pub per_period: Vec<PeriodFacts>,
    pub pooled: PeriodFacts,
}

/// Firm-period summaries from which every statistic is built.
struct FirmPeriod {
    k: f64,
    top_share: f64,
    total: f64,
    new_value: f64,
    eligible: bool,
}

fn summarize(period: Option<i32>, rows: &[&FirmPeriod]) -> PeriodFacts {
    let ks = sorted(rows.iter().map(|r| r.k).collect());
    let ts = sorted(rows.iter().map(|r| r.top_share).collect());
    let el: Vec<&&FirmPeriod> = rows.iter().filter(|r| r.eligible).collect();
    let (firm_share, import_share) = if el.is_empty() {
        (None, None)
    } else {
        let adding = el.iter().filter(|r| r.new_value > 0.0).count() as f64 / el.len() as f64;
        let new: f64 = el.iter().map(|r| r.new_value).sum();
        let total: f64 = el.iter().map(|r| r.total).sum();
        (Some(adding), Some(new / total))
    };
    PeriodFacts {
        period,
        n_firms: rows.len(),
        suppliers: SupplierCountStats {
            mean: mean(&ks),
            median: quantile_sorted(&ks, 0.5),
            p75: quantile_sorted(&ks, 0.75),
            p90: quantile_sorted(&ks, 0.90),
            p95: quantile_sorted(&ks, 0.95),
            p99: quantile_sorted(&ks, 0.99),
        },
        top_share: TopShareStats {
            mean: mean(&ts),
            p10: quantile_sorted(&ts, 0.10),
            p25: quantile_sorted(&ts, 0.25),
            p50: quantile_sorted(&ts, 0.50),
            p75: quantile_sorted(&ts, 0.75),
            p90: quantile_sorted(&ts, 0.90),
        },
        new_link_firm_share: firm_share,
        new_link_import_share: import_share,
    }
}

/// First period each (firm, supplier) pair appears in.
pub fn first_seen(panel: &TransactionPanel) -> HashMap<(u32, u32), i32> {
    let mut m: HashMap<(u32, u32), i32> = HashMap::new();
    for r in &panel.records {
        let e = m.entry((r.firm, r.supplier)).or_insert(r.period);
        *e = (*e).min(r.period);
    }
    m
}

/// Per-period and pooled supplier counts, top-supplier shares and new-link
/// statistics. A link is new in the first period its pair appears; the first
/// `burn_in` periods of the panel report no new-link statistics.
pub fn stylized_facts(panel: &TransactionPanel, burn_in: usize) -> FactsReport {
    let links = panel.link_values();
    let first = first_seen(panel);
    let periods = panel.periods();
    let cutoff = periods.first().map(|p| p + burn_in as i32).unwrap_or(0);

    let mut by_fp: BTreeMap<(i32, u32), FirmPeriod> = BTreeMap::new();
    for (&(firm, supplier, period), &v) in &links {
        let e = by_fp.entry((period, firm)).or_insert(FirmPeriod {
            k: 0.0,
            top_share: 0.0,
            total: 0.0,
            new_value: 0.0,
            eligible: period >= cutoff,
        });
        e.k += 1.0;
        e.total += v;
        e.top_share = e.top_share.max(v);
        if first[&(firm, supplier)] == period {
            e.new_value += v;
        }
    }
    for fp in by_fp.values_mut() {
        fp.top_share /= fp.total;
    }
    let per_period = periods
        .iter()
        .map(|&t| {
            let rows: Vec<&FirmPeriod> = by_fp.range((t, 0)..=(t, u32::MAX)).map(|(_, v)| v).collect();
            summarize(Some(t), &rows)
        })
        .collect();
    let all: Vec<&FirmPeriod> = by_fp.values().collect();
    FactsReport { burn_in, per_period, pooled: summarize(None, &all) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::Transaction;

    #[test]
    fn single_record() {
        let p = TransactionPanel::new(vec![Transaction::new(1, 1, 1, 1, 0, 5.0, 1.0)]).unwrap();
        let f = stylized_facts(&p, 0);
        assert_eq!((f.pooled.suppliers.mean, f.pooled.suppliers.median), (1.0, 1.0));
        assert_eq!(f.pooled.top_share.mean, 1.0);
        assert_eq!(f.pooled.new_link_firm_share, Some(1.0));
        assert_eq!(f.pooled.new_link_import_share, Some(1.0));
    }

    #[test]
    fn quantile_convention() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.5), 2.5);
        assert_eq!(quantile_sorted(&v, 0.75), 3.25);
        assert_eq!(quantile_sorted(&v, 1.0), 4.0);
    }

    #[test]
    fn burn_in_hides_new_links() {
        let p = TransactionPanel::new(vec![
            Transaction::new(1, 1, 1, 1, 0, 5.0, 1.0),
            Transaction::new(1, 1, 1, 1, 1, 5.0, 1.0),
            Transaction::new(1, 2, 1, 1, 1, 15.0, 1.0),
        ])
        .unwrap();
        let f = stylized_facts(&p, 1);
        assert_eq!(f.per_period[0].new_link_firm_share, None);
        assert_eq!(f.per_period[1].new_link_firm_share, Some(1.0));
        assert_eq!(f.per_period[1].new_link_import_share, Some(0.75));
        assert_eq!(f.per_period[1].top_share.mean, 0.75);
    }
}
