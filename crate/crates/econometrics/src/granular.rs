//! Granular residual of aggregate import growth: the lagged-share-weighted
//! idiosyncratic growth of the largest suppliers.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::facts::quantile_sorted;
use crate::panel::TransactionPanel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GranularPoint {
    pub period: i32,
    pub gamma: f64,
    /// Aggregate import growth.
    pub aggregate_growth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GranularResult {
    pub k: usize,
    pub q: usize,
    pub series: Vec<GranularPoint>,
    /// Periods skipped because fewer than `k` suppliers were active at `t−1`.
    pub dropped_periods: Vec<i32>,
    pub intercept: f64,
    pub slope: f64,
    pub r2: f64,
    pub adj_r2: f64,
    /// The residual has no variation, so the regression is not identified.
    pub degenerate: bool,
}

/// Growth rates are arithmetic, `(S_t − S_{t−1}) / S_{t−1}`, so a supplier
/// that stops selling contributes −1. Suppliers are ranked by `t−1` value
/// (ties by id); the benchmark is the median growth among the top `q`.
pub fn granular_residual(panel: &TransactionPanel, k: usize, q: usize) -> Result<GranularResult> {
    if k == 0 || q < k {
        return Err(domain("granular residual needs 1 <= k <= q"));
    }
    let periods = panel.periods();
    if periods.len() < 3 {
        return Err(domain("granular residual needs at least 3 periods"));
    }
    let mut sales: BTreeMap<i32, BTreeMap<u32, f64>> = BTreeMap::new();
    for r in &panel.records {
        *sales.entry(r.period).or_default().entry(r.supplier).or_insert(0.0) += r.value;
    }
    let mut series = Vec::new();
    let mut dropped = Vec::new();
    for w in periods.windows(2) {
        let (prev, t) = (w[0], w[1]);
        if t != prev + 1 {
            dropped.push(t);
            continue;
        }
        let before = &sales[&prev];
        let now = &sales[&t];
        let y_prev: f64 = before.values().sum();
        let y_now: f64 = now.values().sum();
        let mut ranked: Vec<(u32, f64)> = before.iter().map(|(&s, &v)| (s, v)).collect();
        if ranked.len() < k {
            dropped.push(t);
            continue;
        }
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let growth = |s: u32, v: f64| (now.get(&s).copied().unwrap_or(0.0) - v) / v;
        let mut top_q: Vec<f64> = ranked.iter().take(q).map(|&(s, v)| growth(s, v)).collect();
        top_q.sort_by(|a, b| a.total_cmp(b));
        let bench = quantile_sorted(&top_q, 0.5);
        let gamma: f64 = ranked.iter().take(k).map(|&(s, v)| v / y_prev * (growth(s, v) - bench)).sum();
        series.push(GranularPoint { period: t, gamma, aggregate_growth: (y_now - y_prev) / y_prev });
    }
    let n = series.len() as f64;
    let (mx, my) = (
        series.iter().map(|p| p.gamma).sum::<f64>() / n,
        series.iter().map(|p| p.aggregate_growth).sum::<f64>() / n,
    );
    let sxx: f64 = series.iter().map(|p| (p.gamma - mx).powi(2)).sum();
    let sxy: f64 = series.iter().map(|p| (p.gamma - mx) * (p.aggregate_growth - my)).sum();
    let syy: f64 = series.iter().map(|p| (p.aggregate_growth - my).powi(2)).sum();
    let degenerate = series.len() < 2 || sxx <= 1e-28 * (1.0 + mx * mx);
    let (slope, intercept, r2, adj_r2) = if degenerate {
        (f64::NAN, f64::NAN, f64::NAN, f64::NAN)
    } else {
        let b = sxy / sxx;
        let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { f64::NAN };
        let adj = if n > 2.0 { 1.0 - (1.0 - r2) * (n - 1.0) / (n - 2.0) } else { f64::NAN };
        (b, my - b * mx, r2, adj)
    };
    Ok(GranularResult { k, q, series, dropped_periods: dropped, intercept, slope, r2, adj_r2, degenerate })
}
