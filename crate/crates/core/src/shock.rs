//! Supplier cost shock experiment and parameter sensitivity sweeps.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};
use crate::params::ModelParams;
use crate::population::{compute_moments, median, simulate_population, Population};
use crate::scalar::log_add_exp;
use crate::search::{FirmStream, SearchConfig, SearchProblem};
use crate::statics::{log_variety_index, solve_at_prices, variety_exponent, Firm, FirmOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShockExperiment {
    /// Fractional price increase applied to the top supplier.
    pub shock_size: f64,
    /// Compute a `t+1` row after one post-shock search opportunity.
    pub re_search: bool,
    /// Let the `t+1` search run until the stopping rule binds instead of a
    /// single opportunity.
    pub search_to_convergence: bool,
    /// Report log differences instead of percentage changes.
    pub log_changes: bool,
}

impl Default for ShockExperiment {
    fn default() -> Self {
        Self { shock_size: 0.15, re_search: true, search_to_convergence: false, log_changes: false }
    }
}

impl ShockExperiment {
    pub fn validate(&self) -> Result<()> {
        if !(self.shock_size > -1.0) || !self.shock_size.is_finite() {
            return Err(ModelError::InvalidConfig("shock_size must exceed -1".into()));
        }
        Ok(())
    }

    fn change(&self, old: f64, new: f64) -> f64 {
        if self.log_changes {
            100.0 * (new.ln() - old.ln())
        } else {
            100.0 * (new - old) / old
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Period {
    #[serde(rename = "t")]
    Impact,
    #[serde(rename = "t+1")]
    AfterSearch,
}

/// Response of one firm in one period, relative to the pre-shock allocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactRow {
    pub firm_id: u64,
    pub z: f64,
    pub period: Period,
    pub k_before: usize,
    pub k_after: usize,
    /// Change in total imported bundle quantity across both lines, percent.
    pub pct_imports: f64,
    /// Change in exported quantity, percent; empty for pre-shock
    /// non-exporters.
    pub pct_exports: Option<f64>,
    pub exports_before: bool,
    pub exports_after: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactSummary {
    /// Mean of `pct_exports / pct_imports` at impact over firms that export
    /// both before and after the shock and have a non-zero import change.
    pub mean_ratio: f64,
    pub median_ratio: f64,
    pub n_ratio: usize,
    /// Exporters that stop exporting at impact (excluded from the ratio).
    pub n_stopped_exporting: usize,
    pub mean_pct_imports: f64,
    pub mean_pct_exports: f64,
    /// Firms that searched in the post-shock period.
    pub n_searched_after: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactCurve {
    pub experiment: ShockExperiment,
    pub rows: Vec<ImpactRow>,
    pub summary: ImpactSummary,
}

impl ImpactCurve {
    pub fn period(&self, period: Period) -> impl Iterator<Item = &ImpactRow> {
        self.rows.iter().filter(move |r| r.period == period)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Mean absolute import change at impact by productivity tercile
    /// (bottom, middle, top).
    pub fn import_drop_by_tercile(&self) -> [f64; 3] {
        let mut rows: Vec<&ImpactRow> = self.period(Period::Impact).collect();
        rows.sort_by(|a, b| a.z.total_cmp(&b.z).then(a.firm_id.cmp(&b.firm_id)));
        let n = rows.len();
        let mut out = [f64::NAN; 3];
        for (t, slot) in out.iter_mut().enumerate() {
            let (lo, hi) = (t * n / 3, (t + 1) * n / 3);
            if hi > lo {
                *slot = rows[lo..hi].iter().map(|r| r.pct_imports.abs()).sum::<f64>() / (hi - lo) as f64;
            }
        }
        out
    }
}

fn shocked_firm(firm: &Firm<f64>, shock: f64) -> Firm<f64> {
    let mut f = firm.clone();
    if let Some(top) = f.top_supplier() {
        f.supplier_prices[top] *= 1.0 + shock;
    }
    f
}

struct FirmImpact {
    rows: Vec<ImpactRow>,
    ratio: Option<f64>,
    stopped: bool,
    searched: bool,
}

fn firm_impact(
    firm: &Firm<f64>,
    base: &FirmOutcome<f64>,
    problem: &SearchProblem<f64>,
    seed: u64,
    exp: &ShockExperiment,
) -> Result<FirmImpact> {
    let params = problem.params();
    let shocked = shocked_firm(firm, exp.shock_size);
    // The shocked price may leave the draw support.
    let solve = |f: &Firm<f64>| solve_at_prices(f, params);
    let at_t = solve(&shocked)?;
    let row = |o: &FirmOutcome<f64>, period, k_after| ImpactRow {
        firm_id: firm.id,
        z: firm.z,
        period,
        k_before: firm.k(),
        k_after,
        pct_imports: exp.change(base.total_bundle(), o.total_bundle()),
        pct_exports: base.exports.then(|| exp.change(base.export_quantity(), o.export_quantity())),
        exports_before: base.exports,
        exports_after: o.exports,
    };
    let impact = row(&at_t, Period::Impact, shocked.k());
    let ratio = match (base.exports && at_t.exports, impact.pct_exports) {
        (true, Some(x)) if impact.pct_imports != 0.0 => Some(x / impact.pct_imports),
        _ => None,
    };
    let stopped = base.exports && !at_t.exports;
    let mut rows = vec![impact];
    let mut searched = false;
    if exp.re_search {
        // The post-shock draws continue the firm's own stream.
        let mut stream = FirmStream::resume(seed, firm.id, firm.k());
        let mut next = shocked.clone();
        let mut log_index = log_variety_index(&next.supplier_prices, params.varphi)?;
        let e = variety_exponent(params.varphi);
        loop {
            let (go, _, _) = problem.decide(next.z, log_index, next.k());
            if !go {
                break;
            }
            searched = true;
            let p = stream.supplier_price(params);
            log_index = log_add_exp(log_index, e * p.ln());
            next.supplier_prices.push(p);
            if !exp.search_to_convergence || next.k() >= firm.k() + problem.max_rounds() {
                break;
            }
        }
        let at_t1 = solve(&next)?;
        rows.push(row(&at_t1, Period::AfterSearch, next.k()));
    }
    Ok(FirmImpact { rows, ratio, stopped, searched })
}

/// Raises the price of each firm's cheapest supplier by `shock_size` and
/// re-solves; optionally lets each firm search once more under the shocked
/// prices.
pub fn apply_top_supplier_shock(
    population: &Population<f64>,
    experiment: &ShockExperiment,
) -> Result<ImpactCurve> {
    experiment.validate()?;
    let problem = SearchProblem::new(&population.params, &population.search)?;
    let seed = population.seed();
    let per_firm: Vec<FirmImpact> = population
        .firms
        .par_iter()
        .zip(&population.outcomes)
        .map(|(f, o)| firm_impact(f, o, &problem, seed, experiment))
        .collect::<Result<_>>()?;

    let ratios: Vec<f64> = per_firm.iter().filter_map(|f| f.ratio).collect();
    let n_stopped = per_firm.iter().filter(|f| f.stopped).count();
    let n_searched = per_firm.iter().filter(|f| f.searched).count();
    let rows: Vec<ImpactRow> = per_firm.into_iter().flat_map(|f| f.rows).collect();
    let impact: Vec<&ImpactRow> = rows.iter().filter(|r| r.period == Period::Impact).collect();
    let mean = |v: &[f64]| if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 };
    let imports: Vec<f64> = impact.iter().map(|r| r.pct_imports).collect();
    let exports: Vec<f64> = impact.iter().filter_map(|r| r.pct_exports).collect();
    let summary = ImpactSummary {
        mean_ratio: mean(&ratios),
        median_ratio: median(&ratios),
        n_ratio: ratios.len(),
        n_stopped_exporting: n_stopped,
        mean_pct_imports: mean(&imports),
        mean_pct_exports: mean(&exports),
        n_searched_after: n_searched,
    };
    Ok(ImpactCurve { experiment: *experiment, rows, summary })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    #[serde(rename = "f_s")]
    SearchCost,
    #[serde(rename = "mu")]
    SearchConvexity,
    #[serde(rename = "p_hi")]
    PriceUpper,
    #[serde(rename = "varphi")]
    VarietyExponent,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::SearchCost => "f_s",
            SweepAxis::SearchConvexity => "mu",
            SweepAxis::PriceUpper => "p_hi",
            SweepAxis::VarietyExponent => "varphi",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "f_s" => Ok(SweepAxis::SearchCost),
            "mu" => Ok(SweepAxis::SearchConvexity),
            "p_hi" => Ok(SweepAxis::PriceUpper),
            "varphi" => Ok(SweepAxis::VarietyExponent),
            other => Err(ModelError::InvalidConfig(format!("unknown sweep axis '{other}'"))),
        }
    }

    pub fn apply(self, p: &mut ModelParams<f64>, v: f64) {
        match self {
            SweepAxis::SearchCost => p.f_s = v,
            SweepAxis::SearchConvexity => p.mu = v,
            SweepAxis::PriceUpper => p.p_hi = v,
            SweepAxis::VarietyExponent => p.varphi = v,
        }
    }
}

/// One grid point of a sensitivity sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub value: f64,
    pub mean_k: f64,
    pub mean_top_share: f64,
    /// Mean percentage change in imported bundle quantity at impact.
    pub mean_import_impact: f64,
    pub mean_export_impact: f64,
}

/// Re-simulates with common random numbers at each grid value and reports
/// moments and the mean impact of the shock. The whole grid is validated
/// before any simulation runs.
pub fn sensitivity_sweep(
    base: &ModelParams<f64>,
    search: &SearchConfig,
    n_firms: usize,
    axis: SweepAxis,
    grid: &[f64],
    experiment: &ShockExperiment,
) -> Result<Vec<SweepRow>> {
    if grid.is_empty() {
        return Err(ModelError::InvalidConfig("empty sweep grid".into()));
    }
    if grid.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(ModelError::InvalidConfig("sweep grid must be sorted ascending".into()));
    }
    experiment.validate()?;
    let points: Vec<ModelParams<f64>> = grid
        .iter()
        .map(|&v| {
            let mut p = *base;
            axis.apply(&mut p, v);
            p.validate().map(|_| p).map_err(|e| {
                ModelError::InvalidConfig(format!("{} = {v} is inadmissible: {e}", axis.name()))
            })
        })
        .collect::<Result<_>>()?;
    points
        .iter()
        .zip(grid)
        .map(|(p, &v)| {
            let pop = simulate_population(p, search, n_firms)?;
            let m = compute_moments(&pop)?;
            let curve = apply_top_supplier_shock(&pop, experiment)?;
            Ok(SweepRow {
                axis,
                value: v,
                mean_k: m.mean_k,
                mean_top_share: m.mean_top_share,
                mean_import_impact: curve.summary.mean_pct_imports,
                mean_export_impact: curve.summary.mean_pct_exports,
            })
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
