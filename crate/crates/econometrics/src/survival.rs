//! Survival of firm–supplier links and persistence of the top supplier,
//! as frequencies and as indicator regressions.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::facts::first_seen;
use crate::panel::TransactionPanel;
use crate::regress::{fit, Dim, OutcomeRow, RegressionResult, RegressionSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkClass {
    All,
    /// The firm's largest supplier by value in `t`.
    Top,
    /// A link observed for the first time in `t`, after the burn-in window.
    New,
}

impl LinkClass {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "all" => Some(LinkClass::All),
            "top" => Some(LinkClass::Top),
            "new" => Some(LinkClass::New),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalResult {
    pub horizon: usize,
    pub class: LinkClass,
    /// Observations in the class sample.
    pub n: usize,
    /// Raw share of class links active again `horizon` periods later.
    pub frequency: f64,
    /// Indicator on a constant over the class sample.
    pub constant: RegressionResult,
    /// Indicator on a constant and a class dummy over all links
    /// (not for [`LinkClass::All`]).
    pub with_dummy: Option<RegressionResult>,
    /// The dummy regression with firm and period effects absorbed.
    pub with_dummy_fe: Option<RegressionResult>,
}

#[derive(Clone, Copy)]
struct LinkObs {
    firm: u32,
    supplier: u32,
    period: i32,
    survives: bool,
    top: bool,
    new: bool,
}

fn top_suppliers(panel: &TransactionPanel) -> BTreeMap<(u32, i32), u32> {
    let mut best: BTreeMap<(u32, i32), (f64, u32)> = BTreeMap::new();
    for (&(firm, supplier, period), &v) in &panel.link_values() {
        let e = best.entry((firm, period)).or_insert((v, supplier));
        if v > e.0 {
            *e = (v, supplier);
        }
    }
    best.into_iter().map(|(k, (_, s))| (k, s)).collect()
}

fn link_observations(panel: &TransactionPanel, horizon: usize, burn_in: usize) -> Result<Vec<LinkObs>> {
    let periods = panel.periods();
    if horizon == 0 || periods.len() < horizon + 1 {
        return Err(domain(format!("survival at horizon {horizon} needs at least {} periods", horizon + 1)));
    }
    let last = *periods.last().expect("non-empty");
    let cutoff = periods[0] + burn_in as i32;
    let links = panel.link_values();
    let active: HashSet<(u32, u32, i32)> = links.keys().copied().collect();
    let first = first_seen(panel);
    let top = top_suppliers(panel);
    Ok(links
        .keys()
        .filter(|&&(_, _, t)| t + horizon as i32 <= last)
        .map(|&(firm, supplier, period)| LinkObs {
            firm,
            supplier,
            period,
            survives: active.contains(&(firm, supplier, period + horizon as i32)),
            top: top[&(firm, period)] == supplier,
            new: period >= cutoff && first[&(firm, supplier)] == period,
        })
        .collect())
}

fn indicator_rows(obs: &[&LinkObs], y: impl Fn(&LinkObs) -> bool) -> (Vec<OutcomeRow>, Vec<f64>) {
    let rows: Vec<OutcomeRow> = obs
        .iter()
        .map(|o| OutcomeRow {
            firm: o.firm,
            supplier: Some(o.supplier),
            product: None,
            country: None,
            period: o.period,
            y: if y(o) { 1.0 } else { 0.0 },
            covariates: Vec::new(),
        })
        .collect();
    let ys = rows.iter().map(|r| r.y).collect();
    (rows, ys)
}

fn spec(fe: bool) -> RegressionSpec {
    RegressionSpec {
        fixed_effects: if fe { vec![vec![Dim::Firm], vec![Dim::Period]] } else { Vec::new() },
        outcome_lags: 0,
        shock_lags: 0,
        covariates: Vec::new(),
        clusters: vec![vec![Dim::Firm]],
        ..Default::default()
    }
}

/// Probability that a link active in `t` is active in `t + horizon`.
pub fn survival_stats(panel: &TransactionPanel, horizon: usize, class: LinkClass, burn_in: usize) -> Result<SurvivalResult> {
    let obs = link_observations(panel, horizon, burn_in)?;
    let in_class = |o: &LinkObs| match class {
        LinkClass::All => true,
        LinkClass::Top => o.top,
        LinkClass::New => o.new,
    };
    let sample: Vec<&LinkObs> = obs.iter().filter(|o| in_class(o)).collect();
    if sample.is_empty() {
        return Err(domain("no links in the requested class"));
    }
    let frequency = sample.iter().filter(|o| o.survives).count() as f64 / sample.len() as f64;
    let (rows, y) = indicator_rows(&sample, |o| o.survives);
    let refs: Vec<&OutcomeRow> = rows.iter().collect();
    let constant = fit(&refs, &y, Vec::new(), &spec(false))?;

    let (with_dummy, with_dummy_fe) = if class == LinkClass::All {
        (None, None)
    } else {
        // New links are only defined after the burn-in window.
        let cutoff = panel.periods()[0] + burn_in as i32;
        let base: Vec<&LinkObs> =
            obs.iter().filter(|o| class != LinkClass::New || o.period >= cutoff).collect();
        let (rows, y) = indicator_rows(&base, |o| o.survives);
        let refs: Vec<&OutcomeRow> = rows.iter().collect();
        let dummy: Vec<f64> = base.iter().map(|o| if in_class(o) { 1.0 } else { 0.0 }).collect();
        let name = if class == LinkClass::Top { "top" } else { "new" };
        let plain = fit(&refs, &y, vec![(name.into(), dummy.clone())], &spec(false))?;
        let fe = fit(&refs, &y, vec![(name.into(), dummy)], &spec(true)).ok();
        (Some(plain), fe)
    };
    Ok(SurvivalResult { horizon, class, n: sample.len(), frequency, constant, with_dummy, with_dummy_fe })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersistenceResult {
    pub horizon: usize,
    /// Firm-periods with a top supplier in `t` and `t + horizon` inside the
    /// panel.
    pub n_unconditional: usize,
    /// Share whose top supplier in `t` is again the top supplier in
    /// `t + horizon`.
    pub unconditional: f64,
    /// Firm-periods whose top-supplier link is still active at `t + horizon`.
    pub n_conditional: usize,
    pub conditional: f64,
    /// Constant-only regressions; absent when the sample is too small.
    pub unconditional_fit: Option<RegressionResult>,
    pub conditional_fit: Option<RegressionResult>,
}

pub fn persistence_stats(panel: &TransactionPanel, horizon: usize) -> Result<PersistenceResult> {
    let periods = panel.periods();
    if horizon == 0 || periods.len() < horizon + 1 {
        return Err(domain(format!("persistence at horizon {horizon} needs at least {} periods", horizon + 1)));
    }
    let last = *periods.last().expect("non-empty");
    let top = top_suppliers(panel);
    let active: HashSet<(u32, u32, i32)> = panel.link_values().keys().copied().collect();
    let mut all = Vec::new();
    let mut cond = Vec::new();
    for (&(firm, t), &s) in &top {
        if t + horizon as i32 > last {
            continue;
        }
        let later = t + horizon as i32;
        let same = top.get(&(firm, later)) == Some(&s);
        let obs = LinkObs { firm, supplier: s, period: t, survives: same, top: true, new: false };
        if active.contains(&(firm, s, later)) {
            cond.push(obs);
        }
        all.push(obs);
    }
    if all.is_empty() {
        return Err(domain("no firm-periods for persistence"));
    }
    let freq = |v: &[LinkObs]| v.iter().filter(|o| o.survives).count() as f64 / v.len() as f64;
    let run = |v: &[LinkObs]| -> Result<RegressionResult> {
        let refs: Vec<&LinkObs> = v.iter().collect();
        let (rows, y) = indicator_rows(&refs, |o| o.survives);
        let r: Vec<&OutcomeRow> = rows.iter().collect();
        fit(&r, &y, Vec::new(), &spec(false))
    };
    Ok(PersistenceResult {
        horizon,
        n_unconditional: all.len(),
        unconditional: freq(&all),
        n_conditional: cond.len(),
        conditional: if cond.is_empty() { f64::NAN } else { freq(&cond) },
        unconditional_fit: run(&all).ok(),
        conditional_fit: if cond.is_empty() { None } else { run(&cond).ok() },
    })
}
