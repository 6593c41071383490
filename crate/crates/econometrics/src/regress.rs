//! Linear panel regressions with absorbed multi-way fixed effects and
//! one- or two-way cluster-robust variance.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{EconError, Result};
use crate::panel::{schema_line, TransactionPanel};
use crate::shiftshare::ShockSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dim {
    Firm,
    Supplier,
    Product,
    Country,
    Period,
}

impl Dim {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "firm" | "i" => Some(Dim::Firm),
            "supplier" | "s" => Some(Dim::Supplier),
            "product" | "p" => Some(Dim::Product),
            "country" | "d" => Some(Dim::Country),
            "period" | "t" | "year" => Some(Dim::Period),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Dim::Firm => "firm",
            Dim::Supplier => "supplier",
            Dim::Product => "product",
            Dim::Country => "country",
            Dim::Period => "period",
        }
    }
}

fn dims_label(dims: &[Dim]) -> String {
    dims.iter().map(|d| d.name()).collect::<Vec<_>>().join("x")
}

/// One observation of an outcome. Missing identifiers stand for outcomes
/// aggregated over that dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRow {
    pub firm: u32,
    pub supplier: Option<u32>,
    pub product: Option<u32>,
    pub country: Option<u32>,
    pub period: i32,
    pub y: f64,
    /// Values of the panel's covariates; NaN marks a missing value.
    pub covariates: Vec<f64>,
}

impl OutcomeRow {
    fn key(&self, d: Dim) -> i64 {
        let opt = |v: Option<u32>| v.map(i64::from).unwrap_or(-1);
        match d {
            Dim::Firm => i64::from(self.firm),
            Dim::Supplier => opt(self.supplier),
            Dim::Product => opt(self.product),
            Dim::Country => opt(self.country),
            Dim::Period => i64::from(self.period),
        }
    }

    fn unit(&self) -> (u32, Option<u32>, Option<u32>, Option<u32>) {
        (self.firm, self.supplier, self.product, self.country)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OutcomePanel {
    pub covariate_names: Vec<String>,
    pub rows: Vec<OutcomeRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeLevel {
    /// Firm × product × country × supplier.
    Instance,
    /// Firm × product × country, summed over suppliers.
    FirmProductCountry,
    /// Firm totals.
    Firm,
}

/// Log imported quantity at the requested level. Adds the log real exchange
/// rate when every record carries one, and the log of the firm's total
/// imports in the previous period.
pub fn import_quantity_outcome(panel: &TransactionPanel, level: OutcomeLevel) -> OutcomePanel {
    type Key = (u32, Option<u32>, Option<u32>, Option<u32>, i32);
    let mut q: BTreeMap<Key, (f64, f64, usize)> = BTreeMap::new();
    let with_rer = !panel.records.is_empty() && panel.records.iter().all(|r| r.rer.is_some());
    for r in &panel.records {
        let key = match level {
            OutcomeLevel::Instance => (r.firm, Some(r.supplier), Some(r.product), Some(r.country), r.period),
            OutcomeLevel::FirmProductCountry => (r.firm, None, Some(r.product), Some(r.country), r.period),
            OutcomeLevel::Firm => (r.firm, None, None, None, r.period),
        };
        let e = q.entry(key).or_insert((0.0, 0.0, 0));
        e.0 += r.quantity;
        e.1 += r.rer.unwrap_or(0.0);
        e.2 += 1;
    }
    let totals = panel.firm_values();
    let mut names = Vec::new();
    if with_rer && level != OutcomeLevel::Firm {
        names.push("rer".to_string());
    }
    names.push("log_firm_imports_lag".to_string());
    let rows = q
        .into_iter()
        .map(|((firm, supplier, product, country, period), (qty, rer, n))| {
            let mut covariates = Vec::new();
            if names.len() == 2 {
                covariates.push(rer / n as f64);
            }
            covariates.push(totals.get(&(firm, period - 1)).map_or(f64::NAN, |v| v.ln()));
            OutcomeRow { firm, supplier, product, country, period, y: qty.ln(), covariates }
        })
        .collect();
    OutcomePanel { covariate_names: names, rows }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegressionSpec {
    /// Each entry is one absorbed effect, an interaction of dimensions.
    pub fixed_effects: Vec<Vec<Dim>>,
    /// Lags of the outcome of the same unit used as controls.
    pub outcome_lags: usize,
    /// Lags of the shock used as controls.
    pub shock_lags: usize,
    /// Panel covariates to include, by name.
    pub covariates: Vec<String>,
    /// Up to two cluster dimensions, each possibly an interaction.
    pub clusters: Vec<Vec<Dim>>,
    pub tolerance: f64,
    pub max_sweeps: usize,
}

impl Default for RegressionSpec {
    fn default() -> Self {
        Self {
            fixed_effects: vec![vec![Dim::Firm, Dim::Product, Dim::Country, Dim::Supplier], vec![Dim::Period]],
            outcome_lags: 2,
            shock_lags: 2,
            covariates: Vec::new(),
            clusters: vec![vec![Dim::Firm], vec![Dim::Country]],
            tolerance: 1e-10,
            max_sweeps: 10_000,
        }
    }
}

impl RegressionSpec {
    pub fn validate(&self) -> Result<()> {
        if self.clusters.len() > 2 {
            return Err(EconError::InvalidSpec("at most two cluster dimensions".into()));
        }
        if self.fixed_effects.iter().chain(&self.clusters).any(|d| d.is_empty()) {
            return Err(EconError::InvalidSpec("empty fixed-effect or cluster dimension".into()));
        }
        if !(self.tolerance > 0.0) || self.max_sweeps == 0 {
            return Err(EconError::InvalidSpec("tolerance and max_sweeps must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    pub names: Vec<String>,
    pub coef: Vec<f64>,
    pub se: Vec<f64>,
    pub vcov: Vec<Vec<f64>>,
    pub n: usize,
    /// Regressors dropped as collinear after absorbing the fixed effects.
    pub dropped: Vec<String>,
    pub fixed_effects: Vec<String>,
    pub clusters: Vec<String>,
    pub n_clusters: Vec<usize>,
    /// `1 − SSR / TSS` on the demeaned outcome.
    pub r2_within: f64,
    pub converged: bool,
    /// Outcome rows dropped for missing shocks, lags or covariates.
    pub n_incomplete: usize,
}

impl RegressionResult {
    pub fn get(&self, name: &str) -> Option<(f64, f64)> {
        self.names.iter().position(|n| n == name).map(|i| (self.coef[i], self.se[i]))
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", schema_line("regression"))?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["term", "coef", "se", "n", "r2_within"])?;
        for (i, name) in self.names.iter().enumerate() {
            w.write_record([
                name.clone(),
                format!("{}", self.coef[i]),
                format!("{}", self.se[i]),
                self.n.to_string(),
                format!("{}", self.r2_within),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Dense group labels for an interaction of dimensions.
fn group_ids(rows: &[&OutcomeRow], dims: &[Dim]) -> (Vec<usize>, usize) {
    let mut ids: HashMap<Vec<i64>, usize> = HashMap::new();
    let out = rows
        .iter()
        .map(|r| {
            let key: Vec<i64> = dims.iter().map(|&d| r.key(d)).collect();
            let next = ids.len();
            *ids.entry(key).or_insert(next)
        })
        .collect();
    (out, ids.len())
}

/// Removes group means for every absorbed effect in turn until the largest
/// adjustment falls below `tol` times the column scale.
fn demean(col: &mut [f64], groups: &[(Vec<usize>, usize)], tol: f64, max_sweeps: usize) -> bool {
    if groups.is_empty() {
        return true;
    }
    let scale = col.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut sum = Vec::new();
    let mut cnt = Vec::new();
    for _ in 0..max_sweeps {
        let mut moved = 0.0f64;
        for (ids, n) in groups {
            sum.clear();
            sum.resize(*n, 0.0);
            cnt.clear();
            cnt.resize(*n, 0usize);
            for (v, &g) in col.iter().zip(ids) {
                sum[g] += v;
                cnt[g] += 1;
            }
            for (s, &c) in sum.iter_mut().zip(&cnt) {
                *s /= c as f64;
                moved = moved.max(s.abs());
            }
            for (v, &g) in col.iter_mut().zip(ids) {
                *v -= sum[g];
            }
        }
        if moved <= tol * scale {
            return true;
        }
    }
    false
}

/// Cluster-robust "meat" `Σ_g (X_g'u)(X_g'u)'`.
fn meat(x: &DMatrix<f64>, u: &DVector<f64>, ids: &[usize], n_groups: usize) -> DMatrix<f64> {
    let k = x.ncols();
    let mut scores = DMatrix::<f64>::zeros(n_groups, k);
    for (i, &g) in ids.iter().enumerate() {
        for j in 0..k {
            scores[(g, j)] += x[(i, j)] * u[i];
        }
    }
    scores.transpose() * scores
}

/// Floors negative eigenvalues at zero.
fn psd_floor(v: DMatrix<f64>) -> DMatrix<f64> {
    let sym = (&v + v.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let vals = eig.eigenvalues.map(|l| l.max(0.0));
    &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
}

/// OLS of `y` on `columns` after absorbing `fixed_effects`; adds an intercept
/// when no effect is absorbed. Variance is two-way (or one-way)
/// cluster-robust, `V_A + V_B − V_{A∩B}`, each scaled by `(N−1)/(N−k)` and
/// floored to be positive semi-definite; homoskedastic when no cluster is
/// given.
pub fn fit(
    rows: &[&OutcomeRow],
    y: &[f64],
    columns: Vec<(String, Vec<f64>)>,
    spec: &RegressionSpec,
) -> Result<RegressionResult> {
    spec.validate()?;
    let n = rows.len();
    let groups: Vec<(Vec<usize>, usize)> = spec.fixed_effects.iter().map(|d| group_ids(rows, d)).collect();
    let mut columns = columns;
    if spec.fixed_effects.is_empty() {
        columns.insert(0, ("const".to_string(), vec![1.0; n]));
    }
    let mut yt = y.to_vec();
    let mut converged = demean(&mut yt, &groups, spec.tolerance, spec.max_sweeps);

    // Demean, then keep columns that add a direction not spanned so far.
    let mut kept: Vec<(String, Vec<f64>)> = Vec::new();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut dropped = Vec::new();
    for (name, mut col) in columns {
        let raw = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        converged &= demean(&mut col, &groups, spec.tolerance, spec.max_sweeps);
        let mut r = col.clone();
        for q in &basis {
            let dot: f64 = r.iter().zip(q).map(|(a, b)| a * b).sum();
            r.iter_mut().zip(q).for_each(|(a, b)| *a -= dot * b);
        }
        let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if raw == 0.0 || norm <= 1e-9 * raw {
            dropped.push(name);
            continue;
        }
        basis.push(r.iter().map(|v| v / norm).collect());
        kept.push((name, col));
    }
    let k = kept.len();
    if k == 0 {
        return Err(EconError::InvalidSpec("no identifiable regressor".into()));
    }
    if n <= k {
        return Err(EconError::InvalidSpec(format!("{n} observations for {k} regressors")));
    }
    let x = DMatrix::from_fn(n, k, |i, j| kept[j].1[i]);
    let yv = DVector::from_column_slice(&yt);
    let xtx = x.transpose() * &x;
    let xtx_inv = xtx
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| EconError::InvalidSpec("singular design after demeaning".into()))?;
    let beta = &xtx_inv * (x.transpose() * &yv);
    let u = &yv - &x * &beta;
    let ssr = u.norm_squared();
    let ybar = yt.iter().sum::<f64>() / n as f64;
    let tss: f64 = yt.iter().map(|v| (v - ybar).powi(2)).sum();

    let c = (n as f64 - 1.0) / (n as f64 - k as f64);
    let sandwich = |ids: &[usize], g: usize| c * (&xtx_inv * meat(&x, &u, ids, g) * &xtx_inv);
    let mut n_clusters = Vec::new();
    let vcov = match spec.clusters.as_slice() {
        [] => xtx_inv.clone() * (ssr / (n - k) as f64),
        [a] => {
            let (ia, ga) = group_ids(rows, a);
            n_clusters.push(ga);
            psd_floor(sandwich(&ia, ga))
        }
        [a, b] => {
            let (ia, ga) = group_ids(rows, a);
            let (ib, gb) = group_ids(rows, b);
            let mut ab = a.clone();
            ab.extend(b.iter().copied());
            let (iab, gab) = group_ids(rows, &ab);
            n_clusters.extend([ga, gb]);
            psd_floor(sandwich(&ia, ga) + sandwich(&ib, gb) - sandwich(&iab, gab))
        }
        _ => unreachable!("validated"),
    };
    Ok(RegressionResult {
        names: kept.into_iter().map(|(n, _)| n).collect(),
        coef: beta.iter().copied().collect(),
        se: (0..k).map(|j| vcov[(j, j)].max(0.0).sqrt()).collect(),
        vcov: (0..k).map(|i| (0..k).map(|j| vcov[(i, j)]).collect()).collect(),
        n,
        dropped,
        fixed_effects: spec.fixed_effects.iter().map(|d| dims_label(d)).collect(),
        clusters: spec.clusters.iter().map(|d| dims_label(d)).collect(),
        n_clusters,
        r2_within: if tss > 0.0 { 1.0 - ssr / tss } else { f64::NAN },
        converged,
        n_incomplete: 0,
    })
}

/// Regresses the outcome on the firm's shock, with lagged outcomes, lagged
/// shocks and covariates as controls. Rows missing any of these are dropped.
pub fn panel_regress(outcome: &OutcomePanel, shocks: &ShockSeries, spec: &RegressionSpec) -> Result<RegressionResult> {
    spec.validate()?;
    let cov_ix: Vec<usize> = spec
        .covariates
        .iter()
        .map(|c| {
            outcome
                .covariate_names
                .iter()
                .position(|n| n == c)
                .ok_or_else(|| EconError::InvalidSpec(format!("unknown covariate {c}")))
        })
        .collect::<Result<_>>()?;
    let shock = shocks.get();
    let y_at: HashMap<_, f64> = outcome.rows.iter().map(|r| ((r.unit(), r.period), r.y)).collect();

    let mut used: Vec<&OutcomeRow> = Vec::new();
    let mut y = Vec::new();
    let n_cols = 1 + spec.shock_lags + spec.outcome_lags + cov_ix.len();
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); n_cols];
    for r in &outcome.rows {
        let mut vals = Vec::with_capacity(n_cols);
        for l in 0..=spec.shock_lags as i32 {
            match shock.get(&(r.firm, r.period - l)) {
                Some(&s) => vals.push(s),
                None => break,
            }
        }
        for l in 1..=spec.outcome_lags as i32 {
            match y_at.get(&(r.unit(), r.period - l)) {
                Some(&v) => vals.push(v),
                None => break,
            }
        }
        vals.extend(cov_ix.iter().map(|&i| r.covariates[i]));
        if vals.len() != n_cols || vals.iter().any(|v| !v.is_finite()) || !r.y.is_finite() {
            continue;
        }
        for (c, v) in cols.iter_mut().zip(vals) {
            c.push(v);
        }
        y.push(r.y);
        used.push(r);
    }
    let mut names = vec!["shock".to_string()];
    names.extend((1..=spec.shock_lags).map(|l| format!("shock_lag{l}")));
    names.extend((1..=spec.outcome_lags).map(|l| format!("y_lag{l}")));
    names.extend(spec.covariates.iter().cloned());
    let mut res = fit(&used, &y, names.into_iter().zip(cols).collect(), spec)?;
    res.n_incomplete = outcome.rows.len() - used.len();
    Ok(res)
}

/// Outcome fixture with a known response to the shock:
/// `y = β·shock_{i,t} + a_unit + d_t + σ ε` for every unit of every firm with
/// a shock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantedResponse {
    pub beta: f64,
    pub units_per_firm: u32,
    pub n_countries: u32,
    pub unit_sd: f64,
    pub period_sd: f64,
    pub noise_sd: f64,
    pub seed: u64,
}

impl Default for PlantedResponse {
    fn default() -> Self {
        Self { beta: -0.04, units_per_firm: 3, n_countries: 10, unit_sd: 1.0, period_sd: 0.1, noise_sd: 0.02, seed: 1 }
    }
}

pub fn planted_outcome(shocks: &ShockSeries, cfg: &PlantedResponse) -> OutcomePanel {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut draw = move |sd: f64| sd * rng.sample::<f64, _>(StandardNormal);
    let mut period_fx: BTreeMap<i32, f64> = BTreeMap::new();
    let mut unit_fx: BTreeMap<(u32, u32), f64> = BTreeMap::new();
    let mut rows = Vec::new();
    let mut sorted: Vec<_> = shocks.rows.iter().collect();
    sorted.sort_by_key(|r| (r.period, r.firm));
    for r in sorted {
        let d = *period_fx.entry(r.period).or_insert_with(|| draw(cfg.period_sd));
        for u in 0..cfg.units_per_firm {
            let a = *unit_fx.entry((r.firm, u)).or_insert_with(|| draw(cfg.unit_sd));
            let eps = draw(cfg.noise_sd);
            rows.push(OutcomeRow {
                firm: r.firm,
                supplier: Some(u),
                product: Some(0),
                country: Some((r.firm + u) % cfg.n_countries),
                period: r.period,
                y: cfg.beta * r.shock + a + d + eps,
                covariates: Vec::new(),
            });
        }
    }
    OutcomePanel { covariate_names: Vec::new(), rows }
}
