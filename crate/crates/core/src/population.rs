//! Cross-section of firms with converged supplier sets, and the aggregate
//! moments computed from it.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::params::ModelParams;
use crate::scalar::Real;
use crate::search::{FirmStream, SearchConfig, SearchProblem, SearchTrace};
use crate::statics::{solve_firm, Firm, FirmOutcome};

/// Number of points on the cumulative import-share curve.
pub const CURVE_POINTS: usize = 101;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Population<T> {
    pub params: ModelParams<T>,
    pub search: SearchConfig,
    pub firms: Vec<Firm<T>>,
    pub outcomes: Vec<FirmOutcome<T>>,
    #[serde(skip)]
    pub traces: Vec<SearchTrace>,
}

impl<T: Real> Population<T> {
    /// Solves a given cross-section of firms without running search.
    pub fn from_firms(params: &ModelParams<T>, search: &SearchConfig, firms: Vec<Firm<T>>) -> Result<Self> {
        let outcomes = firms.iter().map(|f| solve_firm(f, params)).collect::<Result<_>>()?;
        Ok(Self { params: *params, search: *search, firms, outcomes, traces: Vec::new() })
    }

    pub fn seed(&self) -> u64 {
        self.search.rng_seed
    }

    pub fn len(&self) -> usize {
        self.firms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.firms.is_empty()
    }

    /// Firms whose search loop stopped at the round cap.
    pub fn capped(&self) -> usize {
        self.traces.iter().filter(|t| t.hit_cap).count()
    }

    /// Per-firm CSV panel: id, z, K, top share, export status, import and
    /// export values.
    pub fn write_firm_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for o in &self.outcomes {
            w.serialize(FirmPanelRow {
                firm_id: o.firm_id,
                z: o.z.as_f64(),
                k: o.k,
                top_share: o.top_share().as_f64(),
                exports: o.exports,
                import_value: o.import_value().as_f64(),
                export_value: (o.foreign.price * o.foreign.quantity).as_f64(),
            })?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirmPanelRow {
    pub firm_id: u64,
    pub z: f64,
    pub k: usize,
    pub top_share: f64,
    pub exports: bool,
    pub import_value: f64,
    pub export_value: f64,
}

/// Simulates one firm: productivity draw, a free first supplier, then the
/// search loop, all from the firm's own stream.
pub fn simulate_firm<T: Real>(
    id: u64,
    problem: &SearchProblem<T>,
    seed: u64,
) -> Result<(Firm<T>, SearchTrace)> {
    let params = problem.params();
    let mut stream = FirmStream::new(seed, id);
    let eps = T::lit(stream.standard_normal());
    let z = (params.mu_z + params.sigma_z * eps).exp();
    let first = stream.supplier_price(params);
    let mut firm = Firm::new(id, z, vec![first]);
    let trace = problem.converge(&mut firm, &mut stream)?;
    Ok((firm, trace))
}

/// Simulates `n_firms` firms and solves each one. Work is spread over the
/// current rayon pool; the result does not depend on the pool size.
pub fn simulate_population<T: Real>(
    params: &ModelParams<T>,
    config: &SearchConfig,
    n_firms: usize,
) -> Result<Population<T>> {
    if n_firms == 0 {
        return Err(domain("population needs at least one firm"));
    }
    let problem = SearchProblem::new(params, config)?;
    let seed = config.rng_seed;
    let solved: Vec<(Firm<T>, SearchTrace, FirmOutcome<T>)> = (0..n_firms as u64)
        .into_par_iter()
        .map(|id| {
            let (firm, trace) = simulate_firm(id, &problem, seed)?;
            let outcome = solve_firm(&firm, params)?;
            Ok((firm, trace, outcome))
        })
        .collect::<Result<_>>()?;
    let mut firms = Vec::with_capacity(n_firms);
    let mut traces = Vec::with_capacity(n_firms);
    let mut outcomes = Vec::with_capacity(n_firms);
    for (f, t, o) in solved {
        firms.push(f);
        traces.push(t);
        outcomes.push(o);
    }
    Ok(Population { params: *params, search: *config, firms, outcomes, traces })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentSet {
    pub n_firms: usize,
    pub mean_k: f64,
    pub median_k: f64,
    pub mean_top_share: f64,
    pub exporter_share: f64,
    /// Per-firm import expenditure, ascending.
    pub import_values: Vec<f64>,
    /// Cumulative share of imports held by the bottom `q` of firms on an
    /// evenly spaced grid of [`CURVE_POINTS`] probabilities.
    pub import_curve: Vec<f64>,
}

/// Median with the midpoint convention for even counts.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Lorenz curve of non-negative values on `points` evenly spaced
/// probabilities, linear between order statistics.
pub fn lorenz_curve(values: &[f64], points: usize) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    let total: f64 = v.iter().sum();
    let mut cum = Vec::with_capacity(n + 1);
    cum.push(0.0);
    let mut acc = 0.0;
    for x in &v {
        acc += x;
        cum.push(if total > 0.0 { acc / total } else { 0.0 });
    }
    (0..points)
        .map(|i| {
            let q = i as f64 / (points - 1) as f64;
            let pos = q * n as f64;
            let lo = (pos.floor() as usize).min(n);
            let hi = (lo + 1).min(n);
            let frac = pos - lo as f64;
            cum[lo] + frac * (cum[hi] - cum[lo])
        })
        .collect()
}

pub fn compute_moments<T: Real>(population: &Population<T>) -> Result<MomentSet> {
    if population.outcomes.is_empty() {
        return Err(domain("moments need a non-empty population"));
    }
    let n = population.outcomes.len();
    let ks: Vec<f64> = population.outcomes.iter().map(|o| o.k as f64).collect();
    let mean_k = ks.iter().sum::<f64>() / n as f64;
    let mean_top_share =
        population.outcomes.iter().map(|o| o.top_share().as_f64()).sum::<f64>() / n as f64;
    let exporter_share =
        population.outcomes.iter().filter(|o| o.exports).count() as f64 / n as f64;
    let mut import_values: Vec<f64> =
        population.outcomes.iter().map(|o| o.import_value().as_f64()).collect();
    import_values.sort_by(|a, b| a.total_cmp(b));
    let import_curve = lorenz_curve(&import_values, CURVE_POINTS);
    Ok(MomentSet {
        n_firms: n,
        mean_k,
        median_k: median(&ks),
        mean_top_share,
        exporter_share,
        import_values,
        import_curve,
    })
}
