//! Two-way fixed-effects decomposition of price changes into firm-time and
//! supplier-time components.
//!
//! Each period is a separate bipartite firm–supplier graph. Effects are
//! identified only within connected components, so per component the
//! supplier effects are normalized to a transaction-weighted mean of zero and
//! the level is carried by the firm effects.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use petgraph::unionfind::UnionFind;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::panel::schema_line;
use crate::prices::{PriceChangePanel, PriceDefinition};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeSettings {
    /// Sweeps stop once no effect moves by more than this.
    pub tolerance: f64,
    pub max_sweeps: usize,
    /// Panels with at most this many records are re-solved densely and the
    /// gap reported.
    pub dense_check_limit: usize,
}

impl Default for FeSettings {
    fn default() -> Self {
        Self { tolerance: 1e-13, max_sweeps: 10_000, dense_check_limit: 2_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirmEffect {
    pub firm: u32,
    pub period: i32,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupplierEffect {
    pub supplier: u32,
    pub period: i32,
    pub value: f64,
    pub component: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentInfo {
    pub period: i32,
    pub n_firms: usize,
    pub n_suppliers: usize,
    pub n_records: usize,
    /// One record only: the supplier effect is not separately identified
    /// and is set to zero.
    pub singleton: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FEEstimate {
    pub definition: PriceDefinition,
    pub firm_effects: Vec<FirmEffect>,
    pub supplier_effects: Vec<SupplierEffect>,
    /// Aligned with the input records.
    pub residuals: Vec<f64>,
    /// Component index of each input record.
    pub record_component: Vec<usize>,
    pub components: Vec<ComponentInfo>,
    /// Largest sweep count over periods.
    pub sweeps: usize,
    pub converged: bool,
    /// Largest absolute gap in fitted values and supplier effects against a
    /// dense least-squares solve, when the panel is small enough.
    pub dense_gap: Option<f64>,
}

impl FEEstimate {
    pub fn gamma(&self) -> HashMap<(u32, i32), f64> {
        self.supplier_effects.iter().map(|e| ((e.supplier, e.period), e.value)).collect()
    }

    pub fn beta(&self) -> HashMap<(u32, i32), f64> {
        self.firm_effects.iter().map(|e| ((e.firm, e.period), e.value)).collect()
    }

    pub fn singletons(&self) -> usize {
        self.components.iter().filter(|c| c.singleton).count()
    }

    pub fn write_gamma_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", schema_line("supplier_effects"))?;
        let mut w = csv::Writer::from_writer(out);
        for e in &self.supplier_effects {
            w.serialize(e)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Local indexing of one period's bipartite graph.
struct PeriodGraph {
    rows: Vec<usize>,
    firm_of: Vec<usize>,
    supp_of: Vec<usize>,
    firms: Vec<u32>,
    suppliers: Vec<u32>,
    comp_firm: Vec<usize>,
    comp_supp: Vec<usize>,
    n_comp: usize,
}

impl PeriodGraph {
    fn build(panel: &PriceChangePanel, rows: Vec<usize>) -> Self {
        let mut firm_ix: BTreeMap<u32, usize> = BTreeMap::new();
        let mut supp_ix: BTreeMap<u32, usize> = BTreeMap::new();
        for &i in &rows {
            firm_ix.entry(panel.records[i].firm).or_insert(0);
            supp_ix.entry(panel.records[i].supplier).or_insert(0);
        }
        for (n, v) in firm_ix.values_mut().enumerate() {
            *v = n;
        }
        for (n, v) in supp_ix.values_mut().enumerate() {
            *v = n;
        }
        let firm_of: Vec<usize> = rows.iter().map(|&i| firm_ix[&panel.records[i].firm]).collect();
        let supp_of: Vec<usize> = rows.iter().map(|&i| supp_ix[&panel.records[i].supplier]).collect();
        let (nf, ns) = (firm_ix.len(), supp_ix.len());
        let mut uf = UnionFind::<usize>::new(nf + ns);
        for (f, s) in firm_of.iter().zip(&supp_of) {
            uf.union(*f, nf + s);
        }
        // Components numbered in order of first appearance among firms.
        let mut label: HashMap<usize, usize> = HashMap::new();
        let mut comp = |x: usize| {
            let root = uf.find(x);
            let next = label.len();
            *label.entry(root).or_insert(next)
        };
        let comp_firm: Vec<usize> = (0..nf).map(&mut comp).collect();
        let comp_supp: Vec<usize> = (0..ns).map(|s| comp(nf + s)).collect();
        Self {
            rows,
            firm_of,
            supp_of,
            firms: firm_ix.into_keys().collect(),
            suppliers: supp_ix.into_keys().collect(),
            comp_firm,
            comp_supp,
            n_comp: label.len(),
        }
    }

    /// Shifts each component's supplier effects to a record-weighted mean of
    /// zero, moving the level into the firm effects.
    fn normalize(&self, b: &mut [f64], g: &mut [f64]) {
        let mut sum = vec![0.0; self.n_comp];
        let mut cnt = vec![0usize; self.n_comp];
        for &s in &self.supp_of {
            let c = self.comp_supp[s];
            sum[c] += g[s];
            cnt[c] += 1;
        }
        let shift: Vec<f64> = sum.iter().zip(&cnt).map(|(s, &n)| s / n as f64).collect();
        for (s, v) in g.iter_mut().enumerate() {
            *v -= shift[self.comp_supp[s]];
        }
        for (f, v) in b.iter_mut().enumerate() {
            *v += shift[self.comp_firm[f]];
        }
    }
}

fn group_by_period(panel: &PriceChangePanel) -> BTreeMap<i32, Vec<usize>> {
    let mut m: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
    for (i, r) in panel.records.iter().enumerate() {
        m.entry(r.period).or_default().push(i);
    }
    m
}

/// Alternating projections: firm means of `d − γ`, then supplier means of
/// `d − β`, until no effect moves by more than the tolerance.
fn sweep(g: &PeriodGraph, d: &[f64], settings: &FeSettings) -> (Vec<f64>, Vec<f64>, usize, bool) {
    let (nf, ns) = (g.firms.len(), g.suppliers.len());
    let mut nfc = vec![0usize; nf];
    let mut nsc = vec![0usize; ns];
    for (f, s) in g.firm_of.iter().zip(&g.supp_of) {
        nfc[*f] += 1;
        nsc[*s] += 1;
    }
    let mut b = vec![0.0; nf];
    let mut gam = vec![0.0; ns];
    let scale = d.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    let mut acc_f = vec![0.0; nf];
    let mut acc_s = vec![0.0; ns];
    for n in 1..=settings.max_sweeps {
        acc_f.iter_mut().for_each(|x| *x = 0.0);
        for (k, (&f, &s)) in g.firm_of.iter().zip(&g.supp_of).enumerate() {
            acc_f[f] += d[k] - gam[s];
        }
        let mut moved = 0.0f64;
        for f in 0..nf {
            let v = acc_f[f] / nfc[f] as f64;
            moved = moved.max((v - b[f]).abs());
            b[f] = v;
        }
        acc_s.iter_mut().for_each(|x| *x = 0.0);
        for (k, (&f, &s)) in g.firm_of.iter().zip(&g.supp_of).enumerate() {
            acc_s[s] += d[k] - b[f];
        }
        for s in 0..ns {
            let v = acc_s[s] / nsc[s] as f64;
            moved = moved.max((v - gam[s]).abs());
            gam[s] = v;
        }
        if moved <= settings.tolerance * scale {
            return (b, gam, n, true);
        }
    }
    (b, gam, settings.max_sweeps, false)
}

/// Minimum-norm least squares on the full indicator design of one period.
fn dense_solve(g: &PeriodGraph, d: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (nf, ns) = (g.firms.len(), g.suppliers.len());
    let mut a = DMatrix::<f64>::zeros(d.len(), nf + ns);
    for (k, (&f, &s)) in g.firm_of.iter().zip(&g.supp_of).enumerate() {
        a[(k, f)] = 1.0;
        a[(k, nf + s)] = 1.0;
    }
    let y = DVector::from_column_slice(d);
    let svd = a.svd(true, true);
    let x = svd.solve(&y, 1e-10).expect("svd with both factors");
    (x.rows(0, nf).iter().copied().collect(), x.rows(nf, ns).iter().copied().collect())
}

/// Estimates `Δ = β_{i,t} + γ_{s,t} + ε` period by period.
pub fn fe_extract(panel: &PriceChangePanel, settings: &FeSettings) -> Result<FEEstimate> {
    if panel.records.is_empty() {
        return Err(domain("fixed-effects extraction needs at least one record"));
    }
    let n = panel.records.len();
    let check_dense = n <= settings.dense_check_limit;
    let mut residuals = vec![0.0; n];
    let mut record_component = vec![0usize; n];
    let mut components = Vec::new();
    let mut firm_effects = Vec::new();
    let mut supplier_effects = Vec::new();
    let mut sweeps = 0;
    let mut converged = true;
    let mut dense_gap: Option<f64> = None;

    for (period, rows) in group_by_period(panel) {
        let g = PeriodGraph::build(panel, rows);
        let d: Vec<f64> = g.rows.iter().map(|&i| panel.records[i].delta).collect();
        let (mut b, mut gam, used, ok) = sweep(&g, &d, settings);
        sweeps = sweeps.max(used);
        converged &= ok;
        g.normalize(&mut b, &mut gam);

        if check_dense {
            let (mut db, mut dg) = dense_solve(&g, &d);
            g.normalize(&mut db, &mut dg);
            let mut gap = 0.0f64;
            for (&f, &s) in g.firm_of.iter().zip(&g.supp_of) {
                gap = gap.max(((b[f] + gam[s]) - (db[f] + dg[s])).abs());
            }
            for (x, y) in gam.iter().zip(&dg) {
                gap = gap.max((x - y).abs());
            }
            dense_gap = Some(dense_gap.unwrap_or(0.0).max(gap));
        }

        let base = components.len();
        let mut info: Vec<ComponentInfo> = (0..g.n_comp)
            .map(|_| ComponentInfo { period, n_firms: 0, n_suppliers: 0, n_records: 0, singleton: false })
            .collect();
        for &c in &g.comp_firm {
            info[c].n_firms += 1;
        }
        for &c in &g.comp_supp {
            info[c].n_suppliers += 1;
        }
        for (k, &i) in g.rows.iter().enumerate() {
            let (f, s) = (g.firm_of[k], g.supp_of[k]);
            let c = g.comp_firm[f];
            info[c].n_records += 1;
            record_component[i] = base + c;
            residuals[i] = d[k] - b[f] - gam[s];
        }
        for c in &mut info {
            c.singleton = c.n_records == 1;
        }
        components.extend(info);
        for (f, &id) in g.firms.iter().enumerate() {
            firm_effects.push(FirmEffect { firm: id, period, value: b[f] });
        }
        for (s, &id) in g.suppliers.iter().enumerate() {
            supplier_effects.push(SupplierEffect { supplier: id, period, value: gam[s], component: base + g.comp_supp[s] });
        }
    }
    Ok(FEEstimate {
        definition: panel.definition,
        firm_effects,
        supplier_effects,
        residuals,
        record_component,
        components,
        sweeps,
        converged,
        dense_gap,
    })
}

/// Firm-time effects only: each record's deviation from its firm-period
/// mean. Diagnostic counterpart of [`fe_extract`].
pub fn firm_time_effects(panel: &PriceChangePanel) -> (Vec<FirmEffect>, Vec<f64>) {
    let mut acc: BTreeMap<(u32, i32), (f64, usize)> = BTreeMap::new();
    for r in &panel.records {
        let e = acc.entry((r.firm, r.period)).or_insert((0.0, 0));
        e.0 += r.delta;
        e.1 += 1;
    }
    let means: HashMap<(u32, i32), f64> = acc.iter().map(|(k, (s, n))| (*k, s / *n as f64)).collect();
    let residuals = panel.records.iter().map(|r| r.delta - means[&(r.firm, r.period)]).collect();
    let effects = acc.into_iter().map(|((firm, period), (s, n))| FirmEffect { firm, period, value: s / n as f64 }).collect();
    (effects, residuals)
}
