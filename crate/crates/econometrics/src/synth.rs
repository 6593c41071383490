//! Synthetic transaction panels generated from a simulated population.
//!
//! Every matched supplier of a firm becomes an import instance. Prices follow
//! `ln p_t = ln p_{t−1} + ln(1 + γ*_{s,t}) + b*_{i,t} + σ ε`, and quantities
//! are re-solved from the static problem each period, so the panel carries
//! planted supplier-time and firm-time components with a known truth.

use std::collections::{BTreeMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use supsearch_core::population::Population;
use supsearch_core::statics::{solve_at_prices, Firm};

use crate::error::{domain, EconError, Result};
use crate::panel::{Transaction, TransactionPanel};

/// A supplier-time price factor imposed on top of the random draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantedShock {
    pub supplier: u32,
    pub period: i32,
    /// Fractional price change; the log component is `ln(1 + factor)`.
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShockProcess {
    /// Standard deviation of the log supplier-time component.
    pub supplier_sd: f64,
    /// Standard deviation of the log firm-time component.
    pub firm_sd: f64,
    /// Standard deviation of idiosyncratic log price noise per record.
    pub noise_sd: f64,
    pub planted: Vec<PlantedShock>,
}

impl Default for ShockProcess {
    fn default() -> Self {
        Self { supplier_sd: 0.15, firm_sd: 0.05, noise_sd: 0.0, planted: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub periods: usize,
    pub first_period: i32,
    pub n_suppliers: u32,
    pub n_products: u32,
    pub n_countries: u32,
    pub shocks: ShockProcess,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            periods: 6,
            first_period: 0,
            n_suppliers: 50,
            n_products: 20,
            n_countries: 10,
            shocks: ShockProcess::default(),
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.periods < 3 {
            return Err(domain("synthetic panels need at least 3 periods"));
        }
        if self.n_suppliers == 0 || self.n_products == 0 || self.n_countries == 0 {
            return Err(EconError::InvalidSpec("supplier, product and country counts must be positive".into()));
        }
        let s = &self.shocks;
        if [s.supplier_sd, s.firm_sd, s.noise_sd].iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(EconError::InvalidSpec("shock standard deviations must be finite and non-negative".into()));
        }
        if s.planted.iter().any(|p| !(p.factor > -1.0)) {
            return Err(EconError::InvalidSpec("planted factors must exceed -1".into()));
        }
        Ok(())
    }
}

/// Where each matched supplier of a firm lands in the panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkAssignment {
    pub firm: u32,
    pub slot: usize,
    pub supplier: u32,
    pub product: u32,
    pub country: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedTruth {
    /// Log supplier-time component per (supplier, period), periods after the
    /// first.
    pub log_gamma: BTreeMap<(u32, i32), f64>,
    /// Log firm-time component per (firm, period).
    pub log_firm: BTreeMap<(u32, i32), f64>,
    pub links: Vec<LinkAssignment>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPanel {
    pub panel: TransactionPanel,
    pub truth: PlantedTruth,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Assigns suppliers without replacement while the firm has unused ones,
/// then reuses suppliers with a different product.
fn assign_links(pop: &Population<f64>, cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<Vec<LinkAssignment>> {
    let capacity = cfg.n_suppliers as usize * cfg.n_products as usize;
    let mut links = Vec::new();
    for firm in &pop.firms {
        if firm.k() > capacity {
            return Err(domain(format!("firm {} has more suppliers than supplier-product pairs", firm.id)));
        }
        let id = u32::try_from(firm.id).map_err(|_| domain("firm id exceeds u32"))?;
        let mut used_suppliers = HashSet::new();
        let mut used_pairs = HashSet::new();
        for slot in 0..firm.k() {
            let fresh = used_suppliers.len() < cfg.n_suppliers as usize;
            let (supplier, product) = loop {
                let s = rng.random_range(0..cfg.n_suppliers);
                let p = rng.random_range(0..cfg.n_products);
                if (fresh && used_suppliers.contains(&s)) || used_pairs.contains(&(s, p)) {
                    continue;
                }
                break (s, p);
            };
            used_suppliers.insert(supplier);
            used_pairs.insert((supplier, product));
            links.push(LinkAssignment { firm: id, slot, supplier, product, country: supplier % cfg.n_countries });
        }
    }
    Ok(links)
}

pub fn generate_synthetic_panel(population: &Population<f64>, config: &SynthConfig) -> Result<SyntheticPanel> {
    config.validate()?;
    if population.firms.is_empty() {
        return Err(domain("population is empty"));
    }
    let mut link_rng = ChaCha8Rng::seed_from_u64(config.seed);
    link_rng.set_stream(1);
    let mut supp_rng = ChaCha8Rng::seed_from_u64(config.seed);
    supp_rng.set_stream(2);
    let mut firm_rng = ChaCha8Rng::seed_from_u64(config.seed);
    firm_rng.set_stream(3);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(config.seed);
    noise_rng.set_stream(4);

    let links = assign_links(population, config, &mut link_rng)?;
    let periods: Vec<i32> = (0..config.periods as i32).map(|t| config.first_period + t).collect();
    let s = &config.shocks;

    let mut log_gamma = BTreeMap::new();
    for &t in &periods[1..] {
        for sup in 0..config.n_suppliers {
            log_gamma.insert((sup, t), s.supplier_sd * normal(&mut supp_rng));
        }
    }
    for p in &s.planted {
        if let Some(v) = log_gamma.get_mut(&(p.supplier, p.period)) {
            *v += (1.0 + p.factor).ln();
        }
    }
    let mut log_firm = BTreeMap::new();
    for &t in &periods[1..] {
        for f in &population.firms {
            log_firm.insert((f.id as u32, t), s.firm_sd * normal(&mut firm_rng));
        }
    }

    let params = &population.params;
    let mut records = Vec::new();
    let mut cursor = 0;
    for firm in &population.firms {
        let own = &links[cursor..cursor + firm.k()];
        cursor += firm.k();
        let fid = firm.id as u32;
        let mut log_p: Vec<f64> = firm.supplier_prices.iter().map(|p| p.ln()).collect();
        for (ti, &t) in periods.iter().enumerate() {
            if ti > 0 {
                for (lp, l) in log_p.iter_mut().zip(own) {
                    *lp += log_gamma[&(l.supplier, t)] + log_firm[&(fid, t)] + s.noise_sd * normal(&mut noise_rng);
                }
            }
            let prices: Vec<f64> = log_p.iter().map(|v| v.exp()).collect();
            let solved = solve_at_prices(&Firm::new(firm.id, firm.z, prices.clone()), params)?;
            for (k, l) in own.iter().enumerate() {
                let q = solved.domestic.supplier_quantities[k] + solved.foreign.supplier_quantities[k];
                let mut tx = Transaction::new(fid, l.supplier, l.product, l.country, t, prices[k] * q, q);
                tx.unit_price = prices[k];
                records.push(tx);
            }
        }
    }
    let mut panel = TransactionPanel { records };
    panel.sort();
    panel.validate()?;
    Ok(SyntheticPanel { panel, truth: PlantedTruth { log_gamma, log_firm, links } })
}
