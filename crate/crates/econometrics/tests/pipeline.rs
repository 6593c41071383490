//! Synthetic-panel pipeline checked against the planted truth.

use std::collections::HashMap;

use supsearch_core::population::{simulate_population, Population};
use supsearch_core::search::SearchConfig;
use supsearch_core::Params;
use supsearch_econometrics::fe::{fe_extract, FEEstimate, FeSettings};
use supsearch_econometrics::prices::{price_changes, PriceChangePanel, PriceDefinition};
use supsearch_econometrics::regress::{panel_regress, planted_outcome, PlantedResponse, RegressionSpec};
use supsearch_econometrics::shiftshare::build_shock;
use supsearch_econometrics::synth::{generate_synthetic_panel, ShockProcess, SynthConfig};

fn population(n: usize) -> Population<f64> {
    let cfg = SearchConfig { rng_seed: 3, ..Default::default() };
    simulate_population(&Params::calibrated(), &cfg, n).unwrap()
}

fn synth(noise_sd: f64, seed: u64) -> SynthConfig {
    SynthConfig { shocks: ShockProcess { noise_sd, ..Default::default() }, seed, ..Default::default() }
}

fn fitted(fe: &FEEstimate, pc: &PriceChangePanel) -> Vec<f64> {
    let (b, g) = (fe.beta(), fe.gamma());
    pc.records.iter().map(|r| b[&(r.firm, r.period)] + g[&(r.supplier, r.period)]).collect()
}

#[test]
fn noiseless_panel_recovers_planted_supplier_effects() {
    let pop = population(200);
    let s = generate_synthetic_panel(&pop, &synth(0.0, 7)).unwrap();
    let pc = price_changes(&s.panel, PriceDefinition::LogDiff);
    assert!(pc.records.len() > 2_000);
    let fe = fe_extract(&pc, &FeSettings::default()).unwrap();
    assert!(fe.converged);

    let mut offset: HashMap<usize, f64> = HashMap::new();
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for e in &fe.supplier_effects {
        if fe.components[e.component].singleton {
            continue;
        }
        let gap = e.value - s.truth.log_gamma[&(e.supplier, e.period)];
        let base = *offset.entry(e.component).or_insert(gap);
        worst = worst.max((gap - base).abs());
        checked += 1;
    }
    assert!(checked > 100);
    assert!(worst < 1e-8, "max error {worst:e}");

    for ((r, f), e) in pc.records.iter().zip(fitted(&fe, &pc)).zip(&fe.residuals) {
        assert!((r.delta - f - e).abs() < 1e-8);
        assert!(e.abs() < 1e-8);
    }
}

#[test]
fn residuals_are_orthogonal_to_both_effect_blocks() {
    let pop = population(200);
    let s = generate_synthetic_panel(&pop, &synth(0.03, 11)).unwrap();
    let pc = price_changes(&s.panel, PriceDefinition::PctDiff);
    let fe = fe_extract(&pc, &FeSettings::default()).unwrap();
    let mut by_firm: HashMap<(u32, i32), f64> = HashMap::new();
    let mut by_supplier: HashMap<(u32, i32), f64> = HashMap::new();
    for (r, e) in pc.records.iter().zip(&fe.residuals) {
        *by_firm.entry((r.firm, r.period)).or_default() += e;
        *by_supplier.entry((r.supplier, r.period)).or_default() += e;
    }
    let worst = by_firm.values().chain(by_supplier.values()).fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(worst < 1e-8, "max inner product {worst:e}");
    for ((r, f), e) in pc.records.iter().zip(fitted(&fe, &pc)).zip(&fe.residuals) {
        assert!((r.delta - f - e).abs() < 1e-8);
    }
}

#[test]
fn small_panels_agree_with_the_dense_solve() {
    let pop = population(25);
    let s = generate_synthetic_panel(&pop, &synth(0.05, 5)).unwrap();
    let pc = price_changes(&s.panel, PriceDefinition::LogDiff);
    assert!(pc.records.len() <= 2_000);
    let fe = fe_extract(&pc, &FeSettings::default()).unwrap();
    let gap = fe.dense_gap.expect("dense check runs on small panels");
    assert!(gap < 1e-8, "dense gap {gap:e}");
}

fn regression_replication(pop: &Population<f64>, rep: u64, beta: f64) -> (f64, f64) {
    let s = generate_synthetic_panel(pop, &synth(0.02, 100 + rep)).unwrap();
    let pc = price_changes(&s.panel, PriceDefinition::LogDiff);
    let fe = fe_extract(&pc, &FeSettings::default()).unwrap();
    let shocks = build_shock(&fe, &s.panel, PriceDefinition::LogDiff);
    let outcome = planted_outcome(&shocks, &PlantedResponse { beta, seed: rep, ..Default::default() });
    let r = panel_regress(&outcome, &shocks, &RegressionSpec::default()).unwrap();
    r.get("shock").unwrap()
}

#[test]
fn planted_response_is_covered_in_monte_carlo() {
    let pop = population(200);
    let beta = -0.04;
    let covered = (0..100)
        .filter(|&rep| {
            let (b, se) = regression_replication(&pop, rep, beta);
            (b - beta).abs() <= 2.0 * se
        })
        .count();
    assert!(covered >= 90, "covered {covered} of 100");
}

#[test]
fn null_design_estimate_is_near_zero() {
    let pop = population(200);
    let (b, se) = regression_replication(&pop, 1_000, 0.0);
    assert!(b.abs() <= 2.0 * se, "{b} ± {se}");
}
