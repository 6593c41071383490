//! One function per subcommand. Each reads its settings, runs the model or
//! pipeline and stages its artifacts.

use serde::Serialize;
use serde_json::{json, Value};

use supsearch_core::calibration::calibrate;
use supsearch_core::population::{compute_moments, simulate_population, CURVE_POINTS};
use supsearch_core::shock::{apply_top_supplier_shock, sensitivity_sweep, write_sweep_csv};
use supsearch_core::targets::MomentTargets;
use supsearch_econometrics::facts::{stylized_facts, PeriodFacts};
use supsearch_econometrics::fe::fe_extract;
use supsearch_econometrics::granular::granular_residual;
use supsearch_econometrics::prices::{price_changes, PriceDefinition};
use supsearch_econometrics::regress::{import_quantity_outcome, panel_regress, planted_outcome};
use supsearch_econometrics::shiftshare::build_shock;
use supsearch_econometrics::survival::{persistence_stats, survival_stats, LinkClass};
use supsearch_econometrics::synth::generate_synthetic_panel;
use supsearch_econometrics::TransactionPanel;

use crate::artifacts::OutputDir;
use crate::config::{Command, Emit, Settings};
use crate::CliError;

/// The slice of the settings recorded in each artifact's metadata.
pub fn snapshot(command: Command, s: &Settings) -> Value {
    let v = serde_json::to_value(s).expect("settings serialize");
    let keys: &[&str] = match command {
        Command::Simulate => &["base", "params", "search", "simulate"],
        Command::Calibrate => &["calibration"],
        Command::Shock => &["base", "params", "search", "simulate", "shock"],
        Command::Sensitivity => &["base", "params", "search", "shock", "sensitivity"],
        Command::Synthgen => &["base", "params", "search", "synthgen", "synth"],
        Command::Facts => &["inputs", "facts"],
        Command::Shiftshare => &["inputs", "shiftshare"],
        Command::Regress => &["inputs", "regress"],
    };
    Value::Object(keys.iter().map(|k| (k.to_string(), v[*k].clone())).collect())
}

pub fn dispatch(command: Command, s: &Settings, emit: Emit, out: &mut OutputDir) -> Result<(), CliError> {
    match command {
        Command::Simulate => simulate(s, emit, out),
        Command::Calibrate => calibrate_cmd(s, emit, out),
        Command::Shock => shock(s, emit, out),
        Command::Sensitivity => sensitivity(s, emit, out),
        Command::Synthgen => synthgen(s, emit, out),
        Command::Facts => facts(s, emit, out),
        Command::Shiftshare => shiftshare(s, emit, out),
        Command::Regress => regress(s, emit, out),
    }
}

fn csv_rows<T: Serialize>(rows: &[T]) -> impl FnOnce(&mut Vec<u8>) -> Result<(), CliError> + '_ {
    move |buf| {
        let mut w = csv::Writer::from_writer(buf);
        for r in rows {
            w.serialize(r).map_err(|e| CliError::Runtime(e.to_string()))?;
        }
        w.flush().map_err(|e| CliError::Runtime(e.to_string()))?;
        Ok(())
    }
}

#[derive(Serialize)]
struct CurvePoint {
    q: f64,
    model: f64,
    target: f64,
}

fn curve_rows(model: &[f64], target: &[f64]) -> Vec<CurvePoint> {
    model
        .iter()
        .zip(target)
        .enumerate()
        .map(|(i, (&m, &t))| CurvePoint { q: i as f64 / (CURVE_POINTS - 1) as f64, model: m, target: t })
        .collect()
}

fn simulate(s: &Settings, emit: Emit, out: &mut OutputDir) -> Result<(), CliError> {
    let pop = simulate_population(&s.params, &s.search, s.simulate.n_firms)?;
    let m = compute_moments(&pop)?;
    let targets = MomentTargets::reference();
    if emit.csv {
        out.csv("firms.csv", "firms", |b| pop.write_firm_csv(b).map_err(Into::into))?;
        out.csv("import_curve.csv", "import_curve", csv_rows(&curve_rows(&m.import_curve, &targets.import_curve)))?;
    }
    if emit.json {
        out.json(
            "moments.json",
            &json!({
                "n_firms": m.n_firms,
                "mean_k": m.mean_k,
                "median_k": m.median_k,
                "mean_top_share": m.mean_top_share,
                "exporter_share": m.exporter_share,
                "import_curve": m.import_curve,
                "capped_firms": pop.capped(),
            }),
        )?;
    }
    if s.simulate.traces {
        out.lines("traces.jsonl", pop.traces.iter().map(|t| t.to_json_line()))?;
    }
    Ok(())
}

fn calibrate_cmd(s: &Settings, emit: Emit, out: &mut OutputDir) -> Result<(), CliError> {
    let r = calibrate(&s.calibration)?;
    if emit.csv {
        out.csv("calibration_log.csv", "calibration_log", |b| r.write_log_csv(b).map_err(Into::into))?;
        out.csv(
            "import_curve.csv",
            "import_curve",
            csv_rows(&curve_rows(&r.moments.import_curve, &s.calibration.targets.import_curve)),
        )?;
    }
    if emit.json {
        out.json(
            "calibration.json",
            &json!({
                "names": r.names,
                "fitted": r.fitted,
                "params": r.params,
                "objective": r.objective,
                "evaluations": r.evaluations,
                "converged": r.converged,
                "moments": {
                    "mean_k": r.moments.mean_k,
                    "median_k": r.moments.median_k,
                    "mean_top_share": r.moments.mean_top_share,
                    "exporter_share": r.moments.exporter_share,
                },
                "residuals": r.residuals,
            }),
        )?;
    }
    Ok(())
}

fn shock(s: &Settings, emit: Emit, out: &mut OutputDir) -> Result<(), CliError> {
    let pop = simulate_population(&s.params, &s.search, s.simulate.n_firms)?;
    let curve = apply_top_supplier_shock(&pop, &s.shock)?;
    if emit.csv {
        out.csv("impact.csv", "impact", |b| curve.write_csv(b).map_err(Into::into))?;
    }
    if emit.json {
        out.json(
            "impact_summary.json",
            &json!({ "summary": curve.summary, "import_drop_by_tercile": curve.import_drop_by_tercile() }),
        )?;
    }
    Ok(())
}

fn sensitivity(s: &Settings, emit: Emit, out: &mut OutputDir) -> Result<(), CliError> {
    let mut rows = Vec::new();
    for (axis, grid) in s.sensitivity.axes()? {
        rows.extend(sensitivity_sweep(&s.params, &s.search, s.sensitivity.n_firms, axis, &grid, &s.shock)?);
    }
    if emit.csv {
        out.csv("sweep.csv", "sweep", |b| write_sweep_csv(&rows, b).map_err(Into::into))?;
    }
    if emit.json {
        out.json("sweep.json", &rows)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct EffectRow {
    id: u32,
    period: i32,
    log_value: f64,
}

fn synthgen(s: &Settings, emit: Emit, out: &mut OutputDir) -> Result<(), CliError> {
    let pop = simulate_population(&s.params, &s.search, s.synthgen.n_firms)?;
    let synth = generate_synthetic_panel(&pop, &s.synth)?;
    let effects = |m: &std::collections::BTreeMap<(u32, i32), f64>| -> Vec<EffectRow> {
        m.iter().map(|(&(id, period), &v)| EffectRow { id, period, log_value: v }).collect()
    };
    // the panel is the product of this command, so it is written whatever
    // the emit flags say
    out.csv("panel.csv", "transactions", |b| synth.panel.write_csv(b).map_err(Into::into))?;
    if emit.csv {
        out.csv("truth_supplier_effects.csv", "truth_supplier_effects", csv_rows(&effects(&synth.truth.log_gamma)))?;
        out.csv("truth_firm_effects.csv", "truth_firm_effects", csv_rows(&effects(&synth.truth.log_firm)))?;
        out.csv("links.csv", "links", csv_rows(&synth.truth.links))?;
    }
    if emit.json {
        out.json(
            "synthgen.json",
            &json!({
                "n_records": synth.panel.len(),
                "n_links": synth.truth.links.len(),
                "periods": synth.panel.periods(),
            }),
        )?;
    }
    Ok(())
}

fn load_panel(s: &Settings) -> Result<TransactionPanel, CliError> {
    let path = s
        .inputs
        .panel
        .as_ref()
        .ok_or_else(|| CliError::Validation("inputs.panel is required for this command".into()))?;
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::Validation(format!("cannot open panel {}: {e}", path.display())))?;
    TransactionPanel::read_csv(file).map_err(|e| CliError::Validation(format!("panel {}: {e}", path.display())))
}

#[derive(Serialize)]
struct FactsRow {
    period: String,
    n_firms: usize,
    k_mean: f64,
    k_median: f64,
    k_p75: f64,
    k_p90: f64,
    k_p95: f64,
    k_p99: f64,
    top_mean: f64,
    top_p10: f64,
    top_p25: f64,
    top_p50: f64,
    top_p75: f64,
    top_p90: f64,
    new_link_firm_share: Option<f64>,
    new_link_import_share: Option<f64>,
}

impl From<&PeriodFacts> for FactsRow {
    fn from(f: &PeriodFacts) -> Self {
        Self {
            period: f.period.map_or_else(|| "pooled".to_string(), |p| p.to_string()),
            n_firms: f.n_firms,
            k_mean: f.suppliers.mean,
            k_median: f.suppliers.median,
            k_p75: f.suppliers.p75,
            k_p90: f.suppliers.p90,
            k_p95: f.suppliers.p95,
            k_p99: f.suppliers.p99,
            top_mean: f.top_share.mean,
            top_p10: f.top_share.p10,
            top_p25: f.top_share.p25,
            top_p50: f.top_share.p50,
            top_p75: f.top_share.p75,
            top_p90: f.top_share.p90,
            new_link_firm_share: f.new_link_firm_share,
            new_link_import_share: f.new_link_import_share,
        }
    }
}

#[derive(Serialize)]
struct SurvivalRow {
    horizon: usize,
    class: &'static str,
    n: usize,
    frequency: f64,
    constant: f64,
    constant_se: f64,
    dummy: Option<f64>,
    dummy_se: Option<f64>,
    dummy_fe: Option<f64>,
    dummy_fe_se: Option<f64>,
}

#[derive(Serialize)]
struct PersistenceRow {
    horizon: usize,
    n_unconditional: usize,
    unconditional: f64,
    n_conditional: usize,
    conditional: f64,
}

#[derive(Serialize)]
struct GranularRow {
    k: usize,
    q: usize,
    n_periods: usize,
    slope: f64,
    r2: f64,
    adj_r2: f64,
    degenerate: bool,
}

fn facts(s: &Settings, emit: Emit, out: &mut OutputDir) -> Result<(), CliError> {
    let panel = load_panel(s)?;
    let f = &s.facts;
    let report = stylized_facts(&panel, f.burn_in);
    let mut fact_rows: Vec<FactsRow> = report.per_period.iter().map(FactsRow::from).collect();
    fact_rows.push(FactsRow::from(&report.pooled));

    let mut survival = Vec::new();
    let mut persistence = Vec::new();
    let mut skipped = Vec::new();
    for &h in &f.horizons {
        for (class, name) in [(LinkClass::All, "all"), (LinkClass::Top, "top"), (LinkClass::New, "new")] {
            match survival_stats(&panel, h, class, f.burn_in) {
                Ok(r) => {
                    let dummy = r.with_dummy.as_ref().and_then(|d| d.get(name));
                    let dummy_fe = r.with_dummy_fe.as_ref().and_then(|d| d.get(name));
                    survival.push(SurvivalRow {
                        horizon: h,
                        class: name,
                        n: r.n,
                        frequency: r.frequency,
                        constant: r.constant.coef[0],
                        constant_se: r.constant.se[0],
                        dummy: dummy.map(|d| d.0),
                        dummy_se: dummy.map(|d| d.1),
                        dummy_fe: dummy_fe.map(|d| d.0),
                        dummy_fe_se: dummy_fe.map(|d| d.1),
                    });
                }
                Err(e) => skipped.push(format!("survival h={h} class={name}: {e}")),
            }
        }
        match persistence_stats(&panel, h) {
            Ok(r) => persistence.push(PersistenceRow {
                horizon: h,
                n_unconditional: r.n_unconditional,
                unconditional: r.unconditional,
                n_conditional: r.n_conditional,
                conditional: r.conditional,
            }),
            Err(e) => skipped.push(format!("persistence h={h}: {e}")),
        }
    }
    let mut granular = Vec::new();
    let mut granular_series = Vec::new();
    for &k in &f.granular_k {
        match granular_residual(&panel, k, f.granular_q.max(k)) {
            Ok(g) => {
                granular.push(GranularRow {
                    k,
                    q: g.q,
                    n_periods: g.series.len(),
                    slope: g.slope,
                    r2: g.r2,
                    adj_r2: g.adj_r2,
                    degenerate: g.degenerate,
                });
                granular_series.push(g);
            }
            Err(e) => skipped.push(format!("granular k={k}: {e}")),
        }
    }
    if emit.csv {
        out.csv("facts.csv", "facts", csv_rows(&fact_rows))?;
        out.csv("survival.csv", "survival", csv_rows(&survival))?;
        out.csv("persistence.csv", "persistence", csv_rows(&persistence))?;
        out.csv("granular.csv", "granular", csv_rows(&granular))?;
    }
    if emit.json {
        out.json("facts.json", &json!({ "facts": report, "granular": granular_series, "skipped": skipped }))?;
    }
    Ok(())
}

fn shiftshare(s: &Settings, emit: Emit, out: &mut OutputDir) -> Result<(), CliError> {
    let panel = load_panel(s)?;
    if s.shiftshare.definitions.is_empty() {
        return Err(CliError::Validation("shiftshare.definitions is empty".into()));
    }
    let mut reports = Vec::new();
    for &def in &s.shiftshare.definitions {
        let tag = tag(def);
        let pc = price_changes(&panel, def);
        let fe = fe_extract(&pc, &s.shiftshare.fe)?;
        let shocks = build_shock(&fe, &panel, def);
        if emit.csv {
            out.csv(&format!("supplier_effects_{tag}.csv"), "supplier_effects", |b| {
                fe.write_gamma_csv(b).map_err(Into::into)
            })?;
            out.csv(&format!("shocks_{tag}.csv"), "supplier_shocks", |b| shocks.write_csv(b).map_err(Into::into))?;
            out.csv(&format!("shock_stats_{tag}.csv"), "supplier_shock_stats", |b| {
                shocks.write_stats_csv(b).map_err(Into::into)
            })?;
        }
        reports.push(json!({
            "definition": def,
            "records": pc.records.len(),
            "rejected": pc.rejected,
            "components": fe.components.len(),
            "singletons": fe.singletons(),
            "sweeps": fe.sweeps,
            "converged": fe.converged,
            "dense_gap": fe.dense_gap,
            "stats": shocks.stats(),
        }));
    }
    if emit.json {
        out.json("shiftshare.json", &reports)?;
    }
    Ok(())
}

fn tag(def: PriceDefinition) -> &'static str {
    match def {
        PriceDefinition::LogDiff => "log_diff",
        PriceDefinition::PctDiff => "pct_diff",
    }
}

fn regress(s: &Settings, emit: Emit, out: &mut OutputDir) -> Result<(), CliError> {
    let panel = load_panel(s)?;
    let r = &s.regress;
    let pc = price_changes(&panel, r.definition);
    let fe = fe_extract(&pc, &r.fe)?;
    let shocks = build_shock(&fe, &panel, r.definition);
    let outcome = match &r.planted {
        Some(p) => planted_outcome(&shocks, p),
        None => import_quantity_outcome(&panel, r.level),
    };
    let result = panel_regress(&outcome, &shocks, &r.spec)?;
    if emit.csv {
        out.csv("regression.csv", "regression", |b| result.write_csv(b).map_err(Into::into))?;
    }
    if emit.json {
        out.json("regression.json", &result)?;
    }
    Ok(())
}
