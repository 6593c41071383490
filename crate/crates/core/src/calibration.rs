//! Simulated method of moments over a subset of the model parameters.
//!
//! Every objective evaluation simulates the same firms from the same
//! per-firm streams (common random numbers), so the objective is a
//! deterministic function of the parameter vector.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};
use crate::optim::{nelder_mead, NelderMeadSettings};
use crate::params::ModelParams;
use crate::population::{compute_moments, simulate_population, MomentSet, CURVE_POINTS};
use crate::search::SearchConfig;
use crate::targets::MomentTargets;

/// Objective value returned for parameter vectors outside the bounds.
pub const OUT_OF_BOUNDS_PENALTY: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FreeParam {
    #[serde(rename = "f_s")]
    SearchCost,
    #[serde(rename = "mu")]
    SearchConvexity,
    #[serde(rename = "p_hi")]
    PriceUpper,
    #[serde(rename = "sigma_z")]
    ProductivityScale,
    #[serde(rename = "f_e")]
    ExportCost,
    #[serde(rename = "varphi")]
    VarietyExponent,
}

impl FreeParam {
    pub fn name(self) -> &'static str {
        match self {
            FreeParam::SearchCost => "f_s",
            FreeParam::SearchConvexity => "mu",
            FreeParam::PriceUpper => "p_hi",
            FreeParam::ProductivityScale => "sigma_z",
            FreeParam::ExportCost => "f_e",
            FreeParam::VarietyExponent => "varphi",
        }
    }

    pub fn get(self, p: &ModelParams<f64>) -> f64 {
        match self {
            FreeParam::SearchCost => p.f_s,
            FreeParam::SearchConvexity => p.mu,
            FreeParam::PriceUpper => p.p_hi,
            FreeParam::ProductivityScale => p.sigma_z,
            FreeParam::ExportCost => p.f_e,
            FreeParam::VarietyExponent => p.varphi,
        }
    }

    pub fn set(self, p: &mut ModelParams<f64>, v: f64) {
        match self {
            FreeParam::SearchCost => p.f_s = v,
            FreeParam::SearchConvexity => p.mu = v,
            FreeParam::PriceUpper => p.p_hi = v,
            FreeParam::ProductivityScale => p.sigma_z = v,
            FreeParam::ExportCost => p.f_e = v,
            FreeParam::VarietyExponent => p.varphi = v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreeParameter {
    pub name: FreeParam,
    pub lower: f64,
    pub upper: f64,
    /// Start value; the bound midpoint when absent.
    #[serde(default)]
    pub start: Option<f64>,
    /// Search over `ln` of the parameter (requires `lower > 0`).
    #[serde(default)]
    pub log_scale: bool,
}

impl FreeParameter {
    fn to_unit(&self, v: f64) -> f64 {
        if self.log_scale {
            (v.ln() - self.lower.ln()) / (self.upper.ln() - self.lower.ln())
        } else {
            (v - self.lower) / (self.upper - self.lower)
        }
    }

    fn value_at(&self, u: f64) -> f64 {
        if self.log_scale {
            (self.lower.ln() + u * (self.upper.ln() - self.lower.ln())).exp()
        } else {
            self.lower + u * (self.upper - self.lower)
        }
    }

    /// Midpoint of the bounds in the search coordinates.
    pub fn midpoint(&self) -> f64 {
        self.value_at(0.5)
    }
}

/// Non-negative weights on each squared residual; the curve weight applies
/// to the sum of squared gaps over the curve points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentWeights {
    pub mean_k: f64,
    pub median_k: f64,
    pub mean_top_share: f64,
    pub exporter_share: f64,
    pub import_curve: f64,
}

impl MomentWeights {
    /// Inverse squared targets on the scalar moments (relative errors) and a
    /// unit weight on the curve.
    pub fn relative(t: &MomentTargets) -> Self {
        let inv = |x: f64| if x != 0.0 { 1.0 / (x * x) } else { 1.0 };
        Self {
            mean_k: inv(t.mean_k),
            median_k: inv(t.median_k),
            mean_top_share: inv(t.mean_top_share),
            exporter_share: inv(t.exporter_share),
            import_curve: 1.0,
        }
    }

    fn scaled(&self, c: f64) -> Self {
        Self {
            mean_k: c * self.mean_k,
            median_k: c * self.median_k,
            mean_top_share: c * self.mean_top_share,
            exporter_share: c * self.exporter_share,
            import_curve: c * self.import_curve,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationProblem {
    pub free: Vec<FreeParameter>,
    pub base: ModelParams<f64>,
    pub targets: MomentTargets,
    pub weights: MomentWeights,
    pub n_firms: usize,
    #[serde(default)]
    pub search: SearchConfig,
    #[serde(default)]
    pub minimizer: NelderMeadSettings,
}

impl CalibrationProblem {
    /// The five calibrated parameters against the reference moments, started
    /// from the bound midpoints.
    pub fn reference() -> Self {
        let targets = MomentTargets::reference();
        let fp = |name, lower, upper| FreeParameter { name, lower, upper, start: None, log_scale: true };
        Self {
            free: vec![
                fp(FreeParam::SearchCost, 1e-3, 5.0),
                fp(FreeParam::SearchConvexity, 0.05, 5.0),
                fp(FreeParam::PriceUpper, 0.6, 10.0),
                fp(FreeParam::ProductivityScale, 0.01, 1.0),
                fp(FreeParam::ExportCost, 1e-4, 1.0),
            ],
            base: ModelParams::reference(),
            weights: MomentWeights::relative(&targets),
            targets,
            n_firms: 5_000,
            search: SearchConfig::default(),
            minimizer: NelderMeadSettings::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ModelError::InvalidConfig(m));
        if self.free.is_empty() {
            return bad("no free parameters".into());
        }
        for f in &self.free {
            if !(f.lower.is_finite() && f.upper.is_finite() && f.lower < f.upper) {
                return bad(format!("bounds of {} must be finite and ordered", f.name.name()));
            }
            if f.log_scale && f.lower <= 0.0 {
                return bad(format!("log-scale bounds of {} must be positive", f.name.name()));
            }
            let s = self.start_value(f);
            if !(s >= f.lower && s <= f.upper) {
                return bad(format!("start of {} outside its bounds", f.name.name()));
            }
        }
        let w = &self.weights;
        let ws = [w.mean_k, w.median_k, w.mean_top_share, w.exporter_share, w.import_curve];
        if ws.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) || ws.iter().all(|&x| x == 0.0) {
            return bad("weights must be non-negative and not all zero".into());
        }
        if self.targets.import_curve.len() != CURVE_POINTS {
            return bad(format!("target curve needs {CURVE_POINTS} points"));
        }
        if self.n_firms == 0 {
            return bad("n_firms must be positive".into());
        }
        self.search.validate()?;
        self.base.validate()
    }

    fn start_value(&self, f: &FreeParameter) -> f64 {
        f.start.unwrap_or_else(|| f.midpoint())
    }

    pub fn start(&self) -> Vec<f64> {
        self.free.iter().map(|f| self.start_value(f)).collect()
    }

    pub fn in_bounds(&self, theta: &[f64]) -> bool {
        theta.len() == self.free.len()
            && self.free.iter().zip(theta).all(|(f, &v)| v >= f.lower && v <= f.upper)
    }

    /// Base parameters with the free values substituted.
    pub fn params_at(&self, theta: &[f64]) -> ModelParams<f64> {
        let mut p = self.base;
        for (f, &v) in self.free.iter().zip(theta) {
            f.name.set(&mut p, v);
        }
        p
    }

    pub fn with_weights_scaled(&self, c: f64) -> Self {
        Self { weights: self.weights.scaled(c), ..self.clone() }
    }
}

/// Signed model-minus-target gaps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentResiduals {
    pub mean_k: f64,
    pub median_k: f64,
    pub mean_top_share: f64,
    pub exporter_share: f64,
    /// Sum of squared gaps over the curve.
    pub import_curve_sq: f64,
    /// Largest absolute gap over the curve.
    pub import_curve_max: f64,
}

impl MomentResiduals {
    pub fn new(m: &MomentSet, t: &MomentTargets) -> Self {
        let (mut sq, mut mx) = (0.0, 0.0_f64);
        for (a, b) in m.import_curve.iter().zip(&t.import_curve) {
            sq += (a - b).powi(2);
            mx = mx.max((a - b).abs());
        }
        Self {
            mean_k: m.mean_k - t.mean_k,
            median_k: m.median_k - t.median_k,
            mean_top_share: m.mean_top_share - t.mean_top_share,
            exporter_share: m.exporter_share - t.exporter_share,
            import_curve_sq: sq,
            import_curve_max: mx,
        }
    }

    pub fn objective(&self, w: &MomentWeights) -> f64 {
        w.mean_k * self.mean_k.powi(2)
            + w.median_k * self.median_k.powi(2)
            + w.mean_top_share * self.mean_top_share.powi(2)
            + w.exporter_share * self.exporter_share.powi(2)
            + w.import_curve * self.import_curve_sq
    }
}

/// One objective evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub index: usize,
    pub theta: Vec<f64>,
    pub objective: f64,
    pub in_bounds: bool,
    pub residuals: Option<MomentResiduals>,
}

/// Evaluates the SMM objective, returning the moments alongside.
pub fn evaluate(theta: &[f64], problem: &CalibrationProblem) -> Result<(f64, Option<(MomentSet, MomentResiduals)>)> {
    if !problem.in_bounds(theta) {
        let dist: f64 = problem
            .free
            .iter()
            .zip(theta)
            .map(|(f, &v)| ((f.lower - v).max(0.0) + (v - f.upper).max(0.0)).powi(2))
            .sum();
        return Ok((OUT_OF_BOUNDS_PENALTY * (1.0 + dist.min(1e6)), None));
    }
    let params = problem.params_at(theta);
    params.validate()?;
    let pop = simulate_population(&params, &problem.search, problem.n_firms)?;
    let moments = compute_moments(&pop)?;
    let res = MomentResiduals::new(&moments, &problem.targets);
    Ok((res.objective(&problem.weights), Some((moments, res))))
}

/// `Σ w_m (model_m − target_m)²`, or a large finite penalty outside bounds.
pub fn smm_objective(theta: &[f64], problem: &CalibrationProblem) -> Result<f64> {
    evaluate(theta, problem).map(|(v, _)| v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub names: Vec<String>,
    pub fitted: Vec<f64>,
    pub params: ModelParams<f64>,
    pub objective: f64,
    pub moments: MomentSet,
    pub residuals: MomentResiduals,
    pub evaluations: usize,
    pub converged: bool,
    pub log: Vec<Evaluation>,
}

impl CalibrationResult {
    /// Evaluation log as CSV: index, objective, in_bounds, then one column
    /// per free parameter.
    pub fn write_log_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["index".to_string(), "objective".into(), "in_bounds".into()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header)?;
        for e in &self.log {
            let mut row = vec![e.index.to_string(), format!("{:e}", e.objective), e.in_bounds.to_string()];
            row.extend(e.theta.iter().map(|v| format!("{v:e}")));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Nelder–Mead descent on the normalized (and optionally log-transformed)
/// free parameters.
pub fn calibrate(problem: &CalibrationProblem) -> Result<CalibrationResult> {
    problem.validate()?;
    let start = problem.start();
    let u0: Vec<f64> = problem.free.iter().zip(&start).map(|(f, &v)| f.to_unit(v)).collect();
    let mut log: Vec<Evaluation> = Vec::new();
    let mut failure: Option<ModelError> = None;
    let to_theta = |u: &[f64]| -> Vec<f64> {
        problem
            .free
            .iter()
            .zip(u)
            .map(|(f, &x)| if (0.0..=1.0).contains(&x) { f.value_at(x) } else { f.value_at(x.clamp(-1.0, 2.0)) })
            .collect()
    };
    let outcome = nelder_mead(
        |u| {
            let theta = to_theta(u);
            let inside = u.iter().all(|x| (0.0..=1.0).contains(x));
            let (value, res) = if inside {
                match evaluate(&theta, problem) {
                    Ok((v, r)) => (v, r.map(|(_, r)| r)),
                    Err(e) => {
                        failure.get_or_insert(e);
                        (f64::INFINITY, None)
                    }
                }
            } else {
                let over: f64 = u.iter().map(|x| ((-x).max(0.0) + (x - 1.0).max(0.0)).powi(2)).sum();
                (OUT_OF_BOUNDS_PENALTY * (1.0 + over), None)
            };
            log.push(Evaluation { index: log.len(), theta, objective: value, in_bounds: inside, residuals: res });
            value
        },
        &u0,
        &problem.minimizer,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    let fitted = to_theta(&outcome.x);
    let (objective, detail) = evaluate(&fitted, problem)?;
    let (moments, residuals) = detail.ok_or_else(|| {
        ModelError::InvalidConfig("minimizer returned an out-of-bounds point".into())
    })?;
    Ok(CalibrationResult {
        names: problem.free.iter().map(|f| f.name.name().to_string()).collect(),
        params: problem.params_at(&fitted),
        fitted,
        objective,
        moments,
        residuals,
        evaluations: outcome.evals,
        converged: outcome.converged,
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_problem() -> CalibrationProblem {
        let mut p = CalibrationProblem::reference();
        p.base = ModelParams::calibrated();
        p.n_firms = 200;
        p
    }

    #[test]
    fn out_of_bounds_is_finite_penalty() {
        let p = small_problem();
        let mut theta = p.start();
        theta[0] = -1.0;
        let v = smm_objective(&theta, &p).unwrap();
        assert!(v.is_finite() && v >= OUT_OF_BOUNDS_PENALTY);
    }

    #[test]
    fn self_targeting_gives_zero() {
        let mut p = small_problem();
        let theta = p.start();
        let pop = simulate_population(&p.params_at(&theta), &p.search, p.n_firms).unwrap();
        let m = compute_moments(&pop).unwrap();
        p.targets = MomentTargets {
            mean_k: m.mean_k,
            median_k: m.median_k,
            mean_top_share: m.mean_top_share,
            exporter_share: m.exporter_share,
            import_curve: m.import_curve.clone(),
        };
        assert_eq!(smm_objective(&theta, &p).unwrap(), 0.0);
    }

    #[test]
    fn objective_is_linear_in_weights() {
        let p = small_problem();
        let theta = p.start();
        let a = smm_objective(&theta, &p).unwrap();
        let b = smm_objective(&theta, &p.with_weights_scaled(2.0)).unwrap();
        assert!((b - 2.0 * a).abs() <= 1e-12 * b.abs());
    }

    #[test]
    fn validation_rejects_bad_problems() {
        let mut p = small_problem();
        p.free[0].lower = 10.0;
        assert!(p.validate().is_err());
        let mut p = small_problem();
        p.weights = p.weights.scaled(0.0);
        assert!(p.validate().is_err());
        let mut p = small_problem();
        p.targets.import_curve.pop();
        assert!(p.validate().is_err());
    }

    #[test]
    fn problem_json_round_trip() {
        let p = CalibrationProblem::reference();
        let s = serde_json::to_string(&p).unwrap();
        let q: CalibrationProblem = serde_json::from_str(&s).unwrap();
        assert_eq!(p, q);
    }
}
