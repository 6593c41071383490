//! Static problem of a single firm: CES demand, two-tier CES cost
//! minimization, markup pricing and export selection.
//!
//! Powers whose exponents blow up as `varphi` or `theta` approach one are
//! evaluated in log space.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::params::ModelParams;
use crate::scalar::{log_sum_exp, Real};

/// A firm: productivity plus the prices of its matched foreign suppliers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Firm<T> {
    pub id: u64,
    pub z: T,
    pub supplier_prices: Vec<T>,
}

impl<T: Real> Firm<T> {
    pub fn new(id: u64, z: T, supplier_prices: Vec<T>) -> Self {
        Self { id, z, supplier_prices }
    }

    pub fn k(&self) -> usize {
        self.supplier_prices.len()
    }

    pub fn validate(&self, params: &ModelParams<T>) -> Result<()> {
        if !(self.z > T::zero()) || !self.z.is_finite() {
            return Err(domain(format!("firm {}: productivity must be positive", self.id)));
        }
        if self.supplier_prices.is_empty() {
            return Err(domain(format!("firm {}: needs at least one supplier", self.id)));
        }
        // A relative slack absorbs prices that were scaled by a shock and back.
        let slack = T::lit(1e-12) * params.p_hi;
        for &p in &self.supplier_prices {
            if !(p >= params.p_lo - slack && p <= params.p_hi + slack) {
                return Err(domain(format!(
                    "firm {}: supplier price {:?} outside [{:?}, {:?}]",
                    self.id, p, params.p_lo, params.p_hi
                )));
            }
        }
        Ok(())
    }

    /// Index of the cheapest supplier (the top supplier by expenditure).
    pub fn top_supplier(&self) -> Option<usize> {
        self.supplier_prices
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).expect("finite prices"))
            .map(|(i, _)| i)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Market {
    Domestic,
    Foreign,
}

impl<T: Real> ModelParams<T> {
    fn market(&self, m: Market) -> (T, T, T) {
        match m {
            Market::Domestic => (self.tau_d, self.p_d, self.y_d),
            Market::Foreign => (self.tau_f, self.p_f, self.y_f),
        }
    }
}

/// Exponent `varphi / (varphi - 1)` applied to supplier prices in the bundle
/// price index.
#[inline]
pub fn variety_exponent<T: Real>(varphi: T) -> T {
    varphi / (varphi - T::one())
}

/// `ln Σ_k p_k^{φ/(φ−1)}`, the log variety index of a supplier set.
pub fn log_variety_index<T: Real>(supplier_prices: &[T], varphi: T) -> Result<T> {
    if supplier_prices.is_empty() {
        return Err(domain("bundle price needs at least one supplier"));
    }
    if !(varphi > T::zero() && varphi < T::one()) {
        return Err(domain("varphi must lie in (0, 1)"));
    }
    let e = variety_exponent(varphi);
    let mut logs = Vec::with_capacity(supplier_prices.len());
    for &p in supplier_prices {
        if !(p > T::zero()) || !p.is_finite() {
            return Err(domain(format!("supplier price must be positive, got {p:?}")));
        }
        logs.push(e * p.ln());
    }
    Ok(log_sum_exp(logs))
}

/// Bundle price from a log variety index.
#[inline]
pub fn bundle_price_from_index<T: Real>(log_index: T, varphi: T) -> T {
    (log_index / variety_exponent(varphi)).exp()
}

/// Price of the CES bundle of imported varieties,
/// `[Σ_k p_k^{φ/(φ−1)}]^{(φ−1)/φ}`.
pub fn bundle_price<T: Real>(supplier_prices: &[T], varphi: T) -> Result<T> {
    Ok(bundle_price_from_index(log_variety_index(supplier_prices, varphi)?, varphi))
}

/// First-tier unit cost `C(w, p_M)`.
///
/// `alpha` may be 0 or 1 (pure import bundle / pure labor).
pub fn unit_cost<T: Real>(w: T, p_m: T, alpha: T, theta: T) -> Result<T> {
    if !(w > T::zero()) || !(p_m > T::zero()) {
        return Err(domain("unit cost needs positive wage and bundle price"));
    }
    if !(alpha >= T::zero() && alpha <= T::one()) {
        return Err(domain("alpha must lie in [0, 1]"));
    }
    if !(theta > T::zero() && theta < T::one()) {
        return Err(domain("theta must lie in (0, 1)"));
    }
    let one = T::one();
    let a = one / (one - theta);
    let b = theta / (theta - one);
    // ln(α^a w^b) and ln((1−α)^a p_M^b); a zero weight drops its term.
    let term = |weight: T, price: T| {
        if weight == T::zero() {
            T::neg_infinity()
        } else {
            a * weight.ln() + b * price.ln()
        }
    };
    let lse = log_sum_exp([term(alpha, w), term(one - alpha, p_m)]);
    Ok((lse / b).exp())
}

/// Cost-minimizing factor demands for first-tier output `x_target`
/// (output before productivity scaling).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct InputDemands<T> {
    pub labor: T,
    pub bundle: T,
    /// Physical quantity bought from each supplier, in input order.
    pub supplier_quantities: Vec<T>,
}

pub fn input_demands<T: Real>(
    unit_cost: T,
    p_m: T,
    supplier_prices: &[T],
    x_target: T,
    params: &ModelParams<T>,
) -> Result<InputDemands<T>> {
    if !(x_target >= T::zero()) {
        return Err(domain("target output must be non-negative"));
    }
    if !(unit_cost > T::zero()) || !(p_m > T::zero()) {
        return Err(domain("unit cost and bundle price must be positive"));
    }
    let one = T::one();
    let a = one / (one - params.theta);
    let labor = (params.alpha * unit_cost / params.w).powf(a) * x_target;
    let bundle = ((one - params.alpha) * unit_cost / p_m).powf(a) * x_target;
    let s = one / (one - params.varphi);
    let supplier_quantities = supplier_prices
        .iter()
        .map(|&p| {
            if !(p > T::zero()) {
                return Err(domain("supplier price must be positive"));
            }
            Ok((s * (p_m.ln() - p.ln())).exp() * bundle)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(InputDemands { labor, bundle, supplier_quantities })
}

/// First-tier CES output `z [α L^θ + (1−α) M^θ]^{1/θ}`.
pub fn first_tier_output<T: Real>(z: T, labor: T, bundle: T, alpha: T, theta: T) -> T {
    let one = T::one();
    z * (alpha * labor.powf(theta) + (one - alpha) * bundle.powf(theta)).powf(one / theta)
}

/// Second-tier CES aggregate `[Σ m_k^φ]^{1/φ}`.
pub fn bundle_output<T: Real>(quantities: &[T], varphi: T) -> T {
    quantities
        .iter()
        .fold(T::zero(), |acc, &m| acc + m.powf(varphi))
        .powf(T::one() / varphi)
}

/// Productivity above which the export line covers its fixed cost.
pub fn export_threshold<T: Real>(unit_cost: T, params: &ModelParams<T>) -> Result<T> {
    if !(unit_cost > T::zero()) {
        return Err(domain("unit cost must be positive"));
    }
    let one = T::one();
    let rho = params.rho;
    let fixed = params.w * params.f_e;
    if fixed == T::zero() {
        return Ok(T::zero());
    }
    let log_bracket =
        rho * rho.ln() + fixed.ln() - rho * params.p_f.ln() - params.y_f.ln();
    Ok(params.tau_f * unit_cost / (rho - one) * (log_bracket / (rho - one)).exp())
}

/// Optimal quantity, price and gross operating profit of one line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct LineProfit<T> {
    pub quantity: T,
    pub price: T,
    pub gross_profit: T,
}

pub fn line_profit<T: Real>(
    z: T,
    unit_cost: T,
    market: Market,
    params: &ModelParams<T>,
) -> Result<LineProfit<T>> {
    if !(z > T::zero()) || !(unit_cost > T::zero()) {
        return Err(domain("line profit needs positive productivity and unit cost"));
    }
    let (tau, p_j, y_j) = params.market(market);
    let one = T::one();
    let rho = params.rho;
    let markup = rho / (rho - one);
    let mc = tau * unit_cost / z;
    let ln_scale = rho * p_j.ln() + y_j.ln() - rho * markup.ln();
    let quantity = (ln_scale - rho * mc.ln()).exp();
    let gross_profit = ((one - rho) * mc.ln() + ln_scale).exp() / (rho - one);
    Ok(LineProfit { quantity, price: markup * mc, gross_profit })
}

/// Allocation of one production line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct LineOutcome<T> {
    pub price: T,
    pub quantity: T,
    pub labor: T,
    pub bundle: T,
    pub supplier_quantities: Vec<T>,
    pub supplier_expenditures: Vec<T>,
    pub gross_profit: T,
}

impl<T: Real> LineOutcome<T> {
    fn inactive(k: usize) -> Self {
        let z = T::zero();
        Self {
            price: z,
            quantity: z,
            labor: z,
            bundle: z,
            supplier_quantities: vec![z; k],
            supplier_expenditures: vec![z; k],
            gross_profit: z,
        }
    }

    pub fn import_value(&self) -> T {
        self.supplier_expenditures.iter().fold(T::zero(), |a, &b| a + b)
    }
}

/// Solved static allocation of a firm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct FirmOutcome<T> {
    pub firm_id: u64,
    pub z: T,
    pub k: usize,
    pub p_m: T,
    pub unit_cost: T,
    pub z_bar: T,
    pub exports: bool,
    pub domestic: LineOutcome<T>,
    pub foreign: LineOutcome<T>,
    /// Domestic gross profit plus export profit net of the fixed cost when
    /// that is positive.
    pub total_profit: T,
}

impl<T: Real> FirmOutcome<T> {
    /// Import expenditure summed over both lines.
    pub fn import_value(&self) -> T {
        self.domestic.import_value() + self.foreign.import_value()
    }

    /// Total physical bundle `M` used across both lines.
    pub fn total_bundle(&self) -> T {
        self.domestic.bundle + self.foreign.bundle
    }

    pub fn export_quantity(&self) -> T {
        self.foreign.quantity
    }

    /// Expenditure share of each supplier (identical across lines).
    pub fn expenditure_shares(&self) -> Vec<T> {
        let line = if self.domestic.import_value() > T::zero() {
            &self.domestic
        } else {
            &self.foreign
        };
        let total = line.import_value();
        line.supplier_expenditures.iter().map(|&e| e / total).collect()
    }

    pub fn top_share(&self) -> T {
        self.expenditure_shares()
            .into_iter()
            .fold(T::zero(), T::max)
    }

    pub fn to_record(&self) -> FirmRecord {
        FirmRecord {
            firm_id: self.firm_id,
            z: self.z.as_f64(),
            k: self.k,
            p_m: self.p_m.as_f64(),
            unit_cost: self.unit_cost.as_f64(),
            z_bar: self.z_bar.as_f64(),
            exports: self.exports,
            price_d: self.domestic.price.as_f64(),
            quantity_d: self.domestic.quantity.as_f64(),
            labor_d: self.domestic.labor.as_f64(),
            bundle_d: self.domestic.bundle.as_f64(),
            profit_d: self.domestic.gross_profit.as_f64(),
            price_f: self.foreign.price.as_f64(),
            quantity_f: self.foreign.quantity.as_f64(),
            labor_f: self.foreign.labor.as_f64(),
            bundle_f: self.foreign.bundle.as_f64(),
            profit_f: self.foreign.gross_profit.as_f64(),
            total_profit: self.total_profit.as_f64(),
            import_value: self.import_value().as_f64(),
            top_share: self.top_share().as_f64(),
        }
    }
}

/// Flat, stable serialization of a [`FirmOutcome`] (one CSV row).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirmRecord {
    pub firm_id: u64,
    pub z: f64,
    pub k: usize,
    pub p_m: f64,
    pub unit_cost: f64,
    pub z_bar: f64,
    pub exports: bool,
    pub price_d: f64,
    pub quantity_d: f64,
    pub labor_d: f64,
    pub bundle_d: f64,
    pub profit_d: f64,
    pub price_f: f64,
    pub quantity_f: f64,
    pub labor_f: f64,
    pub bundle_f: f64,
    pub profit_f: f64,
    pub total_profit: f64,
    pub import_value: f64,
    pub top_share: f64,
}

fn solve_line<T: Real>(
    firm: &Firm<T>,
    p_m: T,
    c: T,
    market: Market,
    params: &ModelParams<T>,
) -> Result<LineOutcome<T>> {
    let lp = line_profit(firm.z, c, market, params)?;
    // Inputs are sized for first-tier output before productivity scaling.
    let d = input_demands(c, p_m, &firm.supplier_prices, lp.quantity / firm.z, params)?;
    let supplier_expenditures = firm
        .supplier_prices
        .iter()
        .zip(&d.supplier_quantities)
        .map(|(&p, &m)| p * m)
        .collect();
    Ok(LineOutcome {
        price: lp.price,
        quantity: lp.quantity,
        labor: d.labor,
        bundle: d.bundle,
        supplier_quantities: d.supplier_quantities,
        supplier_expenditures,
        gross_profit: lp.gross_profit,
    })
}

/// Solves the static problem of a firm. At `z == z_bar` the firm exports.
pub fn solve_firm<T: Real>(firm: &Firm<T>, params: &ModelParams<T>) -> Result<FirmOutcome<T>> {
    firm.validate(params)?;
    solve_at_prices(firm, params)
}

/// [`solve_firm`] without the price-support check, for prices that moved
/// after matching (shocks, panel dynamics). Prices must still be positive.
pub fn solve_at_prices<T: Real>(firm: &Firm<T>, params: &ModelParams<T>) -> Result<FirmOutcome<T>> {
    if !(firm.z > T::zero()) || !firm.z.is_finite() {
        return Err(domain(format!("firm {}: productivity must be positive", firm.id)));
    }
    let p_m = bundle_price(&firm.supplier_prices, params.varphi)?;
    let c = unit_cost(params.w, p_m, params.alpha, params.theta)?;
    let z_bar = export_threshold(c, params)?;
    let exports = firm.z >= z_bar;
    let domestic = solve_line(firm, p_m, c, Market::Domestic, params)?;
    let foreign = if exports {
        solve_line(firm, p_m, c, Market::Foreign, params)?
    } else {
        LineOutcome::inactive(firm.k())
    };
    let net_export = if exports {
        (foreign.gross_profit - params.w * params.f_e).max(T::zero())
    } else {
        T::zero()
    };
    Ok(FirmOutcome {
        firm_id: firm.id,
        z: firm.z,
        k: firm.k(),
        p_m,
        unit_cost: c,
        z_bar,
        exports,
        total_profit: domestic.gross_profit + net_export,
        domestic,
        foreign,
    })
}

/// Total static profit `π_d + max(π_f − wF_e, 0)` given only the log variety
/// index; the hot path of the search problem.
pub fn profit_from_index<T: Real>(z: T, log_index: T, params: &ModelParams<T>) -> T {
    let p_m = bundle_price_from_index(log_index, params.varphi);
    // Inputs are valid by construction on this path.
    let c = unit_cost(params.w, p_m, params.alpha, params.theta).expect("valid unit cost inputs");
    let dom = line_profit(z, c, Market::Domestic, params).expect("valid line inputs");
    let fgn = line_profit(z, c, Market::Foreign, params).expect("valid line inputs");
    dom.gross_profit + (fgn.gross_profit - params.w * params.f_e).max(T::zero())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params() -> ModelParams<f64> {
        ModelParams::reference()
    }

    #[test]
    fn single_variety_bundle_is_its_price() {
        assert_relative_eq!(bundle_price(&[1.7], 0.75).unwrap(), 1.7, max_relative = 1e-14);
    }

    #[test]
    fn two_equal_varieties() {
        let v = bundle_price(&[1.0, 1.0], 0.75).unwrap();
        assert_relative_eq!(v, 2f64.powf(-1.0 / 3.0), max_relative = 1e-14);
    }

    #[test]
    fn bundle_price_errors() {
        assert!(bundle_price::<f64>(&[], 0.75).is_err());
        assert!(bundle_price(&[1.0, 0.0], 0.75).is_err());
        assert!(bundle_price(&[1.0, -2.0], 0.75).is_err());
    }

    #[test]
    fn extreme_varphi_does_not_overflow() {
        // exponent 0.999/(−0.001) ≈ −999 on p = 0.5 overflows a naive powf
        let v: f64 = bundle_price(&[0.5, 0.5, 4.0], 0.999).unwrap();
        assert!(v.is_finite() && v > 0.49 && v < 0.5);
    }

    #[test]
    fn unit_cost_corners() {
        assert_relative_eq!(unit_cost(1.0, 3.3, 1.0, 0.5).unwrap(), 1.0, max_relative = 1e-14);
        assert_relative_eq!(unit_cost(1.0, 1.0, 2.0 / 3.0, 0.5).unwrap(), 1.8, max_relative = 1e-13);
        assert_relative_eq!(unit_cost(1.0, 3.3, 0.0, 0.5).unwrap(), 3.3, max_relative = 1e-13);
        assert!(unit_cost(0.0, 1.0, 0.5, 0.5).is_err());
        assert!(unit_cost(1.0, -1.0, 0.5, 0.5).is_err());
    }

    #[test]
    fn hand_evaluated_input_demands() {
        let p = params();
        let d = input_demands(1.8, 1.0, &[1.0], 1.0, &p).unwrap();
        assert_relative_eq!(d.labor, 1.44, max_relative = 1e-12);
        assert_relative_eq!(d.bundle, 0.36, max_relative = 1e-12);
        assert_eq!(d.supplier_quantities, vec![d.bundle]);
        let x = first_tier_output(1.0, d.labor, d.bundle, p.alpha, p.theta);
        assert_relative_eq!(x, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn zero_output_needs_no_inputs() {
        let p = params();
        let d = input_demands(1.8, 0.8, &[0.9, 1.2], 0.0, &p).unwrap();
        assert_eq!(d.labor, 0.0);
        assert_eq!(d.bundle, 0.0);
        assert!(d.supplier_quantities.iter().all(|&m| m == 0.0));
        assert!(input_demands(1.8, 0.8, &[0.9], -1.0, &p).is_err());
    }

    #[test]
    fn export_threshold_cases() {
        let mut p = params();
        let zb = export_threshold(1.8, &p).unwrap();
        assert_relative_eq!(zb, 0.675 * 15.3125f64.powf(0.25), max_relative = 1e-12);
        assert_relative_eq!(export_threshold(3.6, &p).unwrap(), 2.0 * zb, max_relative = 1e-12);
        let gross = line_profit(zb, 1.8, Market::Foreign, &p).unwrap().gross_profit;
        assert_relative_eq!(gross, p.w * p.f_e, max_relative = 1e-10);
        p.f_e = 0.0;
        assert_eq!(export_threshold(1.8, &p).unwrap(), 0.0);
    }

    #[test]
    fn line_profit_hand_case() {
        let mut p = params();
        p.tau_f = 1.0;
        let lp = line_profit(1.0, 1.0, Market::Foreign, &p).unwrap();
        assert_relative_eq!(lp.quantity, 0.32768, max_relative = 1e-12);
        assert_relative_eq!(lp.gross_profit, 0.08192, max_relative = 1e-12);
        assert_relative_eq!(lp.price, 1.25, max_relative = 1e-12);
    }

    #[test]
    fn markup_identity_and_monotonicity() {
        let p = params();
        let mut last = 0.0;
        for i in 1..50 {
            let z = 0.1 * i as f64;
            let lp = line_profit(z, 1.3, Market::Foreign, &p).unwrap();
            let mc = p.tau_f * 1.3 / z;
            assert_relative_eq!(lp.price * lp.quantity - mc * lp.quantity, lp.gross_profit, max_relative = 1e-10);
            assert!(lp.gross_profit > last);
            last = lp.gross_profit;
        }
    }

    #[test]
    fn solve_firm_below_and_at_threshold() {
        let p = params();
        let c = unit_cost(1.0, 0.5, p.alpha, p.theta).unwrap();
        let zb = export_threshold(c, &p).unwrap();
        let low = solve_firm(&Firm::new(0, 0.5 * zb, vec![0.5]), &p).unwrap();
        assert!(!low.exports);
        assert_eq!(low.foreign.quantity, 0.0);
        assert_eq!(low.foreign.import_value(), 0.0);
        let at = solve_firm(&Firm::new(1, zb, vec![0.5]), &p).unwrap();
        assert!(at.exports);
        assert!(at.foreign.quantity > 0.0);
    }

    #[test]
    fn solve_firm_rejects_bad_firms() {
        let p = params();
        assert!(solve_firm(&Firm::new(0, 1.0, vec![]), &p).is_err());
        assert!(solve_firm(&Firm::new(0, 1.0, vec![0.1]), &p).is_err());
        assert!(solve_firm(&Firm::new(0, -1.0, vec![1.0]), &p).is_err());
    }

    #[test]
    fn shares_and_expenditure_accounting() {
        let p = params();
        let f = Firm::new(3, 2.0, vec![0.7, 1.9, 3.2, 0.55]);
        let o = solve_firm(&f, &p).unwrap();
        let s: f64 = o.expenditure_shares().iter().sum();
        assert_relative_eq!(s, 1.0, max_relative = 1e-12);
        for line in [&o.domestic, &o.foreign] {
            assert_relative_eq!(line.import_value(), o.p_m * line.bundle, max_relative = 1e-10);
            assert_relative_eq!(bundle_output(&line.supplier_quantities, p.varphi), line.bundle, max_relative = 1e-10);
        }
        assert_eq!(f.top_supplier(), Some(3));
        let shares = o.expenditure_shares();
        assert!(shares[3] > shares[0] && shares[0] > shares[1] && shares[1] > shares[2]);
    }

    #[test]
    fn profit_from_index_matches_solve_firm() {
        let p = params();
        let f = Firm::new(0, 1.9, vec![0.7, 2.5]);
        let o = solve_firm(&f, &p).unwrap();
        let li = log_variety_index(&f.supplier_prices, p.varphi).unwrap();
        assert_relative_eq!(profit_from_index(f.z, li, &p), o.total_profit, max_relative = 1e-12);
    }

    #[test]
    fn f32_evaluation_agrees_with_f64() {
        let p64 = params();
        let p32: ModelParams<f32> = p64.cast();
        let a = solve_firm(&Firm::new(0, 1.7, vec![0.8, 1.3]), &p64).unwrap();
        let b = solve_firm(&Firm::new(0, 1.7f32, vec![0.8, 1.3]), &p32).unwrap();
        assert!((a.total_profit - b.total_profit as f64).abs() / a.total_profit < 1e-5);
    }
}
