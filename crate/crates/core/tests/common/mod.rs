//! Brute-force numerical oracles for the closed-form statics, written from
//! the primal problems rather than from the crate's formulas.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use supsearch_core::{Firm, Params};

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Minimum of a unimodal function on `[a, b]` by golden-section search.
pub fn golden_min(mut a: f64, mut b: f64, f: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..300 {
        if (b - a).abs() <= 1e-15 * (a.abs() + b.abs()) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// Root of a function that changes sign on `[a, b]`.
pub fn bisect(mut a: f64, mut b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let fa = f(a);
    assert!(fa * f(b) <= 0.0, "root not bracketed");
    for _ in 0..400 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        if (f(m) > 0.0) == (fa > 0.0) {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Cheapest way to make one unit of `[α L^θ + (1−α) M^θ]^{1/θ}`: walk the
/// isoquant in labor and minimize spending.
pub fn unit_cost_oracle(w: f64, p_m: f64, alpha: f64, theta: f64) -> f64 {
    let l_max = alpha.powf(-1.0 / theta);
    let spend = |l: f64| {
        let m = ((1.0 - alpha * l.powf(theta)) / (1.0 - alpha)).max(0.0).powf(1.0 / theta);
        w * l + p_m * m
    };
    golden_min(0.0, l_max, spend).1
}

/// Cheapest unit of `(Σ m_k^φ)^{1/φ}`, built one variety at a time: split a
/// unit between the newest variety and the composite of the others.
pub fn bundle_price_oracle(prices: &[f64], varphi: f64) -> f64 {
    let mut composite = prices[0];
    for &p in &prices[1..] {
        let rest = composite;
        let spend = |m: f64| {
            let r = (1.0 - m.powf(varphi)).max(0.0).powf(1.0 / varphi);
            p * m + rest * r
        };
        composite = golden_min(0.0, 1.0, spend).1;
    }
    composite
}

/// Monopoly pricing against `q = Y P^ρ p^{−ρ}` with marginal cost `mc`:
/// a coarse price grid brackets the optimum, bisection on the sign of the
/// profit slope pins it.
pub fn monopoly_oracle(mc: f64, rho: f64, p_index: f64, y: f64) -> (f64, f64, f64) {
    let q = |p: f64| y * p_index.powf(rho) * p.powf(-rho);
    let profit = |p: f64| (p - mc) * q(p);
    let grid: Vec<f64> = (1..=400).map(|i| mc * (1.0 + i as f64 * 0.02)).collect();
    let best = (0..grid.len()).max_by(|&a, &b| profit(grid[a]).total_cmp(&profit(grid[b]))).unwrap();
    let lo = if best == 0 { mc } else { grid[best - 1] };
    let hi = grid[(best + 1).min(grid.len() - 1)];
    // d/dp of (p − mc) p^{−ρ}, scaled by p^{ρ+1}
    let slope = |p: f64| p - rho * (p - mc);
    let p = bisect(lo, hi, slope);
    (p, q(p), profit(p))
}

/// Productivity at which the export line just covers `w f_e`.
pub fn threshold_oracle(unit_cost: f64, tau_f: f64, rho: f64, p_f: f64, y_f: f64, fixed: f64) -> f64 {
    let gap = |ln_z: f64| monopoly_oracle(tau_f * unit_cost / ln_z.exp(), rho, p_f, y_f).2 - fixed;
    bisect(-15.0, 15.0, gap).exp()
}

pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Random admissible statics parameters around the calibrated point.
pub fn draw_params(rng: &mut ChaCha8Rng) -> Params {
    let mut p = Params::calibrated();
    p.rho = uniform(rng, 2.0, 8.0);
    p.alpha = uniform(rng, 0.05, 0.95);
    p.theta = uniform(rng, 0.05, 0.95);
    p.varphi = uniform(rng, 0.2, 0.9);
    p.tau_f = uniform(rng, 1.0, 2.5);
    p.w = uniform(rng, 0.5, 2.0);
    p.f_e = uniform(rng, 1e-3, 1.0);
    p.p_d = uniform(rng, 0.5, 2.0);
    p.y_d = uniform(rng, 0.5, 5.0);
    p.p_f = uniform(rng, 0.5, 2.0);
    p.y_f = uniform(rng, 0.5, 5.0);
    p
}

/// Static profit from the primal closed forms, computed in levels.
pub fn level_profit(z: f64, prices: &[f64], p: &Params) -> f64 {
    let e = p.varphi / (p.varphi - 1.0);
    let p_m = prices.iter().map(|x| x.powf(e)).sum::<f64>().powf(1.0 / e);
    let b = p.theta / (p.theta - 1.0);
    let a = 1.0 / (1.0 - p.theta);
    let c = (p.alpha.powf(a) * p.w.powf(b) + (1.0 - p.alpha).powf(a) * p_m.powf(b)).powf(1.0 / b);
    let rho = p.rho;
    let line = |tau: f64, pj: f64, yj: f64| {
        yj * pj.powf(rho) * (tau * c / z).powf(1.0 - rho) * rho.powf(-rho) * (rho - 1.0).powf(rho - 1.0)
    };
    line(p.tau_d, p.p_d, p.y_d) + (line(p.tau_f, p.p_f, p.y_f) - p.w * p.f_e).max(0.0)
}

/// Stratified Monte Carlo gain from one more uniform price draw: one
/// uniform draw in each of `n` equal cells.
pub fn mc_payoff(firm: &Firm, p: &Params, n: usize, rng: &mut ChaCha8Rng) -> f64 {
    let base = level_profit(firm.z, &firm.supplier_prices, p);
    let mut prices = firm.supplier_prices.clone();
    prices.push(0.0);
    let width = p.p_hi - p.p_lo;
    let mut acc = 0.0;
    for i in 0..n {
        let u = (i as f64 + rng.random::<f64>()) / n as f64;
        *prices.last_mut().unwrap() = p.p_lo + u * width;
        acc += level_profit(firm.z, &prices, p) - base;
    }
    acc / n as f64
}

/// The 20 payoff test points: productivity quantiles from −2 to 2 standard
/// deviations, 1 to 6 suppliers at uniform prices.
pub fn payoff_points(p: &Params, rng: &mut ChaCha8Rng) -> Vec<Firm> {
    (0..20)
        .map(|i| {
            let q = -2.0 + 4.0 * i as f64 / 19.0;
            let z = (p.mu_z + p.sigma_z * q).exp();
            let k = 1 + i % 6;
            let prices: Vec<f64> = (0..k).map(|_| uniform(rng, p.p_lo, p.p_hi)).collect();
            Firm::new(i as u64, z, prices)
        })
        .collect()
}
