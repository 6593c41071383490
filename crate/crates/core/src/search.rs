//! Dynamic supplier search: fixed-cost schedule, expected payoff of one more
//! draw, stopping rule and the per-firm convergence loop.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{domain, ModelError, Result};
use crate::params::ModelParams;
use crate::quadrature::GaussLegendre;
use crate::scalar::{log_add_exp, Real};
use crate::statics::{log_variety_index, profit_from_index, variety_exponent, Firm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    pub quadrature_nodes: usize,
    pub max_rounds: usize,
    pub rng_seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self { quadrature_nodes: 64, max_rounds: 512, rng_seed: 20_240_601 }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.quadrature_nodes < 8 {
            return Err(ModelError::InvalidConfig("quadrature_nodes must be >= 8".into()));
        }
        if self.max_rounds < 1 {
            return Err(ModelError::InvalidConfig("max_rounds must be >= 1".into()));
        }
        Ok(())
    }
}

/// Random stream dedicated to one firm. Streams are indexed by firm id on a
/// common master seed, so the draws of a firm do not depend on how many
/// other firms are simulated or on the order they are processed in.
#[derive(Debug, Clone)]
pub struct FirmStream {
    rng: ChaCha8Rng,
    prices_drawn: usize,
}

impl FirmStream {
    pub fn new(master_seed: u64, firm_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(firm_id);
        Self { rng, prices_drawn: 0 }
    }

    /// Re-creates the stream of a simulated firm positioned right after its
    /// productivity draw and `prices_drawn` price draws.
    pub fn resume(master_seed: u64, firm_id: u64, prices_drawn: usize) -> Self {
        let mut s = Self::new(master_seed, firm_id);
        let _ = s.standard_normal();
        for _ in 0..prices_drawn {
            let _ = s.unit_uniform();
        }
        s
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Uniform on `[0, 1)`; supplier prices are affine in this draw so that
    /// common random numbers carry across changes in the price support.
    pub fn unit_uniform(&mut self) -> f64 {
        self.prices_drawn += 1;
        self.rng.random::<f64>()
    }

    pub fn supplier_price<T: Real>(&mut self, params: &ModelParams<T>) -> T {
        let u = T::lit(self.unit_uniform());
        params.p_lo + (params.p_hi - params.p_lo) * u
    }

    pub fn prices_drawn(&self) -> usize {
        self.prices_drawn
    }
}

/// Fixed cost of searching when the firm currently has `k` suppliers:
/// `f_s (k − 1)^mu`, zero for the first supplier.
pub fn search_fixed_cost<T: Real>(k: usize, f_s: T, mu: T) -> Result<T> {
    if k < 1 {
        return Err(domain("supplier count must be >= 1"));
    }
    if k == 1 {
        return Ok(T::zero());
    }
    Ok(f_s * (mu * T::lit((k - 1) as f64).ln()).exp())
}

/// Precomputed search problem for a parameter point: the quadrature rule
/// mapped onto the supplier price support.
#[derive(Debug, Clone)]
pub struct SearchProblem<T> {
    params: ModelParams<T>,
    /// `(φ/(φ−1)) ln p` at each node, with its probability weight.
    rule: Vec<(T, T)>,
    max_rounds: usize,
}

impl<T: Real> SearchProblem<T> {
    pub fn new(params: &ModelParams<T>, config: &SearchConfig) -> Result<Self> {
        params.validate()?;
        config.validate()?;
        let e = variety_exponent(params.varphi);
        let rule = if params.p_hi == params.p_lo {
            vec![(e * params.p_lo.ln(), T::one())]
        } else {
            GaussLegendre::<T>::new(config.quadrature_nodes)?
                .uniform_rule(params.p_lo, params.p_hi)
                .into_iter()
                .map(|(p, w)| (e * p.ln(), w))
                .collect()
        };
        Ok(Self { params: *params, rule, max_rounds: config.max_rounds })
    }

    pub fn params(&self) -> &ModelParams<T> {
        &self.params
    }

    pub fn max_rounds(&self) -> usize {
        self.max_rounds
    }

    /// Static profit of a firm with productivity `z` and log variety index.
    pub fn profit(&self, z: T, log_index: T) -> T {
        profit_from_index(z, log_index, &self.params)
    }

    /// Expected profit gain of adding one supplier drawn from the price
    /// distribution.
    pub fn payoff(&self, z: T, log_index: T) -> T {
        let current = self.profit(z, log_index);
        let expected = self.rule.iter().fold(T::zero(), |acc, &(lp, w)| {
            acc + w * self.profit(z, log_add_exp(log_index, lp))
        });
        expected - current
    }

    pub fn fixed_cost(&self, k: usize) -> T {
        search_fixed_cost(k, self.params.f_s, self.params.mu).expect("k >= 1")
    }

    /// Stopping rule: search iff `β/(1−β) π^S ≥ F^S(K)` at the current `K`.
    pub fn decide(&self, z: T, log_index: T, k: usize) -> (bool, T, T) {
        let payoff = self.payoff(z, log_index);
        let cost = self.fixed_cost(k);
        (self.params.discount_multiplier() * payoff >= cost, payoff, cost)
    }

    /// Runs the search loop on `firm`, appending every drawn supplier.
    pub fn converge(&self, firm: &mut Firm<T>, stream: &mut FirmStream) -> Result<SearchTrace> {
        firm.validate(&self.params)?;
        let mut log_index = log_variety_index(&firm.supplier_prices, self.params.varphi)?;
        let e = variety_exponent(self.params.varphi);
        let mut rounds = Vec::new();
        let mut hit_cap = false;
        loop {
            let k = firm.k();
            if rounds.len() >= self.max_rounds {
                hit_cap = true;
                break;
            }
            let (go, payoff, cost) = self.decide(firm.z, log_index, k);
            let drawn = if go {
                let p = stream.supplier_price(&self.params);
                log_index = log_add_exp(log_index, e * p.ln());
                firm.supplier_prices.push(p);
                Some(p.as_f64())
            } else {
                None
            };
            rounds.push(SearchRound {
                k_before: k,
                payoff: payoff.as_f64(),
                fixed_cost: cost.as_f64(),
                searched: go,
                drawn_price: drawn,
            });
            if !go {
                break;
            }
        }
        Ok(SearchTrace { firm_id: firm.id, rounds, terminal_k: firm.k(), hit_cap })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchRound {
    pub k_before: usize,
    pub payoff: f64,
    pub fixed_cost: f64,
    pub searched: bool,
    pub drawn_price: Option<f64>,
}

/// Sequence of stopping-rule evaluations of one firm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchTrace {
    pub firm_id: u64,
    pub rounds: Vec<SearchRound>,
    pub terminal_k: usize,
    /// The loop stopped at `max_rounds` rather than by the stopping rule.
    pub hit_cap: bool,
}

impl SearchTrace {
    pub fn searches(&self) -> usize {
        self.rounds.iter().filter(|r| r.searched).count()
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("trace serializes")
    }
}

pub fn expected_search_payoff<T: Real>(
    firm: &Firm<T>,
    params: &ModelParams<T>,
    config: &SearchConfig,
) -> Result<T> {
    firm.validate(params)?;
    let problem = SearchProblem::new(params, config)?;
    let li = log_variety_index(&firm.supplier_prices, params.varphi)?;
    Ok(problem.payoff(firm.z, li))
}

pub fn should_search<T: Real>(
    firm: &Firm<T>,
    params: &ModelParams<T>,
    config: &SearchConfig,
) -> Result<bool> {
    firm.validate(params)?;
    let problem = SearchProblem::new(params, config)?;
    let li = log_variety_index(&firm.supplier_prices, params.varphi)?;
    Ok(problem.decide(firm.z, li, firm.k()).0)
}

pub fn converge_supplier_set<T: Real>(
    firm: &mut Firm<T>,
    params: &ModelParams<T>,
    config: &SearchConfig,
    stream: &mut FirmStream,
) -> Result<SearchTrace> {
    SearchProblem::new(params, config)?.converge(firm, stream)
}
