//! Quadrature search payoff against a Monte Carlo expectation.

mod common;

use common::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use supsearch_core::search::{expected_search_payoff, SearchConfig};
use supsearch_core::Params;

#[test]
fn quadrature_payoff_matches_monte_carlo() {
    let p = Params::calibrated();
    let cfg = SearchConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for firm in payoff_points(&p, &mut rng) {
        let quad = expected_search_payoff(&firm, &p, &cfg).unwrap();
        let mc = mc_payoff(&firm, &p, 1_000_000, &mut rng);
        assert!(mc > 0.0);
        worst = worst.max(rel(quad, mc));
    }
    assert!(worst < 5e-3, "worst relative gap {worst:e}");
}
