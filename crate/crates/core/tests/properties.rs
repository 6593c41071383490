use proptest::prelude::*;

use supsearch_core::population::{lorenz_curve, simulate_population};
use supsearch_core::search::{expected_search_payoff, search_fixed_cost, SearchConfig};
use supsearch_core::statics::{bundle_price, solve_firm, unit_cost};
use supsearch_core::{Firm, Params, Params32};

fn prices() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.5f64..4.0, 1..8)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn another_variety_lowers_the_bundle_price(ps in prices(), extra in 0.01f64..10.0, varphi in 0.1f64..0.9) {
        let before = bundle_price(&ps, varphi).unwrap();
        let mut more = ps.clone();
        more.push(extra);
        prop_assert!(bundle_price(&more, varphi).unwrap() < before);
    }

    #[test]
    fn unit_cost_is_linearly_homogeneous(w in 0.2f64..5.0, pm in 0.2f64..5.0, s in 0.1f64..10.0,
                                         alpha in 0.0f64..=1.0, theta in 0.05f64..0.95) {
        let a = unit_cost(w, pm, alpha, theta).unwrap();
        let b = unit_cost(s * w, s * pm, alpha, theta).unwrap();
        prop_assert!((b - s * a).abs() <= 1e-12 * b);
    }

    #[test]
    fn search_cost_is_non_decreasing(k in 1usize..200, fs in 0.0f64..5.0, mu in 0.0f64..5.0) {
        let a: f64 = search_fixed_cost(k, fs, mu).unwrap();
        let b: f64 = search_fixed_cost(k + 1, fs, mu).unwrap();
        prop_assert!(b >= a);
    }

    #[test]
    fn payoff_is_non_negative_and_falls_with_more_suppliers(ln_z in -1.0f64..2.0, ps in prices()) {
        let p = Params::calibrated();
        let ps: Vec<f64> = ps.into_iter().map(|x| x.clamp(p.p_lo, p.p_hi)).collect();
        let cfg = SearchConfig::default();
        let firm = Firm::new(0, ln_z.exp(), ps.clone());
        let a = expected_search_payoff(&firm, &p, &cfg).unwrap();
        prop_assert!(a >= 0.0);
        let mut more = ps;
        more.push(p.p_lo);
        let b = expected_search_payoff(&Firm::new(0, ln_z.exp(), more), &p, &cfg).unwrap();
        prop_assert!(b <= a * (1.0 + 1e-12));
    }

    #[test]
    fn expenditure_adds_up(ln_z in -1.0f64..2.0, ps in prices()) {
        let p = Params::calibrated();
        let ps: Vec<f64> = ps.into_iter().map(|x| x.clamp(p.p_lo, p.p_hi)).collect();
        let o = solve_firm(&Firm::new(0, ln_z.exp(), ps), &p).unwrap();
        let spend: f64 = o.domestic.supplier_expenditures.iter().chain(&o.foreign.supplier_expenditures).sum();
        prop_assert!((spend - o.import_value()).abs() <= 1e-12 * o.import_value());
        prop_assert!((spend - o.p_m * o.total_bundle()).abs() <= 1e-10 * spend);
        let shares: f64 = o.expenditure_shares().iter().sum();
        prop_assert!((shares - 1.0).abs() < 1e-12);
        prop_assert!(o.exports == (o.z >= o.z_bar));
    }

    #[test]
    fn single_precision_tracks_double(ps in prices(), varphi in 0.3f64..0.9) {
        let ps32: Vec<f32> = ps.iter().map(|&x| x as f32).collect();
        let a = bundle_price(&ps, varphi).unwrap();
        let b = bundle_price(&ps32, varphi as f32).unwrap() as f64;
        prop_assert!((a - b).abs() <= 1e-4 * a);
    }

    #[test]
    fn lorenz_curve_is_monotone_and_convex(v in prop::collection::vec(0.0f64..100.0, 1..300)) {
        prop_assume!(v.iter().sum::<f64>() > 0.0);
        let c = lorenz_curve(&v, 101);
        prop_assert_eq!(c[0], 0.0);
        prop_assert!((c[100] - 1.0).abs() < 1e-12);
        for w in c.windows(3) {
            prop_assert!(w[1] >= w[0] - 1e-15);
            prop_assert!(w[2] - w[1] >= w[1] - w[0] - 1e-12);
        }
    }
}

#[test]
fn generic_scalar_population_agrees() {
    let cfg = SearchConfig { rng_seed: 5, ..Default::default() };
    let a = simulate_population(&Params::calibrated(), &cfg, 100).unwrap();
    let b = simulate_population(&Params32::calibrated(), &cfg, 100).unwrap();
    let same = a.outcomes.iter().zip(&b.outcomes).filter(|(x, y)| x.k == y.k).count();
    assert!(same >= 95, "{same} of 100 firms agree on K");
}

#[test]
fn population_does_not_depend_on_thread_count() {
    let cfg = SearchConfig { rng_seed: 9, ..Default::default() };
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| simulate_population(&Params::calibrated(), &cfg, 300).unwrap())
    };
    let (a, b) = (run(1), run(4));
    assert_eq!(a.firms, b.firms);
    assert_eq!(a.traces, b.traces);
}
