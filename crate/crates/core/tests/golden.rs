//! Frozen values at the literature parameter point, evaluated in 30-digit
//! arithmetic from the primal closed forms.

#![allow(clippy::excessive_precision)]

use approx::assert_relative_eq;
use supsearch_core::search::search_fixed_cost;
use supsearch_core::statics::{bundle_price, export_threshold, solve_firm, unit_cost};
use supsearch_core::{Firm, Params};

#[test]
fn unit_cost_at_literature_point() {
    let p = Params::reference();
    assert_relative_eq!(unit_cost(p.w, 1.0, p.alpha, p.theta).unwrap(), 1.8, max_relative = 1e-14);
}

#[test]
fn three_variety_bundle() {
    let v = bundle_price(&[0.5, 1.0, 2.0], 0.75).unwrap();
    assert_relative_eq!(v, 0.478_544_551_189_274_55, max_relative = 1e-14);
}

#[test]
fn threshold_at_unit_cost_1_8() {
    let z = export_threshold(1.8, &Params::reference()).unwrap();
    assert_relative_eq!(z, 1.335_258_336_965_022_6, max_relative = 1e-14);
}

#[test]
fn two_supplier_firm() {
    let p = Params::reference();
    let o = solve_firm(&Firm::new(0, 0.5f64.exp(), vec![0.8, 1.5]), &p).unwrap();
    assert_relative_eq!(o.p_m, 0.763_208_266_787_007_4, max_relative = 1e-13);
    assert_relative_eq!(o.unit_cost, 1.694_832_796_534_765_6, max_relative = 1e-13);
    assert_relative_eq!(o.z_bar, 1.257_244_234_074_883_2, max_relative = 1e-13);
    assert!(o.exports);
    assert_relative_eq!(o.domestic.gross_profit, 0.073_362_051_902_412_78, max_relative = 1e-12);
    assert_relative_eq!(o.foreign.gross_profit, 0.014_491_269_511_587_71, max_relative = 1e-12);
    assert_relative_eq!(o.total_profit, 0.082_953_321_414_000_49, max_relative = 1e-12);
    assert_relative_eq!(o.top_share(), 0.868_278_878_312_323_1, max_relative = 1e-13);
}

#[test]
fn search_cost_with_two_suppliers() {
    let p = Params::reference();
    let c: f64 = search_fixed_cost(3, p.f_s, p.mu).unwrap();
    assert_relative_eq!(c, 0.007_010_580_266_326_708, max_relative = 1e-14);
}
