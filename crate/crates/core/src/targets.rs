//! Calibration targets: the reference model-side moments and a reference
//! distribution of imported value per firm.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::population::CURVE_POINTS;

/// Probabilities of the reported quantiles of imported value per firm.
pub const IMPORT_QUANTILE_PROBS: [f64; 8] = [0.05, 0.10, 0.25, 0.50, 0.75, 0.90, 0.95, 0.99];

/// Yearly quantiles (2000–2008, current dollars) of imported value per firm.
pub const IMPORT_QUANTILES: [[f64; 8]; 9] = [
    [910.0, 2_670.0, 11_230.0, 49_125.0, 236_965.0, 1_027_424.0, 2_445_182.0, 14_169_365.0],
    [895.0, 2_489.0, 10_178.0, 45_188.0, 213_848.0, 900_184.0, 2_264_536.0, 13_974_765.0],
    [450.0, 1_357.0, 6_012.0, 26_540.0, 125_914.0, 567_231.0, 1_537_635.0, 9_781_031.0],
    [621.0, 1_800.0, 7_755.0, 36_885.0, 180_887.0, 810_211.0, 2_041_917.0, 11_737_183.0],
    [625.0, 1_958.0, 9_060.0, 43_861.0, 221_329.0, 969_482.0, 2_439_342.0, 15_402_843.0],
    [500.0, 1_575.0, 8_234.0, 45_521.0, 236_030.0, 1_050_825.0, 2_679_588.0, 17_510_612.0],
    [438.0, 1_633.0, 9_525.0, 49_856.0, 260_259.0, 1_190_456.0, 2_984_414.0, 19_501_204.0],
    [890.0, 2_836.0, 14_490.0, 71_503.0, 356_030.0, 1_619_753.0, 3_943_917.0, 26_091_518.0],
    [1_259.0, 3_613.0, 17_910.0, 85_603.0, 420_694.0, 1_863_988.0, 4_556_231.0, 29_668_393.0],
];

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

/// Log-scale dispersion of a log-normal fitted to the yearly quantile table:
/// least squares of `ln(q_p / q_50)` on `Φ⁻¹(p)` through the origin, pooled
/// over years.
pub fn import_lognormal_sigma() -> f64 {
    let n = std_normal();
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for row in IMPORT_QUANTILES {
        let med = row[3];
        for (&p, &q) in IMPORT_QUANTILE_PROBS.iter().zip(row.iter()) {
            if p == 0.5 {
                continue;
            }
            let x = n.inverse_cdf(p);
            sxy += x * (q / med).ln();
            sxx += x * x;
        }
    }
    sxy / sxx
}

/// Lorenz curve of a log-normal with log-scale `sigma`:
/// `L(q) = Φ(Φ⁻¹(q) − σ)`.
pub fn lognormal_lorenz(sigma: f64, points: usize) -> Vec<f64> {
    let n = std_normal();
    (0..points)
        .map(|i| {
            let q = i as f64 / (points - 1) as f64;
            if i == 0 {
                0.0
            } else if i == points - 1 {
                1.0
            } else {
                n.cdf(n.inverse_cdf(q) - sigma)
            }
        })
        .collect()
}

/// Target values for the SMM objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentTargets {
    pub mean_k: f64,
    pub median_k: f64,
    pub mean_top_share: f64,
    pub exporter_share: f64,
    /// Cumulative import-share curve, [`CURVE_POINTS`] values.
    pub import_curve: Vec<f64>,
}

impl MomentTargets {
    /// Target moment values, with a log-normal curve for the import
    /// distribution.
    pub fn reference() -> Self {
        Self {
            mean_k: 6.0668,
            median_k: 2.0,
            mean_top_share: 0.6462,
            exporter_share: 0.102,
            import_curve: lognormal_lorenz(import_lognormal_sigma(), CURVE_POINTS),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fitted_sigma_is_in_expected_range() {
        let s = import_lognormal_sigma();
        assert!(s > 2.3 && s < 2.6, "sigma = {s}");
    }

    #[test]
    fn lorenz_is_monotone_and_below_diagonal() {
        let c = lognormal_lorenz(1.0, CURVE_POINTS);
        assert_eq!(c.len(), CURVE_POINTS);
        assert_eq!((c[0], c[100]), (0.0, 1.0));
        for i in 1..CURVE_POINTS {
            assert!(c[i] >= c[i - 1]);
            assert!(c[i] <= i as f64 / 100.0 + 1e-12);
        }
        // Gini of a log-normal is 2Φ(σ/√2) − 1
        let gini = 1.0 - 2.0 * c.windows(2).map(|w| 0.005 * (w[0] + w[1])).sum::<f64>();
        let n = std_normal();
        assert!((gini - (2.0 * n.cdf(1.0 / 2f64.sqrt()) - 1.0)).abs() < 5e-3);
    }
}
