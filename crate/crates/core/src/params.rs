//! Structural constants of the model.

use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};
use crate::scalar::Real;

/// Preferences, technology, search costs, distributions and market sizes.
///
/// Market price indices and demand sizes are exogenous; the domestic iceberg
/// multiplier is the multiplicative identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ModelParams<T> {
    /// Demand elasticity, > 1.
    pub rho: T,
    /// Labor weight in the first production tier.
    pub alpha: T,
    /// First-tier CES exponent (labor vs import bundle).
    pub theta: T,
    /// Second-tier CES exponent (across supplier varieties).
    pub varphi: T,
    pub tau_f: T,
    pub tau_d: T,
    pub w: T,
    /// Per-period export fixed cost, in labor units.
    pub f_e: T,
    /// Scale of the search fixed cost schedule.
    pub f_s: T,
    /// Convexity of the search fixed cost schedule.
    pub mu: T,
    pub beta: T,
    /// Location of log productivity.
    pub mu_z: T,
    /// Scale of log productivity.
    pub sigma_z: T,
    /// Lower bound of the supplier price support.
    pub p_lo: T,
    /// Upper bound of the supplier price support.
    pub p_hi: T,
    pub p_d: T,
    pub y_d: T,
    pub p_f: T,
    pub y_f: T,
}

impl<T: Real> ModelParams<T> {
    /// Literature values plus the reference calibrated point, with annual
    /// discounting `beta = 0.96`.
    pub fn reference() -> Self {
        let l = T::lit;
        Self {
            rho: l(5.0),
            alpha: l(2.0 / 3.0),
            theta: l(0.5),
            varphi: l(0.75),
            tau_f: l(1.5),
            tau_d: l(1.0),
            w: l(1.0),
            f_e: l(0.0049),
            f_s: l(0.0046),
            mu: l(0.6079),
            beta: l(0.96),
            mu_z: l(0.5),
            sigma_z: l(0.0267),
            p_lo: l(0.5),
            p_hi: l(4.4974),
            p_d: l(1.0),
            y_d: l(1.0),
            p_f: l(1.0),
            y_f: l(1.0),
        }
    }

    /// Same fixed parameters as [`ModelParams::reference`] with the five
    /// calibrated parameters replaced by this crate's own SMM fit to the
    /// reference model moments (see `calibration`).
    pub fn calibrated() -> Self {
        let l = T::lit;
        Self {
            f_s: l(CALIBRATED[0]),
            mu: l(CALIBRATED[1]),
            p_hi: l(CALIBRATED[2]),
            sigma_z: l(CALIBRATED[3]),
            f_e: l(CALIBRATED[4]),
            ..Self::reference()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let z = T::zero();
        let one = T::one();
        let mut bad = Vec::new();
        let all = [
            ("rho", self.rho),
            ("alpha", self.alpha),
            ("theta", self.theta),
            ("varphi", self.varphi),
            ("tau_f", self.tau_f),
            ("tau_d", self.tau_d),
            ("w", self.w),
            ("f_e", self.f_e),
            ("f_s", self.f_s),
            ("mu", self.mu),
            ("beta", self.beta),
            ("mu_z", self.mu_z),
            ("sigma_z", self.sigma_z),
            ("p_lo", self.p_lo),
            ("p_hi", self.p_hi),
            ("p_d", self.p_d),
            ("y_d", self.y_d),
            ("p_f", self.p_f),
            ("y_f", self.y_f),
        ];
        for (name, v) in all {
            if !v.is_finite() {
                bad.push(format!("{name} is not finite"));
            }
        }
        if !(self.rho > one) {
            bad.push("rho must exceed 1".into());
        }
        if !(self.alpha >= z && self.alpha <= one) {
            bad.push("alpha must lie in [0, 1]".into());
        }
        if !(self.theta > z && self.theta < one) {
            bad.push("theta must lie in (0, 1)".into());
        }
        if !(self.varphi > z && self.varphi < one) {
            bad.push("varphi must lie in (0, 1)".into());
        }
        if !(self.tau_f >= one) {
            bad.push("tau_f must be >= 1".into());
        }
        if !(self.tau_d > z) {
            bad.push("tau_d must be positive".into());
        }
        if !(self.w > z) {
            bad.push("w must be positive".into());
        }
        if !(self.f_e >= z) {
            bad.push("f_e must be >= 0".into());
        }
        if !(self.f_s >= z) {
            bad.push("f_s must be >= 0".into());
        }
        if !(self.mu > z) {
            bad.push("mu must be positive".into());
        }
        if !(self.beta > z && self.beta < one) {
            bad.push("beta must lie in (0, 1)".into());
        }
        if !(self.sigma_z >= z) {
            bad.push("sigma_z must be >= 0".into());
        }
        // p_lo == p_hi is accepted as a point-mass price distribution.
        if !(self.p_lo > z && self.p_lo <= self.p_hi) {
            bad.push("need 0 < p_lo <= p_hi".into());
        }
        for (name, v) in [("p_d", self.p_d), ("y_d", self.y_d), ("p_f", self.p_f), ("y_f", self.y_f)] {
            if !(v > z) {
                bad.push(format!("{name} must be positive"));
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(ModelError::InvalidParams(bad.join("; ")))
        }
    }

    /// `β / (1 − β)`: present value of a permanent per-period gain that
    /// starts next period.
    pub fn discount_multiplier(&self) -> T {
        self.beta / (T::one() - self.beta)
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        let c = |v: T| U::lit(v.as_f64());
        ModelParams {
            rho: c(self.rho),
            alpha: c(self.alpha),
            theta: c(self.theta),
            varphi: c(self.varphi),
            tau_f: c(self.tau_f),
            tau_d: c(self.tau_d),
            w: c(self.w),
            f_e: c(self.f_e),
            f_s: c(self.f_s),
            mu: c(self.mu),
            beta: c(self.beta),
            mu_z: c(self.mu_z),
            sigma_z: c(self.sigma_z),
            p_lo: c(self.p_lo),
            p_hi: c(self.p_hi),
            p_d: c(self.p_d),
            y_d: c(self.y_d),
            p_f: c(self.p_f),
            y_f: c(self.y_f),
        }
    }
}

impl<T: Real> Default for ModelParams<T> {
    fn default() -> Self {
        Self::calibrated()
    }
}

/// `[f_s, mu, p_hi, sigma_z, f_e]` from this crate's SMM run against the
/// reference model-side moments.
pub const CALIBRATED: [f64; 5] = [0.248900, 0.478354, 2.465785, 0.293181, 0.117734];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_and_calibrated_points_are_valid() {
        ModelParams::<f64>::reference().validate().unwrap();
        ModelParams::<f64>::calibrated().validate().unwrap();
        ModelParams::<f32>::calibrated().validate().unwrap();
    }

    #[test]
    fn invariant_violations_are_reported() {
        let mut p = ModelParams::<f64>::reference();
        p.rho = 0.9;
        p.p_hi = 0.1;
        let err = p.validate().unwrap_err().to_string();
        assert!(err.contains("rho"));
        assert!(err.contains("p_lo"));
    }

    #[test]
    fn json_round_trip() {
        let p = ModelParams::<f64>::calibrated();
        let s = serde_json::to_string(&p).unwrap();
        let q: ModelParams<f64> = serde_json::from_str(&s).unwrap();
        assert_eq!(p, q);
    }
}
