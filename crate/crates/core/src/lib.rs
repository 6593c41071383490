//! Heterogeneous-firm trade model with search frictions in the market for
//! foreign suppliers.
//!
//! The static problem ([`statics`]), the search problem ([`search`]) and
//! population simulation are generic over the scalar type; calibration and
//! shock experiments run in `f64`.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod error;
pub mod optim;
pub mod params;
pub mod population;
pub mod quadrature;
pub mod scalar;
pub mod search;
pub mod shock;
pub mod statics;
pub mod targets;

pub use error::{ModelError, Result};
pub use scalar::Real;

/// Model parameters in double precision.
pub type Params = params::ModelParams<f64>;
/// Model parameters in single precision.
pub type Params32 = params::ModelParams<f32>;
pub type Firm = statics::Firm<f64>;
pub type FirmOutcome = statics::FirmOutcome<f64>;
pub type Population = population::Population<f64>;
