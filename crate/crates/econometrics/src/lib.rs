//! Data-side tools for firm-to-supplier import panels: synthetic panels
//! generated from the model, network statistics, shift-share supplier
//! shocks and fixed-effects panel regressions.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod facts;
pub mod fe;
pub mod granular;
pub mod panel;
pub mod prices;
pub mod regress;
pub mod shiftshare;
pub mod survival;
pub mod synth;

pub use error::{EconError, Result};
pub use panel::{Transaction, TransactionPanel};
