//! Clearing and equilibrium analysis for day-ahead electricity markets with
//! variable renewable suppliers settled against a real-time shortfall penalty.
//!
//! Three pricing mechanisms are modelled:
//!
//! - uniform pricing ([`up`]): one clearing price from the merit order;
//! - pay-as-bid ([`pab`]): each dispatched supplier is paid its own offer;
//! - regulated uniform pricing ([`rup`]): suppliers report their supply
//!   curves `y_i(p)` and the operator clears where they meet demand.
//!
//! Units: energy in MWh, money in k$, prices in k$/MWh.

// `!(x > 0.0)` is used on purpose so that NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod distributions;
pub mod error;
pub mod experiments;
pub mod game;
pub mod ingest;
pub mod market;
pub mod merit_order;
pub mod pab;
mod quadrature;
pub mod rup;
pub mod scenario;
pub mod up;

pub use distributions::{GenerationModel, PlottingPosition};
pub use error::{Error, Result};
pub use market::{Bid, ClearingOutcome, MarketConfig, Participant, ProfitReport};
pub use merit_order::TieBreakPolicy;
