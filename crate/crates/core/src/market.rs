//! Market configuration, bids, clearing outcomes and the supplier profit.
//!
//! Units are fixed throughout the crate: energy in MWh, money in k$, prices
//! in k$/MWh.

use serde::{Deserialize, Serialize};

use crate::distributions::GenerationModel;
use crate::error::{Error, Result};

/// Fixed inelastic demand, offer price cap and real-time shortfall penalty.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarketConfig {
    /// MWh
    pub demand: f64,
    /// k$/MWh
    pub price_cap: f64,
    /// k$/MWh charged on `(commitment - output)^+`
    pub penalty: f64,
}

impl MarketConfig {
    pub fn new(demand: f64, price_cap: f64, penalty: f64) -> Result<Self> {
        let config = MarketConfig {
            demand,
            price_cap,
            penalty,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.demand) {
            return Err(Error::InvalidConfig(format!(
                "demand must be positive, got {}",
                self.demand
            )));
        }
        if !positive(self.price_cap) {
            return Err(Error::InvalidConfig(format!(
                "price cap must be positive, got {}",
                self.price_cap
            )));
        }
        if !positive(self.penalty) {
            return Err(Error::InvalidConfig(format!(
                "penalty must be positive, got {}",
                self.penalty
            )));
        }
        Ok(())
    }

    /// Absolute slack used when comparing quantities against demand.
    pub(crate) fn qty_eps(&self) -> f64 {
        1e-12 * self.demand.max(1.0)
    }
}

/// A day-ahead offer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bid {
    pub price: f64,
    pub quantity: f64,
}

impl Bid {
    pub fn new(price: f64, quantity: f64) -> Self {
        Bid { price, quantity }
    }

    pub fn validate(&self, config: &MarketConfig) -> Result<()> {
        if !(self.price.is_finite() && (0.0..=config.price_cap).contains(&self.price)) {
            return Err(Error::Domain(format!(
                "bid price {} outside [0, {}]",
                self.price, config.price_cap
            )));
        }
        if !(self.quantity.is_finite() && self.quantity >= 0.0) {
            return Err(Error::Domain(format!(
                "bid quantity {} is negative",
                self.quantity
            )));
        }
        Ok(())
    }
}

/// A participant in merit-order dispatch: a real supplier or the shed-load
/// pseudo-supplier offering `demand` at the price cap.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Participant {
    Supplier(usize),
    ShedLoad,
}

/// Marginal-offer metadata from merit-order clearing.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MarginalInfo {
    /// Participants with positive commitment.
    pub dispatched: Vec<Participant>,
    /// Highest-priced dispatched participant.
    pub alpha: Option<Participant>,
    /// Lowest-priced participant left undispatched.
    pub beta: Option<Participant>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClearingOutcome {
    /// Price paid to each supplier; all equal under uniform mechanisms.
    pub prices: Vec<f64>,
    pub commitments: Vec<f64>,
    pub lost_load: f64,
    pub marginal: Option<MarginalInfo>,
}

impl ClearingOutcome {
    /// The uniform clearing price, if every supplier is paid the same.
    pub fn uniform_price(&self) -> Option<f64> {
        let first = *self.prices.first()?;
        self.prices.iter().all(|p| *p == first).then_some(first)
    }

    pub fn total_committed(&self) -> f64 {
        self.commitments.iter().sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfitReport {
    pub revenue: f64,
    pub expected_penalty_cost: f64,
    pub profit: f64,
}

/// Expected profit of committing `commitment` at `paid_price` and settling
/// shortfalls at `penalty`.
pub fn supplier_profit(
    model: &GenerationModel,
    commitment: f64,
    paid_price: f64,
    penalty: f64,
) -> Result<ProfitReport> {
    if !(commitment.is_finite() && commitment >= 0.0) {
        return Err(Error::Domain(format!(
            "commitment {commitment} is negative"
        )));
    }
    let revenue = commitment * paid_price;
    let expected_penalty_cost = penalty * model.expected_shortfall(commitment);
    Ok(ProfitReport {
        revenue,
        expected_penalty_cost,
        profit: revenue - expected_penalty_cost,
    })
}

/// Profit only; callers in hot loops use this after validating inputs once.
pub(crate) fn profit_value(
    model: &GenerationModel,
    commitment: f64,
    paid_price: f64,
    penalty: f64,
) -> f64 {
    commitment * paid_price - penalty * model.expected_shortfall(commitment)
}
