//! Uniform pricing: zero-price quantity competition, general price/quantity
//! offers cleared by merit order, equilibrium constructors and unilateral
//! deviation verifiers.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::GenerationModel;
use crate::error::{Error, Result};
use crate::market::{profit_value, Bid, ClearingOutcome, MarketConfig, Participant};
use crate::merit_order::{self, TieBreakPolicy};

/// How the demand is shared when equilibrium quantities are not unique.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpSplit {
    /// `q_i = D * y_i(cap) / Σ y_j(cap)`
    #[default]
    Proportional,
    /// Equal shares, capped at `y_i(cap)` with the excess spread over the rest.
    Equal,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Deviation {
    pub supplier: usize,
    pub bid: Bid,
    pub gain: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum DeviationGrid {
    Quantity {
        step: f64,
    },
    Joint {
        price_levels: usize,
        quantity_points: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    Fail,
}

/// Result of a unilateral-deviation search around a bid profile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumCertificate {
    pub profile: Vec<Bid>,
    /// Largest profit gain found, floored at zero.
    pub epsilon: f64,
    pub tolerance: f64,
    pub grid: DeviationGrid,
    pub verdict: Verdict,
    pub worst_deviation: Option<Deviation>,
}

impl EquilibriumCertificate {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

fn check_models(models: &[GenerationModel]) -> Result<()> {
    if models.is_empty() {
        return Err(Error::InvalidConfig(
            "at least one supplier is required".into(),
        ));
    }
    Ok(())
}

fn check_len(what: &str, len: usize, models: &[GenerationModel]) -> Result<()> {
    if len != models.len() {
        return Err(Error::InvalidConfig(format!(
            "{what} has {len} entries for {} suppliers",
            models.len()
        )));
    }
    Ok(())
}

/// Clears zero-price quantity offers.
///
/// Total offers up to demand (inclusive: the price is right-continuous at
/// `Σq = D`) clear at the cap and are dispatched in full; any excess drives
/// the price to zero and demand is allocated by `policy`.
pub fn clear_up_zero(
    quantities: &[f64],
    config: &MarketConfig,
    policy: TieBreakPolicy,
) -> Result<ClearingOutcome> {
    if let Some(q) = quantities.iter().find(|q| !(q.is_finite() && **q >= 0.0)) {
        return Err(Error::Domain(format!("bid quantity {q} is negative")));
    }
    let n = quantities.len();
    let total: f64 = quantities.iter().sum();
    if total <= config.demand + config.qty_eps() {
        return Ok(ClearingOutcome {
            prices: vec![config.price_cap; n],
            commitments: quantities.to_vec(),
            lost_load: (config.demand - total).max(0.0),
            marginal: None,
        });
    }
    let bids: Vec<Bid> = quantities.iter().map(|&q| Bid::new(0.0, q)).collect();
    let dispatch = merit_order::allocate(&bids, config, policy)?;
    Ok(ClearingOutcome {
        prices: vec![0.0; n],
        commitments: dispatch.commitments,
        lost_load: dispatch.lost_load,
        marginal: Some(dispatch.marginal),
    })
}

/// Merit-order clearing of general offers; every dispatched supplier is paid
/// the marginal price.
pub fn clear_up_general(
    bids: &[Bid],
    config: &MarketConfig,
    policy: TieBreakPolicy,
) -> Result<ClearingOutcome> {
    let dispatch = merit_order::allocate(bids, config, policy)?;
    let price = merit_order::clearing_price(&dispatch, bids, config)?;
    Ok(ClearingOutcome {
        prices: vec![price; bids.len()],
        commitments: dispatch.commitments,
        lost_load: dispatch.lost_load,
        marginal: Some(dispatch.marginal),
    })
}

fn capped_equal_shares(caps: &[f64], demand: f64) -> Vec<f64> {
    let mut order: Vec<usize> = (0..caps.len()).collect();
    order.sort_by(|&a, &b| caps[a].total_cmp(&caps[b]));
    let mut shares = vec![0.0; caps.len()];
    let mut remaining = demand;
    for (pos, &i) in order.iter().enumerate() {
        let fair = remaining / (caps.len() - pos) as f64;
        shares[i] = caps[i].min(fair);
        remaining -= shares[i];
    }
    shares
}

fn optimal_at_cap(models: &[GenerationModel], config: &MarketConfig) -> Result<Vec<f64>> {
    models
        .iter()
        .map(|m| m.optimal_commitment(config.price_cap, config.penalty))
        .collect()
}

/// Zero-price equilibrium quantities with proportional shares.
pub fn construct_up_equilibrium(
    models: &[GenerationModel],
    config: &MarketConfig,
) -> Result<Vec<Bid>> {
    construct_up_equilibrium_with(models, config, UpSplit::Proportional)
}

/// Zero-price equilibrium quantities.
///
/// In shortage (`Σ y_i(cap) <= D`) every supplier offers `y_i(cap)`. Otherwise
/// the offers sum exactly to demand with `q_i <= y_i(cap)`, so the price sits
/// at the cap; `split` picks one member of that continuum.
pub fn construct_up_equilibrium_with(
    models: &[GenerationModel],
    config: &MarketConfig,
    split: UpSplit,
) -> Result<Vec<Bid>> {
    check_models(models)?;
    config.validate()?;
    let caps = optimal_at_cap(models, config)?;
    let total: f64 = caps.iter().sum();
    let quantities = if total <= config.demand {
        caps
    } else {
        match split {
            UpSplit::Proportional => caps.iter().map(|y| config.demand * y / total).collect(),
            UpSplit::Equal => capped_equal_shares(&caps, config.demand),
        }
    };
    Ok(quantities.into_iter().map(|q| Bid::new(0.0, q)).collect())
}

fn push_in(points: &mut Vec<f64>, v: f64, lo: f64, hi: f64) {
    if v.is_finite() {
        points.push(v.clamp(lo, hi));
    }
}

fn dedup_sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

fn best_deviation(candidates: impl IntoIterator<Item = Deviation>) -> Option<Deviation> {
    candidates
        .into_iter()
        .fold(None, |best: Option<Deviation>, d| match best {
            Some(b) if b.gain >= d.gain => Some(b),
            _ => Some(d),
        })
}

fn certificate(
    profile: Vec<Bid>,
    worst: Option<Deviation>,
    tolerance: f64,
    grid: DeviationGrid,
) -> EquilibriumCertificate {
    let epsilon = worst.map_or(0.0, |d| d.gain.max(0.0));
    EquilibriumCertificate {
        profile,
        epsilon,
        tolerance,
        grid,
        verdict: if epsilon <= tolerance {
            Verdict::Pass
        } else {
            Verdict::Fail
        },
        worst_deviation: worst.filter(|d| d.gain > 0.0),
    }
}

/// Searches unilateral quantity deviations of a zero-price profile.
///
/// Each supplier's candidates are a `grid_step` mesh over `[0, X̄_i]` plus the
/// points where its profit jumps or peaks: `0`, `y_i(cap)`, the residual
/// `D - Σ_{k≠i} q_k` and the residual ± `grid_step`.
pub fn verify_quantity_equilibrium(
    profile: &[f64],
    models: &[GenerationModel],
    config: &MarketConfig,
    grid_step: f64,
    tolerance: f64,
    policy: TieBreakPolicy,
) -> Result<EquilibriumCertificate> {
    check_models(models)?;
    check_len("profile", profile.len(), models)?;
    if !(grid_step.is_finite() && grid_step > 0.0) {
        return Err(Error::Domain(format!(
            "grid step must be positive, got {grid_step}"
        )));
    }
    let base = clear_up_zero(profile, config, policy)?;
    let base_profit: Vec<f64> = (0..models.len())
        .map(|i| {
            profit_value(
                &models[i],
                base.commitments[i],
                base.prices[i],
                config.penalty,
            )
        })
        .collect();

    let per_supplier: Vec<Option<Deviation>> = (0..models.len())
        .into_par_iter()
        .map(|i| -> Result<Option<Deviation>> {
            let hi = models[i].support_hi();
            let others: f64 = profile
                .iter()
                .enumerate()
                .filter(|(k, _)| *k != i)
                .map(|(_, q)| q)
                .sum();
            let residual = config.demand - others;
            let steps = (hi / grid_step).floor() as usize;
            let mut points: Vec<f64> = (0..=steps).map(|k| k as f64 * grid_step).collect();
            points.push(hi);
            for v in [
                0.0,
                models[i].optimal_commitment(config.price_cap, config.penalty)?,
                residual,
                residual - grid_step,
                residual + grid_step,
            ] {
                push_in(&mut points, v, 0.0, hi);
            }
            let mut deviated = profile.to_vec();
            let mut found = Vec::with_capacity(points.len());
            for q in dedup_sorted(points) {
                deviated[i] = q;
                let out = clear_up_zero(&deviated, config, policy)?;
                let profit = profit_value(
                    &models[i],
                    out.commitments[i],
                    out.prices[i],
                    config.penalty,
                );
                found.push(Deviation {
                    supplier: i,
                    bid: Bid::new(0.0, q),
                    gain: profit - base_profit[i],
                });
            }
            Ok(best_deviation(found))
        })
        .collect::<Result<_>>()?;

    let profile_bids = profile.iter().map(|&q| Bid::new(0.0, q)).collect();
    Ok(certificate(
        profile_bids,
        best_deviation(per_supplier.into_iter().flatten()),
        tolerance,
        DeviationGrid::Quantity { step: grid_step },
    ))
}

fn general_profits(
    bids: &[Bid],
    models: &[GenerationModel],
    config: &MarketConfig,
    policy: TieBreakPolicy,
) -> Result<Vec<f64>> {
    match clear_up_general(bids, config, policy) {
        Ok(out) => Ok((0..bids.len())
            .map(|i| {
                profit_value(
                    &models[i],
                    out.commitments[i],
                    out.prices[i],
                    config.penalty,
                )
            })
            .collect()),
        Err(Error::NoClearing) => Ok(vec![0.0; bids.len()]),
        Err(e) => Err(e),
    }
}

/// Searches unilateral price-and-quantity deviations of a general profile.
///
/// Candidate prices are `price_levels` uniform levels on `[0, cap]` plus every
/// rival price and its immediate neighbours; candidate quantities are
/// `quantity_points` uniform points on `[0, X̄_i]` plus `y_i` at every
/// candidate price, rival quantities and the residual demand.
pub fn verify_bid_equilibrium(
    bids: &[Bid],
    models: &[GenerationModel],
    config: &MarketConfig,
    price_levels: usize,
    quantity_points: usize,
    tolerance: f64,
    policy: TieBreakPolicy,
) -> Result<EquilibriumCertificate> {
    check_models(models)?;
    check_len("profile", bids.len(), models)?;
    if price_levels < 2 || quantity_points < 2 {
        return Err(Error::Domain(
            "deviation grid needs at least 2 prices and 2 quantities".into(),
        ));
    }
    let cap = config.price_cap;
    let nudge = 1e-6 * cap;
    let base_profit = general_profits(bids, models, config, policy)?;

    let per_supplier: Vec<Option<Deviation>> = (0..models.len())
        .into_par_iter()
        .map(|i| -> Result<Option<Deviation>> {
            let hi = models[i].support_hi();
            let mut prices: Vec<f64> = (0..price_levels)
                .map(|k| cap * k as f64 / (price_levels - 1) as f64)
                .collect();
            prices.push(bids[i].price);
            for (k, b) in bids.iter().enumerate() {
                if k != i {
                    for v in [b.price, b.price - nudge, b.price + nudge] {
                        push_in(&mut prices, v, 0.0, cap);
                    }
                }
            }
            let prices = dedup_sorted(prices);

            let others: f64 = bids
                .iter()
                .enumerate()
                .filter(|(k, _)| *k != i)
                .map(|(_, b)| b.quantity)
                .sum();
            let residual = config.demand - others;
            let mut quantities: Vec<f64> = (0..quantity_points)
                .map(|k| hi * k as f64 / (quantity_points - 1) as f64)
                .collect();
            quantities.push(bids[i].quantity.min(hi));
            let step = hi / (quantity_points - 1) as f64;
            for v in [residual, residual - step, residual + step] {
                push_in(&mut quantities, v, 0.0, hi);
            }
            for (k, b) in bids.iter().enumerate() {
                if k != i {
                    push_in(&mut quantities, b.quantity, 0.0, hi);
                }
            }
            for &p in &prices {
                push_in(
                    &mut quantities,
                    models[i].optimal_commitment(p, config.penalty)?,
                    0.0,
                    hi,
                );
            }
            let quantities = dedup_sorted(quantities);

            let mut deviated = bids.to_vec();
            let mut found = Vec::with_capacity(prices.len() * quantities.len());
            for &p in &prices {
                for &q in &quantities {
                    deviated[i] = Bid::new(p, q);
                    let profit = general_profits(&deviated, models, config, policy)?[i];
                    found.push(Deviation {
                        supplier: i,
                        bid: deviated[i],
                        gain: profit - base_profit[i],
                    });
                }
            }
            Ok(best_deviation(found))
        })
        .collect::<Result<_>>()?;

    Ok(certificate(
        bids.to_vec(),
        best_deviation(per_supplier.into_iter().flatten()),
        tolerance,
        DeviationGrid::Joint {
            price_levels,
            quantity_points,
        },
    ))
}

/// Equilibrium in which a zero-priced subset `gamma` covers demand exactly
/// and the cheapest remaining offer sets the price.
///
/// `marginal` is the price-setting participant and `marginal_price` its
/// offer. With `Participant::ShedLoad` the price must be the cap and `gamma`
/// must hold every supplier, which gives the zero-price profile. Members of
/// `gamma` get quantities proportional to `min(y_i(marginal_price), q_j)`;
/// the marginal supplier offers its full support `X̄_j`; every other
/// supplier offers `y_k(cap)` at the cap.
pub fn construct_marginal_supplier_equilibrium(
    models: &[GenerationModel],
    config: &MarketConfig,
    gamma: &[usize],
    marginal: Participant,
    marginal_price: f64,
) -> Result<Vec<Bid>> {
    check_models(models)?;
    config.validate()?;
    let n = models.len();
    let mut in_gamma = vec![false; n];
    for &i in gamma {
        if i >= n {
            return Err(Error::Domain(format!("supplier {i} does not exist")));
        }
        in_gamma[i] = true;
    }
    if gamma.is_empty() {
        return Err(Error::Infeasible {
            condition: "(ii)",
            detail: "the zero-priced set is empty and cannot cover demand".into(),
        });
    }
    if !(marginal_price > 0.0 && marginal_price <= config.price_cap) {
        return Err(Error::Domain(format!(
            "marginal price {marginal_price} outside (0, {}]",
            config.price_cap
        )));
    }
    let marginal_qty = match marginal {
        Participant::ShedLoad => {
            if marginal_price != config.price_cap {
                return Err(Error::Domain(
                    "shed load is always offered at the price cap".into(),
                ));
            }
            if in_gamma.iter().any(|g| !g) {
                return Err(Error::Infeasible {
                    condition: "(i)",
                    detail: "with shed load marginal every supplier must be in the zero-priced set"
                        .into(),
                });
            }
            config.demand
        }
        Participant::Supplier(j) => {
            if j >= n {
                return Err(Error::Domain(format!("supplier {j} does not exist")));
            }
            if in_gamma[j] {
                return Err(Error::Domain(format!(
                    "marginal supplier {j} is inside the zero-priced set"
                )));
            }
            models[j].support_hi()
        }
    };

    let caps: Vec<f64> = gamma
        .iter()
        .map(|&i| {
            Ok(models[i]
                .optimal_commitment(marginal_price, config.penalty)?
                .min(marginal_qty))
        })
        .collect::<Result<_>>()?;
    let capacity: f64 = caps.iter().sum();
    if capacity < config.demand - config.qty_eps() {
        return Err(Error::Infeasible {
            condition: "(iii)",
            detail: format!(
                "zero-priced suppliers can cover at most {capacity} of demand {} at price {marginal_price}",
                config.demand
            ),
        });
    }

    let mut bids = models
        .iter()
        .map(|m| {
            Ok(Bid::new(
                config.price_cap,
                m.optimal_commitment(config.price_cap, config.penalty)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    for (&i, cap) in gamma.iter().zip(&caps) {
        bids[i] = Bid::new(0.0, config.demand * cap / capacity);
    }
    if let Participant::Supplier(j) = marginal {
        bids[j] = Bid::new(marginal_price, marginal_qty);
    }
    Ok(bids)
}
