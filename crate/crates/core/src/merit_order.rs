//! Merit-order demand allocation and the marginal-offer price rule.
//!
//! Allocation maximises `Σ (cap - p_i) x_i` subject to `Σ x_i + x_0 = D`,
//! `0 <= x_i <= q_i`, where the operator is an extra participant offering
//! `q_0 = D` of shed load at the cap. The greedy fill below is exact for that
//! LP. Among offers at the cap, real suppliers are dispatched before load is
//! shed.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{Bid, MarginalInfo, MarketConfig, Participant};

/// How residual demand is split among offers at the same price.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TieBreakPolicy {
    /// Uniformly random merit order among tied offers, reproducible per seed.
    SeededRandom(u64),
    /// Residual split in proportion to offered quantity.
    ProRata,
    /// Lower supplier index first.
    IndexOrder,
}

impl Default for TieBreakPolicy {
    fn default() -> Self {
        TieBreakPolicy::SeededRandom(0)
    }
}

/// Result of merit-order allocation.
#[derive(Clone, Debug, PartialEq)]
pub struct Dispatch {
    pub commitments: Vec<f64>,
    pub lost_load: f64,
    pub marginal: MarginalInfo,
}

/// Prices equal after rounding to 1e-12 are treated as tied.
pub(crate) fn price_key(price: f64) -> i64 {
    (price * 1e12).round() as i64
}

enum Split<'a> {
    ProRata,
    Priority(&'a [usize]),
}

/// Allocates `config.demand` across `bids` in ascending price order.
pub fn allocate(bids: &[Bid], config: &MarketConfig, policy: TieBreakPolicy) -> Result<Dispatch> {
    for bid in bids {
        bid.validate(config)?;
    }
    Ok(match policy {
        TieBreakPolicy::ProRata => fill(bids, config, Split::ProRata),
        TieBreakPolicy::IndexOrder => {
            let order: Vec<usize> = (0..bids.len()).collect();
            fill(bids, config, Split::Priority(&order))
        }
        TieBreakPolicy::SeededRandom(seed) => {
            let mut order: Vec<usize> = (0..bids.len()).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            fill(bids, config, Split::Priority(&order))
        }
    })
}

/// Allocation with ties broken by position in `priority` (a permutation of supplier indices).
pub fn allocate_with_priority(
    bids: &[Bid],
    config: &MarketConfig,
    priority: &[usize],
) -> Result<Dispatch> {
    for bid in bids {
        bid.validate(config)?;
    }
    let mut seen = vec![false; bids.len()];
    if priority.len() != bids.len()
        || priority
            .iter()
            .any(|&i| i >= bids.len() || std::mem::replace(&mut seen[i], true))
    {
        return Err(Error::Domain(
            "priority must be a permutation of supplier indices".into(),
        ));
    }
    Ok(fill(bids, config, Split::Priority(priority)))
}

fn fill(bids: &[Bid], config: &MarketConfig, split: Split<'_>) -> Dispatch {
    let n = bids.len();
    let eps = config.qty_eps();
    let mut rank = vec![0usize; n];
    match split {
        Split::Priority(order) => {
            for (pos, &i) in order.iter().enumerate() {
                rank[i] = pos;
            }
        }
        Split::ProRata => rank.iter_mut().enumerate().for_each(|(i, r)| *r = i),
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (price_key(bids[i].price), rank[i]));

    let mut commitments = vec![0.0; n];
    let mut remaining = config.demand;
    let mut start = 0;
    while start < n && remaining > eps {
        let key = price_key(bids[order[start]].price);
        let end = start
            + order[start..]
                .iter()
                .take_while(|&&i| price_key(bids[i].price) == key)
                .count();
        let group = &order[start..end];
        let offered: f64 = group.iter().map(|&i| bids[i].quantity).sum();
        if offered <= remaining + eps {
            for &i in group {
                commitments[i] = bids[i].quantity;
            }
            remaining = (remaining - offered).max(0.0);
        } else {
            match split {
                Split::ProRata => {
                    for &i in group {
                        commitments[i] = remaining * bids[i].quantity / offered;
                    }
                }
                Split::Priority(_) => {
                    let mut left = remaining;
                    for &i in group {
                        let take = bids[i].quantity.min(left);
                        commitments[i] = take;
                        left -= take;
                    }
                }
            }
            remaining = 0.0;
        }
        start = end;
    }
    let lost_load = if remaining > eps { remaining } else { 0.0 };

    let dispatched_real: Vec<usize> = order
        .iter()
        .copied()
        .filter(|&i| commitments[i] > 0.0)
        .collect();
    let mut dispatched: Vec<Participant> = dispatched_real
        .iter()
        .map(|&i| Participant::Supplier(i))
        .collect();
    if lost_load > 0.0 {
        dispatched.push(Participant::ShedLoad);
    }

    let alpha = if lost_load > 0.0 {
        Some(Participant::ShedLoad)
    } else {
        // Highest-priced dispatched offer, preferring a partially dispatched one on ties.
        dispatched_real.last().map(|&last| {
            let top = price_key(bids[last].price);
            let partial = dispatched_real
                .iter()
                .copied()
                .filter(|&i| price_key(bids[i].price) == top)
                .find(|&i| commitments[i] < bids[i].quantity - eps);
            Participant::Supplier(partial.unwrap_or(last))
        })
    };

    let beta = order
        .iter()
        .copied()
        .find(|&i| commitments[i] == 0.0 && bids[i].quantity > 0.0)
        .map(Participant::Supplier)
        .or(if lost_load > 0.0 {
            None
        } else {
            Some(Participant::ShedLoad)
        });

    Dispatch {
        commitments,
        lost_load,
        marginal: MarginalInfo {
            dispatched,
            alpha,
            beta,
        },
    }
}

fn participant_price(p: Participant, bids: &[Bid], config: &MarketConfig) -> f64 {
    match p {
        Participant::Supplier(i) => bids[i].price,
        Participant::ShedLoad => config.price_cap,
    }
}

/// Uniform clearing price: the marginal dispatched offer if it is partially
/// dispatched, otherwise the cheapest undispatched offer (shed load included).
pub fn clearing_price(dispatch: &Dispatch, bids: &[Bid], config: &MarketConfig) -> Result<f64> {
    if bids.iter().all(|b| b.quantity <= 0.0) {
        return Err(Error::NoClearing);
    }
    let eps = config.qty_eps();
    let alpha = dispatch.marginal.alpha.ok_or(Error::NoClearing)?;
    let partial = match alpha {
        Participant::Supplier(i) => dispatch.commitments[i] < bids[i].quantity - eps,
        Participant::ShedLoad => dispatch.lost_load < config.demand - eps,
    };
    if partial {
        return Ok(participant_price(alpha, bids, config));
    }
    let beta = dispatch.marginal.beta.ok_or(Error::NoClearing)?;
    Ok(participant_price(beta, bids, config))
}
