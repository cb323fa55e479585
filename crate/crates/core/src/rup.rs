//! Regulated uniform pricing: suppliers report `y_i(p)`, the operator clears
//! where the cumulative supply curve meets demand. Includes the independent
//! social-cost solver used to certify the clearing, and the price-chain check
//! across the three mechanisms.

use serde::{Deserialize, Serialize};

use crate::distributions::GenerationModel;
use crate::error::{Error, Result};
use crate::game::SolverOptions;
use crate::market::{supplier_profit, ClearingOutcome, MarketConfig, ProfitReport};
use crate::merit_order::TieBreakPolicy;
use crate::pab::{build_bimatrix, pab_summary, solve_mixed_equilibrium, PriceGrid};
use crate::up;

/// Reported supply curves `y_i(p) = F_i^{-1}(min(p / penalty, 1))`.
#[derive(Clone, Copy, Debug)]
pub struct SupplyCurve<'a> {
    models: &'a [GenerationModel],
    penalty: f64,
}

impl<'a> SupplyCurve<'a> {
    pub fn new(models: &'a [GenerationModel], penalty: f64) -> Result<Self> {
        if models.is_empty() {
            return Err(Error::InvalidModel(
                "at least one supplier is required".into(),
            ));
        }
        if !(penalty.is_finite() && penalty > 0.0) {
            return Err(Error::Domain(format!(
                "penalty must be positive, got {penalty}"
            )));
        }
        Ok(SupplyCurve { models, penalty })
    }

    pub fn supplier(&self, i: usize, price: f64) -> f64 {
        let u = (price / self.penalty).clamp(0.0, 1.0);
        self.models[i].quantile(u).expect("clamped level")
    }

    pub fn quantities(&self, price: f64) -> Vec<f64> {
        (0..self.models.len())
            .map(|i| self.supplier(i, price))
            .collect()
    }

    /// `Q(p)`.
    pub fn total(&self, price: f64) -> f64 {
        self.quantities(price).iter().sum()
    }
}

/// Clears at `inf {p : Q(p) >= D}`, or at the cap with lost load when supply
/// is short.
pub fn clear_rup(models: &[GenerationModel], config: &MarketConfig) -> Result<ClearingOutcome> {
    config.validate()?;
    let curve = SupplyCurve::new(models, config.penalty)?;
    let n = models.len();
    let at_cap = curve.quantities(config.price_cap);
    let supply: f64 = at_cap.iter().sum();
    if supply < config.demand {
        return Ok(ClearingOutcome {
            prices: vec![config.price_cap; n],
            lost_load: config.demand - supply,
            commitments: at_cap,
            marginal: None,
        });
    }
    // Q is constant beyond the penalty, so the root lies below min(cap, penalty).
    let (mut lo, mut hi) = (0.0, config.price_cap.min(config.penalty));
    if curve.total(hi) < config.demand {
        hi = config.price_cap;
    }
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if curve.total(mid) >= config.demand {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let below = curve.quantities(lo);
    let above = curve.quantities(hi);
    let (q_lo, q_hi): (f64, f64) = (below.iter().sum(), above.iter().sum());
    // interpolate inside the final bracket so the commitments sum to D
    let theta = if q_hi > q_lo {
        ((config.demand - q_lo) / (q_hi - q_lo)).clamp(0.0, 1.0)
    } else {
        1.0
    };
    let mut commitments: Vec<f64> = below
        .iter()
        .zip(&above)
        .map(|(a, b)| a + theta * (b - a))
        .collect();
    let total: f64 = commitments.iter().sum();
    if total > 0.0 {
        let fix = config.demand / total;
        commitments.iter_mut().for_each(|x| *x *= fix);
    }
    Ok(ClearingOutcome {
        prices: vec![hi; n],
        commitments,
        lost_load: 0.0,
        marginal: None,
    })
}

/// Per-supplier profit at the RUP clearing price.
pub fn rup_profits(
    models: &[GenerationModel],
    config: &MarketConfig,
    outcome: &ClearingOutcome,
) -> Result<Vec<ProfitReport>> {
    models
        .iter()
        .zip(&outcome.commitments)
        .zip(&outcome.prices)
        .map(|((m, &x), &p)| supplier_profit(m, x, p, config.penalty))
        .collect()
}

/// Expected real-time penalty plus lost-load cost of a dispatch.
pub fn social_cost(
    models: &[GenerationModel],
    config: &MarketConfig,
    commitments: &[f64],
    lost_load: f64,
) -> f64 {
    let penalty: f64 = models
        .iter()
        .zip(commitments)
        .map(|(m, &x)| config.penalty * m.expected_shortfall(x))
        .sum();
    penalty + config.price_cap * lost_load
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SocialCostSolution {
    pub commitments: Vec<f64>,
    pub lost_load: f64,
    /// Shadow price of the demand balance.
    pub dual_price: f64,
    pub objective: f64,
}

/// Marginal-cost spread allowed within one segment, as a fraction of the cap.
pub const LP_COST_RESOLUTION: f64 = 1e-5;

/// Minimises expected penalties plus lost-load cost subject to meeting
/// demand, with each commitment bounded by the supplier's capacity.
///
/// Each supplier's commitment range is cut into segments no wider than
/// `discretization` MWh and over which the marginal cost `penalty * F` rises by
/// at most `LP_COST_RESOLUTION * price_cap`. A segment costs its average
/// marginal cost `penalty * ∫F / width`. Segments are filled cheapest first,
/// lost load at the cap closes the balance, and the dual is the marginal
/// segment's cost, so it is within one cost resolution of the exact dual.
pub fn social_cost_lp(
    models: &[GenerationModel],
    config: &MarketConfig,
    discretization: f64,
) -> Result<SocialCostSolution> {
    if !(discretization.is_finite() && discretization > 0.0) {
        return Err(Error::Domain(format!(
            "discretization must be positive, got {discretization}"
        )));
    }
    if models.is_empty() {
        return Err(Error::InvalidModel(
            "at least one supplier is required".into(),
        ));
    }
    let n = models.len();
    if config.demand <= 0.0 {
        return Ok(SocialCostSolution {
            commitments: vec![0.0; n],
            lost_load: 0.0,
            dual_price: 0.0,
            objective: 0.0,
        });
    }
    let spread = LP_COST_RESOLUTION * config.price_cap;
    // (cost, supplier, width)
    let mut segments: Vec<(f64, usize, f64)> = Vec::new();
    for (i, m) in models.iter().enumerate() {
        let cap = m.support_hi();
        let mut a = 0.0;
        let mut f_a = m.cdf(a);
        while a < cap {
            let mut b = (a + discretization).min(cap);
            let mut f_b = m.cdf(b);
            for _ in 0..64 {
                if config.penalty * (f_b - f_a) <= spread {
                    break;
                }
                b = a + 0.5 * (b - a);
                f_b = m.cdf(b);
            }
            if b <= a {
                break;
            }
            let cost = config.penalty * m.cdf_integral(a, b) / (b - a);
            if cost > config.price_cap {
                break;
            }
            segments.push((cost, i, b - a));
            (a, f_a) = (b, f_b);
        }
    }
    segments.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));

    let mut commitments = vec![0.0; n];
    let mut remaining = config.demand;
    let mut dual = 0.0;
    let mut objective = 0.0;
    for &(cost, i, width) in &segments {
        if remaining <= 0.0 {
            break;
        }
        let take = width.min(remaining);
        commitments[i] += take;
        objective += cost * take;
        remaining -= take;
        dual = cost;
    }
    let lost_load = if remaining > config.qty_eps() {
        remaining
    } else {
        0.0
    };
    if lost_load > 0.0 {
        dual = config.price_cap;
        objective += config.price_cap * lost_load;
    }
    Ok(SocialCostSolution {
        commitments,
        lost_load,
        dual_price: dual,
        objective,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualityReport {
    pub rup_price: f64,
    pub lp_price: f64,
    pub rup_objective: f64,
    pub lp_objective: f64,
    pub rup_commitments: Vec<f64>,
    pub lp_commitments: Vec<f64>,
    pub max_quantity_gap: f64,
    pub holds: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualityTolerances {
    /// k$/MWh
    pub price: f64,
    /// MWh
    pub quantity: f64,
    pub objective_relative: f64,
}

/// Compares the RUP clearing with the social-cost optimum and its dual.
pub fn check_duality(
    models: &[GenerationModel],
    config: &MarketConfig,
    discretization: f64,
    tolerances: DualityTolerances,
) -> Result<DualityReport> {
    let rup = clear_rup(models, config)?;
    let lp = social_cost_lp(models, config, discretization)?;
    let rup_price = rup.prices[0];
    let rup_objective = social_cost(models, config, &rup.commitments, rup.lost_load);
    let max_quantity_gap = rup
        .commitments
        .iter()
        .zip(&lp.commitments)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let objective_gap =
        (rup_objective - lp.objective).abs() / rup_objective.abs().max(f64::MIN_POSITIVE);
    let holds = (rup_price - lp.dual_price).abs() <= tolerances.price
        && max_quantity_gap <= tolerances.quantity
        && objective_gap <= tolerances.objective_relative;
    Ok(DualityReport {
        rup_price,
        lp_price: lp.dual_price,
        rup_objective,
        lp_objective: lp.objective,
        rup_commitments: rup.commitments,
        lp_commitments: lp.commitments,
        max_quantity_gap,
        holds,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriceChainReport {
    pub price_cap: f64,
    pub up_price: f64,
    pub pab_price: f64,
    pub rup_price: f64,
    pub pab_epsilon: f64,
    pub grid_step: f64,
    /// `cap >= up`, `cap >= pab >= rup - grid_step` and `rup > 0`.
    pub holds: bool,
}

/// Evaluates the three clearing prices of a duopoly and checks their order.
pub fn compare_prices(
    models: &[GenerationModel],
    config: &MarketConfig,
    grid: &PriceGrid,
    tolerance: f64,
    solver: &SolverOptions,
    policy: TieBreakPolicy,
) -> Result<PriceChainReport> {
    let up_bids = up::construct_up_equilibrium(models, config)?;
    let up_price = up::clear_up_general(&up_bids, config, policy)?.prices[0];
    let game = build_bimatrix(models, config, grid, policy)?;
    let (strategies, _) = solve_mixed_equilibrium(&game, tolerance, solver)?;
    let summary = pab_summary(&strategies, &game, models, config)?;
    let rup_price = clear_rup(models, config)?.prices[0];
    let step = grid.step();
    let cap = config.price_cap;
    let slack = 1e-12 * cap;
    let holds = up_price <= cap + slack
        && summary.market_price <= cap + slack
        && summary.market_price >= rup_price - step
        && rup_price > 0.0;
    Ok(PriceChainReport {
        price_cap: cap,
        up_price,
        pab_price: summary.market_price,
        rup_price,
        pab_epsilon: summary.epsilon,
        grid_step: step,
        holds,
    })
}
