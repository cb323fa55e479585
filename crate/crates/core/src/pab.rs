//! Pay-as-bid clearing with the dominant quantity rule `q_i = y_i(p_i)`, and
//! the duopoly price game on a discrete grid.

use itertools::Itertools;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::GenerationModel;
use crate::error::{Error, Result};
use crate::game::{BimatrixGame, MixedProfile, SolverOptions};
use crate::market::{profit_value, Bid, MarketConfig};
use crate::merit_order::{self, TieBreakPolicy};

/// Ascending bid-price levels covering `[0, cap]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriceGrid {
    levels: Vec<f64>,
}

impl PriceGrid {
    pub const DEFAULT_COUNT: usize = 101;

    pub fn uniform(count: usize, cap: f64) -> Result<Self> {
        if count < 2 {
            return Err(Error::InvalidConfig(format!(
                "price grid needs at least 2 levels, got {count}"
            )));
        }
        if !(cap.is_finite() && cap > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "price cap must be positive, got {cap}"
            )));
        }
        let last = (count - 1) as f64;
        let levels = (0..count)
            .map(|k| {
                if k + 1 == count {
                    cap
                } else {
                    cap * k as f64 / last
                }
            })
            .collect();
        Ok(PriceGrid { levels })
    }

    pub fn from_levels(levels: Vec<f64>, cap: f64) -> Result<Self> {
        let ascending = levels.windows(2).all(|w| w[0] < w[1]);
        if levels.len() < 2 || !ascending || levels[0] != 0.0 || *levels.last().unwrap() != cap {
            return Err(Error::InvalidConfig(
                "price grid must be strictly ascending from 0 to the price cap".into(),
            ));
        }
        Ok(PriceGrid { levels })
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Largest gap between adjacent levels.
    pub fn step(&self) -> f64 {
        self.levels
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixedStrategy {
    pub levels: Vec<f64>,
    pub probabilities: Vec<f64>,
}

impl MixedStrategy {
    pub fn new(grid: &PriceGrid, probabilities: Vec<f64>) -> Result<Self> {
        if probabilities.len() != grid.len() {
            return Err(Error::Domain(
                "one probability per grid level required".into(),
            ));
        }
        let total: f64 = probabilities.iter().sum();
        if probabilities.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!(
                "probabilities must be non-negative and sum to 1, got {total}"
            )));
        }
        Ok(MixedStrategy {
            levels: grid.levels.clone(),
            probabilities,
        })
    }

    pub fn expected_price(&self) -> f64 {
        self.levels
            .iter()
            .zip(&self.probabilities)
            .map(|(l, p)| l * p)
            .sum()
    }

    /// Smallest level with probability above 1e-9.
    pub fn lower_support(&self) -> f64 {
        self.levels
            .iter()
            .zip(&self.probabilities)
            .find(|(_, p)| **p > 1e-9)
            .map_or(0.0, |(l, _)| *l)
    }
}

/// Expected outcome of pay-as-bid clearing, averaged over tie orders.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PabOutcome {
    pub commitments: Vec<f64>,
    pub profits: Vec<f64>,
    pub lost_load: f64,
}

/// Tie orders averaged under `SeededRandom`: every permutation for small
/// markets, the seeded draw otherwise.
const FULL_AVERAGE_MAX_SUPPLIERS: usize = 6;

/// Clears explicit bids under pay-as-bid. With `SeededRandom` ties, profits
/// are the expectation over uniformly random merit orders among tied offers.
pub fn clear_pab(
    bids: &[Bid],
    models: &[GenerationModel],
    config: &MarketConfig,
    policy: TieBreakPolicy,
) -> Result<PabOutcome> {
    if bids.len() != models.len() {
        return Err(Error::Domain("one bid per supplier required".into()));
    }
    let n = bids.len();
    let dispatches = match policy {
        TieBreakPolicy::SeededRandom(_)
            if n <= FULL_AVERAGE_MAX_SUPPLIERS && has_price_tie(bids) =>
        {
            (0..n)
                .permutations(n)
                .map(|order| merit_order::allocate_with_priority(bids, config, &order))
                .collect::<Result<Vec<_>>>()?
        }
        _ => vec![merit_order::allocate(bids, config, policy)?],
    };
    let weight = 1.0 / dispatches.len() as f64;
    let mut outcome = PabOutcome {
        commitments: vec![0.0; n],
        profits: vec![0.0; n],
        lost_load: 0.0,
    };
    for d in &dispatches {
        for i in 0..n {
            outcome.commitments[i] += weight * d.commitments[i];
            outcome.profits[i] +=
                weight * profit_value(&models[i], d.commitments[i], bids[i].price, config.penalty);
        }
        outcome.lost_load += weight * d.lost_load;
    }
    Ok(outcome)
}

fn has_price_tie(bids: &[Bid]) -> bool {
    let keys: Vec<i64> = bids
        .iter()
        .map(|b| merit_order::price_key(b.price))
        .collect();
    keys.iter().tuple_combinations().any(|(a, b)| a == b)
}

/// Bids under the dominant quantity rule at the given prices.
pub fn dominant_bids(
    prices: &[f64],
    models: &[GenerationModel],
    config: &MarketConfig,
) -> Result<Vec<Bid>> {
    prices
        .iter()
        .zip(models)
        .map(|(&p, m)| Ok(Bid::new(p, m.optimal_commitment(p, config.penalty)?)))
        .collect()
}

/// Expected profit of supplier `i` when every supplier prices at `prices`
/// and offers its dominant quantity.
pub fn pab_payoff(
    i: usize,
    prices: &[f64],
    models: &[GenerationModel],
    config: &MarketConfig,
    policy: TieBreakPolicy,
) -> Result<f64> {
    let bids = dominant_bids(prices, models, config)?;
    Ok(clear_pab(&bids, models, config, policy)?.profits[i])
}

/// The tabulated duopoly price game.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PabGame {
    pub grid: PriceGrid,
    pub game: BimatrixGame,
    /// Expected lost load at each `(level of supplier 0, level of supplier 1)`.
    pub lost_load: Vec<Vec<f64>>,
}

pub fn build_bimatrix(
    models: &[GenerationModel],
    config: &MarketConfig,
    grid: &PriceGrid,
    policy: TieBreakPolicy,
) -> Result<PabGame> {
    config.validate()?;
    if models.len() != 2 {
        return Err(Error::Unsupported(format!(
            "the pay-as-bid price game is solved for two suppliers, got {}",
            models.len()
        )));
    }
    if *grid.levels.last().unwrap() != config.price_cap {
        return Err(Error::InvalidConfig(
            "price grid must end at the price cap".into(),
        ));
    }
    let levels = grid.levels();
    let quantity = |m: &GenerationModel| -> Result<Vec<f64>> {
        levels
            .iter()
            .map(|&p| m.optimal_commitment(p, config.penalty))
            .collect()
    };
    let q = [quantity(&models[0])?, quantity(&models[1])?];
    let k = levels.len();
    let cells: Vec<PabOutcome> = (0..k * k)
        .into_par_iter()
        .map(|cell| {
            let (a, b) = (cell / k, cell % k);
            let bids = [Bid::new(levels[a], q[0][a]), Bid::new(levels[b], q[1][b])];
            clear_pab(&bids, models, config, policy)
        })
        .collect::<Result<_>>()?;
    let row = (0..k)
        .map(|a| (0..k).map(|b| cells[a * k + b].profits[0]).collect())
        .collect();
    let col = (0..k)
        .map(|b| (0..k).map(|a| cells[a * k + b].profits[1]).collect())
        .collect();
    let lost_load = (0..k)
        .map(|a| (0..k).map(|b| cells[a * k + b].lost_load).collect())
        .collect();
    Ok(PabGame {
        grid: grid.clone(),
        game: BimatrixGame::new(row, col)?,
        lost_load,
    })
}

/// Mixed ε-equilibrium of the price game, with `epsilon <= tolerance`.
pub fn solve_mixed_equilibrium(
    game: &PabGame,
    tolerance: f64,
    options: &SolverOptions,
) -> Result<([MixedStrategy; 2], MixedProfile)> {
    let profile = game.game.solve(tolerance, options)?;
    let strategies = [
        MixedStrategy::new(&game.grid, normalized(&profile.strategies[0]))?,
        MixedStrategy::new(&game.grid, normalized(&profile.strategies[1]))?,
    ];
    Ok((strategies, profile))
}

fn normalized(p: &[f64]) -> Vec<f64> {
    let total: f64 = p.iter().sum();
    p.iter().map(|v| v / total).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LowerSupportCheck {
    /// Common lower support: the smaller of the two.
    pub lower_support: f64,
    /// `Σ y_i` at one grid step above the lower support.
    pub supply_within_step: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PabSummary {
    pub expected_prices: [f64; 2],
    /// The smaller expected bid price.
    pub market_price: f64,
    pub expected_profits: [f64; 2],
    pub lower_supports: [f64; 2],
    pub expected_lost_load: f64,
    pub epsilon: f64,
    pub lower_support_check: LowerSupportCheck,
}

pub fn pab_summary(
    strategies: &[MixedStrategy; 2],
    game: &PabGame,
    models: &[GenerationModel],
    config: &MarketConfig,
) -> Result<PabSummary> {
    let [s0, s1] = strategies;
    let expected_prices = [s0.expected_price(), s1.expected_price()];
    let payoffs = game
        .game
        .expected_payoffs(&s0.probabilities, &s1.probabilities);
    let lower_supports = [s0.lower_support(), s1.lower_support()];
    let l = lower_supports[0].min(lower_supports[1]);
    let probe = (l + game.grid.step()).min(config.price_cap);
    let supply_within_step = models
        .iter()
        .map(|m| m.optimal_commitment(probe, config.penalty))
        .sum::<Result<f64>>()?;
    let expected_lost_load = game
        .lost_load
        .iter()
        .zip(&s0.probabilities)
        .map(|(row, pa)| {
            pa * row
                .iter()
                .zip(&s1.probabilities)
                .map(|(v, pb)| v * pb)
                .sum::<f64>()
        })
        .sum();
    Ok(PabSummary {
        expected_prices,
        market_price: expected_prices[0].min(expected_prices[1]),
        expected_profits: payoffs,
        lower_supports,
        expected_lost_load,
        epsilon: game.game.epsilon(&s0.probabilities, &s1.probabilities),
        lower_support_check: LowerSupportCheck {
            lower_support: l,
            supply_within_step,
            holds: config.demand <= supply_within_step + config.qty_eps(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::SolverMethod;
    use approx::assert_abs_diff_eq;

    fn tn_pair() -> Vec<GenerationModel> {
        vec![GenerationModel::truncated_normal(1.5, 1.0, 3.0).unwrap(); 2]
    }

    fn base() -> MarketConfig {
        MarketConfig::new(2.0, 1.0, 1.5).unwrap()
    }

    #[test]
    fn grid_construction() {
        let g = PriceGrid::uniform(101, 1.0).unwrap();
        assert_eq!(g.len(), 101);
        assert_eq!(g.levels()[0], 0.0);
        assert_eq!(g.levels()[100], 1.0);
        assert_abs_diff_eq!(g.step(), 0.01, epsilon = 1e-15);
        assert!(PriceGrid::uniform(1, 1.0).is_err());
        assert!(PriceGrid::from_levels(vec![0.0, 0.5, 0.5, 1.0], 1.0).is_err());
        assert!(PriceGrid::from_levels(vec![0.1, 1.0], 1.0).is_err());
    }

    #[test]
    fn zero_price_earns_nothing() {
        let models = tn_pair();
        for rival in [0.0, 0.3, 1.0] {
            assert_eq!(
                pab_payoff(
                    0,
                    &[0.0, rival],
                    &models,
                    &base(),
                    TieBreakPolicy::default()
                )
                .unwrap(),
                0.0
            );
        }
    }

    #[test]
    fn undercutting_supplier_serves_full_demand() {
        // y(0.9) = F^{-1}(0.6) = 2.4 for uniform(4), so the cheaper supplier covers D
        let models = vec![GenerationModel::uniform(4.0).unwrap(); 2];
        let config = base();
        let p = 0.9;
        assert!(models[0].optimal_commitment(p, config.penalty).unwrap() >= config.demand);
        let got = pab_payoff(0, &[p, 1.0], &models, &config, TieBreakPolicy::default()).unwrap();
        let expected =
            config.demand * p - config.penalty * models[0].expected_shortfall(config.demand);
        assert_abs_diff_eq!(got, expected, epsilon = 1e-14);
    }

    #[test]
    fn tied_prices_average_both_orders() {
        let models = vec![GenerationModel::uniform(3.0).unwrap(); 2];
        let config = base();
        let p = 0.9;
        let q = models[0].optimal_commitment(p, config.penalty).unwrap();
        let first = profit_value(&models[0], q, p, config.penalty);
        let second = profit_value(&models[0], config.demand - q, p, config.penalty);
        let got = pab_payoff(
            0,
            &[p, p],
            &models,
            &config,
            TieBreakPolicy::SeededRandom(7),
        )
        .unwrap();
        assert_abs_diff_eq!(got, 0.5 * (first + second), epsilon = 1e-14);
    }

    #[test]
    fn tabulation_matches_direct_payoffs() {
        let models = tn_pair();
        let config = base();
        let grid = PriceGrid::uniform(2, 1.0).unwrap();
        let policy = TieBreakPolicy::default();
        let g = build_bimatrix(&models, &config, &grid, policy).unwrap();
        for (a, &pa) in grid.levels().iter().enumerate() {
            for (b, &pb) in grid.levels().iter().enumerate() {
                let direct0 = pab_payoff(0, &[pa, pb], &models, &config, policy).unwrap();
                let direct1 = pab_payoff(1, &[pa, pb], &models, &config, policy).unwrap();
                assert_eq!(g.game.payoff(0, a, b), direct0);
                assert_eq!(g.game.payoff(1, b, a), direct1);
            }
        }
    }

    #[test]
    fn symmetric_game_and_zero_row() {
        let g = build_bimatrix(
            &tn_pair(),
            &base(),
            &PriceGrid::uniform(21, 1.0).unwrap(),
            TieBreakPolicy::default(),
        )
        .unwrap();
        for a in 0..21 {
            assert_eq!(g.game.payoff(0, 0, a), 0.0);
            for b in 0..21 {
                assert_abs_diff_eq!(
                    g.game.payoff(0, a, b),
                    g.game.payoff(1, a, b),
                    epsilon = 1e-15
                );
            }
        }
    }

    #[test]
    fn more_than_two_suppliers_unsupported() {
        let models = vec![GenerationModel::uniform(3.0).unwrap(); 3];
        let grid = PriceGrid::uniform(5, 1.0).unwrap();
        assert!(matches!(
            build_bimatrix(&models, &base(), &grid, TieBreakPolicy::default()),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn shortage_puts_all_mass_on_cap() {
        let models = tn_pair();
        let config = MarketConfig::new(7.0, 1.0, 1.5).unwrap();
        let g = build_bimatrix(
            &models,
            &config,
            &PriceGrid::uniform(21, 1.0).unwrap(),
            TieBreakPolicy::default(),
        )
        .unwrap();
        let (s, profile) = solve_mixed_equilibrium(&g, 1e-9, &SolverOptions::default()).unwrap();
        assert!(profile.epsilon <= 1e-9);
        for strategy in &s {
            assert_abs_diff_eq!(strategy.probabilities[20], 1.0, epsilon = 1e-9);
        }
        let summary = pab_summary(&s, &g, &models, &config).unwrap();
        assert_abs_diff_eq!(summary.market_price, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn adequate_supply_has_no_pure_equilibrium_and_a_mixed_one() {
        let models = tn_pair();
        let config = base();
        let g = build_bimatrix(
            &models,
            &config,
            &PriceGrid::uniform(21, 1.0).unwrap(),
            TieBreakPolicy::default(),
        )
        .unwrap();
        let tol = 1e-4 * config.price_cap * config.demand;
        assert!(g.game.pure_equilibria(tol).is_empty());
        for method in [SolverMethod::Auto, SolverMethod::LemkeHowson] {
            let (s, profile) = solve_mixed_equilibrium(
                &g,
                tol,
                &SolverOptions {
                    method,
                    ..Default::default()
                },
            )
            .unwrap();
            assert!(profile.epsilon <= tol);
            let summary = pab_summary(&s, &g, &models, &config).unwrap();
            assert!(summary.lower_support_check.holds, "{summary:?}");
            assert!(summary.market_price <= 1.0 && summary.market_price > 0.0);
        }
    }

    #[test]
    fn dominant_quantity_is_weakly_best() {
        let models = tn_pair();
        let config = base();
        let grid = PriceGrid::uniform(11, 1.0).unwrap();
        for &p0 in grid.levels() {
            for &p1 in grid.levels() {
                let mut bids = dominant_bids(&[p0, p1], &models, &config).unwrap();
                let policy = TieBreakPolicy::default();
                let best = clear_pab(&bids, &models, &config, policy).unwrap().profits[0];
                for k in 0..=30 {
                    bids[0].quantity = 0.1 * k as f64;
                    let alt = clear_pab(&bids, &models, &config, policy).unwrap().profits[0];
                    assert!(
                        alt <= best + 1e-12,
                        "p=({p0},{p1}) q={} alt={alt} best={best}",
                        bids[0].quantity
                    );
                }
            }
        }
    }

    #[test]
    fn mixed_strategy_validation() {
        let grid = PriceGrid::uniform(3, 1.0).unwrap();
        assert!(MixedStrategy::new(&grid, vec![0.5, 0.5]).is_err());
        assert!(MixedStrategy::new(&grid, vec![0.5, 0.6, -0.1]).is_err());
        let s = MixedStrategy::new(&grid, vec![0.0, 0.25, 0.75]).unwrap();
        assert_abs_diff_eq!(s.expected_price(), 0.875, epsilon = 1e-15);
        assert_eq!(s.lower_support(), 0.5);
    }
}
