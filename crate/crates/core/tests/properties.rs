use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vre_market::market::{supplier_profit, Bid, MarketConfig};
use vre_market::merit_order::{allocate, TieBreakPolicy};
use vre_market::pab::{
    build_bimatrix, dominant_bids, pab_payoff, pab_summary, solve_mixed_equilibrium, PriceGrid,
};
use vre_market::rup::{clear_rup, rup_profits, SupplyCurve};
use vre_market::up::{clear_up_zero, construct_up_equilibrium, verify_quantity_equilibrium};
use vre_market::{GenerationModel, PlottingPosition};

fn model() -> impl Strategy<Value = GenerationModel> {
    prop_oneof![
        (0.1..3.0f64, 0.1..1.5f64, 0.3..3.0f64).prop_map(|(mean, std, extra)| {
            GenerationModel::truncated_normal(mean, std, mean + extra).unwrap()
        }),
        (0.5..4.0f64).prop_map(|u| GenerationModel::uniform(u).unwrap()),
        prop::collection::vec(0.0..3.0f64, 2..40).prop_map(|s| GenerationModel::empirical(
            &s,
            PlottingPosition::Weibull
        )
        .unwrap()),
    ]
}

fn market(models: &[GenerationModel]) -> impl Strategy<Value = MarketConfig> {
    let supply: f64 = models.iter().map(|m| m.support_hi()).sum();
    (0.05..0.9f64, 0.5..2.0f64, 0.3..3.0f64)
        .prop_map(move |(d, cap, pen)| MarketConfig::new(d * supply, cap, pen * cap).unwrap())
}

fn scenario(max: usize) -> impl Strategy<Value = (Vec<GenerationModel>, MarketConfig)> {
    prop::collection::vec(model(), 1..=max).prop_flat_map(|models| {
        let config = market(&models);
        (Just(models), config)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn quantile_and_cdf_form_a_galois_pair(m in model(), u in 0.0..=1.0f64, t in 0.0..1.0f64) {
        let q = m.quantile(u).unwrap();
        prop_assert!(m.cdf(q) >= u - 1e-12);
        let x = t * m.support_hi();
        prop_assert!(m.quantile(m.cdf(x)).unwrap() <= x + 1e-9);
    }

    #[test]
    fn shortfall_slopes_are_monotone(m in model(), a in 0.0..1.0f64, b in 0.0..1.0f64, c in 0.0..1.0f64) {
        let mut x = [a, b, c].map(|v| v * m.support_hi());
        x.sort_by(f64::total_cmp);
        prop_assume!(x[1] - x[0] > 1e-3 && x[2] - x[1] > 1e-3);
        let e = x.map(|v| m.expected_shortfall(v));
        let left = (e[1] - e[0]) / (x[1] - x[0]);
        let right = (e[2] - e[1]) / (x[2] - x[1]);
        prop_assert!(left <= right + 1e-9, "{left} > {right}");
    }

    #[test]
    fn profit_is_concave_in_commitment(m in model(), price in 0.0..2.0f64, penalty in 0.2..3.0f64) {
        let step = 1e-3 * m.support_hi();
        let profit = |k: usize| supplier_profit(&m, k as f64 * step, price, penalty).unwrap().profit;
        for k in (1..1000).step_by(7) {
            let second = profit(k + 1) - 2.0 * profit(k) + profit(k - 1);
            prop_assert!(second <= 1e-9, "second difference {second} at {k}");
        }
    }

    #[test]
    fn optimal_commitment_is_monotone_and_saturates(m in model(), p1 in 0.0..3.0f64, p2 in 0.0..3.0f64, penalty in 0.2..2.0f64) {
        let (lo, hi) = (p1.min(p2), p1.max(p2));
        prop_assert!(m.optimal_commitment(lo, penalty).unwrap() <= m.optimal_commitment(hi, penalty).unwrap());
        prop_assert_eq!(m.optimal_commitment(penalty, penalty).unwrap(), m.optimal_commitment(penalty + hi, penalty).unwrap());
        prop_assert_eq!(m.optimal_commitment(0.0, penalty).unwrap(), 0.0);
    }

    #[test]
    fn scaling_multiplies_quantiles_exactly(samples in prop::collection::vec(0.0..3.0f64, 2..30), s in 0.1..10.0f64, u in 0.0..=1.0f64) {
        let unit = GenerationModel::empirical(&samples, PlottingPosition::Weibull).unwrap();
        let scaled = unit.scaled(s).unwrap();
        prop_assert_eq!(scaled.quantile(u).unwrap(), s * unit.quantile(u).unwrap());
    }

    #[test]
    fn empirical_cdf_hits_plotting_positions(samples in prop::collection::btree_set(1u32..10_000, 2..30)) {
        let xs: Vec<f64> = samples.iter().map(|&v| v as f64 / 1000.0).collect();
        let m = GenerationModel::empirical(&xs, PlottingPosition::Weibull).unwrap();
        let n = xs.len() as f64;
        for (k, x) in xs.iter().enumerate().take(xs.len() - 1) {
            prop_assert!((m.cdf(*x) - (k + 1) as f64 / (n + 1.0)).abs() <= 1e-12);
        }
        prop_assert_eq!(m.cdf(xs[xs.len() - 1]), 1.0);
    }

    #[test]
    fn supply_curve_is_monotone_and_saturates((models, config) in scenario(4), p1 in 0.0..1.0f64, p2 in 0.0..1.0f64) {
        let curve = SupplyCurve::new(&models, config.penalty).unwrap();
        let (lo, hi) = (p1.min(p2) * config.price_cap, p1.max(p2) * config.price_cap);
        prop_assert!(curve.total(lo) <= curve.total(hi));
        prop_assert_eq!(curve.total(0.0), 0.0);
        prop_assert_eq!(curve.total(config.penalty), curve.total(config.penalty * (1.0 + p1)));
    }

    #[test]
    fn rup_balances_and_pays_the_weighted_integral((models, config) in scenario(4)) {
        let out = clear_rup(&models, &config).unwrap();
        let price = out.prices[0];
        prop_assert!(price > 0.0 && price <= config.price_cap);
        prop_assert!((out.total_committed() + out.lost_load - config.demand).abs() <= 1e-9);
        let profits = rup_profits(&models, &config, &out).unwrap();
        for (i, m) in models.iter().enumerate() {
            let y = m.optimal_commitment(price, config.penalty).unwrap();
            // suppliers fully dispatched at their truthful quantity earn the closed form
            if (out.commitments[i] - y).abs() <= 1e-12 && y > 0.0 {
                let expected = m.commitment_weighted_integral(price, config.penalty).unwrap();
                prop_assert!((profits[i].profit - expected).abs() <= 1e-8 * expected.max(1.0));
                prop_assert!(profits[i].profit > 0.0);
            }
        }
    }

    #[test]
    fn up_constructed_profile_verifies((models, config) in scenario(3)) {
        let bids = construct_up_equilibrium(&models, &config).unwrap();
        let q: Vec<f64> = bids.iter().map(|b| b.quantity).collect();
        let tol = 1e-6 * config.price_cap * config.demand;
        let step = 1e-2 * models.iter().map(|m| m.support_hi()).fold(0.0, f64::max);
        let cert = verify_quantity_equilibrium(&q, &models, &config, step, tol, TieBreakPolicy::IndexOrder).unwrap();
        prop_assert!(cert.passed(), "epsilon {}", cert.epsilon);
        let supply: f64 = models.iter().map(|m| m.optimal_commitment(config.price_cap, config.penalty).unwrap()).sum();
        if supply > config.demand {
            let out = clear_up_zero(&q, &config, TieBreakPolicy::IndexOrder).unwrap();
            prop_assert!((q.iter().sum::<f64>() - config.demand).abs() <= step);
            prop_assert_eq!(out.prices[0], config.price_cap);
        }
    }

    #[test]
    fn allocation_is_feasible(prices in prop::collection::vec(0.0..=1.0f64, 1..6), qs in prop::collection::vec(0.0..3.0f64, 6), demand in 0.01..8.0f64, seed in any::<u64>()) {
        let config = MarketConfig::new(demand, 1.0, 1.0).unwrap();
        let bids: Vec<Bid> = prices.iter().zip(&qs).map(|(&p, &q)| Bid::new(p, q)).collect();
        prop_assume!(bids.iter().any(|b| b.quantity > 0.0));
        for policy in [TieBreakPolicy::SeededRandom(seed), TieBreakPolicy::ProRata, TieBreakPolicy::IndexOrder] {
            let d = allocate(&bids, &config, policy).unwrap();
            prop_assert!(d.lost_load >= 0.0);
            prop_assert!((d.commitments.iter().sum::<f64>() + d.lost_load - demand).abs() <= 1e-9);
            for (x, b) in d.commitments.iter().zip(&bids) {
                prop_assert!(*x >= 0.0 && *x <= b.quantity);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn dominant_quantity_beats_grid_alternatives(
        models in prop::collection::vec(model(), 2..=2),
        pa in 0usize..=20,
        pb in 0usize..=20,
        penalty in 0.3..3.0f64,
    ) {
        let supply: f64 = models.iter().map(|m| m.support_hi()).sum();
        let config = MarketConfig::new(0.5 * supply, 1.0, penalty).unwrap();
        let prices = [pa as f64 / 20.0, pb as f64 / 20.0];
        let policy = TieBreakPolicy::SeededRandom(0);
        let base = pab_payoff(0, &prices, &models, &config, policy).unwrap();
        let mut bids = dominant_bids(&prices, &models, &config).unwrap();
        let hi = models[0].support_hi();
        for k in 0..=50 {
            bids[0].quantity = hi * k as f64 / 50.0;
            let profit = vre_market::pab::clear_pab(&bids, &models, &config, policy).unwrap().profits[0];
            prop_assert!(profit <= base + 1e-12, "quantity {} earns {profit} > {base}", bids[0].quantity);
        }
    }
}

/// Expected shortfall against the mean of `(x - X)^+` over a million draws.
#[test]
fn shortfall_matches_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let models = [
        GenerationModel::truncated_normal(1.5, 1.0, 3.0).unwrap(),
        GenerationModel::uniform(2.0).unwrap(),
        GenerationModel::empirical(&[0.2, 0.5, 0.9, 1.4, 2.2, 2.3], PlottingPosition::Weibull)
            .unwrap(),
    ];
    for m in &models {
        let x = 0.6 * m.support_hi();
        let n = 1_000_000;
        let (mut sum, mut sq) = (0.0, 0.0);
        for _ in 0..n {
            let draw = m.quantile(rng.random::<f64>()).unwrap();
            let v = (x - draw).max(0.0);
            sum += v;
            sq += v * v;
        }
        let mean = sum / n as f64;
        let se = ((sq / n as f64 - mean * mean) / n as f64).sqrt();
        let exact = m.expected_shortfall(x);
        assert!(
            (exact - mean).abs() <= 3.0 * se,
            "{}: {exact} vs {mean} ± {se}",
            m.kind_name()
        );
    }
}

/// Uniform-pricing profits dominate both other mechanisms on random duopolies.
#[test]
fn uniform_pricing_profits_dominate() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let grid = PriceGrid::uniform(21, 1.0).unwrap();
    let policy = TieBreakPolicy::SeededRandom(0);
    for _ in 0..8 {
        let models: Vec<GenerationModel> = (0..2)
            .map(|_| {
                let mean = rng.random_range(0.5..2.0);
                GenerationModel::truncated_normal(
                    mean,
                    rng.random_range(0.3..1.2),
                    mean + rng.random_range(0.5..2.0),
                )
                .unwrap()
            })
            .collect();
        let supply: f64 = models.iter().map(|m| m.support_hi()).sum();
        let config = MarketConfig::new(
            rng.random_range(0.2..0.6) * supply,
            1.0,
            rng.random_range(1.0..3.0),
        )
        .unwrap();

        let q: Vec<f64> = construct_up_equilibrium(&models, &config)
            .unwrap()
            .iter()
            .map(|b| b.quantity)
            .collect();
        let up = clear_up_zero(&q, &config, policy).unwrap();
        let up_total: f64 = (0..2)
            .map(|i| {
                supplier_profit(&models[i], up.commitments[i], up.prices[i], config.penalty)
                    .unwrap()
                    .profit
            })
            .sum();
        let rup = clear_rup(&models, &config).unwrap();
        let rup_total: f64 = rup_profits(&models, &config, &rup)
            .unwrap()
            .iter()
            .map(|p| p.profit)
            .sum();
        let game = build_bimatrix(&models, &config, &grid, policy).unwrap();
        let (strategies, _) =
            solve_mixed_equilibrium(&game, 1e-3 * config.demand, &Default::default()).unwrap();
        let pab = pab_summary(&strategies, &game, &models, &config).unwrap();
        let pab_total: f64 = pab.expected_profits.iter().sum();
        assert!(
            up_total >= rup_total - 1e-9,
            "up {up_total} < rup {rup_total}"
        );
        assert!(
            up_total >= pab_total - 1e-3 * config.demand,
            "up {up_total} < pab {pab_total}"
        );
    }
}
