//! Scenario-level runs behind the command-line tool: single clearings,
//! parameter sweeps and verification reports, plus their CSV/JSON encoding.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::distributions::GenerationModel;
use crate::error::{Error, Result};
use crate::market::{supplier_profit, MarketConfig};
use crate::merit_order::TieBreakPolicy;
use crate::pab::{build_bimatrix, pab_summary, MixedStrategy, PriceGrid};
use crate::rup::{self, DualityTolerances};
use crate::scenario::{Mechanism, ScenarioSpec};
use crate::up;

/// Bumped whenever the row columns change.
pub const SCHEMA_VERSION: u32 = 1;

pub const COLUMNS: [&str; 9] = [
    "axis_value",
    "mechanism",
    "supplier",
    "price",
    "expected_price",
    "profit",
    "epsilon",
    "lost_load",
    "status",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RowStatus {
    Ok,
    /// The equilibrium certificate exceeded its tolerance.
    NotConverged,
}

/// One supplier's result under one mechanism.
///
/// `price` is the market price (the smaller expected bid under PAB);
/// `expected_price` is what this supplier is paid or bids on average.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResultRow {
    pub axis_value: Option<f64>,
    pub mechanism: &'static str,
    /// Numbered from 1.
    pub supplier: usize,
    pub price: f64,
    pub expected_price: f64,
    pub profit: f64,
    pub epsilon: f64,
    pub lost_load: f64,
    pub status: RowStatus,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

/// Mechanisms requested for a scenario; PAB is dropped for non-duopolies
/// unless it was asked for explicitly.
pub fn resolve_mechanisms(
    requested: &[Mechanism],
    suppliers: usize,
    explicit: bool,
) -> Result<Vec<Mechanism>> {
    let mut out: Vec<Mechanism> = requested.to_vec();
    out.sort();
    out.dedup();
    if suppliers != 2 && out.contains(&Mechanism::Pab) {
        if explicit && requested == [Mechanism::Pab] {
            return Err(Error::Unsupported(format!(
                "the pay-as-bid price game is solved for two suppliers, got {suppliers}"
            )));
        }
        log::warn!("skipping pab: the price game is solved for duopolies only");
        out.retain(|m| *m != Mechanism::Pab);
    }
    Ok(out)
}

/// Runs each mechanism on the scenario as given.
pub fn run_point(
    spec: &ScenarioSpec,
    mechanisms: &[Mechanism],
    axis_value: Option<f64>,
    seed: u64,
) -> Result<Vec<ResultRow>> {
    let models = spec.build_models()?;
    let config = spec.market();
    config.validate()?;
    let policy = spec.tie_break_with_seed(seed);
    let mut rows = Vec::new();
    for &mechanism in mechanisms {
        let mut block = match mechanism {
            Mechanism::Up => up_rows(spec, &models, &config, policy)?,
            Mechanism::Pab => pab_rows(spec, &models, &config, policy)?,
            Mechanism::Rup => rup_rows(&models, &config)?,
        };
        for row in &mut block {
            row.axis_value = axis_value;
        }
        rows.extend(block);
    }
    Ok(rows)
}

fn up_rows(
    spec: &ScenarioSpec,
    models: &[GenerationModel],
    config: &MarketConfig,
    policy: TieBreakPolicy,
) -> Result<Vec<ResultRow>> {
    let bids = up::construct_up_equilibrium_with(models, config, spec.options.up_split)?;
    let quantities: Vec<f64> = bids.iter().map(|b| b.quantity).collect();
    let outcome = up::clear_up_zero(&quantities, config, policy)?;
    let cert = up::verify_quantity_equilibrium(
        &quantities,
        models,
        config,
        up_grid_step(spec, models),
        spec.tolerances.up,
        policy,
    )?;
    let status = if cert.passed() {
        RowStatus::Ok
    } else {
        RowStatus::NotConverged
    };
    models
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let report =
                supplier_profit(m, outcome.commitments[i], outcome.prices[i], config.penalty)?;
            Ok(ResultRow {
                axis_value: None,
                mechanism: Mechanism::Up.name(),
                supplier: i + 1,
                price: outcome.prices[i],
                expected_price: outcome.prices[i],
                profit: report.profit,
                epsilon: cert.epsilon,
                lost_load: outcome.lost_load,
                status,
            })
        })
        .collect()
}

fn up_grid_step(spec: &ScenarioSpec, models: &[GenerationModel]) -> f64 {
    let widest = models
        .iter()
        .map(GenerationModel::support_hi)
        .fold(0.0, f64::max);
    widest / spec.options.up_grid_points as f64
}

fn pab_tolerance(spec: &ScenarioSpec, config: &MarketConfig) -> f64 {
    spec.tolerances.pab * config.price_cap * config.demand
}

fn pab_rows(
    spec: &ScenarioSpec,
    models: &[GenerationModel],
    config: &MarketConfig,
    policy: TieBreakPolicy,
) -> Result<Vec<ResultRow>> {
    let grid = PriceGrid::uniform(spec.options.pab_grid, config.price_cap)?;
    let game = build_bimatrix(models, config, &grid, policy)?;
    let tolerance = pab_tolerance(spec, config);
    let profile = game.game.solve_best(tolerance, &spec.solver());
    let status = if profile.epsilon <= tolerance {
        RowStatus::Ok
    } else {
        log::warn!(
            "pab solver stopped at epsilon {:.3e} > {tolerance:.3e}",
            profile.epsilon
        );
        RowStatus::NotConverged
    };
    let strategies = [
        MixedStrategy::new(&grid, normalize(&profile.strategies[0]))?,
        MixedStrategy::new(&grid, normalize(&profile.strategies[1]))?,
    ];
    let summary = pab_summary(&strategies, &game, models, config)?;
    Ok((0..2)
        .map(|i| ResultRow {
            axis_value: None,
            mechanism: Mechanism::Pab.name(),
            supplier: i + 1,
            price: summary.market_price,
            expected_price: summary.expected_prices[i],
            profit: summary.expected_profits[i],
            epsilon: summary.epsilon,
            lost_load: summary.expected_lost_load,
            status,
        })
        .collect())
}

fn normalize(p: &[f64]) -> Vec<f64> {
    let total: f64 = p.iter().sum();
    p.iter().map(|v| v / total).collect()
}

fn rup_rows(models: &[GenerationModel], config: &MarketConfig) -> Result<Vec<ResultRow>> {
    let outcome = rup::clear_rup(models, config)?;
    let profits = rup::rup_profits(models, config, &outcome)?;
    Ok(profits
        .iter()
        .enumerate()
        .map(|(i, r)| ResultRow {
            axis_value: None,
            mechanism: Mechanism::Rup.name(),
            supplier: i + 1,
            price: outcome.prices[i],
            expected_price: outcome.prices[i],
            profit: r.profit,
            epsilon: 0.0,
            lost_load: outcome.lost_load,
            status: RowStatus::Ok,
        })
        .collect())
}

/// Seed for the `index`-th sweep point, independent of evaluation order.
pub fn point_seed(base: u64, index: usize) -> u64 {
    // splitmix64 finalizer
    let mut z = base.wrapping_add((index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Evaluates every sweep point in parallel; rows come back in axis order.
pub fn run_sweep(spec: &ScenarioSpec, mechanisms: &[Mechanism]) -> Result<Vec<ResultRow>> {
    let sweep = spec
        .sweep
        .as_ref()
        .ok_or_else(|| Error::scenario("sweep", "scenario has no [sweep] section"))?;
    let blocks: Vec<Vec<ResultRow>> = sweep
        .values
        .par_iter()
        .enumerate()
        .map(|(k, &value)| {
            let point = spec.at_sweep_point(sweep.axis, sweep.supplier, value)?;
            run_point(
                &point,
                mechanisms,
                Some(value),
                point_seed(spec.options.seed, k),
            )
        })
        .collect::<Result<_>>()?;
    Ok(blocks.into_iter().flatten().collect())
}

pub fn write_rows<W: Write>(rows: &[ResultRow], format: OutputFormat, mut out: W) -> Result<()> {
    match format {
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            if rows.is_empty() {
                w.write_record(COLUMNS)?;
            }
            for row in rows {
                w.serialize(row)?;
            }
            w.flush()?;
        }
        OutputFormat::Json => {
            #[derive(Serialize)]
            struct Table<'a> {
                schema_version: u32,
                columns: [&'static str; 9],
                rows: &'a [ResultRow],
            }
            let table = Table {
                schema_version: SCHEMA_VERSION,
                columns: COLUMNS,
                rows,
            };
            serde_json::to_writer_pretty(&mut out, &table).map_err(std::io::Error::from)?;
            writeln!(out)?;
        }
    }
    Ok(())
}

/// Outcome of one verification.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// The measured quantity compared against the tolerance.
    pub value: f64,
    pub tolerance: f64,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyReport {
    pub schema_version: u32,
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn write<W: Write>(&self, format: OutputFormat, mut out: W) -> Result<()> {
        match format {
            OutputFormat::Json => {
                serde_json::to_writer_pretty(&mut out, self).map_err(std::io::Error::from)?;
                writeln!(out)?;
            }
            OutputFormat::Csv => {
                let mut w = csv::Writer::from_writer(out);
                for c in &self.checks {
                    w.serialize(c)?;
                }
                w.flush()?;
            }
        }
        Ok(())
    }
}

/// Runs the verifiers that apply to `mechanisms`. `up_profile` replaces the
/// constructed UP quantities when given.
pub fn verify(
    spec: &ScenarioSpec,
    mechanisms: &[Mechanism],
    up_profile: Option<&[f64]>,
) -> Result<VerifyReport> {
    let models = spec.build_models()?;
    let config = spec.market();
    let policy = spec.tie_break();
    let mut checks = Vec::new();

    if mechanisms.contains(&Mechanism::Up) {
        let quantities = match up_profile {
            Some(q) => q.to_vec(),
            None => up::construct_up_equilibrium_with(&models, &config, spec.options.up_split)?
                .iter()
                .map(|b| b.quantity)
                .collect(),
        };
        let cert = up::verify_quantity_equilibrium(
            &quantities,
            &models,
            &config,
            up_grid_step(spec, &models),
            spec.tolerances.up,
            policy,
        )?;
        let detail = match &cert.worst_deviation {
            Some(d) if !cert.passed() => format!(
                "supplier {} gains {:.6e} by offering {:.6} MWh",
                d.supplier + 1,
                d.gain,
                d.bid.quantity
            ),
            _ => format!("profile {quantities:?}"),
        };
        checks.push(Check {
            name: "up-quantity-equilibrium".into(),
            passed: cert.passed(),
            value: cert.epsilon,
            tolerance: cert.tolerance,
            detail,
        });
    }

    if mechanisms.contains(&Mechanism::Pab) {
        let grid = PriceGrid::uniform(spec.options.pab_grid, config.price_cap)?;
        let game = build_bimatrix(&models, &config, &grid, policy)?;
        let tolerance = pab_tolerance(spec, &config);
        let profile = game.game.solve_best(tolerance, &spec.solver());
        let strategies = [
            MixedStrategy::new(&grid, normalize(&profile.strategies[0]))?,
            MixedStrategy::new(&grid, normalize(&profile.strategies[1]))?,
        ];
        let summary = pab_summary(&strategies, &game, &models, &config)?;
        checks.push(Check {
            name: "pab-mixed-equilibrium".into(),
            passed: summary.epsilon <= tolerance,
            value: summary.epsilon,
            tolerance,
            detail: format!(
                "expected prices {:.6} / {:.6}, solver {:?}",
                summary.expected_prices[0], summary.expected_prices[1], profile.method
            ),
        });
        let ls = &summary.lower_support_check;
        checks.push(Check {
            name: "pab-lower-support".into(),
            passed: ls.holds,
            value: ls.supply_within_step,
            tolerance: config.demand,
            detail: format!(
                "lower support {:.6}, supply one step above it {:.6}",
                ls.lower_support, ls.supply_within_step
            ),
        });
    }

    if mechanisms.contains(&Mechanism::Rup) {
        let tol = DualityTolerances {
            price: spec.tolerances.price * config.price_cap,
            quantity: spec.tolerances.quantity,
            objective_relative: spec.tolerances.objective,
        };
        let report = rup::check_duality(&models, &config, spec.options.lp_discretization, tol)?;
        checks.push(Check {
            name: "rup-duality".into(),
            passed: report.holds,
            value: (report.rup_price - report.lp_price).abs(),
            tolerance: tol.price,
            detail: format!(
                "clearing price {:.8}, dual {:.8}, objectives {:.8} / {:.8}, max commitment gap {:.3e}",
                report.rup_price, report.lp_price, report.rup_objective, report.lp_objective, report.max_quantity_gap
            ),
        });
    }

    if Mechanism::ALL.iter().all(|m| mechanisms.contains(m)) && models.len() == 2 {
        let grid = PriceGrid::uniform(spec.options.pab_grid, config.price_cap)?;
        let chain = rup::compare_prices(
            &models,
            &config,
            &grid,
            pab_tolerance(spec, &config),
            &spec.solver(),
            policy,
        );
        let check = match chain {
            Ok(c) => Check {
                name: "price-chain".into(),
                passed: c.holds,
                value: c.pab_price - c.rup_price,
                tolerance: c.grid_step,
                detail: format!(
                    "cap {} >= pab {:.6} >= rup {:.6} > 0 (up {:.6})",
                    c.price_cap, c.pab_price, c.rup_price, c.up_price
                ),
            },
            Err(Error::NonConvergence { best_epsilon, .. }) => Check {
                name: "price-chain".into(),
                passed: false,
                value: f64::NAN,
                tolerance: pab_tolerance(spec, &config),
                detail: format!("pab solver did not converge (epsilon {best_epsilon:.3e})"),
            },
            Err(e) => return Err(e),
        };
        checks.push(check);
    }

    Ok(VerifyReport {
        schema_version: SCHEMA_VERSION,
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::Path;

    const DUOPOLY: &str = r#"
[market]
demand = 2.0
price_cap = 1.0
penalty = 1.5

[[suppliers]]
kind = "truncated-normal"
mean = 1.5
std = 1.0
upper = 3.0

[[suppliers]]
kind = "truncated-normal"
mean = 1.5
std = 1.0
upper = 3.0

[options]
pab_grid = 21
"#;

    fn spec() -> ScenarioSpec {
        ScenarioSpec::from_toml(DUOPOLY, Path::new(".")).unwrap()
    }

    #[test]
    fn clear_all_mechanisms() {
        let rows = run_point(&spec(), &Mechanism::ALL, None, 0).unwrap();
        assert_eq!(rows.len(), 6);
        let up: Vec<_> = rows.iter().filter(|r| r.mechanism == "up").collect();
        assert!(up
            .iter()
            .all(|r| r.price == 1.0 && r.status == RowStatus::Ok));
        let rup = rows.iter().find(|r| r.mechanism == "rup").unwrap();
        assert!((rup.price - 0.41852).abs() < 1e-4);
        let pab = rows.iter().find(|r| r.mechanism == "pab").unwrap();
        assert!(pab.price <= 1.0 && pab.price >= rup.price - 0.05);
    }

    #[test]
    fn pab_dropped_for_three_suppliers_unless_alone() {
        let all = resolve_mechanisms(&Mechanism::ALL, 3, false).unwrap();
        assert_eq!(all, vec![Mechanism::Up, Mechanism::Rup]);
        assert!(resolve_mechanisms(&[Mechanism::Pab], 3, true).is_err());
    }

    #[test]
    fn point_seeds_differ_and_repeat() {
        assert_ne!(point_seed(0, 0), point_seed(0, 1));
        assert_eq!(point_seed(7, 3), point_seed(7, 3));
    }

    #[test]
    fn csv_header_matches_columns() {
        let rows = run_point(&spec(), &[Mechanism::Rup], Some(1.0), 0).unwrap();
        let mut buf = Vec::new();
        write_rows(&rows, OutputFormat::Csv, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), COLUMNS.join(","));
        let mut empty = Vec::new();
        write_rows(&[], OutputFormat::Csv, &mut empty).unwrap();
        assert_eq!(String::from_utf8(empty).unwrap().trim(), COLUMNS.join(","));
    }

    #[test]
    fn verify_default_scenario_passes() {
        let report = verify(&spec(), &Mechanism::ALL, None).unwrap();
        assert!(report.passed(), "{report:#?}");
        assert_eq!(report.checks.len(), 5);
    }

    #[test]
    fn verify_excess_profile_names_supplier() {
        let report = verify(&spec(), &[Mechanism::Up], Some(&[1.5, 1.0])).unwrap();
        assert!(!report.passed());
        assert!(
            report.checks[0].detail.contains("supplier"),
            "{:?}",
            report.checks[0]
        );
    }
}
