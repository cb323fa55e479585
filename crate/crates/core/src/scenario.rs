//! TOML scenario files: market, suppliers, solver options and an optional
//! sweep. Every default is explicit in the serialized form, so
//! `--print-config` output can be fed back in unchanged.
//!
//! ```toml
//! [market]
//! demand = 2.0
//! price_cap = 1.0
//! penalty = 1.5
//!
//! [[suppliers]]
//! kind = "truncated-normal"
//! mean = 1.5
//! std = 1.0
//! upper = 3.0
//!
//! [[suppliers]]
//! kind = "empirical"
//! data = "../data/solar_fixture.csv"   # relative to this file
//! month = 7
//! hour = 16
//!
//! [sweep]
//! axis = "penalty-price"
//! values = [0.5, 1.0, 1.5]
//! ```
//!
//! Suppliers are numbered from 1 in sweeps and output tables.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::distributions::{GenerationModel, PlottingPosition};
use crate::error::{Error, Result};
use crate::game::{SolverMethod, SolverOptions};
use crate::ingest::{self, ColumnMapping, GenerationRecord, ParseMode};
use crate::market::MarketConfig;
use crate::merit_order::TieBreakPolicy;
use crate::up::UpSplit;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub market: MarketSection,
    pub suppliers: Vec<SupplierSpec>,
    #[serde(default)]
    pub options: Options,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    /// Directory that relative data paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketSection {
    pub demand: f64,
    pub price_cap: f64,
    pub penalty: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SupplierSpec {
    TruncatedNormal {
        mean: f64,
        std: f64,
        upper: f64,
    },
    Uniform {
        upper: f64,
    },
    /// Historical records filtered to one month and hour.
    Empirical {
        data: PathBuf,
        month: u32,
        hour: u32,
        #[serde(default = "one")]
        scale: f64,
        #[serde(default)]
        plotting: PlottingPosition,
        #[serde(default)]
        columns: ColumnMapping,
        #[serde(default)]
        parse: ParseMode,
    },
    /// Inline output samples.
    Samples {
        samples: Vec<f64>,
        #[serde(default = "one")]
        scale: f64,
        #[serde(default)]
        plotting: PlottingPosition,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TieBreak {
    #[default]
    SeededRandom,
    ProRata,
    IndexOrder,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Options {
    pub seed: u64,
    pub tie_break: TieBreak,
    pub up_split: UpSplit,
    /// Number of PAB price levels, 0 and the cap included.
    pub pab_grid: usize,
    pub pab_solver: SolverMethod,
    pub pab_max_iterations: usize,
    /// Segment width of the social-cost solver, MWh.
    pub lp_discretization: f64,
    /// UP quantity deviations are searched on this many steps of the largest capacity.
    pub up_grid_points: usize,
}

impl Default for Options {
    fn default() -> Self {
        Options {
            seed: 0,
            tie_break: TieBreak::SeededRandom,
            up_split: UpSplit::Equal,
            pab_grid: 101,
            pab_solver: SolverMethod::Auto,
            pab_max_iterations: 100_000,
            lp_discretization: 1e-4,
            up_grid_points: 1000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Absolute UP deviation gain, k$.
    pub up: f64,
    /// PAB ε as a fraction of `price_cap * demand`.
    pub pab: f64,
    /// Duality price gap as a fraction of the price cap.
    pub price: f64,
    /// Duality commitment gap, MWh.
    pub quantity: f64,
    /// Duality objective gap, relative.
    pub objective: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            up: 1e-6,
            pab: 1e-3,
            price: 1e-4,
            quantity: 1e-3,
            objective: 1e-6,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mechanism {
    Up,
    Pab,
    Rup,
}

impl Mechanism {
    pub const ALL: [Mechanism; 3] = [Mechanism::Up, Mechanism::Pab, Mechanism::Rup];

    pub fn name(self) -> &'static str {
        match self {
            Mechanism::Up => "up",
            Mechanism::Pab => "pab",
            Mechanism::Rup => "rup",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    /// Standard deviation of a truncated-normal supplier.
    SupplierStd,
    PenaltyPrice,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    /// 1-based supplier whose std is swept.
    #[serde(default = "second_supplier")]
    pub supplier: usize,
    pub values: Vec<f64>,
    #[serde(default = "all_mechanisms")]
    pub mechanisms: Vec<Mechanism>,
}

fn second_supplier() -> usize {
    2
}

fn all_mechanisms() -> Vec<Mechanism> {
    Mechanism::ALL.to_vec()
}

impl ScenarioSpec {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, &base)
    }

    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut spec: ScenarioSpec = toml::from_str(text).map_err(|e| {
            let field = e.span().map_or_else(String::new, |s| {
                let line = text[..s.start].matches('\n').count() + 1;
                format!("line {line}")
            });
            Error::scenario(field, e.message().to_string())
        })?;
        spec.base_dir = base_dir.to_path_buf();
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn market(&self) -> MarketConfig {
        MarketConfig {
            demand: self.market.demand,
            price_cap: self.market.price_cap,
            penalty: self.market.penalty,
        }
    }

    pub fn tie_break(&self) -> TieBreakPolicy {
        self.tie_break_with_seed(self.options.seed)
    }

    pub fn tie_break_with_seed(&self, seed: u64) -> TieBreakPolicy {
        match self.options.tie_break {
            TieBreak::SeededRandom => TieBreakPolicy::SeededRandom(seed),
            TieBreak::ProRata => TieBreakPolicy::ProRata,
            TieBreak::IndexOrder => TieBreakPolicy::IndexOrder,
        }
    }

    pub fn solver(&self) -> SolverOptions {
        SolverOptions {
            method: self.options.pab_solver,
            max_iterations: self.options.pab_max_iterations,
            ..SolverOptions::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |field: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::scenario(field, format!("must be positive, got {v}")))
            }
        };
        positive("market.demand", self.market.demand)?;
        positive("market.price_cap", self.market.price_cap)?;
        positive("market.penalty", self.market.penalty)?;
        if self.suppliers.is_empty() {
            return Err(Error::scenario(
                "suppliers",
                "at least one supplier is required",
            ));
        }
        for (i, s) in self.suppliers.iter().enumerate() {
            let at = |f: &str| format!("suppliers[{i}].{f}");
            match s {
                SupplierSpec::TruncatedNormal { std, upper, mean } => {
                    positive(&at("std"), *std)?;
                    positive(&at("upper"), *upper)?;
                    if !mean.is_finite() {
                        return Err(Error::scenario(at("mean"), "must be finite"));
                    }
                }
                SupplierSpec::Uniform { upper } => positive(&at("upper"), *upper)?,
                SupplierSpec::Empirical {
                    data,
                    month,
                    hour,
                    scale,
                    ..
                } => {
                    positive(&at("scale"), *scale)?;
                    if !(1..=12).contains(month) {
                        return Err(Error::scenario(
                            at("month"),
                            format!("{month} outside 1-12"),
                        ));
                    }
                    if *hour > 23 {
                        return Err(Error::scenario(at("hour"), format!("{hour} outside 0-23")));
                    }
                    let path = self.resolve(data);
                    if !path.is_file() {
                        return Err(Error::scenario(
                            at("data"),
                            format!("{} not found", path.display()),
                        ));
                    }
                }
                SupplierSpec::Samples { samples, scale, .. } => {
                    positive(&at("scale"), *scale)?;
                    if samples.len() < 2 {
                        return Err(Error::scenario(at("samples"), "need at least 2 samples"));
                    }
                }
            }
        }
        let o = &self.options;
        if o.pab_grid < 2 {
            return Err(Error::scenario(
                "options.pab_grid",
                "need at least 2 levels",
            ));
        }
        positive("options.lp_discretization", o.lp_discretization)?;
        if o.up_grid_points == 0 {
            return Err(Error::scenario(
                "options.up_grid_points",
                "must be positive",
            ));
        }
        if o.pab_max_iterations == 0 {
            return Err(Error::scenario(
                "options.pab_max_iterations",
                "must be positive",
            ));
        }
        let t = &self.tolerances;
        positive("tolerances.up", t.up)?;
        positive("tolerances.pab", t.pab)?;
        positive("tolerances.price", t.price)?;
        positive("tolerances.quantity", t.quantity)?;
        positive("tolerances.objective", t.objective)?;
        if let Some(sweep) = &self.sweep {
            self.validate_sweep(sweep)?;
        }
        Ok(())
    }

    fn validate_sweep(&self, sweep: &SweepSpec) -> Result<()> {
        if sweep.values.is_empty() {
            return Err(Error::scenario("sweep.values", "must not be empty"));
        }
        if sweep.values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::scenario("sweep.values", "values must be positive"));
        }
        if !sweep.values.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::scenario(
                "sweep.values",
                "values must be strictly ascending",
            ));
        }
        if sweep.mechanisms.is_empty() {
            return Err(Error::scenario("sweep.mechanisms", "must not be empty"));
        }
        if sweep.axis == SweepAxis::SupplierStd {
            match self.suppliers.get(sweep.supplier.wrapping_sub(1)) {
                Some(SupplierSpec::TruncatedNormal { .. }) => {}
                Some(_) => {
                    return Err(Error::scenario(
                        "sweep.supplier",
                        format!("supplier {} is not truncated-normal", sweep.supplier),
                    ))
                }
                None => {
                    return Err(Error::scenario(
                        "sweep.supplier",
                        format!(
                            "no supplier {} (suppliers are numbered from 1)",
                            sweep.supplier
                        ),
                    ))
                }
            }
        }
        Ok(())
    }

    fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    /// Copy of the scenario moved to `value` on the sweep axis.
    pub fn at_sweep_point(
        &self,
        axis: SweepAxis,
        supplier: usize,
        value: f64,
    ) -> Result<ScenarioSpec> {
        let mut spec = self.clone();
        match axis {
            SweepAxis::PenaltyPrice => spec.market.penalty = value,
            SweepAxis::SupplierStd => match spec.suppliers.get_mut(supplier.wrapping_sub(1)) {
                Some(SupplierSpec::TruncatedNormal { std, .. }) => *std = value,
                _ => {
                    return Err(Error::scenario(
                        "sweep.supplier",
                        "not a truncated-normal supplier",
                    ))
                }
            },
        }
        spec.sweep = None;
        spec.validate()?;
        Ok(spec)
    }

    /// Builds every supplier's model, reading each data file once.
    pub fn build_models(&self) -> Result<Vec<GenerationModel>> {
        let mut cache: HashMap<(PathBuf, ParseMode), Vec<GenerationRecord>> = HashMap::new();
        self.suppliers
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let at = |f: &str| format!("suppliers[{i}].{f}");
                let wrap = |e: Error| Error::scenario(at("kind"), e.to_string());
                match s {
                    SupplierSpec::TruncatedNormal { mean, std, upper } => {
                        GenerationModel::truncated_normal(*mean, *std, *upper).map_err(wrap)
                    }
                    SupplierSpec::Uniform { upper } => {
                        GenerationModel::uniform(*upper).map_err(wrap)
                    }
                    SupplierSpec::Samples {
                        samples,
                        scale,
                        plotting,
                    } => GenerationModel::empirical(samples, *plotting)
                        .and_then(|m| m.scaled(*scale))
                        .map_err(wrap),
                    SupplierSpec::Empirical {
                        data,
                        month,
                        hour,
                        scale,
                        plotting,
                        columns,
                        parse,
                    } => {
                        let path = self.resolve(data);
                        let key = (path.clone(), *parse);
                        if !cache.contains_key(&key) {
                            let loaded = ingest::load_records_with(&path, columns, *parse)?;
                            cache.insert(key.clone(), loaded.records);
                        }
                        ingest::build_empirical_model(
                            &cache[&key],
                            *month,
                            *hour,
                            *scale,
                            *plotting,
                        )
                        .map_err(|e| Error::scenario(at("data"), e.to_string()))
                    }
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
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
"#;

    fn parse(text: &str) -> Result<ScenarioSpec> {
        ScenarioSpec::from_toml(text, Path::new("."))
    }

    #[test]
    fn minimal_scenario_gets_explicit_defaults() {
        let spec = parse(BASE).unwrap();
        assert_eq!(spec.options, Options::default());
        assert_eq!(spec.build_models().unwrap().len(), 2);
        let printed = spec.to_toml();
        assert!(printed.contains("pab_grid = 101"));
        let again = parse(&printed).unwrap();
        assert_eq!(again, spec);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = format!("{BASE}\n[options]\nseeed = 3\n");
        let err = parse(&text).unwrap_err().to_string();
        assert!(err.contains("seeed"), "{err}");
        let text = BASE.replace(
            "std = 1.0\nupper = 3.0\n\n[[",
            "std = 1.0\nupper = 3.0\nmode = 2\n\n[[",
        );
        assert!(parse(&text).is_err());
    }

    #[test]
    fn validation_names_the_field() {
        let text = BASE.replacen("std = 1.0", "std = -1.0", 1);
        let err = parse(&text).unwrap_err().to_string();
        assert!(err.contains("suppliers[0].std"), "{err}");
        let text = BASE.replace("demand = 2.0", "demand = 0.0");
        assert!(parse(&text)
            .unwrap_err()
            .to_string()
            .contains("market.demand"));
    }

    #[test]
    fn sweep_validation() {
        let ok = format!("{BASE}\n[sweep]\naxis = \"supplier-std\"\nvalues = [0.2, 0.4]\n");
        let spec = parse(&ok).unwrap();
        assert_eq!(spec.sweep.as_ref().unwrap().supplier, 2);
        let moved = spec.at_sweep_point(SweepAxis::SupplierStd, 2, 0.4).unwrap();
        assert!(
            matches!(moved.suppliers[1], SupplierSpec::TruncatedNormal { std, .. } if std == 0.4)
        );
        let descending =
            format!("{BASE}\n[sweep]\naxis = \"penalty-price\"\nvalues = [2.0, 1.0]\n");
        assert!(parse(&descending)
            .unwrap_err()
            .to_string()
            .contains("sweep.values"));
        let bad_supplier =
            format!("{BASE}\n[sweep]\naxis = \"supplier-std\"\nsupplier = 3\nvalues = [1.0]\n");
        assert!(parse(&bad_supplier)
            .unwrap_err()
            .to_string()
            .contains("sweep.supplier"));
    }

    #[test]
    fn missing_data_file_is_reported() {
        let text = format!(
            "{BASE}\n[[suppliers]]\nkind = \"empirical\"\ndata = \"nope.csv\"\nmonth = 7\nhour = 16\n"
        );
        let err = parse(&text).unwrap_err().to_string();
        assert!(err.contains("suppliers[2].data"), "{err}");
    }

    #[test]
    fn inline_samples() {
        let text = r#"
[market]
demand = 1.0
price_cap = 1.0
penalty = 1.0

[[suppliers]]
kind = "samples"
samples = [1.0, 2.0, 3.0]
scale = 2.0
"#;
        let models = parse(text).unwrap().build_models().unwrap();
        assert_eq!(models[0].quantile(0.5).unwrap(), 4.0);
    }
}
