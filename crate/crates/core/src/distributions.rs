//! Random generation models and the single-supplier optimal commitment rule.
//!
//! Every model lives on `[0, support_hi]` with a continuous CDF. A supplier
//! paid `price` per MWh committed, and charged `penalty` per MWh of real-time
//! shortfall, maximises `x * price - penalty * E[(x - X)^+]` by committing the
//! `min(price / penalty, 1)` quantile of its output.

use libm::erfc;

use crate::error::{Error, Result};
use crate::quadrature;

const QUAD_TOL: f64 = 1e-13;

/// Where the order statistics of an empirical sample sit on the probability axis.
///
/// The largest sample is always pinned to probability 1 and the origin to 0.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlottingPosition {
    /// `k / (n + 1)`
    #[default]
    Weibull,
    /// `(k - 0.5) / n`
    Hazen,
}

impl PlottingPosition {
    fn position(self, k: usize, n: usize) -> f64 {
        match self {
            PlottingPosition::Weibull => k as f64 / (n as f64 + 1.0),
            PlottingPosition::Hazen => (k as f64 - 0.5) / n as f64,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Kind {
    TruncatedNormal {
        mean: f64,
        std: f64,
        upper: f64,
        phi_lo: f64,
        mass: f64,
    },
    Uniform {
        upper: f64,
    },
    /// Strictly increasing unit-scale knots, `xs[0] = 0`, `us[0] = 0`,
    /// `us[last] = 1`; output is `scale` times the unit variable.
    Empirical {
        xs: Vec<f64>,
        us: Vec<f64>,
        scale: f64,
    },
}

/// A supplier's random output on `[0, support_hi]` (MWh).
#[derive(Clone, Debug, PartialEq)]
pub struct GenerationModel {
    kind: Kind,
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

impl GenerationModel {
    /// Normal(`mean`, `std`) truncated to `[0, upper]`.
    pub fn truncated_normal(mean: f64, std: f64, upper: f64) -> Result<Self> {
        if !(std.is_finite() && std > 0.0) {
            return Err(Error::InvalidModel(format!(
                "std must be positive, got {std}"
            )));
        }
        if !(upper.is_finite() && upper > 0.0) {
            return Err(Error::InvalidModel(format!(
                "upper bound must be positive, got {upper}"
            )));
        }
        if !mean.is_finite() {
            return Err(Error::InvalidModel("mean must be finite".into()));
        }
        let phi_lo = std_normal_cdf(-mean / std);
        let mass = std_normal_cdf((upper - mean) / std) - phi_lo;
        if !(mass > 0.0) {
            return Err(Error::InvalidModel(format!(
                "truncation [0, {upper}] carries no probability mass for mean {mean}, std {std}"
            )));
        }
        Ok(GenerationModel {
            kind: Kind::TruncatedNormal {
                mean,
                std,
                upper,
                phi_lo,
                mass,
            },
        })
    }

    pub fn uniform(upper: f64) -> Result<Self> {
        if !(upper.is_finite() && upper > 0.0) {
            return Err(Error::InvalidModel(format!(
                "upper bound must be positive, got {upper}"
            )));
        }
        Ok(GenerationModel {
            kind: Kind::Uniform { upper },
        })
    }

    /// Piecewise-linear interpolation of the empirical CDF.
    ///
    /// Knots are `(0, 0)`, each distinct positive sample at its plotting
    /// position, and the sample maximum at probability 1. Tied samples take the
    /// largest position among them (right-continuous ECDF value); zero samples
    /// collapse into the origin.
    pub fn empirical(samples: &[f64], plotting: PlottingPosition) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidModel(format!(
                "empirical model needs at least 2 samples, got {}",
                samples.len()
            )));
        }
        if let Some(bad) = samples.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidModel(format!(
                "sample {bad} is not a finite non-negative output"
            )));
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        if sorted[n - 1] <= 0.0 {
            return Err(Error::InvalidModel("all samples are zero".into()));
        }

        let mut xs = vec![0.0];
        let mut us = vec![0.0];
        for (idx, &value) in sorted.iter().enumerate() {
            if value <= 0.0 {
                continue;
            }
            let last_of_tie = idx + 1 == n || sorted[idx + 1] > value;
            if !last_of_tie {
                continue;
            }
            let u = if idx + 1 == n {
                1.0
            } else {
                plotting.position(idx + 1, n)
            };
            xs.push(value);
            us.push(u);
        }
        Ok(GenerationModel {
            kind: Kind::Empirical { xs, us, scale: 1.0 },
        })
    }

    /// The same model with output multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor.is_finite() && factor > 0.0) {
            return Err(Error::InvalidModel(format!(
                "scale must be positive, got {factor}"
            )));
        }
        match &self.kind {
            Kind::TruncatedNormal {
                mean, std, upper, ..
            } => GenerationModel::truncated_normal(mean * factor, std * factor, upper * factor),
            Kind::Uniform { upper } => GenerationModel::uniform(upper * factor),
            Kind::Empirical { xs, us, scale } => Ok(GenerationModel {
                kind: Kind::Empirical {
                    xs: xs.clone(),
                    us: us.clone(),
                    scale: scale * factor,
                },
            }),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            Kind::TruncatedNormal { .. } => "truncated-normal",
            Kind::Uniform { .. } => "uniform",
            Kind::Empirical { .. } => "empirical",
        }
    }

    pub fn support_lo(&self) -> f64 {
        0.0
    }

    pub fn support_hi(&self) -> f64 {
        match &self.kind {
            Kind::TruncatedNormal { upper, .. } | Kind::Uniform { upper } => *upper,
            Kind::Empirical { xs, scale, .. } => scale * xs.last().expect("knots are never empty"),
        }
    }

    /// Interpolation knots `(x, F(x))` of an empirical model.
    pub fn knots(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        match &self.kind {
            Kind::Empirical { xs, us, scale } => {
                Some((xs.iter().map(|x| x * scale).collect(), us.clone()))
            }
            _ => None,
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if x >= self.support_hi() {
            return 1.0;
        }
        match &self.kind {
            Kind::TruncatedNormal {
                mean,
                std,
                phi_lo,
                mass,
                ..
            } => ((std_normal_cdf((x - mean) / std) - phi_lo) / mass).clamp(0.0, 1.0),
            Kind::Uniform { upper } => x / upper,
            Kind::Empirical { xs, us, scale } => {
                let x = x / scale;
                let k = (xs.partition_point(|&knot| knot <= x) - 1).min(xs.len() - 2);
                let t = ((x - xs[k]) / (xs[k + 1] - xs[k])).clamp(0.0, 1.0);
                us[k] + t * (us[k + 1] - us[k])
            }
        }
    }

    /// Density; piecewise constant for empirical models (right-continuous at knots).
    pub fn pdf(&self, x: f64) -> f64 {
        if x < 0.0 || x >= self.support_hi() {
            return 0.0;
        }
        match &self.kind {
            Kind::TruncatedNormal {
                mean, std, mass, ..
            } => std_normal_pdf((x - mean) / std) / (std * mass),
            Kind::Uniform { upper } => 1.0 / upper,
            Kind::Empirical { xs, us, scale } => {
                let x = x / scale;
                let k = (xs.partition_point(|&knot| knot <= x) - 1).min(xs.len() - 2);
                (us[k + 1] - us[k]) / (xs[k + 1] - xs[k]) / scale
            }
        }
    }

    /// Left-continuous generalized inverse: the smallest `x` with `cdf(x) >= u`.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::Domain(format!("quantile level {u} outside [0, 1]")));
        }
        if u == 0.0 {
            return Ok(0.0);
        }
        if u == 1.0 {
            return Ok(self.support_hi());
        }
        Ok(match &self.kind {
            Kind::Uniform { upper } => u * upper,
            Kind::Empirical { xs, us, scale } => {
                let k = us.partition_point(|&level| level < u) - 1;
                let t = (u - us[k]) / (us[k + 1] - us[k]);
                scale * (xs[k] + t * (xs[k + 1] - xs[k]))
            }
            Kind::TruncatedNormal { upper, .. } => {
                // Bisect down to adjacent floats; cdf(lo) < u <= cdf(hi).
                let (mut lo, mut hi) = (0.0, *upper);
                for _ in 0..2048 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if self.cdf(mid) >= u {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                hi
            }
        })
    }

    /// `∫_a^b F(t) dt` for `0 <= a <= b`.
    pub fn cdf_integral(&self, a: f64, b: f64) -> f64 {
        let a = a.max(0.0);
        if b <= a {
            return 0.0;
        }
        let hi = self.support_hi();
        let beyond = (b - a.max(hi)).max(0.0);
        let (a_in, b_in) = (a.min(hi), b.min(hi));
        if b_in <= a_in {
            return beyond;
        }
        let inside = match &self.kind {
            Kind::Uniform { upper } => (b_in * b_in - a_in * a_in) / (2.0 * upper),
            Kind::TruncatedNormal { .. } => {
                quadrature::integrate(|t| self.cdf(t), a_in, b_in, QUAD_TOL)
            }
            Kind::Empirical { xs, us, scale } => {
                let (a_u, b_u) = (a_in / scale, b_in / scale);
                let unit_cdf = |k: usize, x: f64| {
                    us[k] + (x - xs[k]) / (xs[k + 1] - xs[k]) * (us[k + 1] - us[k])
                };
                let mut total = 0.0;
                let first = (xs.partition_point(|&knot| knot <= a_u) - 1).min(xs.len() - 2);
                for k in first..xs.len() - 1 {
                    let lo = xs[k].max(a_u);
                    let up = xs[k + 1].min(b_u);
                    if up <= lo {
                        break;
                    }
                    total += 0.5 * (unit_cdf(k, lo) + unit_cdf(k, up)) * (up - lo);
                }
                scale * total
            }
        };
        inside + beyond
    }

    /// `E[(x - X)^+]`, computed as `∫_0^x F(t) dt`.
    pub fn expected_shortfall(&self, x: f64) -> f64 {
        self.cdf_integral(0.0, x)
    }

    pub fn mean(&self) -> f64 {
        let hi = self.support_hi();
        hi - self.cdf_integral(0.0, hi)
    }

    /// `∫_0^y t f(t) dt`, the partial first moment.
    pub fn partial_moment(&self, y: f64) -> f64 {
        let y = y.min(self.support_hi());
        if y <= 0.0 {
            return 0.0;
        }
        match &self.kind {
            Kind::Uniform { upper } => y * y / (2.0 * upper),
            Kind::TruncatedNormal { .. } => {
                quadrature::integrate(|t| t * self.pdf(t), 0.0, y, QUAD_TOL)
            }
            Kind::Empirical { xs, us, scale } => {
                let y = y / scale;
                let mut total = 0.0;
                for k in 0..xs.len() - 1 {
                    if xs[k] >= y {
                        break;
                    }
                    let up = xs[k + 1].min(y);
                    let density = (us[k + 1] - us[k]) / (xs[k + 1] - xs[k]);
                    total += density * 0.5 * (up * up - xs[k] * xs[k]);
                }
                scale * total
            }
        }
    }

    /// Profit-maximising day-ahead commitment when paid `price`: `F^-1(min(price / penalty, 1))`.
    pub fn optimal_commitment(&self, price: f64, penalty: f64) -> Result<f64> {
        if !(penalty.is_finite() && penalty > 0.0) {
            return Err(Error::Domain(format!(
                "penalty must be positive, got {penalty}"
            )));
        }
        if !(price.is_finite() && price >= 0.0) {
            return Err(Error::Domain(format!(
                "price must be non-negative, got {price}"
            )));
        }
        self.quantile((price / penalty).min(1.0))
    }

    /// `penalty * ∫_0^{y*(price)} t f(t) dt`: the profit of a supplier committing
    /// `y*(price)` and paid `price`.
    pub fn commitment_weighted_integral(&self, price: f64, penalty: f64) -> Result<f64> {
        if !(price > 0.0) {
            return Err(Error::Domain(format!(
                "price must be positive, got {price}"
            )));
        }
        let y = self.optimal_commitment(price, penalty)?;
        Ok(penalty * self.partial_moment(y))
    }
}
