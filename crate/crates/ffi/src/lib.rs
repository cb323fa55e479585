//! C ABI for `vre-market`.
//!
//! Every function returns a [`VreStatus`]; results are written through out
//! pointers only on success. Models are opaque handles created by the
//! `vre_model_*` constructors and released with [`vre_model_free`]. The last
//! error message of the calling thread is available from
//! [`vre_last_error_message`].
//!
//! Units: MWh for quantities, k$/MWh for prices, k$ for profits.

use std::cell::RefCell;
use std::ffi::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::slice;

use vre_market::error::Error;
use vre_market::game::SolverOptions;
use vre_market::market::MarketConfig;
use vre_market::merit_order::TieBreakPolicy;
use vre_market::pab::{build_bimatrix, pab_summary, solve_mixed_equilibrium, PriceGrid};
use vre_market::{rup, up, GenerationModel, PlottingPosition};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VreStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidModel = 2,
    InvalidConfig = 3,
    Domain = 4,
    NoClearing = 5,
    Infeasible = 6,
    Unsupported = 7,
    NonConvergence = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VreTieBreak {
    SeededRandom = 0,
    ProRata = 1,
    IndexOrder = 2,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VreMarketConfig {
    pub demand: f64,
    pub price_cap: f64,
    pub penalty: f64,
}

/// Opaque generation model.
pub struct VreModel(GenerationModel);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(message: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = message);
}

fn status_of(e: &Error) -> VreStatus {
    match e {
        Error::InvalidModel(_) => VreStatus::InvalidModel,
        Error::InvalidConfig(_) | Error::Scenario { .. } => VreStatus::InvalidConfig,
        Error::NoClearing => VreStatus::NoClearing,
        Error::Infeasible { .. } => VreStatus::Infeasible,
        Error::Unsupported(_) => VreStatus::Unsupported,
        Error::NonConvergence { .. } => VreStatus::NonConvergence,
        _ => VreStatus::Domain,
    }
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> VreStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_error(String::new());
            VreStatus::Ok
        }
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            VreStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            VreStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(what))
}

unsafe fn slice_in<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn slice_out<'a, T>(
    p: *mut T,
    len: usize,
    what: &'static str,
) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

unsafe fn models(
    handles: *const *const VreModel,
    n: usize,
) -> Result<Vec<GenerationModel>, Failure> {
    slice_in(handles, n, "models")?
        .iter()
        .map(|&h| deref(h, "model handle").map(|m| m.0.clone()))
        .collect()
}

unsafe fn config(c: *const VreMarketConfig) -> Result<MarketConfig, Failure> {
    let c = deref(c, "config")?;
    Ok(MarketConfig::new(c.demand, c.price_cap, c.penalty)?)
}

fn policy(tie_break: VreTieBreak, seed: u64) -> TieBreakPolicy {
    match tie_break {
        VreTieBreak::SeededRandom => TieBreakPolicy::SeededRandom(seed),
        VreTieBreak::ProRata => TieBreakPolicy::ProRata,
        VreTieBreak::IndexOrder => TieBreakPolicy::IndexOrder,
    }
}

fn boxed(model: GenerationModel, slot: &mut *mut VreModel) {
    *slot = Box::into_raw(Box::new(VreModel(model)));
}

/// Normal(mean, std) truncated to `[0, upper]`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn vre_model_truncated_normal(
    mean: f64,
    std: f64,
    upper: f64,
    out: *mut *mut VreModel,
) -> VreStatus {
    guard(|| {
        let slot = self::out(out, "out")?;
        boxed(GenerationModel::truncated_normal(mean, std, upper)?, slot);
        Ok(())
    })
}

/// Uniform on `[0, upper]`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn vre_model_uniform(upper: f64, out: *mut *mut VreModel) -> VreStatus {
    guard(|| {
        let slot = self::out(out, "out")?;
        boxed(GenerationModel::uniform(upper)?, slot);
        Ok(())
    })
}

/// Piecewise-linear empirical CDF with `k / (n + 1)` plotting positions.
///
/// # Safety
/// `samples` must point to `len` readable doubles; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn vre_model_empirical(
    samples: *const f64,
    len: usize,
    out: *mut *mut VreModel,
) -> VreStatus {
    guard(|| {
        let samples = slice_in(samples, len, "samples")?;
        let slot = self::out(out, "out")?;
        boxed(
            GenerationModel::empirical(samples, PlottingPosition::Weibull)?,
            slot,
        );
        Ok(())
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must come from a `vre_model_*` constructor and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn vre_model_free(model: *mut VreModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Largest possible output, MWh.
///
/// # Safety
/// `model` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn vre_model_capacity(model: *const VreModel, out: *mut f64) -> VreStatus {
    guard(|| {
        *self::out(out, "out")? = deref(model, "model")?.0.support_hi();
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn vre_model_cdf(model: *const VreModel, x: f64, out: *mut f64) -> VreStatus {
    guard(|| {
        *self::out(out, "out")? = deref(model, "model")?.0.cdf(x);
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn vre_model_quantile(
    model: *const VreModel,
    u: f64,
    out: *mut f64,
) -> VreStatus {
    guard(|| {
        *self::out(out, "out")? = deref(model, "model")?.0.quantile(u)?;
        Ok(())
    })
}

/// `E[(x - X)^+]`.
///
/// # Safety
/// `model` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn vre_model_expected_shortfall(
    model: *const VreModel,
    x: f64,
    out: *mut f64,
) -> VreStatus {
    guard(|| {
        let m = &deref(model, "model")?.0;
        if !(x.is_finite() && x >= 0.0) {
            return Err(Error::Domain(format!("commitment must be non-negative, got {x}")).into());
        }
        *self::out(out, "out")? = m.expected_shortfall(x);
        Ok(())
    })
}

/// `F^-1(min(price / penalty, 1))`.
///
/// # Safety
/// `model` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn vre_model_optimal_commitment(
    model: *const VreModel,
    price: f64,
    penalty: f64,
    out: *mut f64,
) -> VreStatus {
    guard(|| {
        *self::out(out, "out")? = deref(model, "model")?
            .0
            .optimal_commitment(price, penalty)?;
        Ok(())
    })
}

/// Regulated uniform pricing from truthful supply curves.
///
/// # Safety
/// `models` must hold `n` live handles, `commitments` room for `n` doubles,
/// and the scalar out pointers must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn vre_clear_rup(
    models: *const *const VreModel,
    n: usize,
    config: *const VreMarketConfig,
    price: *mut f64,
    commitments: *mut f64,
    lost_load: *mut f64,
) -> VreStatus {
    guard(|| {
        let ms = self::models(models, n)?;
        let cfg = self::config(config)?;
        let price = out(price, "price")?;
        let commitments = slice_out(commitments, n, "commitments")?;
        let lost_load = out(lost_load, "lost_load")?;
        let outcome = rup::clear_rup(&ms, &cfg)?;
        *price = outcome.prices[0];
        commitments.copy_from_slice(&outcome.commitments);
        *lost_load = outcome.lost_load;
        Ok(())
    })
}

/// Clears zero-price quantity offers under uniform pricing.
///
/// # Safety
/// `quantities` and `commitments` must hold `n` doubles; scalar out pointers
/// must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn vre_clear_up_zero(
    quantities: *const f64,
    n: usize,
    config: *const VreMarketConfig,
    tie_break: VreTieBreak,
    seed: u64,
    price: *mut f64,
    commitments: *mut f64,
    lost_load: *mut f64,
) -> VreStatus {
    guard(|| {
        let q = slice_in(quantities, n, "quantities")?;
        let cfg = self::config(config)?;
        let price = out(price, "price")?;
        let commitments = slice_out(commitments, n, "commitments")?;
        let lost_load = out(lost_load, "lost_load")?;
        let outcome = up::clear_up_zero(q, &cfg, policy(tie_break, seed))?;
        *price = outcome.prices[0];
        commitments.copy_from_slice(&outcome.commitments);
        *lost_load = outcome.lost_load;
        Ok(())
    })
}

/// Zero-price uniform-pricing equilibrium quantities with proportional shares.
///
/// # Safety
/// `models` must hold `n` live handles and `quantities` room for `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn vre_up_equilibrium(
    models: *const *const VreModel,
    n: usize,
    config: *const VreMarketConfig,
    quantities: *mut f64,
) -> VreStatus {
    guard(|| {
        let ms = self::models(models, n)?;
        let cfg = self::config(config)?;
        let quantities = slice_out(quantities, n, "quantities")?;
        for (slot, bid) in quantities
            .iter_mut()
            .zip(up::construct_up_equilibrium(&ms, &cfg)?)
        {
            *slot = bid.quantity;
        }
        Ok(())
    })
}

/// Mixed equilibrium of the pay-as-bid duopoly on `grid_levels` uniform
/// prices in `[0, cap]`.
///
/// `strategies` receives both suppliers' probabilities, supplier 1 first,
/// `2 * grid_levels` doubles in all; `expected_prices` receives two doubles.
///
/// # Safety
/// `models` must hold two live handles; the out pointers must have the sizes above.
#[no_mangle]
pub unsafe extern "C" fn vre_pab_solve(
    models: *const *const VreModel,
    config: *const VreMarketConfig,
    grid_levels: usize,
    tolerance: f64,
    tie_break: VreTieBreak,
    seed: u64,
    strategies: *mut f64,
    expected_prices: *mut f64,
    epsilon: *mut f64,
) -> VreStatus {
    guard(|| {
        let ms = self::models(models, 2)?;
        let cfg = self::config(config)?;
        let strategies = slice_out(strategies, 2 * grid_levels, "strategies")?;
        let expected_prices = slice_out(expected_prices, 2, "expected_prices")?;
        let epsilon = out(epsilon, "epsilon")?;
        let grid = PriceGrid::uniform(grid_levels, cfg.price_cap)?;
        let game = build_bimatrix(&ms, &cfg, &grid, policy(tie_break, seed))?;
        let (mixed, _) = solve_mixed_equilibrium(&game, tolerance, &SolverOptions::default())?;
        let summary = pab_summary(&mixed, &game, &ms, &cfg)?;
        strategies[..grid_levels].copy_from_slice(&mixed[0].probabilities);
        strategies[grid_levels..].copy_from_slice(&mixed[1].probabilities);
        expected_prices.copy_from_slice(&summary.expected_prices);
        *epsilon = summary.epsilon;
        Ok(())
    })
}

/// Copies the calling thread's last error message, NUL-terminated and
/// truncated to `len` bytes. Returns the full message length excluding the NUL.
///
/// # Safety
/// `buf` must be valid for `len` bytes of writes, or null with `len == 0`.
#[no_mangle]
pub unsafe extern "C" fn vre_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let message = e.borrow();
        let bytes = message.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}
