#ifndef VRE_MARKET_H
#define VRE_MARKET_H

/* Generated by cbindgen from the vre-market-ffi crate. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  VRE_STATUS_OK = 0,
  VRE_STATUS_NULL_POINTER = 1,
  VRE_STATUS_INVALID_MODEL = 2,
  VRE_STATUS_INVALID_CONFIG = 3,
  VRE_STATUS_DOMAIN = 4,
  VRE_STATUS_NO_CLEARING = 5,
  VRE_STATUS_INFEASIBLE = 6,
  VRE_STATUS_UNSUPPORTED = 7,
  VRE_STATUS_NON_CONVERGENCE = 8,
  VRE_STATUS_PANIC = 9,
} VreStatus;

typedef enum {
  VRE_TIE_BREAK_SEEDED_RANDOM = 0,
  VRE_TIE_BREAK_PRO_RATA = 1,
  VRE_TIE_BREAK_INDEX_ORDER = 2,
} VreTieBreak;

/**
 * Opaque generation model.
 */
typedef struct VreModel VreModel;

typedef struct {
  double demand;
  double price_cap;
  double penalty;
} VreMarketConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Normal(mean, std) truncated to `[0, upper]`.
 *
 * # Safety
 * `out` must be valid for writes.
 */
VreStatus vre_model_truncated_normal(double mean, double std, double upper, VreModel **out);

/**
 * Uniform on `[0, upper]`.
 *
 * # Safety
 * `out` must be valid for writes.
 */
VreStatus vre_model_uniform(double upper, VreModel **out);

/**
 * Piecewise-linear empirical CDF with `k / (n + 1)` plotting positions.
 *
 * # Safety
 * `samples` must point to `len` readable doubles; `out` must be valid for writes.
 */
VreStatus vre_model_empirical(const double *samples, size_t len, VreModel **out);

/**
 * Releases a model. Null is ignored.
 *
 * # Safety
 * `model` must come from a `vre_model_*` constructor and not be freed twice.
 */
void vre_model_free(VreModel *model);

/**
 * Largest possible output, MWh.
 *
 * # Safety
 * `model` must be a live handle and `out` valid for writes.
 */
VreStatus vre_model_capacity(const VreModel *model, double *out);

/**
 * # Safety
 * `model` must be a live handle and `out` valid for writes.
 */
VreStatus vre_model_cdf(const VreModel *model, double x, double *out);

/**
 * # Safety
 * `model` must be a live handle and `out` valid for writes.
 */
VreStatus vre_model_quantile(const VreModel *model, double u, double *out);

/**
 * `E[(x - X)^+]`.
 *
 * # Safety
 * `model` must be a live handle and `out` valid for writes.
 */
VreStatus vre_model_expected_shortfall(const VreModel *model, double x, double *out);

/**
 * `F^-1(min(price / penalty, 1))`.
 *
 * # Safety
 * `model` must be a live handle and `out` valid for writes.
 */
VreStatus vre_model_optimal_commitment(const VreModel *model,
                                       double price,
                                       double penalty,
                                       double *out);

/**
 * Regulated uniform pricing from truthful supply curves.
 *
 * # Safety
 * `models` must hold `n` live handles, `commitments` room for `n` doubles,
 * and the scalar out pointers must be valid for writes.
 */
VreStatus vre_clear_rup(const VreModel *const *models,
                        size_t n,
                        const VreMarketConfig *config,
                        double *price,
                        double *commitments,
                        double *lost_load);

/**
 * Clears zero-price quantity offers under uniform pricing.
 *
 * # Safety
 * `quantities` and `commitments` must hold `n` doubles; scalar out pointers
 * must be valid for writes.
 */
VreStatus vre_clear_up_zero(const double *quantities,
                            size_t n,
                            const VreMarketConfig *config,
                            VreTieBreak tie_break,
                            uint64_t seed,
                            double *price,
                            double *commitments,
                            double *lost_load);

/**
 * Zero-price uniform-pricing equilibrium quantities with proportional shares.
 *
 * # Safety
 * `models` must hold `n` live handles and `quantities` room for `n` doubles.
 */
VreStatus vre_up_equilibrium(const VreModel *const *models,
                             size_t n,
                             const VreMarketConfig *config,
                             double *quantities);

/**
 * Mixed equilibrium of the pay-as-bid duopoly on `grid_levels` uniform
 * prices in `[0, cap]`.
 *
 * `strategies` receives both suppliers' probabilities, supplier 1 first,
 * `2 * grid_levels` doubles in all; `expected_prices` receives two doubles.
 *
 * # Safety
 * `models` must hold two live handles; the out pointers must have the sizes above.
 */
VreStatus vre_pab_solve(const VreModel *const *models,
                        const VreMarketConfig *config,
                        size_t grid_levels,
                        double tolerance,
                        VreTieBreak tie_break,
                        uint64_t seed,
                        double *strategies,
                        double *expected_prices,
                        double *epsilon);

/**
 * Copies the calling thread's last error message, NUL-terminated and
 * truncated to `len` bytes. Returns the full message length excluding the NUL.
 *
 * # Safety
 * `buf` must be valid for `len` bytes of writes, or null with `len == 0`.
 */
size_t vre_last_error_message(char *buf, size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VRE_MARKET_H */
