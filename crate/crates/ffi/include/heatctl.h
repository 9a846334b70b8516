#ifndef HEATCTL_H
#define HEATCTL_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum HeatctlStatus {
  HEATCTL_STATUS_OK = 0,
  HEATCTL_STATUS_NULL_POINTER = 1,
  HEATCTL_STATUS_INVALID_ARGUMENT = 2,
  HEATCTL_STATUS_CERTIFICATION = 3,
  HEATCTL_STATUS_NUMERICAL = 4,
  HEATCTL_STATUS_IO = 5,
  HEATCTL_STATUS_PANIC = 6,
} HeatctlStatus;

typedef enum HeatctlColumn {
  HEATCTL_COLUMN_TIME = 0,
  HEATCTL_COLUMN_NORM_SQ = 1,
  HEATCTL_COLUMN_Y1 = 2,
  HEATCTL_COLUMN_Z = 3,
  HEATCTL_COLUMN_W = 4,
  HEATCTL_COLUMN_W_HAT = 5,
  HEATCTL_COLUMN_U = 6,
} HeatctlColumn;

typedef enum HeatctlVerdict {
  HEATCTL_VERDICT_PASS = 0,
  HEATCTL_VERDICT_FAIL = 1,
  HEATCTL_VERDICT_UNCERTIFIED = 2,
  HEATCTL_VERDICT_NOT_APPLICABLE = 3,
} HeatctlVerdict;

typedef struct HeatctlEnsemble HeatctlEnsemble;

typedef struct HeatctlScenario HeatctlScenario;

/**
 * One simulated path. In coupled mode `NormSq` holds `|Z|² + |η|²` and
 * the `Y1` and `U` columns are zero.
 */
typedef struct HeatctlTrajectory HeatctlTrajectory;

/**
 * Certificate summary. `gamma_star` is NaN when the bound constants are
 * unavailable.
 */
typedef struct HeatctlCertificate {
  double mu_c;
  double lambda_min;
  double lambda_max;
  double q_residual;
  double sigma_max;
  double rate_ze;
  double rate_beta;
  double theta_star;
  double gamma_star;
} HeatctlCertificate;

/**
 * `prefactor` and `rate` are NaN when no bound applies.
 */
typedef struct HeatctlBoundReport {
  double prefactor;
  double rate;
  double max_margin;
  double as_fraction;
  enum HeatctlVerdict verdict;
} HeatctlBoundReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *heatctl_version(void);

/**
 * Message of the last failing call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *heatctl_last_error(void);

/**
 * Creates a scenario from a preset name (`section4`, `remark2`,
 * `coupledZeta`).
 */
enum HeatctlStatus heatctl_scenario_preset(const char *name, struct HeatctlScenario **out);

/**
 * Creates a scenario from configuration text (`[scenario]` section).
 */
enum HeatctlStatus heatctl_scenario_from_config(const char *text, struct HeatctlScenario **out);

void heatctl_scenario_free(struct HeatctlScenario *h);

/**
 * Sets the noise intensity.
 */
enum HeatctlStatus heatctl_scenario_set_sigma(struct HeatctlScenario *h, double sigma);

/**
 * Sets the time step, grid size and horizon together.
 */
enum HeatctlStatus heatctl_scenario_set_grid(struct HeatctlScenario *h,
                                             double dt,
                                             size_t nodes,
                                             double horizon);

/**
 * Validates the scenario without running anything.
 */
enum HeatctlStatus heatctl_scenario_validate(const struct HeatctlScenario *h);

/**
 * Certifies the scenario's gains. On certification failure `out` is left
 * untouched.
 */
enum HeatctlStatus heatctl_certify(const struct HeatctlScenario *h, struct HeatctlCertificate *out);

/**
 * Solves the kernel for `n` samples `a` and damping `c`. Writes `k(1,1)`
 * to `k11` and the trace `k_x(1, ζ_j)` to `kx1` (length `n`). Either
 * output may be null.
 */
enum HeatctlStatus heatctl_kernel_solve(const double *a,
                                        size_t n,
                                        double c,
                                        double *k11,
                                        double *kx1);

/**
 * Simulates one path with the given seed.
 */
enum HeatctlStatus heatctl_simulate(const struct HeatctlScenario *h,
                                    uint64_t seed,
                                    struct HeatctlTrajectory **out);

/**
 * Number of recorded times, or 0 for a null handle.
 */
size_t heatctl_trajectory_len(const struct HeatctlTrajectory *h);

/**
 * Copies one column into `buf`, which must hold `len` values with
 * `len == heatctl_trajectory_len(h)`.
 */
enum HeatctlStatus heatctl_trajectory_column(const struct HeatctlTrajectory *h,
                                             enum HeatctlColumn column,
                                             double *buf,
                                             size_t len);

void heatctl_trajectory_free(struct HeatctlTrajectory *h);

/**
 * Runs `paths` seeded paths.
 */
enum HeatctlStatus heatctl_ensemble_run(const struct HeatctlScenario *h,
                                        size_t paths,
                                        uint64_t master_seed,
                                        struct HeatctlEnsemble **out);

size_t heatctl_ensemble_len(const struct HeatctlEnsemble *h);

/**
 * Copies times, means and standard errors; each buffer holds `len` values
 * with `len == heatctl_ensemble_len(h)`. Null buffers are skipped.
 */
enum HeatctlStatus heatctl_ensemble_series(const struct HeatctlEnsemble *h,
                                           double *t,
                                           double *mean_norm_sq,
                                           double *se,
                                           size_t len);

/**
 * Checks the ensemble against the certified bound of its scenario.
 */
enum HeatctlStatus heatctl_ensemble_check(const struct HeatctlEnsemble *h,
                                          struct HeatctlBoundReport *out);

void heatctl_ensemble_free(struct HeatctlEnsemble *h);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HEATCTL_H */
