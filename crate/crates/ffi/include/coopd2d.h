#ifndef COOPD2D_H
#define COOPD2D_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum Coopd2dStatus {
  COOPD2D_STATUS_OK = 0,
  COOPD2D_STATUS_NULL_POINTER = 1,
  COOPD2D_STATUS_INVALID_ARGUMENT = 2,
  COOPD2D_STATUS_CONFIG = 3,
  COOPD2D_STATUS_GEOMETRY = 4,
  COOPD2D_STATUS_TRAINING = 5,
  COOPD2D_STATUS_PARSE = 6,
  COOPD2D_STATUS_IO = 7,
  // The library panicked; the handle involved should not be reused.
  COOPD2D_STATUS_INTERNAL = 8,
} Coopd2dStatus;

typedef enum Coopd2dPreset {
  COOPD2D_PRESET_FULL = 0,
  COOPD2D_PRESET_DESK = 1,
} Coopd2dPreset;

// Which action lattice a call searches.
typedef enum Coopd2dGrid {
  COOPD2D_GRID_REPORTING = 0,
  COOPD2D_GRID_TRAINING = 1,
} Coopd2dGrid;

// A Q-network trained for one link pair, together with that pair's channel.
typedef struct Coopd2dAgent Coopd2dAgent;

// Parsed run configuration.
typedef struct Coopd2dConfig Coopd2dConfig;

typedef struct Coopd2dDecision {
  double p_c;
  double p_r;
  double p_d;
  double theta;
} Coopd2dDecision;

typedef struct Coopd2dEvaluation {
  double se_c;
  double se_d;
  double ee_c;
  double ee_d;
  double u;
  double reward;
  bool feasible;
} Coopd2dEvaluation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the last error message of this thread, NUL-terminated and truncated
// to `cap` bytes. Returns the untruncated length, so a call with `cap == 0`
// sizes the buffer.
//
// # Safety
// `buf` must be null or valid for `cap` bytes.
size_t coopd2d_last_error(char *buf, size_t cap);

// Builds a configuration from a preset and an optional TOML file (`path`
// may be null).
//
// # Safety
// `path` must be null or a NUL-terminated string; `out` must be writable.
enum Coopd2dStatus coopd2d_config_load(const char *path,
                                       enum Coopd2dPreset preset,
                                       struct Coopd2dConfig **out);

// # Safety
// `cfg` must be null or a handle from [`coopd2d_config_load`] not yet freed.
void coopd2d_config_free(struct Coopd2dConfig *cfg);

// Number of joint actions in the chosen lattice.
//
// # Safety
// `cfg` must be a live handle.
size_t coopd2d_grid_size(const struct Coopd2dConfig *cfg, enum Coopd2dGrid which);

// Evaluates one pair. `gains` holds the linear gains CU-DT, CU-BS, DT-BS and
// DT-DR; the configured noise turns them into per-watt SNR coefficients.
//
// # Safety
// `gains` must point to four doubles; the other pointers must be valid.
enum Coopd2dStatus coopd2d_evaluate_pair(const struct Coopd2dConfig *cfg,
                                         const double *gains,
                                         const struct Coopd2dDecision *decision,
                                         struct Coopd2dEvaluation *out);

// Exhaustive search of a lattice for the best feasible decision. `*found`
// is false, and the other outputs untouched, when nothing is feasible.
//
// # Safety
// `gains` must point to four doubles; every output pointer must be writable.
enum Coopd2dStatus coopd2d_pair_optimum(const struct Coopd2dConfig *cfg,
                                        const double *gains,
                                        enum Coopd2dGrid which,
                                        bool *found,
                                        struct Coopd2dDecision *decision,
                                        double *u);

// Maximum-weight matching of a row-major `rows x cols` matrix. Zero entries
// are missing edges. `assignment[m]` receives the matched column of row `m`,
// or -1.
//
// # Safety
// `weights` must hold `rows * cols` doubles and `assignment` `rows` slots.
enum Coopd2dStatus coopd2d_km_match(const double *weights,
                                    size_t rows,
                                    size_t cols,
                                    int64_t *assignment,
                                    double *total);

// Eigenvalues of the Hessian of the D2D rate term at one probe point.
//
// # Safety
// `lambda1` and `lambda2` must be writable.
enum Coopd2dStatus coopd2d_probe(double beta, double x, double y, double *lambda1, double *lambda2);

// Trains a Q-network for one pair on the training lattice with the
// configured schedule. `seed` replaces the configured training seed.
//
// # Safety
// `gains` must point to four doubles and `out` must be writable.
enum Coopd2dStatus coopd2d_agent_train(const struct Coopd2dConfig *cfg,
                                       const double *gains,
                                       uint64_t seed,
                                       struct Coopd2dAgent **out);

// # Safety
// `agent` must be null or a handle from [`coopd2d_agent_train`] not yet freed.
void coopd2d_agent_free(struct Coopd2dAgent *agent);

// Greedy decision of a trained agent on the chosen lattice. `*feasible` is
// false when the greedy action misses a QoS target; the decision is written
// either way and `*u` is then 0.
//
// # Safety
// `cfg` and `agent` must be live handles; outputs must be writable.
enum Coopd2dStatus coopd2d_agent_greedy(const struct Coopd2dConfig *cfg,
                                        const struct Coopd2dAgent *agent,
                                        enum Coopd2dGrid which,
                                        bool *feasible,
                                        struct Coopd2dDecision *decision,
                                        double *u);

// Serializes the agent's network into `buf`. Returns the number of bytes
// needed through `len`; nothing is written when `cap` is too small.
//
// # Safety
// `buf` must be null or valid for `cap` bytes; `len` must be writable.
enum Coopd2dStatus coopd2d_agent_checkpoint(const struct Coopd2dAgent *agent,
                                            uint8_t *buf,
                                            size_t cap,
                                            size_t *len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COOPD2D_H */
