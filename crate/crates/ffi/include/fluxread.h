#ifndef FLUXREAD_H
#define FLUXREAD_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>
#include <stdbool.h>

typedef enum FluxStatus {
  FLUX_STATUS_OK = 0,
  FLUX_STATUS_NULL_POINTER = 1,
  FLUX_STATUS_VALIDATION = 2,
  FLUX_STATUS_NUMERICAL = 3,
  FLUX_STATUS_RESOURCE = 4,
  FLUX_STATUS_LABELING = 5,
  FLUX_STATUS_FIT = 6,
  FLUX_STATUS_SYNTHESIS = 7,
  FLUX_STATUS_IO = 8,
  FLUX_STATUS_CONFIG = 9,
  FLUX_STATUS_USAGE = 10,
  FLUX_STATUS_BUFFER_TOO_SMALL = 11,
  FLUX_STATUS_PANIC = 12,
} FluxStatus;

// Dressed qubit-resonator eigenstates labeled by (level, photons).
typedef struct FluxLabeling FluxLabeling;

// Simulated single-shot records.
typedef struct FluxShots FluxShots;

// Bare fluxonium spectrum at one flux.
typedef struct FluxSpectrum FluxSpectrum;

// Sampled readout trajectory.
typedef struct FluxTrajectory FluxTrajectory;

// Energies in GHz, `kappa` in MHz.
typedef struct FluxDeviceParams {
  double e_c;
  double e_j;
  double e_l;
  double f_r;
  double g_na;
  double kappa;
} FluxDeviceParams;

typedef struct FluxNumerics {
  uintptr_t n_osc;
  uintptr_t n_keep;
  uintptr_t n_ph;
  double dasi_dg;
} FluxNumerics;

// Square pulse: `epsilon` and `detuning` in MHz, `duration` in us.
typedef struct FluxPulse {
  double epsilon;
  double detuning;
  double duration;
} FluxPulse;

typedef struct FluxTrajectorySample {
  double t;
  double phi_ext;
  double n_bar;
  double f01_shifted;
} FluxTrajectorySample;

// `f_tls` GHz, rates us^-1, `linewidth` MHz (FWHM).
typedef struct FluxTls {
  double f_tls;
  double gamma_down;
  double gamma_up;
  double linewidth;
} FluxTls;

typedef struct FluxNoise {
  double eta;
  double integration_time;
  double separation_scale;
  double threshold;
  double preparation_error;
} FluxNoise;

typedef struct FluxShot {
  uint8_t m1;
  uint8_t m2;
  uint8_t m3;
  double iq1;
  double iq2;
  double iq3;
} FluxShot;

typedef struct FluxErrorCounts {
  uintptr_t correct;
  uintptr_t assignment_error;
  uintptr_t transition_error;
  uintptr_t other;
} FluxErrorCounts;

// Objective for [`fluxread_cma_minimize`]: `x` points at `dim` values.
typedef double (*FluxObjective)(const double *x, uintptr_t dim, void *user);

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copy the calling thread's last error message, NUL-terminated and
// truncated to `len`. Returns the full message length excluding the NUL.
uintptr_t fluxread_last_error(char *buf, uintptr_t len);

// Constants of the measured reference device.
enum FluxStatus fluxread_device_measured(struct FluxDeviceParams *params);

enum FluxStatus fluxread_numerics_default(struct FluxNumerics *numerics);

enum FluxStatus fluxread_spectrum_new(const struct FluxDeviceParams *params,
                                      const struct FluxNumerics *numerics,
                                      double phi_ext,
                                      struct FluxSpectrum **handle);

// Zero-referenced energies (GHz), ascending.
enum FluxStatus fluxread_spectrum_energies(const struct FluxSpectrum *handle,
                                           double *buf,
                                           uintptr_t len,
                                           uintptr_t *written);

void fluxread_spectrum_free(struct FluxSpectrum *handle);

enum FluxStatus fluxread_labeling_new(const struct FluxDeviceParams *params,
                                      const struct FluxNumerics *numerics,
                                      double phi_ext,
                                      struct FluxLabeling **handle);

// Dressed energy (GHz) of label `(level, photons)`.
enum FluxStatus fluxread_labeling_energy(const struct FluxLabeling *handle,
                                         uintptr_t level,
                                         uintptr_t photons,
                                         double *energy);

// Number of labels flagged ambiguous during the coupling ramp.
enum FluxStatus fluxread_labeling_ambiguous_count(const struct FluxLabeling *handle,
                                                  uintptr_t *count);

// `f01` in GHz and `chi` in MHz.
enum FluxStatus fluxread_labeling_dispersive(const struct FluxLabeling *handle,
                                             double *f01,
                                             double *chi);

// MIST metric of the dressed coherent state of `level` with `n_bar` photons.
enum FluxStatus fluxread_mist_metric(const struct FluxLabeling *handle,
                                     uintptr_t level,
                                     double n_bar,
                                     double *epsilon);

void fluxread_labeling_free(struct FluxLabeling *handle);

// Mean photon number `t` us into the ring-up, or into the ring-down when
// `ring_down` is set.
enum FluxStatus fluxread_photon_number(double t,
                                       const struct FluxPulse *pulse,
                                       double kappa,
                                       bool ring_down,
                                       double *n);

// Flux pulse that holds the Stark-shifted qubit frequency constant.
// `flux_window` is the half-width of the allowed excursion (rad), `tail`
// the ring-down time simulated after the pulse (us).
enum FluxStatus fluxread_trajectory_compensated(const struct FluxDeviceParams *params,
                                                const struct FluxNumerics *numerics,
                                                const struct FluxPulse *pulse,
                                                double phi_start,
                                                double dt,
                                                double flux_window,
                                                double tail,
                                                struct FluxTrajectory **handle);

// Build a trajectory from caller samples with uniform spacing `dt`.
enum FluxStatus fluxread_trajectory_from_samples(const struct FluxTrajectorySample *samples,
                                                 uintptr_t len,
                                                 double dt,
                                                 struct FluxTrajectory **handle);

enum FluxStatus fluxread_trajectory_samples(const struct FluxTrajectory *handle,
                                            struct FluxTrajectorySample *buf,
                                            uintptr_t len,
                                            uintptr_t *written);

void fluxread_trajectory_free(struct FluxTrajectory *handle);

// Simulate `count` three-window shots. TLS lines are broadened by the
// measurement-dephasing rate for `chi` (MHz) and `kappa` (MHz); pass
// `chi = 0` to disable broadening.
enum FluxStatus fluxread_shots_simulate(const struct FluxTrajectory *trajectory,
                                        const struct FluxTls *tls,
                                        uintptr_t n_tls,
                                        const struct FluxNoise *noise,
                                        double chi,
                                        double kappa,
                                        uint8_t initial_state,
                                        uintptr_t count,
                                        uint64_t seed,
                                        struct FluxShots **handle);

enum FluxStatus fluxread_shots_records(const struct FluxShots *handle,
                                       struct FluxShot *buf,
                                       uintptr_t len,
                                       uintptr_t *written);

enum FluxStatus fluxread_shots_classify(const struct FluxShots *handle,
                                        struct FluxErrorCounts *counts);

// `1 - (P(1|0) + P(0|1)) / 2` on M2.
enum FluxStatus fluxread_shots_fidelity(const struct FluxShots *prepared_0,
                                        const struct FluxShots *prepared_1,
                                        double *value);

void fluxread_shots_free(struct FluxShots *handle);

// Minimize `objective` over the box `[lower, upper]` by CMA-ES.
// `population = 0` selects the default. The callback is invoked
// sequentially, possibly from a worker thread. `best_x` receives `dim`
// values.
enum FluxStatus fluxread_cma_minimize(FluxObjective objective,
                                      void *user,
                                      const double *x0,
                                      const double *lower,
                                      const double *upper,
                                      uintptr_t dim,
                                      double sigma0,
                                      uintptr_t budget,
                                      uintptr_t population,
                                      uint64_t seed,
                                      double *best_x,
                                      double *best_value,
                                      uintptr_t *evaluations);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FLUXREAD_H */
