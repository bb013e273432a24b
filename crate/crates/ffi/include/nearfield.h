/* Generated by cbindgen from src/lib.rs; do not edit. */

#ifndef NEARFIELD_H
#define NEARFIELD_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum NfMethod {
  NF_METHOD_I = 1,
  NF_METHOD_II = 2,
  NF_METHOD_III = 3,
  NF_METHOD_IV = 4,
} NfMethod;

typedef enum NfStatus {
  NF_STATUS_OK = 0,
  NF_STATUS_NULL_POINTER = 1,
  NF_STATUS_INVALID_ARGUMENT = 2,
  NF_STATUS_PARSE_ERROR = 3,
  NF_STATUS_MODEL_ERROR = 4,
  NF_STATUS_BUFFER_TOO_SMALL = 5,
  NF_STATUS_PANIC = 6,
} NfStatus;

/*
 Electrode basis fields and quantization axis.
 */
typedef struct NfFieldModel NfFieldModel;

/*
 Eigenstates of the ground-state hyperfine Hamiltonian at one static field.
 */
typedef struct NfLevelSet NfLevelSet;

/*
 A parsed pulse-sequence program.
 */
typedef struct NfProgram NfProgram;

typedef struct NfComplex {
  double re;
  double im;
} NfComplex;

/*
 Rates (rad/s) used to resolve pulses when executing a program. Targeted
 pulses address qubit 2 at `addressed_rate` and leak `spectator_rate`
 onto qubit 1 under methods I and II.
 */
typedef struct NfExecutionModel {
  enum NfMethod method;
  double addressed_rate;
  double spectator_rate;
  double acz_rate_q1;
  double acz_rate_q2;
  double global_rate;
  double splitting;
  double detection_error;
} NfExecutionModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version as a static NUL-terminated string.
 */
const char *nf_version(void);

/*
 Message of the last failed call on this thread ("" after a success).
 The pointer stays valid until the next call on this thread.
 */
const char *nf_last_error(void);

/*
 Field-independent point of the |3,1> <-> |2,1> clock transition of 25Mg+.
 */
enum NfStatus nf_clock_point(double *field_t, double *frequency);

/*
 25Mg+ levels at `field_t`.
 */
enum NfStatus nf_levels_new(double field_t, struct NfLevelSet **levels);

void nf_levels_free(struct NfLevelSet *levels);

/*
 Angular frequency of |f_a, m_a> <-> |f_b, m_b>.
 */
enum NfStatus nf_levels_transition_frequency(const struct NfLevelSet *levels,
                                             double f_a,
                                             double m_a,
                                             double f_b,
                                             double m_b,
                                             double *frequency);

/*
 Rabi rate of the clock qubit for the given parallel and perpendicular
 field amplitudes.
 */
enum NfStatus nf_levels_qubit_rabi_rate(const struct NfLevelSet *levels,
                                        struct NfComplex b_parallel,
                                        struct NfComplex b_perpendicular,
                                        double *rate);

/*
 Spectator flip probability during a resonant π pulse on the addressed ion.
 */
enum NfStatus nf_crosstalk_resonant_pi(double addressed, double spectator, double *probability);

/*
 Off-resonant Rabi flip probability after time `t`.
 */
double nf_flip_probability(double rabi_rate, double detuning, double t);

/*
 Equilibrium separation of two singly charged ions.
 */
enum NfStatus nf_two_ion_spacing(double rf_frequency,
                                 double axial_frequency,
                                 double radial_frequency,
                                 double ion_mass,
                                 double *spacing);

/*
 The bundled three-electrode fixture with a 15° quantization axis.
 */
enum NfStatus nf_field_model_default(struct NfFieldModel **model);

/*
 Loads a basis fixture (TOML) with the axis at `axis_angle_deg` from z in
 the y-z plane.
 */
enum NfStatus nf_field_model_load(const char *path,
                                  double axis_angle_deg,
                                  struct NfFieldModel **model);

void nf_field_model_free(struct NfFieldModel *model);

/*
 (B_x, B_z) at (x, z) for three electrode currents.
 */
enum NfStatus nf_field_model_field_at(const struct NfFieldModel *model,
                                      const struct NfComplex *currents,
                                      double x,
                                      double z,
                                      struct NfComplex *field);

/*
 Position of the minimum of |B|² and the residual |B|² there.
 */
enum NfStatus nf_field_model_find_null(const struct NfFieldModel *model,
                                       const struct NfComplex *currents,
                                       double *x,
                                       double *z,
                                       double *residual_sq);

/*
 Currents placing a field null at (null_x, null_z) with |dB_par/dd| equal
 to `gradient` (T/m) along (dir_x, dir_z).
 */
enum NfStatus nf_field_model_solve_currents(const struct NfFieldModel *model,
                                            double null_x,
                                            double null_z,
                                            double gradient,
                                            double dir_x,
                                            double dir_z,
                                            struct NfComplex *currents);

/*
 Parses a pulse-sequence script.
 */
enum NfStatus nf_program_parse(const char *text, struct NfProgram **program);

void nf_program_free(struct NfProgram *program);

/*
 Number of instructions, counting those inside branches.
 */
enum NfStatus nf_program_len(const struct NfProgram *program, size_t *len);

/*
 Canonical text of the program. Returns `BufferTooSmall` with `*needed`
 set when `buf` is null or shorter than `*needed` bytes.
 */
enum NfStatus nf_program_format(const struct NfProgram *program,
                                char *buf,
                                size_t len,
                                size_t *needed);

/*
 Exact final P(down) of both qubits and the probability of ending with
 0, 1 or 2 bright ions at the last detection.
 */
enum NfStatus nf_program_execute(const struct NfProgram *program,
                                 const struct NfExecutionModel *model,
                                 double *p_down,
                                 double *bright);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NEARFIELD_H */
