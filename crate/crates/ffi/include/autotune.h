#ifndef AUTOTUNE_H
#define AUTOTUNE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Sample rate of all audio passed through this interface.
 */
#define AT_WORKING_RATE 22050

typedef enum AtStatus {
  AT_STATUS_OK = 0,
  AT_STATUS_NULL_POINTER = 1,
  AT_STATUS_INVALID_UTF8 = 2,
  AT_STATUS_IO = 3,
  AT_STATUS_FORMAT = 4,
  AT_STATUS_CHECKPOINT = 5,
  AT_STATUS_SHAPE = 6,
  AT_STATUS_RANGE = 7,
  AT_STATUS_DOMAIN = 8,
  AT_STATUS_NUMERIC = 9,
  AT_STATUS_BUFFER_TOO_SMALL = 10,
  AT_STATUS_PANIC = 11,
  AT_STATUS_OTHER = 12,
} AtStatus;

/*
 A loaded network. Create with [`at_model_load`], release with
 [`at_model_free`].
 */
typedef struct AtModel AtModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message for the last failed call on this thread, or null. Valid until the
 next call into this library on the same thread.
 */
const char *at_last_error(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *at_version(void);

/*
 Loads a checkpoint written by `autotune train`.

 # Safety
 `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum AtStatus at_model_load(const char *path, struct AtModel **out);

/*
 Releases a model. Null is ignored.

 # Safety
 `model` must come from [`at_model_load`] and not be used afterwards.
 */
void at_model_free(struct AtModel *model);

/*
 Number of trainable scalars in the model, or 0 for null.

 # Safety
 `model` must be null or a live handle.
 */
size_t at_model_param_count(const struct AtModel *model);

/*
 Corrects a vocal against its backing track. `out` receives `vocal_len`
 samples. Per-note shifts in cents go to `shifts` (up to
 `shifts_capacity`) and the note count to `n_notes`; both may be null.

 # Safety
 Pointers must be valid for the stated lengths.
 */
enum AtStatus at_correct(const struct AtModel *model,
                         const float *vocal,
                         size_t vocal_len,
                         const float *backing,
                         size_t backing_len,
                         float *out,
                         size_t out_len,
                         double *shifts,
                         size_t shifts_capacity,
                         size_t *n_notes);

/*
 Snaps every detected note to the nearest equal-tempered degree.
 Arguments as for [`at_correct`] without the model and backing.

 # Safety
 Pointers must be valid for the stated lengths.
 */
enum AtStatus at_baseline(const float *vocal,
                          size_t vocal_len,
                          float *out,
                          size_t out_len,
                          double *shifts,
                          size_t shifts_capacity,
                          size_t *n_notes);

/*
 Cents from `f0_hz` to the nearest equal-tempered pitch.

 # Safety
 `out` must be a valid pointer.
 */
enum AtStatus at_baseline_shift_cents(double f0_hz, double *out);

/*
 Root-mean-square error in cents for an MSE in squared semitones.

 # Safety
 `out` must be a valid pointer.
 */
enum AtStatus at_cents_from_mse(double mse, double *out);

/*
 Frequency of a (possibly fractional) MIDI pitch.
 */
double at_midi_to_hz(double pitch);

/*
 MIDI pitch of a positive frequency.

 # Safety
 `out` must be a valid pointer.
 */
enum AtStatus at_hz_to_midi(double hz, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AUTOTUNE_H */
