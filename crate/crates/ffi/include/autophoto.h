#ifndef AUTOPHOTO_H
#define AUTOPHOTO_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ApStatus {
  AP_STATUS_OK = 0,
  AP_STATUS_NULL_POINTER = 1,
  AP_STATUS_INVALID_ARGUMENT = 2,
  AP_STATUS_IO = 3,
  AP_STATUS_PARSE = 4,
  AP_STATUS_TERMINATED = 5,
  AP_STATUS_INTERNAL = 6,
} ApStatus;

/**
 * One capture episode. The environment borrows the boxed scene context,
 * scorer and config, which live exactly as long as the handle.
 */
typedef struct ApEnv ApEnv;

/**
 * A generated or loaded scene.
 */
typedef struct ApScene ApScene;

/**
 * A trained aesthetic scorer.
 */
typedef struct ApScorer ApScorer;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Version string of the library, valid for the life of the process.
 */
const char *ap_version(void);

/**
 * Message for the last failed call on this thread; empty after a success.
 * The pointer is valid until the next call into the library on this thread.
 */
const char *ap_last_error_message(void);

/**
 * # Safety
 * `s` must be null or a string returned by this library.
 */
void ap_string_free(char *s);

/**
 * Generates a scene with the default generation settings.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum ApStatus ap_scene_generate(uint64_t scene_id, uint64_t seed, struct ApScene **out);

/**
 * Parses a scene file's JSON text.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum ApStatus ap_scene_from_json(const char *json, struct ApScene **out);

/**
 * Serializes a scene; release the result with `ap_string_free`.
 *
 * # Safety
 * `scene` must be a live handle and `out` a valid pointer.
 */
enum ApStatus ap_scene_to_json(const struct ApScene *scene, char **out);

/**
 * # Safety
 * `scene` must be a live handle and `out` a valid pointer.
 */
enum ApStatus ap_scene_id(const struct ApScene *scene, uint64_t *out);

/**
 * Ground-truth aesthetic value at a pose (meters, radians).
 *
 * # Safety
 * `scene` must be a live handle and `out` a valid pointer.
 */
enum ApStatus ap_scene_true_aesthetic(const struct ApScene *scene,
                                      double x,
                                      double y,
                                      double theta,
                                      double *out);

/**
 * # Safety
 * `scene` must be null or a live handle; it is invalid afterwards.
 */
void ap_scene_free(struct ApScene *scene);

/**
 * Loads a scorer checkpoint from a file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum ApStatus ap_scorer_load(const char *path, struct ApScorer **out);

/**
 * An untrained scorer with seeded initial weights.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum ApStatus ap_scorer_init(uint64_t seed, struct ApScorer **out);

/**
 * Learned score of the well-exposed view at a pose.
 *
 * # Safety
 * `scorer` and `scene` must be live handles and `out` a valid pointer.
 */
enum ApStatus ap_scorer_score(const struct ApScorer *scorer,
                              const struct ApScene *scene,
                              double x,
                              double y,
                              double theta,
                              double *out);

/**
 * # Safety
 * `scorer` must be null or a live handle; it is invalid afterwards.
 */
void ap_scorer_free(struct ApScorer *scorer);

/**
 * Terminal reward for capturing a view scored `phi` against threshold `tau`.
 */
double ap_capture_reward(double phi, double tau);

/**
 * Starts an evaluation episode on copies of `scene` and `scorer` with the
 * default episode settings. `n_samples` views estimate the threshold.
 *
 * # Safety
 * `scene` and `scorer` must be live handles and `out` a valid pointer.
 */
enum ApStatus ap_env_new(const struct ApScene *scene,
                         const struct ApScorer *scorer,
                         uint32_t n_samples,
                         uint64_t seed,
                         struct ApEnv **out);

/**
 * Takes action `action` (0..9 in the order F, B, L10, L30, L90, R10, R30,
 * R90, CAPTURE). Writes the step reward and whether the episode ended.
 *
 * # Safety
 * `env` must be a live handle; `reward` and `done` must be valid pointers.
 */
enum ApStatus ap_env_step(struct ApEnv *env, uint32_t action, double *reward, bool *done);

/**
 * Current pose and learned score.
 *
 * # Safety
 * `env` must be a live handle; the out pointers must be valid.
 */
enum ApStatus ap_env_state(const struct ApEnv *env,
                           double *x,
                           double *y,
                           double *theta,
                           double *phi);

/**
 * Capture threshold of this episode.
 *
 * # Safety
 * `env` must be a live handle and `out` a valid pointer.
 */
enum ApStatus ap_env_tau(const struct ApEnv *env, double *out);

/**
 * # Safety
 * `env` must be a live handle and `out` a valid pointer.
 */
enum ApStatus ap_env_is_done(const struct ApEnv *env, bool *out);

/**
 * The episode transcript as NDJSON; release with `ap_string_free`.
 *
 * # Safety
 * `env` must be a live handle and `out` a valid pointer.
 */
enum ApStatus ap_env_transcript(const struct ApEnv *env, char **out);

/**
 * # Safety
 * `env` must be null or a live handle; it is invalid afterwards.
 */
void ap_env_free(struct ApEnv *env);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AUTOPHOTO_H */
