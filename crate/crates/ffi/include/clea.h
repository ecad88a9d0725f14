#ifndef CLEA_H
#define CLEA_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum CleaStatus {
  CLEA_STATUS_OK = 0,
  CLEA_STATUS_NULL_ARGUMENT = 1,
  CLEA_STATUS_INVALID_UTF8 = 2,
  CLEA_STATUS_INVALID_CONFIG = 3,
  CLEA_STATUS_PARSE_ERROR = 4,
  CLEA_STATUS_UNKNOWN_ENTITY = 5,
  // The action was well formed but its preconditions failed; the world
  // is unchanged and the feedback JSON explains why.
  CLEA_STATUS_ACTION_FAILED = 6,
  CLEA_STATUS_INVALID_ARGUMENT = 7,
  CLEA_STATUS_PANIC = 8,
} CleaStatus;

// Opaque simulator plus current state.
typedef struct CleaWorld CleaWorld;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null. The pointer
// stays valid until the next call into this library from the same thread.
const char *clea_last_error(void);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not have been freed already.
void clea_string_free(char *s);

// Library version as a static NUL-terminated string.
const char *clea_version(void);

// Creates the bundled default kitchen.
//
// # Safety
// `out` must be a valid pointer to writable storage.
enum CleaStatus clea_world_new_default(struct CleaWorld **out);

// Creates a world from a JSON world config.
//
// # Safety
// `config_json` must be a NUL-terminated string; `out` must be writable.
enum CleaStatus clea_world_new_json(const char *config_json, struct CleaWorld **out);

// Releases a world. Null is ignored.
//
// # Safety
// `world` must come from a `clea_world_new_*` call and not be freed yet.
void clea_world_free(struct CleaWorld *world);

// Applies one action in canonical text form. Writes the feedback as JSON to
// `out_feedback` (may be null). Returns `CLEA_STATUS_ACTION_FAILED` when a
// precondition failed, `CLEA_STATUS_UNKNOWN_ENTITY` for unknown tokens and
// `CLEA_STATUS_PARSE_ERROR` for text that is not a skill call.
//
// # Safety
// `world` must be a live handle; `action` a NUL-terminated string.
enum CleaStatus clea_world_step(struct CleaWorld *world, const char *action, char **out_feedback);

// Writes one robot's scene-graph observation as JSON.
//
// # Safety
// `world` must be a live handle; `robot` a NUL-terminated string; `out`
// writable.
enum CleaStatus clea_world_observe(const struct CleaWorld *world, const char *robot, char **out);

// Writes the hex SHA-256 digest of the current state.
//
// # Safety
// `world` must be a live handle; `out` writable.
enum CleaStatus clea_world_digest(const struct CleaWorld *world, char **out);

// Writes the full current state as JSON.
//
// # Safety
// `world` must be a live handle; `out` writable.
enum CleaStatus clea_world_state_json(const struct CleaWorld *world, char **out);

// Parses one skill call and writes its canonical form.
//
// # Safety
// `text` must be a NUL-terminated string; `out` writable.
enum CleaStatus clea_parse_action(const char *text, char **out);

// Runs the bundled suite offline with the scripted backend for one variant
// (`clea`, `no-critic` or `baseline`) and writes
// `{"results": [...], "metrics": {...}}` as JSON.
//
// # Safety
// `variant` must be a NUL-terminated string; `out` writable.
enum CleaStatus clea_run_default_suite(const char *variant, uint64_t seed, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CLEA_H */
