#ifndef SMARTCERT_H
#define SMARTCERT_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum ScStatus {
  SC_STATUS_OK = 0,
  SC_STATUS_NULL_POINTER = 1,
  SC_STATUS_INVALID_UTF8 = 2,
  SC_STATUS_DECODE = 3,
  SC_STATUS_BROKEN_CHAIN = 4,
  SC_STATUS_SCENARIO_INVALID = 5,
  SC_STATUS_PANIC = 6,
} ScStatus;

/**
 * Verification outcome; `SC_VERDICT_OK` or the first failed check.
 */
typedef enum ScVerdict {
  SC_VERDICT_OK = 0,
  SC_VERDICT_DECODE_ERROR = 1,
  SC_VERDICT_UNKNOWN_ROOT = 2,
  SC_VERDICT_PROOF_INCONSISTENT = 3,
  SC_VERDICT_BAD_CODE = 4,
  SC_VERDICT_BAD_STORAGE_PROOF = 5,
  SC_VERDICT_NAME_MISMATCH = 6,
  SC_VERDICT_INVALID = 7,
  SC_VERDICT_STALE = 8,
} ScVerdict;

/**
 * A decoded certificate.
 */
typedef struct ScCertificate ScCertificate;

/**
 * Recent block headers, pruned to a horizon.
 */
typedef struct ScHeaderStore ScHeaderStore;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Last error message on this thread, or NULL. Valid until the next call.
 */
const char *sc_last_error(void);

/**
 * Writes the pinned SmartCert template code hash (32 bytes) to `out`.
 *
 * # Safety
 * `out` must point to 32 writable bytes.
 */
enum ScStatus sc_smartcert_code_hash(uint8_t *out);

/**
 * Starts a header store at a trusted checkpoint header (112 bytes).
 *
 * # Safety
 * `header` must point to `len` readable bytes; `out` must be writable.
 */
enum ScStatus sc_header_store_new(const uint8_t *header,
                                  size_t len,
                                  uint64_t prune_horizon,
                                  struct ScHeaderStore **out);

/**
 * Builds a header store from a chain log: genesis as checkpoint, then
 * every recorded header.
 *
 * # Safety
 * `log` must point to `len` readable bytes; `out` must be writable.
 */
enum ScStatus sc_header_store_from_chain_log(const uint8_t *log,
                                             size_t len,
                                             uint64_t prune_horizon,
                                             struct ScHeaderStore **out);

/**
 * Appends one encoded header (112 bytes) that extends the newest one.
 *
 * # Safety
 * `store` must be a live handle; `header` must point to `len` readable bytes.
 */
enum ScStatus sc_header_store_append(struct ScHeaderStore *store,
                                     const uint8_t *header,
                                     size_t len);

/**
 * Number of stored headers; 0 for a null handle.
 *
 * # Safety
 * `store` must be null or a live handle.
 */
size_t sc_header_store_len(const struct ScHeaderStore *store);

/**
 * # Safety
 * `store` must be null or a handle not yet freed.
 */
void sc_header_store_free(struct ScHeaderStore *store);

/**
 * Decodes certificate bytes.
 *
 * # Safety
 * `data` must point to `len` readable bytes; `out` must be writable.
 */
enum ScStatus sc_certificate_parse(const uint8_t *data, size_t len, struct ScCertificate **out);

/**
 * Anchor block number; 0 for a null handle.
 *
 * # Safety
 * `cert` must be null or a live handle.
 */
uint64_t sc_certificate_anchor(const struct ScCertificate *cert);

/**
 * # Safety
 * `cert` must be null or a handle not yet freed.
 */
void sc_certificate_free(struct ScCertificate *cert);

/**
 * Checks `cert` for domain `name` at unix time `now`. `code_hash` (32
 * bytes) may be null to pin the built-in template. The outcome goes to
 * `verdict`; the return value only reports argument errors.
 *
 * # Safety
 * Handles must be live; `name` must be a NUL-terminated string; `code_hash`
 * must be null or point to 32 bytes; `verdict` must be writable.
 */
enum ScStatus sc_verify_certificate(const struct ScHeaderStore *store,
                                    const struct ScCertificate *cert,
                                    const char *name,
                                    uint64_t now,
                                    const uint8_t *code_hash,
                                    uint64_t max_stale,
                                    enum ScVerdict *verdict);

/**
 * Verifies an encoded inclusion proof against a 32-byte root.
 *
 * # Safety
 * `root` must point to 32 bytes, `proof` to `len` bytes; `valid` must be
 * writable.
 */
enum ScStatus sc_trie_verify_proof(const uint8_t *root,
                                   const uint8_t *proof,
                                   size_t len,
                                   bool *valid);

/**
 * Runs a scenario given as JSON. `passed` receives whether every assertion
 * held; if `report` is non-null it receives the JSON report, to be freed
 * with [`sc_string_free`].
 *
 * # Safety
 * `json` must be a NUL-terminated string; `passed` must be writable;
 * `report` must be null or writable.
 */
enum ScStatus sc_scenario_run(const char *json, bool *passed, char **report);

/**
 * # Safety
 * `s` must be null or a string returned by this library, not yet freed.
 */
void sc_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SMARTCERT_H */
