#ifndef HISTOCR_H
#define HISTOCR_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

// Result of every fallible call.
typedef enum HistocrStatus {
  HISTOCR_STATUS_OK = 0,
  HISTOCR_STATUS_NULL_ARGUMENT = 1,
  HISTOCR_STATUS_INVALID_UTF8 = 2,
  // Input was readable but rejected (bad manifest record, bad option).
  HISTOCR_STATUS_INVALID_INPUT = 3,
  HISTOCR_STATUS_IO = 4,
  // A Rust panic was caught at the boundary.
  HISTOCR_STATUS_INTERNAL = 5,
} HistocrStatus;

// Opaque lexicon handle.
typedef struct HistocrLexicon HistocrLexicon;

// Per-line error counts.
typedef struct HistocrLineMetrics {
  size_t char_distance;
  size_t ref_chars;
  size_t word_distance;
  size_t ref_words;
  // 0 short, 1 medium, 2 long.
  uint32_t length_category;
} HistocrLineMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *histocr_version(void);

// Message for the most recent call on this thread if it failed, otherwise
// null. Valid until the next call into the library on the same thread.
const char *histocr_last_error_message(void);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void histocr_string_free(char *s);

// Normalizes `text`; `*out` receives a new string.
//
// # Safety
// `text` must be a NUL-terminated string; `out` must be writable.
enum HistocrStatus histocr_normalize(const char *text, char **out);

// Character edit distance between the normalized forms of `a` and `b`.
//
// # Safety
// `a` and `b` must be NUL-terminated strings; `out` must be writable.
enum HistocrStatus histocr_char_distance(const char *a, const char *b, size_t *out);

// Per-line counts with the default length thresholds.
//
// # Safety
// `reference` and `hypothesis` must be NUL-terminated strings; `out` must
// be writable.
enum HistocrStatus histocr_line_metrics(const char *reference,
                                        const char *hypothesis,
                                        struct HistocrLineMetrics *out);

// Builds a lexicon from `count` words.
//
// # Safety
// `words` must point to `count` NUL-terminated strings; `out` must be
// writable.
enum HistocrStatus histocr_lexicon_from_words(const char *const *words,
                                              size_t count,
                                              bool case_sensitive,
                                              struct HistocrLexicon **out);

// Loads a lexicon file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum HistocrStatus histocr_lexicon_load(const char *path, struct HistocrLexicon **out);

// Writes a lexicon file.
//
// # Safety
// `lexicon` must be a live handle; `path` a NUL-terminated string.
enum HistocrStatus histocr_lexicon_save(const struct HistocrLexicon *lexicon, const char *path);

// Whether `token` is attested (after the lexicon's folding).
//
// # Safety
// `lexicon` must be a live handle; `token` a NUL-terminated string; `out`
// writable.
enum HistocrStatus histocr_lexicon_contains(const struct HistocrLexicon *lexicon,
                                            const char *token,
                                            bool *out);

// Number of stored keys; 0 for a null handle.
//
// # Safety
// `lexicon` must be null or a live handle.
size_t histocr_lexicon_len(const struct HistocrLexicon *lexicon);

// Releases a lexicon handle. Null is ignored.
//
// # Safety
// `lexicon` must be null or a handle from this library not yet freed.
void histocr_lexicon_free(struct HistocrLexicon *lexicon);

// Corpus CER/WER with bootstrap intervals for every model in a manifest,
// as JSON.
//
// # Safety
// `manifest_path` must be a NUL-terminated string; `out_json` writable.
enum HistocrStatus histocr_evaluate_manifest(const char *manifest_path,
                                             uint64_t resamples,
                                             uint64_t seed,
                                             char **out_json);

// Full analysis report for a manifest, as JSON. `modern` may be null, which
// disables lexical-normalization detection.
//
// # Safety
// `manifest_path` must be a NUL-terminated string, `historical` a live
// handle, `modern` null or a live handle, `out_json` writable.
enum HistocrStatus histocr_analyze_manifest(const char *manifest_path,
                                            const struct HistocrLexicon *historical,
                                            const struct HistocrLexicon *modern,
                                            uint64_t resamples,
                                            uint64_t seed,
                                            char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HISTOCR_H */
