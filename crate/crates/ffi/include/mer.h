#ifndef MER_H
#define MER_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>

typedef enum MerStatus {
  MER_STATUS_OK = 0,
  MER_STATUS_NULL_POINTER = 1,
  MER_STATUS_INVALID_UTF8 = 2,
  MER_STATUS_IO = 3,
  MER_STATUS_PARSE = 4,
  MER_STATUS_INVALID_ARGUMENT = 5,
  MER_STATUS_DIMENSION_MISMATCH = 6,
  MER_STATUS_NOT_FOUND = 7,
  // A Rust panic was caught at the boundary.
  MER_STATUS_INTERNAL = 8,
} MerStatus;

typedef enum MerSplit {
  MER_SPLIT_TRAIN = 0,
  MER_SPLIT_TEST = 1,
} MerSplit;

typedef enum MerStoreKind {
  MER_STORE_KIND_SENTENCE = 1,
  MER_STORE_KIND_TOKEN = 2,
} MerStoreKind;

// Validated annotated corpus.
typedef struct MerCorpus MerCorpus;

// Sentence- or token-level embedding store.
typedef struct MerStore MerStore;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *mer_version(void);

// Message for the last failed call on this thread, or NULL. The pointer
// stays valid until the next call into the library from the same thread.
const char *mer_last_error_message(void);

// # Safety
// `s` must be NULL or a string returned by this library, freed only once.
void mer_string_free(char *s);

// Loads and validates a JSONL corpus.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum MerStatus mer_corpus_open(const char *path, enum MerSplit split, struct MerCorpus **out);

// # Safety
// `corpus` must be NULL or a handle from [`mer_corpus_open`], freed once.
void mer_corpus_free(struct MerCorpus *corpus);

// # Safety
// `corpus` must be a live handle and `out` a valid pointer.
enum MerStatus mer_corpus_len(const struct MerCorpus *corpus, uintptr_t *out);

// Corpus statistics as a JSON object.
//
// # Safety
// `corpus` must be a live handle and `out` a valid pointer.
enum MerStatus mer_corpus_stats_json(const struct MerCorpus *corpus, char **out);

// Gold annotation of one sentence as inline `<tag>…</tag>` markup.
//
// # Safety
// `corpus` must be a live handle, `doc_id` a NUL-terminated string and
// `out` a valid pointer.
enum MerStatus mer_corpus_markup(const struct MerCorpus *corpus, const char *doc_id, uint64_t sent_index, char **out);

// Loads a binary embedding store of the given kind.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum MerStatus mer_store_open(const char *path, enum MerStoreKind kind, struct MerStore **out);

// # Safety
// `store` must be NULL or a handle from [`mer_store_open`], freed once.
void mer_store_free(struct MerStore *store);

// # Safety
// `store` must be a live handle and `out` a valid pointer.
enum MerStatus mer_store_len(const struct MerStore *store, uintptr_t *out);

// # Safety
// `store` must be a live handle and `out` a valid pointer.
enum MerStatus mer_store_dim(const struct MerStore *store, uintptr_t *out);

// Top-`k` entries of `candidates` for the sentence `(doc_id, sent_index)`
// of `queries`, as a JSON array of `{"key", "score"}`. Both stores must be
// of the same kind.
//
// # Safety
// Handles must be live, `doc_id` NUL-terminated and `out` valid.
enum MerStatus mer_store_topk(const struct MerStore *candidates, const struct MerStore *queries, const char *doc_id, uint64_t sent_index, uintptr_t k, char **out);

// Cosine similarity of two `len`-element vectors; 0 if either is zero.
//
// # Safety
// `u` and `v` must point to `len` floats and `out` must be valid.
enum MerStatus mer_cosine(const float *u, const float *v, uintptr_t len, double *out);

// Parses a model response against the original sentence. Writes a JSON
// object with `predictions`, `invalid_tag_predictions`, `diagnostics` and
// `path`.
//
// # Safety
// `raw` and `original` must be NUL-terminated and `out` valid.
enum MerStatus mer_parse_response(const char *raw, const char *original, char **out);

// Scores the run record at `record_path` against `corpus` and writes the
// report as JSON.
//
// # Safety
// `corpus` must be a live handle, `record_path` NUL-terminated and `out`
// valid.
enum MerStatus mer_evaluate(const struct MerCorpus *corpus, const char *record_path, uintptr_t offset_tolerance, char **out);

// Two-sided Wilcoxon signed-rank test on `n` paired scores.
//
// # Safety
// `a` and `b` must point to `n` doubles; `w` and `p` must be valid.
enum MerStatus mer_wilcoxon(const double *a, const double *b, uintptr_t n, double *w, double *p);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MER_H */
