//! C ABI over `mer-core`.
//!
//! Objects cross the boundary as opaque handles released with their
//! `*_free` function. Every call returns a [`MerStatus`]; on failure
//! [`mer_last_error_message`] describes the error for the calling thread.
//! Strings returned through out-parameters are owned by the caller and must
//! be released with [`mer_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use mer_core::corpus::{compute_stats, serialize_markup, CorpusError};
use mer_core::embedding::{cosine, load_store, topk_sentence, topk_token, SimilarityError, StoreError};
use mer_core::eval::{wilcoxon_signed_rank, MatchRule};
use mer_core::markup::parse_and_anchor;
use mer_core::run::{cmd_eval, RunError, RunRecord};
use mer_core::{Corpus, EmbeddingStore, SentenceKey, Split, StoreKind};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MerStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    InvalidArgument = 5,
    DimensionMismatch = 6,
    NotFound = 7,
    /// A Rust panic was caught at the boundary.
    Internal = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MerSplit {
    Train = 0,
    Test = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MerStoreKind {
    Sentence = 1,
    Token = 2,
}

/// Validated annotated corpus.
pub struct MerCorpus {
    inner: Corpus,
}

/// Sentence- or token-level embedding store.
pub struct MerStore {
    inner: EmbeddingStore,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(MerStatus, String);

type FfiResult<T> = Result<T, Failure>;

impl From<CorpusError> for Failure {
    fn from(e: CorpusError) -> Self {
        let status = match e {
            CorpusError::Io { .. } => MerStatus::Io,
            _ => MerStatus::Parse,
        };
        Failure(status, e.to_string())
    }
}

impl From<StoreError> for Failure {
    fn from(e: StoreError) -> Self {
        let status = match e {
            StoreError::Io { .. } => MerStatus::Io,
            _ => MerStatus::Parse,
        };
        Failure(status, e.to_string())
    }
}

impl From<SimilarityError> for Failure {
    fn from(e: SimilarityError) -> Self {
        let status = match e {
            SimilarityError::DimensionMismatch { .. } => MerStatus::DimensionMismatch,
            _ => MerStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        let status = match &e {
            RunError::Io { .. } => MerStatus::Io,
            RunError::Json { .. } | RunError::Record(_) => MerStatus::Parse,
            RunError::KeyMismatch(_) => MerStatus::InvalidArgument,
            _ => MerStatus::Internal,
        };
        Failure(status, e.to_string())
    }
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', "\\0")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> FfiResult<()>) -> MerStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
            MerStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(&format!("internal error: {msg}"));
            MerStatus::Internal
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(Failure(MerStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(MerStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> FfiResult<&'a T> {
    p.as_ref()
        .ok_or_else(|| Failure(MerStatus::NullPointer, format!("{name} is null")))
}

unsafe fn out_arg<'a, T>(p: *mut T, name: &str) -> FfiResult<&'a mut T> {
    p.as_mut()
        .ok_or_else(|| Failure(MerStatus::NullPointer, format!("{name} is null")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, name: &str) -> FfiResult<&'a [T]> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure(MerStatus::NullPointer, format!("{name} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn to_c_string(s: String) -> FfiResult<*mut c_char> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure(MerStatus::Internal, "string contains NUL".into()))
}

fn to_json<T: serde::Serialize>(value: &T) -> FfiResult<*mut c_char> {
    let json = serde_json::to_string(value).map_err(|e| Failure(MerStatus::Internal, e.to_string()))?;
    to_c_string(json)
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mer_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr().cast()
}

/// Message for the last failed call on this thread, or NULL. The pointer
/// stays valid until the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn mer_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` must be NULL or a string returned by this library, freed only once.
#[no_mangle]
pub unsafe extern "C" fn mer_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads and validates a JSONL corpus.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mer_corpus_open(path: *const c_char, split: MerSplit, out: *mut *mut MerCorpus) -> MerStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let path = str_arg(path, "path")?;
        let split = match split {
            MerSplit::Train => Split::Train,
            MerSplit::Test => Split::Test,
        };
        let corpus = Corpus::load(path, split)?;
        *out = Box::into_raw(Box::new(MerCorpus { inner: corpus }));
        Ok(())
    })
}

/// # Safety
/// `corpus` must be NULL or a handle from [`mer_corpus_open`], freed once.
#[no_mangle]
pub unsafe extern "C" fn mer_corpus_free(corpus: *mut MerCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

/// # Safety
/// `corpus` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mer_corpus_len(corpus: *const MerCorpus, out: *mut usize) -> MerStatus {
    guard(|| {
        *out_arg(out, "out")? = ref_arg(corpus, "corpus")?.inner.len();
        Ok(())
    })
}

/// Corpus statistics as a JSON object.
///
/// # Safety
/// `corpus` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mer_corpus_stats_json(corpus: *const MerCorpus, out: *mut *mut c_char) -> MerStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = to_json(&compute_stats(&ref_arg(corpus, "corpus")?.inner))?;
        Ok(())
    })
}

/// Gold annotation of one sentence as inline `<tag>…</tag>` markup.
///
/// # Safety
/// `corpus` must be a live handle, `doc_id` a NUL-terminated string and
/// `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mer_corpus_markup(
    corpus: *const MerCorpus,
    doc_id: *const c_char,
    sent_index: u64,
    out: *mut *mut c_char,
) -> MerStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let corpus = &ref_arg(corpus, "corpus")?.inner;
        let key = SentenceKey::new(str_arg(doc_id, "doc_id")?, sent_index);
        let sentence = corpus
            .get(&key)
            .ok_or_else(|| Failure(MerStatus::NotFound, format!("no sentence {key}")))?;
        *out = to_c_string(serialize_markup(sentence))?;
        Ok(())
    })
}

/// Loads a binary embedding store of the given kind.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mer_store_open(path: *const c_char, kind: MerStoreKind, out: *mut *mut MerStore) -> MerStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let kind = match kind {
            MerStoreKind::Sentence => StoreKind::Sentence,
            MerStoreKind::Token => StoreKind::Token,
        };
        let store = load_store(Path::new(str_arg(path, "path")?), kind)?;
        *out = Box::into_raw(Box::new(MerStore { inner: store }));
        Ok(())
    })
}

/// # Safety
/// `store` must be NULL or a handle from [`mer_store_open`], freed once.
#[no_mangle]
pub unsafe extern "C" fn mer_store_free(store: *mut MerStore) {
    if !store.is_null() {
        drop(Box::from_raw(store));
    }
}

/// # Safety
/// `store` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mer_store_len(store: *const MerStore, out: *mut usize) -> MerStatus {
    guard(|| {
        *out_arg(out, "out")? = ref_arg(store, "store")?.inner.len();
        Ok(())
    })
}

/// # Safety
/// `store` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mer_store_dim(store: *const MerStore, out: *mut usize) -> MerStatus {
    guard(|| {
        *out_arg(out, "out")? = ref_arg(store, "store")?.inner.dim();
        Ok(())
    })
}

/// Top-`k` entries of `candidates` for the sentence `(doc_id, sent_index)`
/// of `queries`, as a JSON array of `{"key", "score"}`. Both stores must be
/// of the same kind.
///
/// # Safety
/// Handles must be live, `doc_id` NUL-terminated and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn mer_store_topk(
    candidates: *const MerStore,
    queries: *const MerStore,
    doc_id: *const c_char,
    sent_index: u64,
    k: usize,
    out: *mut *mut c_char,
) -> MerStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let candidates = &ref_arg(candidates, "candidates")?.inner;
        let queries = &ref_arg(queries, "queries")?.inner;
        let key = SentenceKey::new(str_arg(doc_id, "doc_id")?, sent_index);
        let missing = || Failure(MerStatus::NotFound, format!("no query embedding for {key}"));
        let hits = match (candidates, queries) {
            (EmbeddingStore::Sentence(c), EmbeddingStore::Sentence(q)) => {
                topk_sentence(q.get(&key).ok_or_else(missing)?, c, k)?
            }
            (EmbeddingStore::Token(c), EmbeddingStore::Token(q)) => topk_token(q.get(&key).ok_or_else(missing)?, c, k)?,
            _ => {
                return Err(Failure(
                    MerStatus::InvalidArgument,
                    "candidate and query stores differ in kind".into(),
                ))
            }
        };
        *out = to_json(&hits)?;
        Ok(())
    })
}

/// Cosine similarity of two `len`-element vectors; 0 if either is zero.
///
/// # Safety
/// `u` and `v` must point to `len` floats and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mer_cosine(u: *const f32, v: *const f32, len: usize, out: *mut f64) -> MerStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = cosine(slice_arg(u, len, "u")?, slice_arg(v, len, "v")?)?;
        Ok(())
    })
}

/// Parses a model response against the original sentence. Writes a JSON
/// object with `predictions`, `invalid_tag_predictions`, `diagnostics` and
/// `path`.
///
/// # Safety
/// `raw` and `original` must be NUL-terminated and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn mer_parse_response(
    raw: *const c_char,
    original: *const c_char,
    out: *mut *mut c_char,
) -> MerStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let outcome = parse_and_anchor(str_arg(raw, "raw")?, str_arg(original, "original")?);
        *out = to_json(&outcome)?;
        Ok(())
    })
}

/// Scores the run record at `record_path` against `corpus` and writes the
/// report as JSON.
///
/// # Safety
/// `corpus` must be a live handle, `record_path` NUL-terminated and `out`
/// valid.
#[no_mangle]
pub unsafe extern "C" fn mer_evaluate(
    corpus: *const MerCorpus,
    record_path: *const c_char,
    offset_tolerance: usize,
    out: *mut *mut c_char,
) -> MerStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let corpus = &ref_arg(corpus, "corpus")?.inner;
        let record = RunRecord::load(str_arg(record_path, "record_path")?)?;
        let eval = cmd_eval(&record, corpus, MatchRule { offset_tolerance }, None)?;
        *out = to_json(&eval.report)?;
        Ok(())
    })
}

/// Two-sided Wilcoxon signed-rank test on `n` paired scores.
///
/// # Safety
/// `a` and `b` must point to `n` doubles; `w` and `p` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mer_wilcoxon(a: *const f64, b: *const f64, n: usize, w: *mut f64, p: *mut f64) -> MerStatus {
    guard(|| {
        let (w, p) = (out_arg(w, "w")?, out_arg(p, "p")?);
        let pairs: Vec<(f64, f64)> = slice_arg(a, n, "a")?
            .iter()
            .copied()
            .zip(slice_arg(b, n, "b")?.iter().copied())
            .collect();
        let result =
            wilcoxon_signed_rank(&pairs).map_err(|e| Failure(MerStatus::InvalidArgument, e.to_string()))?;
        *w = result.w;
        *p = result.p;
        Ok(())
    })
}
