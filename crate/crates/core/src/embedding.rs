//! Binary embedding stores and top-k cosine selection of few-shot examples.
//!
//! File layout (little-endian):
//!
//! ```text
//! header   = "MERE" | version u8 (=1) | kind u8 (1 sentence, 2 token) | dim u32 | count u64
//! sentence = key_len u16 | key utf-8 ("docid#sentindex") | dim x f32
//! token    = key_len u16 | key | n u32 | n x (start u32 | end u32 | dim x f32)
//! ```
//!
//! Vectors are stored unnormalised as f32; all similarity arithmetic runs in
//! f64. Norms are computed once at load.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::SentenceKey;

pub const MAGIC: &[u8; 4] = b"MERE";
pub const FORMAT_VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StoreKind {
    Sentence,
    Token,
}

impl StoreKind {
    fn code(self) -> u8 {
        match self {
            StoreKind::Sentence => 1,
            StoreKind::Token => 2,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(StoreKind::Sentence),
            2 => Some(StoreKind::Token),
            _ => None,
        }
    }
}

impl fmt::Display for StoreKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StoreKind::Sentence => "sentence",
            StoreKind::Token => "token",
        })
    }
}

impl std::str::FromStr for StoreKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sentence" => Ok(StoreKind::Sentence),
            "token" => Ok(StoreKind::Token),
            other => Err(format!("unknown store kind \"{other}\" (expected sentence or token)")),
        }
    }
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("bad magic bytes (expected \"MERE\")")]
    BadMagic,
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u8),
    #[error("unknown store kind code {0}")]
    UnknownKind(u8),
    #[error("store kind mismatch: expected {expected}, file holds {found}")]
    KindMismatch { expected: StoreKind, found: StoreKind },
    #[error("dimension 0 is not allowed")]
    ZeroDimension,
    #[error("truncated file: record {record} of {count} incomplete")]
    Truncated { record: u64, count: u64 },
    #[error("{0} trailing bytes after the last record")]
    TrailingBytes(usize),
    #[error("record {record}: key is not valid UTF-8 docid#index")]
    BadKey { record: u64 },
    #[error("duplicate key {0}")]
    DuplicateKey(SentenceKey),
    #[error("non-finite vector component in {0}")]
    NonFinite(SentenceKey),
    #[error("vector for {key} has dimension {found}, store dimension is {expected}")]
    WrongDimension {
        key: SentenceKey,
        expected: usize,
        found: usize,
    },
    #[error("word spans of {0} are empty, overlapping or out of order")]
    BadTokenSpans(SentenceKey),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimilarityError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("candidate store is empty")]
    EmptyStore,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("{0} has no token vectors")]
    EmptyTokens(SentenceKey),
}

/// A dense f32 vector with its Euclidean norm cached in f64.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    values: Vec<f32>,
    norm: f64,
}

impl Embedding {
    pub fn new(values: Vec<f32>) -> Self {
        let norm = l2_norm(&values);
        Self { values, norm }
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

fn l2_norm(v: &[f32]) -> f64 {
    v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt()
}

fn dot(u: &[f32], v: &[f32]) -> f64 {
    u.iter().zip(v).map(|(&a, &b)| f64::from(a) * f64::from(b)).sum()
}

fn cosine_cached(u: &Embedding, v: &Embedding) -> f64 {
    if u.norm == 0.0 || v.norm == 0.0 {
        log::debug!("zero-norm vector in cosine; scoring 0");
        return 0.0;
    }
    dot(&u.values, &v.values) / (u.norm * v.norm)
}

/// `u·v / (‖u‖‖v‖)` in double precision; 0 when either norm is 0.
pub fn cosine(u: &[f32], v: &[f32]) -> Result<f64, SimilarityError> {
    if u.len() != v.len() {
        return Err(SimilarityError::DimensionMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    let (nu, nv) = (l2_norm(u), l2_norm(v));
    if nu == 0.0 || nv == 0.0 {
        log::debug!("zero-norm vector in cosine; scoring 0");
        return Ok(0.0);
    }
    Ok(dot(u, v) / (nu * nv))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SentenceEmbedding {
    pub key: SentenceKey,
    pub vector: Embedding,
}

impl SentenceEmbedding {
    pub fn new(key: SentenceKey, values: Vec<f32>) -> Self {
        Self {
            key,
            vector: Embedding::new(values),
        }
    }
}

/// One whitespace word with its character span and vector.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenVector {
    pub start: u32,
    pub end: u32,
    pub vector: Embedding,
}

impl TokenVector {
    pub fn new(start: u32, end: u32, values: Vec<f32>) -> Self {
        Self {
            start,
            end,
            vector: Embedding::new(values),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TokenEmbeddings {
    pub key: SentenceKey,
    pub tokens: Vec<TokenVector>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityHit {
    pub key: SentenceKey,
    pub score: f64,
}

/// Descending score, then ascending key.
fn hit_order(a: &SimilarityHit, b: &SimilarityHit) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.key.cmp(&b.key))
}

fn top_k(mut hits: Vec<SimilarityHit>, k: usize) -> Vec<SimilarityHit> {
    if k < hits.len() {
        hits.select_nth_unstable_by(k - 1, hit_order);
        hits.truncate(k);
    }
    hits.sort_by(hit_order);
    hits
}

/// Sentence-level store: one pooled vector per sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceStore {
    dim: usize,
    records: Vec<SentenceEmbedding>,
    index: HashMap<SentenceKey, usize>,
}

/// Token-level store: one vector per whitespace word per sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenStore {
    dim: usize,
    records: Vec<TokenEmbeddings>,
    index: HashMap<SentenceKey, usize>,
}

fn build_index<'a>(
    keys: impl Iterator<Item = &'a SentenceKey>,
) -> Result<HashMap<SentenceKey, usize>, StoreError> {
    let mut index = HashMap::new();
    for (i, key) in keys.enumerate() {
        if index.insert(key.clone(), i).is_some() {
            return Err(StoreError::DuplicateKey(key.clone()));
        }
    }
    Ok(index)
}

impl SentenceStore {
    pub fn new(dim: usize, records: Vec<SentenceEmbedding>) -> Result<Self, StoreError> {
        if dim == 0 {
            return Err(StoreError::ZeroDimension);
        }
        for r in &records {
            check_vector(&r.key, &r.vector, dim)?;
        }
        let index = build_index(records.iter().map(|r| &r.key))?;
        Ok(Self {
            dim,
            records,
            index,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[SentenceEmbedding] {
        &self.records
    }

    pub fn get(&self, key: &SentenceKey) -> Option<&SentenceEmbedding> {
        self.index.get(key).map(|&i| &self.records[i])
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        match load_store(path, StoreKind::Sentence)? {
            EmbeddingStore::Sentence(s) => Ok(s),
            EmbeddingStore::Token(_) => unreachable!("kind checked by load_store"),
        }
    }

    pub fn write_to(&self, mut out: impl Write) -> std::io::Result<()> {
        write_header(&mut out, StoreKind::Sentence, self.dim, self.records.len())?;
        for r in &self.records {
            write_key(&mut out, &r.key)?;
            write_values(&mut out, r.vector.values())?;
        }
        Ok(())
    }
}

impl TokenStore {
    pub fn new(dim: usize, records: Vec<TokenEmbeddings>) -> Result<Self, StoreError> {
        if dim == 0 {
            return Err(StoreError::ZeroDimension);
        }
        for r in &records {
            let mut prev_end = 0u32;
            for (i, t) in r.tokens.iter().enumerate() {
                if t.start >= t.end || (i > 0 && t.start < prev_end) {
                    return Err(StoreError::BadTokenSpans(r.key.clone()));
                }
                prev_end = t.end;
                check_vector(&r.key, &t.vector, dim)?;
            }
        }
        let index = build_index(records.iter().map(|r| &r.key))?;
        Ok(Self {
            dim,
            records,
            index,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[TokenEmbeddings] {
        &self.records
    }

    pub fn get(&self, key: &SentenceKey) -> Option<&TokenEmbeddings> {
        self.index.get(key).map(|&i| &self.records[i])
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        match load_store(path, StoreKind::Token)? {
            EmbeddingStore::Token(s) => Ok(s),
            EmbeddingStore::Sentence(_) => unreachable!("kind checked by load_store"),
        }
    }

    pub fn write_to(&self, mut out: impl Write) -> std::io::Result<()> {
        write_header(&mut out, StoreKind::Token, self.dim, self.records.len())?;
        for r in &self.records {
            write_key(&mut out, &r.key)?;
            out.write_all(&(r.tokens.len() as u32).to_le_bytes())?;
            for t in &r.tokens {
                out.write_all(&t.start.to_le_bytes())?;
                out.write_all(&t.end.to_le_bytes())?;
                write_values(&mut out, t.vector.values())?;
            }
        }
        Ok(())
    }
}

fn check_vector(key: &SentenceKey, v: &Embedding, dim: usize) -> Result<(), StoreError> {
    if v.dim() != dim {
        return Err(StoreError::WrongDimension {
            key: key.clone(),
            expected: dim,
            found: v.dim(),
        });
    }
    if !v.is_finite() {
        return Err(StoreError::NonFinite(key.clone()));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub enum EmbeddingStore {
    Sentence(SentenceStore),
    Token(TokenStore),
}

impl EmbeddingStore {
    pub fn kind(&self) -> StoreKind {
        match self {
            EmbeddingStore::Sentence(_) => StoreKind::Sentence,
            EmbeddingStore::Token(_) => StoreKind::Token,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            EmbeddingStore::Sentence(s) => s.len(),
            EmbeddingStore::Token(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        match self {
            EmbeddingStore::Sentence(s) => s.dim(),
            EmbeddingStore::Token(s) => s.dim(),
        }
    }

    pub fn contains(&self, key: &SentenceKey) -> bool {
        match self {
            EmbeddingStore::Sentence(s) => s.get(key).is_some(),
            EmbeddingStore::Token(s) => s.get(key).is_some(),
        }
    }

    pub fn write_to(&self, out: impl Write) -> std::io::Result<()> {
        match self {
            EmbeddingStore::Sentence(s) => s.write_to(out),
            EmbeddingStore::Token(s) => s.write_to(out),
        }
    }
}

fn write_header(out: &mut impl Write, kind: StoreKind, dim: usize, count: usize) -> std::io::Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&[FORMAT_VERSION, kind.code()])?;
    out.write_all(&(dim as u32).to_le_bytes())?;
    out.write_all(&(count as u64).to_le_bytes())
}

fn write_key(out: &mut impl Write, key: &SentenceKey) -> std::io::Result<()> {
    let raw = key.to_string();
    out.write_all(&(raw.len() as u16).to_le_bytes())?;
    out.write_all(raw.as_bytes())
}

fn write_values(out: &mut impl Write, values: &[f32]) -> std::io::Result<()> {
    for v in values {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let out = self.buf.get(self.pos..end)?;
        self.pos = end;
        Some(out)
    }

    fn u8(&mut self) -> Option<u8> {
        self.take(1).map(|b| b[0])
    }

    fn u16(&mut self) -> Option<u16> {
        self.take(2).map(|b| u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn u64(&mut self) -> Option<u64> {
        self.take(8).map(|b| u64::from_le_bytes(b.try_into().unwrap()))
    }

    fn f32s(&mut self, dim: usize) -> Option<Vec<f32>> {
        let raw = self.take(dim.checked_mul(4)?)?;
        Some(
            raw.chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        )
    }
}

/// Parses a store from bytes, checking the header kind against `kind`.
pub fn parse_store(bytes: &[u8], kind: StoreKind) -> Result<EmbeddingStore, StoreError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4) != Some(MAGIC.as_slice()) {
        return Err(StoreError::BadMagic);
    }
    let header_truncated = StoreError::Truncated { record: 0, count: 0 };
    let version = r.u8().ok_or(StoreError::BadMagic)?;
    if version != FORMAT_VERSION {
        return Err(StoreError::UnsupportedVersion(version));
    }
    let code = r.u8().ok_or(StoreError::BadMagic)?;
    let found = StoreKind::from_code(code).ok_or(StoreError::UnknownKind(code))?;
    if found != kind {
        return Err(StoreError::KindMismatch {
            expected: kind,
            found,
        });
    }
    let dim = r.u32().ok_or(header_truncated)? as usize;
    if dim == 0 {
        return Err(StoreError::ZeroDimension);
    }
    let count = r
        .u64()
        .ok_or(StoreError::Truncated { record: 0, count: 0 })?;

    let truncated = |record: u64| StoreError::Truncated { record, count };
    let read_key = |r: &mut Reader<'_>, record: u64| -> Result<SentenceKey, StoreError> {
        let len = r.u16().ok_or(truncated(record))? as usize;
        let raw = r.take(len).ok_or(truncated(record))?;
        std::str::from_utf8(raw)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or(StoreError::BadKey { record })
    };

    let store = match kind {
        StoreKind::Sentence => {
            let mut records = Vec::new();
            for record in 0..count {
                let key = read_key(&mut r, record)?;
                let values = r.f32s(dim).ok_or(truncated(record))?;
                records.push(SentenceEmbedding::new(key, values));
            }
            EmbeddingStore::Sentence(SentenceStore::new(dim, records)?)
        }
        StoreKind::Token => {
            let mut records = Vec::new();
            for record in 0..count {
                let key = read_key(&mut r, record)?;
                let n = r.u32().ok_or(truncated(record))?;
                let mut tokens = Vec::new();
                for _ in 0..n {
                    let start = r.u32().ok_or(truncated(record))?;
                    let end = r.u32().ok_or(truncated(record))?;
                    let values = r.f32s(dim).ok_or(truncated(record))?;
                    tokens.push(TokenVector::new(start, end, values));
                }
                records.push(TokenEmbeddings { key, tokens });
            }
            EmbeddingStore::Token(TokenStore::new(dim, records)?)
        }
    };
    let rest = bytes.len() - r.pos;
    if rest != 0 {
        return Err(StoreError::TrailingBytes(rest));
    }
    Ok(store)
}

pub fn load_store(path: impl AsRef<Path>, kind: StoreKind) -> Result<EmbeddingStore, StoreError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| StoreError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_store(&bytes, kind)
}

/// The `k` candidates with highest cosine to `query`, sorted by descending
/// score with ties broken by ascending key.
pub fn topk_sentence(
    query: &SentenceEmbedding,
    candidates: &SentenceStore,
    k: usize,
) -> Result<Vec<SimilarityHit>, SimilarityError> {
    if k == 0 {
        return Err(SimilarityError::ZeroK);
    }
    if candidates.is_empty() {
        return Err(SimilarityError::EmptyStore);
    }
    if query.vector.dim() != candidates.dim() {
        return Err(SimilarityError::DimensionMismatch {
            left: query.vector.dim(),
            right: candidates.dim(),
        });
    }
    let hits = candidates
        .records()
        .par_iter()
        .map(|c| SimilarityHit {
            key: c.key.clone(),
            score: cosine_cached(&c.vector, &query.vector),
        })
        .collect();
    Ok(top_k(hits, k))
}

/// Mean positional cosine over the first `min(n_query, n_candidate)` words.
pub fn token_sentence_similarity(
    query: &TokenEmbeddings,
    candidate: &TokenEmbeddings,
) -> Result<f64, SimilarityError> {
    if query.tokens.is_empty() {
        return Err(SimilarityError::EmptyTokens(query.key.clone()));
    }
    if candidate.tokens.is_empty() {
        return Err(SimilarityError::EmptyTokens(candidate.key.clone()));
    }
    let (qd, cd) = (query.tokens[0].vector.dim(), candidate.tokens[0].vector.dim());
    if qd != cd {
        return Err(SimilarityError::DimensionMismatch { left: qd, right: cd });
    }
    let m = query.tokens.len().min(candidate.tokens.len());
    let total: f64 = candidate
        .tokens
        .iter()
        .zip(&query.tokens)
        .map(|(c, q)| cosine_cached(&c.vector, &q.vector))
        .sum();
    Ok(total / m as f64)
}

/// Token-level counterpart of [`topk_sentence`].
pub fn topk_token(
    query: &TokenEmbeddings,
    candidates: &TokenStore,
    k: usize,
) -> Result<Vec<SimilarityHit>, SimilarityError> {
    if k == 0 {
        return Err(SimilarityError::ZeroK);
    }
    if candidates.is_empty() {
        return Err(SimilarityError::EmptyStore);
    }
    if let Some(first) = query.tokens.first() {
        if first.vector.dim() != candidates.dim() {
            return Err(SimilarityError::DimensionMismatch {
                left: first.vector.dim(),
                right: candidates.dim(),
            });
        }
    }
    let hits = candidates
        .records()
        .par_iter()
        .map(|c| {
            token_sentence_similarity(query, c).map(|score| SimilarityHit {
                key: c.key.clone(),
                score,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(top_k(hits, k))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(s: &str) -> SentenceKey {
        SentenceKey::new(s, 0)
    }

    fn tokens(name: &str, vecs: &[&[f32]]) -> TokenEmbeddings {
        TokenEmbeddings {
            key: key(name),
            tokens: vecs
                .iter()
                .enumerate()
                .map(|(i, v)| TokenVector::new(2 * i as u32, 2 * i as u32 + 1, v.to_vec()))
                .collect(),
        }
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        // 32 / (sqrt(14) * sqrt(77))
        let c = cosine(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert!((c - 0.974_631_846_197_076_2).abs() < 1e-12, "{c}");
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]).unwrap(), 0.0);
        assert!(matches!(
            cosine(&[1.0], &[1.0, 2.0]),
            Err(SimilarityError::DimensionMismatch { left: 1, right: 2 })
        ));
    }

    #[test]
    fn sentence_topk_examples() {
        let store = SentenceStore::new(
            2,
            vec![
                SentenceEmbedding::new(key("a"), vec![1.0, 0.0]),
                SentenceEmbedding::new(key("b"), vec![0.0, 1.0]),
                SentenceEmbedding::new(key("c"), vec![0.6, 0.8]),
            ],
        )
        .unwrap();
        let q = SentenceEmbedding::new(key("q"), vec![1.0, 0.0]);
        let hits = topk_sentence(&q, &store, 2).unwrap();
        assert_eq!(hits.len(), 2);
        assert_eq!((hits[0].key.doc_id.as_str(), hits[0].score), ("a", 1.0));
        assert_eq!(hits[1].key.doc_id, "c");
        assert!((hits[1].score - 0.6).abs() < 1e-7);

        let all = topk_sentence(&q, &store, 10).unwrap();
        assert_eq!(
            all.iter().map(|h| h.key.doc_id.as_str()).collect::<Vec<_>>(),
            ["a", "c", "b"]
        );
    }

    #[test]
    fn sentence_ties_break_by_key() {
        let store = SentenceStore::new(
            2,
            vec![
                SentenceEmbedding::new(key("z"), vec![0.3, 0.4]),
                SentenceEmbedding::new(key("m"), vec![0.3, 0.4]),
            ],
        )
        .unwrap();
        let q = SentenceEmbedding::new(key("q"), vec![1.0, 1.0]);
        let hits = topk_sentence(&q, &store, 1).unwrap();
        assert_eq!(hits[0].key.doc_id, "m");
    }

    #[test]
    fn sentence_topk_errors() {
        let empty = SentenceStore::new(2, vec![]).unwrap();
        let q = SentenceEmbedding::new(key("q"), vec![1.0, 0.0]);
        assert_eq!(topk_sentence(&q, &empty, 1), Err(SimilarityError::EmptyStore));
        let store = SentenceStore::new(3, vec![SentenceEmbedding::new(key("a"), vec![1.0; 3])]).unwrap();
        assert!(matches!(
            topk_sentence(&q, &store, 1),
            Err(SimilarityError::DimensionMismatch { .. })
        ));
        assert_eq!(topk_sentence(&q, &empty, 0), Err(SimilarityError::ZeroK));
    }

    #[test]
    fn token_similarity_examples() {
        let q = tokens("q", &[&[1.0, 0.0], &[0.0, 1.0]]);
        assert!((token_sentence_similarity(&q, &q).unwrap() - 1.0).abs() < 1e-12);
        let c = tokens("c", &[&[1.0, 0.0], &[1.0, 0.0]]);
        assert_eq!(token_sentence_similarity(&q, &c).unwrap(), 0.5);

        // only the first two positions count
        let long = tokens("l", &[&[1.0, 0.0], &[0.0, 1.0], &[-1.0, 0.0]]);
        let short = tokens("s", &[&[1.0, 0.0], &[1.0, 1.0]]);
        let expected = (1.0 + 1.0 / 2f64.sqrt()) / 2.0;
        assert!((token_sentence_similarity(&long, &short).unwrap() - expected).abs() < 1e-12);

        let zero = tokens("z", &[&[0.0, 0.0], &[0.0, 1.0]]);
        assert_eq!(token_sentence_similarity(&q, &zero).unwrap(), 0.5);

        let none = TokenEmbeddings { key: key("e"), tokens: vec![] };
        assert!(matches!(
            token_sentence_similarity(&q, &none),
            Err(SimilarityError::EmptyTokens(_))
        ));
    }

    #[test]
    fn token_topk_identical_candidate_wins() {
        let q = tokens("q", &[&[0.2, 0.9], &[0.5, -0.1]]);
        let mut same = q.clone();
        same.key = key("same");
        let other = tokens("other", &[&[0.9, 0.2], &[-0.5, 0.1]]);
        let store = TokenStore::new(2, vec![other, same]).unwrap();
        let hits = topk_token(&q, &store, 1).unwrap();
        assert_eq!(hits[0].key.doc_id, "same");
        assert!((hits[0].score - 1.0).abs() < 1e-12);
    }

    #[test]
    fn store_round_trips_and_rejects_bad_files() {
        let store = SentenceStore::new(
            3,
            vec![
                SentenceEmbedding::new(SentenceKey::new("d1", 0), vec![1.0, 2.0, 3.0]),
                SentenceEmbedding::new(SentenceKey::new("d1", 1), vec![0.0, -1.0, 0.5]),
            ],
        )
        .unwrap();
        let mut bytes = Vec::new();
        store.write_to(&mut bytes).unwrap();
        let loaded = parse_store(&bytes, StoreKind::Sentence).unwrap();
        assert_eq!(loaded.len(), 2);
        assert_eq!(loaded.dim(), 3);

        // header count says 3, body holds 2
        let mut short = bytes.clone();
        short[10..18].copy_from_slice(&3u64.to_le_bytes());
        assert!(matches!(
            parse_store(&short, StoreKind::Sentence),
            Err(StoreError::Truncated { record: 2, count: 3 })
        ));

        assert!(matches!(
            parse_store(&bytes, StoreKind::Token),
            Err(StoreError::KindMismatch { .. })
        ));

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(parse_store(&bad, StoreKind::Sentence), Err(StoreError::BadMagic)));

        let mut v2 = bytes.clone();
        v2[4] = 2;
        assert!(matches!(
            parse_store(&v2, StoreKind::Sentence),
            Err(StoreError::UnsupportedVersion(2))
        ));

        let mut zero_dim = bytes.clone();
        zero_dim[6..10].copy_from_slice(&0u32.to_le_bytes());
        assert!(matches!(
            parse_store(&zero_dim, StoreKind::Sentence),
            Err(StoreError::ZeroDimension)
        ));

        let mut nan = bytes.clone();
        let last = nan.len() - 4;
        nan[last..].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(
            parse_store(&nan, StoreKind::Sentence),
            Err(StoreError::NonFinite(_))
        ));

        let mut trailing = bytes;
        trailing.push(0);
        assert!(matches!(
            parse_store(&trailing, StoreKind::Sentence),
            Err(StoreError::TrailingBytes(1))
        ));
    }

    #[test]
    fn token_store_checks_spans() {
        let mut t = tokens("t", &[&[1.0], &[1.0]]);
        t.tokens[1].start = 0;
        assert!(matches!(TokenStore::new(1, vec![t]), Err(StoreError::BadTokenSpans(_))));
    }
}
