//! Batch harness for fine-grained medical entity recognition against
//! chat-served language models.
//!
//! The pipeline is split into small, independently testable pieces:
//!
//! * [`corpus`]: annotation data model, JSONL ingest, statistics and
//!   training-pair export.
//! * [`embedding`]: binary embedding stores and top-k cosine selection of
//!   few-shot examples at sentence and token level.
//! * [`prompt`]: baseline and strict prompt assembly from versioned templates.
//! * [`client`]: OpenAI-compatible chat-completion client plus a
//!   deterministic mock backend.
//! * [`markup`]: inline `<tag>…</tag>` output parsing and offset anchoring.
//! * [`eval`]: ±2 character exact-match scoring, metrics and the Wilcoxon
//!   signed-rank test.
//! * [`run`]: configuration, run records and the `mer` subcommands.

pub mod client;
pub mod corpus;
pub mod embedding;
pub mod eval;
pub mod markup;
pub mod prompt;
pub mod run;

mod digest;
mod text;

pub use corpus::{Corpus, CorpusStats, EntitySpan, EntityType, Sentence, SentenceKey, Split};
pub use embedding::{EmbeddingStore, SimilarityHit, StoreKind};
pub use eval::{MatchRule, Metrics, Report};
pub use markup::{ParseOutcome, RawPrediction};
pub use prompt::{AssembledPrompt, PromptVariant};

/// Version string embedded in run records and reports.
pub const HARNESS_VERSION: &str = env!("CARGO_PKG_VERSION");
