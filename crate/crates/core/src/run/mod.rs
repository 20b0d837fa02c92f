//! Batch runs: example selection, inference, evaluation and comparison.
//!
//! Every command is a plain function here; `src/bin/mer.rs` only parses
//! arguments and maps results to exit codes.

mod config;
mod record;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::client::{complete_all, ClientError, CompletionBackend, HttpClient, MockBehavior, MockClient};
use crate::corpus::{
    compute_stats, export_training_pairs, Corpus, CorpusError, CorpusStats, Sentence, SentenceKey, Split,
};
use crate::embedding::{
    topk_sentence, topk_token, EmbeddingStore, SimilarityError, SimilarityHit, StoreError,
};
use crate::eval::{
    aggregate, doc_scores, wilcoxon_signed_rank, DocScore, MatchRule, Provenance, Report, ScoredSentence,
    StatsError, WilcoxonResult,
};
use crate::markup::{parse_and_anchor, Diagnostic, ParseOutcome};
use crate::prompt::{AssembledPrompt, PromptBuilder, PromptError};
use crate::HARNESS_VERSION;

pub use config::{RunConfig, RunMode, DEFAULT_K, DEFAULT_SELECTION};
pub use record::{RecordEntry, RecordWriter, RunHeader, RunRecord};

/// Significance level used by `compare`.
pub const ALPHA: f64 = 0.05;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("no {kind} embedding for {key}")]
    MissingEmbedding { kind: String, key: SentenceKey },
    #[error("no selection entry for {0}")]
    MissingSelection(SentenceKey),
    #[error("selected example {0} is not in the train corpus")]
    MissingExample(SentenceKey),
    #[error("key mismatch: {0}")]
    KeyMismatch(String),
    #[error("run record: {0}")]
    Record(String),
    #[error("{path}: line {line}: {source}")]
    Json {
        path: String,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl RunError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        RunError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, RunError> {
    let file = File::open(path).map_err(|e| RunError::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| RunError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| RunError::Json {
            path: path.display().to_string(),
            line: n + 1,
            source,
        })?);
    }
    Ok(out)
}

pub fn write_jsonl<'a, T: Serialize + 'a>(
    path: &Path,
    items: impl IntoIterator<Item = &'a T>,
) -> Result<(), RunError> {
    let file = File::create(path).map_err(|e| RunError::io(path, e))?;
    let mut out = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut out, item).map_err(|source| RunError::Json {
            path: path.display().to_string(),
            line: 0,
            source,
        })?;
        out.write_all(b"\n").map_err(|e| RunError::io(path, e))?;
    }
    out.flush().map_err(|e| RunError::io(path, e))
}

/// Ingests and validates a corpus file and returns its statistics.
pub fn cmd_validate(corpus_path: &Path, split: Split) -> Result<CorpusStats, RunError> {
    let corpus = Corpus::load(corpus_path, split)?;
    Ok(compute_stats(&corpus))
}

/// Writes `{"unprocessed", "processed"}` fine-tuning pairs; returns the count.
pub fn cmd_export_train(corpus: &Corpus, prompts: &PromptBuilder, out: &Path) -> Result<usize, RunError> {
    if corpus.split() != Split::Train {
        log::warn!("exporting training pairs from a non-train corpus");
    }
    let pairs = export_training_pairs(corpus, prompts)?;
    write_jsonl(out, &pairs)?;
    Ok(pairs.len())
}

/// Few-shot candidates for one test sentence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub input_key: SentenceKey,
    pub hits: Vec<SimilarityHit>,
}

/// Ranks the whole train store against every test sentence. The method
/// follows the stores' kind, which must agree.
pub fn cmd_select(
    test_corpus: &Corpus,
    train_store: &EmbeddingStore,
    test_store: &EmbeddingStore,
    k: usize,
) -> Result<Vec<SelectionRecord>, RunError> {
    let missing = |key: &SentenceKey| RunError::MissingEmbedding {
        kind: test_store.kind().to_string(),
        key: key.clone(),
    };
    let keys: Vec<SentenceKey> = test_corpus.sorted().into_iter().map(Sentence::key).collect();
    keys.par_iter()
        .map(|key| {
            let hits = match (train_store, test_store) {
                (EmbeddingStore::Sentence(train), EmbeddingStore::Sentence(test)) => {
                    topk_sentence(test.get(key).ok_or_else(|| missing(key))?, train, k)?
                }
                (EmbeddingStore::Token(train), EmbeddingStore::Token(test)) => {
                    topk_token(test.get(key).ok_or_else(|| missing(key))?, train, k)?
                }
                _ => {
                    return Err(RunError::Config(format!(
                        "train store is {} but test store is {}",
                        train_store.kind(),
                        test_store.kind()
                    )))
                }
            };
            Ok(SelectionRecord {
                input_key: key.clone(),
                hits,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Default)]
pub struct InferOptions {
    /// Stop after this many new inferences (the rest are left for a rerun).
    pub limit: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InferSummary {
    pub total: usize,
    pub skipped: usize,
    pub inferred: usize,
    pub failed: Vec<(SentenceKey, String)>,
}

/// Builds one prompt per test sentence in key order.
pub fn build_prompts(
    cfg: &RunConfig,
    test: &Corpus,
    prompts: &PromptBuilder,
    selection: Option<&[SelectionRecord]>,
) -> Result<Vec<AssembledPrompt>, RunError> {
    let variant = cfg.variant();
    if cfg.mode != RunMode::FewShot {
        return test
            .sorted()
            .into_iter()
            .map(|s| Ok(prompts.build(variant, s, &[])?))
            .collect();
    }
    let selection = selection.ok_or_else(|| RunError::Config("few_shot requires a selection file".into()))?;
    let train_path = cfg.train_corpus.as_ref().expect("validated");
    let train = Corpus::load(cfg.resolve(train_path), Split::Train)?;
    let by_key: HashMap<&SentenceKey, &SelectionRecord> = selection.iter().map(|r| (&r.input_key, r)).collect();
    let k = cfg.k();
    test.sorted()
        .into_iter()
        .map(|s| {
            let key = s.key();
            let record = by_key.get(&key).ok_or_else(|| RunError::MissingSelection(key.clone()))?;
            let examples = record
                .hits
                .iter()
                .take(k)
                .map(|h| train.get(&h.key).ok_or_else(|| RunError::MissingExample(h.key.clone())))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(prompts.build(variant, s, &examples)?)
        })
        .collect()
}

fn backend_for(cfg: &RunConfig, test: &Corpus) -> Result<Box<dyn CompletionBackend>, RunError> {
    if cfg.client.is_mock() {
        let behavior: MockBehavior = cfg.client.endpoint_url.parse()?;
        Ok(Box::new(MockClient::new(test, behavior)))
    } else {
        Ok(Box::new(HttpClient::new(cfg.client.clone())?))
    }
}

/// Runs inference for every test sentence, appending to `out`. Sentences
/// already answered in `out` are skipped, so an interrupted run resumes.
pub fn cmd_infer(
    cfg: &RunConfig,
    selection: Option<&Path>,
    out: &Path,
    opts: &InferOptions,
) -> Result<InferSummary, RunError> {
    cfg.validate()?;
    if cfg.mode == RunMode::FewShot && selection.is_none() {
        return Err(RunError::Config("few_shot requires a selection file".into()));
    }
    let test = Corpus::load(cfg.resolve(&cfg.test_corpus), Split::Test)?;
    let backend = backend_for(cfg, &test)?;
    infer_with_backend(cfg, &test, backend.as_ref(), selection, out, opts)
}

pub fn infer_with_backend(
    cfg: &RunConfig,
    test: &Corpus,
    backend: &dyn CompletionBackend,
    selection: Option<&Path>,
    out: &Path,
    opts: &InferOptions,
) -> Result<InferSummary, RunError> {
    cfg.validate()?;
    let builder = cfg.prompt_builder()?;
    let selection = selection.map(read_jsonl::<SelectionRecord>).transpose()?;
    let prompts = build_prompts(cfg, test, &builder, selection.as_deref())?;

    let header = RunHeader {
        harness_version: HARNESS_VERSION.to_string(),
        config: cfg.clone(),
        config_digest: cfg.digest(),
        template_digest: builder.templates().digest(),
        definitions_digest: builder.definitions().digest(),
        created_at: chrono::Utc::now().to_rfc3339(),
    };

    let (mut writer, done) = if out.exists() {
        let existing = RunRecord::load(out)?;
        let h = &existing.header;
        if h.config_digest != header.config_digest
            || h.template_digest != header.template_digest
            || h.definitions_digest != header.definitions_digest
        {
            return Err(RunError::Record(format!(
                "{} was produced with a different configuration, templates or definitions",
                out.display()
            )));
        }
        let done: BTreeSet<SentenceKey> = existing
            .entries
            .values()
            .filter(|e| e.succeeded())
            .map(|e| e.input_key.clone())
            .collect();
        (RecordWriter::append(out)?, done)
    } else {
        (RecordWriter::create(out, &header)?, BTreeSet::new())
    };

    let mut pending: Vec<AssembledPrompt> = prompts
        .iter()
        .filter(|p| !done.contains(&p.input_key))
        .cloned()
        .collect();
    let mut summary = InferSummary {
        total: prompts.len(),
        skipped: prompts.len() - pending.len(),
        ..Default::default()
    };
    if let Some(limit) = opts.limit {
        pending.truncate(limit);
    }

    let chunk = cfg.client.parallelism * 4;
    for batch in pending.chunks(chunk.max(1)) {
        let results = complete_all(backend, batch, cfg.client.parallelism);
        for (prompt, result) in batch.iter().zip(results) {
            let timestamp = chrono::Utc::now().to_rfc3339();
            let entry = match result {
                Ok(c) => RecordEntry {
                    input_key: prompt.input_key.clone(),
                    prompt_hash: prompt.prompt_hash.clone(),
                    example_keys: prompt.example_keys.clone(),
                    raw_response: Some(c.raw_text),
                    latency_ms: c.latency_ms,
                    attempt_count: c.attempt_count,
                    timestamp,
                    error: None,
                },
                Err(e) => {
                    log::error!("{}: {e}", prompt.input_key);
                    summary.failed.push((prompt.input_key.clone(), e.to_string()));
                    RecordEntry {
                        input_key: prompt.input_key.clone(),
                        prompt_hash: prompt.prompt_hash.clone(),
                        example_keys: prompt.example_keys.clone(),
                        raw_response: None,
                        latency_ms: 0,
                        attempt_count: e.attempts(),
                        timestamp,
                        error: Some(e.to_string()),
                    }
                }
            };
            writer.write_entry(&entry, out)?;
            summary.inferred += 1;
        }
    }
    Ok(summary)
}

/// Per-sentence diagnostics written next to the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceDiagnostics {
    pub input_key: SentenceKey,
    pub failed: bool,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: Report,
    pub docs: Vec<DocScore>,
    pub sentences: Vec<ScoredSentence>,
    pub diagnostics: Vec<SentenceDiagnostics>,
    pub warnings: Vec<String>,
}

/// Scores a run record against its gold corpus without touching the network.
/// Failed sentences count as empty predictions.
pub fn cmd_eval(
    record: &RunRecord,
    corpus: &Corpus,
    rule: MatchRule,
    expected: Option<&RunConfig>,
) -> Result<Evaluation, RunError> {
    let corpus_keys: BTreeSet<SentenceKey> = corpus.sentences().iter().map(Sentence::key).collect();
    let record_keys: BTreeSet<SentenceKey> = record.entries.keys().cloned().collect();
    if corpus_keys != record_keys {
        let missing: Vec<String> = corpus_keys.difference(&record_keys).take(5).map(|k| k.to_string()).collect();
        let extra: Vec<String> = record_keys.difference(&corpus_keys).take(5).map(|k| k.to_string()).collect();
        return Err(RunError::KeyMismatch(format!(
            "not in record: [{}]; not in corpus: [{}]",
            missing.join(", "),
            extra.join(", ")
        )));
    }

    let mut warnings = Vec::new();
    if record.header.harness_version != HARNESS_VERSION {
        warnings.push(format!(
            "record produced by harness {} (this is {HARNESS_VERSION})",
            record.header.harness_version
        ));
    }
    if let Some(cfg) = expected {
        if cfg.digest() != record.header.config_digest {
            warnings.push("config digest differs from the one used at inference".into());
        }
        let builder = cfg.prompt_builder()?;
        if builder.templates().digest() != record.header.template_digest {
            warnings.push("template digest differs from the one used at inference".into());
        }
        if builder.definitions().digest() != record.header.definitions_digest {
            warnings.push("definitions digest differs from the one used at inference".into());
        }
    }
    for w in &warnings {
        log::warn!("{w}");
    }

    let entries: Vec<&RecordEntry> = record.entries.values().collect();
    let sentences: Vec<ScoredSentence> = entries
        .par_iter()
        .map(|entry| {
            let gold = corpus.get(&entry.input_key).expect("key sets checked");
            let outcome = match &entry.raw_response {
                Some(raw) => parse_and_anchor(raw, &gold.text),
                None => ParseOutcome {
                    predictions: vec![],
                    invalid_tag_predictions: vec![],
                    diagnostics: vec![],
                    path: crate::markup::AnchorPath::Identity,
                },
            };
            ScoredSentence::score(entry.input_key.clone(), outcome, gold.gold.clone(), rule)
        })
        .collect();
    let diagnostics = sentences
        .iter()
        .zip(&entries)
        .map(|(s, e)| SentenceDiagnostics {
            input_key: s.key.clone(),
            failed: !e.succeeded(),
            diagnostics: s.outcome.diagnostics.clone(),
        })
        .collect();

    let provenance = Provenance {
        config_digest: record.header.config_digest.clone(),
        template_digest: record.header.template_digest.clone(),
        harness_version: record.header.harness_version.clone(),
    };
    Ok(Evaluation {
        report: aggregate(&sentences, &provenance),
        docs: doc_scores(&sentences),
        sentences,
        diagnostics,
        warnings,
    })
}

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TXT: &str = "report.txt";
pub const DOCS_JSONL: &str = "docs.jsonl";
pub const DIAGNOSTICS_JSONL: &str = "diagnostics.jsonl";

/// Writes `report.json`, `report.txt`, `docs.jsonl` and `diagnostics.jsonl`.
pub fn write_evaluation(eval: &Evaluation, dir: &Path) -> Result<(), RunError> {
    std::fs::create_dir_all(dir).map_err(|e| RunError::io(dir, e))?;
    let json_path = dir.join(REPORT_JSON);
    let mut json = serde_json::to_string_pretty(&eval.report).map_err(|source| RunError::Json {
        path: json_path.display().to_string(),
        line: 0,
        source,
    })?;
    json.push('\n');
    std::fs::write(&json_path, json).map_err(|e| RunError::io(&json_path, e))?;
    let txt_path = dir.join(REPORT_TXT);
    std::fs::write(&txt_path, eval.report.to_string()).map_err(|e| RunError::io(&txt_path, e))?;
    write_jsonl(&dir.join(DOCS_JSONL), &eval.docs)?;
    write_jsonl(&dir.join(DIAGNOSTICS_JSONL), &eval.diagnostics)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub n_docs: usize,
    pub result: WilcoxonResult,
    pub significant: bool,
}

/// Wilcoxon signed-rank test over per-document F1 of two runs.
pub fn cmd_compare(a: &[DocScore], b: &[DocScore]) -> Result<Comparison, RunError> {
    let index = |docs: &[DocScore]| -> Result<BTreeMap<String, f64>, RunError> {
        let mut map = BTreeMap::new();
        for d in docs {
            if map.insert(d.doc_id.clone(), d.f1).is_some() {
                return Err(RunError::KeyMismatch(format!("document {} listed twice", d.doc_id)));
            }
        }
        Ok(map)
    };
    let (a, b) = (index(a)?, index(b)?);
    if a.keys().ne(b.keys()) {
        let only_a: Vec<&str> = a.keys().filter(|k| !b.contains_key(*k)).map(String::as_str).take(5).collect();
        let only_b: Vec<&str> = b.keys().filter(|k| !a.contains_key(*k)).map(String::as_str).take(5).collect();
        return Err(RunError::KeyMismatch(format!(
            "documents only in A: [{}]; only in B: [{}]",
            only_a.join(", "),
            only_b.join(", ")
        )));
    }
    let pairs: Vec<(f64, f64)> = a.iter().map(|(doc, &fa)| (fa, b[doc])).collect();
    let result = wilcoxon_signed_rank(&pairs)?;
    Ok(Comparison {
        n_docs: pairs.len(),
        significant: result.significant(ALPHA),
        result,
    })
}
