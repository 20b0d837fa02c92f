//! Annotation data model and corpus I/O.
//!
//! A corpus file is UTF-8 JSON lines, one object per sentence:
//!
//! ```text
//! {"doc_id": "d1", "sent_index": 0, "text": "Patient denies smoking .",
//!  "entities": [{"text": "smoking", "type": "tobacco_use", "start": 15, "end": 22}]}
//! ```
//!
//! Offsets are 0-based character offsets with exclusive end. Gold spans must
//! be flat: overlapping or nested spans are rejected at ingest because inline
//! markup cannot represent them.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompt::{PromptBuilder, PromptError};
use crate::text::{char_len, char_slice, word_count};

/// The closed set of 18 fine-grained medical entity types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EntityType {
    SystemOrganSite,
    AlcoholConsumption,
    Allergies,
    Gender,
    RaceEthnicity,
    RecDrugUse,
    TobaccoUse,
    DxName,
    BrandName,
    GenericName,
    ProcedureName,
    TestName,
    TreatmentName,
    TimeToDxName,
    TimeToMedicationName,
    TimeToProcedureName,
    TimeToTestName,
    TimeToTreatmentName,
}

impl EntityType {
    pub const ALL: [EntityType; 18] = [
        EntityType::SystemOrganSite,
        EntityType::AlcoholConsumption,
        EntityType::Allergies,
        EntityType::Gender,
        EntityType::RaceEthnicity,
        EntityType::RecDrugUse,
        EntityType::TobaccoUse,
        EntityType::DxName,
        EntityType::BrandName,
        EntityType::GenericName,
        EntityType::ProcedureName,
        EntityType::TestName,
        EntityType::TreatmentName,
        EntityType::TimeToDxName,
        EntityType::TimeToMedicationName,
        EntityType::TimeToProcedureName,
        EntityType::TimeToTestName,
        EntityType::TimeToTreatmentName,
    ];

    /// Canonical snake_case tag used in files and markup.
    pub const fn tag(self) -> &'static str {
        match self {
            EntityType::SystemOrganSite => "system_organ_site",
            EntityType::AlcoholConsumption => "alcohol_consumption",
            EntityType::Allergies => "allergies",
            EntityType::Gender => "gender",
            EntityType::RaceEthnicity => "race_ethnicity",
            EntityType::RecDrugUse => "rec_drug_use",
            EntityType::TobaccoUse => "tobacco_use",
            EntityType::DxName => "dx_name",
            EntityType::BrandName => "brand_name",
            EntityType::GenericName => "generic_name",
            EntityType::ProcedureName => "procedure_name",
            EntityType::TestName => "test_name",
            EntityType::TreatmentName => "treatment_name",
            EntityType::TimeToDxName => "time_to_dx_name",
            EntityType::TimeToMedicationName => "time_to_medication_name",
            EntityType::TimeToProcedureName => "time_to_procedure_name",
            EntityType::TimeToTestName => "time_to_test_name",
            EntityType::TimeToTreatmentName => "time_to_treatment_name",
        }
    }

    /// Exact lookup against the closed tag set. No case folding or repair:
    /// `"DX_NAME"` and `"dxname"` are both invalid.
    pub fn from_tag(tag: &str) -> Option<EntityType> {
        EntityType::ALL.into_iter().find(|t| t.tag() == tag)
    }
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown entity tag \"{0}\"")]
pub struct UnknownTag(pub String);

impl FromStr for EntityType {
    type Err = UnknownTag;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EntityType::from_tag(s).ok_or_else(|| UnknownTag(s.to_string()))
    }
}

impl Serialize for EntityType {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.tag())
    }
}

impl<'de> Deserialize<'de> for EntityType {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let tag = String::deserialize(deserializer)?;
        tag.parse().map_err(serde::de::Error::custom)
    }
}

/// `(doc_id, sent_index)`. Orders by document id, then numeric sentence index.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SentenceKey {
    pub doc_id: String,
    pub sent_index: u64,
}

impl SentenceKey {
    pub fn new(doc_id: impl Into<String>, sent_index: u64) -> Self {
        Self {
            doc_id: doc_id.into(),
            sent_index,
        }
    }
}

impl fmt::Display for SentenceKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.doc_id, self.sent_index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed sentence key \"{0}\" (expected docid#index)")]
pub struct BadKey(pub String);

impl FromStr for SentenceKey {
    type Err = BadKey;

    /// Parses `"docid#sentindex"`; the split is on the last `#`, so document
    /// ids may themselves contain `#`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (doc, idx) = s.rsplit_once('#').ok_or_else(|| BadKey(s.to_string()))?;
        let sent_index = idx.parse().map_err(|_| BadKey(s.to_string()))?;
        Ok(SentenceKey::new(doc, sent_index))
    }
}

impl Serialize for SentenceKey {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SentenceKey {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}

/// One labeled span inside a sentence.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EntitySpan {
    pub text: String,
    #[serde(rename = "type")]
    pub etype: EntityType,
    pub start: usize,
    pub end: usize,
}

impl EntitySpan {
    pub fn new(text: impl Into<String>, etype: EntityType, start: usize, end: usize) -> Self {
        Self {
            text: text.into(),
            etype,
            start,
            end,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub doc_id: String,
    pub sent_index: u64,
    pub text: String,
    #[serde(rename = "entities")]
    pub gold: Vec<EntitySpan>,
}

impl Sentence {
    pub fn key(&self) -> SentenceKey {
        SentenceKey::new(self.doc_id.clone(), self.sent_index)
    }

    pub fn word_count(&self) -> usize {
        word_count(&self.text)
    }

    /// Checks the sentence-level invariants: no line breaks, every span in
    /// bounds and equal to its slice, spans flat.
    pub fn validate(&self) -> Result<(), SentenceIssue> {
        if self.text.contains(['\n', '\r']) {
            return Err(SentenceIssue::LineBreak { key: self.key() });
        }
        let len = char_len(&self.text);
        for span in &self.gold {
            if span.start >= span.end || span.end > len {
                return Err(SentenceIssue::OutOfBounds {
                    key: self.key(),
                    start: span.start,
                    end: span.end,
                    len,
                });
            }
            let actual = char_slice(&self.text, span.start, span.end).unwrap_or_default();
            if actual != span.text {
                return Err(SentenceIssue::SpanMismatch {
                    key: self.key(),
                    start: span.start,
                    end: span.end,
                    expected: span.text.clone(),
                    actual: actual.to_string(),
                });
            }
        }
        let mut ordered: Vec<&EntitySpan> = self.gold.iter().collect();
        ordered.sort_by_key(|s| (s.start, s.end));
        for pair in ordered.windows(2) {
            if pair[1].start < pair[0].end {
                return Err(SentenceIssue::Overlap { key: self.key() });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SentenceIssue {
    #[error("sentence text at {key} contains a line break")]
    LineBreak { key: SentenceKey },
    #[error("span [{start}, {end}) out of bounds at {key} (sentence length {len})")]
    OutOfBounds {
        key: SentenceKey,
        start: usize,
        end: usize,
        len: usize,
    },
    #[error("span/text mismatch at {key} [{start}, {end}): expected \"{expected}\", actual slice \"{actual}\"")]
    SpanMismatch {
        key: SentenceKey,
        start: usize,
        end: usize,
        expected: String,
        actual: String,
    },
    #[error("overlapping gold spans at {key}")]
    Overlap { key: SentenceKey },
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: malformed record: {source}")]
    Malformed {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: unknown entity tag \"{tag}\" at {key}")]
    UnknownTag {
        line: usize,
        tag: String,
        key: SentenceKey,
    },
    #[error("line {line}: {issue}")]
    Invalid { line: usize, issue: SentenceIssue },
    #[error("line {line}: duplicate sentence key {key}")]
    DuplicateKey { line: usize, key: SentenceKey },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split \"{other}\" (expected train or test)")),
        }
    }
}

/// A validated, split-tagged collection of sentences in ingest order.
#[derive(Debug, Clone)]
pub struct Corpus {
    split: Split,
    sentences: Vec<Sentence>,
    index: HashMap<SentenceKey, usize>,
}

#[derive(Deserialize)]
struct SpanRecord {
    text: String,
    #[serde(rename = "type")]
    tag: String,
    start: usize,
    end: usize,
}

#[derive(Deserialize)]
struct SentenceRecord {
    doc_id: String,
    sent_index: u64,
    text: String,
    #[serde(default)]
    entities: Vec<SpanRecord>,
}

impl Corpus {
    /// Validates and wraps already-built sentences. Errors report the
    /// 1-based position of the offending sentence as its line.
    pub fn from_sentences(split: Split, sentences: Vec<Sentence>) -> Result<Self, CorpusError> {
        let mut index = HashMap::with_capacity(sentences.len());
        for (pos, sentence) in sentences.iter().enumerate() {
            let line = pos + 1;
            sentence
                .validate()
                .map_err(|issue| CorpusError::Invalid { line, issue })?;
            if index.insert(sentence.key(), pos).is_some() {
                return Err(CorpusError::DuplicateKey {
                    line,
                    key: sentence.key(),
                });
            }
        }
        Ok(Self {
            split,
            sentences,
            index,
        })
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn sentences(&self) -> &[Sentence] {
        &self.sentences
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn get(&self, key: &SentenceKey) -> Option<&Sentence> {
        self.index.get(key).map(|&i| &self.sentences[i])
    }

    /// Sentences ordered by `(doc_id, sent_index)`.
    pub fn sorted(&self) -> Vec<&Sentence> {
        let mut out: Vec<&Sentence> = self.sentences.iter().collect();
        out.sort_by(|a, b| (&a.doc_id, a.sent_index).cmp(&(&b.doc_id, b.sent_index)));
        out
    }

    pub fn load(path: impl AsRef<Path>, split: Split) -> Result<Self, CorpusError> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        parse_corpus(BufReader::new(file), split).map_err(|e| match e {
            CorpusError::Io { source, .. } => CorpusError::Io {
                path: path.display().to_string(),
                source,
            },
            other => other,
        })
    }
}

/// Reads a JSONL corpus. Blank lines are skipped; line numbers in errors are
/// 1-based physical lines.
pub fn parse_corpus(source: impl BufRead, split: Split) -> Result<Corpus, CorpusError> {
    let mut sentences = Vec::new();
    let mut index = HashMap::new();
    for (n, line) in source.lines().enumerate() {
        let line_no = n + 1;
        let line = line.map_err(|source| CorpusError::Io {
            path: "<stream>".into(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: SentenceRecord =
            serde_json::from_str(&line).map_err(|source| CorpusError::Malformed {
                line: line_no,
                source,
            })?;
        let key = SentenceKey::new(record.doc_id.clone(), record.sent_index);
        let mut gold = Vec::with_capacity(record.entities.len());
        for span in record.entities {
            let etype = EntityType::from_tag(&span.tag).ok_or_else(|| CorpusError::UnknownTag {
                line: line_no,
                tag: span.tag.clone(),
                key: key.clone(),
            })?;
            gold.push(EntitySpan::new(span.text, etype, span.start, span.end));
        }
        let sentence = Sentence {
            doc_id: record.doc_id,
            sent_index: record.sent_index,
            text: record.text,
            gold,
        };
        sentence.validate().map_err(|issue| CorpusError::Invalid {
            line: line_no,
            issue,
        })?;
        if index.insert(key.clone(), sentences.len()).is_some() {
            return Err(CorpusError::DuplicateKey { line: line_no, key });
        }
        sentences.push(sentence);
    }
    Ok(Corpus {
        split,
        sentences,
        index,
    })
}

/// Writes the corpus back as JSONL in ingest order.
pub fn write_corpus(corpus: &Corpus, mut out: impl Write) -> std::io::Result<()> {
    for sentence in corpus.sentences() {
        serde_json::to_writer(&mut out, sentence)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_documents: usize,
    pub n_sentences: usize,
    pub n_words: usize,
    pub n_entities: usize,
    pub per_type_counts: BTreeMap<EntityType, usize>,
}

pub fn compute_stats(corpus: &Corpus) -> CorpusStats {
    let mut docs = HashSet::new();
    let mut per_type_counts = BTreeMap::new();
    let mut n_words = 0;
    let mut n_entities = 0;
    for sentence in corpus.sentences() {
        docs.insert(sentence.doc_id.as_str());
        n_words += sentence.word_count();
        for span in &sentence.gold {
            *per_type_counts.entry(span.etype).or_insert(0) += 1;
            n_entities += 1;
        }
    }
    CorpusStats {
        n_documents: docs.len(),
        n_sentences: corpus.len(),
        n_words,
        n_entities,
        per_type_counts,
    }
}

impl fmt::Display for CorpusStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "documents: {}", self.n_documents)?;
        writeln!(f, "sentences: {}", self.n_sentences)?;
        writeln!(f, "words:     {}", self.n_words)?;
        writeln!(f, "entities:  {}", self.n_entities)?;
        for (etype, count) in &self.per_type_counts {
            writeln!(f, "  {:<24} {}", etype.tag(), count)?;
        }
        Ok(())
    }
}

/// Renders the sentence with each gold span wrapped as `<tag>text</tag>`.
/// Stripping the tags reproduces the original text exactly.
pub fn serialize_markup(sentence: &Sentence) -> String {
    render_markup(&sentence.text, sentence.gold.iter().map(|s| (s.start, s.end, s.etype.tag())))
}

/// Wraps flat, non-overlapping `(start, end, tag)` spans in `text`.
pub(crate) fn render_markup<'a>(
    text: &str,
    spans: impl IntoIterator<Item = (usize, usize, &'a str)>,
) -> String {
    let mut spans: Vec<_> = spans.into_iter().collect();
    spans.sort_by_key(|&(start, end, _)| (start, end));
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len() + spans.len() * 32);
    let mut cursor = 0;
    for (start, end, tag) in spans {
        out.extend(&chars[cursor..start]);
        out.push('<');
        out.push_str(tag);
        out.push('>');
        out.extend(&chars[start..end]);
        out.push_str("</");
        out.push_str(tag);
        out.push('>');
        cursor = end;
    }
    out.extend(&chars[cursor..]);
    out
}

/// One fine-tuning record: the baseline prompt filled with the raw sentence,
/// and the annotated sentence as target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub unprocessed: String,
    pub processed: String,
}

/// One pair per sentence, ordered by `(doc_id, sent_index)`.
pub fn export_training_pairs(
    corpus: &Corpus,
    prompts: &PromptBuilder,
) -> Result<Vec<TrainingPair>, PromptError> {
    corpus
        .sorted()
        .into_iter()
        .map(|sentence| {
            Ok(TrainingPair {
                unprocessed: prompts.build_baseline(sentence)?.text,
                processed: serialize_markup(sentence),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn smoking() -> Sentence {
        Sentence {
            doc_id: "d1".into(),
            sent_index: 0,
            text: "Patient denies smoking .".into(),
            gold: vec![EntitySpan::new("smoking", EntityType::TobaccoUse, 15, 22)],
        }
    }

    #[test]
    fn tag_set_is_closed_and_unique() {
        let tags: HashSet<_> = EntityType::ALL.iter().map(|t| t.tag()).collect();
        assert_eq!(tags.len(), 18);
        for t in EntityType::ALL {
            assert_eq!(EntityType::from_tag(t.tag()), Some(t));
        }
        assert_eq!(EntityType::from_tag("medication"), None);
        assert_eq!(EntityType::from_tag("DX_NAME"), None);
        assert_eq!(EntityType::from_tag("dxname"), None);
    }

    #[test]
    fn parses_single_line() {
        let line = r#"{"doc_id":"d1","sent_index":0,"text":"Patient denies smoking .","entities":[{"text":"smoking","type":"tobacco_use","start":15,"end":22}]}"#;
        let corpus = parse_corpus(line.as_bytes(), Split::Train).unwrap();
        assert_eq!(corpus.len(), 1);
        assert_eq!(corpus.sentences()[0], smoking());
    }

    #[test]
    fn empty_stream_is_empty_corpus() {
        let corpus = parse_corpus(&b""[..], Split::Test).unwrap();
        assert!(corpus.is_empty());
    }

    #[test]
    fn rejects_unknown_tag() {
        let line = r#"{"doc_id":"d1","sent_index":0,"text":"aspirin given","entities":[{"text":"aspirin","type":"medication","start":0,"end":7}]}"#;
        let err = parse_corpus(line.as_bytes(), Split::Train).unwrap_err();
        assert!(matches!(err, CorpusError::UnknownTag { line: 1, ref tag, .. } if tag == "medication"));
        assert!(err.to_string().contains("unknown entity tag"));
    }

    #[test]
    fn rejects_slice_mismatch_with_both_texts() {
        let line = r#"{"doc_id":"d1","sent_index":0,"text":"Patient denies smoking .","entities":[{"text":"smoking","type":"tobacco_use","start":14,"end":21}]}"#;
        let err = parse_corpus(line.as_bytes(), Split::Train).unwrap_err().to_string();
        assert!(err.contains("expected \"smoking\""), "{err}");
        assert!(err.contains("actual slice \" smokin\""), "{err}");
    }

    #[test]
    fn rejects_malformed_with_line_number() {
        let src = "\n{\"doc_id\":\"d1\",\"sent_index\":0,\"text\":\"x\",\"entities\":[]}\n{not json\n";
        let err = parse_corpus(src.as_bytes(), Split::Train).unwrap_err();
        assert!(matches!(err, CorpusError::Malformed { line: 3, .. }));
    }

    #[test]
    fn rejects_duplicates_and_overlaps() {
        let a = r#"{"doc_id":"d1","sent_index":0,"text":"x","entities":[]}"#;
        let err = parse_corpus(format!("{a}\n{a}\n").as_bytes(), Split::Train).unwrap_err();
        assert!(matches!(err, CorpusError::DuplicateKey { line: 2, .. }));

        let nested = r#"{"doc_id":"d1","sent_index":4,"text":"chest pain","entities":[{"text":"chest pain","type":"dx_name","start":0,"end":10},{"text":"chest","type":"system_organ_site","start":0,"end":5}]}"#;
        let err = parse_corpus(nested.as_bytes(), Split::Train).unwrap_err();
        assert_eq!(err.to_string(), "line 1: overlapping gold spans at d1#4");
    }

    #[test]
    fn rejects_line_breaks_and_empty_spans() {
        let mut s = smoking();
        s.text = "Patient denies\nsmoking .".into();
        assert!(matches!(s.validate(), Err(SentenceIssue::LineBreak { .. })));
        let mut s = smoking();
        s.gold[0].end = 15;
        assert!(matches!(s.validate(), Err(SentenceIssue::OutOfBounds { .. })));
    }

    #[test]
    fn stats_count_whitespace_words() {
        let s = Sentence {
            doc_id: "d".into(),
            sent_index: 0,
            text: "a b  c".into(),
            gold: vec![],
        };
        let stats = compute_stats(&Corpus::from_sentences(Split::Train, vec![s]).unwrap());
        assert_eq!(stats.n_words, 3);
        assert_eq!(stats.n_entities, 0);
    }

    #[test]
    fn stats_count_types() {
        let a = Sentence {
            doc_id: "d1".into(),
            sent_index: 0,
            text: "flu and cough".into(),
            gold: vec![
                EntitySpan::new("flu", EntityType::DxName, 0, 3),
                EntitySpan::new("cough", EntityType::DxName, 8, 13),
            ],
        };
        let b = Sentence {
            doc_id: "d2".into(),
            sent_index: 0,
            text: "ECG done".into(),
            gold: vec![EntitySpan::new("ECG", EntityType::TestName, 0, 3)],
        };
        let stats = compute_stats(&Corpus::from_sentences(Split::Train, vec![a, b]).unwrap());
        assert_eq!(stats.n_entities, 3);
        assert_eq!(stats.n_documents, 2);
        assert_eq!(stats.per_type_counts[&EntityType::DxName], 2);
        assert_eq!(stats.per_type_counts[&EntityType::TestName], 1);
        assert_eq!(stats.per_type_counts.values().sum::<usize>(), stats.n_entities);
    }

    #[test]
    fn markup_wraps_spans() {
        assert_eq!(
            serialize_markup(&smoking()),
            "Patient denies <tobacco_use>smoking</tobacco_use> ."
        );
        let mut bare = smoking();
        bare.gold.clear();
        assert_eq!(serialize_markup(&bare), bare.text);
    }

    #[test]
    fn markup_handles_adjacent_spans() {
        let s = Sentence {
            doc_id: "d".into(),
            sent_index: 1,
            text: "aspirin81mg".into(),
            gold: vec![
                EntitySpan::new("81mg", EntityType::GenericName, 7, 11),
                EntitySpan::new("aspirin", EntityType::BrandName, 0, 7),
            ],
        };
        assert_eq!(
            serialize_markup(&s),
            "<brand_name>aspirin</brand_name><generic_name>81mg</generic_name>"
        );
    }

    #[test]
    fn keys_round_trip_through_strings() {
        let key: SentenceKey = "doc#7#12".parse().unwrap();
        assert_eq!(key, SentenceKey::new("doc#7", 12));
        assert_eq!(key.to_string(), "doc#7#12");
        assert!("nohash".parse::<SentenceKey>().is_err());
        assert!(SentenceKey::new("a", 10) > SentenceKey::new("a", 9));
    }
}
