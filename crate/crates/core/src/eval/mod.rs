//! Exact-match scoring with a character tolerance on span boundaries.
//!
//! A prediction matches a gold span when the span texts are identical, the
//! types are identical, and both boundaries lie within `offset_tolerance`
//! characters. Matching is one-to-one and greedy: predictions are visited in
//! ascending `(start, end, type)` order and each takes the first unconsumed
//! gold span it matches. Unanchored and invalid-type predictions never
//! match. Metrics are micro-averaged over entity instances.

mod wilcoxon;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::{EntitySpan, EntityType, SentenceKey};
use crate::markup::{ParseOutcome, RawPrediction};

pub use wilcoxon::{wilcoxon_signed_rank, StatsError, WilcoxonMethod, WilcoxonResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchRule {
    pub offset_tolerance: usize,
}

impl Default for MatchRule {
    fn default() -> Self {
        Self { offset_tolerance: 2 }
    }
}

pub fn is_match(pred: &RawPrediction, gold: &EntitySpan, rule: MatchRule) -> bool {
    let Some((start, end)) = pred.anchor else {
        return false;
    };
    pred.etype() == Some(gold.etype)
        && pred.text == gold.text
        && start.abs_diff(gold.start) <= rule.offset_tolerance
        && end.abs_diff(gold.end) <= rule.offset_tolerance
}

/// Indices into the prediction and gold slices handed to [`match_sentence`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceMatch {
    pub tp_pairs: Vec<(usize, usize)>,
    pub fps: Vec<usize>,
    pub fns: Vec<usize>,
}

pub fn match_sentence(preds: &[RawPrediction], golds: &[EntitySpan], rule: MatchRule) -> SentenceMatch {
    let mut pred_order: Vec<usize> = (0..preds.len()).collect();
    pred_order.sort_by(|&a, &b| {
        let key = |p: &RawPrediction| (p.anchor.is_none(), p.anchor, p.tag.clone());
        key(&preds[a]).cmp(&key(&preds[b])).then(a.cmp(&b))
    });
    let mut gold_order: Vec<usize> = (0..golds.len()).collect();
    gold_order.sort_by_key(|&i| (golds[i].start, golds[i].end, golds[i].etype, i));

    let mut consumed = vec![false; golds.len()];
    let mut out = SentenceMatch::default();
    for pi in pred_order {
        let hit = gold_order
            .iter()
            .copied()
            .find(|&gi| !consumed[gi] && is_match(&preds[pi], &golds[gi], rule));
        match hit {
            Some(gi) => {
                consumed[gi] = true;
                out.tp_pairs.push((pi, gi));
            }
            None => out.fps.push(pi),
        }
    }
    out.fns = gold_order.into_iter().filter(|&gi| !consumed[gi]).collect();
    out.tp_pairs.sort_unstable();
    out.fps.sort_unstable();
    out
}

/// Additive true-positive / false-positive / false-negative counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl std::ops::AddAssign for Counts {
    fn add_assign(&mut self, rhs: Self) {
        self.tp += rhs.tp;
        self.fp += rhs.fp;
        self.fn_ += rhs.fn_;
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Metrics {
    /// 0/0 is taken as 0 for precision, recall and F1 alike.
    pub fn from_counts(c: Counts) -> Self {
        let precision = ratio(c.tp, c.tp + c.fp);
        let recall = ratio(c.tp, c.tp + c.fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            tp: c.tp,
            fp: c.fp,
            fn_: c.fn_,
            precision,
            recall,
            f1,
        }
    }

    pub fn counts(&self) -> Counts {
        Counts {
            tp: self.tp,
            fp: self.fp,
            fn_: self.fn_,
        }
    }
}

/// A sentence after parsing and matching.
#[derive(Debug, Clone)]
pub struct ScoredSentence {
    pub key: SentenceKey,
    pub outcome: ParseOutcome,
    pub gold: Vec<EntitySpan>,
    pub matching: SentenceMatch,
}

impl ScoredSentence {
    pub fn score(key: SentenceKey, outcome: ParseOutcome, gold: Vec<EntitySpan>, rule: MatchRule) -> Self {
        let matching = match_sentence(&outcome.predictions, &gold, rule);
        Self {
            key,
            outcome,
            gold,
            matching,
        }
    }

    pub fn counts(&self) -> Counts {
        Counts {
            tp: self.matching.tp_pairs.len(),
            fp: self.matching.fps.len(),
            fn_: self.matching.fns.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub overall: Metrics,
    pub per_type: BTreeMap<EntityType, Metrics>,
    pub invalid_count: usize,
    pub invalid_pct: f64,
    pub n_sentences: usize,
    pub config_digest: String,
    pub template_digest: String,
    pub harness_version: String,
}

/// Digests carried into a report for provenance.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_digest: String,
    pub template_digest: String,
    pub harness_version: String,
}

/// Micro-aggregates matched sentences. Invalid-type predictions count as
/// false positives overall and are also reported through `invalid_pct`,
/// taken over every prediction including unanchored ones.
pub fn aggregate(sentences: &[ScoredSentence], provenance: &Provenance) -> Report {
    let mut overall = Counts::default();
    let mut per_type: BTreeMap<EntityType, Counts> =
        EntityType::ALL.into_iter().map(|t| (t, Counts::default())).collect();
    let mut invalid_count = 0;
    let mut n_predictions = 0;

    for s in sentences {
        overall += s.counts();
        invalid_count += s.outcome.invalid_count();
        n_predictions += s.outcome.predictions.len();
        for &(_, gi) in &s.matching.tp_pairs {
            per_type.get_mut(&s.gold[gi].etype).expect("all types present").tp += 1;
        }
        for &gi in &s.matching.fns {
            per_type.get_mut(&s.gold[gi].etype).expect("all types present").fn_ += 1;
        }
        for &pi in &s.matching.fps {
            if let Some(t) = s.outcome.predictions[pi].etype() {
                per_type.get_mut(&t).expect("all types present").fp += 1;
            }
        }
    }

    Report {
        overall: Metrics::from_counts(overall),
        per_type: per_type.into_iter().map(|(t, c)| (t, Metrics::from_counts(c))).collect(),
        invalid_count,
        invalid_pct: 100.0 * ratio(invalid_count, n_predictions),
        n_sentences: sentences.len(),
        config_digest: provenance.config_digest.clone(),
        template_digest: provenance.template_digest.clone(),
        harness_version: provenance.harness_version.clone(),
    }
}

/// Counts and F1 for one document; the pairing unit for run comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocScore {
    pub doc_id: String,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub f1: f64,
}

/// Per-document scores ordered by document id.
pub fn doc_scores(sentences: &[ScoredSentence]) -> Vec<DocScore> {
    let mut by_doc: BTreeMap<&str, Counts> = BTreeMap::new();
    for s in sentences {
        *by_doc.entry(s.key.doc_id.as_str()).or_default() += s.counts();
    }
    by_doc
        .into_iter()
        .map(|(doc, c)| DocScore {
            doc_id: doc.to_string(),
            tp: c.tp,
            fp: c.fp,
            fn_: c.fn_,
            f1: Metrics::from_counts(c).f1,
        })
        .collect()
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn row(f: &mut fmt::Formatter<'_>, label: &str, m: &Metrics) -> fmt::Result {
            writeln!(
                f,
                "{:<24} {:>6} {:>6} {:>6} {:>9.4} {:>9.4} {:>9.4}",
                label, m.tp, m.fp, m.fn_, m.precision, m.recall, m.f1
            )
        }
        writeln!(
            f,
            "{:<24} {:>6} {:>6} {:>6} {:>9} {:>9} {:>9}",
            "type", "tp", "fp", "fn", "precision", "recall", "f1"
        )?;
        writeln!(f, "{}", "-".repeat(73))?;
        for (t, m) in &self.per_type {
            row(f, t.tag(), m)?;
        }
        writeln!(f, "{}", "-".repeat(73))?;
        row(f, "overall", &self.overall)?;
        writeln!(f)?;
        writeln!(f, "sentences:       {}", self.n_sentences)?;
        writeln!(f, "invalid entities: {} ({:.2}%)", self.invalid_count, self.invalid_pct)?;
        writeln!(f, "config digest:   {}", self.config_digest)?;
        writeln!(f, "template digest: {}", self.template_digest)?;
        writeln!(f, "harness version: {}", self.harness_version)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pred(text: &str, tag: &str, start: usize, end: usize) -> RawPrediction {
        RawPrediction {
            text: text.into(),
            tag: tag.into(),
            anchor: Some((start, end)),
        }
    }

    fn gold(text: &str, etype: EntityType, start: usize, end: usize) -> EntitySpan {
        EntitySpan::new(text, etype, start, end)
    }

    #[test]
    fn tolerance_boundary() {
        let g = gold("smoking", EntityType::TobaccoUse, 15, 22);
        let rule = MatchRule::default();
        assert!(is_match(&pred("smoking", "tobacco_use", 15, 22), &g, rule));
        assert!(is_match(&pred("smoking", "tobacco_use", 17, 24), &g, rule));
        assert!(is_match(&pred("smoking", "tobacco_use", 13, 20), &g, rule));
        assert!(!is_match(&pred("smoking", "tobacco_use", 18, 25), &g, rule));
        assert!(!is_match(&pred("smoking", "tobacco_use", 15, 25), &g, rule));
        assert!(!is_match(&pred("Smoking", "tobacco_use", 15, 22), &g, rule));
        assert!(!is_match(&pred("smoking", "rec_drug_use", 15, 22), &g, rule));
        let mut unanchored = pred("smoking", "tobacco_use", 0, 0);
        unanchored.anchor = None;
        assert!(!is_match(&unanchored, &g, rule));
        assert!(is_match(&pred("smoking", "tobacco_use", 18, 25), &g, MatchRule { offset_tolerance: 3 }));
    }

    #[test]
    fn three_preds_two_matchable() {
        let golds = vec![
            gold("flu", EntityType::DxName, 0, 3),
            gold("ECG", EntityType::TestName, 10, 13),
            gold("aspirin", EntityType::GenericName, 20, 27),
        ];
        let preds = vec![
            pred("flu", "dx_name", 0, 3),
            pred("ECG", "test_name", 11, 14),
            pred("aspirin", "brand_name", 20, 27),
        ];
        let m = match_sentence(&preds, &golds, MatchRule::default());
        assert_eq!(m.tp_pairs, vec![(0, 0), (1, 1)]);
        assert_eq!(m.fps, vec![2]);
        assert_eq!(m.fns, vec![2]);
    }

    #[test]
    fn empty_predictions_are_all_false_negatives() {
        let golds = vec![gold("a", EntityType::Gender, 0, 1), gold("b", EntityType::Gender, 2, 3)];
        let m = match_sentence(&[], &golds, MatchRule::default());
        assert!(m.tp_pairs.is_empty() && m.fps.is_empty());
        assert_eq!(m.fns.len(), 2);
    }

    #[test]
    fn duplicate_predictions_consume_once() {
        let golds = vec![gold("flu", EntityType::DxName, 4, 7)];
        let preds = vec![pred("flu", "dx_name", 4, 7), pred("flu", "dx_name", 5, 8)];
        let m = match_sentence(&preds, &golds, MatchRule::default());
        assert_eq!(m.tp_pairs, vec![(0, 0)]);
        assert_eq!(m.fps, vec![1]);
    }

    #[test]
    fn metrics_hand_check() {
        let m = Metrics::from_counts(Counts { tp: 2, fp: 1, fn_: 1 });
        for v in [m.precision, m.recall, m.f1] {
            assert!((v - 2.0 / 3.0).abs() < 1e-9);
        }
        let zero = Metrics::from_counts(Counts { tp: 0, fp: 0, fn_: 5 });
        assert_eq!((zero.precision, zero.recall, zero.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn aggregate_splits_by_type_and_counts_invalid() {
        use crate::markup::parse_and_anchor;
        let text = "flu and ECG";
        let golds = vec![gold("flu", EntityType::DxName, 0, 3), gold("ECG", EntityType::TestName, 8, 11)];
        let outcome = parse_and_anchor("<dx_name>flu</dx_name> and <lab>ECG</lab>", text);
        let scored = ScoredSentence::score(SentenceKey::new("d", 0), outcome, golds, MatchRule::default());
        let r = aggregate(&[scored], &Provenance::default());
        assert_eq!(r.overall.counts(), Counts { tp: 1, fp: 1, fn_: 1 });
        assert_eq!(r.per_type[&EntityType::DxName].tp, 1);
        assert_eq!(r.per_type[&EntityType::TestName].fn_, 1);
        assert_eq!(r.per_type.values().map(|m| m.fp).sum::<usize>(), 0);
        assert_eq!(r.invalid_count, 1);
        assert_eq!(r.invalid_pct, 50.0);
        assert_eq!(r.per_type.len(), 18);
    }

    #[test]
    fn empty_run_has_zero_invalid_pct() {
        let r = aggregate(&[], &Provenance::default());
        assert_eq!(r.invalid_pct, 0.0);
        assert_eq!(r.overall.f1, 0.0);
    }
}
