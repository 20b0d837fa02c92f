//! Parsing of inline `<tag>…</tag>` model output back into offset-anchored
//! predictions.
//!
//! Parsing is total: any input, including garbage, yields a result plus
//! diagnostics. Tags are `<name>` / `</name>` with `name` in `[a-z0-9_]+`.
//! Only outermost pairs become spans; tags nested inside them are stripped
//! and reported. Unpaired tags are stripped and reported.
//!
//! Anchoring maps spans from the cleaned output onto the original sentence:
//!
//! 1. cleaned text equals the input: offsets pass through;
//! 2. equal after whitespace normalisation: offsets go through the
//!    normalisation alignment;
//! 3. otherwise the sentence was altered: each span text is searched in the
//!    input and anchored at the occurrence nearest its predicted start, or
//!    left unanchored.

use serde::{Deserialize, Serialize};

use crate::corpus::{EntitySpan, EntityType};
use crate::text::{char_slice, Normalized};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticKind {
    UnbalancedTag,
    NestedTag,
    AlteredSentence,
    UnanchoredSpan,
}

/// A parsing or anchoring problem. `position` is a character offset into
/// the raw model output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub fragment: String,
    pub position: usize,
}

/// A span located in cleaned-text coordinates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedSpan {
    pub text: String,
    pub tag: String,
    pub start: usize,
    pub end: usize,
    /// Offset of the span content in the raw output.
    pub raw_start: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkupParse {
    pub clean_text: String,
    pub spans: Vec<TaggedSpan>,
    pub diagnostics: Vec<Diagnostic>,
}

/// A predicted entity. `anchor` is `None` when the span could not be located
/// in the original sentence; such predictions can only score as false
/// positives.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawPrediction {
    pub text: String,
    pub tag: String,
    pub anchor: Option<(usize, usize)>,
}

impl RawPrediction {
    pub fn etype(&self) -> Option<EntityType> {
        EntityType::from_tag(&self.tag)
    }

    pub fn start(&self) -> Option<usize> {
        self.anchor.map(|a| a.0)
    }

    pub fn end(&self) -> Option<usize> {
        self.anchor.map(|a| a.1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorPath {
    Identity,
    Whitespace,
    Altered,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseOutcome {
    pub predictions: Vec<RawPrediction>,
    /// Indices into `predictions` whose tag is outside the closed type set.
    pub invalid_tag_predictions: Vec<usize>,
    pub diagnostics: Vec<Diagnostic>,
    pub path: AnchorPath,
}

impl ParseOutcome {
    pub fn invalid_count(&self) -> usize {
        self.invalid_tag_predictions.len()
    }

    /// True when the anchored predictions are exactly `gold` (same texts,
    /// types and offsets) with no diagnostics.
    pub fn recovers(&self, gold: &[EntitySpan]) -> bool {
        if !self.diagnostics.is_empty() || self.predictions.len() != gold.len() {
            return false;
        }
        let mut got: Vec<_> = self
            .predictions
            .iter()
            .map(|p| (p.anchor, p.etype(), p.text.as_str()))
            .collect();
        let mut want: Vec<_> = gold
            .iter()
            .map(|g| (Some((g.start, g.end)), Some(g.etype), g.text.as_str()))
            .collect();
        got.sort();
        want.sort();
        got == want
    }
}

#[derive(Debug, Clone, Copy)]
struct TagToken {
    closing: bool,
    name_start: usize,
    name_end: usize,
    start: usize,
    end: usize,
}

/// Recognises a tag starting at `chars[i] == '<'`.
fn tag_at(chars: &[char], i: usize) -> Option<TagToken> {
    let mut j = i + 1;
    let closing = chars.get(j) == Some(&'/');
    if closing {
        j += 1;
    }
    let name_start = j;
    while chars
        .get(j)
        .is_some_and(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || *c == '_')
    {
        j += 1;
    }
    if j == name_start || chars.get(j) != Some(&'>') {
        return None;
    }
    Some(TagToken {
        closing,
        name_start,
        name_end: j,
        start: i,
        end: j + 1,
    })
}

/// Tags in a sequence of `(raw_index, char)`, in order.
fn scan_tags(seq: &[char]) -> Vec<TagToken> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < seq.len() {
        if seq[i] == '<' {
            if let Some(tok) = tag_at(seq, i) {
                out.push(tok);
                i = tok.end;
                continue;
            }
        }
        i += 1;
    }
    out
}

/// Splits tags from text. Total over arbitrary input.
pub fn parse_markup(raw: &str) -> MarkupParse {
    let chars: Vec<char> = raw.chars().collect();
    let tokens = scan_tags(&chars);
    let name = |t: &TagToken| -> String { chars[t.name_start..t.name_end].iter().collect() };
    let fragment = |t: &TagToken| -> String { chars[t.start..t.end].iter().collect() };

    let mut diagnostics = Vec::new();
    let mut removed = vec![false; chars.len()];
    for t in &tokens {
        removed[t.start..t.end].iter_mut().for_each(|r| *r = true);
    }

    // pair tags with a stack; an unmatched close or an open left behind by
    // a close further down the stack is unbalanced
    let mut stack: Vec<usize> = Vec::new();
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    let mut unbalanced: Vec<usize> = Vec::new();
    for (ti, tok) in tokens.iter().enumerate() {
        if !tok.closing {
            stack.push(ti);
            continue;
        }
        let tag_name = name(tok);
        match stack.iter().rposition(|&oi| name(&tokens[oi]) == tag_name) {
            Some(pos) => {
                unbalanced.extend(stack.drain(pos + 1..));
                let open = stack.pop().expect("position within stack");
                pairs.push((open, ti));
            }
            None => unbalanced.push(ti),
        }
    }
    unbalanced.extend(stack);

    // pairs from a stack are properly nested; keep the outermost
    pairs.sort_by_key(|&(o, _)| tokens[o].start);
    let mut outer: Vec<(usize, usize)> = Vec::new();
    let mut nested: Vec<(usize, usize)> = Vec::new();
    for &(o, c) in &pairs {
        match outer.last() {
            Some(&(_, oc)) if tokens[o].start < tokens[oc].start => nested.push((o, c)),
            _ => outer.push((o, c)),
        }
    }

    let mut positioned: Vec<Diagnostic> = Vec::new();
    for &(o, _) in &nested {
        positioned.push(Diagnostic {
            kind: DiagnosticKind::NestedTag,
            fragment: fragment(&tokens[o]),
            position: tokens[o].start,
        });
    }
    for &ti in &unbalanced {
        positioned.push(Diagnostic {
            kind: DiagnosticKind::UnbalancedTag,
            fragment: fragment(&tokens[ti]),
            position: tokens[ti].start,
        });
    }

    // removing tags can splice new tag-shaped text together ("<<b>x>");
    // strip those too until none remain
    loop {
        let kept: Vec<usize> = (0..chars.len()).filter(|&i| !removed[i]).collect();
        let view: Vec<char> = kept.iter().map(|&i| chars[i]).collect();
        let residual = scan_tags(&view);
        if residual.is_empty() {
            break;
        }
        for t in residual {
            let frag: String = view[t.start..t.end].iter().collect();
            positioned.push(Diagnostic {
                kind: DiagnosticKind::UnbalancedTag,
                fragment: frag,
                position: kept[t.start],
            });
            for &raw_i in &kept[t.start..t.end] {
                removed[raw_i] = true;
            }
        }
    }
    positioned.sort_by_key(|d| d.position);
    diagnostics.extend(positioned);

    // kept_before[i] = number of kept chars in raw[..i]
    let mut kept_before = Vec::with_capacity(chars.len() + 1);
    let mut count = 0;
    kept_before.push(0);
    for &r in &removed {
        if !r {
            count += 1;
        }
        kept_before.push(count);
    }
    let clean: Vec<char> = chars
        .iter()
        .zip(&removed)
        .filter(|(_, &r)| !r)
        .map(|(&c, _)| c)
        .collect();

    let spans = outer
        .iter()
        .map(|&(o, c)| {
            let raw_start = tokens[o].end;
            let start = kept_before[raw_start];
            let end = kept_before[tokens[c].start];
            TaggedSpan {
                text: clean[start..end].iter().collect(),
                tag: name(&tokens[o]),
                start,
                end,
                raw_start,
            }
        })
        .collect();

    MarkupParse {
        clean_text: clean.into_iter().collect(),
        spans,
        diagnostics,
    }
}

/// First and one-past-last non-whitespace character offsets in `[start, end)`.
fn trim_range(chars: &[char], start: usize, end: usize) -> Option<(usize, usize)> {
    let s = (start..end).find(|&i| !chars[i].is_whitespace())?;
    let e = (start..end).rev().find(|&i| !chars[i].is_whitespace())? + 1;
    Some((s, e))
}

/// Character offsets of every occurrence of `needle` in `hay`.
fn occurrences(hay: &[char], needle: &[char]) -> Vec<usize> {
    if needle.is_empty() || needle.len() > hay.len() {
        return Vec::new();
    }
    hay.windows(needle.len())
        .enumerate()
        .filter(|(_, w)| *w == needle)
        .map(|(i, _)| i)
        .collect()
}

/// Maps cleaned-text spans onto `original`.
pub fn anchor_predictions(parsed: &MarkupParse, original: &str) -> ParseOutcome {
    let mut diagnostics = parsed.diagnostics.clone();
    let clean: Vec<char> = parsed.clean_text.chars().collect();
    let orig: Vec<char> = original.chars().collect();

    let unanchored = |span: &TaggedSpan, diagnostics: &mut Vec<Diagnostic>| {
        diagnostics.push(Diagnostic {
            kind: DiagnosticKind::UnanchoredSpan,
            fragment: span.text.clone(),
            position: span.raw_start,
        });
        RawPrediction {
            text: span.text.clone(),
            tag: span.tag.clone(),
            anchor: None,
        }
    };

    let (path, predictions) = if parsed.clean_text == original {
        let preds = parsed
            .spans
            .iter()
            .map(|span| {
                if span.start < span.end {
                    RawPrediction {
                        text: span.text.clone(),
                        tag: span.tag.clone(),
                        anchor: Some((span.start, span.end)),
                    }
                } else {
                    unanchored(span, &mut diagnostics)
                }
            })
            .collect();
        (AnchorPath::Identity, preds)
    } else {
        let norm_clean = Normalized::new(&parsed.clean_text);
        let norm_orig = Normalized::new(original);
        if norm_clean.chars == norm_orig.chars {
            let preds = parsed
                .spans
                .iter()
                .map(|span| {
                    let Some((s, e)) = trim_range(&clean, span.start, span.end) else {
                        return unanchored(span, &mut diagnostics);
                    };
                    // non-whitespace characters always survive normalisation
                    let i = norm_clean.origin.binary_search(&s).expect("non-ws char");
                    let j = norm_clean.origin.binary_search(&(e - 1)).expect("non-ws char");
                    let (start, end) = (norm_orig.origin[i], norm_orig.origin[j] + 1);
                    RawPrediction {
                        text: char_slice(original, start, end).unwrap_or_default().to_string(),
                        tag: span.tag.clone(),
                        anchor: Some((start, end)),
                    }
                })
                .collect();
            (AnchorPath::Whitespace, preds)
        } else {
            diagnostics.push(Diagnostic {
                kind: DiagnosticKind::AlteredSentence,
                fragment: parsed.clean_text.clone(),
                position: 0,
            });
            let preds = parsed
                .spans
                .iter()
                .map(|span| {
                    let Some((s, e)) = trim_range(&clean, span.start, span.end) else {
                        return unanchored(span, &mut diagnostics);
                    };
                    let needle = &clean[s..e];
                    let nearest = occurrences(&orig, needle)
                        .into_iter()
                        .min_by_key(|&at| (at.abs_diff(s), at));
                    match nearest {
                        Some(at) => RawPrediction {
                            text: needle.iter().collect(),
                            tag: span.tag.clone(),
                            anchor: Some((at, at + needle.len())),
                        },
                        None => unanchored(span, &mut diagnostics),
                    }
                })
                .collect();
            (AnchorPath::Altered, preds)
        }
    };

    ParseOutcome {
        predictions,
        invalid_tag_predictions: Vec::new(),
        diagnostics,
        path,
    }
}

/// Marks predictions whose tag is outside the closed type set. Nothing is
/// removed and no tag repair is attempted.
pub fn validate_tags(mut outcome: ParseOutcome) -> ParseOutcome {
    outcome.invalid_tag_predictions = outcome
        .predictions
        .iter()
        .enumerate()
        .filter(|(_, p)| p.etype().is_none())
        .map(|(i, _)| i)
        .collect();
    outcome
}

/// `parse_markup`, `anchor_predictions` and `validate_tags` in sequence.
pub fn parse_and_anchor(raw: &str, original: &str) -> ParseOutcome {
    validate_tags(anchor_predictions(&parse_markup(raw), original))
}
