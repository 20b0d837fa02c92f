//! Prompt assembly.
//!
//! Wording lives in plain-text template files (see `templates/v1/`); the
//! builder only fills placeholders. A template set is a directory with:
//!
//! | file                    | placeholders                                          |
//! |-------------------------|-------------------------------------------------------|
//! | `baseline.txt`          | task_description, markup_guidelines, entity_definitions, input |
//! | `strict.txt`            | the above plus strict_guidelines, examples            |
//! | `task_description.txt`  | none                                                  |
//! | `markup_guidelines.txt` | none                                                  |
//! | `strict_guidelines.txt` | none                                                  |
//! | `examples_header.txt`   | none                                                  |
//! | `example_item.txt`      | example_input, example_output                         |
//!
//! Placeholders are written `{{name}}` and are substituted in a single pass,
//! so sentence text containing braces is never re-expanded.

use std::collections::BTreeMap;
use std::fmt;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{serialize_markup, EntityType, Sentence, SentenceKey};
use crate::digest::{sha256_hex, sha256_parts};
use crate::markup;

/// Upper bound on in-prompt examples.
pub const MAX_EXAMPLES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptVariant {
    Baseline,
    Strict,
}

impl fmt::Display for PromptVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PromptVariant::Baseline => "baseline",
            PromptVariant::Strict => "strict",
        })
    }
}

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("no definition for entity type {0}")]
    MissingDefinition(EntityType),
    #[error("definitions line {line}: {reason}")]
    BadDefinition { line: usize, reason: String },
    #[error("template {file}: {reason}")]
    BadTemplate { file: &'static str, reason: String },
    #[error("{count} examples exceeds the maximum of {MAX_EXAMPLES}")]
    TooManyExamples { count: usize },
    #[error("example {key} cannot be used: {reason}")]
    InvalidExample { key: SentenceKey, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Entity definitions keyed by type, rendered one line per type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Definitions {
    entries: BTreeMap<EntityType, String>,
}

#[derive(Deserialize)]
struct DefinitionRecord {
    #[serde(rename = "type")]
    tag: String,
    definition: String,
}

const SHIPPED_DEFINITIONS: &str = include_str!("../data/entity_definitions.jsonl");

impl Definitions {
    pub fn new(entries: BTreeMap<EntityType, String>) -> Self {
        Self { entries }
    }

    /// One-line placeholder definitions shipped with the harness. They are
    /// not curated annotation guidelines; replace them for real runs.
    pub fn shipped() -> Self {
        Self::parse(SHIPPED_DEFINITIONS.as_bytes()).expect("shipped definitions are valid")
    }

    /// Reads `{"type": ..., "definition": ...}` lines. Unknown or repeated
    /// types are errors; missing types surface when a prompt is built.
    pub fn parse(source: impl BufRead) -> Result<Self, PromptError> {
        let mut entries = BTreeMap::new();
        for (n, line) in source.lines().enumerate() {
            let line_no = n + 1;
            let line = line.map_err(|source| PromptError::Io {
                path: "<definitions>".into(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let record: DefinitionRecord =
                serde_json::from_str(&line).map_err(|e| PromptError::BadDefinition {
                    line: line_no,
                    reason: e.to_string(),
                })?;
            let etype = EntityType::from_tag(&record.tag).ok_or_else(|| PromptError::BadDefinition {
                line: line_no,
                reason: format!("unknown entity tag \"{}\"", record.tag),
            })?;
            if record.definition.contains(['\n', '\r']) {
                return Err(PromptError::BadDefinition {
                    line: line_no,
                    reason: "definition must be a single line".into(),
                });
            }
            if entries.insert(etype, record.definition).is_some() {
                return Err(PromptError::BadDefinition {
                    line: line_no,
                    reason: format!("duplicate definition for {etype}"),
                });
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PromptError> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|source| PromptError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(std::io::BufReader::new(file))
    }

    pub fn get(&self, etype: EntityType) -> Option<&str> {
        self.entries.get(&etype).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn check_complete(&self) -> Result<(), PromptError> {
        match EntityType::ALL.into_iter().find(|t| !self.entries.contains_key(t)) {
            Some(missing) => Err(PromptError::MissingDefinition(missing)),
            None => Ok(()),
        }
    }

    /// `- tag: definition` lines in canonical type order, no trailing newline.
    fn render(&self) -> String {
        EntityType::ALL
            .into_iter()
            .filter_map(|t| self.entries.get(&t).map(|d| format!("- {}: {}", t.tag(), d)))
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn digest(&self) -> String {
        sha256_hex(self.render())
    }
}

/// A complete set of prompt wording.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    pub baseline: String,
    pub strict: String,
    pub task_description: String,
    pub markup_guidelines: String,
    pub strict_guidelines: String,
    pub examples_header: String,
    pub example_item: String,
}

const FILES: [&str; 7] = [
    "baseline.txt",
    "strict.txt",
    "task_description.txt",
    "markup_guidelines.txt",
    "strict_guidelines.txt",
    "examples_header.txt",
    "example_item.txt",
];

impl TemplateSet {
    /// The `v1` wording compiled into the binary.
    pub fn shipped() -> Self {
        let set = Self {
            baseline: include_str!("../templates/v1/baseline.txt").into(),
            strict: include_str!("../templates/v1/strict.txt").into(),
            task_description: include_str!("../templates/v1/task_description.txt").into(),
            markup_guidelines: include_str!("../templates/v1/markup_guidelines.txt").into(),
            strict_guidelines: include_str!("../templates/v1/strict_guidelines.txt").into(),
            examples_header: include_str!("../templates/v1/examples_header.txt").into(),
            example_item: include_str!("../templates/v1/example_item.txt").into(),
        };
        set.check().expect("shipped templates are valid");
        set
    }

    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self, PromptError> {
        let dir = dir.as_ref();
        let read = |name: &str| {
            let path = dir.join(name);
            std::fs::read_to_string(&path).map_err(|source| PromptError::Io {
                path: path.display().to_string(),
                source,
            })
        };
        let set = Self {
            baseline: read(FILES[0])?,
            strict: read(FILES[1])?,
            task_description: read(FILES[2])?,
            markup_guidelines: read(FILES[3])?,
            strict_guidelines: read(FILES[4])?,
            examples_header: read(FILES[5])?,
            example_item: read(FILES[6])?,
        };
        set.check()?;
        Ok(set)
    }

    fn parts(&self) -> [(&'static str, &str); 7] {
        [
            (FILES[0], &self.baseline),
            (FILES[1], &self.strict),
            (FILES[2], &self.task_description),
            (FILES[3], &self.markup_guidelines),
            (FILES[4], &self.strict_guidelines),
            (FILES[5], &self.examples_header),
            (FILES[6], &self.example_item),
        ]
    }

    /// Digest over every file, recorded in run headers.
    pub fn digest(&self) -> String {
        sha256_parts(self.parts())
    }

    fn check(&self) -> Result<(), PromptError> {
        const BASE: &[&str] = &["task_description", "markup_guidelines", "entity_definitions", "input"];
        const STRICT: &[&str] = &[
            "task_description",
            "markup_guidelines",
            "entity_definitions",
            "strict_guidelines",
            "examples",
            "input",
        ];
        const ITEM: &[&str] = &["example_input", "example_output"];
        let required: [&[&str]; 7] = [BASE, STRICT, &[], &[], &[], &[], ITEM];
        for ((file, body), names) in self.parts().into_iter().zip(required) {
            let found = placeholders(body).map_err(|reason| PromptError::BadTemplate { file, reason })?;
            for name in &found {
                if !names.contains(&name.as_str()) {
                    return Err(PromptError::BadTemplate {
                        file,
                        reason: format!("unexpected placeholder {{{{{name}}}}}"),
                    });
                }
            }
            for name in names {
                let count = found.iter().filter(|f| f == name).count();
                if count != 1 {
                    return Err(PromptError::BadTemplate {
                        file,
                        reason: format!("placeholder {{{{{name}}}}} must appear exactly once, found {count}"),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Placeholder names in order of appearance.
fn placeholders(template: &str) -> Result<Vec<String>, String> {
    let mut out = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find("{{") {
        let after = &rest[open + 2..];
        let close = after
            .find("}}")
            .ok_or_else(|| "unterminated placeholder".to_string())?;
        out.push(after[..close].to_string());
        rest = &after[close + 2..];
    }
    Ok(out)
}

/// Single-pass substitution; values are inserted verbatim.
fn fill(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + values.iter().map(|v| v.1.len()).sum::<usize>());
    let mut rest = template;
    while let Some(open) = rest.find("{{") {
        out.push_str(&rest[..open]);
        let after = &rest[open + 2..];
        // templates are checked at load, so every opener is closed
        let close = after.find("}}").expect("checked template");
        let name = &after[..close];
        let value = values
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, v)| *v)
            .expect("checked template");
        out.push_str(value);
        rest = &after[close + 2..];
    }
    out.push_str(rest);
    out
}

/// Fragment files usually end with a newline that the skeleton already
/// provides.
fn trim_newline(s: &str) -> &str {
    s.strip_suffix('\n').unwrap_or(s)
}

/// A rendered prompt with enough provenance to audit it later.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssembledPrompt {
    pub text: String,
    pub variant: PromptVariant,
    pub example_keys: Vec<SentenceKey>,
    pub input_key: SentenceKey,
    /// SHA-256 of `text`.
    pub prompt_hash: String,
    /// Character length of the input sentence.
    pub input_chars: usize,
}

#[derive(Debug, Clone)]
pub struct PromptBuilder {
    templates: TemplateSet,
    definitions: Definitions,
}

impl Default for PromptBuilder {
    fn default() -> Self {
        Self::new(TemplateSet::shipped(), Definitions::shipped())
    }
}

impl PromptBuilder {
    pub fn new(templates: TemplateSet, definitions: Definitions) -> Self {
        Self {
            templates,
            definitions,
        }
    }

    pub fn templates(&self) -> &TemplateSet {
        &self.templates
    }

    pub fn definitions(&self) -> &Definitions {
        &self.definitions
    }

    fn assemble(
        &self,
        variant: PromptVariant,
        input: &Sentence,
        text: String,
        example_keys: Vec<SentenceKey>,
    ) -> AssembledPrompt {
        AssembledPrompt {
            prompt_hash: sha256_hex(&text),
            text,
            variant,
            example_keys,
            input_key: input.key(),
            input_chars: input.text.chars().count(),
        }
    }

    /// Task description, markup guidelines, entity definitions, input.
    pub fn build_baseline(&self, input: &Sentence) -> Result<AssembledPrompt, PromptError> {
        self.definitions.check_complete()?;
        let definitions = self.definitions.render();
        let text = fill(
            &self.templates.baseline,
            &[
                ("task_description", trim_newline(&self.templates.task_description)),
                ("markup_guidelines", trim_newline(&self.templates.markup_guidelines)),
                ("entity_definitions", &definitions),
                ("input", &input.text),
            ],
        );
        Ok(self.assemble(PromptVariant::Baseline, input, text, Vec::new()))
    }

    /// Baseline sections plus strict output guidelines and, when `examples`
    /// is non-empty, an examples block in the order given.
    pub fn build_strict(
        &self,
        input: &Sentence,
        examples: &[&Sentence],
    ) -> Result<AssembledPrompt, PromptError> {
        self.definitions.check_complete()?;
        if examples.len() > MAX_EXAMPLES {
            return Err(PromptError::TooManyExamples {
                count: examples.len(),
            });
        }
        let mut block = String::new();
        if !examples.is_empty() {
            block.push_str(&self.templates.examples_header);
            for example in examples {
                let output = checked_markup(example)?;
                block.push_str(&fill(
                    &self.templates.example_item,
                    &[("example_input", &example.text), ("example_output", &output)],
                ));
            }
        }
        let definitions = self.definitions.render();
        let text = fill(
            &self.templates.strict,
            &[
                ("task_description", trim_newline(&self.templates.task_description)),
                ("markup_guidelines", trim_newline(&self.templates.markup_guidelines)),
                ("entity_definitions", &definitions),
                ("strict_guidelines", trim_newline(&self.templates.strict_guidelines)),
                ("examples", &block),
                ("input", &input.text),
            ],
        );
        let keys = examples.iter().map(|e| e.key()).collect();
        Ok(self.assemble(PromptVariant::Strict, input, text, keys))
    }

    pub fn build(
        &self,
        variant: PromptVariant,
        input: &Sentence,
        examples: &[&Sentence],
    ) -> Result<AssembledPrompt, PromptError> {
        match variant {
            PromptVariant::Baseline if examples.is_empty() => self.build_baseline(input),
            PromptVariant::Baseline => Err(PromptError::InvalidExample {
                key: examples[0].key(),
                reason: "the baseline prompt has no examples block".into(),
            }),
            PromptVariant::Strict => self.build_strict(input, examples),
        }
    }
}

/// Example markup, gated on a parse round trip recovering its gold spans.
fn checked_markup(example: &Sentence) -> Result<String, PromptError> {
    let invalid = |reason: String| PromptError::InvalidExample {
        key: example.key(),
        reason,
    };
    example.validate().map_err(|e| invalid(e.to_string()))?;
    let rendered = serialize_markup(example);
    let outcome = markup::parse_and_anchor(&rendered, &example.text);
    if !outcome.recovers(&example.gold) {
        return Err(invalid("markup round trip does not recover the gold spans".into()));
    }
    Ok(rendered)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::EntitySpan;

    fn sentence(doc: &str, text: &str, gold: Vec<EntitySpan>) -> Sentence {
        Sentence {
            doc_id: doc.into(),
            sent_index: 0,
            text: text.into(),
            gold,
        }
    }

    fn input() -> Sentence {
        sentence("t1", "Denies alcohol use , quit smoking in 2010 .", vec![])
    }

    fn example(n: usize) -> Sentence {
        let text = format!("Started metformin {n} days ago .");
        sentence(
            &format!("e{n}"),
            &text,
            vec![EntitySpan::new("metformin", EntityType::GenericName, 8, 17)],
        )
    }

    #[test]
    fn baseline_has_sections_in_order() {
        let p = PromptBuilder::default().build_baseline(&input()).unwrap();
        let pos = |needle: &str| p.text.find(needle).unwrap_or_else(|| panic!("missing {needle}"));
        assert!(pos("### Task Description") < pos("### Entity Markup Guidelines"));
        assert!(pos("### Entity Markup Guidelines") < pos("### Entity Definitions"));
        assert!(pos("### Entity Definitions") < pos("### Input"));
        assert!(p.text.ends_with(&format!("{}\n", input().text)));
        assert_eq!(p.variant, PromptVariant::Baseline);
        assert!(p.example_keys.is_empty());
        assert!(!p.text.contains("### Strict"));
    }

    #[test]
    fn definitions_list_each_tag_once() {
        let p = PromptBuilder::default().build_strict(&input(), &[]).unwrap();
        let start = p.text.find("### Entity Definitions\n").unwrap();
        let section = &p.text[start..];
        let section = &section[..section.find("\n\n").unwrap()];
        for t in EntityType::ALL {
            let lines = section
                .lines()
                .filter(|l| l.starts_with(&format!("- {}:", t.tag())))
                .count();
            assert_eq!(lines, 1, "{t}");
        }
    }

    #[test]
    fn identical_inputs_hash_identically() {
        let b = PromptBuilder::default();
        let a = b.build_strict(&input(), &[&example(1)]).unwrap();
        let c = b.build_strict(&input(), &[&example(1)]).unwrap();
        assert_eq!(a, c);
        assert_eq!(a.prompt_hash, sha256_hex(&a.text));
    }

    #[test]
    fn missing_definition_is_named() {
        let mut defs = Definitions::shipped().entries;
        defs.remove(&EntityType::RaceEthnicity);
        let b = PromptBuilder::new(TemplateSet::shipped(), Definitions::new(defs));
        let err = b.build_baseline(&input()).unwrap_err();
        assert!(matches!(err, PromptError::MissingDefinition(EntityType::RaceEthnicity)));
        assert!(err.to_string().contains("race_ethnicity"));
    }

    #[test]
    fn definitions_reject_unknown_and_duplicate() {
        let bad = r#"{"type":"medication","definition":"x"}"#;
        assert!(Definitions::parse(bad.as_bytes()).is_err());
        let dup = "{\"type\":\"gender\",\"definition\":\"x\"}\n{\"type\":\"gender\",\"definition\":\"y\"}";
        assert!(Definitions::parse(dup.as_bytes()).is_err());
        assert_eq!(Definitions::shipped().len(), 18);
    }

    #[test]
    fn examples_rendered_in_given_order() {
        let b = PromptBuilder::default();
        let exs: Vec<Sentence> = (1..=6).map(example).collect();
        let refs: Vec<&Sentence> = exs.iter().rev().collect();
        let p = b.build_strict(&input(), &refs).unwrap();
        assert_eq!(p.example_keys, refs.iter().map(|s| s.key()).collect::<Vec<_>>());
        assert_eq!(p.text.matches("Output: ").count(), 6);
        let first = p.text.find("Started metformin 6 days").unwrap();
        let last = p.text.find("Started metformin 1 days").unwrap();
        assert!(first < last);
        assert!(p.text.contains("Output: Started <generic_name>metformin</generic_name> 6 days ago ."));
    }

    #[test]
    fn zero_examples_elide_block_and_stripping_block_matches() {
        let b = PromptBuilder::default();
        let zero = b.build_strict(&input(), &[]).unwrap();
        assert!(!zero.text.contains("### Examples"));
        let ex = example(3);
        let few = b.build_strict(&input(), &[&ex]).unwrap();
        let header = few.text.find("### Examples").unwrap();
        let input_at = few.text.find("### Input").unwrap();
        let stripped = format!("{}{}", &few.text[..header], &few.text[input_at..]);
        assert_eq!(stripped, zero.text);
    }

    #[test]
    fn rejects_bad_examples_and_too_many() {
        let b = PromptBuilder::default();
        let mut broken = example(1);
        broken.gold[0].start = 7;
        assert!(matches!(
            b.build_strict(&input(), &[&broken]),
            Err(PromptError::InvalidExample { .. })
        ));
        let exs: Vec<Sentence> = (0..11).map(example).collect();
        let refs: Vec<&Sentence> = exs.iter().collect();
        assert!(matches!(
            b.build_strict(&input(), &refs),
            Err(PromptError::TooManyExamples { count: 11 })
        ));
    }

    #[test]
    fn braces_in_input_are_not_expanded() {
        let s = sentence("x", "value {{examples}} here", vec![]);
        let p = PromptBuilder::default().build_strict(&s, &[]).unwrap();
        assert!(p.text.contains("value {{examples}} here"));
    }

    #[test]
    fn template_check_rejects_missing_placeholder() {
        let mut t = TemplateSet::shipped();
        t.strict = t.strict.replace("{{examples}}", "");
        assert!(matches!(t.check(), Err(PromptError::BadTemplate { file: "strict.txt", .. })));
        let mut t = TemplateSet::shipped();
        t.baseline.push_str("{{bogus}}");
        assert!(t.check().is_err());
    }
}
