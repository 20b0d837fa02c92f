use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::client::ClientConfig;
use crate::digest::sha256_hex;
use crate::embedding::StoreKind;
use crate::prompt::{Definitions, PromptBuilder, PromptVariant, TemplateSet, MAX_EXAMPLES};

use super::RunError;

pub const DEFAULT_K: usize = 6;
pub const DEFAULT_SELECTION: StoreKind = StoreKind::Token;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    ZeroShot,
    FewShot,
    /// A fine-tuned model behind the same chat endpoint.
    ServedFinetuned,
}

/// Batch run configuration, read from JSON. Relative paths resolve against
/// the directory holding the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: RunMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selection: Option<StoreKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_variant: Option<PromptVariant>,
    pub client: ClientConfig,
    pub test_corpus: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_corpus: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_store: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_store: Option<PathBuf>,
    /// Entity definitions JSONL; the shipped placeholders when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub definitions: Option<PathBuf>,
    /// Template directory; the shipped `v1` wording when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub templates: Option<PathBuf>,
    /// Fine-tuning provenance (r, lora_alpha, lora_dropout, target_modules…).
    /// Recorded only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lora_meta: Option<serde_json::Value>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn from_json(json: &str, base_dir: impl Into<PathBuf>) -> Result<Self, RunError> {
        let mut cfg: RunConfig =
            serde_json::from_str(json).map_err(|e| RunError::Config(format!("bad config JSON: {e}")))?;
        cfg.base_dir = base_dir.into();
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RunError> {
        let path = path.as_ref();
        let json = std::fs::read_to_string(path).map_err(|e| RunError::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json(&json, base)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn k(&self) -> usize {
        self.k.unwrap_or(DEFAULT_K)
    }

    pub fn selection(&self) -> StoreKind {
        self.selection.unwrap_or(DEFAULT_SELECTION)
    }

    /// Strict unless serving a fine-tuned model, which saw the baseline
    /// prompt during training.
    pub fn variant(&self) -> PromptVariant {
        self.prompt_variant.unwrap_or(match self.mode {
            RunMode::ServedFinetuned => PromptVariant::Baseline,
            RunMode::ZeroShot | RunMode::FewShot => PromptVariant::Strict,
        })
    }

    /// SHA-256 of the config as written (paths unresolved).
    pub fn digest(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("config serializes"))
    }

    pub fn validate(&self) -> Result<(), RunError> {
        self.client
            .validate()
            .map_err(|e| RunError::Config(e.to_string()))?;
        if self.mode == RunMode::FewShot {
            let k = self.k();
            if k == 0 || k > MAX_EXAMPLES {
                return Err(RunError::Config(format!("k must be in 1..={MAX_EXAMPLES}, got {k}")));
            }
            if self.train_store.is_none() || self.test_store.is_none() {
                return Err(RunError::Config("few_shot needs train_store and test_store".into()));
            }
            if self.train_corpus.is_none() {
                return Err(RunError::Config("few_shot needs train_corpus for the examples".into()));
            }
            if self.variant() == PromptVariant::Baseline {
                return Err(RunError::Config(
                    "few_shot needs the strict prompt variant (the baseline prompt has no examples block)".into(),
                ));
            }
        } else if self.selection.is_some() || self.k.is_some() {
            log::warn!("selection and k only apply to few_shot runs; ignoring");
        }
        Ok(())
    }

    pub fn prompt_builder(&self) -> Result<PromptBuilder, RunError> {
        let templates = match &self.templates {
            Some(dir) => TemplateSet::load_dir(self.resolve(dir))?,
            None => TemplateSet::shipped(),
        };
        let definitions = match &self.definitions {
            Some(path) => Definitions::load(self.resolve(path))?,
            None => {
                log::warn!("using shipped placeholder entity definitions");
                Definitions::shipped()
            }
        };
        Ok(PromptBuilder::new(templates, definitions))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FEW: &str = r#"{
        "mode": "few_shot",
        "client": {"endpoint_url": "mock://echo_gold", "model": "m"},
        "test_corpus": "test.jsonl",
        "train_corpus": "train.jsonl",
        "train_store": "train.tok",
        "test_store": "test.tok",
        "lora_meta": {"r": 64, "lora_alpha": 128}
    }"#;

    #[test]
    fn defaults_and_resolution() {
        let cfg = RunConfig::from_json(FEW, "/data/run").unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.k(), 6);
        assert_eq!(cfg.selection(), StoreKind::Token);
        assert_eq!(cfg.variant(), PromptVariant::Strict);
        assert_eq!(cfg.resolve(&cfg.test_corpus), PathBuf::from("/data/run/test.jsonl"));
        assert_eq!(cfg.client.retries, 3);
    }

    #[test]
    fn digest_ignores_location() {
        let a = RunConfig::from_json(FEW, "/a").unwrap();
        let b = RunConfig::from_json(FEW, "/b").unwrap();
        assert_eq!(a.digest(), b.digest());
        let mut c = a.clone();
        c.k = Some(3);
        assert_ne!(a.digest(), c.digest());
    }

    #[test]
    fn few_shot_requirements() {
        let mut cfg = RunConfig::from_json(FEW, "").unwrap();
        cfg.train_store = None;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::from_json(FEW, "").unwrap();
        cfg.k = Some(11);
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::from_json(FEW, "").unwrap();
        cfg.prompt_variant = Some(PromptVariant::Baseline);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn zero_shot_needs_no_stores() {
        let cfg = RunConfig::from_json(
            r#"{"mode":"zero_shot","client":{"endpoint_url":"http://x","model":"m"},"test_corpus":"t.jsonl"}"#,
            "",
        )
        .unwrap();
        cfg.validate().unwrap();
        let ft = RunConfig { mode: RunMode::ServedFinetuned, ..cfg };
        assert_eq!(ft.variant(), PromptVariant::Baseline);
    }

    #[test]
    fn unknown_keys_rejected() {
        let json = r#"{"mode":"zero_shot","client":{"endpoint_url":"http://x","model":"m"},"test_corpus":"t.jsonl","bogus":1}"#;
        let err = RunConfig::from_json(json, "").unwrap_err().to_string();
        assert!(err.contains("bogus"), "{err}");
    }
}
