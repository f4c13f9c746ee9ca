//! Run configuration: a single JSON document with `--key value` overrides.

use std::path::{Path, PathBuf};

use bnfuse::data::{ChannelConfig, SIZES};
use bnfuse::fusion::Variant;
use bnfuse::learning::FitConfig;
use bnfuse::text::MlpTrainConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub tabular: PathBuf,
    pub mentions: Option<PathBuf>,
    /// Note embeddings for training and the original test condition.
    pub embeddings: Option<PathBuf>,
    pub notes: Option<PathBuf>,
    pub spans: Option<PathBuf>,
    /// Text-classifier probabilities per record (`symptom:value` columns).
    pub channel: Option<PathBuf>,
    /// Text side of the shifted test condition.
    pub shifted_channel: Option<PathBuf>,
    pub shifted_embeddings: Option<PathBuf>,
    pub shifted_mentions: Option<PathBuf>,
    /// Network structure and template parameters; the bundled one if unset.
    pub network: Option<PathBuf>,
    pub output_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            tabular: "data/tabular.csv".into(),
            mentions: Some("data/mentions.csv".into()),
            embeddings: None,
            notes: None,
            spans: None,
            channel: Some("data/channel.csv".into()),
            shifted_channel: Some("data/channel_shifted.csv".into()),
            shifted_embeddings: None,
            shifted_mentions: Some("data/mentions_shifted.csv".into()),
            network: None,
            output_dir: "output".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    pub n: usize,
    pub seed: u64,
    pub channel: ChannelConfig,
    /// `rho_present` of the shifted test condition.
    pub shifted_rho_present: f64,
    /// Width of synthetic note embeddings; written only when
    /// `paths.embeddings` is set.
    pub embedding_dim: usize,
    pub embedding_noise: f64,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        GenerateConfig {
            n: 10_000,
            seed: 0,
            channel: ChannelConfig::default(),
            shifted_rho_present: 0.5,
            embedding_dim: 768,
            embedding_noise: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaskConfig {
    pub drop_prob: f64,
    pub seed: u64,
    pub notes_out: PathBuf,
    pub spans_out: PathBuf,
    pub mentions_out: PathBuf,
    pub drop_log: PathBuf,
}

impl Default for MaskConfig {
    fn default() -> Self {
        MaskConfig {
            drop_prob: 0.5,
            seed: 0,
            notes_out: "data/masked/notes.jsonl".into(),
            spans_out: "data/masked/spans.jsonl".into(),
            mentions_out: "data/masked/mentions.csv".into(),
            drop_log: "data/masked/drop_log.csv".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    pub plan_seed: u64,
    pub sizes: Vec<usize>,
    pub seeds: Vec<u64>,
    pub variants: Vec<Variant>,
    pub baseline: Variant,
    /// Also evaluate on the shifted (masked) test condition.
    pub masking: bool,
    /// Use the network's own parameters instead of fitting them.
    pub ground_truth: bool,
    pub fit: Option<FitConfig>,
    pub mlp: MlpTrainConfig,
    pub generate: GenerateConfig,
    pub mask: MaskConfig,
    /// Worker threads; does not affect results.
    pub jobs: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            paths: Paths::default(),
            plan_seed: 0,
            sizes: SIZES.to_vec(),
            seeds: (0..20).collect(),
            variants: vec![
                Variant::BnOnly,
                Variant::TextOnly,
                Variant::CBnText,
                Variant::VBnText,
                Variant::VCBnText,
            ],
            baseline: Variant::BnOnly,
            masking: true,
            ground_truth: false,
            fit: None,
            mlp: MlpTrainConfig::default(),
            generate: GenerateConfig::default(),
            mask: MaskConfig::default(),
            jobs: None,
        }
    }
}

impl RunConfig {
    /// Reads `path` (or the defaults) and applies `key value` overrides.
    pub fn load(
        path: Option<&Path>,
        overrides: &[(String, String)],
    ) -> Result<RunConfig, CliError> {
        let mut doc = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
                serde_json::from_str(&text)
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => serde_json::to_value(RunConfig::default()).expect("default config serializes"),
        };
        for (key, raw) in overrides {
            set_path(&mut doc, key, parse_value(raw))?;
        }
        let cfg: RunConfig =
            serde_json::from_value(doc).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.sizes.is_empty() || self.seeds.is_empty() {
            return Err(CliError::Config("sizes and seeds must be non-empty".into()));
        }
        if self.variants.is_empty() {
            return Err(CliError::Config("no variants selected".into()));
        }
        if let Some(0) = self.jobs {
            return Err(CliError::Config("jobs must be at least 1".into()));
        }
        self.mlp
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.generate
            .channel
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, ignoring `jobs`.
    pub fn hash(&self) -> String {
        let canonical = RunConfig {
            jobs: None,
            ..self.clone()
        };
        let bytes = serde_json::to_vec(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

/// JSON if it parses, otherwise a bare string.
fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Sets a dotted key, accepting `kebab-case` segments.
fn set_path(doc: &mut Value, key: &str, value: Value) -> Result<(), CliError> {
    let segments: Vec<String> = key.split('.').map(|s| s.replace('-', "_")).collect();
    let mut node = doc;
    for (i, seg) in segments.iter().enumerate() {
        if node.is_null() {
            *node = Value::Object(Default::default());
        }
        let Value::Object(map) = node else {
            return Err(CliError::Config(format!(
                "`{key}`: `{}` is not a section",
                segments[..i].join(".")
            )));
        };
        if i + 1 == segments.len() {
            map.insert(seg.clone(), value);
            return Ok(());
        }
        node = map.entry(seg.clone()).or_insert(Value::Null);
    }
    Err(CliError::Config(format!("empty key `{key}`")))
}
