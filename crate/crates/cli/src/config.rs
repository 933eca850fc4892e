//! Run configuration: TOML file, environment-variable secrets, flag
//! overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub paths: Paths,
    #[serde(default)]
    pub provider: ProviderConfig,
    #[serde(default)]
    pub embedding: EndpointConfig,
    #[serde(default)]
    pub search: EndpointConfig,
    #[serde(default)]
    pub scorer: EndpointConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub synthesis: SynthesisConfig,
    #[serde(default)]
    pub audit: AuditConfig,
    #[serde(default)]
    pub run: RunSection,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub sources: Option<PathBuf>,
    /// Defaults to `<out_dir>/conversations.jsonl`.
    pub conversations: Option<PathBuf>,
    /// Defaults to `<out_dir>/qrels.txt`.
    pub qrels: Option<PathBuf>,
    /// Mock fixture directory (one JSON file per template id).
    pub fixtures: Option<PathBuf>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    pub endpoint: Option<String>,
    /// Overridden by `PROVIDER_API_KEY`.
    pub api_key: Option<String>,
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
}

fn default_model() -> String {
    "default".to_string()
}

fn default_max_tokens() -> u32 {
    2048
}

fn default_max_retries() -> u32 {
    2
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            endpoint: None,
            api_key: None,
            model: default_model(),
            temperature: 0.0,
            max_tokens: default_max_tokens(),
            max_retries: default_max_retries(),
        }
    }
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct EndpointConfig {
    pub endpoint: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    #[serde(default = "default_strategies")]
    pub strategies: Vec<String>,
    #[serde(default = "default_retrievers")]
    pub retrievers: Vec<String>,
    #[serde(default = "default_k")]
    pub k: usize,
    /// Passages handed to generators in retrieved mode.
    #[serde(default = "default_generation_k")]
    pub generation_k: usize,
    /// `exponential` or `linear` nDCG gain.
    #[serde(default = "default_gain")]
    pub gain: String,
    #[serde(default = "default_modes")]
    pub modes: Vec<String>,
    #[serde(default = "default_generator")]
    pub generator: String,
    /// Retriever and strategy feeding retrieved-mode generation.
    #[serde(default = "default_retrieved_from")]
    pub retrieved_from: (String, String),
}

fn default_strategies() -> Vec<String> {
    vec![
        "baseline".into(),
        "rewrite".into(),
        "reasoning".into(),
        "history".into(),
        "history_reasoning".into(),
    ]
}

fn default_retrievers() -> Vec<String> {
    vec!["bm25".into()]
}

fn default_k() -> usize {
    10
}

fn default_generation_k() -> usize {
    5
}

fn default_gain() -> String {
    "exponential".into()
}

fn default_modes() -> Vec<String> {
    vec!["oracle".into(), "retrieved".into(), "no_retrieval".into()]
}

fn default_generator() -> String {
    "generator".into()
}

fn default_retrieved_from() -> (String, String) {
    ("bm25".into(), "history_reasoning".into())
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            strategies: default_strategies(),
            retrievers: default_retrievers(),
            k: default_k(),
            generation_k: default_generation_k(),
            gain: default_gain(),
            modes: default_modes(),
            generator: default_generator(),
            retrieved_from: default_retrieved_from(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisConfig {
    #[serde(default = "default_aspects")]
    pub aspects_per_record: usize,
    #[serde(default = "default_selection_threshold")]
    pub selection_threshold: f64,
    #[serde(default = "default_passage_target_len")]
    pub passage_target_len: usize,
    #[serde(default = "default_overlap_threshold")]
    pub overlap_threshold: f64,
    #[serde(default = "default_queries_per_source")]
    pub queries_per_source: usize,
}

fn default_aspects() -> usize {
    6
}

fn default_selection_threshold() -> f64 {
    5.0
}

fn default_passage_target_len() -> usize {
    200
}

fn default_overlap_threshold() -> f64 {
    0.8
}

fn default_queries_per_source() -> usize {
    3
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            aspects_per_record: default_aspects(),
            selection_threshold: default_selection_threshold(),
            passage_target_len: default_passage_target_len(),
            overlap_threshold: default_overlap_threshold(),
            queries_per_source: default_queries_per_source(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditConfig {
    /// |LLM - human| tolerance for the alignment report.
    #[serde(default = "default_alignment_threshold")]
    pub alignment_threshold: f64,
    /// Human dimension means; enables the alignment report when present.
    #[serde(default)]
    pub human_means: BTreeMap<String, f64>,
}

fn default_alignment_threshold() -> f64 {
    0.5
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self {
            alignment_threshold: default_alignment_threshold(),
            human_means: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default)]
    pub mock: bool,
}

fn default_seed() -> u64 {
    42
}

fn default_parallelism() -> usize {
    8
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seed: default_seed(),
            parallelism: default_parallelism(),
            mock: false,
        }
    }
}

impl RunConfig {
    /// Load a TOML config, resolving relative paths against the file's
    /// directory and applying environment overrides.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut config: RunConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        config.apply_env();
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&p);
            }
        };
        for path in [
            self.paths.corpus.as_mut(),
            self.paths.sources.as_mut(),
            self.paths.conversations.as_mut(),
            self.paths.qrels.as_mut(),
            self.paths.fixtures.as_mut(),
        ]
        .into_iter()
        .flatten()
        {
            resolve(path);
        }
        resolve(&mut self.paths.out_dir);
    }

    /// PROVIDER_API_KEY, EMBED_ENDPOINT, and SEARCH_ENDPOINT override the
    /// file values.
    pub fn apply_env(&mut self) {
        if let Ok(key) = std::env::var("PROVIDER_API_KEY") {
            if !key.is_empty() {
                self.provider.api_key = Some(key);
            }
        }
        if let Ok(endpoint) = std::env::var("EMBED_ENDPOINT") {
            if !endpoint.is_empty() {
                self.embedding.endpoint = Some(endpoint);
            }
        }
        if let Ok(endpoint) = std::env::var("SEARCH_ENDPOINT") {
            if !endpoint.is_empty() {
                self.search.endpoint = Some(endpoint);
            }
        }
    }

    pub fn conversations_path(&self) -> PathBuf {
        self.paths
            .conversations
            .clone()
            .unwrap_or_else(|| self.paths.out_dir.join("conversations.jsonl"))
    }

    pub fn qrels_path(&self) -> PathBuf {
        self.paths
            .qrels
            .clone()
            .unwrap_or_else(|| self.paths.out_dir.join("qrels.txt"))
    }

    /// Check that every referenced input path exists.
    pub fn validate_inputs(&self, need_corpus: bool, need_sources: bool) -> Result<()> {
        if need_corpus {
            match &self.paths.corpus {
                Some(p) if p.exists() => {}
                Some(p) => bail!("corpus path {} does not exist", p.display()),
                None => bail!("config is missing paths.corpus"),
            }
        }
        if need_sources {
            match &self.paths.sources {
                Some(p) if p.exists() => {}
                Some(p) => bail!("sources path {} does not exist", p.display()),
                None => bail!("config is missing paths.sources"),
            }
        }
        if self.run.mock {
            match &self.paths.fixtures {
                Some(p) if p.exists() => {}
                Some(p) => bail!("fixtures path {} does not exist", p.display()),
                None => bail!("mock mode needs paths.fixtures"),
            }
        }
        Ok(())
    }
}
