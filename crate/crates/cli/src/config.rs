use std::path::{Path, PathBuf};

use lexgraph::community::LeidenConfig;
use lexgraph::corpus::CorpusSources;
use lexgraph::graph::BuildConfig;
use lexgraph::pipeline::PipelineConfig;
use lexgraph::researcher::ResearchConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Scripted,
    Http,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingKind {
    #[default]
    Hashing,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusPaths {
    pub cases: Option<PathBuf>,
    pub articles: Option<PathBuf>,
    pub interpretations: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub script: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub retry_base_delay_ms: u64,
    pub max_in_flight: usize,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            kind: BackendKind::Scripted,
            script: None,
            endpoint: None,
            model: None,
            api_key_env: "LEXGRAPH_API_KEY".to_owned(),
            timeout_secs: 60,
            max_retries: 2,
            retry_base_delay_ms: 250,
            max_in_flight: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub kind: EmbeddingKind,
    pub dimension: usize,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub api_key_env: String,
    pub timeout_secs: u64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            kind: EmbeddingKind::Hashing,
            dimension: 256,
            endpoint: None,
            model: None,
            api_key_env: "LEXGRAPH_EMBEDDING_API_KEY".to_owned(),
            timeout_secs: 60,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LeidenSettings {
    pub resolution: f64,
    pub max_passes: usize,
    pub min_community_size: usize,
}

impl Default for LeidenSettings {
    fn default() -> Self {
        let d = LeidenConfig::default();
        LeidenSettings {
            resolution: d.resolution,
            max_passes: d.max_passes,
            min_community_size: d.min_community_size,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: CorpusPaths,
    pub test_cases: Option<PathBuf>,
    pub graph: Option<PathBuf>,
    pub backend: BackendConfig,
    pub embedding: EmbeddingConfig,
    pub k: usize,
    pub community_top_m: usize,
    pub charge_cap: usize,
    pub knn_k: usize,
    pub leiden: LeidenSettings,
    pub max_blocks: usize,
    pub strict: bool,
    /// Worker threads for graph building and evaluation; 0 lets the runtime decide.
    pub threads: usize,
    pub rng_seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let research = ResearchConfig::default();
        let pipeline = PipelineConfig::default();
        RunConfig {
            corpus: CorpusPaths::default(),
            test_cases: None,
            graph: None,
            backend: BackendConfig::default(),
            embedding: EmbeddingConfig::default(),
            k: research.k,
            community_top_m: research.community_top_m,
            charge_cap: research.charge_cap,
            knn_k: BuildConfig::default().knn_k,
            leiden: LeidenSettings::default(),
            max_blocks: pipeline.max_blocks,
            strict: false,
            threads: 0,
            rng_seed: 0,
        }
    }
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))
    }

    /// Reads a config file; relative paths inside it are taken from its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut config = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.corpus.cases);
        resolve(base, &mut self.corpus.articles);
        resolve(base, &mut self.corpus.interpretations);
        resolve(base, &mut self.test_cases);
        resolve(base, &mut self.graph);
        resolve(base, &mut self.backend.script);
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn research(&self) -> ResearchConfig {
        ResearchConfig {
            k: self.k,
            community_top_m: self.community_top_m,
            charge_cap: self.charge_cap,
        }
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            research: self.research(),
            max_blocks: self.max_blocks,
        }
    }

    pub fn build(&self) -> BuildConfig {
        BuildConfig {
            knn_k: self.knn_k,
            leiden: LeidenConfig {
                resolution: self.leiden.resolution,
                max_passes: self.leiden.max_passes,
                rng_seed: self.rng_seed,
                min_community_size: self.leiden.min_community_size,
            },
            strict: self.strict,
        }
    }

    pub fn corpus_sources(&self) -> Result<CorpusSources, CliError> {
        let need = |p: &Option<PathBuf>, what: &str| {
            p.clone()
                .ok_or_else(|| CliError::Usage(format!("no {what} file configured")))
        };
        Ok(CorpusSources::new(
            need(&self.corpus.cases, "cases")?,
            need(&self.corpus.articles, "articles")?,
            need(&self.corpus.interpretations, "interpretations")?,
        ))
    }

    pub fn graph_path(&self) -> Result<&Path, CliError> {
        self.graph
            .as_deref()
            .ok_or_else(|| CliError::Usage("no graph path configured".into()))
    }

    /// Fails when any configured input file is missing.
    pub fn check_inputs(&self, inputs: &[&Option<PathBuf>]) -> Result<(), CliError> {
        for p in inputs.iter().copied().flatten() {
            if !p.is_file() {
                return Err(CliError::Data(format!(
                    "input file {} does not exist",
                    p.display()
                )));
            }
        }
        Ok(())
    }
}
