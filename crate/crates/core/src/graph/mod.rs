//! The three-layer legal graph: facts, ontology and rules.

mod build;
mod persist;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::community::LeidenConfig;
use crate::corpus::{ArticleDocument, CaseDocument, InterpretationDocument};
use crate::embedding::{EmbeddingError, EmbeddingVector};
use crate::llm::{KeywordFeatures, LlmError};

pub use build::{
    build_fact_graph, build_hierargraph, build_ontology_graph, build_rule_graph,
    detect_communities, extract_ontology_features, generate_checklist, knn_edges, BuildConfig,
    FeatureExtraction, FALLBACK_CHECKLIST_ITEM, MAX_CHECKLIST_ITEMS,
};
pub(crate) use build::{law_item_text, related_text};
pub use persist::{load, persist, read_graph, write_graph, FORMAT_VERSION};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("case {case_id} cites unknown article {article_id}")]
    DanglingArticle { case_id: String, article_id: String },
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("graph file: {0}")]
    Io(#[from] std::io::Error),
    #[error("graph file is format version {found}; this build reads up to {supported}")]
    Version { found: u32, supported: u32 },
    #[error("graph file checksum mismatch: header {expected}, content {actual}")]
    Checksum { expected: String, actual: String },
    #[error("graph file is malformed: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OffenseNode {
    pub offense_name: String,
    pub member_case_ids: BTreeSet<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FactGraph {
    pub case_nodes: BTreeMap<String, CaseDocument>,
    pub article_nodes: BTreeMap<String, ArticleDocument>,
    pub offense_nodes: BTreeMap<String, OffenseNode>,
    pub edges_case_article: BTreeSet<(String, String)>,
    pub edges_case_offense: BTreeSet<(String, String)>,
    /// Case ids in corpus order; later entries are treated as more recent.
    pub case_order: Vec<String>,
}

impl FactGraph {
    pub fn cited_articles(&self, case_id: &str) -> impl Iterator<Item = &str> {
        self.case_nodes
            .get(case_id)
            .into_iter()
            .flat_map(|c| c.cited_article_ids.iter())
            .map(String::as_str)
            .filter(|a| self.article_nodes.contains_key(*a))
    }
}

/// Where a case's ontology embedding came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingSource {
    Features,
    /// Extraction failed or produced no keywords; the raw fact text was embedded.
    RawText,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunityNode {
    pub community_id: String,
    pub member_case_ids: BTreeSet<String>,
    pub summary_text: String,
    pub summary_embedding: EmbeddingVector,
    /// The summary was assembled from member keywords because the model call failed.
    pub summary_fallback: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OntologyGraph {
    pub feature_index: BTreeMap<String, KeywordFeatures>,
    pub extraction_failures: BTreeSet<String>,
    pub embedding_source: BTreeMap<String, EmbeddingSource>,
    pub case_embeddings: BTreeMap<String, EmbeddingVector>,
    /// Undirected edges stored with the smaller id first.
    pub knn_edges: BTreeSet<(String, String)>,
    pub communities: BTreeMap<String, CommunityNode>,
    pub membership: BTreeMap<String, String>,
    pub modularity: f64,
}

impl OntologyGraph {
    pub fn neighbors(&self, case_id: &str) -> BTreeSet<&str> {
        self.knn_edges
            .iter()
            .filter_map(|(a, b)| {
                if a == case_id {
                    Some(b.as_str())
                } else if b == case_id {
                    Some(a.as_str())
                } else {
                    None
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiagnosticChecklist {
    pub article_id: String,
    pub items: Vec<String>,
    /// Generation failed and the single generic item was substituted.
    pub fallback: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RuleGraph {
    pub article_nodes: BTreeMap<String, ArticleDocument>,
    pub interpretation_nodes: BTreeMap<String, InterpretationDocument>,
    pub edges_article_interp: BTreeSet<(String, String)>,
    pub checklists: BTreeMap<String, DiagnosticChecklist>,
}

impl RuleGraph {
    pub fn interpretations_of(&self, article_id: &str) -> Vec<&InterpretationDocument> {
        self.edges_article_interp
            .iter()
            .filter(|(a, _)| a == article_id)
            .filter_map(|(_, j)| self.interpretation_nodes.get(j))
            .collect()
    }
}

/// Everything needed to tell whether a stored graph matches the current setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildManifest {
    pub llm_backend: String,
    pub embedding_provider: String,
    pub embedding_dimension: Option<usize>,
    pub knn_k: usize,
    pub leiden: LeidenConfig,
    pub corpus_fingerprint: String,
    pub case_count: usize,
    pub article_count: usize,
    pub interpretation_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarGraph {
    pub fact: FactGraph,
    pub ontology: OntologyGraph,
    pub rule: RuleGraph,
    pub manifest: BuildManifest,
}

impl HierarGraph {
    pub fn article(&self, id: &str) -> Option<&ArticleDocument> {
        self.fact.article_nodes.get(id)
    }

    pub fn case(&self, id: &str) -> Option<&CaseDocument> {
        self.fact.case_nodes.get(id)
    }

    /// Article lookup by id, then by bare article number (`"266"`, `"Art. 266"`,
    /// `"Article 266"`).
    pub fn resolve_article(&self, reference: &str) -> Option<&str> {
        let r = reference.trim();
        if let Some((id, _)) = self.fact.article_nodes.get_key_value(r) {
            return Some(id);
        }
        let number = r
            .trim_start_matches(|c: char| c.is_alphabetic() || c == '.' || c.is_whitespace())
            .trim();
        if number.is_empty() {
            return None;
        }
        self.fact
            .article_nodes
            .values()
            .find(|a| a.article_number == number)
            .map(|a| a.article_id.as_str())
    }
}
