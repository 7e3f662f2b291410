//! Candidate evidence retrieval: semantic, community and charge-anchored.

use std::collections::{BTreeMap, BTreeSet};

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{
    cosine_similarity, rank_order, EmbeddingError, EmbeddingProvider, EmbeddingVector, Scored,
};
use crate::graph::{extract_ontology_features, EmbeddingSource, GraphError, HierarGraph};
use crate::llm::parse::parse_charge_list;
use crate::llm::{Gateway, KeywordFeatures, LlmError, Stage, TemplateId};

#[derive(Debug, Error)]
pub enum ResearchError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Semantic,
    Community,
    ChargeAnchored,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Case,
    Article,
    Offense,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub fact_text: String,
    pub defendants: Vec<String>,
    pub features: KeywordFeatures,
    pub embedding: EmbeddingVector,
    /// The raw fact text was embedded because extraction failed or found nothing.
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Provenance {
    pub strategy: Strategy,
    /// Community id or anchoring charge, when the strategy has one.
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalCandidate {
    pub node_id: String,
    pub node_kind: NodeKind,
    /// Cosine similarity to the query; absent for charge-anchored-only hits.
    pub score: Option<f64>,
    pub strategies: BTreeSet<Strategy>,
    pub provenance: BTreeSet<Provenance>,
}

impl RetrievalCandidate {
    fn case(
        node_id: String,
        score: Option<f64>,
        strategy: Strategy,
        detail: Option<String>,
    ) -> Self {
        Self {
            node_id,
            node_kind: NodeKind::Case,
            score,
            strategies: BTreeSet::from([strategy]),
            provenance: BTreeSet::from([Provenance { strategy, detail }]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub query: Query,
    /// Deduplicated, ordered by node id.
    pub candidates: Vec<RetrievalCandidate>,
    /// Articles cited by the candidate cases.
    pub articles: BTreeSet<String>,
    pub predicted_charges: Vec<String>,
    pub warnings: Vec<String>,
}

impl RetrievalResult {
    pub fn case_ids(&self) -> impl Iterator<Item = &str> {
        self.candidates
            .iter()
            .filter(|c| c.node_kind == NodeKind::Case)
            .map(|c| c.node_id.as_str())
    }

    pub fn candidate(&self, node_id: &str) -> Option<&RetrievalCandidate> {
        self.candidates
            .binary_search_by(|c| c.node_id.as_str().cmp(node_id))
            .ok()
            .map(|i| &self.candidates[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResearchConfig {
    pub k: usize,
    /// Communities searched by the community strategy.
    pub community_top_m: usize,
    /// Most cases taken per anchoring charge.
    pub charge_cap: usize,
}

impl Default for ResearchConfig {
    fn default() -> Self {
        Self {
            k: 5,
            community_top_m: 1,
            charge_cap: 10,
        }
    }
}

pub fn align_query(
    gw: &Gateway,
    provider: &dyn EmbeddingProvider,
    fact_text: &str,
    defendants: &[String],
) -> Result<Query, ResearchError> {
    let extraction = extract_ontology_features(gw, Stage::Researcher, fact_text)?;
    let (text, source) = extraction.embedding_text(fact_text);
    let embedding = provider.embed(&text)?;
    Ok(Query {
        fact_text: fact_text.to_owned(),
        defendants: defendants.to_vec(),
        features: extraction.features,
        embedding,
        fallback: source == EmbeddingSource::RawText,
    })
}

fn rank_cases<'a>(
    query: &Query,
    graph: &'a HierarGraph,
    ids: impl Iterator<Item = &'a String>,
) -> Result<Vec<Scored>, EmbeddingError> {
    let mut scored = Vec::new();
    for id in ids {
        if let Some(v) = graph.ontology.case_embeddings.get(id) {
            scored.push(Scored {
                id: id.clone(),
                score: cosine_similarity(&query.embedding, v)?,
            });
        }
    }
    scored.sort_by(rank_order);
    Ok(scored)
}

/// Top-k cases by cosine similarity over the ontology embeddings.
pub fn retrieve_semantic(
    query: &Query,
    graph: &HierarGraph,
    k: usize,
) -> Result<Vec<RetrievalCandidate>, EmbeddingError> {
    let ranked = rank_cases(query, graph, graph.ontology.case_embeddings.keys())?;
    Ok(ranked
        .into_iter()
        .take(k)
        .map(|s| RetrievalCandidate::case(s.id, Some(s.score), Strategy::Semantic, None))
        .collect())
}

/// Picks the `top_m` communities whose summaries best match the query, then
/// the top-k cases inside each.
pub fn retrieve_community(
    query: &Query,
    graph: &HierarGraph,
    k: usize,
    top_m: usize,
) -> Result<Vec<RetrievalCandidate>, EmbeddingError> {
    let mut communities = Vec::new();
    for (id, node) in &graph.ontology.communities {
        communities.push(Scored {
            id: id.clone(),
            score: cosine_similarity(&query.embedding, &node.summary_embedding)?,
        });
    }
    communities.sort_by(rank_order);
    let mut out = Vec::new();
    for chosen in communities.into_iter().take(top_m) {
        let members = &graph.ontology.communities[&chosen.id].member_case_ids;
        for s in rank_cases(query, graph, members.iter())?
            .into_iter()
            .take(k)
        {
            out.push(RetrievalCandidate::case(
                s.id,
                Some(s.score),
                Strategy::Community,
                Some(chosen.id.clone()),
            ));
        }
    }
    Ok(out)
}

/// Asks the model for likely charges. A reply that stays unparseable after
/// the re-ask yields no charges plus a warning.
pub fn prejudge_charges(
    gw: &Gateway,
    fact_text: &str,
) -> Result<(Vec<String>, Option<String>), LlmError> {
    match gw.complete_parsed(
        Stage::Researcher,
        TemplateId::ChargePrejudge,
        &[("case_text", fact_text)],
        parse_charge_list,
    ) {
        Ok(charges) => Ok((charges, None)),
        Err(e) if e.is_soft() => {
            warn!("charge pre-judgment failed: {e}");
            Ok((Vec::new(), Some(format!("charge pre-judgment failed: {e}"))))
        }
        Err(e) => Err(e),
    }
}

/// Fact-graph neighbors of each predicted charge, at most `cap` per charge,
/// latest in corpus order first.
pub fn retrieve_charge_anchored(
    charges: &[String],
    graph: &HierarGraph,
    cap: usize,
) -> Vec<RetrievalCandidate> {
    let mut merged: BTreeMap<String, RetrievalCandidate> = BTreeMap::new();
    for charge in charges {
        let Some(node) = graph.fact.offense_nodes.get(charge) else {
            continue;
        };
        let taken = graph
            .fact
            .case_order
            .iter()
            .rev()
            .filter(|id| node.member_case_ids.contains(*id))
            .take(cap);
        for id in taken {
            let provenance = Provenance {
                strategy: Strategy::ChargeAnchored,
                detail: Some(charge.clone()),
            };
            merged
                .entry(id.clone())
                .or_insert_with(|| RetrievalCandidate {
                    node_id: id.clone(),
                    node_kind: NodeKind::Case,
                    score: None,
                    strategies: BTreeSet::from([Strategy::ChargeAnchored]),
                    provenance: BTreeSet::new(),
                })
                .provenance
                .insert(provenance);
        }
    }
    merged.into_values().collect()
}

/// Merges per-strategy lists into one candidate per node, ordered by node id.
pub fn merge_candidates(
    lists: impl IntoIterator<Item = Vec<RetrievalCandidate>>,
) -> Vec<RetrievalCandidate> {
    let mut merged: BTreeMap<String, RetrievalCandidate> = BTreeMap::new();
    for c in lists.into_iter().flatten() {
        match merged.get_mut(&c.node_id) {
            None => {
                merged.insert(c.node_id.clone(), c);
            }
            Some(existing) => {
                existing.strategies.extend(c.strategies);
                existing.provenance.extend(c.provenance);
                existing.score = match (existing.score, c.score) {
                    (Some(a), Some(b)) => Some(a.max(b)),
                    (a, b) => a.or(b),
                };
            }
        }
    }
    merged.into_values().collect()
}

/// Union of the three strategies plus the articles cited by the retrieved cases.
pub fn research(
    gw: &Gateway,
    provider: &dyn EmbeddingProvider,
    graph: &HierarGraph,
    fact_text: &str,
    defendants: &[String],
    config: &ResearchConfig,
) -> Result<RetrievalResult, ResearchError> {
    let query = align_query(gw, provider, fact_text, defendants)?;
    let semantic = retrieve_semantic(&query, graph, config.k)?;
    let community = retrieve_community(&query, graph, config.k, config.community_top_m)?;
    let (predicted_charges, warning) = prejudge_charges(gw, fact_text)?;
    let anchored = retrieve_charge_anchored(&predicted_charges, graph, config.charge_cap);

    let mut warnings: Vec<String> = warning.into_iter().collect();
    if query.fallback {
        warnings.push("query features unavailable; raw fact text embedded".into());
    }
    let candidates = merge_candidates([semantic, community, anchored]);
    let articles = candidates
        .iter()
        .filter(|c| c.node_kind == NodeKind::Case)
        .flat_map(|c| graph.fact.cited_articles(&c.node_id))
        .map(str::to_owned)
        .collect();
    Ok(RetrievalResult {
        query,
        candidates,
        articles,
        predicted_charges,
        warnings,
    })
}
