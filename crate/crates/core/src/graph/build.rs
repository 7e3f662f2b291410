use std::collections::{BTreeMap, BTreeSet};

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    BuildManifest, CommunityNode, DiagnosticChecklist, EmbeddingSource, FactGraph, GraphError,
    HierarGraph, OffenseNode, OntologyGraph, RuleGraph,
};
use crate::community::{leiden, LeidenConfig, WeightedGraph};
use crate::corpus::{ArticleDocument, CorpusBundle, InterpretationDocument};
use crate::embedding::{cosine_similarity, EmbeddingProvider, EmbeddingVector, Scored};
use crate::llm::parse::{parse_keywords, parse_string_list};
use crate::llm::{Gateway, KeywordFeatures, Stage, TemplateId};

pub const MAX_CHECKLIST_ITEMS: usize = 8;
pub const FALLBACK_CHECKLIST_ITEM: &str =
    "Do the case facts satisfy every element of this article?";

const EMBED_BATCH: usize = 32;
const SUMMARY_FALLBACK_KEYWORDS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildConfig {
    pub knn_k: usize,
    pub leiden: LeidenConfig,
    /// Fail on citations of unknown articles instead of dropping the edge.
    pub strict: bool,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self {
            knn_k: 3,
            leiden: LeidenConfig::default(),
            strict: false,
        }
    }
}

pub fn build_fact_graph(bundle: &CorpusBundle, strict: bool) -> Result<FactGraph, GraphError> {
    let mut g = FactGraph::default();
    for a in &bundle.articles {
        g.article_nodes.insert(a.article_id.clone(), a.clone());
    }
    for c in &bundle.cases {
        for a in &c.cited_article_ids {
            if g.article_nodes.contains_key(a) {
                g.edges_case_article.insert((c.case_id.clone(), a.clone()));
            } else if strict {
                return Err(GraphError::DanglingArticle {
                    case_id: c.case_id.clone(),
                    article_id: a.clone(),
                });
            }
        }
        for o in &c.charge_labels {
            g.edges_case_offense.insert((c.case_id.clone(), o.clone()));
            g.offense_nodes
                .entry(o.clone())
                .or_insert_with(|| OffenseNode {
                    offense_name: o.clone(),
                    member_case_ids: BTreeSet::new(),
                })
                .member_case_ids
                .insert(c.case_id.clone());
        }
        g.case_nodes.insert(c.case_id.clone(), c.clone());
        g.case_order.push(c.case_id.clone());
    }
    Ok(g)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureExtraction {
    pub features: KeywordFeatures,
    pub failed: bool,
}

impl FeatureExtraction {
    /// Text to embed: the rendered features, or the raw facts when extraction
    /// failed or found nothing.
    pub fn embedding_text<'a>(
        &'a self,
        fact_text: &'a str,
    ) -> (std::borrow::Cow<'a, str>, EmbeddingSource) {
        if self.failed || self.features.is_empty() {
            (fact_text.into(), EmbeddingSource::RawText)
        } else {
            (self.features.render().into(), EmbeddingSource::Features)
        }
    }
}

pub fn extract_ontology_features(
    gw: &Gateway,
    stage: Stage,
    fact_text: &str,
) -> Result<FeatureExtraction, GraphError> {
    match gw.complete_parsed(
        stage,
        TemplateId::KeywordExtraction,
        &[("case_text", fact_text)],
        parse_keywords,
    ) {
        Ok(features) => Ok(FeatureExtraction {
            features,
            failed: false,
        }),
        Err(e) if e.is_soft() => {
            warn!("keyword extraction failed, falling back to raw text: {e}");
            Ok(FeatureExtraction {
                features: KeywordFeatures::default(),
                failed: true,
            })
        }
        Err(e) => Err(e.into()),
    }
}

fn embed_all(
    provider: &dyn EmbeddingProvider,
    texts: &[&str],
) -> Result<Vec<EmbeddingVector>, GraphError> {
    let mut out = Vec::with_capacity(texts.len());
    for chunk in texts.chunks(EMBED_BATCH) {
        out.extend(provider.embed_batch(chunk)?);
    }
    Ok(out)
}

/// Undirected k-NN edges: the union of every node's `k` most similar peers
/// (score descending, id ascending on ties), smaller id first.
pub fn knn_edges(
    embeddings: &BTreeMap<String, EmbeddingVector>,
    k: usize,
) -> Result<BTreeSet<(String, String)>, GraphError> {
    let mut edges = BTreeSet::new();
    for (id, v) in embeddings {
        let mut scored = embeddings
            .iter()
            .filter(|(other, _)| *other != id)
            .map(|(other, w)| {
                Ok(Scored {
                    id: other.clone(),
                    score: cosine_similarity(v, w)?,
                })
            })
            .collect::<Result<Vec<_>, GraphError>>()?;
        scored.sort_by(crate::embedding::rank_order);
        for s in scored.into_iter().take(k) {
            let pair = if *id < s.id {
                (id.clone(), s.id)
            } else {
                (s.id, id.clone())
            };
            edges.insert(pair);
        }
    }
    Ok(edges)
}

pub fn build_ontology_graph(
    fact: &FactGraph,
    features: &BTreeMap<String, FeatureExtraction>,
    provider: &dyn EmbeddingProvider,
    knn_k: usize,
) -> Result<OntologyGraph, GraphError> {
    let mut g = OntologyGraph::default();
    let missing = FeatureExtraction {
        features: KeywordFeatures::default(),
        failed: true,
    };
    let mut texts = Vec::with_capacity(fact.case_nodes.len());
    for (id, case) in &fact.case_nodes {
        let extraction = features.get(id).unwrap_or(&missing);
        let (text, source) = extraction.embedding_text(&case.fact_text);
        texts.push(text);
        g.embedding_source.insert(id.clone(), source);
        g.feature_index
            .insert(id.clone(), extraction.features.clone());
        if extraction.failed {
            g.extraction_failures.insert(id.clone());
        }
    }
    let refs: Vec<&str> = texts.iter().map(|t| t.as_ref()).collect();
    let vectors = embed_all(provider, &refs)?;
    g.case_embeddings = fact.case_nodes.keys().cloned().zip(vectors).collect();
    g.knn_edges = knn_edges(&g.case_embeddings, knn_k)?;
    Ok(g)
}

fn member_line(fact: &FactGraph, features: Option<&KeywordFeatures>, id: &str) -> String {
    match features {
        Some(f) if !f.is_empty() => format!("- {}", f.render()),
        _ => {
            let text = fact.case_nodes.get(id).map_or("", |c| c.fact_text.as_str());
            format!("- {}", text.chars().take(300).collect::<String>())
        }
    }
}

/// Most frequent member keywords, ties broken alphabetically.
fn keyword_summary(members: &BTreeSet<String>, onto: &OntologyGraph) -> String {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for id in members {
        if let Some(f) = onto.feature_index.get(id) {
            for (_, values) in f.dimensions() {
                for v in values {
                    *counts.entry(v.as_str()).or_default() += 1;
                }
            }
        }
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    if ranked.is_empty() {
        return format!(
            "Cases {}",
            members.iter().cloned().collect::<Vec<_>>().join(", ")
        );
    }
    ranked
        .into_iter()
        .take(SUMMARY_FALLBACK_KEYWORDS)
        .map(|(k, _)| k)
        .collect::<Vec<_>>()
        .join(", ")
}

/// Partitions the k-NN graph with Leiden and summarizes every community.
pub fn detect_communities(
    onto: &mut OntologyGraph,
    fact: &FactGraph,
    gw: &Gateway,
    provider: &dyn EmbeddingProvider,
    config: &LeidenConfig,
) -> Result<(), GraphError> {
    let ids: Vec<&String> = onto.case_embeddings.keys().collect();
    let index: BTreeMap<&str, usize> = ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let edges: Vec<(usize, usize, f64)> = onto
        .knn_edges
        .iter()
        .map(|(a, b)| (index[a.as_str()], index[b.as_str()], 1.0))
        .collect();
    let graph = WeightedGraph::from_edges(ids.len(), &edges)
        .expect("k-NN edges are loop-free and resolved");
    let partition = leiden(&graph, config);

    let mut groups: Vec<BTreeSet<String>> = vec![BTreeSet::new(); partition.community_count()];
    for (i, &c) in partition.assignment.iter().enumerate() {
        groups[c].insert(ids[i].clone());
    }

    let summaries: Vec<(String, bool)> = groups
        .par_iter()
        .map(|members| {
            let lines: Vec<String> = members
                .iter()
                .map(|id| member_line(fact, onto.feature_index.get(id), id))
                .collect();
            let joined = lines.join("\n");
            match gw.complete(
                Stage::Build,
                TemplateId::CommunitySummary,
                &[("case_features", &joined)],
            ) {
                Ok(text) if !text.trim().is_empty() => Ok((text.trim().to_owned(), false)),
                Ok(_) => Ok((keyword_summary(members, onto), true)),
                Err(e) if e.is_soft() => {
                    warn!("community summary failed, using member keywords: {e}");
                    Ok((keyword_summary(members, onto), true))
                }
                Err(e) => Err(GraphError::from(e)),
            }
        })
        .collect::<Result<_, _>>()?;

    let texts: Vec<&str> = summaries.iter().map(|(t, _)| t.as_str()).collect();
    let vectors = embed_all(provider, &texts)?;

    onto.communities.clear();
    onto.membership.clear();
    for (i, ((members, (summary_text, fallback)), embedding)) in
        groups.into_iter().zip(summaries).zip(vectors).enumerate()
    {
        let community_id = format!("K{i}");
        for m in &members {
            onto.membership.insert(m.clone(), community_id.clone());
        }
        onto.communities.insert(
            community_id.clone(),
            CommunityNode {
                community_id,
                member_case_ids: members,
                summary_text,
                summary_embedding: embedding,
                summary_fallback: fallback,
            },
        );
    }
    onto.modularity = partition.modularity;
    Ok(())
}

/// `Article <number>: <body>` as shown to the model.
pub(crate) fn law_item_text(article: &ArticleDocument) -> String {
    format!("Article {}: {}", article.article_number, article.body_text)
}

pub(crate) fn related_text(interpretations: &[&InterpretationDocument]) -> String {
    if interpretations.is_empty() {
        "none".to_owned()
    } else {
        interpretations
            .iter()
            .map(|j| j.body_text.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

pub fn generate_checklist(
    gw: &Gateway,
    article: &ArticleDocument,
    interpretations: &[&InterpretationDocument],
) -> Result<DiagnosticChecklist, GraphError> {
    let law = law_item_text(article);
    let related = related_text(interpretations);
    let parsed = gw.complete_parsed(
        Stage::Build,
        TemplateId::ChecklistGeneration,
        &[("law_item", &law), ("related", &related)],
        parse_string_list,
    );
    let fallback = || DiagnosticChecklist {
        article_id: article.article_id.clone(),
        items: vec![FALLBACK_CHECKLIST_ITEM.to_owned()],
        fallback: true,
    };
    match parsed {
        Ok(mut items) if !items.is_empty() => {
            items.truncate(MAX_CHECKLIST_ITEMS);
            Ok(DiagnosticChecklist {
                article_id: article.article_id.clone(),
                items,
                fallback: false,
            })
        }
        Ok(_) => Ok(fallback()),
        Err(e) if e.is_soft() => {
            warn!(
                "checklist generation for {} failed: {e}",
                article.article_id
            );
            Ok(fallback())
        }
        Err(e) => Err(e.into()),
    }
}

pub fn build_rule_graph(bundle: &CorpusBundle, gw: &Gateway) -> Result<RuleGraph, GraphError> {
    let mut g = RuleGraph::default();
    for a in &bundle.articles {
        g.article_nodes.insert(a.article_id.clone(), a.clone());
    }
    for j in &bundle.interpretations {
        g.interpretation_nodes
            .insert(j.interpretation_id.clone(), j.clone());
    }
    for a in &bundle.articles {
        for j in &a.interpretation_ids {
            if g.interpretation_nodes.contains_key(j) {
                g.edges_article_interp
                    .insert((a.article_id.clone(), j.clone()));
            }
        }
    }
    for j in &bundle.interpretations {
        for a in &j.target_article_ids {
            if g.article_nodes.contains_key(a) {
                g.edges_article_interp
                    .insert((a.clone(), j.interpretation_id.clone()));
            }
        }
    }
    let checklists: Vec<DiagnosticChecklist> = g
        .article_nodes
        .values()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|a| generate_checklist(gw, a, &g.interpretations_of(&a.article_id)))
        .collect::<Result<_, _>>()?;
    g.checklists = checklists
        .into_iter()
        .map(|c| (c.article_id.clone(), c))
        .collect();
    Ok(g)
}

/// Runs the whole offline build.
pub fn build_hierargraph(
    bundle: &CorpusBundle,
    gw: &Gateway,
    provider: &dyn EmbeddingProvider,
    config: &BuildConfig,
) -> Result<HierarGraph, GraphError> {
    let fact = build_fact_graph(bundle, config.strict)?;
    let features: BTreeMap<String, FeatureExtraction> = bundle
        .cases
        .par_iter()
        .map(|c| {
            Ok((
                c.case_id.clone(),
                extract_ontology_features(gw, Stage::Build, &c.fact_text)?,
            ))
        })
        .collect::<Result<_, GraphError>>()?;
    let mut ontology = build_ontology_graph(&fact, &features, provider, config.knn_k)?;
    detect_communities(&mut ontology, &fact, gw, provider, &config.leiden)?;
    let rule = build_rule_graph(bundle, gw)?;
    let counts = bundle.counts();
    let manifest = BuildManifest {
        llm_backend: gw.backend_name().to_owned(),
        embedding_provider: provider.name().to_owned(),
        embedding_dimension: provider.dimension(),
        knn_k: config.knn_k,
        leiden: config.leiden,
        corpus_fingerprint: bundle.fingerprint(),
        case_count: counts.cases,
        article_count: counts.articles,
        interpretation_count: counts.interpretations,
    };
    Ok(HierarGraph {
        fact,
        ontology,
        rule,
        manifest,
    })
}
