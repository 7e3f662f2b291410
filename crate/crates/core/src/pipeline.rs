//! End-to-end query and evaluation runs over a built graph.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adjudicator::{
    adjudicate, build_context, case_scores, EvidenceContext, Judgment, DEFAULT_MAX_BLOCKS,
};
use crate::auditor::{audit, VerifiedSubgraph};
use crate::corpus::CaseDocument;
use crate::embedding::EmbeddingProvider;
use crate::evaluation::{
    ContextItem, ContextKind, MetricError, Outcome, PredictionRecord, RetrievalJudgment,
};
use crate::graph::{GraphError, HierarGraph};
use crate::llm::{Gateway, LlmError};
use crate::researcher::{research, NodeKind, ResearchConfig, ResearchError, RetrievalResult};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Research(#[from] ResearchError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

impl PipelineError {
    /// The failure came from the language model backend.
    pub fn is_backend(&self) -> bool {
        matches!(
            self,
            PipelineError::Llm(_)
                | PipelineError::Research(ResearchError::Llm(_))
                | PipelineError::Research(ResearchError::Graph(GraphError::Llm(_)))
                | PipelineError::Graph(GraphError::Llm(_))
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub research: ResearchConfig,
    pub max_blocks: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            research: ResearchConfig::default(),
            max_blocks: DEFAULT_MAX_BLOCKS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryOutcome {
    pub retrieval: RetrievalResult,
    pub verified: VerifiedSubgraph,
    pub context: EvidenceContext,
    pub judgment: Judgment,
}

pub fn run_query(
    gw: &Gateway,
    provider: &dyn EmbeddingProvider,
    graph: &HierarGraph,
    fact_text: &str,
    defendants: &[String],
    config: &PipelineConfig,
) -> Result<QueryOutcome, PipelineError> {
    let retrieval = research(gw, provider, graph, fact_text, defendants, &config.research)?;
    let verified = audit(gw, graph, &retrieval)?;
    let context = build_context(
        graph,
        &verified,
        &case_scores(&retrieval),
        config.max_blocks,
    );
    let judgment = adjudicate(gw, graph, fact_text, defendants, &context)?;
    Ok(QueryOutcome {
        retrieval,
        verified,
        context,
        judgment,
    })
}

fn gold_outcome(case: &CaseDocument) -> Outcome {
    Outcome {
        charges: case.charge_labels.iter().cloned().collect(),
        articles: case.cited_article_ids.iter().cloned().collect(),
        term: case.term(),
    }
}

fn context_item(graph: &HierarGraph, node_id: &str, kind: NodeKind) -> ContextItem {
    let linked_articles = match kind {
        NodeKind::Case => graph
            .fact
            .cited_articles(node_id)
            .map(str::to_owned)
            .collect(),
        _ => Default::default(),
    };
    ContextItem {
        node_id: node_id.to_owned(),
        kind: ContextKind::from(kind),
        linked_articles,
    }
}

/// The evidence handed to the adjudicator, scored against `case`'s gold labels.
pub fn context_judgment(
    graph: &HierarGraph,
    case: &CaseDocument,
    context: &EvidenceContext,
) -> RetrievalJudgment {
    RetrievalJudgment {
        case_id: case.case_id.clone(),
        contexts: context
            .blocks
            .iter()
            .map(|b| context_item(graph, &b.node_id, b.node_kind))
            .collect(),
        gold_articles: case.cited_article_ids.iter().cloned().collect(),
        gold_charges: case.charge_labels.iter().cloned().collect(),
    }
}

/// Unverified research output (cases plus their cited articles), scored
/// against `case`'s gold labels.
pub fn retrieval_judgment(
    graph: &HierarGraph,
    case: &CaseDocument,
    retrieval: &RetrievalResult,
) -> RetrievalJudgment {
    let mut contexts: Vec<ContextItem> = retrieval
        .articles
        .iter()
        .map(|a| ContextItem::article(a.clone()))
        .collect();
    contexts.extend(
        retrieval
            .candidates
            .iter()
            .map(|c| context_item(graph, &c.node_id, c.node_kind)),
    );
    RetrievalJudgment {
        case_id: case.case_id.clone(),
        contexts,
        gold_articles: case.cited_article_ids.iter().cloned().collect(),
        gold_charges: case.charge_labels.iter().cloned().collect(),
    }
}

pub fn prediction_record(case: &CaseDocument, outcome: &QueryOutcome) -> PredictionRecord {
    let j = &outcome.judgment;
    PredictionRecord {
        case_id: case.case_id.clone(),
        category: case.category.clone(),
        gold: gold_outcome(case),
        predicted: Outcome {
            charges: j.charges.iter().cloned().collect(),
            articles: j.articles.iter().cloned().collect(),
            term: j.term,
        },
        retrieved_article_ids: outcome
            .context
            .blocks
            .iter()
            .filter(|b| b.node_kind == NodeKind::Article)
            .map(|b| b.node_id.clone())
            .collect(),
        retrieved_context_size: outcome.context.len(),
        failed: j.structured_failed,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRun {
    /// Ordered by case id.
    pub records: Vec<PredictionRecord>,
    pub judgments: Vec<RetrievalJudgment>,
}

/// Runs every test case through the pipeline, in parallel, and folds the
/// results in case-id order.
pub fn evaluate_cases(
    gw: &Gateway,
    provider: &dyn EmbeddingProvider,
    graph: &HierarGraph,
    cases: &[CaseDocument],
    config: &PipelineConfig,
) -> Result<EvaluationRun, PipelineError> {
    let mut rows: Vec<(PredictionRecord, RetrievalJudgment)> = cases
        .par_iter()
        .map(|case| {
            let outcome = run_query(
                gw,
                provider,
                graph,
                &case.fact_text,
                &case.defendants,
                config,
            )?;
            Ok((
                prediction_record(case, &outcome),
                context_judgment(graph, case, &outcome.context),
            ))
        })
        .collect::<Result<_, PipelineError>>()?;
    rows.sort_by(|a, b| a.0.case_id.cmp(&b.0.case_id));
    let (records, judgments) = rows.into_iter().unzip();
    Ok(EvaluationRun { records, judgments })
}
