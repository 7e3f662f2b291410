//! Checklist verification of candidate articles and the prune cascade.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::ArticleDocument;
use crate::graph::{law_item_text, related_text, HierarGraph, FALLBACK_CHECKLIST_ITEM};
use crate::llm::parse::parse_tagged_answer;
use crate::llm::{Gateway, LlmError, Stage, TemplateId};
use crate::researcher::RetrievalResult;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChecklistItemResult {
    pub item_text: String,
    /// Verdict used for the decision; unresolved items count as false.
    pub verdict: bool,
    /// No well-formed answer tag even after the re-ask.
    pub unresolved: bool,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationRecord {
    pub article_id: String,
    pub item_results: Vec<ChecklistItemResult>,
    pub is_applicable: bool,
    pub final_rationale: String,
    /// The final decision could not be parsed and the article was pruned conservatively.
    pub decision_failed: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifiedSubgraph {
    pub articles: BTreeSet<String>,
    pub cases: BTreeSet<String>,
    pub offenses: BTreeSet<String>,
    pub records: BTreeMap<String, VerificationRecord>,
    /// Pruned article → reason.
    pub pruned: BTreeMap<String, String>,
    /// Pruned case → the pruned candidate articles it cited.
    pub pruned_cases: BTreeMap<String, BTreeSet<String>>,
    /// Surviving cases that cite no candidate article → reason.
    pub retained_orphans: BTreeMap<String, String>,
    pub pruned_offenses: BTreeSet<String>,
}

impl VerifiedSubgraph {
    pub fn is_empty(&self) -> bool {
        self.articles.is_empty() && self.cases.is_empty() && self.offenses.is_empty()
    }
}

pub fn check_item(
    gw: &Gateway,
    fact_text: &str,
    article: &ArticleDocument,
    related: &str,
    item: &str,
) -> Result<ChecklistItemResult, LlmError> {
    let law = law_item_text(article);
    let outcome = gw.complete_parsed(
        Stage::Auditor,
        TemplateId::AuditorItem,
        &[
            ("law_item", &law),
            ("related", related),
            ("element", item),
            ("case", fact_text),
        ],
        |text| parse_tagged_answer(text).map(|v| (v, text.to_owned())),
    );
    match outcome {
        Ok((verdict, rationale)) => Ok(ChecklistItemResult {
            item_text: item.to_owned(),
            verdict,
            unresolved: false,
            rationale,
        }),
        Err(e) if e.is_soft() => Ok(ChecklistItemResult {
            item_text: item.to_owned(),
            verdict: false,
            unresolved: true,
            rationale: e.to_string(),
        }),
        Err(e) => Err(e),
    }
}

fn render_list(items: &[String]) -> String {
    serde_json::to_string(items).expect("strings serialize")
}

/// The model's final call on applicability given the item verdicts. An
/// unparseable decision prunes the article.
pub fn decide_article(
    gw: &Gateway,
    fact_text: &str,
    article: &ArticleDocument,
    results: &[ChecklistItemResult],
) -> Result<(bool, String, bool), LlmError> {
    let true_list: Vec<String> = results
        .iter()
        .filter(|r| r.verdict)
        .map(|r| r.item_text.clone())
        .collect();
    let false_list: Vec<String> = results
        .iter()
        .filter(|r| !r.verdict)
        .map(|r| {
            if r.unresolved {
                format!("{} (unresolved)", r.item_text)
            } else {
                r.item_text.clone()
            }
        })
        .collect();
    let law = law_item_text(article);
    let outcome = gw.complete_parsed(
        Stage::Auditor,
        TemplateId::AuditorFinal,
        &[
            ("case", fact_text),
            ("law", &law),
            ("true_list", &render_list(&true_list)),
            ("false_list", &render_list(&false_list)),
        ],
        |text| parse_tagged_answer(text).map(|v| (v, text.to_owned())),
    );
    match outcome {
        Ok((applicable, rationale)) => Ok((applicable, rationale, false)),
        Err(e) if e.is_soft() => Ok((false, e.to_string(), true)),
        Err(e) => Err(e),
    }
}

/// Runs one article's checklist in order, then the final decision.
pub fn verify_article(
    gw: &Gateway,
    graph: &HierarGraph,
    fact_text: &str,
    article: &ArticleDocument,
) -> Result<VerificationRecord, LlmError> {
    let fallback = [FALLBACK_CHECKLIST_ITEM.to_owned()];
    let items: &[String] = graph
        .rule
        .checklists
        .get(&article.article_id)
        .map_or(&fallback[..], |c| &c.items[..]);
    let related = related_text(&graph.rule.interpretations_of(&article.article_id));
    let mut item_results = Vec::with_capacity(items.len());
    for item in items {
        item_results.push(check_item(gw, fact_text, article, &related, item)?);
    }
    let (is_applicable, final_rationale, decision_failed) =
        decide_article(gw, fact_text, article, &item_results)?;
    Ok(VerificationRecord {
        article_id: article.article_id.clone(),
        item_results,
        is_applicable,
        final_rationale,
        decision_failed,
    })
}

/// Applies the prune cascade to a finished set of verification records.
///
/// * an article survives iff its record says applicable;
/// * a case is pruned iff every candidate article it cites was pruned;
///   cases citing no candidate article are kept as orphans;
/// * an offense survives iff some surviving candidate case carries it.
pub fn prune(
    graph: &HierarGraph,
    result: &RetrievalResult,
    records: BTreeMap<String, VerificationRecord>,
) -> VerifiedSubgraph {
    let mut out = VerifiedSubgraph::default();
    for (id, record) in &records {
        if record.is_applicable {
            out.articles.insert(id.clone());
        } else {
            let reason = if record.decision_failed {
                "final decision unparseable"
            } else {
                "judged inapplicable"
            };
            out.pruned.insert(id.clone(), reason.to_owned());
        }
    }
    for case_id in result.case_ids() {
        let cited: BTreeSet<String> = graph
            .fact
            .cited_articles(case_id)
            .filter(|a| result.articles.contains(*a))
            .map(str::to_owned)
            .collect();
        if cited.is_empty() {
            out.retained_orphans
                .insert(case_id.to_owned(), "cites no candidate article".to_owned());
            out.cases.insert(case_id.to_owned());
        } else if cited.iter().all(|a| out.pruned.contains_key(a)) {
            out.pruned_cases.insert(case_id.to_owned(), cited);
        } else {
            out.cases.insert(case_id.to_owned());
        }
    }

    let mut candidate_offenses: BTreeSet<String> =
        result.predicted_charges.iter().cloned().collect();
    for case_id in result.case_ids() {
        if let Some(c) = graph.case(case_id) {
            candidate_offenses.extend(c.charge_labels.iter().cloned());
        }
    }
    for offense in candidate_offenses {
        let supported = out.cases.iter().any(|id| {
            graph
                .case(id)
                .is_some_and(|c| c.charge_labels.iter().any(|l| *l == offense))
        });
        if supported {
            out.offenses.insert(offense);
        } else {
            out.pruned_offenses.insert(offense);
        }
    }
    out.records = records;
    out
}

/// Verifies every candidate article (articles in parallel, items in order)
/// and prunes.
pub fn audit(
    gw: &Gateway,
    graph: &HierarGraph,
    result: &RetrievalResult,
) -> Result<VerifiedSubgraph, LlmError> {
    let articles: Vec<&ArticleDocument> = result
        .articles
        .iter()
        .filter_map(|id| graph.article(id))
        .collect();
    let records: Vec<VerificationRecord> = articles
        .par_iter()
        .map(|a| verify_article(gw, graph, &result.query.fact_text, a))
        .collect::<Result<_, _>>()?;
    let records = records
        .into_iter()
        .map(|r| (r.article_id.clone(), r))
        .collect();
    Ok(prune(graph, result, records))
}
