//! Turns a verified subgraph into numbered evidence and a final judgment.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::auditor::VerifiedSubgraph;
use crate::corpus::{CaseDocument, Term};
use crate::graph::{law_item_text, HierarGraph};
use crate::llm::parse::{parse_citations, parse_sentencing_json};
use crate::llm::{Gateway, LlmError, Stage, TemplateId};
use crate::researcher::{NodeKind, RetrievalResult};

pub const DEFAULT_MAX_BLOCKS: usize = 12;
const CASE_EXCERPT_CHARS: usize = 600;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextBlock {
    /// 1-based.
    pub number: usize,
    pub node_id: String,
    pub node_kind: NodeKind,
    pub text: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceContext {
    pub blocks: Vec<ContextBlock>,
    /// Verified nodes left out because of the block cap.
    pub dropped: Vec<String>,
}

impl EvidenceContext {
    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn render(&self) -> String {
        if self.blocks.is_empty() {
            return "(no retrieved context)".to_owned();
        }
        self.blocks
            .iter()
            .map(|b| format!("[{}] {}", b.number, b.text))
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn block_of(&self, node_id: &str) -> Option<usize> {
        self.blocks
            .iter()
            .find(|b| b.node_id == node_id)
            .map(|b| b.number)
    }

    pub fn node_ids(&self) -> BTreeSet<&str> {
        self.blocks.iter().map(|b| b.node_id.as_str()).collect()
    }
}

fn case_outcome(case: &CaseDocument) -> String {
    let excerpt: String = case.fact_text.chars().take(CASE_EXCERPT_CHARS).collect();
    let term = case
        .term()
        .map_or_else(|| "unknown".to_owned(), |t| t.to_string());
    format!(
        "Precedent {}: {} Outcome: charges {}; articles {}; term {}.",
        case.case_id,
        excerpt.trim(),
        case.charge_labels.join(", "),
        case.cited_article_ids.join(", "),
        term
    )
}

fn offense_summary(graph: &HierarGraph, name: &str) -> String {
    let cases = graph
        .fact
        .offense_nodes
        .get(name)
        .map_or(0, |o| o.member_case_ids.len());
    let mut articles: BTreeSet<&str> = BTreeSet::new();
    if let Some(o) = graph.fact.offense_nodes.get(name) {
        for id in &o.member_case_ids {
            articles.extend(graph.fact.cited_articles(id));
        }
    }
    let articles: Vec<&str> = articles.into_iter().collect();
    format!(
        "Offense {name}: charged in {cases} precedent case(s); articles applied: {}.",
        if articles.is_empty() {
            "none".to_owned()
        } else {
            articles.join(", ")
        }
    )
}

/// Retrieval scores of case candidates, for prioritising cases under the cap.
pub fn case_scores(result: &RetrievalResult) -> BTreeMap<String, f64> {
    result
        .candidates
        .iter()
        .filter(|c| c.node_kind == NodeKind::Case)
        .filter_map(|c| c.score.map(|s| (c.node_id.clone(), s)))
        .collect()
}

/// Numbers the verified nodes: articles by id, then cases, then offenses. At
/// most `max_blocks` are kept; articles win, then cases by score (unscored
/// last, ties by id), then offenses by name.
pub fn build_context(
    graph: &HierarGraph,
    verified: &VerifiedSubgraph,
    scores: &BTreeMap<String, f64>,
    max_blocks: usize,
) -> EvidenceContext {
    let mut ranked_cases: Vec<&String> = verified.cases.iter().collect();
    ranked_cases.sort_by(|a, b| {
        let sa = scores.get(*a).copied();
        let sb = scores.get(*b).copied();
        match (sa, sb) {
            (Some(x), Some(y)) => y.partial_cmp(&x).unwrap_or(Ordering::Equal),
            (Some(_), None) => Ordering::Less,
            (None, Some(_)) => Ordering::Greater,
            (None, None) => Ordering::Equal,
        }
        .then_with(|| a.cmp(b))
    });

    let mut budget = max_blocks;
    let mut take = |ids: Vec<&String>, dropped: &mut Vec<String>| -> Vec<String> {
        let mut kept = Vec::new();
        for id in ids {
            if budget > 0 {
                budget -= 1;
                kept.push(id.clone());
            } else {
                dropped.push(id.clone());
            }
        }
        kept
    };
    let mut dropped = Vec::new();
    let articles = take(verified.articles.iter().collect(), &mut dropped);
    let mut cases = take(ranked_cases, &mut dropped);
    let offenses = take(verified.offenses.iter().collect(), &mut dropped);
    cases.sort();

    let mut blocks = Vec::new();
    let mut push = |node_id: String, node_kind: NodeKind, text: String| {
        blocks.push(ContextBlock {
            number: blocks.len() + 1,
            node_id,
            node_kind,
            text,
        });
    };
    for id in articles {
        if let Some(a) = graph.article(&id) {
            push(id, NodeKind::Article, law_item_text(a));
        }
    }
    for id in cases {
        if let Some(c) = graph.case(&id) {
            let text = case_outcome(c);
            push(id, NodeKind::Case, text);
        }
    }
    for name in offenses {
        let text = offense_summary(graph, &name);
        push(name, NodeKind::Offense, text);
    }
    EvidenceContext { blocks, dropped }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trace {
    Block(usize),
    Uncited,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judgment {
    pub charges: Vec<String>,
    /// Graph article ids where the model's reference resolved, otherwise as written.
    pub articles: Vec<String>,
    pub term: Option<Term>,
    pub verdict_text: String,
    /// `[n]` markers in the verdict that name an existing block.
    pub citations: BTreeSet<usize>,
    /// Markers pointing past the context.
    pub invalid_citations: BTreeSet<usize>,
    pub traceability: BTreeMap<String, Trace>,
    /// Adjudicated with an empty context.
    pub context_free: bool,
    /// The structured sentencing reply was unusable; structured fields are empty.
    pub structured_failed: bool,
    pub verdict_failed: bool,
}

impl Judgment {
    pub fn traceable_articles(&self) -> impl Iterator<Item = (&str, usize)> {
        self.traceability.iter().filter_map(|(a, t)| match t {
            Trace::Block(n) => Some((a.as_str(), *n)),
            Trace::Uncited => None,
        })
    }
}

fn case_description(fact_text: &str, defendants: &[String]) -> String {
    if defendants.is_empty() {
        fact_text.to_owned()
    } else {
        format!("{fact_text}\nDefendants: {}", defendants.join(", "))
    }
}

/// Two sequential calls: the structured sentencing record, then the cited
/// narrative. Soft failures of either degrade to flagged empty fields.
pub fn adjudicate(
    gw: &Gateway,
    graph: &HierarGraph,
    fact_text: &str,
    defendants: &[String],
    context: &EvidenceContext,
) -> Result<Judgment, LlmError> {
    let context_list = context.render();
    let description = case_description(fact_text, defendants);
    let candidates: Vec<&str> = context
        .blocks
        .iter()
        .filter(|b| b.node_kind == NodeKind::Offense)
        .map(|b| b.node_id.as_str())
        .collect();
    let candidates = serde_json::to_string(&candidates).expect("strings serialize");

    let structured = match gw.complete_parsed(
        Stage::Adjudicator,
        TemplateId::SentencingJson,
        &[
            ("context_list", &context_list),
            ("candidate_charges", &candidates),
            ("case_description", &description),
        ],
        parse_sentencing_json,
    ) {
        Ok(s) => Some(s),
        Err(e) if e.is_soft() => {
            log::warn!("sentencing reply unusable: {e}");
            None
        }
        Err(e) => return Err(e),
    };

    let verdict = match gw.complete(
        Stage::Adjudicator,
        TemplateId::Verdict,
        &[
            ("context_list", &context_list),
            ("case_description", &description),
        ],
    ) {
        Ok(t) => Some(t),
        Err(e) if e.is_soft() => {
            log::warn!("verdict call failed: {e}");
            None
        }
        Err(e) => return Err(e),
    };

    let n = context.len();
    let (citations, invalid_citations) = match &verdict {
        Some(text) => parse_citations(text)
            .into_iter()
            .partition(|c| (1..=n).contains(c)),
        None => Default::default(),
    };

    let structured_failed = structured.is_none();
    let (charges, articles, term) = match structured {
        Some(s) => {
            let mut articles: Vec<String> = Vec::new();
            for reference in &s.law_article {
                let id = graph
                    .resolve_article(reference)
                    .unwrap_or(reference.trim())
                    .to_owned();
                if !articles.contains(&id) {
                    articles.push(id);
                }
            }
            (s.charge_name, articles, Some(s.term))
        }
        None => (Vec::new(), Vec::new(), None),
    };
    let traceability = articles
        .iter()
        .map(|a| {
            let trace = context.block_of(a).map_or(Trace::Uncited, Trace::Block);
            (a.clone(), trace)
        })
        .collect();

    Ok(Judgment {
        charges,
        articles,
        term,
        verdict_failed: verdict.is_none(),
        verdict_text: verdict.unwrap_or_default(),
        citations,
        invalid_citations,
        traceability,
        context_free: context.is_empty(),
        structured_failed,
    })
}
