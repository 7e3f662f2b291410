//! Prediction and retrieval metrics, reliability split, distractor injection,
//! the flat single-index baseline and report tables.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CorpusBundle, Term};
use crate::embedding::{EmbeddingError, EmbeddingProvider, VectorStore};
use crate::researcher::NodeKind;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("no records to score")]
    NoRecords,
    #[error("no record has a finite term on both sides")]
    NoFiniteTerms,
    #[error("no gold claims to check")]
    NoGoldClaims,
    #[error("article {0} is not in the store")]
    UnknownArticle(String),
    #[error("store has {available} non-gold articles; {needed} needed")]
    StoreTooSmall { available: usize, needed: usize },
    #[error("node id {0} is used by more than one document")]
    DuplicateId(String),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outcome {
    pub charges: BTreeSet<String>,
    pub articles: BTreeSet<String>,
    pub term: Option<Term>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub case_id: String,
    pub category: Option<String>,
    pub gold: Outcome,
    pub predicted: Outcome,
    pub retrieved_article_ids: BTreeSet<String>,
    pub retrieved_context_size: usize,
    /// The pipeline could not produce structured output for this case.
    pub failed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextKind {
    Article,
    Case,
    Offense,
    Interpretation,
}

impl From<NodeKind> for ContextKind {
    fn from(k: NodeKind) -> Self {
        match k {
            NodeKind::Article => ContextKind::Article,
            NodeKind::Case => ContextKind::Case,
            NodeKind::Offense => ContextKind::Offense,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextItem {
    pub node_id: String,
    pub kind: ContextKind,
    /// Cited articles for a case, target articles for an interpretation.
    pub linked_articles: BTreeSet<String>,
}

impl ContextItem {
    pub fn article(id: impl Into<String>) -> Self {
        ContextItem {
            node_id: id.into(),
            kind: ContextKind::Article,
            linked_articles: BTreeSet::new(),
        }
    }
}

/// What one query retrieved, against its gold evidence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalJudgment {
    pub case_id: String,
    pub contexts: Vec<ContextItem>,
    pub gold_articles: BTreeSet<String>,
    pub gold_charges: BTreeSet<String>,
}

impl RetrievalJudgment {
    /// Deterministic relevance proxy: an article must be gold; a case or
    /// interpretation must link to a gold article; an offense must be a gold charge.
    pub fn is_relevant(&self, c: &ContextItem) -> bool {
        match c.kind {
            ContextKind::Article => self.gold_articles.contains(&c.node_id),
            ContextKind::Case | ContextKind::Interpretation => {
                !c.linked_articles.is_disjoint(&self.gold_articles)
            }
            ContextKind::Offense => self.gold_charges.contains(&c.node_id),
        }
    }

    pub fn retrieved_articles(&self) -> BTreeSet<&str> {
        self.contexts
            .iter()
            .filter(|c| c.kind == ContextKind::Article)
            .map(|c| c.node_id.as_str())
            .collect()
    }
}

fn exact_match<'a>(
    pairs: impl Iterator<Item = (&'a BTreeSet<String>, &'a BTreeSet<String>)>,
) -> Result<f64, MetricError> {
    let (mut n, mut hits) = (0usize, 0usize);
    for (p, g) in pairs {
        n += 1;
        hits += usize::from(p == g);
    }
    if n == 0 {
        return Err(MetricError::NoRecords);
    }
    Ok(hits as f64 / n as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn f1(&self) -> f64 {
        let p = if self.tp + self.fp == 0 {
            0.0
        } else {
            self.tp as f64 / (self.tp + self.fp) as f64
        };
        let r = if self.tp + self.fn_ == 0 {
            0.0
        } else {
            self.tp as f64 / (self.tp + self.fn_) as f64
        };
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

fn confusion<'a>(
    pairs: impl Iterator<Item = (&'a BTreeSet<String>, &'a BTreeSet<String>)>,
) -> Result<Confusion, MetricError> {
    let mut c = Confusion::default();
    let mut n = 0usize;
    for (p, g) in pairs {
        n += 1;
        c.tp += p.intersection(g).count();
        c.fp += p.difference(g).count();
        c.fn_ += g.difference(p).count();
    }
    if n == 0 {
        return Err(MetricError::NoRecords);
    }
    Ok(c)
}

/// Exact charge-set match rate.
pub fn accuracy(records: &[PredictionRecord]) -> Result<f64, MetricError> {
    exact_match(
        records
            .iter()
            .map(|r| (&r.predicted.charges, &r.gold.charges)),
    )
}

/// Micro-averaged F1 over pooled charge labels.
pub fn micro_f1(records: &[PredictionRecord]) -> Result<f64, MetricError> {
    confusion(
        records
            .iter()
            .map(|r| (&r.predicted.charges, &r.gold.charges)),
    )
    .map(|c| c.f1())
}

pub fn article_accuracy(records: &[PredictionRecord]) -> Result<f64, MetricError> {
    exact_match(
        records
            .iter()
            .map(|r| (&r.predicted.articles, &r.gold.articles)),
    )
}

pub fn article_micro_f1(records: &[PredictionRecord]) -> Result<f64, MetricError> {
    confusion(
        records
            .iter()
            .map(|r| (&r.predicted.articles, &r.gold.articles)),
    )
    .map(|c| c.f1())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mae {
    pub mae: f64,
    pub included: usize,
    /// Records where either side is life, death or missing.
    pub excluded: usize,
}

pub fn mae_months(records: &[PredictionRecord]) -> Result<Mae, MetricError> {
    if records.is_empty() {
        return Err(MetricError::NoRecords);
    }
    let mut sum = 0.0;
    let mut included = 0usize;
    for r in records {
        let months = |t: &Option<Term>| t.as_ref().and_then(Term::months);
        if let (Some(p), Some(g)) = (months(&r.predicted.term), months(&r.gold.term)) {
            sum += (f64::from(p) - f64::from(g)).abs();
            included += 1;
        }
    }
    if included == 0 {
        return Err(MetricError::NoFiniteTerms);
    }
    Ok(Mae {
        mae: sum / included as f64,
        included,
        excluded: records.len() - included,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Effectiveness {
    pub value: f64,
    pub relevant: usize,
    pub retrieved: usize,
    /// Nothing was retrieved; the value is defined as 0.
    pub empty: bool,
}

/// Share of all retrieved contexts that are relevant to their query's gold evidence.
pub fn retrieval_effectiveness(judgments: &[RetrievalJudgment]) -> Effectiveness {
    let mut relevant = 0usize;
    let mut retrieved = 0usize;
    for j in judgments {
        retrieved += j.contexts.len();
        relevant += j.contexts.iter().filter(|c| j.is_relevant(c)).count();
    }
    Effectiveness {
        value: if retrieved == 0 {
            0.0
        } else {
            relevant as f64 / retrieved as f64
        },
        relevant,
        retrieved,
        empty: retrieved == 0,
    }
}

/// Share of gold articles, pooled over queries, with no retrieved article node.
pub fn error_rate(judgments: &[RetrievalJudgment]) -> Result<f64, MetricError> {
    let mut claims = 0usize;
    let mut supported = 0usize;
    for j in judgments {
        let got = j.retrieved_articles();
        claims += j.gold_articles.len();
        supported += j
            .gold_articles
            .iter()
            .filter(|a| got.contains(a.as_str()))
            .count();
    }
    if claims == 0 {
        return Err(MetricError::NoGoldClaims);
    }
    Ok(1.0 - supported as f64 / claims as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reliability {
    TraceableCorrect,
    UntraceableCorrect,
    Incorrect,
}

pub fn classify_reliability(record: &PredictionRecord) -> Reliability {
    if record.predicted.charges != record.gold.charges {
        Reliability::Incorrect
    } else if record
        .gold
        .articles
        .is_subset(&record.retrieved_article_ids)
    {
        Reliability::TraceableCorrect
    } else {
        Reliability::UntraceableCorrect
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReliabilitySplit {
    pub traceable_correct: usize,
    pub untraceable_correct: usize,
    pub incorrect: usize,
}

pub fn reliability_split(records: &[PredictionRecord]) -> ReliabilitySplit {
    let mut s = ReliabilitySplit::default();
    for r in records {
        match classify_reliability(r) {
            Reliability::TraceableCorrect => s.traceable_correct += 1,
            Reliability::UntraceableCorrect => s.untraceable_correct += 1,
            Reliability::Incorrect => s.incorrect += 1,
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistractorSet {
    pub gold: BTreeSet<String>,
    pub distractors: BTreeSet<String>,
    /// Per gold article, its chosen distractors in similarity order.
    pub per_gold: BTreeMap<String, Vec<String>>,
}

impl DistractorSet {
    pub fn augmented(&self) -> BTreeSet<String> {
        self.gold.union(&self.distractors).cloned().collect()
    }
}

/// For every gold article, its `k_per_gold` most similar non-gold articles
/// in `store` (ties by id), deduplicated across gold articles.
pub fn inject_distractors(
    gold: &BTreeSet<String>,
    store: &VectorStore,
    k_per_gold: usize,
) -> Result<DistractorSet, MetricError> {
    let available = store.iter().filter(|(id, _)| !gold.contains(*id)).count();
    let needed = gold.len() * k_per_gold;
    if available < needed {
        return Err(MetricError::StoreTooSmall { available, needed });
    }
    let mut per_gold = BTreeMap::new();
    let mut distractors = BTreeSet::new();
    for g in gold {
        let v = store
            .get(g)
            .ok_or_else(|| MetricError::UnknownArticle(g.clone()))?;
        let picked: Vec<String> = store
            .ranked_filtered(v, |id| !gold.contains(id))?
            .into_iter()
            .take(k_per_gold)
            .map(|s| s.id)
            .collect();
        distractors.extend(picked.iter().cloned());
        per_gold.insert(g.clone(), picked);
    }
    Ok(DistractorSet {
        gold: gold.clone(),
        distractors,
        per_gold,
    })
}

/// Every case, article and interpretation embedded over raw text into one
/// untyped store.
#[derive(Debug, Clone)]
pub struct FlatIndex {
    store: VectorStore,
    items: BTreeMap<String, ContextItem>,
}

impl FlatIndex {
    pub fn build(
        bundle: &CorpusBundle,
        provider: &dyn EmbeddingProvider,
    ) -> Result<Self, MetricError> {
        let mut items = BTreeMap::new();
        let mut texts: Vec<(String, &str)> = Vec::new();
        let mut add = |item: ContextItem| -> Result<(), MetricError> {
            if items.contains_key(&item.node_id) {
                return Err(MetricError::DuplicateId(item.node_id));
            }
            items.insert(item.node_id.clone(), item);
            Ok(())
        };
        for c in &bundle.cases {
            add(ContextItem {
                node_id: c.case_id.clone(),
                kind: ContextKind::Case,
                linked_articles: c.cited_article_ids.iter().cloned().collect(),
            })?;
            texts.push((c.case_id.clone(), &c.fact_text));
        }
        for a in &bundle.articles {
            add(ContextItem::article(a.article_id.clone()))?;
            texts.push((a.article_id.clone(), &a.body_text));
        }
        for j in &bundle.interpretations {
            add(ContextItem {
                node_id: j.interpretation_id.clone(),
                kind: ContextKind::Interpretation,
                linked_articles: j.target_article_ids.iter().cloned().collect(),
            })?;
            texts.push((j.interpretation_id.clone(), &j.body_text));
        }
        let bodies: Vec<&str> = texts.iter().map(|(_, t)| *t).collect();
        let vectors = provider.embed_batch(&bodies)?;
        let store = VectorStore::from_entries(texts.into_iter().map(|(id, _)| id).zip(vectors))?;
        Ok(FlatIndex { store, items })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Article vectors only, for distractor selection.
    pub fn article_store(&self) -> Result<VectorStore, MetricError> {
        let entries = self
            .store
            .iter()
            .filter(|(id, _)| self.items[*id].kind == ContextKind::Article)
            .map(|(id, v)| (id.to_owned(), v.clone()));
        Ok(VectorStore::from_entries(entries)?)
    }
}

/// One type-blind top-k over the flat index.
pub fn run_flat_baseline(
    index: &FlatIndex,
    provider: &dyn EmbeddingProvider,
    fact_text: &str,
    k: usize,
) -> Result<Vec<ContextItem>, MetricError> {
    let q = provider.embed(fact_text)?;
    Ok(crate::embedding::top_k(&q, &index.store, k)?
        .into_iter()
        .map(|s| index.items[&s.id].clone())
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: usize,
    pub accuracy: f64,
    pub micro_f1: f64,
}

/// Runs `pipeline` once per k and scores each run.
pub fn sweep_k<E>(
    ks: &[usize],
    mut pipeline: impl FnMut(usize) -> Result<Vec<PredictionRecord>, E>,
) -> Result<Vec<SweepRow>, E>
where
    E: From<MetricError>,
{
    let mut rows = Vec::with_capacity(ks.len());
    for &k in ks {
        let records = pipeline(k)?;
        rows.push(SweepRow {
            k,
            accuracy: accuracy(&records)?,
            micro_f1: micro_f1(&records)?,
        });
    }
    Ok(rows)
}

pub fn render_sweep(rows: &[SweepRow]) -> String {
    let mut out = format!("{:>3}  {:>8}  {:>8}\n", "k", "ACC", "F1");
    for r in rows {
        let _ = writeln!(
            out,
            "{:>3}  {:>8.2}  {:>8.2}",
            r.k,
            100.0 * r.accuracy,
            100.0 * r.micro_f1
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryRow {
    pub category: String,
    pub n: usize,
    pub accuracy: f64,
    pub micro_f1: f64,
    pub article_accuracy: f64,
    pub article_micro_f1: f64,
    pub mae_months: Option<f64>,
    pub mae_excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Per category in name order, then "All".
    pub rows: Vec<CategoryRow>,
    pub reliability: ReliabilitySplit,
    pub retrieval_effectiveness: Effectiveness,
    pub error_rate: Option<f64>,
    pub failed_records: usize,
    pub relevance_mode: String,
}

pub const ALL: &str = "All";

fn category_row(name: &str, records: &[PredictionRecord]) -> Result<CategoryRow, MetricError> {
    let mae = match mae_months(records) {
        Ok(m) => Some(m),
        Err(MetricError::NoFiniteTerms) => None,
        Err(e) => return Err(e),
    };
    Ok(CategoryRow {
        category: name.to_owned(),
        n: records.len(),
        accuracy: accuracy(records)?,
        micro_f1: micro_f1(records)?,
        article_accuracy: article_accuracy(records)?,
        article_micro_f1: article_micro_f1(records)?,
        mae_months: mae.map(|m| m.mae),
        mae_excluded: mae.map_or(records.len(), |m| m.excluded),
    })
}

pub fn build_report(
    records: &[PredictionRecord],
    judgments: &[RetrievalJudgment],
) -> Result<MetricReport, MetricError> {
    let mut by_category: BTreeMap<&str, Vec<PredictionRecord>> = BTreeMap::new();
    for r in records {
        if let Some(c) = &r.category {
            by_category.entry(c.as_str()).or_default().push(r.clone());
        }
    }
    let mut rows = Vec::new();
    for (name, rs) in &by_category {
        rows.push(category_row(name, rs)?);
    }
    rows.push(category_row(ALL, records)?);
    let error_rate = match error_rate(judgments) {
        Ok(v) => Some(v),
        Err(MetricError::NoGoldClaims) => None,
        Err(e) => return Err(e),
    };
    Ok(MetricReport {
        rows,
        reliability: reliability_split(records),
        retrieval_effectiveness: retrieval_effectiveness(judgments),
        error_rate,
        failed_records: records.iter().filter(|r| r.failed).count(),
        relevance_mode:
            "deterministic proxy: gold article membership / shared gold article / gold charge"
                .to_owned(),
    })
}

fn pct(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

/// Aligned plain-text rendering of a report.
pub fn render_report(report: &MetricReport) -> String {
    let header = [
        "Category", "N", "ACC", "F1", "Art-ACC", "Art-F1", "MAE", "MAE-excl",
    ];
    let body: Vec<[String; 8]> = report
        .rows
        .iter()
        .map(|r| {
            [
                r.category.clone(),
                r.n.to_string(),
                pct(r.accuracy),
                pct(r.micro_f1),
                pct(r.article_accuracy),
                pct(r.article_micro_f1),
                r.mae_months
                    .map_or_else(|| "-".to_owned(), |m| format!("{m:.2}")),
                r.mae_excluded.to_string(),
            ]
        })
        .collect();
    let mut widths = header.map(str::len);
    for row in &body {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    let line = |cells: Vec<&str>, out: &mut String| {
        let parts: Vec<String> = cells
            .iter()
            .zip(widths)
            .enumerate()
            .map(|(i, (c, w))| {
                if i == 0 {
                    format!("{c:<w$}")
                } else {
                    format!("{c:>w$}")
                }
            })
            .collect();
        out.push_str(parts.join("  ").trim_end());
        out.push('\n');
    };
    line(header.to_vec(), &mut out);
    for row in &body {
        line(row.iter().map(String::as_str).collect(), &mut out);
    }
    let s = &report.reliability;
    let _ = writeln!(
        out,
        "\nreliability: traceable_correct={} untraceable_correct={} incorrect={}",
        s.traceable_correct, s.untraceable_correct, s.incorrect
    );
    let e = &report.retrieval_effectiveness;
    let _ = writeln!(
        out,
        "retrieval effectiveness: {} ({} / {} contexts{})",
        pct(e.value),
        e.relevant,
        e.retrieved,
        if e.empty { ", nothing retrieved" } else { "" }
    );
    let _ = writeln!(
        out,
        "error rate: {}",
        report.error_rate.map_or_else(|| "-".to_owned(), pct)
    );
    let _ = writeln!(out, "failed records: {}", report.failed_records);
    let _ = writeln!(out, "relevance: {}", report.relevance_mode);
    out
}
