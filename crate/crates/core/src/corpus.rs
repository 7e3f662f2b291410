//! Offline corpus ingest.
//!
//! A corpus is three line-delimited JSON files, one document per line:
//! cases, articles and interpretations. Ingest never aborts on a bad record;
//! every rejected line is reported with its file, line number and field so
//! that `accepted + rejected == record lines` holds for every file.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Penalty imposed on a defendant. Exactly one form is active by construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "form", content = "months")]
pub enum Term {
    Months(u32),
    Life,
    Death,
}

impl Term {
    pub fn months(&self) -> Option<u32> {
        match self {
            Term::Months(m) => Some(*m),
            _ => None,
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Months(m) => write!(f, "{m} months"),
            Term::Life => f.write_str("life imprisonment"),
            Term::Death => f.write_str("death penalty"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseDocument {
    pub case_id: String,
    pub fact_text: String,
    #[serde(default)]
    pub defendants: Vec<String>,
    #[serde(default)]
    pub charge_labels: Vec<String>,
    #[serde(default)]
    pub cited_article_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub penalty_months: Option<u32>,
    #[serde(default)]
    pub life_imprisonment: bool,
    #[serde(default)]
    pub death_penalty: bool,
    /// Optional charge-category tag used to split evaluation reports.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
}

impl CaseDocument {
    /// The active penalty form, if the record carries one.
    pub fn term(&self) -> Option<Term> {
        if self.death_penalty {
            Some(Term::Death)
        } else if self.life_imprisonment {
            Some(Term::Life)
        } else {
            self.penalty_months.map(Term::Months)
        }
    }

    fn check(&self) -> Result<(), (&'static str, String)> {
        if self.case_id.trim().is_empty() {
            return Err(("case_id", "must be non-empty".into()));
        }
        if self.fact_text.trim().is_empty() {
            return Err(("fact_text", "must be non-empty".into()));
        }
        let active = usize::from(self.penalty_months.is_some())
            + usize::from(self.life_imprisonment)
            + usize::from(self.death_penalty);
        if active > 1 {
            return Err((
                "penalty_months",
                "at most one of penalty_months, life_imprisonment, death_penalty may be set".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArticleDocument {
    pub article_id: String,
    pub article_number: String,
    pub body_text: String,
    #[serde(default)]
    pub interpretation_ids: Vec<String>,
}

impl ArticleDocument {
    fn check(&self) -> Result<(), (&'static str, String)> {
        if self.article_id.trim().is_empty() {
            return Err(("article_id", "must be non-empty".into()));
        }
        if self.body_text.trim().is_empty() {
            return Err(("body_text", "must be non-empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterpretationDocument {
    pub interpretation_id: String,
    pub body_text: String,
    #[serde(default)]
    pub target_article_ids: Vec<String>,
}

impl InterpretationDocument {
    fn check(&self) -> Result<(), (&'static str, String)> {
        if self.interpretation_id.trim().is_empty() {
            return Err(("interpretation_id", "must be non-empty".into()));
        }
        if self.body_text.trim().is_empty() {
            return Err(("body_text", "must be non-empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DocumentKind {
    Case,
    Article,
    Interpretation,
}

impl fmt::Display for DocumentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DocumentKind::Case => "case",
            DocumentKind::Article => "article",
            DocumentKind::Interpretation => "interpretation",
        })
    }
}

/// Validated document collections, in file order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusBundle {
    pub cases: Vec<CaseDocument>,
    pub articles: Vec<ArticleDocument>,
    pub interpretations: Vec<InterpretationDocument>,
}

impl CorpusBundle {
    pub fn counts(&self) -> KindCounts {
        KindCounts {
            cases: self.cases.len(),
            articles: self.articles.len(),
            interpretations: self.interpretations.len(),
        }
    }

    pub fn article(&self, id: &str) -> Option<&ArticleDocument> {
        self.articles.iter().find(|a| a.article_id == id)
    }

    /// Canonical line-delimited serialization of one document kind.
    pub fn to_jsonl(&self, kind: DocumentKind) -> String {
        fn lines<T: Serialize>(items: &[T]) -> String {
            let mut out = String::new();
            for item in items {
                out.push_str(&serde_json::to_string(item).expect("documents serialize"));
                out.push('\n');
            }
            out
        }
        match kind {
            DocumentKind::Case => lines(&self.cases),
            DocumentKind::Article => lines(&self.articles),
            DocumentKind::Interpretation => lines(&self.interpretations),
        }
    }

    /// SHA-256 over the canonical serialization of all three kinds.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for kind in [
            DocumentKind::Case,
            DocumentKind::Article,
            DocumentKind::Interpretation,
        ] {
            hasher.update(kind.to_string().as_bytes());
            hasher.update(b"\n");
            hasher.update(self.to_jsonl(kind).as_bytes());
        }
        hex::encode(hasher.finalize())
    }

    pub fn write_to(&self, sources: &CorpusSources) -> io::Result<()> {
        for (kind, path) in sources.iter() {
            let mut file = fs::File::create(path)?;
            file.write_all(self.to_jsonl(kind).as_bytes())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KindCounts {
    pub cases: usize,
    pub articles: usize,
    pub interpretations: usize,
}

/// Paths of the three corpus files. Any of them may be absent.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSources {
    pub cases: Option<PathBuf>,
    pub articles: Option<PathBuf>,
    pub interpretations: Option<PathBuf>,
}

impl CorpusSources {
    pub fn new(
        cases: impl Into<PathBuf>,
        articles: impl Into<PathBuf>,
        interpretations: impl Into<PathBuf>,
    ) -> Self {
        Self {
            cases: Some(cases.into()),
            articles: Some(articles.into()),
            interpretations: Some(interpretations.into()),
        }
    }

    /// Conventional `cases.jsonl` / `articles.jsonl` / `interpretations.jsonl` layout.
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        Self::new(
            dir.join("cases.jsonl"),
            dir.join("articles.jsonl"),
            dir.join("interpretations.jsonl"),
        )
    }

    pub fn iter(&self) -> impl Iterator<Item = (DocumentKind, &Path)> {
        [
            (DocumentKind::Case, self.cases.as_deref()),
            (DocumentKind::Article, self.articles.as_deref()),
            (
                DocumentKind::Interpretation,
                self.interpretations.as_deref(),
            ),
        ]
        .into_iter()
        .filter_map(|(k, p)| p.map(|p| (k, p)))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestOptions {
    /// Reject records with dangling cross-references instead of warning.
    pub strict: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum IssueKind {
    Malformed { field: String, message: String },
    DuplicateId { id: String, first_line: usize },
    DanglingReference { field: String, target: String },
}

/// One line-addressed ingest problem.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineIssue {
    pub file: String,
    pub document_kind: DocumentKind,
    pub line: usize,
    pub issue: IssueKind,
}

impl fmt::Display for LineIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: ", self.file, self.line)?;
        match &self.issue {
            IssueKind::Malformed { field, message } => write!(f, "malformed {field}: {message}"),
            IssueKind::DuplicateId { id, first_line } => {
                write!(f, "duplicate id {id:?} (first seen on line {first_line})")
            }
            IssueKind::DanglingReference { field, target } => {
                write!(f, "dangling reference {target:?} in {field}")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileStats {
    pub file: String,
    pub document_kind: Option<DocumentKind>,
    pub record_lines: usize,
    pub accepted: usize,
    pub rejected: usize,
}

/// Outcome of [`ingest_corpus`]: rejected records (`errors`), accepted records with
/// problems (`warnings`), and per-file line accounting.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub files: Vec<FileStats>,
    pub errors: Vec<LineIssue>,
    pub warnings: Vec<LineIssue>,
    pub counts: KindCounts,
}

impl IngestReport {
    pub fn is_clean(&self) -> bool {
        self.errors.is_empty()
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

struct Parsed<T> {
    line: usize,
    doc: T,
}

struct FileParse<T> {
    stats: FileStats,
    docs: Vec<Parsed<T>>,
    errors: Vec<LineIssue>,
}

trait Keyed: for<'de> Deserialize<'de> {
    const KIND: DocumentKind;
    fn id(&self) -> &str;
    fn check(&self) -> Result<(), (&'static str, String)>;
}

impl Keyed for CaseDocument {
    const KIND: DocumentKind = DocumentKind::Case;
    fn id(&self) -> &str {
        &self.case_id
    }
    fn check(&self) -> Result<(), (&'static str, String)> {
        CaseDocument::check(self)
    }
}

impl Keyed for ArticleDocument {
    const KIND: DocumentKind = DocumentKind::Article;
    fn id(&self) -> &str {
        &self.article_id
    }
    fn check(&self) -> Result<(), (&'static str, String)> {
        ArticleDocument::check(self)
    }
}

impl Keyed for InterpretationDocument {
    const KIND: DocumentKind = DocumentKind::Interpretation;
    fn id(&self) -> &str {
        &self.interpretation_id
    }
    fn check(&self) -> Result<(), (&'static str, String)> {
        InterpretationDocument::check(self)
    }
}

fn field_of_serde_error(message: &str) -> String {
    // serde_json reports e.g. "missing field `fact_text`" or "invalid type ... for key `x`"
    message
        .split('`')
        .nth(1)
        .map(str::to_owned)
        .unwrap_or_else(|| "record".to_owned())
}

/// Parses the record lines of one file. Blank lines are not records.
fn parse_lines<T: Keyed>(file: &str, text: &str) -> FileParse<T> {
    let mut out = FileParse {
        stats: FileStats {
            file: file.to_owned(),
            document_kind: Some(T::KIND),
            ..FileStats::default()
        },
        docs: Vec::new(),
        errors: Vec::new(),
    };
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        out.stats.record_lines += 1;
        let issue = |issue| LineIssue {
            file: file.to_owned(),
            document_kind: T::KIND,
            line,
            issue,
        };
        let doc: T = match serde_json::from_str(raw) {
            Ok(doc) => doc,
            Err(e) => {
                let message = e.to_string();
                out.errors.push(issue(IssueKind::Malformed {
                    field: field_of_serde_error(&message),
                    message,
                }));
                continue;
            }
        };
        if let Err((field, message)) = doc.check() {
            out.errors.push(issue(IssueKind::Malformed {
                field: field.to_owned(),
                message,
            }));
            continue;
        }
        if let Some(&first_line) = seen.get(doc.id()) {
            out.errors.push(issue(IssueKind::DuplicateId {
                id: doc.id().to_owned(),
                first_line,
            }));
            continue;
        }
        seen.insert(doc.id().to_owned(), line);
        out.docs.push(Parsed { line, doc });
    }
    out
}

fn read_file(path: Option<&Path>) -> Result<(String, String), CorpusError> {
    match path {
        None => Ok((String::new(), String::new())),
        Some(p) => fs::read_to_string(p)
            .map(|text| (p.display().to_string(), text))
            .map_err(|source| CorpusError::Io {
                path: p.to_owned(),
                source,
            }),
    }
}

/// Reads, parses and cross-checks the three corpus files.
///
/// The three files are parsed concurrently. Only I/O failures are hard errors;
/// everything else lands in the returned [`IngestReport`].
pub fn ingest_corpus(
    sources: &CorpusSources,
    options: IngestOptions,
) -> Result<(CorpusBundle, IngestReport), CorpusError> {
    let (cases, articles, interps) = std::thread::scope(|s| {
        let c = s.spawn(|| {
            read_file(sources.cases.as_deref())
                .map(|(name, text)| parse_lines::<CaseDocument>(&name, &text))
        });
        let a = s.spawn(|| {
            read_file(sources.articles.as_deref())
                .map(|(name, text)| parse_lines::<ArticleDocument>(&name, &text))
        });
        let i = s.spawn(|| {
            read_file(sources.interpretations.as_deref())
                .map(|(name, text)| parse_lines::<InterpretationDocument>(&name, &text))
        });
        (
            c.join().expect("case parser panicked"),
            a.join().expect("article parser panicked"),
            i.join().expect("interpretation parser panicked"),
        )
    });
    Ok(assemble(cases?, articles?, interps?, options))
}

/// Same as [`ingest_corpus`] over in-memory text, for callers that already hold the data.
pub fn ingest_str(
    cases: &str,
    articles: &str,
    interpretations: &str,
    options: IngestOptions,
) -> (CorpusBundle, IngestReport) {
    assemble(
        parse_lines("<cases>", cases),
        parse_lines("<articles>", articles),
        parse_lines("<interpretations>", interpretations),
        options,
    )
}

fn assemble(
    mut cases: FileParse<CaseDocument>,
    mut articles: FileParse<ArticleDocument>,
    mut interps: FileParse<InterpretationDocument>,
    options: IngestOptions,
) -> (CorpusBundle, IngestReport) {
    let article_ids: BTreeSet<String> = articles
        .docs
        .iter()
        .map(|p| p.doc.article_id.clone())
        .collect();
    let interp_ids: BTreeSet<String> = interps
        .docs
        .iter()
        .map(|p| p.doc.interpretation_id.clone())
        .collect();

    let mut warnings = Vec::new();

    fn resolve<T>(
        parse: &mut FileParse<T>,
        kind: DocumentKind,
        targets: impl Fn(&T) -> Vec<(&'static str, String)>,
        known: &dyn Fn(&str, &str) -> bool,
        strict: bool,
        warnings: &mut Vec<LineIssue>,
    ) {
        let file = parse.stats.file.clone();
        let mut kept = Vec::with_capacity(parse.docs.len());
        for parsed in parse.docs.drain(..) {
            let dangling: Vec<LineIssue> = targets(&parsed.doc)
                .into_iter()
                .filter(|(field, target)| !known(field, target))
                .map(|(field, target)| LineIssue {
                    file: file.clone(),
                    document_kind: kind,
                    line: parsed.line,
                    issue: IssueKind::DanglingReference {
                        field: field.to_owned(),
                        target,
                    },
                })
                .collect();
            if dangling.is_empty() {
                kept.push(parsed);
            } else if strict {
                parse.errors.extend(dangling);
            } else {
                warnings.extend(dangling);
                kept.push(parsed);
            }
        }
        parse.docs = kept;
    }

    let known = |field: &str, target: &str| match field {
        "interpretation_ids" => interp_ids.contains(target),
        _ => article_ids.contains(target),
    };
    resolve(
        &mut cases,
        DocumentKind::Case,
        |d| {
            d.cited_article_ids
                .iter()
                .map(|t| ("cited_article_ids", t.clone()))
                .collect()
        },
        &known,
        options.strict,
        &mut warnings,
    );
    resolve(
        &mut articles,
        DocumentKind::Article,
        |d| {
            d.interpretation_ids
                .iter()
                .map(|t| ("interpretation_ids", t.clone()))
                .collect()
        },
        &known,
        options.strict,
        &mut warnings,
    );
    resolve(
        &mut interps,
        DocumentKind::Interpretation,
        |d| {
            d.target_article_ids
                .iter()
                .map(|t| ("target_article_ids", t.clone()))
                .collect()
        },
        &known,
        options.strict,
        &mut warnings,
    );

    let mut report = IngestReport::default();
    let mut finish = |stats: &mut FileStats, accepted: usize, errors: &mut Vec<LineIssue>| {
        stats.accepted = accepted;
        // a record with several dangling targets yields several issues but one rejection
        stats.rejected = errors.iter().map(|e| e.line).collect::<BTreeSet<_>>().len();
        errors.sort_by_key(|e| e.line);
        report.errors.append(errors);
    };
    finish(&mut cases.stats, cases.docs.len(), &mut cases.errors);
    finish(
        &mut articles.stats,
        articles.docs.len(),
        &mut articles.errors,
    );
    finish(&mut interps.stats, interps.docs.len(), &mut interps.errors);
    report.files = vec![cases.stats, articles.stats, interps.stats];
    report.warnings = warnings;

    let bundle = CorpusBundle {
        cases: cases.docs.into_iter().map(|p| p.doc).collect(),
        articles: articles.docs.into_iter().map(|p| p.doc).collect(),
        interpretations: interps.docs.into_iter().map(|p| p.doc).collect(),
    };
    report.counts = bundle.counts();
    (bundle, report)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DanglingLink {
    pub source_kind: DocumentKind,
    pub source_id: String,
    pub field: String,
    pub target: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceReport {
    pub dangling: Vec<DanglingLink>,
    /// Articles not cited by any case. Informational only.
    pub orphan_articles: Vec<String>,
}

impl ReferenceReport {
    pub fn is_consistent(&self) -> bool {
        self.dangling.is_empty()
    }
}

/// Lists unresolved cross-references and never-cited articles.
pub fn validate_references(bundle: &CorpusBundle) -> ReferenceReport {
    let articles: BTreeSet<&str> = bundle
        .articles
        .iter()
        .map(|a| a.article_id.as_str())
        .collect();
    let interps: BTreeSet<&str> = bundle
        .interpretations
        .iter()
        .map(|i| i.interpretation_id.as_str())
        .collect();
    let mut report = ReferenceReport::default();
    let mut cited = BTreeSet::new();
    for case in &bundle.cases {
        for target in &case.cited_article_ids {
            cited.insert(target.as_str());
            if !articles.contains(target.as_str()) {
                report.dangling.push(DanglingLink {
                    source_kind: DocumentKind::Case,
                    source_id: case.case_id.clone(),
                    field: "cited_article_ids".into(),
                    target: target.clone(),
                });
            }
        }
    }
    for article in &bundle.articles {
        for target in &article.interpretation_ids {
            if !interps.contains(target.as_str()) {
                report.dangling.push(DanglingLink {
                    source_kind: DocumentKind::Article,
                    source_id: article.article_id.clone(),
                    field: "interpretation_ids".into(),
                    target: target.clone(),
                });
            }
        }
        if !cited.contains(article.article_id.as_str()) {
            report.orphan_articles.push(article.article_id.clone());
        }
    }
    for interp in &bundle.interpretations {
        for target in &interp.target_article_ids {
            if !articles.contains(target.as_str()) {
                report.dangling.push(DanglingLink {
                    source_kind: DocumentKind::Interpretation,
                    source_id: interp.interpretation_id.clone(),
                    field: "target_article_ids".into(),
                    target: target.clone(),
                });
            }
        }
    }
    report
}
