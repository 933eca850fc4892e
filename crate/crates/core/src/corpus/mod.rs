//! Document corpus: ingestion, segmentation, hard-negative mining, and
//! relevance judgments.

mod mining;
mod qrels;
mod segment;

pub use mining::{mine_hard_negatives, HttpSearchClient, MiningOutcome, SearchClient, SearchHit};
pub use qrels::{load_qrels, write_qrels, Qrels};
pub use segment::{segment_and_dedup, shingle_jaccard, MiningConfig, RawPage};

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single corpus passage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    #[serde(default)]
    pub domain: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_url: Option<String>,
    /// Provenance flag: true for gold supporting passages, false for mined
    /// negatives.
    #[serde(default)]
    pub is_positive: bool,
}

impl Document {
    pub fn new(doc_id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            doc_id: doc_id.into(),
            domain: String::new(),
            text: text.into(),
            source_url: None,
            is_positive: false,
        }
    }
}

/// Corpus file format accepted by [`ingest_corpus`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    /// One JSON object per line with at least `doc_id` and `text`.
    Jsonl,
    /// Tab-separated `doc_id<TAB>text[<TAB>domain[<TAB>source_url[<TAB>is_positive]]]`.
    Tsv,
}

/// Immutable, iterable collection of documents with unique ids.
///
/// Built once by ingestion; afterwards safe to share freely across threads.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    docs: Vec<Document>,
    by_id: HashMap<String, usize>,
}

impl Corpus {
    /// Build a corpus from documents, rejecting duplicate ids and empty text.
    pub fn from_documents(docs: Vec<Document>) -> Result<Self> {
        let mut corpus = Corpus::default();
        for doc in docs {
            corpus.push(doc, None)?;
        }
        Ok(corpus)
    }

    fn push(&mut self, doc: Document, line: Option<usize>) -> Result<()> {
        if doc.text.trim().is_empty() {
            return Err(match line {
                Some(line) => Error::Parse {
                    line,
                    message: format!("document `{}` has empty text", doc.doc_id),
                },
                None => Error::InvalidInput(format!("document `{}` has empty text", doc.doc_id)),
            });
        }
        if self.by_id.contains_key(&doc.doc_id) {
            return Err(Error::DuplicateDocId(doc.doc_id));
        }
        self.by_id.insert(doc.doc_id.clone(), self.docs.len());
        self.docs.push(doc);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn get(&self, doc_id: &str) -> Option<&Document> {
        self.by_id.get(doc_id).map(|&i| &self.docs[i])
    }

    pub fn contains(&self, doc_id: &str) -> bool {
        self.by_id.contains_key(doc_id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Document> {
        self.docs.iter()
    }

    /// Aggregate counts in the shape of the dataset report.
    pub fn stats(&self) -> CorpusStats {
        let mut per_domain: HashMap<String, usize> = HashMap::new();
        let mut positive = 0usize;
        for doc in &self.docs {
            *per_domain.entry(doc.domain.clone()).or_default() += 1;
            if doc.is_positive {
                positive += 1;
            }
        }
        let mut per_domain: Vec<(String, usize)> = per_domain.into_iter().collect();
        per_domain.sort();
        CorpusStats {
            total: self.docs.len(),
            positive,
            negative: self.docs.len() - positive,
            per_domain,
        }
    }

    /// Serialize as line-delimited JSON records.
    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        for doc in &self.docs {
            serde_json::to_writer(&mut out, doc)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Corpus-level counts (total / positive / negative plus per-domain sizes).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CorpusStats {
    pub total: usize,
    pub positive: usize,
    pub negative: usize,
    pub per_domain: Vec<(String, usize)>,
}

impl CorpusStats {
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "documents: {}", self.total);
        let _ = writeln!(s, "positive:  {}", self.positive);
        let _ = writeln!(s, "negative:  {}", self.negative);
        for (domain, count) in &self.per_domain {
            let name = if domain.is_empty() { "(none)" } else { domain };
            let _ = writeln!(s, "  {name}: {count}");
        }
        s
    }
}

/// Load a corpus file, rejecting malformed records and duplicate ids.
pub fn ingest_corpus(path: &Path, format: CorpusFormat) -> Result<Corpus> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut corpus = Corpus::default();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let doc = match format {
            CorpusFormat::Jsonl => {
                serde_json::from_str::<Document>(&line).map_err(|e| Error::Parse {
                    line: line_no,
                    message: e.to_string(),
                })?
            }
            CorpusFormat::Tsv => parse_tsv_record(&line, line_no)?,
        };
        corpus.push(doc, Some(line_no))?;
    }
    Ok(corpus)
}

fn parse_tsv_record(line: &str, line_no: usize) -> Result<Document> {
    let mut fields = line.split('\t');
    let doc_id = fields.next().unwrap_or("").trim();
    let text = fields.next().unwrap_or("");
    if doc_id.is_empty() || text.trim().is_empty() {
        return Err(Error::Parse {
            line: line_no,
            message: "expected at least `doc_id<TAB>text`".into(),
        });
    }
    let domain = fields.next().unwrap_or("").to_string();
    let source_url = fields.next().filter(|s| !s.is_empty()).map(str::to_string);
    let is_positive = match fields.next() {
        None | Some("") => false,
        Some(v) => v.parse::<bool>().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("invalid is_positive flag `{v}`"),
        })?,
    };
    Ok(Document {
        doc_id: doc_id.to_string(),
        domain,
        text: text.to_string(),
        source_url,
        is_positive,
    })
}
