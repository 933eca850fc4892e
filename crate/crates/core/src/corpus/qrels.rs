//! Graded relevance judgments in the four-column whitespace format
//! `query_id 0 doc_id grade`.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Relevance grades per query, keyed `query_id -> doc_id -> grade`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Qrels {
    pub entries: BTreeMap<String, BTreeMap<String, u32>>,
}

impl Qrels {
    pub fn add(&mut self, query_id: impl Into<String>, doc_id: impl Into<String>, grade: u32) {
        self.entries
            .entry(query_id.into())
            .or_default()
            .insert(doc_id.into(), grade);
    }

    pub fn get(&self, query_id: &str) -> Option<&BTreeMap<String, u32>> {
        self.entries.get(query_id)
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of docs with grade > 0 for a query.
    pub fn relevant_count(&self, query_id: &str) -> usize {
        self.get(query_id)
            .map(|m| m.values().filter(|&&g| g > 0).count())
            .unwrap_or(0)
    }

    /// Every referenced doc_id must resolve against the corpus.
    pub fn validate_against(&self, corpus: &super::Corpus) -> Result<()> {
        for (query_id, docs) in &self.entries {
            for doc_id in docs.keys() {
                if !corpus.contains(doc_id) {
                    return Err(Error::InvalidInput(format!(
                        "qrels entry ({query_id}, {doc_id}) references unknown doc_id"
                    )));
                }
            }
        }
        Ok(())
    }
}

pub fn load_qrels(path: &Path) -> Result<Qrels> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut qrels = Qrels::default();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 4 whitespace-separated fields, got {}", fields.len()),
            });
        }
        let grade: u32 = fields[3].parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("invalid relevance grade `{}`", fields[3]),
        })?;
        qrels.add(fields[0], fields[2], grade);
    }
    Ok(qrels)
}

pub fn write_qrels(qrels: &Qrels, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for (query_id, docs) in &qrels.entries {
        for (doc_id, grade) in docs {
            writeln!(out, "{query_id} 0 {doc_id} {grade}")?;
        }
    }
    out.flush()?;
    Ok(())
}
