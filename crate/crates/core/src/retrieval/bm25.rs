//! BM25 inverted index over a document corpus.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use unicode_segmentation::UnicodeSegmentation;

use crate::corpus::Corpus;
use crate::error::{Error, Result};

/// Tokenization mode for indexing and queries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tokenizer {
    #[default]
    UnicodeLower,
}

/// BM25 parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct IndexConfig {
    pub k1: f64,
    pub b: f64,
    #[serde(default)]
    pub tokenizer: Tokenizer,
}

impl Default for IndexConfig {
    fn default() -> Self {
        Self {
            k1: 0.9,
            b: 0.4,
            tokenizer: Tokenizer::UnicodeLower,
        }
    }
}

impl IndexConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.k1 > 0.0) {
            return Err(Error::Precondition(format!("k1 must be > 0, got {}", self.k1)));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(Error::Precondition(format!("b must be in [0, 1], got {}", self.b)));
        }
        Ok(())
    }
}

/// Lowercased unicode word tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.unicode_words().map(|w| w.to_lowercase()).collect()
}

#[derive(Debug, Clone)]
struct Posting {
    doc: u32,
    term_frequency: u32,
}

/// Immutable inverted index; build once, search from any number of threads.
#[derive(Debug, Clone)]
pub struct LexicalIndex {
    config: IndexConfig,
    postings: HashMap<String, Vec<Posting>>,
    doc_ids: Vec<String>,
    doc_lengths: Vec<u32>,
    average_doc_length: f64,
}

/// Build the inverted index with per-term postings, document lengths, and
/// average length.
pub fn build_lexical_index(corpus: &Corpus, config: IndexConfig) -> Result<LexicalIndex> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(Error::Precondition("cannot index an empty corpus".into()));
    }
    let mut postings: HashMap<String, Vec<Posting>> = HashMap::new();
    let mut doc_ids = Vec::with_capacity(corpus.len());
    let mut doc_lengths = Vec::with_capacity(corpus.len());
    for (doc_idx, doc) in corpus.iter().enumerate() {
        let tokens = tokenize(&doc.text);
        doc_ids.push(doc.doc_id.clone());
        doc_lengths.push(tokens.len() as u32);
        let mut counts: HashMap<String, u32> = HashMap::new();
        for token in tokens {
            *counts.entry(token).or_default() += 1;
        }
        for (term, term_frequency) in counts {
            postings.entry(term).or_default().push(Posting {
                doc: doc_idx as u32,
                term_frequency,
            });
        }
    }
    let total_len: u64 = doc_lengths.iter().map(|&l| l as u64).sum();
    Ok(LexicalIndex {
        config,
        postings,
        average_doc_length: total_len as f64 / doc_lengths.len() as f64,
        doc_ids,
        doc_lengths,
    })
}

impl LexicalIndex {
    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn vocabulary_size(&self) -> usize {
        self.postings.len()
    }

    pub fn contains_term(&self, term: &str) -> bool {
        self.postings.contains_key(term)
    }

    /// IDF of one term: `ln((N - df + 0.5) / (df + 0.5) + 1)`.
    fn idf(&self, document_frequency: usize) -> f64 {
        let n = self.doc_ids.len() as f64;
        let df = document_frequency as f64;
        ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
    }

    /// Top-`k` documents matching at least one query term, by descending
    /// score with ascending doc_id on ties.
    ///
    /// Per-document accumulation follows query-term order (duplicates
    /// dropped), so a full-scan oracle summing in the same order reproduces
    /// scores bitwise.
    pub fn search(&self, query: &str, k: usize) -> Vec<(String, f64)> {
        if k == 0 {
            return Vec::new();
        }
        let mut scores: HashMap<u32, f64> = HashMap::new();
        for term in unique_terms(query) {
            let Some(postings) = self.postings.get(&term) else {
                continue;
            };
            let idf = self.idf(postings.len());
            for posting in postings {
                let tf = posting.term_frequency as f64;
                let dl = self.doc_lengths[posting.doc as usize] as f64;
                let norm = tf * (self.config.k1 + 1.0)
                    / (tf + self.config.k1
                        * (1.0 - self.config.b + self.config.b * dl / self.average_doc_length));
                *scores.entry(posting.doc).or_insert(0.0) += idf * norm;
            }
        }
        let mut ranked: Vec<(String, f64)> = scores
            .into_iter()
            .map(|(doc, score)| (self.doc_ids[doc as usize].clone(), score))
            .collect();
        ranked.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap()
                .then_with(|| a.0.cmp(&b.0))
        });
        ranked.truncate(k);
        ranked
    }
}

/// Query terms in first-occurrence order, deduplicated.
pub fn unique_terms(query: &str) -> Vec<String> {
    let mut seen = std::collections::HashSet::new();
    tokenize(query)
        .into_iter()
        .filter(|t| seen.insert(t.clone()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;

    fn corpus(texts: &[&str]) -> Corpus {
        Corpus::from_documents(
            texts
                .iter()
                .enumerate()
                .map(|(i, t)| Document::new(format!("d{i:03}"), *t))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn vocabulary_is_union_of_tokens() {
        let corpus = corpus(&["alpha beta", "beta gamma", "Gamma DELTA"]);
        let index = build_lexical_index(&corpus, IndexConfig::default()).unwrap();
        assert_eq!(index.vocabulary_size(), 4);
        for term in ["alpha", "beta", "gamma", "delta"] {
            assert!(index.contains_term(term), "missing {term}");
        }
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let corpus = Corpus::default();
        assert!(build_lexical_index(&corpus, IndexConfig::default()).is_err());
    }

    #[test]
    fn exact_document_query_ranks_first() {
        let corpus = corpus(&[
            "solar inverters convert direct current",
            "wind turbines harvest kinetic energy",
            "tidal generators use ocean flows",
        ]);
        let index = build_lexical_index(&corpus, IndexConfig::default()).unwrap();
        let results = index.search("wind turbines harvest kinetic energy", 3);
        assert_eq!(results[0].0, "d001");
    }

    #[test]
    fn k_larger_than_corpus_returns_everything_matching() {
        let corpus = corpus(&["shared token alpha", "shared token beta", "shared token gamma"]);
        let index = build_lexical_index(&corpus, IndexConfig::default()).unwrap();
        let results = index.search("shared", 50);
        assert_eq!(results.len(), 3);
    }

    #[test]
    fn rebuild_is_deterministic() {
        let corpus = corpus(&[
            "carbon pricing lowers emissions",
            "emissions trading schemes cap carbon",
            "fuel standards regulate efficiency",
        ]);
        let a = build_lexical_index(&corpus, IndexConfig::default()).unwrap();
        let b = build_lexical_index(&corpus, IndexConfig::default()).unwrap();
        for query in ["carbon emissions", "fuel cap", "pricing schemes regulate"] {
            assert_eq!(a.search(query, 3), b.search(query, 3));
        }
    }

    #[test]
    fn ties_break_by_ascending_doc_id() {
        let corpus = corpus(&["same text here", "same text here", "other content entirely"]);
        let index = build_lexical_index(&corpus, IndexConfig::default()).unwrap();
        let results = index.search("same text", 2);
        assert_eq!(results[0].0, "d000");
        assert_eq!(results[1].0, "d001");
        assert_eq!(results[0].1, results[1].1);
    }
}
