//! Passage segmentation and near-duplicate removal.

use std::collections::BTreeSet;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use unicode_segmentation::UnicodeSegmentation;

use super::Document;
use crate::error::{Error, Result};

/// Parameters controlling segmentation, dedup, and hard-negative mining.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MiningConfig {
    /// Related-but-unhelpful queries generated per source record.
    pub queries_per_source: usize,
    /// Target passage length in words; pages are split at sentence boundaries.
    pub passage_target_len: usize,
    /// Word-shingle Jaccard similarity above which a passage is dropped.
    pub overlap_threshold: f64,
    /// Source urls whose pages never contribute passages.
    pub excluded_urls: BTreeSet<String>,
    /// Maximum results requested per mined query.
    pub max_results_per_query: usize,
}

impl Default for MiningConfig {
    fn default() -> Self {
        Self {
            queries_per_source: 3,
            passage_target_len: 200,
            overlap_threshold: 0.8,
            excluded_urls: BTreeSet::new(),
            max_results_per_query: 10,
        }
    }
}

impl MiningConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.overlap_threshold > 0.0 && self.overlap_threshold <= 1.0) {
            return Err(Error::Precondition(format!(
                "overlap_threshold must be in (0, 1], got {}",
                self.overlap_threshold
            )));
        }
        if self.passage_target_len == 0 {
            return Err(Error::Precondition("passage_target_len must be > 0".into()));
        }
        Ok(())
    }
}

/// A fetched page before segmentation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawPage {
    pub url: String,
    pub text: String,
}

const SHINGLE_SIZE: usize = 3;

/// Lowercased unicode word list.
pub(crate) fn words(text: &str) -> Vec<String> {
    text.unicode_words().map(|w| w.to_lowercase()).collect()
}

/// Word-shingle sets (3 words, lowercase). Texts shorter than one shingle
/// contribute their whole word sequence as a single shingle.
fn shingles(text: &str) -> HashSet<String> {
    let words = words(text);
    if words.is_empty() {
        return HashSet::new();
    }
    if words.len() < SHINGLE_SIZE {
        return HashSet::from([words.join(" ")]);
    }
    words
        .windows(SHINGLE_SIZE)
        .map(|w| w.join(" "))
        .collect()
}

/// Jaccard similarity of the two texts' 3-word shingle sets.
pub fn shingle_jaccard(a: &str, b: &str) -> f64 {
    let sa = shingles(a);
    let sb = shingles(b);
    if sa.is_empty() && sb.is_empty() {
        return 1.0;
    }
    if sa.is_empty() || sb.is_empty() {
        return 0.0;
    }
    let intersection = sa.intersection(&sb).count() as f64;
    let union = (sa.len() + sb.len()) as f64 - intersection;
    intersection / union
}

fn normalize_ws(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Split text into sentences at `.`, `!`, `?` boundaries.
fn sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        current.push(c);
        if matches!(c, '.' | '!' | '?') {
            // Consume a run of closing punctuation, then break on whitespace.
            while let Some(&next) = chars.peek() {
                if matches!(next, '.' | '!' | '?' | ')' | '"' | '\'') {
                    current.push(next);
                    chars.next();
                } else {
                    break;
                }
            }
            if chars.peek().is_none_or(|c| c.is_whitespace()) {
                let s = current.trim();
                if !s.is_empty() {
                    out.push(s.to_string());
                }
                current.clear();
            }
        }
    }
    let tail = current.trim();
    if !tail.is_empty() {
        out.push(tail.to_string());
    }
    out
}

/// Greedily pack sentences into chunks of roughly `target_len` words.
fn chunk_page(text: &str, target_len: usize) -> Vec<String> {
    let mut chunks = Vec::new();
    let mut current: Vec<String> = Vec::new();
    let mut current_words = 0usize;
    for sentence in sentences(text) {
        let n = words(&sentence).len();
        if n == 0 {
            continue;
        }
        if current_words > 0 && current_words + n > target_len {
            chunks.push(current.join(" "));
            current.clear();
            current_words = 0;
        }
        current.push(sentence);
        current_words += n;
    }
    if !current.is_empty() {
        chunks.push(current.join(" "));
    }
    chunks
}

/// Split pages into comparable-length passages, drop excluded urls, remove
/// exact duplicates and passages whose shingle Jaccard with an already
/// retained passage exceeds `overlap_threshold`.
///
/// Idempotent: feeding the output back through changes nothing.
pub fn segment_and_dedup(raw_pages: &[RawPage], config: &MiningConfig) -> Result<Vec<Document>> {
    config.validate()?;
    let mut retained: Vec<Document> = Vec::new();
    let mut seen_exact: HashSet<String> = HashSet::new();
    for page in raw_pages {
        if config.excluded_urls.contains(&page.url) {
            continue;
        }
        for (chunk_idx, chunk) in chunk_page(&page.text, config.passage_target_len)
            .into_iter()
            .enumerate()
        {
            let normalized = normalize_ws(&chunk);
            if normalized.is_empty() {
                continue;
            }
            if !seen_exact.insert(normalized.to_lowercase()) {
                continue;
            }
            let near_dup = retained
                .iter()
                .any(|doc| shingle_jaccard(&doc.text, &chunk) > config.overlap_threshold);
            if near_dup {
                continue;
            }
            retained.push(Document {
                doc_id: passage_id(&page.url, chunk_idx),
                domain: String::new(),
                text: chunk,
                source_url: Some(page.url.clone()),
                is_positive: false,
            });
        }
    }
    Ok(retained)
}

/// Deterministic passage id derived from the source url and chunk index.
fn passage_id(url: &str, chunk_idx: usize) -> String {
    use sha2::{Digest, Sha256};
    let digest = Sha256::digest(url.as_bytes());
    let short = digest[..6]
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect::<String>();
    format!("p-{short}-{chunk_idx:03}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn page(url: &str, text: &str) -> RawPage {
        RawPage {
            url: url.into(),
            text: text.into(),
        }
    }

    /// Brute-force oracle: enumerate every 3-word shingle by hand.
    fn jaccard_oracle(a: &str, b: &str) -> f64 {
        let tokens = |t: &str| -> Vec<String> { words(t) };
        let set = |t: &str| -> HashSet<Vec<String>> {
            let w = tokens(t);
            if w.len() < 3 {
                return HashSet::from([w]);
            }
            let mut s = HashSet::new();
            for i in 0..=w.len() - 3 {
                s.insert(w[i..i + 3].to_vec());
            }
            s
        };
        let (sa, sb) = (set(a), set(b));
        let inter = sa.intersection(&sb).count() as f64;
        inter / (sa.len() as f64 + sb.len() as f64 - inter)
    }

    #[test]
    fn identical_pages_keep_one_passage_set() {
        let text = "The quick brown fox jumps over the lazy dog. It happens every day.";
        let out = segment_and_dedup(
            &[page("https://a", text), page("https://b", text)],
            &MiningConfig::default(),
        )
        .unwrap();
        assert_eq!(out.len(), 1);
    }

    #[test]
    fn near_duplicate_above_threshold_dropped() {
        // Long shared prefix with a one-word difference at the end: Jaccard
        // stays well above 0.8 by the brute-force oracle.
        let base = "carbon pricing mechanisms reduce emissions by putting a cost on pollution \
                    and encouraging firms to adopt cleaner technology over time across sectors";
        let variant = format!("{base} worldwide");
        let sim = shingle_jaccard(base, &variant);
        let oracle = jaccard_oracle(base, &variant);
        assert!((sim - oracle).abs() < 1e-12, "impl {sim} vs oracle {oracle}");
        assert!(sim > 0.8, "fixture must exceed threshold, got {sim}");

        let out = segment_and_dedup(
            &[page("https://a", base), page("https://b", &variant)],
            &MiningConfig::default(),
        )
        .unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].source_url.as_deref(), Some("https://a"));
    }

    #[test]
    fn excluded_url_contributes_nothing() {
        let mut config = MiningConfig::default();
        config.excluded_urls.insert("https://banned".into());
        let out = segment_and_dedup(
            &[
                page("https://banned", "Some text that would otherwise be kept."),
                page("https://ok", "Entirely different content about turbines."),
            ],
            &config,
        )
        .unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].source_url.as_deref(), Some("https://ok"));
    }

    #[test]
    fn empty_input_is_empty_output() {
        let out = segment_and_dedup(&[], &MiningConfig::default()).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn long_page_splits_at_sentence_boundaries() {
        let text = (0..24)
            .map(|i| {
                format!(
                    "Sentence {i} explains how component number {i} behaves under load case {i}."
                )
            })
            .collect::<Vec<_>>()
            .join(" ");
        let config = MiningConfig {
            passage_target_len: 30,
            overlap_threshold: 0.99,
            ..Default::default()
        };
        let out = segment_and_dedup(&[page("https://a", &text)], &config).unwrap();
        assert!(out.len() > 1);
        for doc in &out {
            // No chunk should be grossly oversized: at most target + one sentence.
            assert!(words(&doc.text).len() <= 30 + 12);
        }
    }

    #[test]
    fn invalid_config_rejected() {
        let config = MiningConfig {
            overlap_threshold: 0.0,
            ..Default::default()
        };
        assert!(segment_and_dedup(&[], &config).is_err());
        let config = MiningConfig {
            passage_target_len: 0,
            ..Default::default()
        };
        assert!(segment_and_dedup(&[], &config).is_err());
    }

    #[test]
    fn idempotent_on_own_output() {
        let pages = vec![
            page("https://a", "Solar panels convert light into electricity. Inverters turn that into usable current. Batteries store what is not used."),
            page("https://b", "Solar panels convert light into electricity. Inverters turn that into usable current. Batteries store what is not used."),
            page("https://c", "Wind turbines harvest kinetic energy from moving air masses and feed generators."),
        ];
        let config = MiningConfig::default();
        let first = segment_and_dedup(&pages, &config).unwrap();
        let again_input: Vec<RawPage> = first
            .iter()
            .map(|d| page(d.source_url.as_deref().unwrap(), &d.text))
            .collect();
        let second = segment_and_dedup(&again_input, &config).unwrap();
        assert_eq!(
            first.iter().map(|d| &d.text).collect::<Vec<_>>(),
            second.iter().map(|d| &d.text).collect::<Vec<_>>()
        );
    }

    #[test]
    fn no_retained_pair_exceeds_threshold() {
        let pages = vec![
            page("https://1", "Carbon taxes put a price on emissions. Firms respond by cutting pollution."),
            page("https://2", "Carbon taxes put a price on emissions. Firms respond by cutting pollution quickly."),
            page("https://3", "Cap and trade systems issue permits. Markets then set the carbon price."),
            page("https://4", "Fuel standards regulate efficiency directly rather than pricing carbon."),
        ];
        let config = MiningConfig {
            overlap_threshold: 0.5,
            ..Default::default()
        };
        let out = segment_and_dedup(&pages, &config).unwrap();
        for i in 0..out.len() {
            for j in i + 1..out.len() {
                assert!(
                    shingle_jaccard(&out[i].text, &out[j].text) <= 0.5,
                    "pair ({i},{j}) too similar"
                );
            }
        }
    }
}
