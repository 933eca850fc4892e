//! Query-based hard-negative mining.
//!
//! The model proposes topically related queries aimed at unhelpful aspects of
//! the source question; a web-search client fetches pages (excluding the
//! positive sources) and the results run through segmentation and dedup.

use std::collections::BTreeSet;

use serde_json::Value;

use super::segment::{segment_and_dedup, MiningConfig, RawPage};
use super::Document;
use crate::decompose::SourceRecord;
use crate::error::{Error, Result};
use crate::gateway::schema::{FieldKind, FieldSpec, Schema};
use crate::gateway::{vars, Gateway, PromptTemplate};

/// One search result page.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SearchHit {
    pub url: String,
    pub text: String,
}

/// Web-search backend contract:
/// request `{query, max_results, exclude_urls}` -> list of `{url, text}`.
pub trait SearchClient: Send + Sync {
    fn search(&self, query: &str, max_results: usize, exclude_urls: &BTreeSet<String>)
        -> Result<Vec<SearchHit>>;
}

/// HTTP-backed search client; endpoint normally resolved from the
/// `SEARCH_ENDPOINT` environment variable.
#[cfg(feature = "http")]
pub struct HttpSearchClient {
    endpoint: String,
    agent: ureq::Agent,
}

#[cfg(feature = "http")]
impl HttpSearchClient {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            agent: ureq::Agent::new_with_defaults(),
        }
    }
}

#[cfg(feature = "http")]
impl SearchClient for HttpSearchClient {
    fn search(
        &self,
        query: &str,
        max_results: usize,
        exclude_urls: &BTreeSet<String>,
    ) -> Result<Vec<SearchHit>> {
        #[derive(serde::Serialize)]
        struct Body<'a> {
            query: &'a str,
            max_results: usize,
            exclude_urls: &'a BTreeSet<String>,
        }
        self.agent
            .post(&self.endpoint)
            .send_json(Body {
                query,
                max_results,
                exclude_urls,
            })
            .map_err(|e| Error::Search(e.to_string()))?
            .body_mut()
            .read_json::<Vec<SearchHit>>()
            .map_err(|e| Error::Search(format!("invalid search reply: {e}")))
    }
}

/// Module-local prompt for proposing related-but-unhelpful queries.
const NEGATIVE_QUERY_TEMPLATE: PromptTemplate = PromptTemplate {
    template_id: "negative_query_generation",
    body: "Propose {num_queries} web-search queries that are topically related to the \
           question below but focus on aspects that would NOT help answer it.\n\n\
           QUESTION: {query}\n\n\
           ANSWER (for context, do not target it):\n{gold_answer}\n\n\
           The queries should share the domain vocabulary of the question while seeking \
           unhelpful angles: adjacent subtopics, different entities, other time periods, \
           or practical how-to framings.\n\n\
           Return JSON:\n{\n  \"queries\": [\"query 1\", \"query 2\", ...]\n}",
    expected_schema: Schema {
        fields: &[FieldSpec::required("queries", FieldKind::TextList)],
    },
};

/// Mined negatives plus warnings for partial failures.
#[derive(Debug, Clone, Default)]
pub struct MiningOutcome {
    pub documents: Vec<Document>,
    pub warnings: Vec<String>,
}

/// Mine hard negatives for one source record.
///
/// Returned documents are flagged `is_positive = false` and never come from a
/// positive source url. Search failures degrade to a partial result with one
/// warning per failed query.
pub fn mine_hard_negatives(
    source: &SourceRecord,
    llm: &Gateway,
    search: &dyn SearchClient,
    config: &MiningConfig,
) -> Result<MiningOutcome> {
    config.validate()?;
    let positive_urls: BTreeSet<String> = source
        .documents
        .iter()
        .filter(|d| d.is_positive)
        .filter_map(|d| d.source_url.clone())
        .collect();
    if !source.documents.iter().any(|d| d.is_positive) {
        return Err(Error::Precondition(
            "source record has no positive document to exclude".into(),
        ));
    }

    let response = llm.complete_structured_with(
        &NEGATIVE_QUERY_TEMPLATE,
        &vars([
            ("num_queries", config.queries_per_source.to_string()),
            ("query", source.query.clone()),
            ("gold_answer", source.gold_answer.clone()),
        ]),
    )?;
    let queries: Vec<String> = match response.parsed.get("queries") {
        Some(Value::Array(items)) => items
            .iter()
            .filter_map(|v| v.as_str().map(str::to_string))
            .take(config.queries_per_source)
            .collect(),
        _ => Vec::new(),
    };

    let mut exclude = positive_urls.clone();
    exclude.extend(config.excluded_urls.iter().cloned());

    let mut pages: Vec<RawPage> = Vec::new();
    let mut warnings = Vec::new();
    for query in &queries {
        match search.search(query, config.max_results_per_query, &exclude) {
            Ok(hits) => {
                for hit in hits {
                    // Guard against clients that ignore exclusions.
                    if !exclude.contains(&hit.url) {
                        pages.push(RawPage {
                            url: hit.url,
                            text: hit.text,
                        });
                    }
                }
            }
            Err(e) => warnings.push(format!("search failed for `{query}`: {e}")),
        }
    }

    let mut segment_config = config.clone();
    segment_config.excluded_urls = exclude;
    let mut documents = segment_and_dedup(&pages, &segment_config)?;
    for doc in &mut documents {
        doc.domain = source.domain.clone();
        doc.is_positive = false;
    }
    if documents.is_empty() {
        warnings.push("mining produced zero surviving passages".into());
    }
    Ok(MiningOutcome {
        documents,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    struct FixedSearch {
        hits: Vec<SearchHit>,
        honor_exclusions: bool,
    }

    impl SearchClient for FixedSearch {
        fn search(
            &self,
            _query: &str,
            max_results: usize,
            exclude_urls: &BTreeSet<String>,
        ) -> Result<Vec<SearchHit>> {
            let mut out: Vec<SearchHit> = self
                .hits
                .iter()
                .filter(|h| !self.honor_exclusions || !exclude_urls.contains(&h.url))
                .cloned()
                .collect();
            out.truncate(max_results);
            Ok(out)
        }
    }

    struct FailingSearch;

    impl SearchClient for FailingSearch {
        fn search(&self, _q: &str, _m: usize, _e: &BTreeSet<String>) -> Result<Vec<SearchHit>> {
            Err(Error::Search("backend unavailable".into()))
        }
    }

    fn source_with_positive() -> SourceRecord {
        SourceRecord {
            id: "s1".into(),
            query: "Why do lithium batteries degrade?".into(),
            gold_answer: "Electrode wear and electrolyte breakdown reduce capacity.".into(),
            overall_reasoning: "Needs electrochemistry documents.".into(),
            domain: "hardware".into(),
            documents: vec![Document {
                doc_id: "pos1".into(),
                domain: "hardware".into(),
                text: "Battery chemistry details.".into(),
                source_url: Some("https://positive.example".into()),
                is_positive: true,
            }],
        }
    }

    fn query_gateway() -> Gateway {
        Gateway::with_mock(crate::gateway::MockProvider::new().respond(
            "negative_query_generation",
            json!({"queries": ["battery recycling programs", "battery shipping rules"]}),
        ))
    }

    #[test]
    fn positive_source_url_is_excluded() {
        let search = FixedSearch {
            hits: vec![SearchHit {
                url: "https://positive.example".into(),
                text: "This page is the positive source.".into(),
            }],
            honor_exclusions: false,
        };
        let out = mine_hard_negatives(
            &source_with_positive(),
            &query_gateway(),
            &search,
            &MiningConfig::default(),
        )
        .unwrap();
        assert!(out.documents.is_empty());
        assert!(out.warnings.iter().any(|w| w.contains("zero surviving")));
    }

    #[test]
    fn distinct_pages_become_negative_passages() {
        let search = FixedSearch {
            hits: vec![
                SearchHit {
                    url: "https://a.example".into(),
                    text: "Municipal recycling programs accept old cells. Drop-off sites vary by region.".into(),
                },
                SearchHit {
                    url: "https://b.example".into(),
                    text: "Air transport regulations restrict lithium cargo. Labels must state watt hours.".into(),
                },
            ],
            honor_exclusions: true,
        };
        let out = mine_hard_negatives(
            &source_with_positive(),
            &query_gateway(),
            &search,
            &MiningConfig::default(),
        )
        .unwrap();
        assert!(!out.documents.is_empty());
        for doc in &out.documents {
            assert!(!doc.is_positive);
            assert_eq!(doc.domain, "hardware");
            assert_ne!(doc.source_url.as_deref(), Some("https://positive.example"));
        }
    }

    #[test]
    fn duplicate_pages_across_queries_dedup_once() {
        // Both generated queries return the same page.
        let search = FixedSearch {
            hits: vec![SearchHit {
                url: "https://dup.example".into(),
                text: "Identical page text returned for every query about batteries.".into(),
            }],
            honor_exclusions: true,
        };
        let out = mine_hard_negatives(
            &source_with_positive(),
            &query_gateway(),
            &search,
            &MiningConfig::default(),
        )
        .unwrap();
        assert_eq!(out.documents.len(), 1);
    }

    #[test]
    fn search_failure_yields_partial_result_with_warnings() {
        let out = mine_hard_negatives(
            &source_with_positive(),
            &query_gateway(),
            &FailingSearch,
            &MiningConfig::default(),
        )
        .unwrap();
        assert!(out.documents.is_empty());
        // One warning per failed query plus the zero-passage diagnostic.
        assert_eq!(out.warnings.len(), 3);
    }

    #[test]
    fn requires_a_positive_document() {
        let mut source = source_with_positive();
        source.documents[0].is_positive = false;
        let err = mine_hard_negatives(
            &source,
            &query_gateway(),
            &FailingSearch,
            &MiningConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }
}
