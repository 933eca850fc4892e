//! Atomic fact extraction and verification against source documents.

use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::decompose::{render_documents, Aspect};
use crate::error::{Error, Result};
use crate::gateway::{vars, Gateway};

/// A minimal statement extracted from an aspect excerpt.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AtomicFact {
    pub fact: String,
    pub is_supported: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supporting_doc_id: Option<String>,
    #[serde(default)]
    pub reason: String,
}

/// Verification outcome for one aspect.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FactReport {
    pub aspect_ref: usize,
    pub extracted: Vec<AtomicFact>,
    pub supported_count: usize,
    pub total_count: usize,
    /// Aspects with no verified facts are excluded from turn generation.
    pub survives: bool,
    /// True when the report reflects a transient gateway failure rather than
    /// a verification verdict.
    #[serde(default)]
    pub transient_failure: bool,
}

impl FactReport {
    pub fn supported_facts(&self) -> impl Iterator<Item = &AtomicFact> {
        self.extracted.iter().filter(|f| f.is_supported)
    }
}

/// Dataset-level verification aggregate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SupportSummary {
    /// Sum of supported facts over sum of extracted facts.
    pub verification_rate: f64,
    pub surviving_aspects: usize,
    pub supported_facts: usize,
    pub total_facts: usize,
}

const MAX_FACTS: usize = 5;

/// Extract 1-5 atomic facts from the aspect excerpt and verify each against
/// the documents.
///
/// Facts beyond five are truncated; a "supported" fact whose doc id does not
/// resolve against `documents` is demoted to unsupported. `survives` is true
/// iff at least one fact is supported.
pub fn extract_and_verify_facts(
    aspect: &Aspect,
    documents: &[Document],
    llm: &Gateway,
) -> Result<FactReport> {
    if aspect.excerpt.trim().is_empty() {
        return Err(Error::Precondition("aspect excerpt is empty".into()));
    }
    if documents.is_empty() {
        return Err(Error::Precondition("no documents to verify against".into()));
    }
    let response = llm.complete_structured(
        "fact_verification",
        &vars([
            ("aspect_excerpt", aspect.excerpt.clone()),
            ("documents", render_documents(documents)),
        ]),
    );
    let response = match response {
        Ok(r) => r,
        Err(e) if e.is_transient() => {
            return Ok(FactReport {
                aspect_ref: aspect.order_index,
                extracted: Vec::new(),
                supported_count: 0,
                total_count: 0,
                survives: false,
                transient_failure: true,
            })
        }
        Err(e) => return Err(e),
    };

    let mut extracted: Vec<AtomicFact> = Vec::new();
    if let Some(items) = response.parsed["extracted_facts"].as_array() {
        for item in items.iter().take(MAX_FACTS) {
            let fact = item["fact"].as_str().unwrap_or("").trim().to_string();
            if fact.is_empty() {
                continue;
            }
            let mut is_supported = item["is_supported"].as_bool().unwrap_or(false);
            let mut supporting_doc_id =
                item["supporting_doc_id"].as_str().map(str::to_string);
            let mut reason = item["reason"].as_str().unwrap_or("").to_string();
            // Support is tied to a resolvable document.
            let resolvable = supporting_doc_id
                .as_deref()
                .is_some_and(|id| documents.iter().any(|d| d.doc_id == id));
            if is_supported && !resolvable {
                is_supported = false;
                supporting_doc_id = None;
                reason = format!("demoted: no resolvable supporting document ({reason})");
            }
            if !is_supported {
                supporting_doc_id = None;
            }
            extracted.push(AtomicFact {
                fact,
                is_supported,
                supporting_doc_id,
                reason,
            });
        }
    }

    let supported_count = extracted.iter().filter(|f| f.is_supported).count();
    let total_count = extracted.len();
    Ok(FactReport {
        aspect_ref: aspect.order_index,
        extracted,
        supported_count,
        total_count,
        survives: supported_count >= 1,
        transient_failure: false,
    })
}

/// Aggregate verification rate and surviving-aspect count over reports.
pub fn support_summary(reports: &[FactReport]) -> Result<SupportSummary> {
    if reports.is_empty() {
        return Err(Error::Precondition("no fact reports to summarize".into()));
    }
    let supported: usize = reports.iter().map(|r| r.supported_count).sum();
    let total: usize = reports.iter().map(|r| r.total_count).sum();
    Ok(SupportSummary {
        verification_rate: if total == 0 {
            0.0
        } else {
            supported as f64 / total as f64
        },
        surviving_aspects: reports.iter().filter(|r| r.survives).count(),
        supported_facts: supported,
        total_facts: total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decompose::AspectType;
    use crate::gateway::MockProvider;
    use serde_json::json;

    fn aspect(excerpt: &str) -> Aspect {
        Aspect {
            aspect_name: "test aspect".into(),
            aspect_type: AspectType::Mechanism,
            excerpt: excerpt.into(),
            coverage: None,
            order_index: 0,
        }
    }

    fn docs() -> Vec<Document> {
        vec![
            Document::new("doc_a", "Organisms age because selection weakens late in life."),
            Document::new("doc_b", "Huntington's disease appears between ages 30 and 50."),
        ]
    }

    #[test]
    fn verbatim_excerpt_fully_supported() {
        let mock = MockProvider::new().respond(
            "fact_verification",
            json!({
                "extracted_facts": [
                    {"fact": "selection weakens late in life", "is_supported": true,
                     "supporting_doc_id": "doc_a", "reason": "stated"},
                ],
                "supported_facts": ["selection weakens late in life"],
                "unsupported_facts": []
            }),
        );
        let report =
            extract_and_verify_facts(&aspect("selection weakens late in life"), &docs(), &Gateway::with_mock(mock))
                .unwrap();
        assert_eq!(report.total_count, 1);
        assert_eq!(report.supported_count, 1);
        assert!(report.survives);
    }

    #[test]
    fn zero_supported_facts_do_not_survive() {
        let mock = MockProvider::new().respond(
            "fact_verification",
            json!({
                "extracted_facts": [
                    {"fact": "repair competes with reproduction", "is_supported": false,
                     "supporting_doc_id": null, "reason": "not found"},
                    {"fact": "high repair investment lengthens lifespan", "is_supported": false,
                     "supporting_doc_id": null, "reason": "not found"},
                ]
            }),
        );
        let report = extract_and_verify_facts(&aspect("soma"), &docs(), &Gateway::with_mock(mock)).unwrap();
        assert_eq!(report.total_count, 2);
        assert_eq!(report.supported_count, 0);
        assert!(!report.survives);
    }

    #[test]
    fn supported_fact_without_doc_id_is_demoted() {
        let mock = MockProvider::new().respond(
            "fact_verification",
            json!({
                "extracted_facts": [
                    {"fact": "a claim", "is_supported": true, "supporting_doc_id": null, "reason": ""},
                    {"fact": "another claim", "is_supported": true, "supporting_doc_id": "doc_zz", "reason": ""},
                ]
            }),
        );
        let report = extract_and_verify_facts(&aspect("x"), &docs(), &Gateway::with_mock(mock)).unwrap();
        assert_eq!(report.supported_count, 0);
        assert!(report.extracted.iter().all(|f| !f.is_supported));
        assert!(report.extracted.iter().all(|f| f.supporting_doc_id.is_none()));
    }

    #[test]
    fn facts_beyond_five_are_truncated() {
        let many: Vec<_> = (0..8)
            .map(|i| {
                json!({"fact": format!("fact {i}"), "is_supported": true,
                       "supporting_doc_id": "doc_a", "reason": ""})
            })
            .collect();
        let mock = MockProvider::new()
            .respond("fact_verification", json!({"extracted_facts": many}));
        let report = extract_and_verify_facts(&aspect("x"), &docs(), &Gateway::with_mock(mock)).unwrap();
        assert_eq!(report.total_count, 5);
    }

    #[test]
    fn empty_excerpt_is_a_precondition_error() {
        let err = extract_and_verify_facts(&aspect("  "), &docs(), &Gateway::with_mock(MockProvider::new()))
            .unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn summary_matches_direct_sums() {
        // Six aspects, verified counts 2/2, 1/1, 2/2, 1/1, 0/2, 1/1 -> 7/9.
        let counts = [(2, 2), (1, 1), (2, 2), (1, 1), (0, 2), (1, 1)];
        let reports: Vec<FactReport> = counts
            .iter()
            .enumerate()
            .map(|(i, &(supported, total))| FactReport {
                aspect_ref: i,
                extracted: Vec::new(),
                supported_count: supported,
                total_count: total,
                survives: supported >= 1,
                transient_failure: false,
            })
            .collect();
        let summary = support_summary(&reports).unwrap();
        assert_eq!(summary.supported_facts, 7);
        assert_eq!(summary.total_facts, 9);
        assert!((summary.verification_rate - 7.0 / 9.0).abs() < 1e-12);
        assert!((summary.verification_rate - 0.778).abs() < 1e-3);
        assert_eq!(summary.surviving_aspects, 5);
    }

    #[test]
    fn fully_supported_reports_rate_one() {
        let reports = vec![FactReport {
            aspect_ref: 0,
            extracted: Vec::new(),
            supported_count: 3,
            total_count: 3,
            survives: true,
            transient_failure: false,
        }];
        assert_eq!(support_summary(&reports).unwrap().verification_rate, 1.0);
    }

    #[test]
    fn randomized_counts_match_summation_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let n = rng.gen_range(1..10);
            let reports: Vec<FactReport> = (0..n)
                .map(|i| {
                    let total = rng.gen_range(1..=5usize);
                    let supported = rng.gen_range(0..=total);
                    FactReport {
                        aspect_ref: i,
                        extracted: Vec::new(),
                        supported_count: supported,
                        total_count: total,
                        survives: supported >= 1,
                        transient_failure: false,
                    }
                })
                .collect();
            // Independent oracle: direct summation loop.
            let mut supported = 0usize;
            let mut total = 0usize;
            for r in &reports {
                supported += r.supported_count;
                total += r.total_count;
            }
            let summary = support_summary(&reports).unwrap();
            assert_eq!(summary.supported_facts, supported);
            assert_eq!(summary.total_facts, total);
            assert!((summary.verification_rate - supported as f64 / total as f64).abs() < 1e-15);
        }
    }
}
