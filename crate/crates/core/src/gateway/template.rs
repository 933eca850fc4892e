//! Prompt templates and the shared registry.

use std::collections::BTreeMap;

use super::prompts;
use super::schema::{FieldKind, FieldSpec, Schema};
use crate::error::{Error, Result};

/// The ten aspect types accepted by extraction.
pub const ASPECT_TYPES: &[&str] = &[
    "detail",
    "step",
    "implication",
    "distinction",
    "definition",
    "mechanism",
    "example",
    "comparison",
    "history",
    "application",
];

/// Turn-diversity verdict categories.
pub const VALUE_TYPES: &[&str] = &[
    "new_facts",
    "deepening",
    "example",
    "implication",
    "different_angle",
    "repetitive",
];

/// The six turn dependency types.
pub const DEPENDENCY_TYPES: &[&str] = &[
    "coreference",
    "ellipsis",
    "substitution",
    "continuation",
    "topic_shift",
    "self_contained",
];

/// The nine question patterns.
pub const QUESTION_PATTERNS: &[&str] = &[
    "why",
    "how",
    "what",
    "compare",
    "what_if",
    "confirm",
    "more_detail",
    "example",
    "effect",
];

/// A prompt with named placeholders and a declared return shape.
#[derive(Debug, Clone, Copy)]
pub struct PromptTemplate {
    pub template_id: &'static str,
    pub body: &'static str,
    pub expected_schema: Schema,
}

const SCORE_1_5: FieldKind = FieldKind::Integer {
    min: Some(1),
    max: Some(5),
};

const AUDIT_SCORE_FIELDS: [FieldSpec; 2] = [
    FieldSpec::required("score", SCORE_1_5),
    FieldSpec::required("justification", FieldKind::Text),
];

const DOC_SCORE_FIELDS: &[FieldSpec] = &[
    FieldSpec::required("doc_id", FieldKind::Text),
    FieldSpec::required("support_score", FieldKind::Integer { min: None, max: None }),
    FieldSpec::required("completeness_score", FieldKind::Integer { min: None, max: None }),
    FieldSpec::required("clarity_score", FieldKind::Integer { min: None, max: None }),
    FieldSpec::required("misleading_score", FieldKind::Integer { min: None, max: None }),
    FieldSpec::optional("final_score", FieldKind::Number),
    FieldSpec::optional("reasoning", FieldKind::Text),
];

const FACT_FIELDS: &[FieldSpec] = &[
    FieldSpec::required("fact", FieldKind::Text),
    FieldSpec::required("is_supported", FieldKind::Bool),
    FieldSpec::required("supporting_doc_id", FieldKind::NullableText),
    FieldSpec::optional("reason", FieldKind::Text),
];

const ASPECT_FIELDS: &[FieldSpec] = &[
    FieldSpec::required("aspect_name", FieldKind::Text),
    FieldSpec::required("aspect_type", FieldKind::Enum(ASPECT_TYPES)),
    FieldSpec::required("excerpt", FieldKind::Text),
    FieldSpec::optional("distinct_from_existing", FieldKind::Text),
    FieldSpec::optional("coverage", FieldKind::Number),
];

/// The twelve generation-pipeline templates plus the six audit templates.
pub const REGISTRY: &[PromptTemplate] = &[
    PromptTemplate {
        template_id: "alignment_validation",
        body: prompts::ALIGNMENT_VALIDATION,
        expected_schema: Schema {
            fields: &[
                FieldSpec::required("key_claims", FieldKind::TextList),
                FieldSpec::required("supported_claims", FieldKind::TextList),
                FieldSpec::required("unsupported_claims", FieldKind::TextList),
                FieldSpec::required("coverage_percentage", FieldKind::Number),
                FieldSpec::required("is_sufficient", FieldKind::Bool),
            ],
        },
    },
    PromptTemplate {
        template_id: "aspect_extraction",
        body: prompts::ASPECT_EXTRACTION,
        expected_schema: Schema {
            fields: &[
                FieldSpec::required("aspects", FieldKind::ObjectList(ASPECT_FIELDS)),
                FieldSpec::optional("extraction_notes", FieldKind::Text),
            ],
        },
    },
    PromptTemplate {
        template_id: "fact_verification",
        body: prompts::FACT_VERIFICATION,
        expected_schema: Schema {
            fields: &[
                FieldSpec::required("extracted_facts", FieldKind::ObjectList(FACT_FIELDS)),
                FieldSpec::optional("supported_facts", FieldKind::TextList),
                FieldSpec::optional("unsupported_facts", FieldKind::TextList),
            ],
        },
    },
    PromptTemplate {
        template_id: "aspect_overlap",
        body: prompts::ASPECT_OVERLAP,
        expected_schema: Schema {
            fields: &[
                FieldSpec::required("has_overlap", FieldKind::Bool),
                FieldSpec::required("overlaps_with", FieldKind::NullableText),
                FieldSpec::required(
                    "overlap_type",
                    FieldKind::Enum(&["same_claims", "same_examples", "same_step", "no_overlap"]),
                ),
                FieldSpec::optional("reasoning", FieldKind::Text),
            ],
        },
    },
    PromptTemplate {
        template_id: "aspect_ordering",
        body: prompts::ASPECT_ORDERING,
        expected_schema: Schema {
            fields: &[
                FieldSpec::required("ordered_indices", FieldKind::IntegerList),
                FieldSpec::optional("reasoning", FieldKind::Text),
            ],
        },
    },
    PromptTemplate {
        template_id: "subquestion_generation",
        body: prompts::SUBQUESTION_GENERATION,
        expected_schema: Schema {
            fields: &[
                FieldSpec::required("sub_question", FieldKind::Text),
                FieldSpec::required("confidence", FieldKind::Number),
                FieldSpec::optional("reasoning", FieldKind::Text),
            ],
        },
    },
    PromptTemplate {
        template_id: "document_scoring",
        body: prompts::DOCUMENT_SCORING,
        expected_schema: Schema {
            fields: &[FieldSpec::required(
                "document_scores",
                FieldKind::ObjectList(DOC_SCORE_FIELDS),
            )],
        },
    },
    PromptTemplate {
        template_id: "opening_query",
        body: prompts::OPENING_QUERY,
        expected_schema: Schema {
            fields: &[
                FieldSpec::required("conversational_query", FieldKind::Text),
                FieldSpec::optional("kept_technical_content", FieldKind::Bool),
                FieldSpec::optional("natural_language_used", FieldKind::Bool),
            ],
        },
    },
    PromptTemplate {
        template_id: "followup_query",
        body: prompts::FOLLOWUP_QUERY,
        expected_schema: Schema {
            fields: &[
                FieldSpec::required("conversational_query", FieldKind::Text),
                FieldSpec::optional("transition_type", FieldKind::Text),
                FieldSpec::optional("uses_natural_language", FieldKind::Bool),
                FieldSpec::optional("references_previous_content", FieldKind::Bool),
            ],
        },
    },
    PromptTemplate {
        template_id: "grounded_answer",
        body: prompts::GROUNDED_ANSWER,
        expected_schema: Schema {
            fields: &[
                FieldSpec::required("answer", FieldKind::Text),
                FieldSpec::optional("uses_natural_language", FieldKind::Bool),
                FieldSpec::optional("avoids_meta_references", FieldKind::Bool),
                FieldSpec::optional("focuses_on_available_info", FieldKind::Bool),
            ],
        },
    },
    PromptTemplate {
        template_id: "turn_diversity",
        body: prompts::TURN_DIVERSITY,
        expected_schema: Schema {
            fields: &[
                FieldSpec::required("adds_value", FieldKind::Bool),
                FieldSpec::required("value_type", FieldKind::Enum(VALUE_TYPES)),
                FieldSpec::optional("reason", FieldKind::Text),
            ],
        },
    },
    PromptTemplate {
        template_id: "aspect_suitability",
        body: prompts::ASPECT_SUITABILITY,
        expected_schema: Schema {
            fields: &[
                FieldSpec::required("should_generate", FieldKind::Bool),
                FieldSpec::optional("reason", FieldKind::Text),
                FieldSpec::required(
                    "aspect_category",
                    FieldKind::Enum(&["substantive", "meta", "insufficient"]),
                ),
            ],
        },
    },
    PromptTemplate {
        template_id: "audit_naturalness",
        body: prompts::AUDIT_NATURALNESS,
        expected_schema: Schema {
            fields: &[
                AUDIT_SCORE_FIELDS[0],
                FieldSpec::required("natural_phrases", FieldKind::TextList),
                FieldSpec::required("unnatural_phrases", FieldKind::TextList),
                AUDIT_SCORE_FIELDS[1],
            ],
        },
    },
    PromptTemplate {
        template_id: "audit_coherence",
        body: prompts::AUDIT_COHERENCE,
        expected_schema: Schema {
            fields: &[
                AUDIT_SCORE_FIELDS[0],
                FieldSpec::required("good_connections", FieldKind::TextList),
                FieldSpec::required("weak_connections", FieldKind::TextList),
                FieldSpec::required("unclear_references", FieldKind::TextList),
                AUDIT_SCORE_FIELDS[1],
            ],
        },
    },
    PromptTemplate {
        template_id: "audit_question_quality",
        body: prompts::AUDIT_QUESTION_QUALITY,
        expected_schema: Schema {
            fields: &[
                AUDIT_SCORE_FIELDS[0],
                FieldSpec::required("aspects_covered", FieldKind::TextList),
                FieldSpec::required("repeated_questions", FieldKind::TextList),
                FieldSpec::required("weak_questions", FieldKind::TextList),
                AUDIT_SCORE_FIELDS[1],
            ],
        },
    },
    PromptTemplate {
        template_id: "audit_groundedness",
        body: prompts::AUDIT_GROUNDEDNESS,
        expected_schema: Schema {
            fields: &[
                AUDIT_SCORE_FIELDS[0],
                FieldSpec::required("supported_claims", FieldKind::TextList),
                FieldSpec::required("unsupported_claims", FieldKind::TextList),
                FieldSpec::required("made_up_content", FieldKind::TextList),
                AUDIT_SCORE_FIELDS[1],
            ],
        },
    },
    PromptTemplate {
        template_id: "dependency_classification",
        body: prompts::DEPENDENCY_CLASSIFICATION,
        expected_schema: Schema {
            fields: &[
                FieldSpec::required("dependency_type", FieldKind::Enum(DEPENDENCY_TYPES)),
                FieldSpec::required("evidence", FieldKind::Text),
                FieldSpec::optional("explanation", FieldKind::Text),
            ],
        },
    },
    PromptTemplate {
        template_id: "question_pattern_classification",
        body: prompts::QUESTION_PATTERN_CLASSIFICATION,
        expected_schema: Schema {
            fields: &[
                FieldSpec::required("question_pattern", FieldKind::Enum(QUESTION_PATTERNS)),
                FieldSpec::required("evidence", FieldKind::Text),
                FieldSpec::optional("explanation", FieldKind::Text),
            ],
        },
    },
];

/// Look up a registry template by id.
pub fn lookup(template_id: &str) -> Result<&'static PromptTemplate> {
    REGISTRY
        .iter()
        .find(|t| t.template_id == template_id)
        .ok_or_else(|| Error::UnknownTemplate(template_id.to_string()))
}

/// Substitute `{name}` placeholders in `body` with bound variables.
///
/// A placeholder is `{` + lowercase snake-case identifier + `}`; anything else
/// (JSON braces in the prompt text) passes through untouched. Unbound
/// placeholders are an error.
pub fn render(template_id: &str, body: &str, variables: &BTreeMap<String, String>) -> Result<String> {
    let mut out = String::with_capacity(body.len());
    let bytes = body.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' {
            if let Some((name, end)) = placeholder_at(bytes, i) {
                match variables.get(name) {
                    Some(value) => out.push_str(value),
                    None => {
                        return Err(Error::UnboundPlaceholder {
                            template_id: template_id.to_string(),
                            placeholder: name.to_string(),
                        })
                    }
                }
                i = end;
                continue;
            }
        }
        let ch_len = utf8_len(bytes[i]);
        out.push_str(std::str::from_utf8(&bytes[i..i + ch_len]).unwrap());
        i += ch_len;
    }
    Ok(out)
}

/// Names of all placeholders appearing in a template body.
pub fn placeholders(body: &str) -> Vec<&str> {
    let bytes = body.as_bytes();
    let mut names = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' {
            if let Some((name, end)) = placeholder_at(bytes, i) {
                if !names.contains(&name) {
                    names.push(name);
                }
                i = end;
                continue;
            }
        }
        i += utf8_len(bytes[i]);
    }
    names
}

fn placeholder_at(bytes: &[u8], start: usize) -> Option<(&str, usize)> {
    let mut j = start + 1;
    while j < bytes.len() && (bytes[j].is_ascii_lowercase() || bytes[j] == b'_' || bytes[j].is_ascii_digit()) {
        j += 1;
    }
    if j > start + 1 && j < bytes.len() && bytes[j] == b'}' {
        let name = std::str::from_utf8(&bytes[start + 1..j]).ok()?;
        Some((name, j + 1))
    } else {
        None
    }
}

fn utf8_len(first_byte: u8) -> usize {
    match first_byte {
        b if b < 0x80 => 1,
        b if b >> 5 == 0b110 => 2,
        b if b >> 4 == 0b1110 => 3,
        _ => 4,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_holds_exactly_the_eighteen_templates() {
        let ids: Vec<&str> = REGISTRY.iter().map(|t| t.template_id).collect();
        assert_eq!(
            ids,
            vec![
                "alignment_validation",
                "aspect_extraction",
                "fact_verification",
                "aspect_overlap",
                "aspect_ordering",
                "subquestion_generation",
                "document_scoring",
                "opening_query",
                "followup_query",
                "grounded_answer",
                "turn_diversity",
                "aspect_suitability",
                "audit_naturalness",
                "audit_coherence",
                "audit_question_quality",
                "audit_groundedness",
                "dependency_classification",
                "question_pattern_classification",
            ]
        );
    }

    #[test]
    fn render_substitutes_and_keeps_json_braces() {
        let mut vars = BTreeMap::new();
        vars.insert("query".to_string(), "why is the sky blue".to_string());
        let body = "QUERY: {query}\nReturn JSON:\n{\n  \"answer\": \"...\"\n}";
        let rendered = render("t", body, &vars).unwrap();
        assert!(rendered.contains("QUERY: why is the sky blue"));
        assert!(rendered.contains("\"answer\""));
    }

    #[test]
    fn unbound_placeholder_is_error() {
        let vars = BTreeMap::new();
        let err = render("t", "hello {name}", &vars).unwrap_err();
        assert!(matches!(err, Error::UnboundPlaceholder { .. }));
    }

    #[test]
    fn every_registry_template_renders_with_its_placeholders_bound() {
        for template in REGISTRY {
            let mut vars = BTreeMap::new();
            for name in placeholders(template.body) {
                vars.insert(name.to_string(), format!("<{name}>"));
            }
            assert!(!vars.is_empty(), "{} has no placeholders", template.template_id);
            render(template.template_id, template.body, &vars).unwrap();
        }
    }

    #[test]
    fn unicode_text_passes_through_render() {
        let vars = BTreeMap::new();
        let body = "no placeholders, just text — λ and emoji ✓ {not a placeholder";
        let rendered = render("t", body, &vars).unwrap();
        assert_eq!(rendered, body);
    }
}
