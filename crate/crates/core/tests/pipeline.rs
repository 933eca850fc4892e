//! End-to-end synthesis over the bundled evolution/aging fixture.

use std::path::PathBuf;

use convbench_core::corpus::{ingest_corpus, CorpusFormat};
use convbench_core::dataset::{conversation_qrels, dataset_stats, load_source_records};
use convbench_core::gateway::{Gateway, MockProvider};
use convbench_core::turns::{synthesize_conversation, SourceOutcome, SynthesisOptions};

fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/evolution_aging")
}

fn synthesize() -> (convbench_core::turns::Conversation, convbench_core::facts::SupportSummary) {
    let dir = fixture_dir();
    let corpus = ingest_corpus(&dir.join("corpus.jsonl"), CorpusFormat::Jsonl).unwrap();
    let sources = load_source_records(&dir.join("sources.jsonl"), &corpus).unwrap();
    assert_eq!(sources.len(), 1);
    let mock = MockProvider::from_dir(&dir.join("llm")).unwrap();
    let gateway = Gateway::with_mock(mock);
    match synthesize_conversation(&sources[0], &gateway, &SynthesisOptions::default()).unwrap() {
        SourceOutcome::Conversation {
            conversation,
            summary,
            ..
        } => (conversation, summary),
        other => panic!("expected a conversation, got {other:?}"),
    }
}

#[test]
fn fixture_synthesis_builds_the_five_turn_conversation() {
    let (conversation, summary) = synthesize();

    // Six aspects, one with unverifiable facts -> exactly five turns.
    assert_eq!(conversation.aspect_count, 6);
    assert_eq!(conversation.turns.len(), 5);
    conversation.validate().unwrap();

    // Verification summary: 7 of 9 facts.
    assert_eq!(summary.supported_facts, 7);
    assert_eq!(summary.total_facts, 9);
    assert!((summary.verification_rate - 7.0 / 9.0).abs() < 1e-12);
    assert!((summary.verification_rate - 0.778).abs() < 1e-3);
    assert_eq!(summary.surviving_aspects, 5);

    // The unverifiable aspect (index 4) produced no turn.
    assert!(conversation.turns.iter().all(|t| t.aspect_ref != 4));

    // The pleiotropy turn keeps the reference scoring and selection pattern.
    let turn4 = &conversation.turns[3];
    assert!(turn4
        .conversational_query
        .contains("genes that actually help us when we're young"));
    let ids: Vec<&str> = turn4.selected_docs.iter().map(|d| d.doc_id.as_str()).collect();
    assert_eq!(ids, vec!["Aging_theory_12.txt", "Evolution_38.txt"]);
    assert!((turn4.selected_docs[0].final_score - 7.15).abs() < 1e-9);
    assert!((turn4.selected_docs[1].final_score - 5.40).abs() < 1e-9);
    assert!(turn4
        .retrieval_reasoning
        .relevance_signals
        .iter()
        .any(|s| s == "antagonistic pleiotropy"));

    // Fifth turn cites the mortality trade-off.
    assert!(conversation.turns[4].answer.contains("selection favours early reproduction"));
}

#[test]
fn fixture_synthesis_grounds_every_turn_in_the_corpus() {
    let dir = fixture_dir();
    let corpus = ingest_corpus(&dir.join("corpus.jsonl"), CorpusFormat::Jsonl).unwrap();
    let (conversation, _) = synthesize();
    for turn in &conversation.turns {
        assert!(!turn.selected_docs.is_empty());
        for doc in &turn.selected_docs {
            assert!(corpus.contains(&doc.doc_id), "unknown doc {}", doc.doc_id);
        }
    }
    let qrels = conversation_qrels(std::slice::from_ref(&conversation));
    qrels.validate_against(&corpus).unwrap();
    assert_eq!(qrels.len(), 5);
}

#[test]
fn fixture_synthesis_is_bit_reproducible() {
    let (a, _) = synthesize();
    let (b, _) = synthesize();
    assert_eq!(
        serde_json::to_string(&a).unwrap(),
        serde_json::to_string(&b).unwrap()
    );
}

#[test]
fn fixture_stats_report_one_conversation_of_five_turns() {
    let (conversation, _) = synthesize();
    let stats = dataset_stats(std::slice::from_ref(&conversation)).unwrap();
    assert_eq!(stats.total.conversations, 1);
    assert_eq!(stats.total.turns, 5);
    assert!((stats.total.avg_turns - 5.0).abs() < 1e-12);
    assert_eq!(stats.per_domain.len(), 1);
    assert_eq!(stats.per_domain[0].domain, "biology");
}
