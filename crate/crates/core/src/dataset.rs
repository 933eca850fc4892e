//! Dataset file formats (conversations, source records) and dataset-level
//! statistics.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Qrels};
use crate::decompose::SourceRecord;
use crate::error::{Error, Result};
use crate::turns::Conversation;

/// Write conversations as line-delimited JSON records.
pub fn write_conversations(conversations: &[Conversation], path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for conversation in conversations {
        serde_json::to_writer(&mut out, conversation)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Load a conversations file, validating every record's invariants.
pub fn load_conversations(path: &Path) -> Result<Vec<Conversation>> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut conversations = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let conversation: Conversation =
            serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: idx + 1,
                message: e.to_string(),
            })?;
        conversation.validate()?;
        conversations.push(conversation);
    }
    Ok(conversations)
}

/// On-disk source record: documents referenced by id against a corpus.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct SourceRecordFile {
    id: String,
    query: String,
    gold_answer: String,
    #[serde(default)]
    reasoning: String,
    domain: String,
    doc_ids: Vec<String>,
}

/// Load source records, resolving their document ids against the corpus.
pub fn load_source_records(path: &Path, corpus: &Corpus) -> Result<Vec<SourceRecord>> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let file: SourceRecordFile = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?;
        let documents = file
            .doc_ids
            .iter()
            .map(|id| {
                corpus.get(id).cloned().ok_or_else(|| Error::Parse {
                    line: idx + 1,
                    message: format!("source `{}` references unknown doc `{id}`", file.id),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        records.push(SourceRecord {
            id: file.id,
            query: file.query,
            gold_answer: file.gold_answer,
            overall_reasoning: file.reasoning,
            domain: file.domain,
            documents,
        });
    }
    Ok(records)
}

/// Derive qrels from synthesized conversations: every selected document of a
/// turn is relevant (grade 1) for that turn's query id.
pub fn conversation_qrels(conversations: &[Conversation]) -> Qrels {
    let mut qrels = Qrels::default();
    for conversation in conversations {
        for turn in &conversation.turns {
            let query_id = conversation.query_id(turn.turn_index);
            for score in &turn.selected_docs {
                qrels.add(query_id.clone(), score.doc_id.clone(), 1);
            }
        }
    }
    qrels
}

/// Per-domain dataset statistics row.
#[derive(Debug, Clone, Serialize)]
pub struct DomainStats {
    pub domain: String,
    pub conversations: usize,
    pub turns: usize,
    pub avg_turns: f64,
    pub avg_aspects: f64,
    pub avg_docs_per_turn: f64,
}

/// Dataset statistics in the per-domain + total shape.
#[derive(Debug, Clone, Serialize)]
pub struct DatasetStats {
    pub per_domain: Vec<DomainStats>,
    pub total: DomainStats,
}

/// Compute conversation/turn/aspect/document statistics. Averages are exact
/// ratios of integer sums; rounding happens only at render time.
pub fn dataset_stats(conversations: &[Conversation]) -> Result<DatasetStats> {
    if conversations.is_empty() {
        return Err(Error::Precondition("no conversations to summarize".into()));
    }
    #[derive(Default)]
    struct Acc {
        conversations: usize,
        turns: usize,
        aspects: usize,
        selected_docs: usize,
    }
    impl Acc {
        fn row(&self, domain: &str) -> DomainStats {
            DomainStats {
                domain: domain.to_string(),
                conversations: self.conversations,
                turns: self.turns,
                avg_turns: self.turns as f64 / self.conversations as f64,
                avg_aspects: self.aspects as f64 / self.conversations as f64,
                avg_docs_per_turn: self.selected_docs as f64 / self.turns as f64,
            }
        }
    }
    let mut by_domain: BTreeMap<String, Acc> = BTreeMap::new();
    let mut total = Acc::default();
    for conversation in conversations {
        let acc = by_domain.entry(conversation.domain.clone()).or_default();
        let docs: usize = conversation.turns.iter().map(|t| t.selected_docs.len()).sum();
        for entry in [acc, &mut total] {
            entry.conversations += 1;
            entry.turns += conversation.turns.len();
            entry.aspects += conversation.aspect_count;
            entry.selected_docs += docs;
        }
    }
    Ok(DatasetStats {
        per_domain: by_domain
            .iter()
            .map(|(domain, acc)| acc.row(domain))
            .collect(),
        total: total.row("total"),
    })
}

impl DatasetStats {
    pub fn render(&self) -> String {
        let mut rows: Vec<Vec<String>> = Vec::new();
        for row in self.per_domain.iter().chain(std::iter::once(&self.total)) {
            rows.push(vec![
                row.domain.clone(),
                row.conversations.to_string(),
                row.turns.to_string(),
                format!("{:.2}", row.avg_turns),
                format!("{:.2}", row.avg_aspects),
                format!("{:.2}", row.avg_docs_per_turn),
            ]);
        }
        crate::report::render_table(
            &["domain", "#conv", "#turns", "avg#t", "avg#a", "avg#d"],
            &rows,
        )
    }
}
