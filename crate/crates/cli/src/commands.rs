//! Subcommand implementations.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use serde_json::json;

use convbench_core::corpus::{ingest_corpus, write_qrels, Corpus, CorpusFormat, Qrels};
use convbench_core::dataset::{
    conversation_qrels, dataset_stats, load_conversations, load_source_records,
    write_conversations,
};
use convbench_core::gateway::{
    Gateway, GatewayConfig, MockProvider, Provider, ProviderRequest,
};
use convbench_core::geneval::{
    build_context, generation_prompt, judge_answer, rouge_l, GenerationRecord, RetrievalMode,
};
use convbench_core::retrieval::{
    aggregate_run, analyze_results, build_lexical_index, execute_runs, paired_observations,
    paired_t_test, write_run, AnalysisKind, AnalysisReport, DenseIndex, GainFunction,
    HashEmbedder, IndexConfig, MetricKind, Retriever, RunResult, Strategy,
};
use convbench_core::turns::{synthesize_all, Conversation, SourceOutcome, SynthesisOptions};
use convbench_core::{audit as audit_mod, par, report::render_table};

use crate::config::RunConfig;

pub fn build_provider(config: &RunConfig) -> Result<Arc<dyn Provider>> {
    if config.run.mock {
        let dir = config
            .paths
            .fixtures
            .as_ref()
            .context("mock mode needs paths.fixtures")?;
        Ok(Arc::new(MockProvider::from_dir(dir)?))
    } else {
        #[cfg(feature = "http")]
        {
            let endpoint = config
                .provider
                .endpoint
                .as_ref()
                .context("provider.endpoint missing (or run with --mock)")?;
            Ok(Arc::new(convbench_core::gateway::HttpProvider::new(
                endpoint.clone(),
                config.provider.api_key.clone(),
            )))
        }
        #[cfg(not(feature = "http"))]
        bail!("built without the http feature; only --mock runs are available")
    }
}

pub fn build_gateway(config: &RunConfig, provider: Arc<dyn Provider>) -> Gateway {
    Gateway::new(
        provider,
        GatewayConfig {
            model_name: config.provider.model.clone(),
            temperature: config.provider.temperature,
            max_tokens: config.provider.max_tokens,
            max_retries: config.provider.max_retries,
            max_in_flight: config.run.parallelism,
        },
    )
}

fn gain(config: &RunConfig) -> Result<GainFunction> {
    match config.eval.gain.as_str() {
        "exponential" => Ok(GainFunction::Exponential),
        "linear" => Ok(GainFunction::Linear),
        other => bail!("unknown gain function `{other}`"),
    }
}

fn strategies(config: &RunConfig) -> Result<Vec<Strategy>> {
    config
        .eval
        .strategies
        .iter()
        .map(|s| Strategy::parse(s).map_err(Into::into))
        .collect()
}

fn build_retrievers(config: &RunConfig, corpus: &Corpus) -> Result<Vec<Retriever>> {
    let mut retrievers = Vec::new();
    for id in &config.eval.retrievers {
        let retriever = match id.as_str() {
            "bm25" => Retriever::Lexical {
                id: id.clone(),
                index: build_lexical_index(corpus, IndexConfig::default())?,
            },
            "mock-dense" | "hash" => Retriever::Dense {
                index: DenseIndex::build(corpus, Box::new(HashEmbedder::default()))?,
            },
            other => {
                #[cfg(feature = "http")]
                {
                    let endpoint = config
                        .embedding
                        .endpoint
                        .as_ref()
                        .with_context(|| format!("retriever `{other}` needs embedding.endpoint"))?;
                    Retriever::Dense {
                        index: DenseIndex::build(
                            corpus,
                            Box::new(convbench_core::retrieval::HttpEmbeddingService::new(
                                other.to_string(),
                                endpoint.clone(),
                            )),
                        )?,
                    }
                }
                #[cfg(not(feature = "http"))]
                bail!("retriever `{other}` needs the http feature")
            }
        };
        retrievers.push(retriever);
    }
    if retrievers.is_empty() {
        bail!("no retrievers configured");
    }
    Ok(retrievers)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

fn load_corpus(config: &RunConfig) -> Result<Corpus> {
    let path = config.paths.corpus.as_ref().context("paths.corpus missing")?;
    let format = if path.extension().is_some_and(|e| e == "tsv") {
        CorpusFormat::Tsv
    } else {
        CorpusFormat::Jsonl
    };
    Ok(ingest_corpus(path, format)?)
}

/// Validate the numeric knobs shared by synthesis and mining.
fn validate_thresholds(config: &RunConfig) -> Result<()> {
    convbench_core::corpus::MiningConfig {
        queries_per_source: config.synthesis.queries_per_source,
        passage_target_len: config.synthesis.passage_target_len,
        overlap_threshold: config.synthesis.overlap_threshold,
        ..Default::default()
    }
    .validate()?;
    if !config.synthesis.selection_threshold.is_finite() {
        bail!("synthesis.selection_threshold must be finite");
    }
    if config.audit.alignment_threshold < 0.0 {
        bail!("audit.alignment_threshold must be >= 0");
    }
    Ok(())
}

/// `synthesize`: sources -> conversations file + qrels + synthesis report.
pub fn synthesize(config: &RunConfig) -> Result<()> {
    config.validate_inputs(true, true)?;
    validate_thresholds(config)?;
    std::fs::create_dir_all(&config.paths.out_dir)?;
    let corpus = load_corpus(config)?;
    let sources = load_source_records(
        config.paths.sources.as_ref().context("paths.sources missing")?,
        &corpus,
    )?;
    let provider = build_provider(config)?;
    let gateway = build_gateway(config, provider);
    let options = SynthesisOptions {
        aspects_per_record: config.synthesis.aspects_per_record,
        selection_threshold: config.synthesis.selection_threshold,
        ..Default::default()
    };

    let outcomes = synthesize_all(&sources, &gateway, &options);
    let mut conversations = Vec::new();
    let mut skipped = Vec::new();
    let mut rejected = Vec::new();
    let mut warnings = Vec::new();
    let mut supported = 0usize;
    let mut total = 0usize;
    for (source_id, outcome) in outcomes {
        match outcome? {
            SourceOutcome::Conversation {
                conversation,
                summary,
                warnings: w,
            } => {
                supported += summary.supported_facts;
                total += summary.total_facts;
                warnings.extend(w.into_iter().map(|m| format!("{source_id}: {m}")));
                conversations.push(conversation);
            }
            SourceOutcome::Skipped { detail } => skipped.push(json!({
                "id": source_id, "detail": detail,
            })),
            SourceOutcome::Rejected { rejection, warnings: w } => {
                warnings.extend(w.into_iter().map(|m| format!("{source_id}: {m}")));
                rejected.push(json!({
                    "id": source_id,
                    "reason": rejection.reason,
                    "detail": rejection.detail,
                }));
            }
        }
    }

    write_conversations(&conversations, &config.conversations_path())?;
    let qrels = conversation_qrels(&conversations);
    write_qrels(&qrels, &config.qrels_path())?;

    let report = json!({
        "seed": config.run.seed,
        "sources": sources.len(),
        "conversations": conversations.len(),
        "skipped": skipped,
        "rejected": rejected,
        "verification": {
            "supported_facts": supported,
            "total_facts": total,
            "rate": if total == 0 { 0.0 } else { supported as f64 / total as f64 },
        },
        "warnings": warnings,
    });
    write_json(&config.paths.out_dir.join("synthesis_report.json"), &report)?;
    let mut text = format!(
        "sources: {}\nconversations: {}\nskipped: {}\nrejected: {}\nverified facts: {}/{}\n",
        sources.len(),
        conversations.len(),
        report["skipped"].as_array().unwrap().len(),
        report["rejected"].as_array().unwrap().len(),
        supported,
        total,
    );
    for w in report["warnings"].as_array().unwrap() {
        text.push_str(&format!("warning: {}\n", w.as_str().unwrap()));
    }
    write_text(&config.paths.out_dir.join("synthesis_report.txt"), &text)?;
    println!(
        "synthesized {} conversation(s) from {} source(s) -> {}",
        conversations.len(),
        sources.len(),
        config.conversations_path().display()
    );
    Ok(())
}

fn load_eval_inputs(config: &RunConfig) -> Result<(Corpus, Vec<Conversation>, Qrels)> {
    config.validate_inputs(true, false)?;
    let corpus = load_corpus(config)?;
    let conversations = load_conversations(&config.conversations_path())?;
    let qrels = convbench_core::corpus::load_qrels(&config.qrels_path())?;
    qrels.validate_against(&corpus)?;
    Ok((corpus, conversations, qrels))
}

/// `eval-retrieval`: run files + metric, significance, and analysis reports.
pub fn eval_retrieval(config: &RunConfig) -> Result<()> {
    let (corpus, conversations, qrels) = load_eval_inputs(config)?;
    std::fs::create_dir_all(config.paths.out_dir.join("runs"))?;
    let strategies = strategies(config)?;
    let gain = gain(config)?;
    let retrievers = build_retrievers(config, &corpus)?;
    let needs_gateway = strategies.iter().any(Strategy::needs_gateway);
    let gateway = if needs_gateway {
        Some(build_gateway(config, build_provider(config)?))
    } else {
        None
    };

    let runs = execute_runs(
        &retrievers,
        &strategies,
        &conversations,
        config.eval.k,
        gateway.as_ref(),
    )?;

    let mut metric_rows = Vec::new();
    let mut metrics_json = Vec::new();
    for run in &runs {
        let file = config.paths.out_dir.join("runs").join(format!(
            "{}_{}.run",
            run.retriever_id,
            run.strategy.as_str()
        ));
        write_run(run, &file)?;
        let aggregate = aggregate_run(run, &qrels, &conversations, config.eval.k, gain)?;
        let macro_avg = aggregate.report.macro_avg;
        metric_rows.push(vec![
            run.retriever_id.clone(),
            run.strategy.as_str().to_string(),
            format!("{:.4}", macro_avg.ndcg),
            format!("{:.4}", macro_avg.map),
            format!("{:.4}", macro_avg.recall),
            format!("{:.4}", macro_avg.mrr),
            aggregate.skipped.len().to_string(),
        ]);
        metrics_json.push(json!({
            "retriever": run.retriever_id,
            "strategy": run.strategy.as_str(),
            "k": config.eval.k,
            "macro": macro_avg,
            "per_domain": aggregate.report.per_domain,
            "skipped_queries": aggregate.skipped,
        }));
    }
    let metrics_table = render_table(
        &["retriever", "strategy", "ndcg", "map", "recall", "mrr", "skipped"],
        &metric_rows,
    );
    write_text(&config.paths.out_dir.join("metrics.txt"), &metrics_table)?;
    write_json(
        &config.paths.out_dir.join("metrics.json"),
        &serde_json::Value::Array(metrics_json),
    )?;

    // Paired t-tests of every other strategy against the baseline, pooling
    // turn-level observations across retrievers.
    let mut ttest_rows = Vec::new();
    let mut ttest_json = Vec::new();
    if strategies.contains(&Strategy::Baseline) {
        let baseline_runs: Vec<RunResult> = runs
            .iter()
            .filter(|r| r.strategy == Strategy::Baseline)
            .cloned()
            .collect();
        for &strategy in strategies.iter().filter(|&&s| s != Strategy::Baseline) {
            let strategy_runs: Vec<RunResult> = runs
                .iter()
                .filter(|r| r.strategy == strategy)
                .cloned()
                .collect();
            let (a, b) = paired_observations(
                &strategy_runs,
                &baseline_runs,
                &qrels,
                config.eval.k,
                gain,
                MetricKind::Ndcg,
            )?;
            let test = paired_t_test(&a, &b)?;
            ttest_rows.push(vec![
                format!("{} vs baseline", strategy.as_str()),
                format!("{:+.4}", test.mean_delta),
                format!("{:.4}", test.standard_error),
                format!("{:.3}", test.t_statistic),
                format!("{:.4}", test.p_value),
                test.n.to_string(),
            ]);
            ttest_json.push(json!({
                "comparison": format!("{}_vs_baseline", strategy.as_str()),
                "result": test,
            }));
        }
    }
    write_text(
        &config.paths.out_dir.join("ttests.txt"),
        &render_table(&["comparison", "mean_delta", "se", "t", "p", "n"], &ttest_rows),
    )?;
    write_json(
        &config.paths.out_dir.join("ttests.json"),
        &serde_json::Value::Array(ttest_json),
    )?;

    let mut analysis_json = serde_json::Map::new();
    let mut analysis_text = String::new();
    for (name, kind) in [
        ("turn_position", AnalysisKind::TurnPosition),
        ("complexity", AnalysisKind::Complexity),
        ("failure", AnalysisKind::Failure),
    ] {
        let report = analyze_results(&runs, &qrels, &conversations, kind, config.eval.k, gain)?;
        analysis_text.push_str(&format!("== {name} ==\n"));
        analysis_text.push_str(&render_analysis(&report));
        analysis_text.push('\n');
        analysis_json.insert(name.to_string(), serde_json::to_value(&report)?);
    }
    write_text(&config.paths.out_dir.join("analysis.txt"), &analysis_text)?;
    write_json(
        &config.paths.out_dir.join("analysis.json"),
        &serde_json::Value::Object(analysis_json),
    )?;

    println!(
        "evaluated {} run(s) over {} conversation(s) -> {}",
        runs.len(),
        conversations.len(),
        config.paths.out_dir.display()
    );
    Ok(())
}

fn render_analysis(report: &AnalysisReport) -> String {
    match report {
        AnalysisReport::TurnPosition(rows) => render_table(
            &["strategy", "turn", "count", "mean_ndcg"],
            &rows
                .iter()
                .map(|r| {
                    vec![
                        r.strategy.as_str().to_string(),
                        r.bucket.clone(),
                        r.count.to_string(),
                        format!("{:.4}", r.mean_ndcg),
                    ]
                })
                .collect::<Vec<_>>(),
        ),
        AnalysisReport::Complexity(rows) => render_table(
            &["strategy", "complexity", "turns", "mean_max_ndcg"],
            &rows
                .iter()
                .map(|r| {
                    vec![
                        r.strategy.as_str().to_string(),
                        r.bucket.clone(),
                        r.turns.to_string(),
                        format!("{:.4}", r.mean_max_ndcg),
                    ]
                })
                .collect::<Vec<_>>(),
        ),
        AnalysisReport::Failure(rows) => render_table(
            &["strategy", ">=0.8", "0.5-0.8", "0.3-0.5", "<0.3", "t1_share_of_bottom"],
            &rows
                .iter()
                .map(|r| {
                    vec![
                        r.strategy.as_str().to_string(),
                        format!("{:.1}%", r.shares[0] * 100.0),
                        format!("{:.1}%", r.shares[1] * 100.0),
                        format!("{:.1}%", r.shares[2] * 100.0),
                        format!("{:.1}%", r.shares[3] * 100.0),
                        format!("{:.1}%", r.first_turn_share_of_bottom * 100.0),
                    ]
                })
                .collect::<Vec<_>>(),
        ),
    }
}

/// `eval-generation`: generation records plus judge/lexical reports.
pub fn eval_generation(config: &RunConfig) -> Result<()> {
    let (corpus, conversations, qrels) = load_eval_inputs(config)?;
    std::fs::create_dir_all(&config.paths.out_dir)?;
    let provider = build_provider(config)?;
    let gateway = build_gateway(config, provider.clone());
    let modes: Vec<RetrievalMode> = config
        .eval
        .modes
        .iter()
        .map(|m| RetrievalMode::parse(m).map_err(Into::into))
        .collect::<Result<_>>()?;

    // Retrieved mode draws from one configured (retriever, strategy) run.
    let retrieved_run: Option<RunResult> = if modes.contains(&RetrievalMode::Retrieved) {
        let (retriever_id, strategy) = &config.eval.retrieved_from;
        let strategy = Strategy::parse(strategy)?;
        let sub_config = RunConfig {
            eval: crate::config::EvalConfig {
                retrievers: vec![retriever_id.clone()],
                ..config.eval.clone()
            },
            ..config.clone()
        };
        let retrievers = build_retrievers(&sub_config, &corpus)?;
        let gateway_ref = strategy.needs_gateway().then_some(&gateway);
        let runs = execute_runs(
            &retrievers,
            &[strategy],
            &conversations,
            config.eval.k.max(config.eval.generation_k),
            gateway_ref,
        )?;
        Some(runs.into_iter().next().expect("one run"))
    } else {
        None
    };

    let mut jobs = Vec::new();
    for (ci, conversation) in conversations.iter().enumerate() {
        for turn in &conversation.turns {
            for &mode in &modes {
                jobs.push((ci, turn.turn_index, mode));
            }
        }
    }
    let records = par::map_collect(jobs, |(ci, turn_index, mode)| {
        let conversation = &conversations[ci];
        let context = build_context(
            turn_index,
            conversation,
            mode,
            retrieved_run.as_ref(),
            &qrels,
            &corpus,
            config.eval.generation_k,
        )?;
        let prompt = generation_prompt(&context);
        let variables = convbench_core::gateway::vars([
            ("prompt", prompt.clone()),
            ("query", context.question.clone()),
            ("mode", mode.as_str().to_string()),
        ]);
        let answer = provider.complete(&ProviderRequest {
            model_name: &config.eval.generator,
            prompt_text: &prompt,
            temperature: config.provider.temperature,
            max_tokens: config.provider.max_tokens,
            template_id: "answer_generation",
            variables: &variables,
            attempt: 1,
        })?;
        let reference = &conversation
            .turns
            .iter()
            .find(|t| t.turn_index == turn_index)
            .expect("turn exists")
            .answer;
        let judge_scores = judge_answer(&context, &answer, reference, &gateway)?;
        let rouge = rouge_l(&answer, reference).ok();
        let reference = reference.clone();
        Ok((
            GenerationRecord {
                conv_id: conversation.conv_id.clone(),
                turn_index,
                mode,
                generator_tag: config.eval.generator.clone(),
                answer,
                judge_scores,
                rouge_l: rouge,
                meteor: None,
                bert_score_f1: None,
            },
            reference,
        ))
    });
    let records: Vec<(GenerationRecord, String)> = records.into_iter().collect::<Result<_>>()?;
    let mut records = records;

    // Optional external scorer for METEOR / BERTScore.
    #[cfg(feature = "http")]
    if let Some(endpoint) = &config.scorer.endpoint {
        let scorer = convbench_core::geneval::ExternalScorerClient::new(endpoint.clone());
        let pairs: Vec<(String, String)> = records
            .iter()
            .map(|(r, reference)| (r.answer.clone(), reference.clone()))
            .collect();
        for ((record, _), (meteor, bert)) in records.iter_mut().zip(scorer.score(&pairs)?) {
            record.meteor = Some(meteor);
            record.bert_score_f1 = Some(bert);
        }
    }
    let records: Vec<GenerationRecord> = records.into_iter().map(|(r, _)| r).collect();

    let records_path = config.paths.out_dir.join("generation_records.jsonl");
    {
        let mut out = std::io::BufWriter::new(std::fs::File::create(&records_path)?);
        use std::io::Write;
        for record in &records {
            serde_json::to_writer(&mut out, record)?;
            out.write_all(b"\n")?;
        }
    }

    // Per-mode means over judge average, dimensions, and ROUGE-L F1.
    let mut rows = Vec::new();
    let mut report_json = Vec::new();
    for &mode in &modes {
        let of_mode: Vec<&GenerationRecord> =
            records.iter().filter(|r| r.mode == mode).collect();
        let judged: Vec<&GenerationRecord> = of_mode
            .iter()
            .copied()
            .filter(|r| r.judge_scores.is_some())
            .collect();
        let mean_judge = mean(judged.iter().map(|r| r.judge_scores.as_ref().unwrap().average()));
        let mut dim_means: BTreeMap<String, f64> = BTreeMap::new();
        for dim in convbench_core::geneval::JUDGE_DIMENSIONS {
            let values: Vec<f64> = judged
                .iter()
                .filter_map(|r| r.judge_scores.as_ref().unwrap().normalized.get(*dim).copied())
                .collect();
            if !values.is_empty() {
                dim_means.insert(dim.to_string(), mean(values.iter().copied()));
            }
        }
        let mean_rouge = mean(
            of_mode
                .iter()
                .filter_map(|r| r.rouge_l.map(|x| x.f1)),
        );
        rows.push(vec![
            mode.as_str().to_string(),
            of_mode.len().to_string(),
            format!("{:.4}", mean_judge),
            format!("{:.4}", mean_rouge),
        ]);
        report_json.push(json!({
            "mode": mode.as_str(),
            "records": of_mode.len(),
            "judged": judged.len(),
            "mean_judge_average": mean_judge,
            "dimension_means": dim_means,
            "mean_rouge_l_f1": mean_rouge,
        }));
    }
    write_text(
        &config.paths.out_dir.join("generation_report.txt"),
        &render_table(&["mode", "records", "judge_avg", "rouge_l_f1"], &rows),
    )?;
    write_json(
        &config.paths.out_dir.join("generation_report.json"),
        &serde_json::Value::Array(report_json),
    )?;
    println!(
        "evaluated generation for {} record(s) -> {}",
        records.len(),
        records_path.display()
    );
    Ok(())
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let collected: Vec<f64> = values.collect();
    if collected.is_empty() {
        return 0.0;
    }
    collected.iter().sum::<f64>() / collected.len() as f64
}

/// `audit`: conversation-quality report with label distributions.
pub fn audit(config: &RunConfig) -> Result<()> {
    let (corpus, conversations, _) = load_eval_inputs(config)?;
    std::fs::create_dir_all(&config.paths.out_dir)?;
    let gateway = build_gateway(config, build_provider(config)?);

    let audits: Vec<_> = par::map_collect(conversations.clone(), |conversation| {
        let doc_ids: Vec<String> = conversation
            .turns
            .iter()
            .flat_map(|t| t.selected_docs.iter().map(|d| d.doc_id.clone()))
            .collect();
        let documents: Vec<_> = doc_ids
            .iter()
            .filter_map(|id| corpus.get(id).cloned())
            .collect();
        audit_mod::audit_conversation(&conversation, &documents, &gateway)
            .map(|score| (conversation.conv_id.clone(), score))
    })
    .into_iter()
    .collect::<convbench_core::Result<Vec<_>>>()?;

    let mut turn_jobs = Vec::new();
    for (ci, conversation) in conversations.iter().enumerate() {
        for (ti, _) in conversation.turns.iter().enumerate() {
            turn_jobs.push((ci, ti));
        }
    }
    let labels: Vec<(audit_mod::DependencyLabel, audit_mod::PatternLabel)> =
        par::map_collect(turn_jobs, |(ci, ti)| {
            let conversation = &conversations[ci];
            let turn = &conversation.turns[ti];
            let prior: Vec<(String, String)> = conversation.turns[..ti]
                .iter()
                .map(|t| (t.conversational_query.clone(), t.answer.clone()))
                .collect();
            let prior_text = if prior.is_empty() {
                String::new()
            } else {
                convbench_core::turns::render_history(&prior)
            };
            let dependency = audit_mod::classify_dependency(turn, &prior_text, &gateway)?;
            let pattern =
                audit_mod::classify_question_pattern(&turn.conversational_query, &gateway)?;
            Ok::<_, convbench_core::Error>((dependency, pattern))
        })
        .into_iter()
        .collect::<convbench_core::Result<Vec<_>>>()?;

    let dependency_labels: Vec<_> = labels.iter().map(|(d, _)| d.clone()).collect();
    let pattern_labels: Vec<_> = labels.iter().map(|(_, p)| p.clone()).collect();
    let dependency_dist = audit_mod::dependency_distribution(&dependency_labels)?;
    let pattern_dist = audit_mod::pattern_distribution(&pattern_labels)?;

    let dims = ["naturalness", "turn_coherence", "question_quality", "groundedness"];
    let mut dim_means: BTreeMap<String, f64> = BTreeMap::new();
    let mut histogram: BTreeMap<String, [usize; 5]> = BTreeMap::new();
    for dim in dims {
        let values: Vec<f64> = audits.iter().map(|(_, s)| s.dimensions()[dim]).collect();
        dim_means.insert(dim.to_string(), mean(values.iter().copied()));
        let mut counts = [0usize; 5];
        for v in values {
            counts[(v as usize).clamp(1, 5) - 1] += 1;
        }
        histogram.insert(dim.to_string(), counts);
    }

    // Self-contained count equals the conversation count when every first
    // turn (and only first turns) is labeled self-contained.
    let self_contained = dependency_dist.counts["self_contained"];
    let identity_holds = self_contained == conversations.len() as u64;

    let alignment = if config.audit.human_means.is_empty() {
        None
    } else {
        Some(audit_mod::human_alignment_report(
            &dim_means,
            &config.audit.human_means,
            config.audit.alignment_threshold,
        )?)
    };

    let report = json!({
        "conversations": audits.iter().map(|(id, score)| json!({
            "conv_id": id,
            "naturalness": score.naturalness,
            "turn_coherence": score.turn_coherence,
            "question_quality": score.question_quality,
            "groundedness": score.groundedness,
            "partial": score.partial,
            "evidence": score.evidence,
        })).collect::<Vec<_>>(),
        "dimension_means": dim_means,
        "score_histogram": histogram,
        "dependency_distribution": dependency_dist,
        "question_pattern_distribution": pattern_dist,
        "self_contained_identity": {
            "self_contained": self_contained,
            "conversations": conversations.len(),
            "holds": identity_holds,
        },
        "human_alignment": alignment,
    });
    write_json(&config.paths.out_dir.join("audit_report.json"), &report)?;

    let mut text = String::new();
    text.push_str(&render_table(
        &["dimension", "mean", "s1", "s2", "s3", "s4", "s5"],
        &dims
            .iter()
            .map(|d| {
                let h = histogram[*d];
                vec![
                    d.to_string(),
                    format!("{:.2}", dim_means[*d]),
                    h[0].to_string(),
                    h[1].to_string(),
                    h[2].to_string(),
                    h[3].to_string(),
                    h[4].to_string(),
                ]
            })
            .collect::<Vec<_>>(),
    ));
    text.push('\n');
    for (name, dist) in [
        ("dependency types", &dependency_dist),
        ("question patterns", &pattern_dist),
    ] {
        text.push_str(&format!(
            "{name} (normalized entropy {:.2}):\n",
            dist.normalized_entropy
        ));
        for (label, count) in &dist.counts {
            text.push_str(&format!("  {label}: {count}\n"));
        }
        text.push('\n');
    }
    if !identity_holds {
        text.push_str(&format!(
            "note: self_contained count {} differs from conversation count {}\n",
            self_contained,
            conversations.len()
        ));
    }
    if let Some(alignment) = &alignment {
        text.push_str(&format!(
            "human alignment at threshold {}: {}\n",
            alignment.threshold,
            if alignment.pass { "pass" } else { "fail" }
        ));
        for row in &alignment.rows {
            text.push_str(&format!(
                "  {}: llm {:.2} human {:.2} delta {:+.2} {}\n",
                row.dimension,
                row.llm_mean,
                row.human_mean,
                row.delta,
                if row.within_threshold { "ok" } else { "outside" }
            ));
        }
    }
    write_text(&config.paths.out_dir.join("audit_report.txt"), &text)?;
    println!(
        "audited {} conversation(s) -> {}",
        conversations.len(),
        config.paths.out_dir.join("audit_report.json").display()
    );
    Ok(())
}

/// `stats`: dataset statistics table (plus corpus counts when available).
pub fn stats(config: &RunConfig) -> Result<()> {
    let conversations = load_conversations(&config.conversations_path())?;
    let stats = dataset_stats(&conversations)?;
    std::fs::create_dir_all(&config.paths.out_dir)?;
    let mut text = stats.render();
    let mut value = serde_json::to_value(&stats)?;
    if let Some(path) = &config.paths.corpus {
        if path.exists() {
            let corpus = load_corpus(config)?;
            let corpus_stats = corpus.stats();
            text.push('\n');
            text.push_str(&corpus_stats.render());
            value["corpus"] = serde_json::to_value(&corpus_stats)?;
        }
    }
    write_text(&config.paths.out_dir.join("stats.txt"), &text)?;
    write_json(&config.paths.out_dir.join("stats.json"), &value)?;
    print!("{text}");
    Ok(())
}

/// `report`: consolidated summary of whatever artifacts exist.
pub fn report(config: &RunConfig) -> Result<()> {
    let sections = [
        ("dataset statistics", "stats.txt"),
        ("synthesis", "synthesis_report.txt"),
        ("retrieval metrics", "metrics.txt"),
        ("significance tests", "ttests.txt"),
        ("analyses", "analysis.txt"),
        ("generation", "generation_report.txt"),
        ("quality audit", "audit_report.txt"),
    ];
    let mut text = String::new();
    let mut found = 0;
    for (title, file) in sections {
        let path = config.paths.out_dir.join(file);
        if let Ok(content) = std::fs::read_to_string(&path) {
            text.push_str(&format!("==== {title} ====\n{content}\n"));
            found += 1;
        }
    }
    if found == 0 {
        bail!(
            "no artifacts found under {}; run the other subcommands first",
            config.paths.out_dir.display()
        );
    }
    std::fs::create_dir_all(&config.paths.out_dir)?;
    write_text(&config.paths.out_dir.join("summary.txt"), &text)?;
    print!("{text}");
    Ok(())
}
