//! Experiment execution: schedule construction, concurrent dispatch with
//! resume-on-restart, parsing, scoring, and aggregation.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::chat::{
    complete, shuffle_items, ChatBackend, ChatRequest, LiveBackend, ReplayBackend, RetryPolicy,
    WorkItem,
};
use crate::folds::{ByteHeuristic, InputLine};
use crate::parse::{
    parse_extraction, parse_single_verdict, parse_verdicts, ExtractionRecord, ParseReport,
    VerdictRecord,
};
use crate::prompt::{assemble_prompt, OutputContract, PromptSetting};
use crate::score::{
    aggregate, match_extractions, score_classification, AggregateReport, CellOutcome, CellScore,
    FoldScore, MatchCounts, ScoreTriple,
};

use super::config::{BackendSpec, ModelConfig, RunConfig};
use super::manifest::{
    completed_items, read_journal, schedule_digest, ItemStatus, RunManifest, StatusJournal,
};
use super::prepare::{prepare, ChunkLookupKey, Prepared};
use super::report::write_reports;
use super::RunError;

/// One (dataset, model, setting, temperature) result group. The
/// temperature is kept as its canonical decimal text so the key orders
/// and hashes cleanly.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GroupKey {
    pub dataset: String,
    pub model: String,
    pub setting: PromptSetting,
    pub temperature: String,
}

impl GroupKey {
    pub fn from_item(item: &WorkItem) -> Self {
        Self {
            dataset: item.chunk.dataset.clone(),
            model: item.model.clone(),
            setting: item.setting,
            temperature: format!("{}", item.temperature),
        }
    }

    pub fn as_path_key(&self) -> String {
        format!(
            "{}/{}/{}/t{}",
            sanitize(&self.dataset),
            sanitize(&self.model),
            self.setting.slug(),
            self.temperature.replace('.', "p")
        )
    }
}

impl std::fmt::Display for GroupKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} | {} | {} | t={}",
            self.dataset,
            self.model,
            self.setting.slug(),
            self.temperature
        )
    }
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub run_id: String,
    pub run_dir: PathBuf,
    #[serde(with = "group_map")]
    pub aggregates: BTreeMap<GroupKey, AggregateReport>,
    pub report_md: PathBuf,
    pub report_csv: PathBuf,
    pub executed_items: usize,
    pub skipped_items: usize,
    pub failed_items: usize,
}

/// JSON maps need string keys; the aggregates map serializes as a list of
/// (key, report) entries instead.
mod group_map {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(
        map: &BTreeMap<GroupKey, AggregateReport>,
        serializer: S,
    ) -> Result<S::Ok, S::Error> {
        let entries: Vec<(&GroupKey, &AggregateReport)> = map.iter().collect();
        serde::Serialize::serialize(&entries, serializer)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        deserializer: D,
    ) -> Result<BTreeMap<GroupKey, AggregateReport>, D::Error> {
        let entries: Vec<(GroupKey, AggregateReport)> =
            serde::Deserialize::deserialize(deserializer)?;
        Ok(entries.into_iter().collect())
    }
}

/// Persisted next to every raw response.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ExchangeMeta {
    model: String,
    temperature: f64,
    max_tokens: usize,
    prompt_tokens_est: usize,
    latency_ms: u64,
    attempt_count: u32,
    backend: String,
    timestamp: String,
}

struct ExecContext {
    config: RunConfig,
    prepared: Prepared,
    backends: BTreeMap<String, Arc<dyn ChatBackend>>,
    models: HashMap<String, ModelConfig>,
    retry: RetryPolicy,
    run_dir: PathBuf,
    journal: StatusJournal,
}

fn build_backends(
    config: &RunConfig,
    prepared: &Prepared,
) -> Result<BTreeMap<String, Arc<dyn ChatBackend>>, RunError> {
    let mut backends: BTreeMap<String, Arc<dyn ChatBackend>> = BTreeMap::new();
    match &config.backend {
        BackendSpec::Replay { corruption } => {
            corruption
                .validate()
                .map_err(|e| RunError::Prepare(format!("corruption params: {e}")))?;
            for (name, dataset) in &prepared.datasets {
                backends.insert(
                    name.clone(),
                    Arc::new(ReplayBackend::new(dataset.corpus.clone(), *corruption)),
                );
            }
        }
        BackendSpec::Live { http, .. } => {
            let live: Arc<dyn ChatBackend> = Arc::new(
                LiveBackend::from_env(http)
                    .map_err(|e| RunError::Prepare(format!("live backend: {e}")))?,
            );
            for name in prepared.datasets.keys() {
                backends.insert(name.clone(), Arc::clone(&live));
            }
        }
    }
    Ok(backends)
}

/// Builds the canonical-then-shuffled schedule over every prepared chunk.
fn build_items(config: &RunConfig, prepared: &Prepared) -> Vec<WorkItem> {
    let mut items = Vec::new();
    for run in 1..=config.runs {
        let fold_seed = config.fold_seed_for_run(run);
        for ds in &config.datasets {
            for setting in &config.settings {
                let chunk_keys: Vec<&ChunkLookupKey> = prepared
                    .chunks
                    .keys()
                    .filter(|k| {
                        k.fold_seed == fold_seed && k.dataset == ds.name && k.setting == *setting
                    })
                    .collect();
                for key in chunk_keys {
                    for model in &config.models {
                        for &temperature in &config.temperatures {
                            items.push(WorkItem {
                                run,
                                chunk: prepared.chunks[key].key.clone(),
                                model: model.name.clone(),
                                setting: *setting,
                                temperature,
                            });
                        }
                    }
                }
            }
        }
    }
    shuffle_items(items, config.seeds.schedule)
}

fn derive_run_id(config: &RunConfig, items: &[WorkItem]) -> String {
    config
        .run_id
        .clone()
        .unwrap_or_else(|| format!("run-{}", &schedule_digest(items)[..12]))
}

async fn execute_item(ctx: &ExecContext, item: &WorkItem) -> Result<(), String> {
    let item_id = item.item_id();
    let fold_seed = ctx.config.fold_seed_for_run(item.run);
    let lookup = ChunkLookupKey {
        fold_seed,
        dataset: item.chunk.dataset.clone(),
        setting: item.setting,
        fold: item.chunk.fold,
        seq: item.chunk.seq,
    };
    let chunk = ctx
        .prepared
        .chunks
        .get(&lookup)
        .ok_or_else(|| format!("no prepared chunk for {item_id}"))?;
    let dataset = ctx
        .prepared
        .datasets
        .get(&item.chunk.dataset)
        .ok_or_else(|| format!("unknown dataset {}", item.chunk.dataset))?;
    let plan = &dataset.fold_plans[&fold_seed];

    let template = if item.setting.is_masked() {
        &ctx.prepared.masked_template
    } else {
        &ctx.prepared.base_template
    };
    let dictionary = dataset.dictionary_for(
        item.setting,
        ctx.config.dictionary_scope,
        plan,
        item.chunk.fold,
        &ctx.config,
    );
    let prompt = assemble_prompt(
        item.setting,
        template,
        dictionary.as_ref(),
        &chunk.lines,
        &ByteHeuristic,
    )
    .map_err(|e| format!("assemble: {e}"))?;

    let model = ctx
        .models
        .get(&item.model)
        .ok_or_else(|| format!("unknown model {}", item.model))?;
    let limits = model.limits();
    let margin = (limits.context_window as f64 * ctx.config.budgets.safety_margin).ceil() as usize;
    let max_tokens = ctx
        .config
        .budgets
        .max_tokens
        .unwrap_or_else(|| {
            limits
                .context_window
                .saturating_sub(prompt.est_tokens + margin)
                .max(1)
        });

    let request = ChatRequest {
        model: item.model.clone(),
        temperature: item.temperature,
        max_tokens,
        prompt_text: prompt.text,
    };
    let backend = ctx
        .backends
        .get(&item.chunk.dataset)
        .ok_or_else(|| format!("no backend for dataset {}", item.chunk.dataset))?;
    let exchange = complete(request, backend.as_ref(), &limits, &ctx.retry, &ByteHeuristic)
        .await
        .map_err(|e| e.to_string())?;

    let raw_path = ctx.run_dir.join("raw").join(format!("{item_id}.txt"));
    std::fs::write(&raw_path, &exchange.response_text).map_err(|e| format!("write raw: {e}"))?;
    let meta = ExchangeMeta {
        model: exchange.request.model.clone(),
        temperature: exchange.request.temperature,
        max_tokens: exchange.request.max_tokens,
        prompt_tokens_est: prompt.est_tokens,
        latency_ms: exchange.latency_ms,
        attempt_count: exchange.attempt_count,
        backend: exchange.backend.clone(),
        timestamp: exchange.timestamp.to_rfc3339(),
    };
    std::fs::write(
        ctx.run_dir.join("raw").join(format!("{item_id}.meta.json")),
        serde_json::to_string_pretty(&meta).expect("meta serializes"),
    )
    .map_err(|e| format!("write meta: {e}"))?;

    let (ndrec, report) = parse_response(item.setting, &exchange.response_text, &chunk.lines);
    std::fs::write(
        ctx.run_dir.join("parsed").join(format!("{item_id}.ndrec")),
        ndrec,
    )
    .map_err(|e| format!("write parsed: {e}"))?;
    std::fs::write(
        ctx.run_dir
            .join("parsed")
            .join(format!("{item_id}.report.json")),
        serde_json::to_string_pretty(&report).expect("report serializes"),
    )
    .map_err(|e| format!("write parse report: {e}"))?;
    Ok(())
}

/// One line per record; extraction and verdict rows share the file shape
/// distinguished by their fields.
fn parse_response(
    setting: PromptSetting,
    response: &str,
    prompt_lines: &[InputLine],
) -> (String, ParseReport) {
    let mut out = String::new();
    let report = match setting.output_contract() {
        OutputContract::Extraction => {
            let (records, report) = parse_extraction(response);
            for record in &records {
                out.push_str(&serde_json::to_string(record).expect("record serializes"));
                out.push('\n');
            }
            report
        }
        OutputContract::Verdicts => {
            let (mut records, report) = parse_verdicts(response);
            resolve_variants(&mut records, prompt_lines);
            for record in &records {
                out.push_str(&serde_json::to_string(record).expect("record serializes"));
                out.push('\n');
            }
            report
        }
        OutputContract::SingleVerdict => {
            let (verdict, report) = parse_single_verdict(response);
            if let (Some(verdict), Some(line)) = (verdict, prompt_lines.first()) {
                let record = VerdictRecord {
                    sentence_id: line.sentence_id.clone(),
                    variant_index: line.variant_index,
                    verdict,
                };
                out.push_str(&serde_json::to_string(&record).expect("record serializes"));
                out.push('\n');
            }
            report
        }
    };
    (out, report)
}

/// Verdict rows come back keyed by sentence id only; the k-th row for a
/// sentence maps to the k-th prompt line with that sentence id.
fn resolve_variants(records: &mut [VerdictRecord], prompt_lines: &[InputLine]) {
    let mut queues: HashMap<&str, VecDeque<usize>> = HashMap::new();
    for line in prompt_lines {
        if let Some(variant) = line.variant_index {
            queues
                .entry(line.sentence_id.as_str())
                .or_default()
                .push_back(variant);
        }
    }
    for record in records.iter_mut() {
        record.variant_index = queues
            .get_mut(record.sentence_id.as_str())
            .and_then(|q| q.pop_front());
    }
}

fn read_parsed_extractions(path: &Path) -> Result<Vec<ExtractionRecord>, RunError> {
    let text = std::fs::read_to_string(path)?;
    let mut records = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        records.push(
            serde_json::from_str(line)
                .map_err(|e| RunError::Other(format!("parsed file {}: {e}", path.display())))?,
        );
    }
    Ok(records)
}

fn read_parsed_verdicts(path: &Path) -> Result<Vec<VerdictRecord>, RunError> {
    let text = std::fs::read_to_string(path)?;
    let mut records = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        records.push(
            serde_json::from_str(line)
                .map_err(|e| RunError::Other(format!("parsed file {}: {e}", path.display())))?,
        );
    }
    Ok(records)
}

/// What a config will execute, without executing it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunPlan {
    pub run_id: String,
    pub run_dir: PathBuf,
    pub total_items: usize,
    pub schedule_digest: String,
}

/// Validates and prepares `config` far enough to name the run directory
/// and count the schedule.
pub fn plan_run(config: &RunConfig) -> Result<RunPlan, RunError> {
    config.validate()?;
    let prepared = prepare(config)?;
    let items = build_items(config, &prepared);
    let run_id = derive_run_id(config, &items);
    Ok(RunPlan {
        run_dir: config.output_root.join(&run_id),
        run_id,
        total_items: items.len(),
        schedule_digest: schedule_digest(&items),
    })
}

/// Runs the full experiment for `config`: prepare, schedule, dispatch
/// (skipping items already journaled done), parse, score, aggregate, and
/// write the report files. Restartable: a second invocation over the same
/// run directory executes only the remaining items.
pub async fn run_experiment(config: RunConfig) -> Result<RunOutcome, RunError> {
    run_experiment_with_backends(config, None).await
}

/// [`run_experiment`] with the per-dataset backends supplied by the caller
/// instead of built from the config's backend spec.
pub async fn run_experiment_with_backends(
    config: RunConfig,
    backend_override: Option<BTreeMap<String, Arc<dyn ChatBackend>>>,
) -> Result<RunOutcome, RunError> {
    config.validate()?;
    let prepared = prepare(&config)?;
    let items = build_items(&config, &prepared);
    let run_id = derive_run_id(&config, &items);
    let run_dir = config.output_root.join(&run_id);
    std::fs::create_dir_all(run_dir.join("raw"))?;
    std::fs::create_dir_all(run_dir.join("parsed"))?;
    std::fs::create_dir_all(run_dir.join("scores"))?;

    match RunManifest::read(&run_dir)? {
        Some(existing) => {
            if existing.schedule_digest != schedule_digest(&items) {
                return Err(RunError::ManifestMismatch { run_dir });
            }
        }
        None => {
            RunManifest::new(run_id.clone(), config.clone(), &items).write(&run_dir)?;
        }
    }

    let backends = match backend_override {
        Some(backends) => backends,
        None => build_backends(&config, &prepared)?,
    };
    let retry = match &config.backend {
        BackendSpec::Live { retry, .. } => *retry,
        BackendSpec::Replay { .. } => RetryPolicy {
            max_attempts: 1,
            base_delay_ms: 0,
        },
    };
    let models: HashMap<String, ModelConfig> = config
        .models
        .iter()
        .map(|m| (m.name.clone(), m.clone()))
        .collect();

    let journal = StatusJournal::open_append(&run_dir)?;
    let done_before = completed_items(&read_journal(&run_dir)?);
    let pending: Vec<WorkItem> = items
        .iter()
        .filter(|i| !done_before.contains(&i.item_id()))
        .cloned()
        .collect();
    let skipped_items = items.len() - pending.len();
    let executed_items = pending.len();

    let ctx = Arc::new(ExecContext {
        config: config.clone(),
        prepared,
        backends,
        models,
        retry,
        run_dir: run_dir.clone(),
        journal,
    });

    let queue = Arc::new(Mutex::new(VecDeque::from(pending)));
    let worker_count = config.workers.clamp(1, executed_items.max(1));
    let mut workers = tokio::task::JoinSet::new();
    for _ in 0..worker_count {
        let ctx = Arc::clone(&ctx);
        let queue = Arc::clone(&queue);
        workers.spawn(async move {
            loop {
                let item = queue.lock().expect("queue lock").pop_front();
                let Some(item) = item else { break };
                let item_id = item.item_id();
                match execute_item(&ctx, &item).await {
                    Ok(()) => ctx
                        .journal
                        .record(&item_id, ItemStatus::Done, None)
                        .expect("journal write"),
                    Err(reason) => {
                        tracing::warn!(item = %item_id, %reason, "work item failed");
                        ctx.journal
                            .record(&item_id, ItemStatus::Failed, Some(reason))
                            .expect("journal write");
                    }
                }
            }
        });
    }
    while let Some(joined) = workers.join_next().await {
        joined.map_err(|e| RunError::Other(format!("worker panicked: {e}")))?;
    }

    let ctx = Arc::try_unwrap(ctx).map_err(|_| RunError::Other("context still shared".into()))?;
    let done_now = completed_items(&read_journal(&run_dir)?);
    let failed_items = items
        .iter()
        .filter(|i| !done_now.contains(&i.item_id()))
        .count();

    let aggregates = score_all(&ctx, &items, &done_now)?;
    let (report_md, report_csv) = write_reports(&run_dir, &ctx.config, &aggregates)?;

    Ok(RunOutcome {
        run_id,
        run_dir,
        aggregates,
        report_md,
        report_csv,
        executed_items,
        skipped_items,
        failed_items,
    })
}

/// Merges chunk outputs per fold, scores every (run, fold) cell, persists
/// the cells, and aggregates per group.
fn score_all(
    ctx: &ExecContext,
    items: &[WorkItem],
    done: &HashSet<String>,
) -> Result<BTreeMap<GroupKey, AggregateReport>, RunError> {
    // Group items by (group, run, fold) so chunk parts re-merge.
    let mut cells: BTreeMap<(GroupKey, u32, usize), Vec<&WorkItem>> = BTreeMap::new();
    for item in items {
        let key = (GroupKey::from_item(item), item.run, item.chunk.fold);
        cells.entry(key).or_default().push(item);
    }

    let mut grouped: BTreeMap<GroupKey, Vec<CellScore>> = BTreeMap::new();
    for ((group, run, fold), chunk_items) in cells {
        let outcome = score_cell(ctx, &group, run, fold, &chunk_items, done)?;
        let cell = CellScore { run, fold, outcome };

        let dir = ctx.run_dir.join("scores").join(group.as_path_key());
        std::fs::create_dir_all(&dir)?;
        std::fs::write(
            dir.join(format!("run{run:02}_fold{fold:02}.json")),
            serde_json::to_string_pretty(&cell).expect("cell serializes"),
        )?;

        grouped.entry(group).or_default().push(cell);
    }

    let mut aggregates = BTreeMap::new();
    for (group, cells) in grouped {
        aggregates.insert(group, aggregate(&cells));
    }
    std::fs::write(
        ctx.run_dir.join("aggregates.json"),
        serde_json::to_string_pretty(
            &aggregates
                .iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect::<BTreeMap<String, &AggregateReport>>(),
        )
        .expect("aggregates serialize"),
    )?;
    Ok(aggregates)
}

fn score_cell(
    ctx: &ExecContext,
    group: &GroupKey,
    run: u32,
    fold: usize,
    chunk_items: &[&WorkItem],
    done: &HashSet<String>,
) -> Result<CellOutcome, RunError> {
    if let Some(failed) = chunk_items.iter().find(|i| !done.contains(&i.item_id())) {
        return Ok(CellOutcome::Failed {
            reason: format!("chunk item {} not completed", failed.item_id()),
        });
    }
    let dataset = ctx
        .prepared
        .datasets
        .get(&group.dataset)
        .ok_or_else(|| RunError::Other(format!("unknown dataset {}", group.dataset)))?;
    let fold_seed = ctx.config.fold_seed_for_run(run);
    let plan = &dataset.fold_plans[&fold_seed];

    match group.setting.output_contract() {
        OutputContract::Extraction => {
            let mut predictions = Vec::new();
            for item in chunk_items {
                let path = ctx
                    .run_dir
                    .join("parsed")
                    .join(format!("{}.ndrec", item.item_id()));
                predictions.extend(read_parsed_extractions(&path)?);
            }
            let gold = dataset.fold_sentences(plan, fold);
            let counts = match_extractions(&predictions, &gold, &ctx.config.match_config);
            Ok(CellOutcome::Scored(FoldScore {
                counts,
                positive: ScoreTriple::from_counts(&counts),
                macro_avg: None,
            }))
        }
        OutputContract::Verdicts | OutputContract::SingleVerdict => {
            let mut verdicts = Vec::new();
            for item in chunk_items {
                let path = ctx
                    .run_dir
                    .join("parsed")
                    .join(format!("{}.ndrec", item.item_id()));
                verdicts.extend(read_parsed_verdicts(&path)?);
            }
            let gold = dataset.fold_gold_instances(plan, fold);
            let score = score_classification(&verdicts, &gold);
            let counts = MatchCounts {
                true_positive: score.counts.true_positive,
                false_positive: score.counts.false_positive,
                false_negative: score.counts.false_negative,
            };
            Ok(CellOutcome::Scored(FoldScore {
                counts,
                positive: score.positive,
                macro_avg: Some(score.macro_avg),
            }))
        }
    }
}
