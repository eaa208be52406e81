//! Experiment orchestration: configuration, manifest/journal persistence,
//! the execution engine, temperature sweeps, report emission, and scoring
//! of external prediction files.
//!
//! On-disk layout per run: `<output_root>/<run_id>/manifest.json`,
//! `status.ndjson`, `raw/<item>.txt` (+ `.meta.json`), `parsed/<item>.ndrec`
//! (+ `.report.json`), `scores/<group>/runNN_foldNN.json`,
//! `aggregates.json`, `report.md`, `report.csv`.

mod config;
mod engine;
mod external;
mod manifest;
mod prepare;
mod report;

pub use config::{
    BackendSpec, BudgetConfig, ConfigError, DatasetConfig, DictionaryScope, ModelConfig,
    RunConfig, Seeds, SweepConfig, DEFAULT_TEMPERATURE_GRID,
};
pub use engine::{
    plan_run, run_experiment, run_experiment_with_backends, GroupKey, RunOutcome, RunPlan,
};
pub use external::{score_external, ExternalKind, ExternalScoreOutcome};
pub use manifest::{
    completed_items, read_journal, schedule_digest, ItemStatus, RunManifest, StatusEntry,
    StatusJournal, JOURNAL_FILE, MANIFEST_FILE,
};
pub use prepare::{prepare, Prepared, PreparedDataset};
pub use report::{format_pct, render_csv, render_markdown, write_reports};

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::score::AggregateReport;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("preparation failed: {0}")]
    Prepare(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("run directory {} holds a different schedule (manifest digest mismatch)", .run_dir.display())]
    ManifestMismatch { run_dir: PathBuf },
    #[error("{0}")]
    Other(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub per_temperature: Vec<(String, RunOutcome)>,
    pub table_md: PathBuf,
    pub table_csv: PathBuf,
}

/// Runs one full evaluation per grid temperature and emits a
/// score-vs-temperature table. The grid is validated against both the
/// model ranges and the sweep cap before anything executes.
pub async fn sweep_temperature(
    config: RunConfig,
    grid: &[f64],
) -> Result<SweepOutcome, RunError> {
    config.validate()?;
    config.validate_sweep_grid(grid)?;

    let base_id = config
        .run_id
        .clone()
        .unwrap_or_else(|| "sweep".to_string());
    let mut per_temperature = Vec::new();
    for &t in grid {
        let mut sub = config.clone();
        sub.temperatures = vec![t];
        sub.run_id = Some(format!("{base_id}_t{}", format!("{t}").replace('.', "p")));
        let outcome = run_experiment(sub).await?;
        per_temperature.push((format!("{t}"), outcome));
    }

    // Long-format table: one row per (group, temperature).
    let mut csv = String::from("dataset,model,setting,temperature,precision,recall,f1\n");
    let mut md = String::from("# Temperature sweep\n\n");
    md.push_str("| Dataset | Model | Setting | Temperature | Precision | Recall | F1-Score |\n");
    md.push_str("|---|---|---|---|---|---|---|\n");
    for (temp, outcome) in &per_temperature {
        for (key, aggregate) in &outcome.aggregates {
            let mean = aggregate.grand_mean;
            csv.push_str(&format!(
                "{},{},{},{},{:.4},{:.4},{:.4}\n",
                key.dataset,
                key.model,
                key.setting.slug(),
                temp,
                mean.precision,
                mean.recall,
                mean.f1
            ));
            md.push_str(&format!(
                "| {} | {} | {} | {} | {} | {} | {} |\n",
                key.dataset,
                key.model,
                key.setting.label(),
                temp,
                format_pct(mean.precision),
                format_pct(mean.recall),
                format_pct(mean.f1)
            ));
        }
    }
    let table_md = config.output_root.join(format!("{base_id}_sweep.md"));
    let table_csv = config.output_root.join(format!("{base_id}_sweep.csv"));
    std::fs::create_dir_all(&config.output_root)?;
    std::fs::write(&table_md, md)?;
    std::fs::write(&table_csv, csv)?;

    Ok(SweepOutcome {
        per_temperature,
        table_md,
        table_csv,
    })
}

/// Rebuilds `report.md`/`report.csv` from a run directory's stored
/// aggregates without re-running anything.
pub fn reemit_report(run_dir: &std::path::Path) -> Result<(PathBuf, PathBuf), RunError> {
    let manifest = RunManifest::read(run_dir)?
        .ok_or_else(|| RunError::Other(format!("no manifest under {}", run_dir.display())))?;
    let text = std::fs::read_to_string(run_dir.join("aggregates.json"))?;
    let by_name: BTreeMap<String, AggregateReport> = serde_json::from_str(&text)
        .map_err(|e| RunError::Other(format!("aggregates.json: {e}")))?;
    let mut aggregates = BTreeMap::new();
    for (name, report) in by_name {
        let key = parse_group_key(&name)
            .ok_or_else(|| RunError::Other(format!("bad group key {name:?}")))?;
        aggregates.insert(key, report);
    }
    write_reports(run_dir, &manifest.config, &aggregates)
}

fn parse_group_key(text: &str) -> Option<GroupKey> {
    // Mirrors GroupKey's Display: "dataset | model | setting | t=temp".
    let mut parts = text.split(" | ");
    let dataset = parts.next()?.to_string();
    let model = parts.next()?.to_string();
    let setting_slug = parts.next()?;
    let temperature = parts.next()?.strip_prefix("t=")?.to_string();
    let setting = crate::prompt::PromptSetting::ALL
        .into_iter()
        .find(|s| s.slug() == setting_slug)?;
    Some(GroupKey {
        dataset,
        model,
        setting,
        temperature,
    })
}
