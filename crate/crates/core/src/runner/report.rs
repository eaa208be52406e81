//! Report emission: per-dataset markdown and CSV tables shaped as
//! model/setting rows with Precision/Recall/F1 percentage columns, best
//! value per column flagged, plus the matching-rule provenance block.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::score::AggregateReport;

use super::config::{BackendSpec, RunConfig};
use super::engine::GroupKey;
use super::RunError;

/// Renders a stored fraction as a two-decimal percentage, 0.86486 → "86.49%".
pub fn format_pct(value: f64) -> String {
    format!("{:.2}%", value * 100.0)
}

fn backend_line(config: &RunConfig) -> String {
    match &config.backend {
        BackendSpec::Replay { corruption } => format!(
            "replay (p_drop={}, p_spur={}, p_malformed={}, p_flip={}, seed={})",
            corruption.p_drop,
            corruption.p_spur,
            corruption.p_malformed,
            corruption.p_flip,
            corruption.seed
        ),
        BackendSpec::Live { http, .. } => format!("live ({})", http.base_url),
    }
}

struct Row<'a> {
    key: &'a GroupKey,
    report: &'a AggregateReport,
}

fn bold_if(text: String, flag: bool) -> String {
    if flag {
        format!("**{text}**")
    } else {
        text
    }
}

fn dataset_table(rows: &[Row<'_>], show_temperature: bool) -> String {
    let has_macro = rows.iter().any(|r| r.report.macro_grand_mean.is_some());
    let mut out = String::new();
    out.push_str("| Model | Setting |");
    if show_temperature {
        out.push_str(" Temperature |");
    }
    out.push_str(" Precision | Recall | F1-Score |");
    if has_macro {
        out.push_str(" Macro Precision | Macro Recall | Macro F1 Score |");
    }
    out.push('\n');
    let columns = 5
        + usize::from(show_temperature)
        + if has_macro { 3 } else { 0 };
    out.push_str(&format!("|{}\n", "---|".repeat(columns)));

    let eps = 1e-12;
    let best = |f: &dyn Fn(&Row<'_>) -> Option<f64>| {
        rows.iter()
            .filter_map(|r| f(r))
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let best_p = best(&|r| Some(r.report.grand_mean.precision));
    let best_r = best(&|r| Some(r.report.grand_mean.recall));
    let best_f = best(&|r| Some(r.report.grand_mean.f1));
    let best_mp = best(&|r| r.report.macro_grand_mean.map(|m| m.precision));
    let best_mr = best(&|r| r.report.macro_grand_mean.map(|m| m.recall));
    let best_mf = best(&|r| r.report.macro_grand_mean.map(|m| m.f1));

    for row in rows {
        let mean = row.report.grand_mean;
        out.push_str(&format!("| {} | {} |", row.key.model, row.key.setting.label()));
        if show_temperature {
            out.push_str(&format!(" {} |", row.key.temperature));
        }
        out.push_str(&format!(
            " {} | {} | {} |",
            bold_if(format_pct(mean.precision), (mean.precision - best_p).abs() < eps),
            bold_if(format_pct(mean.recall), (mean.recall - best_r).abs() < eps),
            bold_if(format_pct(mean.f1), (mean.f1 - best_f).abs() < eps),
        ));
        if has_macro {
            match row.report.macro_grand_mean {
                Some(m) => out.push_str(&format!(
                    " {} | {} | {} |",
                    bold_if(format_pct(m.precision), (m.precision - best_mp).abs() < eps),
                    bold_if(format_pct(m.recall), (m.recall - best_mr).abs() < eps),
                    bold_if(format_pct(m.f1), (m.f1 - best_mf).abs() < eps),
                )),
                None => out.push_str(" — | — | — |"),
            }
        }
        out.push('\n');
    }
    out
}

pub fn render_markdown(
    config: &RunConfig,
    aggregates: &BTreeMap<GroupKey, AggregateReport>,
) -> String {
    let mut out = String::new();
    out.push_str("# PPI benchmark report\n\n");
    out.push_str("## Provenance\n\n");
    out.push_str(&format!(
        "- matching: name comparison = {:?}, orientation = {:?}, dedupe = {}\n",
        config.match_config.name_comparison,
        config.match_config.orientation,
        config.match_config.dedupe_predictions
    ));
    out.push_str(&format!("- backend: {}\n", backend_line(config)));
    out.push_str(&format!(
        "- protocol: k = {}, runs = {}, fold seed = {}, schedule seed = {}\n",
        config.k, config.runs, config.seeds.fold, config.seeds.schedule
    ));
    out.push_str(&format!(
        "- scores: grand mean over {} run(s) of per-fold means; micro and σ in aggregates.json\n",
        config.runs
    ));

    let mut by_dataset: BTreeMap<&str, Vec<Row<'_>>> = BTreeMap::new();
    for (key, report) in aggregates {
        by_dataset
            .entry(key.dataset.as_str())
            .or_default()
            .push(Row { key, report });
    }
    let show_temperature = config.temperatures.len() > 1;
    for (dataset, rows) in by_dataset {
        out.push_str(&format!("\n## Dataset: {dataset}\n\n"));
        out.push_str(&dataset_table(&rows, show_temperature));
    }
    out
}

pub fn render_csv(aggregates: &BTreeMap<GroupKey, AggregateReport>) -> String {
    let mut out = String::from(
        "dataset,model,setting,temperature,precision,recall,f1,macro_precision,macro_recall,macro_f1,failed_cells\n",
    );
    for (key, report) in aggregates {
        let mean = report.grand_mean;
        let macro_cols = match report.macro_grand_mean {
            Some(m) => format!("{:.4},{:.4},{:.4}", m.precision, m.recall, m.f1),
            None => ",,".to_string(),
        };
        out.push_str(&format!(
            "{},{},{},{},{:.4},{:.4},{:.4},{},{}\n",
            key.dataset,
            key.model,
            key.setting.slug(),
            key.temperature,
            mean.precision,
            mean.recall,
            mean.f1,
            macro_cols,
            report.failed_cells
        ));
    }
    out
}

pub fn write_reports(
    run_dir: &Path,
    config: &RunConfig,
    aggregates: &BTreeMap<GroupKey, AggregateReport>,
) -> Result<(PathBuf, PathBuf), RunError> {
    let md_path = run_dir.join("report.md");
    let csv_path = run_dir.join("report.csv");
    std::fs::write(&md_path, render_markdown(config, aggregates))?;
    std::fs::write(&csv_path, render_csv(aggregates))?;
    Ok((md_path, csv_path))
}
