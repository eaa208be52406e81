//! Scoring of externally produced prediction files (e.g. fine-tuned
//! masked-LM outputs) under the identical fold/aggregation protocol.
//!
//! Predictions arrive as line-delimited JSON records. Verdict records:
//! `{"sentence_id": ..., "variant_index": N, "verdict": true}`; extraction
//! records: `{"sentence_id": ..., "protein1": ..., "protein2": ...,
//! "interaction_type": ...}`. An optional `"run"` field groups records
//! into runs (default 1).

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::folds::FoldPlan;
use crate::parse::{ExtractionRecord, VerdictRecord};
use crate::preprocess::instances_for;
use crate::score::{
    aggregate, match_extractions, score_classification, AggregateReport, CellOutcome, CellScore,
    FoldScore, GoldInstance, MatchConfig, MatchCounts, ScoreTriple,
};

use super::RunError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExternalKind {
    Verdicts,
    Extraction,
}

#[derive(Debug, Deserialize)]
struct ExternalVerdictRow {
    sentence_id: String,
    variant_index: usize,
    verdict: bool,
    #[serde(default)]
    run: Option<u32>,
}

#[derive(Debug, Deserialize)]
struct ExternalExtractionRow {
    sentence_id: String,
    protein1: String,
    protein2: String,
    interaction_type: String,
    #[serde(default)]
    run: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalScoreOutcome {
    /// Always "external"; distinguishes these reports from internal runs.
    pub tag: String,
    pub kind: ExternalKind,
    pub aggregate: AggregateReport,
    pub cells: Vec<CellScore>,
    /// Keys that referenced nothing in the corpus, with reasons.
    pub excluded: Vec<String>,
}

/// Scores an external predictions file against `corpus` under `plan`.
/// Records keyed by unknown sentences are excluded and logged; every
/// (run, fold) cell is scored so missing predictions count against recall
/// exactly as they do for internal runs.
pub fn score_external(
    corpus: &Corpus,
    plan: &FoldPlan,
    kind: ExternalKind,
    match_config: &MatchConfig,
    predictions_text: &str,
) -> Result<ExternalScoreOutcome, RunError> {
    let sentence_doc: HashMap<&str, &str> = corpus
        .documents
        .iter()
        .flat_map(|d| {
            d.sentences
                .iter()
                .map(move |s| (s.sentence_id.as_str(), d.doc_id.as_str()))
        })
        .collect();
    let fold_of = |sid: &str| -> Option<usize> {
        sentence_doc.get(sid).and_then(|doc| plan.fold_of(doc))
    };

    let mut excluded = Vec::new();
    let mut cells = Vec::new();

    match kind {
        ExternalKind::Verdicts => {
            let mut rows: BTreeMap<(u32, usize), Vec<VerdictRecord>> = BTreeMap::new();
            let mut runs: Vec<u32> = vec![1];
            for (idx, line) in predictions_text
                .lines()
                .enumerate()
                .filter(|(_, l)| !l.trim().is_empty())
            {
                let row: ExternalVerdictRow = serde_json::from_str(line).map_err(|e| {
                    RunError::Other(format!("predictions line {}: {e}", idx + 1))
                })?;
                let run = row.run.unwrap_or(1);
                if !runs.contains(&run) {
                    runs.push(run);
                }
                let Some(fold) = fold_of(&row.sentence_id) else {
                    excluded.push(format!(
                        "line {}: unknown sentence {}",
                        idx + 1,
                        row.sentence_id
                    ));
                    continue;
                };
                rows.entry((run, fold)).or_default().push(VerdictRecord {
                    sentence_id: row.sentence_id,
                    variant_index: Some(row.variant_index),
                    verdict: row.verdict,
                });
            }
            runs.sort_unstable();

            let instances = instances_for(corpus)
                .map_err(|e| RunError::Other(format!("masking corpus: {e}")))?;
            let mut fold_gold: BTreeMap<usize, Vec<GoldInstance>> = BTreeMap::new();
            for instance in &instances {
                if let Some(fold) = fold_of(&instance.sentence_id) {
                    fold_gold.entry(fold).or_default().push(GoldInstance {
                        sentence_id: instance.sentence_id.clone(),
                        variant_index: instance.variant_index,
                        positive: instance.pair.positive,
                    });
                }
            }

            for &run in &runs {
                for fold in 0..plan.k {
                    let gold = fold_gold.get(&fold).cloned().unwrap_or_default();
                    let empty = Vec::new();
                    let verdicts = rows.get(&(run, fold)).unwrap_or(&empty);
                    let score = score_classification(verdicts, &gold);
                    if score.excluded > 0 {
                        excluded.push(format!(
                            "run {run} fold {fold}: {} verdict(s) matched no instance",
                            score.excluded
                        ));
                    }
                    cells.push(CellScore {
                        run,
                        fold,
                        outcome: CellOutcome::Scored(FoldScore {
                            counts: MatchCounts {
                                true_positive: score.counts.true_positive,
                                false_positive: score.counts.false_positive,
                                false_negative: score.counts.false_negative,
                            },
                            positive: score.positive,
                            macro_avg: Some(score.macro_avg),
                        }),
                    });
                }
            }
        }
        ExternalKind::Extraction => {
            let mut rows: BTreeMap<(u32, usize), Vec<ExtractionRecord>> = BTreeMap::new();
            let mut runs: Vec<u32> = vec![1];
            for (idx, line) in predictions_text
                .lines()
                .enumerate()
                .filter(|(_, l)| !l.trim().is_empty())
            {
                let row: ExternalExtractionRow = serde_json::from_str(line).map_err(|e| {
                    RunError::Other(format!("predictions line {}: {e}", idx + 1))
                })?;
                let run = row.run.unwrap_or(1);
                if !runs.contains(&run) {
                    runs.push(run);
                }
                let Some(fold) = fold_of(&row.sentence_id) else {
                    excluded.push(format!(
                        "line {}: unknown sentence {}",
                        idx + 1,
                        row.sentence_id
                    ));
                    continue;
                };
                rows.entry((run, fold)).or_default().push(ExtractionRecord {
                    sentence_id: row.sentence_id,
                    protein1: row.protein1,
                    protein2: row.protein2,
                    interaction_type: row.interaction_type,
                });
            }
            runs.sort_unstable();

            for &run in &runs {
                for fold in 0..plan.k {
                    let gold: Vec<&crate::corpus::Sentence> = corpus
                        .sentences()
                        .filter(|s| fold_of(&s.sentence_id) == Some(fold))
                        .collect();
                    let empty = Vec::new();
                    let preds = rows.get(&(run, fold)).unwrap_or(&empty);
                    let counts = match_extractions(preds, &gold, match_config);
                    cells.push(CellScore {
                        run,
                        fold,
                        outcome: CellOutcome::Scored(FoldScore {
                            counts,
                            positive: ScoreTriple::from_counts(&counts),
                            macro_avg: None,
                        }),
                    });
                }
            }
        }
    }

    Ok(ExternalScoreOutcome {
        tag: "external".to_string(),
        kind,
        aggregate: aggregate(&cells),
        cells,
        excluded,
    })
}
