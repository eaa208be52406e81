//! Matching predictions against gold annotations and aggregating
//! precision/recall/F1 across folds and runs.
//!
//! The default matching rule compares normalized names as unordered pairs
//! within one sentence, deduplicates predictions, counts only gold
//! positives as TP, and ignores the interaction type. The rule is part of
//! [`MatchConfig`] and travels with every report.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus::Sentence;
use crate::parse::{ExtractionRecord, VerdictRecord};
use crate::preprocess::{normalize_name, NormalizeConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NameComparison {
    #[default]
    Normalized,
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairOrientation {
    #[default]
    Unordered,
    Ordered,
}

/// How predictions are matched to gold pairs; recorded in every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig {
    pub name_comparison: NameComparison,
    pub orientation: PairOrientation,
    pub dedupe_predictions: bool,
    pub normalize: NormalizeConfig,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            name_comparison: NameComparison::Normalized,
            orientation: PairOrientation::Unordered,
            dedupe_predictions: true,
            normalize: NormalizeConfig::default(),
        }
    }
}

impl MatchConfig {
    /// Comparison key for one name. Normalization falls back to the
    /// lowercased trimmed raw string when it would empty the name, so the
    /// key is total.
    pub fn name_key(&self, name: &str) -> String {
        match self.name_comparison {
            NameComparison::Exact => name.to_string(),
            NameComparison::Normalized => normalize_name(name, &self.normalize)
                .unwrap_or_else(|| name.trim().to_lowercase()),
        }
    }

    pub fn pair_key(&self, a: &str, b: &str) -> (String, String) {
        let (ka, kb) = (self.name_key(a), self.name_key(b));
        match self.orientation {
            PairOrientation::Ordered => (ka, kb),
            PairOrientation::Unordered => {
                if ka <= kb {
                    (ka, kb)
                } else {
                    (kb, ka)
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MatchCounts {
    pub true_positive: usize,
    pub false_positive: usize,
    pub false_negative: usize,
}

impl MatchCounts {
    pub fn add(&mut self, other: &MatchCounts) {
        self.true_positive += other.true_positive;
        self.false_positive += other.false_positive;
        self.false_negative += other.false_negative;
    }
}

/// Precision, recall and F1 with the 0/0 → 0 convention; F1 is the
/// harmonic mean and collapses to 0 when both components are 0.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoreTriple {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl ScoreTriple {
    pub fn from_counts(counts: &MatchCounts) -> Self {
        let precision = ratio(
            counts.true_positive,
            counts.true_positive + counts.false_positive,
        );
        let recall = ratio(
            counts.true_positive,
            counts.true_positive + counts.false_negative,
        );
        Self::from_pr(precision, recall)
    }

    pub fn from_pr(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            precision,
            recall,
            f1,
        }
    }

    pub fn mean(triples: &[ScoreTriple]) -> ScoreTriple {
        if triples.is_empty() {
            return ScoreTriple::default();
        }
        let n = triples.len() as f64;
        ScoreTriple {
            precision: triples.iter().map(|t| t.precision).sum::<f64>() / n,
            recall: triples.iter().map(|t| t.recall).sum::<f64>() / n,
            f1: triples.iter().map(|t| t.f1).sum::<f64>() / n,
        }
    }

    /// Sample standard deviation per component; zero for fewer than two
    /// observations.
    pub fn std_dev(triples: &[ScoreTriple]) -> ScoreTriple {
        if triples.len() < 2 {
            return ScoreTriple::default();
        }
        let mean = Self::mean(triples);
        let n = (triples.len() - 1) as f64;
        let var = |f: fn(&ScoreTriple) -> f64, m: f64| {
            (triples.iter().map(|t| (f(t) - m).powi(2)).sum::<f64>() / n).sqrt()
        };
        ScoreTriple {
            precision: var(|t| t.precision, mean.precision),
            recall: var(|t| t.recall, mean.recall),
            f1: var(|t| t.f1, mean.f1),
        }
    }
}

/// Matches extraction predictions against the gold positives of the given
/// sentences. Predictions for sentences outside the given scope count as
/// false positives; each gold positive matches at most once; the
/// interaction type is ignored.
pub fn match_extractions(
    predictions: &[ExtractionRecord],
    gold_sentences: &[&Sentence],
    config: &MatchConfig,
) -> MatchCounts {
    let in_scope: HashSet<&str> = gold_sentences
        .iter()
        .map(|s| s.sentence_id.as_str())
        .collect();
    let mut gold_remaining: HashMap<(String, (String, String)), usize> = HashMap::new();
    let mut gold_total = 0usize;
    for sentence in gold_sentences {
        for pair in sentence.pairs.iter().filter(|p| p.positive) {
            let (Some(e1), Some(e2)) = (sentence.entity(&pair.e1), sentence.entity(&pair.e2))
            else {
                continue;
            };
            let key = (
                sentence.sentence_id.clone(),
                config.pair_key(&e1.surface, &e2.surface),
            );
            *gold_remaining.entry(key).or_insert(0) += 1;
            gold_total += 1;
        }
    }

    let mut counts = MatchCounts::default();
    let mut seen: HashSet<(String, (String, String))> = HashSet::new();
    for pred in predictions {
        let key = (
            pred.sentence_id.clone(),
            config.pair_key(&pred.protein1, &pred.protein2),
        );
        if config.dedupe_predictions && !seen.insert(key.clone()) {
            continue;
        }
        if !in_scope.contains(pred.sentence_id.as_str()) {
            counts.false_positive += 1;
            continue;
        }
        match gold_remaining.get_mut(&key) {
            Some(remaining) if *remaining > 0 => {
                *remaining -= 1;
                counts.true_positive += 1;
            }
            _ => counts.false_positive += 1,
        }
    }
    counts.false_negative = gold_total - counts.true_positive;
    counts
}

/// One expected classification instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldInstance {
    pub sentence_id: String,
    pub variant_index: usize,
    pub positive: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub true_positive: usize,
    pub false_positive: usize,
    pub false_negative: usize,
    pub true_negative: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationScore {
    pub positive: ScoreTriple,
    /// Unweighted mean of per-class P, R and F1 over {TRUE, FALSE}.
    pub macro_avg: ScoreTriple,
    pub counts: ConfusionCounts,
    /// Verdicts that referenced no known instance, or repeats.
    pub excluded: usize,
}

/// Scores verdicts against the full instance roster. A missing verdict
/// counts as a FALSE prediction; a verdict for an unknown instance is
/// excluded and counted.
pub fn score_classification(
    verdicts: &[VerdictRecord],
    gold: &[GoldInstance],
) -> ClassificationScore {
    let mut expected: BTreeMap<(&str, usize), bool> = BTreeMap::new();
    for instance in gold {
        expected.insert(
            (instance.sentence_id.as_str(), instance.variant_index),
            instance.positive,
        );
    }
    let mut predicted: HashMap<(&str, usize), bool> = HashMap::new();
    let mut excluded = 0usize;
    for verdict in verdicts {
        let Some(variant) = verdict.variant_index else {
            excluded += 1;
            continue;
        };
        let key = (verdict.sentence_id.as_str(), variant);
        if !expected.contains_key(&key) || predicted.contains_key(&key) {
            excluded += 1;
            continue;
        }
        predicted.insert(key, verdict.verdict);
    }

    let mut counts = ConfusionCounts::default();
    for (key, &gold_positive) in &expected {
        let said_true = predicted.get(key).copied().unwrap_or(false);
        match (gold_positive, said_true) {
            (true, true) => counts.true_positive += 1,
            (false, true) => counts.false_positive += 1,
            (true, false) => counts.false_negative += 1,
            (false, false) => counts.true_negative += 1,
        }
    }

    let positive = ScoreTriple::from_counts(&MatchCounts {
        true_positive: counts.true_positive,
        false_positive: counts.false_positive,
        false_negative: counts.false_negative,
    });
    let negative = ScoreTriple::from_counts(&MatchCounts {
        true_positive: counts.true_negative,
        false_positive: counts.false_negative,
        false_negative: counts.false_positive,
    });
    let macro_avg = ScoreTriple {
        precision: (positive.precision + negative.precision) / 2.0,
        recall: (positive.recall + negative.recall) / 2.0,
        f1: (positive.f1 + negative.f1) / 2.0,
    };
    ClassificationScore {
        positive,
        macro_avg,
        counts,
        excluded,
    }
}

/// Score of one (run, fold) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldScore {
    pub counts: MatchCounts,
    pub positive: ScoreTriple,
    pub macro_avg: Option<ScoreTriple>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CellOutcome {
    Scored(FoldScore),
    Failed { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellScore {
    pub run: u32,
    pub fold: usize,
    #[serde(flatten)]
    pub outcome: CellOutcome,
}

/// Fold scores averaged into run means, then a grand mean over runs, with
/// sample standard deviation across runs and a pooled micro triple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub run_means: BTreeMap<u32, ScoreTriple>,
    pub grand_mean: ScoreTriple,
    pub std_dev: ScoreTriple,
    pub micro: ScoreTriple,
    pub macro_run_means: Option<BTreeMap<u32, ScoreTriple>>,
    pub macro_grand_mean: Option<ScoreTriple>,
    pub failed_cells: usize,
    pub usable: bool,
}

pub fn aggregate(cells: &[CellScore]) -> AggregateReport {
    let mut by_run: BTreeMap<u32, Vec<&FoldScore>> = BTreeMap::new();
    let mut failed_cells = 0usize;
    let mut pooled = MatchCounts::default();
    for cell in cells {
        match &cell.outcome {
            CellOutcome::Scored(score) => {
                by_run.entry(cell.run).or_default().push(score);
                pooled.add(&score.counts);
            }
            CellOutcome::Failed { .. } => failed_cells += 1,
        }
    }

    let mut run_means = BTreeMap::new();
    let mut macro_run_means = BTreeMap::new();
    let mut all_have_macro = !by_run.is_empty();
    for (run, folds) in &by_run {
        let triples: Vec<ScoreTriple> = folds.iter().map(|f| f.positive).collect();
        run_means.insert(*run, ScoreTriple::mean(&triples));
        let macros: Vec<ScoreTriple> = folds.iter().filter_map(|f| f.macro_avg).collect();
        if macros.len() == folds.len() {
            macro_run_means.insert(*run, ScoreTriple::mean(&macros));
        } else {
            all_have_macro = false;
        }
    }

    let means: Vec<ScoreTriple> = run_means.values().copied().collect();
    let grand_mean = ScoreTriple::mean(&means);
    let std_dev = ScoreTriple::std_dev(&means);
    let macro_means: Vec<ScoreTriple> = macro_run_means.values().copied().collect();
    let usable = !by_run.is_empty();

    AggregateReport {
        run_means,
        grand_mean,
        std_dev,
        micro: ScoreTriple::from_counts(&pooled),
        macro_grand_mean: all_have_macro.then(|| ScoreTriple::mean(&macro_means)),
        macro_run_means: all_have_macro.then_some(macro_run_means),
        failed_cells,
        usable,
    }
}
