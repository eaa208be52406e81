//! Wire types for the HTTP service. The service and its client share
//! these so the surface stays in one place.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::chat::CorruptionParams;
use crate::corpus::{CorpusStats, Violation};
use crate::preprocess::{DictionaryKind, DictionaryStats};
use crate::prompt::AuditEntry;
use crate::runner::{ExternalKind, ExternalScoreOutcome, RunConfig, RunOutcome};
use crate::score::MatchConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub version: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

/// Corpus operations take the interchange text inline; corpora are small
/// and this keeps the service stateless for them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusRequest {
    pub content: String,
    #[serde(default)]
    pub strict: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidateResponse {
    pub ok: bool,
    pub violations: Vec<Violation>,
    pub warnings: Vec<String>,
    pub stats: Option<CorpusStats>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DictionariesRequest {
    pub content: String,
    /// Characters stripped by normalization besides whitespace; defaults
    /// to parentheses.
    #[serde(default)]
    pub strip_chars: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DictionaryDto {
    pub kind: DictionaryKind,
    pub names: Vec<String>,
    pub stats: DictionaryStats,
    /// One name per line, sorted, as written by `dict` exports.
    pub export: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DictionariesResponse {
    pub original: DictionaryDto,
    pub normalized: DictionaryDto,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldsRequest {
    pub content: String,
    pub k: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldsResponse {
    pub k: usize,
    pub assignment: Vec<(String, usize)>,
    /// `fold_index, doc_id` rows.
    pub export: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EvaluatorSpec {
    /// Fixed score per (section, variation); shape must match the library.
    Table { scores: Vec<Vec<f64>> },
    /// Score every candidate by running the replay pipeline over a corpus.
    Replay {
        corpus: String,
        #[serde(default)]
        corruption: CorruptionParams,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizeRequest {
    /// Variation library file text; absent means the bundled library.
    #[serde(default)]
    pub library: Option<String>,
    pub evaluator: EvaluatorSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizeResponse {
    pub sections: Vec<String>,
    pub section_winners: Vec<usize>,
    pub audit: Vec<AuditEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubmitRunRequest {
    pub config: RunConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubmitResponse {
    pub job_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JobStatusResponse {
    pub job_id: String,
    pub state: JobState,
    pub error: Option<String>,
    /// Terminal/total item counts read from the run journal, when known.
    pub done_items: usize,
    pub failed_items: usize,
    pub total_items: usize,
    pub outcome: Option<RunOutcome>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRequest {
    pub config: RunConfig,
    /// Grid; absent means the default {0, 0.25, 0.5, 0.75, 1.0}.
    #[serde(default)]
    pub temperatures: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreExternalRequest {
    pub corpus: String,
    pub k: usize,
    #[serde(default)]
    pub fold_seed: u64,
    pub kind: ExternalKind,
    pub predictions: String,
    #[serde(default)]
    pub match_config: Option<MatchConfig>,
}

pub type ScoreExternalResponse = ExternalScoreOutcome;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportRequest {
    /// Run directory on the service host.
    pub run_dir: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportResponse {
    pub report_md: PathBuf,
    pub report_csv: PathBuf,
    pub markdown: String,
}
