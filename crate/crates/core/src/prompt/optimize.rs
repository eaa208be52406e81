//! Greedy section-wise prompt optimization.
//!
//! Phase 1 walks the seven sections in order; for each section every
//! variation is substituted into the current template and evaluated, the
//! argmax is kept (strict improvement only, so ties go to the lowest
//! variation index), and the winning template is carried forward. Phase 2
//! re-evaluates the seven carried templates — one per section, each with
//! that section's winner and everything before it already applied — and
//! returns the overall argmax.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{PromptTemplate, VariationLibrary, SECTION_COUNT};

pub type EvalError = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizePhase {
    SectionSweep,
    FinalReeval,
}

/// One evaluated candidate: which section was varied, which variation
/// (1-based), and the score the evaluator returned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub phase: OptimizePhase,
    pub section: usize,
    pub variation: usize,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeOutcome {
    pub template: PromptTemplate,
    /// 1-based winning variation index per section, phase-1 view.
    pub section_winners: [usize; SECTION_COUNT],
    pub audit: Vec<AuditEntry>,
}

#[derive(Debug, Error)]
pub enum OptimizeError {
    #[error("evaluator failed at section {section}, variation {variation}: {source}")]
    Evaluator {
        section: usize,
        variation: usize,
        #[source]
        source: EvalError,
    },
}

/// Runs the two-phase greedy optimization over `library`, scoring each
/// candidate template through `evaluator`. The audit trail records every
/// evaluation in order; its length is always ΣNᵢ + 7.
pub fn optimize_prompt<F>(
    library: &VariationLibrary,
    mut evaluator: F,
) -> Result<OptimizeOutcome, OptimizeError>
where
    F: FnMut(&PromptTemplate) -> Result<f64, EvalError>,
{
    let mut audit = Vec::new();
    let mut current = library.base_template();
    let mut section_winners = [1usize; SECTION_COUNT];
    let mut carried: Vec<(usize, usize, PromptTemplate)> = Vec::with_capacity(SECTION_COUNT);

    for section in 0..SECTION_COUNT {
        let mut best: Option<(usize, PromptTemplate)> = None;
        let mut best_score = f64::NEG_INFINITY;
        for (j, variation) in library.section(section).iter().enumerate() {
            let candidate = current.with_section(section, variation.text.clone());
            let score = evaluator(&candidate).map_err(|source| OptimizeError::Evaluator {
                section: section + 1,
                variation: j + 1,
                source,
            })?;
            audit.push(AuditEntry {
                phase: OptimizePhase::SectionSweep,
                section: section + 1,
                variation: j + 1,
                f1: score,
            });
            if score > best_score {
                best_score = score;
                best = Some((j + 1, candidate));
            }
        }
        let (winner, template) = best.expect("library sections are non-empty");
        section_winners[section] = winner;
        current = template;
        carried.push((section + 1, winner, current.clone()));
    }

    let mut final_template = None;
    let mut best_final = f64::NEG_INFINITY;
    for (section, winner, template) in &carried {
        let score = evaluator(template).map_err(|source| OptimizeError::Evaluator {
            section: *section,
            variation: *winner,
            source,
        })?;
        audit.push(AuditEntry {
            phase: OptimizePhase::FinalReeval,
            section: *section,
            variation: *winner,
            f1: score,
        });
        if score > best_final {
            best_final = score;
            final_template = Some(template.clone());
        }
    }

    Ok(OptimizeOutcome {
        template: final_template.expect("seven carried templates"),
        section_winners,
        audit,
    })
}
