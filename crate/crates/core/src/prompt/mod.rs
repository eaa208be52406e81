//! Seven-section prompt templates, the six experimental settings, and
//! prompt assembly.
//!
//! Sections, in order: primary instruction, protein/gene synonymy,
//! multi-pair handling, output format, output column specification,
//! end-of-process indication, and the input lead-in. Assembly joins the
//! sections, optionally splices a protein dictionary after the column
//! specification, and appends the input block as `sentence_id<TAB>text`
//! lines.

mod library;
mod optimize;

pub use library::{LibraryError, Variation, VariationLibrary};
pub use optimize::{optimize_prompt, AuditEntry, OptimizeError, OptimizeOutcome, OptimizePhase};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::folds::{InputLine, TokenEstimator};
use crate::preprocess::ProteinDictionary;

pub const SECTION_COUNT: usize = 7;

/// Lead-in for the spliced dictionary paragraph.
pub const DICTIONARY_LEAD_IN: &str = "Here are the protein names for your reference:";

/// Input lead-in used by the one-sentence-at-a-time setting.
pub const SINGLE_SENTENCE_LEAD_IN: &str = "Each input line contains a 'Sentence ID' and corresponding 'Sentence' that is needed to be analyzed for finding PPI. Here is the sentence that you need to process:";

/// Marker the multi-sentence lead-ins end with; used to find the input block.
const LEAD_IN_MARKER: &str = "you need to process:";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    sections: Vec<String>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("a template needs exactly {SECTION_COUNT} sections, got {0}")]
    WrongSectionCount(usize),
    #[error("section {0} is empty")]
    EmptySection(usize),
}

impl PromptTemplate {
    pub fn new(sections: Vec<String>) -> Result<Self, TemplateError> {
        if sections.len() != SECTION_COUNT {
            return Err(TemplateError::WrongSectionCount(sections.len()));
        }
        if let Some(idx) = sections.iter().position(|s| s.trim().is_empty()) {
            return Err(TemplateError::EmptySection(idx + 1));
        }
        Ok(Self { sections })
    }

    /// The bundled extraction template.
    pub fn foundational() -> Self {
        VariationLibrary::bundled_base().base_template()
    }

    /// The bundled masked-classification template.
    pub fn masked_default() -> Self {
        VariationLibrary::bundled_masked().base_template()
    }

    pub fn sections(&self) -> &[String] {
        &self.sections
    }

    pub fn section(&self, index: usize) -> &str {
        &self.sections[index]
    }

    /// Returns a copy with section `index` (0-based) replaced.
    pub fn with_section(&self, index: usize, text: impl Into<String>) -> Self {
        let mut sections = self.sections.clone();
        sections[index] = text.into();
        Self { sections }
    }
}

/// The six experimental prompt settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptSetting {
    /// Original sentences, extraction output.
    Base,
    /// Original sentences plus the original protein dictionary.
    WithDictionary,
    /// Original sentences plus the normalized protein dictionary.
    WithNormalizedDictionary,
    /// PROTEIN-masked instances, document folds as-is.
    Masked,
    /// PROTEIN-masked instances, duplicate-free partitions per fold.
    MaskedNoRepeat,
    /// PROTEIN-masked instances, one instance per prompt.
    MaskedSingle,
}

/// What the model is asked to emit for a setting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputContract {
    Extraction,
    Verdicts,
    SingleVerdict,
}

impl PromptSetting {
    pub const ALL: [PromptSetting; 6] = [
        PromptSetting::Base,
        PromptSetting::WithDictionary,
        PromptSetting::WithNormalizedDictionary,
        PromptSetting::Masked,
        PromptSetting::MaskedNoRepeat,
        PromptSetting::MaskedSingle,
    ];

    pub fn requires_dictionary(self) -> bool {
        matches!(
            self,
            PromptSetting::WithDictionary | PromptSetting::WithNormalizedDictionary
        )
    }

    pub fn is_masked(self) -> bool {
        matches!(
            self,
            PromptSetting::Masked | PromptSetting::MaskedNoRepeat | PromptSetting::MaskedSingle
        )
    }

    pub fn output_contract(self) -> OutputContract {
        match self {
            PromptSetting::Base
            | PromptSetting::WithDictionary
            | PromptSetting::WithNormalizedDictionary => OutputContract::Extraction,
            PromptSetting::Masked | PromptSetting::MaskedNoRepeat => OutputContract::Verdicts,
            PromptSetting::MaskedSingle => OutputContract::SingleVerdict,
        }
    }

    /// Report row label.
    pub fn label(self) -> &'static str {
        match self {
            PromptSetting::Base => "base prompt",
            PromptSetting::WithDictionary => "with protein dictionary",
            PromptSetting::WithNormalizedDictionary => "with normalized protein dictionary",
            PromptSetting::Masked => "PROTEIN masking",
            PromptSetting::MaskedNoRepeat => "PROTEIN masking, no repeated sentence",
            PromptSetting::MaskedSingle => "PROTEIN masking, one sentence at a time",
        }
    }

    /// Stable identifier used in file names and config values.
    pub fn slug(self) -> &'static str {
        match self {
            PromptSetting::Base => "base",
            PromptSetting::WithDictionary => "with_dictionary",
            PromptSetting::WithNormalizedDictionary => "with_normalized_dictionary",
            PromptSetting::Masked => "masked",
            PromptSetting::MaskedNoRepeat => "masked_no_repeat",
            PromptSetting::MaskedSingle => "masked_single",
        }
    }
}

impl std::fmt::Display for PromptSetting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.slug())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssembledPrompt {
    pub setting: PromptSetting,
    pub text: String,
    pub sentence_ids: Vec<String>,
    pub est_tokens: usize,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AssembleError {
    #[error("no input lines to assemble")]
    EmptyInput,
    #[error("setting {0} requires a protein dictionary")]
    MissingDictionary(PromptSetting),
    #[error("setting {setting} expects {expected} input lines, got {got}")]
    WrongInputArity {
        setting: PromptSetting,
        expected: usize,
        got: usize,
    },
    #[error("setting {0} expects masked instances as input")]
    ExpectedMaskedInput(PromptSetting),
    #[error("setting {0} expects original sentences as input")]
    ExpectedSentenceInput(PromptSetting),
}

/// The prompt text before the input lines: sections in order, the
/// dictionary paragraph spliced after the column-specification section
/// when the setting calls for one. The single-sentence setting drops the
/// end-of-process section and swaps in the singular lead-in.
pub fn assemble_preamble(
    setting: PromptSetting,
    template: &PromptTemplate,
    dictionary: Option<&ProteinDictionary>,
) -> Result<String, AssembleError> {
    if setting.requires_dictionary() && dictionary.is_none() {
        return Err(AssembleError::MissingDictionary(setting));
    }
    let mut paragraphs: Vec<String> = Vec::with_capacity(SECTION_COUNT + 1);
    for (idx, section) in template.sections().iter().enumerate() {
        match idx {
            5 if setting == PromptSetting::MaskedSingle => continue,
            6 if setting == PromptSetting::MaskedSingle => {
                paragraphs.push(SINGLE_SENTENCE_LEAD_IN.to_string())
            }
            _ => paragraphs.push(section.clone()),
        }
        if idx == 4 && setting.requires_dictionary() {
            let dict = dictionary.expect("checked above");
            paragraphs.push(format!("{DICTIONARY_LEAD_IN} {}", dict.names.join(", ")));
        }
    }
    Ok(paragraphs.join("\n\n"))
}

/// Concatenates the preamble for `setting` and appends the input block,
/// one `sentence_id<TAB>text` line per input.
pub fn assemble_prompt(
    setting: PromptSetting,
    template: &PromptTemplate,
    dictionary: Option<&ProteinDictionary>,
    lines: &[InputLine],
    estimator: &dyn TokenEstimator,
) -> Result<AssembledPrompt, AssembleError> {
    if lines.is_empty() {
        return Err(AssembleError::EmptyInput);
    }
    if setting == PromptSetting::MaskedSingle && lines.len() != 1 {
        return Err(AssembleError::WrongInputArity {
            setting,
            expected: 1,
            got: lines.len(),
        });
    }
    if setting.is_masked() {
        if lines.iter().any(|l| l.variant_index.is_none()) {
            return Err(AssembleError::ExpectedMaskedInput(setting));
        }
    } else if lines.iter().any(|l| l.variant_index.is_some()) {
        return Err(AssembleError::ExpectedSentenceInput(setting));
    }

    let mut text = assemble_preamble(setting, template, dictionary)?;
    text.push('\n');
    for line in lines {
        text.push_str(&line.rendered());
        text.push('\n');
    }

    let sentence_ids = lines.iter().map(|l| l.sentence_id.clone()).collect();
    let est_tokens = estimator.estimate(&text);
    Ok(AssembledPrompt {
        setting,
        text,
        sentence_ids,
        est_tokens,
    })
}

/// Recovers the input block of an assembled prompt: every
/// `sentence_id<TAB>text` line after the lead-in. Inverse of the input
/// part of [`assemble_prompt`].
pub fn parse_input_block(prompt_text: &str) -> Option<Vec<InputLine>> {
    let lead_in_end = prompt_text.rfind(LEAD_IN_MARKER)? + LEAD_IN_MARKER.len();
    let block = &prompt_text[lead_in_end..];
    let mut lines = Vec::new();
    for raw in block.lines() {
        if raw.trim().is_empty() {
            continue;
        }
        let (sid, text) = raw.split_once('\t')?;
        lines.push(InputLine {
            sentence_id: sid.to_string(),
            text: text.to_string(),
            variant_index: None,
        });
    }
    Some(lines)
}

/// True when the prompt asks for the two-column verdict output.
pub fn prompt_wants_verdicts(prompt_text: &str) -> bool {
    prompt_text.contains("'Sentence ID' and 'PPI'")
}

/// True when the prompt carries the single-sentence lead-in.
pub fn prompt_is_single_sentence(prompt_text: &str) -> bool {
    prompt_text.contains("Here is the sentence that you need to process:")
}
