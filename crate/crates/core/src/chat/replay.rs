//! Deterministic gold-replay backend with parameterized corruption.
//!
//! Responses are a pure function of (gold corpus, prompt input lines,
//! output contract, corruption params). Every random decision draws from
//! its own RNG stream keyed by `(seed, purpose, sentence_id, ordinal)`
//! via sha256 into a ChaCha8 seed, so decisions are independent of
//! evaluation order and reproducible by an outside oracle. Ordinals are
//! the pair's index within its sentence's declared pair list.

use std::collections::HashMap;

use async_trait::async_trait;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{BackendError, ChatBackend, ChatRequest};
use crate::corpus::Corpus;
use crate::preprocess::{build_dictionaries, mask_sentence, NormalizeConfig};
use crate::prompt::{parse_input_block, prompt_is_single_sentence, prompt_wants_verdicts, OutputContract};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorruptionParams {
    /// Probability a gold positive pair is omitted from the output.
    pub p_drop: f64,
    /// Probability a spurious pair is injected, per sentence.
    pub p_spur: f64,
    /// Probability a record row is emitted malformed.
    pub p_malformed: f64,
    /// Probability a classification verdict is flipped.
    pub p_flip: f64,
    pub seed: u64,
}

impl Default for CorruptionParams {
    fn default() -> Self {
        Self {
            p_drop: 0.0,
            p_spur: 0.0,
            p_malformed: 0.0,
            p_flip: 0.0,
            seed: 0,
        }
    }
}

impl CorruptionParams {
    pub fn validate(&self) -> Result<(), String> {
        for (name, p) in [
            ("p_drop", self.p_drop),
            ("p_spur", self.p_spur),
            ("p_malformed", self.p_malformed),
            ("p_flip", self.p_flip),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("{name} = {p} outside [0, 1]"));
            }
        }
        Ok(())
    }
}

/// RNG stream for one decision, keyed so re-runs and independent oracles
/// derive the identical stream.
pub fn decision_rng(seed: u64, purpose: &str, sentence_id: &str, ordinal: u64) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update([0u8]);
    hasher.update(purpose.as_bytes());
    hasher.update([0u8]);
    hasher.update(sentence_id.as_bytes());
    hasher.update([0u8]);
    hasher.update(ordinal.to_le_bytes());
    ChaCha8Rng::from_seed(hasher.finalize().into())
}

fn hit(seed: u64, purpose: &str, sentence_id: &str, ordinal: u64, p: f64) -> bool {
    p > 0.0 && decision_rng(seed, purpose, sentence_id, ordinal).gen::<f64>() < p
}

/// One prompt input line as the replay sees it; `variant_index` is the
/// pair ordinal for masked lines, `None` for extraction prompts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayLine {
    pub sentence_id: String,
    pub variant_index: Option<usize>,
}

fn mangle_row(row: &str) -> String {
    row.replace(',', " ")
}

const INTERACTION_LABEL: &str = "interacts with";

/// Produces the synthetic response for one prompt.
///
/// Extraction contracts emit one `sentence_id,protein1,protein2,interacts
/// with` row per surviving gold positive pair plus optional spurious rows
/// drawn from `dictionary`, closed by the `Done` sentinel. Verdict
/// contracts emit `sentence_id,TRUE|FALSE` per line with flips applied;
/// the single-sentence contract emits the bare token.
pub fn gold_replay(
    lines: &[ReplayLine],
    gold: &Corpus,
    contract: OutputContract,
    params: &CorruptionParams,
    dictionary: &[String],
) -> Result<String, BackendError> {
    let mut out = String::new();
    match contract {
        OutputContract::Extraction => {
            for line in lines {
                let sentence = gold
                    .sentence(&line.sentence_id)
                    .ok_or_else(|| BackendError::UnknownSentence(line.sentence_id.clone()))?;
                for (ordinal, pair) in sentence.pairs.iter().enumerate() {
                    if !pair.positive {
                        continue;
                    }
                    if hit(params.seed, "drop", &sentence.sentence_id, ordinal as u64, params.p_drop) {
                        continue;
                    }
                    let (Some(e1), Some(e2)) =
                        (sentence.entity(&pair.e1), sentence.entity(&pair.e2))
                    else {
                        return Err(BackendError::Fatal(format!(
                            "gold pair references missing entity in {}",
                            sentence.sentence_id
                        )));
                    };
                    let row = format!(
                        "{},{},{},{INTERACTION_LABEL}",
                        sentence.sentence_id,
                        crate::parse::quote_field(&e1.surface),
                        crate::parse::quote_field(&e2.surface)
                    );
                    let row = if hit(params.seed, "mal", &sentence.sentence_id, ordinal as u64, params.p_malformed) {
                        mangle_row(&row)
                    } else {
                        row
                    };
                    out.push_str(&row);
                    out.push('\n');
                }
                if dictionary.len() >= 2
                    && hit(params.seed, "spur", &sentence.sentence_id, 0, params.p_spur)
                {
                    let mut rng = decision_rng(params.seed, "spurname", &sentence.sentence_id, 0);
                    let a = rng.gen_range(0..dictionary.len());
                    let mut b = rng.gen_range(0..dictionary.len() - 1);
                    if b >= a {
                        b += 1;
                    }
                    out.push_str(&format!(
                        "{},{},{},{INTERACTION_LABEL}\n",
                        sentence.sentence_id,
                        crate::parse::quote_field(&dictionary[a]),
                        crate::parse::quote_field(&dictionary[b])
                    ));
                }
            }
            out.push_str("Done\n");
        }
        OutputContract::Verdicts | OutputContract::SingleVerdict => {
            for line in lines {
                let sentence = gold
                    .sentence(&line.sentence_id)
                    .ok_or_else(|| BackendError::UnknownSentence(line.sentence_id.clone()))?;
                let variant = line.variant_index.ok_or_else(|| {
                    BackendError::Fatal(format!(
                        "verdict replay needs a variant index for {}",
                        line.sentence_id
                    ))
                })?;
                let pair = sentence.pairs.get(variant).ok_or_else(|| {
                    BackendError::UnknownSentence(format!(
                        "{} variant {variant}",
                        line.sentence_id
                    ))
                })?;
                let flipped = hit(params.seed, "flip", &sentence.sentence_id, variant as u64, params.p_flip);
                let verdict = pair.positive != flipped;
                let malformed = hit(params.seed, "mal", &sentence.sentence_id, variant as u64, params.p_malformed);
                match contract {
                    OutputContract::SingleVerdict => {
                        if malformed {
                            out.push_str("indeterminate\n");
                        } else {
                            out.push_str(if verdict { "TRUE\n" } else { "FALSE\n" });
                        }
                    }
                    _ => {
                        if malformed {
                            out.push_str(&format!("{},maybe\n", sentence.sentence_id));
                        } else {
                            out.push_str(&format!(
                                "{},{}\n",
                                sentence.sentence_id,
                                if verdict { "TRUE" } else { "FALSE" }
                            ));
                        }
                    }
                }
            }
            if contract == OutputContract::Verdicts {
                out.push_str("Done\n");
            }
        }
    }
    Ok(out)
}

/// Backend that answers prompts from gold annotations. The prompt's input
/// block is parsed back out; masked lines resolve to their pair ordinal by
/// matching the masked text against regenerated instances.
pub struct ReplayBackend {
    gold: Corpus,
    params: CorruptionParams,
    dictionary: Vec<String>,
    masked_texts: HashMap<String, Vec<String>>,
}

impl ReplayBackend {
    pub fn new(gold: Corpus, params: CorruptionParams) -> Self {
        let (original, _) = build_dictionaries(&gold, &NormalizeConfig::default());
        let mut masked_texts = HashMap::new();
        for sentence in gold.sentences() {
            let texts: Vec<String> = sentence
                .pairs
                .iter()
                .filter_map(|p| mask_sentence(sentence, p).ok())
                .map(|m| m.masked_text)
                .collect();
            if texts.len() == sentence.pairs.len() {
                masked_texts.insert(sentence.sentence_id.clone(), texts);
            }
        }
        Self {
            gold,
            params,
            dictionary: original.names,
            masked_texts,
        }
    }

    pub fn params(&self) -> &CorruptionParams {
        &self.params
    }

    fn resolve_variant(&self, sentence_id: &str, masked_text: &str) -> Result<usize, BackendError> {
        self.masked_texts
            .get(sentence_id)
            .and_then(|texts| texts.iter().position(|t| t == masked_text))
            .ok_or_else(|| {
                BackendError::Fatal(format!(
                    "masked line for {sentence_id} matches no known variant"
                ))
            })
    }
}

#[async_trait]
impl ChatBackend for ReplayBackend {
    fn tag(&self) -> &str {
        "replay"
    }

    async fn send(&self, request: &ChatRequest) -> Result<String, BackendError> {
        let inputs = parse_input_block(&request.prompt_text)
            .ok_or_else(|| BackendError::Fatal("prompt has no input block".into()))?;
        let verdict_mode =
            prompt_wants_verdicts(&request.prompt_text) || prompt_is_single_sentence(&request.prompt_text);
        let mut lines = Vec::with_capacity(inputs.len());
        for input in &inputs {
            let variant_index = if verdict_mode {
                Some(self.resolve_variant(&input.sentence_id, &input.text)?)
            } else {
                None
            };
            lines.push(ReplayLine {
                sentence_id: input.sentence_id.clone(),
                variant_index,
            });
        }
        let contract = if prompt_is_single_sentence(&request.prompt_text) {
            OutputContract::SingleVerdict
        } else if verdict_mode {
            OutputContract::Verdicts
        } else {
            OutputContract::Extraction
        };
        gold_replay(&lines, &self.gold, contract, &self.params, &self.dictionary)
    }
}
