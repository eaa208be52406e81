//! Protein-name normalization, dictionary construction, and PROTEIN masking.
//!
//! Normalization lowercases, strips whitespace and a configurable character
//! set (parentheses by default), and drops names that end up empty or
//! digits-only. Masking replaces a candidate pair's mentions with `PROTEIN1`
//! and `PROTEIN2` and every other mention with `PROTEIN`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{char_len, slice_chars, Corpus, LabeledPair, Sentence};

pub const MASK_PAIR_FIRST: &str = "PROTEIN1";
pub const MASK_PAIR_SECOND: &str = "PROTEIN2";
pub const MASK_OTHER: &str = "PROTEIN";

/// Characters removed by normalization besides whitespace. The default
/// keeps `~`, `-` and `*` intact and strips only parentheses, matching the
/// observed normalized dictionaries rather than a blanket punctuation rule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizeConfig {
    pub strip_chars: Vec<char>,
}

impl Default for NormalizeConfig {
    fn default() -> Self {
        Self {
            strip_chars: vec!['(', ')'],
        }
    }
}

/// Lowercases, removes whitespace and the configured strip-set, and
/// returns `None` when the result is empty or digits-only.
pub fn normalize_name(raw: &str, config: &NormalizeConfig) -> Option<String> {
    let mut out = String::with_capacity(raw.len());
    for ch in raw.chars() {
        if ch.is_whitespace() || config.strip_chars.contains(&ch) {
            continue;
        }
        out.extend(ch.to_lowercase());
    }
    if out.is_empty() || out.chars().all(|c| c.is_ascii_digit()) {
        None
    } else {
        Some(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DictionaryKind {
    Original,
    Normalized,
}

/// Character-length summary over a dictionary's names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DictionaryStats {
    pub unique_count: usize,
    pub avg_len: f64,
    pub max_len: usize,
    pub min_len: usize,
}

/// Deduplicated protein-name list in first-seen order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProteinDictionary {
    pub kind: DictionaryKind,
    pub names: Vec<String>,
}

impl ProteinDictionary {
    fn from_names(kind: DictionaryKind, candidates: impl IntoIterator<Item = String>) -> Self {
        let mut names = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for name in candidates {
            if seen.insert(name.clone()) {
                names.push(name);
            }
        }
        Self { kind, names }
    }

    pub fn stats(&self) -> DictionaryStats {
        let lens: Vec<usize> = self.names.iter().map(|n| char_len(n)).collect();
        let unique_count = lens.len();
        let total: usize = lens.iter().sum();
        DictionaryStats {
            unique_count,
            avg_len: if unique_count == 0 {
                0.0
            } else {
                total as f64 / unique_count as f64
            },
            max_len: lens.iter().copied().max().unwrap_or(0),
            min_len: lens.iter().copied().min().unwrap_or(0),
        }
    }

    /// One name per line, sorted lexicographically for stable diffing.
    pub fn export(&self) -> String {
        let mut sorted = self.names.clone();
        sorted.sort();
        let mut out = sorted.join("\n");
        if !out.is_empty() {
            out.push('\n');
        }
        out
    }
}

/// Builds the original (verbatim surfaces) and normalized dictionaries
/// over the whole corpus, both deduplicated in first-seen order.
pub fn build_dictionaries(
    corpus: &Corpus,
    config: &NormalizeConfig,
) -> (ProteinDictionary, ProteinDictionary) {
    let surfaces: Vec<String> = corpus
        .sentences()
        .flat_map(|s| s.entities.iter().map(|e| e.surface.clone()))
        .collect();
    let original = ProteinDictionary::from_names(DictionaryKind::Original, surfaces.clone());
    let normalized = ProteinDictionary::from_names(
        DictionaryKind::Normalized,
        surfaces.iter().filter_map(|s| normalize_name(s, config)),
    );
    (original, normalized)
}

/// One sentence rendered for a specific candidate pair: the pair's spans
/// replaced by `PROTEIN1`/`PROTEIN2`, every other entity span by `PROTEIN`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskedInstance {
    pub sentence_id: String,
    pub pair: LabeledPair,
    pub masked_text: String,
    /// Ordinal of the pair within its sentence's declared pair list.
    pub variant_index: usize,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MaskError {
    #[error("{sentence_id}: overlapping entity spans ({first} and {second})")]
    OverlappingSpans {
        sentence_id: String,
        first: String,
        second: String,
    },
    #[error("{sentence_id}: pair ({e1}, {e2}) not declared in sentence")]
    PairNotInSentence {
        sentence_id: String,
        e1: String,
        e2: String,
    },
}

fn replace_span(text: &str, start: usize, end: usize, replacement: &str) -> String {
    let head = slice_chars(text, 0, start).expect("span validated");
    let tail = slice_chars(text, end, char_len(text)).expect("span validated");
    format!("{head}{replacement}{tail}")
}

/// Masks `sentence` for `pair`. Replacement proceeds right-to-left by
/// offset so earlier spans stay valid while later ones are rewritten.
pub fn mask_sentence(sentence: &Sentence, pair: &LabeledPair) -> Result<MaskedInstance, MaskError> {
    let variant_index = sentence
        .pairs
        .iter()
        .position(|p| p == pair)
        .ok_or_else(|| MaskError::PairNotInSentence {
            sentence_id: sentence.sentence_id.clone(),
            e1: pair.e1.clone(),
            e2: pair.e2.clone(),
        })?;

    let mut spans: Vec<(&crate::corpus::EntityMention, &str)> = sentence
        .entities
        .iter()
        .map(|e| {
            let token = if e.id == pair.e1 {
                MASK_PAIR_FIRST
            } else if e.id == pair.e2 {
                MASK_PAIR_SECOND
            } else {
                MASK_OTHER
            };
            (e, token)
        })
        .collect();
    spans.sort_by_key(|(e, _)| std::cmp::Reverse(e.char_start));
    for window in spans.windows(2) {
        let (later, _) = window[0];
        let (earlier, _) = window[1];
        if earlier.char_end > later.char_start {
            return Err(MaskError::OverlappingSpans {
                sentence_id: sentence.sentence_id.clone(),
                first: earlier.id.clone(),
                second: later.id.clone(),
            });
        }
    }

    let mut masked_text = sentence.text.clone();
    for (entity, token) in spans {
        masked_text = replace_span(&masked_text, entity.char_start, entity.char_end, token);
    }

    Ok(MaskedInstance {
        sentence_id: sentence.sentence_id.clone(),
        pair: pair.clone(),
        masked_text,
        variant_index,
    })
}

/// One masked instance per labeled pair, in corpus order.
pub fn instances_for(corpus: &Corpus) -> Result<Vec<MaskedInstance>, MaskError> {
    let mut instances = Vec::new();
    for sentence in corpus.sentences() {
        for pair in &sentence.pairs {
            instances.push(mask_sentence(sentence, pair)?);
        }
    }
    Ok(instances)
}
