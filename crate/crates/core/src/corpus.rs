//! Corpus data model and the line-delimited interchange format.
//!
//! A corpus is a list of documents; each document carries sentences with
//! entity mentions (character spans into the sentence text) and labeled
//! candidate pairs. Negative pairs are stored explicitly, not derived.
//! The interchange format is UTF-8, one document per line, each line a
//! single JSON object with normative field names (see [`load_corpus`]).

use std::collections::HashMap;
use std::fmt;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A protein/gene mention inside one sentence. Offsets are character
/// indices into the sentence text, start inclusive, end exclusive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityMention {
    pub id: String,
    pub surface: String,
    #[serde(rename = "start")]
    pub char_start: usize,
    #[serde(rename = "end")]
    pub char_end: usize,
}

/// An annotated candidate pair; `positive` marks an asserted interaction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledPair {
    pub e1: String,
    pub e2: String,
    pub positive: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub sentence_id: String,
    pub text: String,
    pub entities: Vec<EntityMention>,
    pub pairs: Vec<LabeledPair>,
}

impl Sentence {
    pub fn entity(&self, id: &str) -> Option<&EntityMention> {
        self.entities.iter().find(|e| e.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub sentences: Vec<Sentence>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Corpus {
    pub documents: Vec<Document>,
}

impl Corpus {
    pub fn sentences(&self) -> impl Iterator<Item = &Sentence> {
        self.documents.iter().flat_map(|d| d.sentences.iter())
    }

    pub fn sentence(&self, sentence_id: &str) -> Option<&Sentence> {
        self.sentences().find(|s| s.sentence_id == sentence_id)
    }

    pub fn doc_ids(&self) -> Vec<String> {
        self.documents.iter().map(|d| d.doc_id.clone()).collect()
    }

    /// Serializes back to the interchange format, one document per line.
    pub fn to_interchange(&self) -> String {
        let mut out = String::new();
        for doc in &self.documents {
            out.push_str(&serde_json::to_string(doc).expect("document serializes"));
            out.push('\n');
        }
        out
    }
}

/// Pair and sentence counts over a corpus. `ratio` is negatives over
/// positives and is absent when there are no positive pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_sentences: usize,
    pub n_positive: usize,
    pub n_negative: usize,
    pub n_total_pairs: usize,
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadMode {
    /// Unknown fields are errors.
    Strict,
    /// Unknown fields are ignored and reported as warnings.
    #[default]
    Lenient,
}

#[derive(Debug, Clone)]
pub struct LoadOutcome {
    pub corpus: Corpus,
    pub warnings: Vec<String>,
}

/// One broken invariant, named by sentence and rule. Violations are data,
/// not failures; [`load_corpus`] turns them into errors, [`validate_corpus`]
/// returns them as-is.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub sentence_id: String,
    pub rule: String,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}: {}", self.rule, self.sentence_id, self.detail)
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: unknown fields in strict mode: {fields:?}")]
    UnknownFields { line: usize, fields: Vec<String> },
    #[error("corpus invalid: {} violation(s), first: {first}", .all.len())]
    Violations { first: Violation, all: Vec<Violation> },
    #[error("i/o error reading corpus: {0}")]
    Io(#[from] std::io::Error),
}

/// Slices `text` by character indices, start inclusive, end exclusive.
/// Returns `None` when either index is out of range.
pub fn slice_chars(text: &str, start: usize, end: usize) -> Option<&str> {
    if start > end {
        return None;
    }
    let mut boundaries = text
        .char_indices()
        .map(|(b, _)| b)
        .chain(std::iter::once(text.len()));
    let byte_start = boundaries.nth(start)?;
    let byte_end = if end == start {
        byte_start
    } else {
        boundaries.nth(end - start - 1)?
    };
    Some(&text[byte_start..byte_end])
}

/// Number of characters in `text`.
pub fn char_len(text: &str) -> usize {
    text.chars().count()
}

const DOC_KEYS: &[&str] = &["doc_id", "sentences"];
const SENTENCE_KEYS: &[&str] = &["sentence_id", "text", "entities", "pairs"];
const ENTITY_KEYS: &[&str] = &["id", "surface", "start", "end"];
const PAIR_KEYS: &[&str] = &["e1", "e2", "positive"];

fn unknown_fields(value: &serde_json::Value) -> Vec<String> {
    let mut found = Vec::new();
    let Some(doc) = value.as_object() else {
        return found;
    };
    for key in doc.keys() {
        if !DOC_KEYS.contains(&key.as_str()) {
            found.push(key.clone());
        }
    }
    let sentences = doc.get("sentences").and_then(|v| v.as_array());
    for (si, sent) in sentences.into_iter().flatten().enumerate() {
        let Some(sent) = sent.as_object() else { continue };
        for key in sent.keys() {
            if !SENTENCE_KEYS.contains(&key.as_str()) {
                found.push(format!("sentences[{si}].{key}"));
            }
        }
        for (kind, keys) in [("entities", ENTITY_KEYS), ("pairs", PAIR_KEYS)] {
            let items = sent.get(kind).and_then(|v| v.as_array());
            for (ii, item) in items.into_iter().flatten().enumerate() {
                let Some(item) = item.as_object() else { continue };
                for key in item.keys() {
                    if !keys.contains(&key.as_str()) {
                        found.push(format!("sentences[{si}].{kind}[{ii}].{key}"));
                    }
                }
            }
        }
    }
    found
}

/// Loads a corpus from the interchange format.
///
/// Field names and nesting are normative:
/// `{"doc_id": "...", "sentences": [{"sentence_id": "...", "text": "...",
/// "entities": [{"id", "surface", "start", "end"}], "pairs": [{"e1", "e2",
/// "positive"}]}]}` — one document per line. All type invariants are
/// checked after decoding; any violation fails the load and names the
/// offending sentence.
pub fn load_corpus(reader: impl BufRead, mode: LoadMode) -> Result<LoadOutcome, CorpusError> {
    let mut documents = Vec::new();
    let mut warnings = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
                line: line_no,
                message: e.to_string(),
            })?;
        let extra = unknown_fields(&value);
        if !extra.is_empty() {
            match mode {
                LoadMode::Strict => {
                    return Err(CorpusError::UnknownFields {
                        line: line_no,
                        fields: extra,
                    })
                }
                LoadMode::Lenient => {
                    for field in extra {
                        warnings.push(format!("line {line_no}: ignoring unknown field {field}"));
                    }
                }
            }
        }
        let doc: Document =
            serde_json::from_value(value).map_err(|e| CorpusError::Malformed {
                line: line_no,
                message: e.to_string(),
            })?;
        documents.push(doc);
    }
    let corpus = Corpus { documents };
    let violations = validate_corpus(&corpus);
    if let Some(first) = violations.first().cloned() {
        return Err(CorpusError::Violations {
            first,
            all: violations,
        });
    }
    Ok(LoadOutcome { corpus, warnings })
}

/// Convenience wrapper over [`load_corpus`] for in-memory text.
pub fn load_corpus_str(text: &str, mode: LoadMode) -> Result<LoadOutcome, CorpusError> {
    load_corpus(text.as_bytes(), mode)
}

/// Checks every type invariant and returns all broken ones. Empty result
/// means the corpus is well-formed.
pub fn validate_corpus(corpus: &Corpus) -> Vec<Violation> {
    let mut violations = Vec::new();
    let mut seen_sentence_ids: HashMap<&str, ()> = HashMap::new();
    for doc in &corpus.documents {
        for sentence in &doc.sentences {
            let sid = sentence.sentence_id.as_str();
            if seen_sentence_ids.insert(sid, ()).is_some() {
                violations.push(Violation {
                    sentence_id: sid.to_string(),
                    rule: "duplicate-sentence-id".into(),
                    detail: "sentence_id appears more than once in the corpus".into(),
                });
            }
            if !sid
                .strip_prefix(doc.doc_id.as_str())
                .is_some_and(|rest| rest.starts_with('.'))
            {
                violations.push(Violation {
                    sentence_id: sid.to_string(),
                    rule: "sentence-id-prefix".into(),
                    detail: format!("sentence_id does not begin with doc_id {:?}", doc.doc_id),
                });
            }
            let text_len = char_len(&sentence.text);
            let mut entity_ids: HashMap<&str, ()> = HashMap::new();
            for entity in &sentence.entities {
                if entity_ids.insert(entity.id.as_str(), ()).is_some() {
                    violations.push(Violation {
                        sentence_id: sid.to_string(),
                        rule: "duplicate-entity-id".into(),
                        detail: format!("entity id {:?} declared twice", entity.id),
                    });
                }
                if entity.char_start >= entity.char_end || entity.char_end > text_len {
                    violations.push(Violation {
                        sentence_id: sid.to_string(),
                        rule: "span-out-of-bounds".into(),
                        detail: format!(
                            "entity {:?} span [{}, {}) invalid for text of {} chars",
                            entity.id, entity.char_start, entity.char_end, text_len
                        ),
                    });
                    continue;
                }
                let sliced = slice_chars(&sentence.text, entity.char_start, entity.char_end);
                if sliced != Some(entity.surface.as_str()) {
                    violations.push(Violation {
                        sentence_id: sid.to_string(),
                        rule: "offset-surface-mismatch".into(),
                        detail: format!(
                            "entity {:?}: span [{}, {}) yields {:?}, surface is {:?}",
                            entity.id,
                            entity.char_start,
                            entity.char_end,
                            sliced.unwrap_or(""),
                            entity.surface
                        ),
                    });
                }
            }
            let mut seen_pairs: HashMap<(&str, &str), ()> = HashMap::new();
            for pair in &sentence.pairs {
                for member in [&pair.e1, &pair.e2] {
                    if sentence.entity(member).is_none() {
                        violations.push(Violation {
                            sentence_id: sid.to_string(),
                            rule: "dangling-entity-ref".into(),
                            detail: format!("pair references undeclared entity {member:?}"),
                        });
                    }
                }
                if pair.e1 == pair.e2 {
                    violations.push(Violation {
                        sentence_id: sid.to_string(),
                        rule: "self-pair".into(),
                        detail: format!("pair references entity {:?} twice", pair.e1),
                    });
                }
                let key = if pair.e1 <= pair.e2 {
                    (pair.e1.as_str(), pair.e2.as_str())
                } else {
                    (pair.e2.as_str(), pair.e1.as_str())
                };
                if seen_pairs.insert(key, ()).is_some() {
                    violations.push(Violation {
                        sentence_id: sid.to_string(),
                        rule: "duplicate-pair".into(),
                        detail: format!("unordered pair ({:?}, {:?}) repeated", pair.e1, pair.e2),
                    });
                }
            }
        }
    }
    violations
}

/// Counts sentences and labeled pairs. Precondition: the corpus validates.
pub fn corpus_stats(corpus: &Corpus) -> CorpusStats {
    let mut n_sentences = 0;
    let mut n_positive = 0;
    let mut n_negative = 0;
    for sentence in corpus.sentences() {
        n_sentences += 1;
        for pair in &sentence.pairs {
            if pair.positive {
                n_positive += 1;
            } else {
                n_negative += 1;
            }
        }
    }
    CorpusStats {
        n_sentences,
        n_positive,
        n_negative,
        n_total_pairs: n_positive + n_negative,
        ratio: (n_positive > 0).then(|| n_negative as f64 / n_positive as f64),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_liner() -> &'static str {
        r#"{"doc_id":"d1","sentences":[{"sentence_id":"d1.s0","text":"AbrB binds SpoVG","entities":[{"id":"e1","surface":"AbrB","start":0,"end":4},{"id":"e2","surface":"SpoVG","start":11,"end":16}],"pairs":[{"e1":"e1","e2":"e2","positive":true}]}]}"#
    }

    #[test]
    fn loads_one_line_document() {
        let outcome = load_corpus_str(one_liner(), LoadMode::Strict).unwrap();
        let stats = corpus_stats(&outcome.corpus);
        assert_eq!(stats.n_sentences, 1);
        assert_eq!(stats.n_positive, 1);
        assert_eq!(stats.n_negative, 0);
        assert_eq!(stats.n_total_pairs, 1);
        assert!(outcome.warnings.is_empty());
    }

    #[test]
    fn offset_mismatch_names_sentence() {
        let bad = one_liner().replace("\"start\":11", "\"start\":10");
        let err = load_corpus_str(&bad, LoadMode::Strict).unwrap_err();
        match err {
            CorpusError::Violations { first, .. } => {
                assert_eq!(first.rule, "offset-surface-mismatch");
                assert_eq!(first.sentence_id, "d1.s0");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn malformed_record_reports_line_number() {
        let text = format!("{}\nnot json\n", one_liner());
        let err = load_corpus_str(&text, LoadMode::Strict).unwrap_err();
        match err {
            CorpusError::Malformed { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn strict_mode_rejects_unknown_fields() {
        let text = one_liner().replace("\"doc_id\":\"d1\"", "\"doc_id\":\"d1\",\"extra\":1");
        let err = load_corpus_str(&text, LoadMode::Strict).unwrap_err();
        assert!(matches!(err, CorpusError::UnknownFields { line: 1, .. }));
        let outcome = load_corpus_str(&text, LoadMode::Lenient).unwrap();
        assert_eq!(outcome.warnings.len(), 1);
        assert!(outcome.warnings[0].contains("extra"));
    }

    #[test]
    fn duplicate_pair_and_dangling_ref_are_violations() {
        let outcome = load_corpus_str(one_liner(), LoadMode::Strict).unwrap();
        let mut corpus = outcome.corpus;
        let sentence = &mut corpus.documents[0].sentences[0];
        sentence.pairs.push(LabeledPair {
            e1: "e2".into(),
            e2: "e1".into(),
            positive: false,
        });
        sentence.pairs.push(LabeledPair {
            e1: "e1".into(),
            e2: "ghost".into(),
            positive: true,
        });
        let violations = validate_corpus(&corpus);
        let rules: Vec<&str> = violations.iter().map(|v| v.rule.as_str()).collect();
        assert!(rules.contains(&"duplicate-pair"));
        assert!(rules.contains(&"dangling-entity-ref"));
    }

    #[test]
    fn empty_corpus_stats_have_undefined_ratio() {
        let stats = corpus_stats(&Corpus::default());
        assert_eq!(stats.n_sentences, 0);
        assert_eq!(stats.n_total_pairs, 0);
        assert_eq!(stats.ratio, None);
    }

    #[test]
    fn round_trip_preserves_structure() {
        let outcome = load_corpus_str(one_liner(), LoadMode::Strict).unwrap();
        let text = outcome.corpus.to_interchange();
        let again = load_corpus_str(&text, LoadMode::Strict).unwrap();
        assert_eq!(outcome.corpus, again.corpus);
    }

    #[test]
    fn slice_chars_handles_multibyte() {
        let text = "σB binds katX";
        assert_eq!(slice_chars(text, 0, 2), Some("σB"));
        assert_eq!(slice_chars(text, 9, 13), Some("katX"));
        assert_eq!(slice_chars(text, 0, 14), None);
        assert_eq!(char_len(text), 13);
    }
}
