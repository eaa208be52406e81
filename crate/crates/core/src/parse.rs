//! Tolerant parsing of model responses into structured predictions.
//!
//! The parser is total: any byte string yields records plus a report, never
//! an error. Every line of the raw response is classified exactly once as
//! recovered (a record), dropped (a would-be record with a reason), or
//! structural (blank, code fence, header, `Done` sentinel, prose, or
//! anything after the sentinel), so
//! `recovered + dropped + structural == total_lines` always holds.

use serde::{Deserialize, Serialize};

/// One extracted interaction row: all four fields non-blank by construction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionRecord {
    pub sentence_id: String,
    pub protein1: String,
    pub protein2: String,
    pub interaction_type: String,
}

/// One classification row. `variant_index` is resolved by the caller from
/// prompt order; the parser only sees sentence ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub sentence_id: String,
    pub variant_index: Option<usize>,
    pub verdict: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropRecord {
    /// 1-based line number in the raw response.
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ParseReport {
    pub total_lines: usize,
    pub recovered: usize,
    pub dropped: Vec<DropRecord>,
    pub structural_lines: usize,
    pub done_sentinel_seen: bool,
    pub stripped_wrappers: Vec<String>,
}

impl ParseReport {
    /// The line-accounting identity.
    pub fn accounting_holds(&self) -> bool {
        self.recovered + self.dropped.len() + self.structural_lines == self.total_lines
    }
}

/// Splits one CSV row with quoted-field support (RFC-4180 style quoting,
/// `""` escapes a quote). Unquoted fields are trimmed.
fn split_fields(line: &str) -> Result<Vec<String>, String> {
    let mut fields = Vec::new();
    let mut chars = line.chars().peekable();
    loop {
        while matches!(chars.peek(), Some(c) if *c == ' ' || *c == '\t') {
            chars.next();
        }
        let mut field = String::new();
        if chars.peek() == Some(&'"') {
            chars.next();
            loop {
                match chars.next() {
                    Some('"') => {
                        if chars.peek() == Some(&'"') {
                            chars.next();
                            field.push('"');
                        } else {
                            break;
                        }
                    }
                    Some(c) => field.push(c),
                    None => return Err("unbalanced quote".into()),
                }
            }
            while matches!(chars.peek(), Some(c) if *c == ' ' || *c == '\t') {
                chars.next();
            }
            match chars.next() {
                Some(',') => fields.push(field),
                None => {
                    fields.push(field);
                    return Ok(fields);
                }
                Some(other) => return Err(format!("unexpected {other:?} after closing quote")),
            }
        } else {
            let mut ended = false;
            for c in chars.by_ref() {
                if c == ',' {
                    ended = true;
                    break;
                }
                field.push(c);
            }
            fields.push(field.trim().to_string());
            if !ended {
                return Ok(fields);
            }
        }
    }
}

fn is_done_sentinel(trimmed: &str) -> bool {
    trimmed.trim_end_matches('.').eq_ignore_ascii_case("done")
}

fn is_header(trimmed: &str) -> bool {
    split_fields(trimmed)
        .ok()
        .and_then(|fields| fields.first().cloned())
        .is_some_and(|first| first.eq_ignore_ascii_case("sentence id"))
}

enum LineOutcome<T> {
    Record(T),
    Dropped(String),
}

fn walk_lines<T>(
    text: &str,
    mut row: impl FnMut(&[String]) -> LineOutcome<T>,
) -> (Vec<T>, ParseReport) {
    let mut records = Vec::new();
    let mut report = ParseReport::default();
    let mut after_done = false;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        report.total_lines += 1;
        let trimmed = raw.trim();
        if after_done {
            report.structural_lines += 1;
            continue;
        }
        if trimmed.is_empty() {
            report.structural_lines += 1;
            continue;
        }
        if trimmed.starts_with("```") {
            report.structural_lines += 1;
            report
                .stripped_wrappers
                .push(format!("code fence (line {line_no})"));
            continue;
        }
        if is_done_sentinel(trimmed) {
            report.done_sentinel_seen = true;
            report.structural_lines += 1;
            after_done = true;
            continue;
        }
        if is_header(trimmed) {
            report.structural_lines += 1;
            continue;
        }
        if !trimmed.contains(',') {
            report.structural_lines += 1;
            report
                .stripped_wrappers
                .push(format!("prose (line {line_no}): {trimmed:?}"));
            continue;
        }
        match split_fields(trimmed) {
            Ok(fields) => match row(&fields) {
                LineOutcome::Record(r) => {
                    records.push(r);
                    report.recovered += 1;
                }
                LineOutcome::Dropped(reason) => report.dropped.push(DropRecord {
                    line: line_no,
                    reason,
                }),
            },
            Err(reason) => report.dropped.push(DropRecord {
                line: line_no,
                reason,
            }),
        }
    }
    (records, report)
}

/// Parses the four-column extraction contract. Rows after the `Done`
/// sentinel are ignored; rows with the wrong arity or blank fields are
/// dropped with a reason.
pub fn parse_extraction(text: &str) -> (Vec<ExtractionRecord>, ParseReport) {
    walk_lines(text, |fields| {
        if fields.len() != 4 {
            return LineOutcome::Dropped(format!("expected 4 fields, got {}", fields.len()));
        }
        if fields.iter().any(|f| f.is_empty()) {
            return LineOutcome::Dropped("blank field".into());
        }
        LineOutcome::Record(ExtractionRecord {
            sentence_id: fields[0].clone(),
            protein1: fields[1].clone(),
            protein2: fields[2].clone(),
            interaction_type: fields[3].clone(),
        })
    })
}

/// Parses the two-column `sentence_id,TRUE|FALSE` contract.
pub fn parse_verdicts(text: &str) -> (Vec<VerdictRecord>, ParseReport) {
    walk_lines(text, |fields| {
        if fields.len() != 2 {
            return LineOutcome::Dropped(format!("expected 2 fields, got {}", fields.len()));
        }
        if fields[0].is_empty() {
            return LineOutcome::Dropped("blank sentence id".into());
        }
        let verdict = if fields[1].eq_ignore_ascii_case("true") {
            true
        } else if fields[1].eq_ignore_ascii_case("false") {
            false
        } else {
            return LineOutcome::Dropped(format!("unrecognized verdict {:?}", fields[1]));
        };
        LineOutcome::Record(VerdictRecord {
            sentence_id: fields[0].clone(),
            variant_index: None,
            verdict,
        })
    })
}

fn is_token_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Scans for the first standalone TRUE/FALSE token anywhere in the text.
/// Absent token means absent verdict; the scorer's missing-verdict rule
/// applies downstream.
pub fn parse_single_verdict(text: &str) -> (Option<bool>, ParseReport) {
    let mut report = ParseReport::default();
    let mut verdict = None;
    for raw in text.lines() {
        report.total_lines += 1;
        let trimmed = raw.trim();
        if is_done_sentinel(trimmed) {
            report.done_sentinel_seen = true;
        }
        if verdict.is_none() {
            for token in raw.split(|c| !is_token_char(c)).filter(|t| !t.is_empty()) {
                if token.eq_ignore_ascii_case("true") {
                    verdict = Some(true);
                } else if token.eq_ignore_ascii_case("false") {
                    verdict = Some(false);
                } else {
                    continue;
                }
                report.recovered = 1;
                break;
            }
            if report.recovered == 1 {
                continue;
            }
        }
        report.structural_lines += 1;
    }
    (verdict, report)
}

pub(crate) fn quote_field(field: &str) -> String {
    if field.contains(',') || field.contains('"') || field != field.trim() {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

/// Renders records back to the wire contract, `Done` sentinel included.
/// Re-parsing the result recovers the records with zero drops.
pub fn emit_extraction_csv(records: &[ExtractionRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&format!(
            "{},{},{},{}\n",
            quote_field(&r.sentence_id),
            quote_field(&r.protein1),
            quote_field(&r.protein2),
            quote_field(&r.interaction_type)
        ));
    }
    out.push_str("Done\n");
    out
}

pub fn emit_verdicts_csv(records: &[VerdictRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&format!(
            "{},{}\n",
            quote_field(&r.sentence_id),
            if r.verdict { "TRUE" } else { "FALSE" }
        ));
    }
    out.push_str("Done\n");
    out
}
