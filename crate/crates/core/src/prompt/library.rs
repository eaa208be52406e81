//! Variation library file format: a `[section N]` header per section,
//! one variant per block, blocks separated by a `---` line. A block may
//! open with `@name <label>` to tag the variant.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{PromptTemplate, SECTION_COUNT};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variation {
    pub name: Option<String>,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariationLibrary {
    sections: Vec<Vec<Variation>>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LibraryError {
    #[error("line {line}: expected a [section N] header, got {got:?}")]
    ExpectedHeader { line: usize, got: String },
    #[error("line {line}: bad section header {got:?}")]
    BadHeader { line: usize, got: String },
    #[error("section {0} declared more than once")]
    DuplicateSection(usize),
    #[error("section {0} has no variations")]
    EmptySection(usize),
    #[error("section {section} variation {variation} is empty")]
    EmptyVariation { section: usize, variation: usize },
    #[error("sections out of order or missing: found {found}, expected 1..={SECTION_COUNT}")]
    MissingSections { found: usize },
}

impl VariationLibrary {
    pub fn new(sections: Vec<Vec<Variation>>) -> Result<Self, LibraryError> {
        if sections.len() != SECTION_COUNT {
            return Err(LibraryError::MissingSections {
                found: sections.len(),
            });
        }
        for (i, variations) in sections.iter().enumerate() {
            if variations.is_empty() {
                return Err(LibraryError::EmptySection(i + 1));
            }
            for (j, v) in variations.iter().enumerate() {
                if v.text.trim().is_empty() {
                    return Err(LibraryError::EmptyVariation {
                        section: i + 1,
                        variation: j + 1,
                    });
                }
            }
        }
        Ok(Self { sections })
    }

    /// Variation counts per section (N1..N7).
    pub fn counts(&self) -> [usize; SECTION_COUNT] {
        let mut counts = [0; SECTION_COUNT];
        for (i, s) in self.sections.iter().enumerate() {
            counts[i] = s.len();
        }
        counts
    }

    pub fn section(&self, index: usize) -> &[Variation] {
        &self.sections[index]
    }

    /// Template built from the first variation of every section.
    pub fn base_template(&self) -> PromptTemplate {
        PromptTemplate::new(self.sections.iter().map(|s| s[0].text.clone()).collect())
            .expect("library sections are validated non-empty")
    }

    pub fn find(&self, name: &str) -> Option<(usize, &Variation)> {
        for (i, section) in self.sections.iter().enumerate() {
            if let Some(v) = section.iter().find(|v| v.name.as_deref() == Some(name)) {
                return Some((i + 1, v));
            }
        }
        None
    }

    /// The bundled extraction-prompt library.
    pub fn bundled_base() -> Self {
        Self::parse(include_str!("../../data/base_prompt.lib")).expect("bundled library parses")
    }

    /// The bundled masked-prompt library.
    pub fn bundled_masked() -> Self {
        Self::parse(include_str!("../../data/masked_prompt.lib")).expect("bundled library parses")
    }

    pub fn parse(source: &str) -> Result<Self, LibraryError> {
        let mut sections: Vec<Vec<Variation>> = Vec::new();
        let mut current: Option<(usize, Vec<Variation>, Block)> = None;

        fn flush_block(
            section_no: usize,
            variations: &mut Vec<Variation>,
            block: &mut Block,
        ) -> Result<(), LibraryError> {
            if block.is_blank() {
                return Ok(());
            }
            let text = block.lines.join("\n").trim().to_string();
            if text.is_empty() {
                return Err(LibraryError::EmptyVariation {
                    section: section_no,
                    variation: variations.len() + 1,
                });
            }
            variations.push(Variation {
                name: block.name.take(),
                text,
            });
            block.lines.clear();
            Ok(())
        }

        for (idx, raw) in source.lines().enumerate() {
            let line_no = idx + 1;
            let trimmed = raw.trim();
            if let Some(header) = trimmed.strip_prefix('[') {
                let header = header
                    .strip_suffix(']')
                    .ok_or_else(|| LibraryError::BadHeader {
                        line: line_no,
                        got: trimmed.to_string(),
                    })?;
                let number: usize = header
                    .strip_prefix("section ")
                    .and_then(|n| n.trim().parse().ok())
                    .ok_or_else(|| LibraryError::BadHeader {
                        line: line_no,
                        got: trimmed.to_string(),
                    })?;
                if let Some((no, mut variations, mut block)) = current.take() {
                    flush_block(no, &mut variations, &mut block)?;
                    if variations.is_empty() {
                        return Err(LibraryError::EmptySection(no));
                    }
                    sections.push(variations);
                }
                if number != sections.len() + 1 || number > SECTION_COUNT {
                    if number <= sections.len() {
                        return Err(LibraryError::DuplicateSection(number));
                    }
                    return Err(LibraryError::BadHeader {
                        line: line_no,
                        got: trimmed.to_string(),
                    });
                }
                current = Some((number, Vec::new(), Block::default()));
                continue;
            }
            let Some((no, variations, block)) = current.as_mut() else {
                if trimmed.is_empty() {
                    continue;
                }
                return Err(LibraryError::ExpectedHeader {
                    line: line_no,
                    got: trimmed.to_string(),
                });
            };
            if trimmed == "---" {
                let at = *no;
                flush_block(at, variations, block)?;
            } else if let Some(name) = trimmed.strip_prefix("@name ") {
                block.name = Some(name.trim().to_string());
            } else {
                block.lines.push(raw.to_string());
            }
        }
        if let Some((no, mut variations, mut block)) = current.take() {
            flush_block(no, &mut variations, &mut block)?;
            if variations.is_empty() {
                return Err(LibraryError::EmptySection(no));
            }
            sections.push(variations);
        }
        Self::new(sections)
    }

    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for (i, section) in self.sections.iter().enumerate() {
            out.push_str(&format!("[section {}]\n", i + 1));
            for (j, v) in section.iter().enumerate() {
                if j > 0 {
                    out.push_str("---\n");
                }
                if let Some(name) = &v.name {
                    out.push_str(&format!("@name {name}\n"));
                }
                out.push_str(&v.text);
                out.push('\n');
            }
        }
        out
    }
}

#[derive(Default)]
struct Block {
    name: Option<String>,
    lines: Vec<String>,
}

impl Block {
    fn is_blank(&self) -> bool {
        self.name.is_none() && self.lines.iter().all(|l| l.trim().is_empty())
    }
}
