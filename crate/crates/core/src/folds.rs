//! Document-level fold plans, duplicate-free instance partitions, and
//! token-budget chunking of fold inputs.

use std::collections::BTreeMap;
use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::preprocess::MaskedInstance;

/// Assignment of every document to one of `k` folds. Fold sizes differ by
/// at most one document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub assignment: BTreeMap<String, usize>,
}

impl FoldPlan {
    pub fn fold_of(&self, doc_id: &str) -> Option<usize> {
        self.assignment.get(doc_id).copied()
    }

    /// Doc ids per fold, in corpus-independent sorted order.
    pub fn folds(&self) -> Vec<Vec<String>> {
        let mut folds = vec![Vec::new(); self.k];
        for (doc_id, fold) in &self.assignment {
            folds[*fold].push(doc_id.clone());
        }
        folds
    }

    /// `fold_index, doc_id` rows, one per document.
    pub fn export(&self) -> String {
        let mut rows: Vec<(usize, &str)> = self
            .assignment
            .iter()
            .map(|(doc, fold)| (*fold, doc.as_str()))
            .collect();
        rows.sort();
        let mut out = String::new();
        for (fold, doc) in rows {
            out.push_str(&format!("{fold},{doc}\n"));
        }
        out
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FoldError {
    #[error("k must be at least 2, got {0}")]
    BadK(usize),
    #[error("{documents} document(s) cannot fill {k} folds")]
    TooFewDocuments { documents: usize, k: usize },
    #[error("sentence {sentence_id} alone needs {needed} tokens against a budget of {budget}")]
    SentenceOverBudget {
        sentence_id: String,
        needed: usize,
        budget: usize,
    },
}

/// Shuffles documents with a seeded RNG and deals them round-robin into
/// `k` folds. Deterministic for a fixed `(corpus, k, seed)`.
pub fn make_document_folds(corpus: &Corpus, k: usize, seed: u64) -> Result<FoldPlan, FoldError> {
    if k < 2 {
        return Err(FoldError::BadK(k));
    }
    let mut doc_ids = corpus.doc_ids();
    if doc_ids.len() < k {
        return Err(FoldError::TooFewDocuments {
            documents: doc_ids.len(),
            k,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    doc_ids.shuffle(&mut rng);
    let assignment = doc_ids
        .into_iter()
        .enumerate()
        .map(|(i, doc)| (doc, i % k))
        .collect();
    Ok(FoldPlan { k, assignment })
}

/// Groups of instance indices such that no group holds two instances of
/// the same sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionPlan {
    pub partitions: Vec<Vec<usize>>,
}

impl PartitionPlan {
    pub fn materialize<'a>(&self, instances: &'a [MaskedInstance]) -> Vec<Vec<&'a MaskedInstance>> {
        self.partitions
            .iter()
            .map(|part| part.iter().map(|&i| &instances[i]).collect())
            .collect()
    }
}

/// Greedy coloring by sentence id: each instance joins the lowest-index
/// partition not yet containing its sentence. Partition count ends up
/// equal to the maximum number of pairs in any one sentence.
pub fn make_duplicate_free_partitions(instances: &[MaskedInstance]) -> PartitionPlan {
    let mut partitions: Vec<Vec<usize>> = Vec::new();
    let mut seen: Vec<HashSet<&str>> = Vec::new();
    for (idx, instance) in instances.iter().enumerate() {
        let sid = instance.sentence_id.as_str();
        let slot = seen.iter().position(|s| !s.contains(sid));
        match slot {
            Some(p) => {
                partitions[p].push(idx);
                seen[p].insert(sid);
            }
            None => {
                partitions.push(vec![idx]);
                seen.push(HashSet::from([sid]));
            }
        }
    }
    PartitionPlan { partitions }
}

/// Token-count heuristic, pluggable where an exact tokenizer would go.
pub trait TokenEstimator: Send + Sync {
    fn estimate(&self, text: &str) -> usize;
}

/// Default heuristic: one token per four bytes, rounded up.
#[derive(Debug, Clone, Copy, Default)]
pub struct ByteHeuristic;

impl TokenEstimator for ByteHeuristic {
    fn estimate(&self, text: &str) -> usize {
        text.len().div_ceil(4)
    }
}

/// `ceil(byte_length / 4)` under the default heuristic.
pub fn estimate_tokens(text: &str) -> usize {
    ByteHeuristic.estimate(text)
}

/// Fraction of the context window reserved as headroom when chunking.
pub const DEFAULT_SAFETY_MARGIN: f64 = 0.15;

/// One input line destined for a prompt: a sentence or masked instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputLine {
    pub sentence_id: String,
    pub text: String,
    /// Present for masked instances; pairs the line back to its variant.
    pub variant_index: Option<usize>,
}

impl InputLine {
    pub fn rendered(&self) -> String {
        format!("{}\t{}", self.sentence_id, self.text)
    }
}

/// A budget-sized slice of one fold's input lines.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldChunk {
    pub fold_index: usize,
    pub chunk_index: usize,
    pub lines: Vec<InputLine>,
    pub est_tokens: usize,
}

impl FoldChunk {
    pub fn sentence_ids(&self) -> Vec<&str> {
        self.lines.iter().map(|l| l.sentence_id.as_str()).collect()
    }
}

/// Budget parameters for [`split_fold_by_budget`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChunkBudget {
    pub preamble_tokens: usize,
    pub per_line_output_allowance: usize,
    pub context_window: usize,
    pub safety_margin: f64,
}

impl ChunkBudget {
    pub fn usable(&self) -> usize {
        let margin = (self.context_window as f64 * self.safety_margin).ceil() as usize;
        self.context_window.saturating_sub(margin)
    }
}

fn line_cost(line: &InputLine, allowance: usize, estimator: &dyn TokenEstimator) -> usize {
    estimator.estimate(&line.rendered()) + 1 + allowance
}

/// Greedy first-fit packing of a fold's lines, in order: a chunk takes
/// lines until the next one would push preamble plus line costs past the
/// usable budget. Chunk outputs are re-merged per fold before scoring.
pub fn split_fold_by_budget(
    fold_index: usize,
    lines: &[InputLine],
    budget: &ChunkBudget,
    estimator: &dyn TokenEstimator,
) -> Result<Vec<FoldChunk>, FoldError> {
    let usable = budget.usable();
    let mut chunks: Vec<FoldChunk> = Vec::new();
    let mut current: Vec<InputLine> = Vec::new();
    let mut current_tokens = budget.preamble_tokens;
    for line in lines {
        let cost = line_cost(line, budget.per_line_output_allowance, estimator);
        if budget.preamble_tokens + cost > usable {
            return Err(FoldError::SentenceOverBudget {
                sentence_id: line.sentence_id.clone(),
                needed: budget.preamble_tokens + cost,
                budget: usable,
            });
        }
        if !current.is_empty() && current_tokens + cost > usable {
            chunks.push(FoldChunk {
                fold_index,
                chunk_index: chunks.len(),
                lines: std::mem::take(&mut current),
                est_tokens: current_tokens,
            });
            current_tokens = budget.preamble_tokens;
        }
        current_tokens += cost;
        current.push(line.clone());
    }
    if !current.is_empty() {
        chunks.push(FoldChunk {
            fold_index,
            chunk_index: chunks.len(),
            lines: current,
            est_tokens: current_tokens,
        });
    }
    Ok(chunks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Document, Sentence};

    fn corpus_with_docs(n: usize) -> Corpus {
        Corpus {
            documents: (0..n)
                .map(|i| Document {
                    doc_id: format!("d{i}"),
                    sentences: vec![Sentence {
                        sentence_id: format!("d{i}.s0"),
                        text: "x".into(),
                        entities: vec![],
                        pairs: vec![],
                    }],
                })
                .collect(),
        }
    }

    #[test]
    fn folds_are_balanced_and_deterministic() {
        let corpus = corpus_with_docs(20);
        let plan = make_document_folds(&corpus, 10, 7).unwrap();
        let folds = plan.folds();
        assert!(folds.iter().all(|f| f.len() == 2));
        let again = make_document_folds(&corpus, 10, 7).unwrap();
        assert_eq!(plan, again);
        let different = make_document_folds(&corpus, 10, 8).unwrap();
        assert_eq!(different.assignment.len(), 20);
    }

    #[test]
    fn too_few_documents_is_an_error() {
        let corpus = corpus_with_docs(3);
        assert_eq!(
            make_document_folds(&corpus, 10, 0).unwrap_err(),
            FoldError::TooFewDocuments { documents: 3, k: 10 }
        );
        assert_eq!(
            make_document_folds(&corpus, 1, 0).unwrap_err(),
            FoldError::BadK(1)
        );
    }

    fn instance(sid: &str, variant: usize) -> MaskedInstance {
        MaskedInstance {
            sentence_id: sid.into(),
            pair: crate::corpus::LabeledPair {
                e1: format!("e{variant}"),
                e2: format!("f{variant}"),
                positive: true,
            },
            masked_text: "PROTEIN1 x PROTEIN2".into(),
            variant_index: variant,
        }
    }

    #[test]
    fn partitions_never_repeat_a_sentence() {
        let instances = vec![
            instance("a.s0", 0),
            instance("a.s0", 1),
            instance("a.s0", 2),
            instance("b.s0", 0),
        ];
        let plan = make_duplicate_free_partitions(&instances);
        assert_eq!(plan.partitions.len(), 3);
        // Brute-force check: no partition repeats a sentence id, and the
        // singleton joined partition 0.
        for part in &plan.partitions {
            let mut seen = HashSet::new();
            for &i in part {
                assert!(seen.insert(instances[i].sentence_id.as_str()));
            }
        }
        assert!(plan.partitions[0].contains(&3));
        let total: usize = plan.partitions.iter().map(|p| p.len()).sum();
        assert_eq!(total, instances.len());
    }

    #[test]
    fn single_pair_sentences_make_one_partition() {
        let instances = vec![instance("a.s0", 0), instance("b.s0", 0), instance("c.s0", 0)];
        let plan = make_duplicate_free_partitions(&instances);
        assert_eq!(plan.partitions.len(), 1);
        assert!(make_duplicate_free_partitions(&[]).partitions.is_empty());
    }

    #[test]
    fn token_estimates_follow_the_heuristic() {
        assert_eq!(estimate_tokens(&"x".repeat(400)), 100);
        assert_eq!(estimate_tokens(""), 0);
        let (a, b) = ("hello", "world!!");
        assert!(
            estimate_tokens(&format!("{a}{b}")) <= estimate_tokens(a) + estimate_tokens(b) + 1
        );
    }

    fn uniform_lines(n: usize, text_len: usize) -> Vec<InputLine> {
        (0..n)
            .map(|i| InputLine {
                sentence_id: format!("d.s{i:02}"),
                text: "y".repeat(text_len),
                variant_index: None,
            })
            .collect()
    }

    #[test]
    fn greedy_packing_matches_brute_force_simulation() {
        // 30 uniform sentences, budget tuned so at most 12 fit per chunk:
        // each line costs 26 + 1 + 30 = 57 tokens, 50 + 13 * 57 > 790.
        let lines = uniform_lines(30, 95);
        let budget = ChunkBudget {
            preamble_tokens: 50,
            per_line_output_allowance: 30,
            context_window: 790,
            safety_margin: 0.0,
        };
        let chunks = split_fold_by_budget(0, &lines, &budget, &ByteHeuristic).unwrap();
        let sizes: Vec<usize> = chunks.iter().map(|c| c.lines.len()).collect();
        assert_eq!(sizes, vec![12, 12, 6]);

        // Independent greedy simulation over the same cost model.
        let cost = |l: &InputLine| ByteHeuristic.estimate(&l.rendered()) + 1 + 30;
        let mut expected_sizes = Vec::new();
        let mut used = budget.preamble_tokens;
        let mut count = 0usize;
        for line in &lines {
            if count > 0 && used + cost(line) > budget.usable() {
                expected_sizes.push(count);
                count = 0;
                used = budget.preamble_tokens;
            }
            used += cost(line);
            count += 1;
        }
        expected_sizes.push(count);
        assert_eq!(sizes, expected_sizes);
    }

    #[test]
    fn chunk_count_is_monotone_in_window() {
        let lines = uniform_lines(30, 95);
        let narrow = ChunkBudget {
            preamble_tokens: 50,
            per_line_output_allowance: 30,
            context_window: 4096,
            safety_margin: DEFAULT_SAFETY_MARGIN,
        };
        let wide = ChunkBudget {
            context_window: 8192,
            ..narrow
        };
        let narrow_chunks = split_fold_by_budget(0, &lines, &narrow, &ByteHeuristic).unwrap();
        let wide_chunks = split_fold_by_budget(0, &lines, &wide, &ByteHeuristic).unwrap();
        assert!(wide_chunks.len() <= narrow_chunks.len());

        // Union preserves order with no duplicates.
        let union: Vec<&str> = narrow_chunks
            .iter()
            .flat_map(|c| c.sentence_ids())
            .collect();
        let original: Vec<&str> = lines.iter().map(|l| l.sentence_id.as_str()).collect();
        assert_eq!(union, original);
    }

    #[test]
    fn oversized_sentence_is_an_error() {
        let lines = uniform_lines(1, 4000);
        let budget = ChunkBudget {
            preamble_tokens: 10,
            per_line_output_allowance: 30,
            context_window: 500,
            safety_margin: 0.15,
        };
        let err = split_fold_by_budget(0, &lines, &budget, &ByteHeuristic).unwrap_err();
        assert!(matches!(err, FoldError::SentenceOverBudget { .. }));
    }

    #[test]
    fn small_fold_fits_one_chunk() {
        let lines = uniform_lines(3, 40);
        let budget = ChunkBudget {
            preamble_tokens: 100,
            per_line_output_allowance: 30,
            context_window: 4096,
            safety_margin: DEFAULT_SAFETY_MARGIN,
        };
        let chunks = split_fold_by_budget(2, &lines, &budget, &ByteHeuristic).unwrap();
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].fold_index, 2);
        assert_eq!(chunks[0].chunk_index, 0);
    }
}
