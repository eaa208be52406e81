//! Pre-flight preparation: loads corpora, builds fold plans, dictionaries,
//! masked instances, and the per-setting chunk lists the schedule runs over.

use std::collections::{BTreeMap, HashMap};

use crate::chat::ChunkKey;
use crate::corpus::{load_corpus_str, Corpus, LoadMode, Sentence};
use crate::folds::{
    make_document_folds, make_duplicate_free_partitions, split_fold_by_budget, ByteHeuristic,
    ChunkBudget, FoldPlan, InputLine, TokenEstimator,
};
use crate::preprocess::{build_dictionaries, instances_for, MaskedInstance, ProteinDictionary};
use crate::prompt::{assemble_preamble, PromptSetting, PromptTemplate};
use crate::score::GoldInstance;

use super::config::{DictionaryScope, RunConfig};
use super::RunError;

/// Chunk lists are keyed by the fold seed actually used, so a fixed plan
/// is prepared once while per-run reseeding prepares per distinct seed.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ChunkLookupKey {
    pub fold_seed: u64,
    pub dataset: String,
    pub setting: PromptSetting,
    pub fold: usize,
    pub seq: usize,
}

#[derive(Debug, Clone)]
pub struct PreparedChunk {
    pub key: ChunkKey,
    pub lines: Vec<InputLine>,
}

#[derive(Debug)]
pub struct PreparedDataset {
    pub name: String,
    pub corpus: Corpus,
    pub original_dictionary: ProteinDictionary,
    pub normalized_dictionary: ProteinDictionary,
    pub instances: Vec<MaskedInstance>,
    pub sentence_doc: HashMap<String, String>,
    /// Fold plan per fold seed used by the runs.
    pub fold_plans: BTreeMap<u64, FoldPlan>,
}

impl PreparedDataset {
    pub fn fold_of_sentence(&self, plan: &FoldPlan, sentence_id: &str) -> Option<usize> {
        let doc = self.sentence_doc.get(sentence_id)?;
        plan.fold_of(doc)
    }

    /// Sentences of one fold, in corpus order.
    pub fn fold_sentences(&self, plan: &FoldPlan, fold: usize) -> Vec<&Sentence> {
        self.corpus
            .sentences()
            .filter(|s| self.fold_of_sentence(plan, &s.sentence_id) == Some(fold))
            .collect()
    }

    /// Masked instances of one fold, in corpus order.
    pub fn fold_instances(&self, plan: &FoldPlan, fold: usize) -> Vec<&MaskedInstance> {
        self.instances
            .iter()
            .filter(|i| self.fold_of_sentence(plan, &i.sentence_id) == Some(fold))
            .collect()
    }

    pub fn fold_gold_instances(&self, plan: &FoldPlan, fold: usize) -> Vec<GoldInstance> {
        self.fold_instances(plan, fold)
            .into_iter()
            .map(|i| GoldInstance {
                sentence_id: i.sentence_id.clone(),
                variant_index: i.variant_index,
                positive: i.pair.positive,
            })
            .collect()
    }

    /// Dictionary for a setting, honoring the configured scope. Per-fold
    /// scope restricts names to the evaluated fold's sentences.
    pub fn dictionary_for(
        &self,
        setting: PromptSetting,
        scope: DictionaryScope,
        plan: &FoldPlan,
        fold: usize,
        config: &RunConfig,
    ) -> Option<ProteinDictionary> {
        if !setting.requires_dictionary() {
            return None;
        }
        let (original, normalized) = match scope {
            DictionaryScope::WholeCorpus => (
                self.original_dictionary.clone(),
                self.normalized_dictionary.clone(),
            ),
            DictionaryScope::PerFold => {
                let sub = Corpus {
                    documents: vec![crate::corpus::Document {
                        doc_id: "fold".into(),
                        sentences: self
                            .fold_sentences(plan, fold)
                            .into_iter()
                            .cloned()
                            .collect(),
                    }],
                };
                build_dictionaries(&sub, &config.match_config.normalize)
            }
        };
        Some(match setting {
            PromptSetting::WithNormalizedDictionary => normalized,
            _ => original,
        })
    }
}

#[derive(Debug)]
pub struct Prepared {
    pub datasets: BTreeMap<String, PreparedDataset>,
    pub chunks: BTreeMap<ChunkLookupKey, PreparedChunk>,
    pub base_template: PromptTemplate,
    pub masked_template: PromptTemplate,
}

fn load_template(
    path: &Option<std::path::PathBuf>,
    bundled: fn() -> PromptTemplate,
) -> Result<PromptTemplate, RunError> {
    match path {
        None => Ok(bundled()),
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                RunError::Prepare(format!("reading library {}: {e}", path.display()))
            })?;
            let library = crate::prompt::VariationLibrary::parse(&text)
                .map_err(|e| RunError::Prepare(format!("library {}: {e}", path.display())))?;
            Ok(library.base_template())
        }
    }
}

fn sentence_lines(sentences: &[&Sentence]) -> Vec<InputLine> {
    sentences
        .iter()
        .map(|s| InputLine {
            sentence_id: s.sentence_id.clone(),
            text: s.text.clone(),
            variant_index: None,
        })
        .collect()
}

fn instance_lines(instances: &[&MaskedInstance]) -> Vec<InputLine> {
    instances
        .iter()
        .map(|i| InputLine {
            sentence_id: i.sentence_id.clone(),
            text: i.masked_text.clone(),
            variant_index: Some(i.variant_index),
        })
        .collect()
}

/// Loads every dataset and materializes the chunk lists for each
/// (fold seed, setting). Chunking is budgeted against the smallest
/// configured context window so one chunk list serves all models.
pub fn prepare(config: &RunConfig) -> Result<Prepared, RunError> {
    let base_template = load_template(&config.base_library, PromptTemplate::foundational)?;
    let masked_template = load_template(&config.masked_library, PromptTemplate::masked_default)?;

    let min_window = config
        .models
        .iter()
        .map(|m| m.context_window)
        .min()
        .ok_or_else(|| RunError::Prepare("no models configured".into()))?;

    let mut fold_seeds: Vec<u64> = (1..=config.runs)
        .map(|run| config.fold_seed_for_run(run))
        .collect();
    fold_seeds.sort();
    fold_seeds.dedup();

    let mut datasets = BTreeMap::new();
    let mut chunks = BTreeMap::new();

    for ds in &config.datasets {
        let text = std::fs::read_to_string(&ds.path).map_err(|e| {
            RunError::Prepare(format!("reading corpus {}: {e}", ds.path.display()))
        })?;
        let corpus = load_corpus_str(&text, LoadMode::Lenient)
            .map_err(|e| RunError::Prepare(format!("corpus {}: {e}", ds.name)))?
            .corpus;
        let (original_dictionary, normalized_dictionary) =
            build_dictionaries(&corpus, &config.match_config.normalize);
        let instances = instances_for(&corpus)
            .map_err(|e| RunError::Prepare(format!("masking {}: {e}", ds.name)))?;
        let sentence_doc: HashMap<String, String> = corpus
            .documents
            .iter()
            .flat_map(|d| {
                d.sentences
                    .iter()
                    .map(|s| (s.sentence_id.clone(), d.doc_id.clone()))
            })
            .collect();

        let mut fold_plans = BTreeMap::new();
        for &seed in &fold_seeds {
            let plan = make_document_folds(&corpus, config.k, seed)
                .map_err(|e| RunError::Prepare(format!("folding {}: {e}", ds.name)))?;
            fold_plans.insert(seed, plan);
        }

        let prepared = PreparedDataset {
            name: ds.name.clone(),
            corpus,
            original_dictionary,
            normalized_dictionary,
            instances,
            sentence_doc,
            fold_plans,
        };

        for &seed in &fold_seeds {
            let plan = &prepared.fold_plans[&seed];
            for setting in &config.settings {
                for fold in 0..config.k {
                    let fold_chunks =
                        chunk_fold(config, &prepared, plan, *setting, fold, min_window, &base_template, &masked_template)?;
                    for (seq, lines) in fold_chunks.into_iter().enumerate() {
                        let key = ChunkLookupKey {
                            fold_seed: seed,
                            dataset: ds.name.clone(),
                            setting: *setting,
                            fold,
                            seq,
                        };
                        chunks.insert(
                            key,
                            PreparedChunk {
                                key: ChunkKey {
                                    dataset: ds.name.clone(),
                                    fold,
                                    seq,
                                },
                                lines,
                            },
                        );
                    }
                }
            }
        }

        datasets.insert(ds.name.clone(), prepared);
    }

    Ok(Prepared {
        datasets,
        chunks,
        base_template,
        masked_template,
    })
}

#[allow(clippy::too_many_arguments)]
fn chunk_fold(
    config: &RunConfig,
    dataset: &PreparedDataset,
    plan: &FoldPlan,
    setting: PromptSetting,
    fold: usize,
    min_window: usize,
    base_template: &PromptTemplate,
    masked_template: &PromptTemplate,
) -> Result<Vec<Vec<InputLine>>, RunError> {
    let template = if setting.is_masked() {
        masked_template
    } else {
        base_template
    };
    let dictionary =
        dataset.dictionary_for(setting, config.dictionary_scope, plan, fold, config);
    let preamble = assemble_preamble(setting, template, dictionary.as_ref())
        .map_err(|e| RunError::Prepare(format!("preamble for {setting}: {e}")))?;
    let budget = ChunkBudget {
        preamble_tokens: ByteHeuristic.estimate(&preamble),
        per_line_output_allowance: config.budgets.per_sentence_output_allowance,
        context_window: min_window,
        safety_margin: config.budgets.safety_margin,
    };

    let split = |lines: Vec<InputLine>| -> Result<Vec<Vec<InputLine>>, RunError> {
        if lines.is_empty() {
            return Ok(Vec::new());
        }
        split_fold_by_budget(fold, &lines, &budget, &ByteHeuristic)
            .map(|chunks| chunks.into_iter().map(|c| c.lines).collect())
            .map_err(|e| RunError::Prepare(format!("chunking {}: {e}", dataset.name)))
    };

    match setting {
        PromptSetting::Base
        | PromptSetting::WithDictionary
        | PromptSetting::WithNormalizedDictionary => {
            split(sentence_lines(&dataset.fold_sentences(plan, fold)))
        }
        PromptSetting::Masked => split(instance_lines(&dataset.fold_instances(plan, fold))),
        PromptSetting::MaskedNoRepeat => {
            let fold_instances: Vec<MaskedInstance> = dataset
                .fold_instances(plan, fold)
                .into_iter()
                .cloned()
                .collect();
            let partitions = make_duplicate_free_partitions(&fold_instances);
            let mut out = Vec::new();
            for part in partitions.materialize(&fold_instances) {
                out.extend(split(instance_lines(&part))?);
            }
            Ok(out)
        }
        PromptSetting::MaskedSingle => Ok(dataset
            .fold_instances(plan, fold)
            .into_iter()
            .map(|i| instance_lines(&[i]))
            .collect()),
    }
}
