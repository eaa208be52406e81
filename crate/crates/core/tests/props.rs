//! Property suites over randomly generated corpora and records.

mod common;

use common::*;
use ppibench_core::corpus::{load_corpus_str, slice_chars, LoadMode};
use ppibench_core::parse::{
    emit_extraction_csv, emit_verdicts_csv, parse_extraction, parse_verdicts, ExtractionRecord,
    VerdictRecord,
};
use ppibench_core::preprocess::{build_dictionaries, instances_for, NormalizeConfig};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn corpus_round_trips_through_interchange(seed in any::<u64>()) {
        let corpus = random_corpus(&mut seeded_rng(seed));
        let text = corpus.to_interchange();
        let again = load_corpus_str(&text, LoadMode::Strict).unwrap().corpus;
        prop_assert_eq!(corpus, again);
    }

    #[test]
    fn every_entity_surface_recovers_by_slicing(seed in any::<u64>()) {
        let corpus = random_corpus(&mut seeded_rng(seed));
        for sentence in corpus.sentences() {
            for entity in &sentence.entities {
                prop_assert_eq!(
                    slice_chars(&sentence.text, entity.char_start, entity.char_end),
                    Some(entity.surface.as_str())
                );
            }
        }
    }

    #[test]
    fn masking_preserves_non_entity_text(seed in any::<u64>()) {
        let corpus = random_corpus(&mut seeded_rng(seed));
        let instances = instances_for(&corpus).unwrap();
        let stats = ppibench_core::corpus::corpus_stats(&corpus);
        prop_assert_eq!(instances.len(), stats.n_total_pairs);
        for instance in &instances {
            let sentence = corpus.sentence(&instance.sentence_id).unwrap();
            // Deleting the mask tokens (longest first) must leave exactly
            // the original text with all entity spans deleted.
            let unmasked = instance
                .masked_text
                .replace("PROTEIN1", "")
                .replace("PROTEIN2", "")
                .replace("PROTEIN", "");
            let mut expected = sentence.text.clone();
            let mut spans: Vec<_> = sentence
                .entities
                .iter()
                .map(|e| (e.char_start, e.char_end))
                .collect();
            spans.sort_by_key(|s| std::cmp::Reverse(s.0));
            for (start, end) in spans {
                let head = slice_chars(&expected, 0, start).unwrap().to_string();
                let tail_len = expected.chars().count();
                let tail = slice_chars(&expected, end, tail_len).unwrap().to_string();
                expected = format!("{head}{tail}");
            }
            prop_assert_eq!(unmasked, expected);
        }
    }

    #[test]
    fn normalized_dictionary_never_exceeds_original(seed in any::<u64>()) {
        let corpus = random_corpus(&mut seeded_rng(seed));
        let (original, normalized) = build_dictionaries(&corpus, &NormalizeConfig::default());
        prop_assert!(normalized.names.len() <= original.names.len());
    }
}

fn field() -> impl Strategy<Value = String> {
    "[A-Za-z0-9][A-Za-z0-9 ,*()~'-]{0,18}[A-Za-z0-9*]".prop_map(|s| s)
}

fn sid() -> impl Strategy<Value = String> {
    "[a-z]{2,5}\\.d[0-9]{1,3}\\.s[0-9]{1,2}".prop_map(|s| s)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn extraction_records_round_trip(
        records in proptest::collection::vec(
            (sid(), field(), field(), field()).prop_map(|(sentence_id, protein1, protein2, interaction_type)| {
                ExtractionRecord { sentence_id, protein1, protein2, interaction_type }
            }),
            0..12,
        )
    ) {
        let text = emit_extraction_csv(&records);
        let (parsed, report) = parse_extraction(&text);
        prop_assert_eq!(parsed, records);
        prop_assert!(report.dropped.is_empty());
        prop_assert!(report.done_sentinel_seen);
        prop_assert!(report.accounting_holds());
    }

    #[test]
    fn verdict_records_round_trip(
        records in proptest::collection::vec(
            (sid(), any::<bool>()).prop_map(|(sentence_id, verdict)| VerdictRecord {
                sentence_id,
                variant_index: None,
                verdict,
            }),
            0..12,
        )
    ) {
        let text = emit_verdicts_csv(&records);
        let (parsed, report) = parse_verdicts(&text);
        prop_assert_eq!(parsed, records);
        prop_assert!(report.dropped.is_empty());
        prop_assert!(report.accounting_holds());
    }

    #[test]
    fn parser_is_total_and_accounts_for_every_line(text in "\\PC*") {
        let (_, report) = parse_extraction(&text);
        prop_assert!(report.accounting_holds());
        let (_, report) = parse_verdicts(&text);
        prop_assert!(report.accounting_holds());
        let (_, report) = ppibench_core::parse::parse_single_verdict(&text);
        prop_assert!(report.accounting_holds());
    }
}
