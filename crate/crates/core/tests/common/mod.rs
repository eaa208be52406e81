//! Shared builders for the integration and acceptance suites.

#![allow(dead_code)]

use ppibench_core::corpus::{Corpus, Document, EntityMention, LabeledPair, Sentence};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The bundled fixture corpus (5 documents, 14 sentences, 25 pairs).
pub const FIXTURE_JSONL: &str = include_str!("../../data/fixture_corpus.jsonl");

pub fn fixture_corpus() -> Corpus {
    ppibench_core::corpus::load_corpus_str(FIXTURE_JSONL, ppibench_core::corpus::LoadMode::Strict)
        .expect("bundled fixture is valid")
        .corpus
}

pub fn write_fixture_file(dir: &std::path::Path) -> std::path::PathBuf {
    let path = dir.join("fixture_corpus.jsonl");
    std::fs::write(&path, FIXTURE_JSONL).unwrap();
    path
}

/// Builds a sentence from literal and entity parts, computing offsets.
pub fn sentence_from_parts(sentence_id: &str, parts: &[Part<'_>]) -> (Sentence, Vec<String>) {
    let mut text = String::new();
    let mut entities = Vec::new();
    let mut names = Vec::new();
    for part in parts {
        match part {
            Part::Text(t) => text.push_str(t),
            Part::Entity(name) => {
                let start = text.chars().count();
                text.push_str(name);
                let end = text.chars().count();
                entities.push(EntityMention {
                    id: format!("e{}", entities.len()),
                    surface: name.to_string(),
                    char_start: start,
                    char_end: end,
                });
                names.push(name.to_string());
            }
        }
    }
    (
        Sentence {
            sentence_id: sentence_id.to_string(),
            text,
            entities,
            pairs: Vec::new(),
        },
        names,
    )
}

pub enum Part<'a> {
    Text(&'a str),
    Entity(&'a str),
}

/// Deterministic corpus with 35 documents x 3 sentences x 3 entities and
/// pairs (e0,e1,+), (e0,e2,+), (e1,e2,-): 210 positives, 105 negatives.
pub fn corruption_corpus() -> Corpus {
    let mut documents = Vec::new();
    for d in 0..35 {
        let doc_id = format!("cx.d{d}");
        let mut sentences = Vec::new();
        for s in 0..3 {
            let names: Vec<String> = (0..3).map(|e| format!("Prt{d}x{s}x{e}")).collect();
            let (mut sentence, _) = sentence_from_parts(
                &format!("{doc_id}.s{s}"),
                &[
                    Part::Entity(&names[0]),
                    Part::Text(" activates "),
                    Part::Entity(&names[1]),
                    Part::Text(" but not "),
                    Part::Entity(&names[2]),
                    Part::Text(" in vitro."),
                ],
            );
            sentence.pairs = vec![
                LabeledPair {
                    e1: "e0".into(),
                    e2: "e1".into(),
                    positive: true,
                },
                LabeledPair {
                    e1: "e0".into(),
                    e2: "e2".into(),
                    positive: true,
                },
                LabeledPair {
                    e1: "e1".into(),
                    e2: "e2".into(),
                    positive: false,
                },
            ];
            sentences.push(sentence);
        }
        documents.push(Document { doc_id, sentences });
    }
    Corpus { documents }
}

/// Random well-formed corpus for property suites. Entity surfaces are
/// drawn from a pool with collisions, pair sets are random subsets of the
/// distinct unordered pairs, labels random.
pub fn random_corpus(rng: &mut ChaCha8Rng) -> Corpus {
    let n_docs = rng.gen_range(2..=20);
    let mut documents = Vec::new();
    for d in 0..n_docs {
        let doc_id = format!("rc.d{d}");
        let n_sentences = rng.gen_range(1..=4);
        let mut sentences = Vec::new();
        for s in 0..n_sentences {
            let n_entities = rng.gen_range(0..=5);
            let mut parts: Vec<String> = vec!["It was shown that ".to_string()];
            let mut names = Vec::new();
            for e in 0..n_entities {
                if e > 0 {
                    parts.push(match rng.gen_range(0..3) {
                        0 => " binds ".to_string(),
                        1 => " regulates ".to_string(),
                        _ => " and ".to_string(),
                    });
                }
                let name = format!("P{}{}", rng.gen_range(0..50), ["", "x", "-2", "*"][rng.gen_range(0..4)]);
                parts.push(format!("\u{1}{name}\u{1}"));
                names.push(name);
            }
            parts.push(" here.".to_string());

            let joined = parts.concat();
            let mut text = String::new();
            let mut entities = Vec::new();
            for (i, piece) in joined.split('\u{1}').enumerate() {
                if i % 2 == 1 {
                    let start = text.chars().count();
                    text.push_str(piece);
                    entities.push(EntityMention {
                        id: format!("e{}", entities.len()),
                        surface: piece.to_string(),
                        char_start: start,
                        char_end: text.chars().count(),
                    });
                } else {
                    text.push_str(piece);
                }
            }

            let mut pairs = Vec::new();
            for a in 0..entities.len() {
                for b in (a + 1)..entities.len() {
                    if rng.gen_bool(0.5) {
                        pairs.push(LabeledPair {
                            e1: format!("e{a}"),
                            e2: format!("e{b}"),
                            positive: rng.gen_bool(0.5),
                        });
                    }
                }
            }
            sentences.push(Sentence {
                sentence_id: format!("{doc_id}.s{s}"),
                text,
                entities,
                pairs,
            });
        }
        documents.push(Document { doc_id, sentences });
    }
    Corpus { documents }
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------------
// Independent re-derivation of the replay decision streams. This mirrors
// the documented keying (sha256 over seed/purpose/sentence_id/ordinal
// into ChaCha8) without calling the implementation under test.
// ---------------------------------------------------------------------

pub fn oracle_rng(seed: u64, purpose: &str, sentence_id: &str, ordinal: u64) -> ChaCha8Rng {
    use sha2::{Digest, Sha256};
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

pub fn oracle_hit(seed: u64, purpose: &str, sentence_id: &str, ordinal: u64, p: f64) -> bool {
    p > 0.0 && oracle_rng(seed, purpose, sentence_id, ordinal).gen::<f64>() < p
}

/// Golden degraded-response case with hand-annotated expectations.
pub struct GoldenCase {
    pub name: &'static str,
    pub input: &'static str,
    pub recovered: usize,
    pub dropped: usize,
    pub done_seen: bool,
}

/// Figure-style extraction body: header, eight records, sentinel.
pub const REFERENCE_BODY: &str = "Sentence ID,Protein 1,Protein 2,Interaction Type\nLLL.d8.s0,KatX,EsigmaF,depends on\nLLL.d8.s2,sigmaB,sigmaF,overlap\nLLL.d8.s3,katX,sigmaB,dependent\nLLL.d10.s0,rocG,SigL,transcribed by\nLLL.d10.s0,rocG,RocR,requires for its expression\nLLL.d11.s0,phrC,sigmaH,controlling transcription\nLLL.d30.s0,sigma(X),sigma(A),recognize\nLLL.d38.s0,sigB,gsiB,member of\nDone";

pub fn golden_extraction_cases() -> Vec<GoldenCase> {
    vec![
        GoldenCase {
            name: "reference body",
            input: REFERENCE_BODY,
            recovered: 8,
            dropped: 0,
            done_seen: true,
        },
        GoldenCase {
            name: "code fences around body",
            input: "```csv\na.s0,X,Y,binds\nb.s0,P,Q,inhibits\nDone\n```",
            recovered: 2,
            dropped: 0,
            done_seen: true,
        },
        GoldenCase {
            name: "leading prose",
            input: "Here are the extracted interactions\na.s0,X,Y,binds\nDone",
            recovered: 1,
            dropped: 0,
            done_seen: true,
        },
        GoldenCase {
            name: "trailing prose after sentinel",
            input: "a.s0,X,Y,binds\nDone\nLet me know if you need anything else!",
            recovered: 1,
            dropped: 0,
            done_seen: true,
        },
        GoldenCase {
            name: "missing done",
            input: "a.s0,X,Y,binds\nb.s0,P,Q,inhibits",
            recovered: 2,
            dropped: 0,
            done_seen: false,
        },
        GoldenCase {
            name: "five-field row dropped",
            input: "a.s0,X,Y,binds,extra\nb.s0,P,Q,inhibits\nDone",
            recovered: 1,
            dropped: 1,
            done_seen: true,
        },
        GoldenCase {
            name: "three-field row dropped",
            input: "a.s0,X,binds\nDone",
            recovered: 0,
            dropped: 1,
            done_seen: true,
        },
        GoldenCase {
            name: "blank field dropped",
            input: "a.s0,,Y,binds\nDone",
            recovered: 0,
            dropped: 1,
            done_seen: true,
        },
        GoldenCase {
            name: "rows after done ignored",
            input: "a.s0,X,Y,binds\nDone\nb.s0,P,Q,inhibits\nc.s0,R,S,binds",
            recovered: 1,
            dropped: 0,
            done_seen: true,
        },
        GoldenCase {
            name: "repeated header mid-stream",
            input: "Sentence ID,Protein 1,Protein 2,Interaction Type\na.s0,X,Y,binds\nSentence ID,Protein 1,Protein 2,Interaction Type\nb.s0,P,Q,binds\nDone",
            recovered: 2,
            dropped: 0,
            done_seen: true,
        },
        GoldenCase {
            name: "quoted comma in name",
            input: "a.s0,\"p40, beta\",Y,binds\nDone",
            recovered: 1,
            dropped: 0,
            done_seen: true,
        },
        GoldenCase {
            name: "unbalanced quote dropped",
            input: "a.s0,\"p40,Y,binds\nDone",
            recovered: 0,
            dropped: 1,
            done_seen: true,
        },
        GoldenCase {
            name: "empty response",
            input: "",
            recovered: 0,
            dropped: 0,
            done_seen: false,
        },
        GoldenCase {
            name: "whitespace only",
            input: "\n   \n\t\n",
            recovered: 0,
            dropped: 0,
            done_seen: false,
        },
        GoldenCase {
            name: "prose only",
            input: "I could not find any protein interactions in these sentences.",
            recovered: 0,
            dropped: 0,
            done_seen: false,
        },
        GoldenCase {
            name: "done with trailing period",
            input: "a.s0,X,Y,binds\nDone.",
            recovered: 1,
            dropped: 0,
            done_seen: true,
        },
        GoldenCase {
            name: "lowercase done",
            input: "a.s0,X,Y,binds\ndone",
            recovered: 1,
            dropped: 0,
            done_seen: true,
        },
        GoldenCase {
            name: "fence with language tag and prose",
            input: "Sure! Output below.\n```\nSentence ID,Protein 1,Protein 2,Interaction Type\na.s0,X,Y,binds\n```\nDone",
            recovered: 1,
            dropped: 0,
            done_seen: true,
        },
        GoldenCase {
            name: "blank lines interleaved",
            input: "\na.s0,X,Y,binds\n\nb.s0,P,Q,inhibits\n\nDone\n",
            recovered: 2,
            dropped: 0,
            done_seen: true,
        },
        GoldenCase {
            name: "comma prose dropped by arity",
            input: "Sure, here are the results\na.s0,X,Y,binds\nDone",
            recovered: 1,
            dropped: 1,
            done_seen: true,
        },
        GoldenCase {
            name: "whitespace padded fields recover",
            input: "  a.s0 ,  X ,Y ,  binds\nDone",
            recovered: 1,
            dropped: 0,
            done_seen: true,
        },
        GoldenCase {
            name: "duplicate rows preserved at parse time",
            input: "a.s0,X,Y,binds\na.s0,X,Y,binds\nDone",
            recovered: 2,
            dropped: 0,
            done_seen: true,
        },
    ]
}
