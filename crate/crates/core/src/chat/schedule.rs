//! Randomized work schedules: the full cross product of runs, fold
//! chunks, models, settings and temperatures, shuffled with a seeded RNG.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::prompt::PromptSetting;

/// Identifies one prompt-sized unit of work inside a dataset: a fold and
/// the chunk sequence number within that fold.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ChunkKey {
    pub dataset: String,
    pub fold: usize,
    pub seq: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkItem {
    pub run: u32,
    pub chunk: ChunkKey,
    pub model: String,
    pub setting: PromptSetting,
    pub temperature: f64,
}

impl WorkItem {
    /// Stable file-system-safe identifier, unique within a schedule.
    pub fn item_id(&self) -> String {
        let temp = format!("{}", self.temperature).replace('.', "p");
        let sanitize = |s: &str| {
            s.chars()
                .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
                .collect::<String>()
        };
        format!(
            "r{:02}_{}_f{}c{}_{}_{}_t{}",
            self.run,
            sanitize(&self.chunk.dataset),
            self.chunk.fold,
            self.chunk.seq,
            sanitize(&self.model),
            self.setting.slug(),
            temp
        )
    }
}

/// Full cross product of the inputs, one item per combination, shuffled
/// deterministically by `seed`.
pub fn build_schedule(
    chunks: &[ChunkKey],
    models: &[String],
    settings: &[PromptSetting],
    temperatures: &[f64],
    runs: u32,
    seed: u64,
) -> Vec<WorkItem> {
    let mut items = Vec::new();
    for run in 1..=runs {
        for setting in settings {
            for chunk in chunks {
                for model in models {
                    for &temperature in temperatures {
                        items.push(WorkItem {
                            run,
                            chunk: chunk.clone(),
                            model: model.clone(),
                            setting: *setting,
                            temperature,
                        });
                    }
                }
            }
        }
    }
    shuffle_items(items, seed)
}

/// Seeded shuffle of an already-built item list (used when chunk lists
/// differ per setting).
pub fn shuffle_items(mut items: Vec<WorkItem>, seed: u64) -> Vec<WorkItem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    items.shuffle(&mut rng);
    items
}
