use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Dataset, DescriptionTable, Triple, Vocab, WordId};
use crate::error::{Error, Result};

/// Shape of a randomly generated graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyntheticSpec {
    pub entities: usize,
    pub relations: usize,
    /// Distinct triples, split 80/10/10 into train/valid/test.
    pub triples: usize,
    /// Description vocabulary; zero leaves every entity structure-only.
    pub words: usize,
    /// Longest description (at least one token each).
    pub max_len: usize,
}

fn names(prefix: &str, n: usize) -> Vocab {
    Vocab::from((0..n).map(|i| format!("{prefix}{i}")).collect::<Vec<_>>())
}

/// A seeded random dataset, for smoke runs and tests.
pub fn synthetic_dataset(spec: SyntheticSpec, seed: u64) -> Result<Dataset> {
    let capacity = spec.entities * spec.entities * spec.relations;
    if spec.triples > capacity || spec.entities == 0 || spec.relations == 0 {
        return Err(Error::Config(format!(
            "cannot draw {} distinct triples over {} entities and {} relations",
            spec.triples, spec.entities, spec.relations
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::new();
    let mut all = Vec::with_capacity(spec.triples);
    while all.len() < spec.triples {
        let t = Triple::new(
            rng.gen_range(0..spec.entities),
            rng.gen_range(0..spec.relations),
            rng.gen_range(0..spec.entities),
        );
        if seen.insert(t) {
            all.push(t);
        }
    }
    let held_out = spec.triples / 10;
    let test = all.split_off(spec.triples - held_out);
    let valid = all.split_off(all.len() - held_out);
    let descriptions = if spec.words > 0 {
        DescriptionTable::from_sequences(
            (0..spec.entities)
                .map(|_| {
                    (0..rng.gen_range(1..=spec.max_len.max(1)))
                        .map(|_| WordId(rng.gen_range(0..spec.words as u32)))
                        .collect()
                })
                .collect(),
        )
    } else {
        DescriptionTable::without_text(spec.entities)
    };
    Dataset::from_parts(
        names("e", spec.entities),
        names("r", spec.relations),
        names("w", spec.words.max(1)),
        all,
        valid,
        test,
        descriptions,
    )
}
