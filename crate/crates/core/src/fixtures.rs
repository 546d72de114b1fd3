//! Small hand-built datasets shared by unit tests.

use std::sync::Arc;

use crate::dataset::{Dataset, DescriptionTable, Triple, Vocab, WordId};

fn vocab(prefix: &str, n: usize) -> Vocab {
    Vocab::from((0..n).map(|i| format!("{prefix}{i}")).collect::<Vec<_>>())
}

/// Six entities, three relations, seven words. Entity 5 has no text.
pub(crate) fn toy_dataset() -> Arc<Dataset> {
    toy_with_text(false)
}

/// As [`toy_dataset`] but every entity has a description.
pub(crate) fn toy_dataset_all_text() -> Arc<Dataset> {
    toy_with_text(true)
}

fn toy_with_text(all_text: bool) -> Arc<Dataset> {
    let t = |h: u32, r: u32, tl: u32| Triple::new(h as usize, r as usize, tl as usize);
    let train = vec![
        t(0, 0, 1),
        t(1, 0, 2),
        t(2, 1, 3),
        t(3, 1, 4),
        t(4, 2, 5),
        t(0, 2, 3),
        t(5, 0, 1),
        t(1, 1, 4),
    ];
    let valid = vec![t(0, 1, 4)];
    let test = vec![t(2, 0, 3), t(5, 2, 0)];
    let w = |ids: &[u32]| ids.iter().map(|&i| WordId(i)).collect::<Vec<_>>();
    let descriptions = DescriptionTable::from_sequences(vec![
        w(&[1, 2, 3]),
        w(&[2, 4]),
        w(&[5, 1, 1, 6]),
        w(&[3]),
        w(&[6, 2, 0, 4]),
        if all_text { w(&[3, 5]) } else { Vec::new() },
    ]);
    Arc::new(
        Dataset::from_parts(vocab("e", 6), vocab("r", 3), vocab("w", 7), train, valid, test, descriptions)
            .expect("toy dataset is consistent"),
    )
}

/// Random graph with distinct triples split 80/10/10, and random
/// descriptions of up to five tokens over `words` words when `words > 0`.
pub(crate) fn random_dataset(entities: usize, relations: usize, triples: usize, words: usize, seed: u64) -> Arc<Dataset> {
    let spec = crate::dataset::SyntheticSpec {
        entities,
        relations,
        triples,
        words,
        max_len: 5,
    };
    Arc::new(crate::dataset::synthetic_dataset(spec, seed).expect("valid synthetic spec"))
}

/// Entities on a ring; relation `k` links `e` to `e + k + 1`. Every tenth
/// triple goes to validation and the following one to test.
pub(crate) fn ring_dataset(entities: usize, relations: usize) -> Arc<Dataset> {
    let (mut train, mut valid, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for r in 0..relations {
        for e in 0..entities {
            let t = Triple::new(e, r, (e + r + 1) % entities);
            match (r * entities + e) % 10 {
                0 => valid.push(t),
                5 => test.push(t),
                _ => train.push(t),
            }
        }
    }
    Arc::new(
        Dataset::from_parts(
            vocab("e", entities),
            vocab("r", relations),
            vocab("w", 1),
            train,
            valid,
            test,
            DescriptionTable::without_text(entities),
        )
        .expect("ring dataset is consistent"),
    )
}
