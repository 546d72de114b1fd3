use rand::Rng;
use rayon::prelude::*;

use crate::dataset::{EntityId, FilterIndex, RelationId, Triple};
use crate::error::{Error, Result};
use crate::model::JointModel;
use crate::scalar::Scalar;

/// Random corruption attempts before falling back to an exhaustive scan.
const RANDOM_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabeledTriple {
    pub triple: Triple,
    pub positive: bool,
}

/// Each positive followed by one negative made by replacing its head or tail
/// (chosen uniformly) with a uniformly drawn entity, such that the result is
/// not a known triple.
pub fn make_classification_negatives<R: Rng + ?Sized>(
    triples: &[Triple],
    filter: &FilterIndex,
    entity_count: usize,
    rng: &mut R,
) -> Result<Vec<LabeledTriple>> {
    let mut out = Vec::with_capacity(2 * triples.len());
    for &t in triples {
        out.push(LabeledTriple { triple: t, positive: true });
        let neg = corrupt(t, filter, entity_count, rng).ok_or_else(|| {
            Error::Config(format!("no unknown corruption exists for triple {:?}", <[u32; 3]>::from(t)))
        })?;
        out.push(LabeledTriple {
            triple: neg,
            positive: false,
        });
    }
    Ok(out)
}

fn corrupt<R: Rng + ?Sized>(t: Triple, filter: &FilterIndex, n: usize, rng: &mut R) -> Option<Triple> {
    let replace = |head: bool, e: usize| {
        let e = EntityId(e as u32);
        if head {
            Triple { head: e, ..t }
        } else {
            Triple { tail: e, ..t }
        }
    };
    for _ in 0..RANDOM_ATTEMPTS {
        let cand = replace(rng.gen_bool(0.5), rng.gen_range(0..n));
        if !filter.contains(&cand) {
            return Some(cand);
        }
    }
    let pool: Vec<Triple> = (0..n)
        .flat_map(|e| [replace(true, e), replace(false, e)])
        .filter(|c| !filter.contains(c))
        .collect();
    (!pool.is_empty()).then(|| pool[rng.gen_range(0..pool.len())])
}

/// A scored, labelled triple.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredExample {
    pub relation: RelationId,
    pub score: f64,
    pub positive: bool,
}

pub fn score_labeled<T: Scalar>(model: &JointModel<T>, set: &[LabeledTriple]) -> Vec<ScoredExample> {
    set.par_iter()
        .map(|l| ScoredExample {
            relation: l.triple.relation,
            score: model.score_joint(l.triple).to_f64_lossless(),
            positive: l.positive,
        })
        .collect()
}

/// Per-relation decision thresholds: positive iff `score > δ_r`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierThresholds {
    pub per_relation: Vec<Option<f64>>,
    /// Used for relations without validation examples.
    pub global: f64,
}

impl ClassifierThresholds {
    pub fn threshold(&self, r: RelationId) -> f64 {
        self.per_relation.get(r.index()).copied().flatten().unwrap_or(self.global)
    }
}

/// Accuracy-maximising threshold over `(score, positive)` pairs and the number
/// of correct decisions it yields.
///
/// Candidates are the midpoints between adjacent distinct scores and the
/// largest score (everything negative); the smallest best candidate wins.
/// `−∞` (everything positive) is chosen only when strictly better than all of
/// them.
pub fn fit_threshold(samples: &[(f64, bool)]) -> (f64, usize) {
    let mut sorted: Vec<(f64, bool)> = samples.iter().copied().filter(|s| !s.0.is_nan()).collect();
    if sorted.is_empty() {
        return (0.0, 0);
    }
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total_pos = sorted.iter().filter(|s| s.1).count();
    // Threshold below everything: every positive correct.
    let all_positive = total_pos;
    let mut best: Option<(f64, usize)> = None;
    // Correct decisions when the threshold sits just above sorted[..=i].
    let (mut neg_below, mut pos_below) = (0, 0);
    let mut i = 0;
    while i < sorted.len() {
        let v = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == v {
            if sorted[i].1 {
                pos_below += 1;
            } else {
                neg_below += 1;
            }
            i += 1;
        }
        let delta = if i < sorted.len() { v + (sorted[i].0 - v) / 2.0 } else { v };
        let correct = neg_below + (total_pos - pos_below);
        if best.is_none_or(|(_, c)| correct > c) {
            best = Some((delta, correct));
        }
    }
    let (delta, correct) = best.expect("non-empty");
    if all_positive > correct {
        (f64::NEG_INFINITY, all_positive)
    } else {
        (delta, correct)
    }
}

/// Fits one threshold per relation and a global fallback.
pub fn fit_thresholds(examples: &[ScoredExample], relation_count: usize) -> ClassifierThresholds {
    let mut by_rel: Vec<Vec<(f64, bool)>> = vec![Vec::new(); relation_count];
    for ex in examples {
        by_rel[ex.relation.index()].push((ex.score, ex.positive));
    }
    let all: Vec<(f64, bool)> = examples.iter().map(|e| (e.score, e.positive)).collect();
    ClassifierThresholds {
        per_relation: by_rel
            .iter()
            .map(|s| (!s.is_empty()).then(|| fit_threshold(s).0))
            .collect(),
        global: fit_threshold(&all).0,
    }
}

pub fn find_thresholds<T: Scalar>(model: &JointModel<T>, valid: &[LabeledTriple]) -> ClassifierThresholds {
    fit_thresholds(&score_labeled(model, valid), model.dataset().relation_count())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassificationReport {
    pub correct: usize,
    pub total: usize,
}

impl ClassificationReport {
    /// Percentage in `[0, 100]`.
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            f64::NAN
        } else {
            100.0 * self.correct as f64 / self.total as f64
        }
    }
}

pub fn accuracy_of(examples: &[ScoredExample], thresholds: &ClassifierThresholds) -> ClassificationReport {
    let correct = examples
        .iter()
        .filter(|e| (e.score > thresholds.threshold(e.relation)) == e.positive)
        .count();
    ClassificationReport {
        correct,
        total: examples.len(),
    }
}

pub fn classify<T: Scalar>(
    model: &JointModel<T>,
    test: &[LabeledTriple],
    thresholds: &ClassifierThresholds,
) -> ClassificationReport {
    accuracy_of(&score_labeled(model, test), thresholds)
}
