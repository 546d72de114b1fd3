use std::collections::HashSet;

use rand::Rng;

use crate::dataset::{BernoulliStats, EntityId, RelationId, Triple};
use crate::error::{Error, Result};

/// Attempts at drawing a corruption absent from training before the last
/// draw is accepted anyway.
pub const MAX_RESAMPLE: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CorruptedSlot {
    Head,
    Tail,
    Relation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NegativeSample {
    pub triple: Triple,
    pub slot: CorruptedSlot,
}

/// Bernoulli negative sampler with optional relation corruption.
#[derive(Debug, Clone)]
pub struct NegativeSampler<'a> {
    stats: &'a BernoulliStats,
    known: HashSet<Triple>,
    entity_count: usize,
    relation_count: usize,
    p_rel: f64,
}

/// Uniform draw from `0..n` excluding `skip`.
fn other<R: Rng + ?Sized>(rng: &mut R, n: usize, skip: u32) -> u32 {
    let x = rng.gen_range(0..n as u32 - 1);
    if x >= skip {
        x + 1
    } else {
        x
    }
}

impl<'a> NegativeSampler<'a> {
    pub fn new(
        stats: &'a BernoulliStats,
        train: &[Triple],
        entity_count: usize,
        relation_count: usize,
        p_rel: f64,
    ) -> Result<Self> {
        if entity_count < 2 {
            return Err(Error::Config("negative sampling needs at least two entities".into()));
        }
        if !(0.0..=1.0).contains(&p_rel) || (p_rel > 0.0 && relation_count < 2) {
            return Err(Error::Config(format!(
                "relation corruption probability {p_rel} is invalid for {relation_count} relation(s)"
            )));
        }
        Ok(NegativeSampler {
            stats,
            known: train.iter().copied().collect(),
            entity_count,
            relation_count,
            p_rel,
        })
    }

    /// Probability of replacing the head rather than the tail; one half for
    /// relations without statistics.
    pub fn head_probability(&self, r: RelationId) -> f64 {
        self.stats.get(r).map_or(0.5, |s| s.head_probability())
    }

    fn draw<R: Rng + ?Sized>(&self, t: Triple, rng: &mut R) -> NegativeSample {
        if self.p_rel > 0.0 && rng.gen_bool(self.p_rel) {
            let r = other(rng, self.relation_count, t.relation.0);
            return NegativeSample {
                triple: Triple { relation: RelationId(r), ..t },
                slot: CorruptedSlot::Relation,
            };
        }
        if rng.gen_bool(self.head_probability(t.relation)) {
            NegativeSample {
                triple: Triple {
                    head: EntityId(other(rng, self.entity_count, t.head.0)),
                    ..t
                },
                slot: CorruptedSlot::Head,
            }
        } else {
            NegativeSample {
                triple: Triple {
                    tail: EntityId(other(rng, self.entity_count, t.tail.0)),
                    ..t
                },
                slot: CorruptedSlot::Tail,
            }
        }
    }

    /// A corruption of `t` in exactly one slot, redrawn while it is a known
    /// training triple (up to [`MAX_RESAMPLE`] draws).
    pub fn sample<R: Rng + ?Sized>(&self, t: Triple, rng: &mut R) -> NegativeSample {
        let mut neg = self.draw(t, rng);
        for _ in 1..MAX_RESAMPLE {
            if !self.known.contains(&neg.triple) {
                break;
            }
            neg = self.draw(t, rng);
        }
        neg
    }
}
