use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::triples::Triple;
use super::vocab::RelationId;

/// Cutoff on tails-per-head / heads-per-tail above which a side counts as "many".
pub const CATEGORY_THRESHOLD: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelationStats {
    pub count: usize,
    /// Mean number of tails per distinct head.
    pub tph: f64,
    /// Mean number of heads per distinct tail.
    pub hpt: f64,
}

impl RelationStats {
    /// Probability of corrupting the head under Bernoulli sampling.
    pub fn head_probability(&self) -> f64 {
        self.tph / (self.tph + self.hpt)
    }
}

/// Per-relation cardinality statistics over the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BernoulliStats {
    per_relation: Vec<Option<RelationStats>>,
}

impl BernoulliStats {
    pub fn compute(train: &[Triple], relation_count: usize) -> Self {
        let mut counts = vec![0usize; relation_count];
        let mut heads: Vec<HashSet<u32>> = vec![HashSet::new(); relation_count];
        let mut tails: Vec<HashSet<u32>> = vec![HashSet::new(); relation_count];
        for t in train {
            let r = t.relation.index();
            counts[r] += 1;
            heads[r].insert(t.head.0);
            tails[r].insert(t.tail.0);
        }
        let per_relation = (0..relation_count)
            .map(|r| {
                (counts[r] > 0).then(|| RelationStats {
                    count: counts[r],
                    tph: counts[r] as f64 / heads[r].len() as f64,
                    hpt: counts[r] as f64 / tails[r].len() as f64,
                })
            })
            .collect();
        BernoulliStats { per_relation }
    }

    pub fn get(&self, r: RelationId) -> Option<&RelationStats> {
        self.per_relation.get(r.index()).and_then(Option::as_ref)
    }

    pub fn relation_count(&self) -> usize {
        self.per_relation.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RelationCategory {
    OneToOne,
    OneToMany,
    ManyToOne,
    ManyToMany,
}

impl RelationCategory {
    pub const ALL: [RelationCategory; 4] = [
        RelationCategory::OneToOne,
        RelationCategory::OneToMany,
        RelationCategory::ManyToOne,
        RelationCategory::ManyToMany,
    ];

    pub fn from_stats(stats: &RelationStats) -> Self {
        let many_tails = stats.tph > CATEGORY_THRESHOLD;
        let many_heads = stats.hpt > CATEGORY_THRESHOLD;
        match (many_heads, many_tails) {
            (false, false) => RelationCategory::OneToOne,
            (false, true) => RelationCategory::OneToMany,
            (true, false) => RelationCategory::ManyToOne,
            (true, true) => RelationCategory::ManyToMany,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            RelationCategory::OneToOne => "1-to-1",
            RelationCategory::OneToMany => "1-to-N",
            RelationCategory::ManyToOne => "N-to-1",
            RelationCategory::ManyToMany => "N-to-N",
        }
    }
}

/// Category of every relation; `None` for relations absent from training.
pub fn categorize_relations(stats: &BernoulliStats) -> Vec<Option<RelationCategory>> {
    stats
        .per_relation
        .iter()
        .map(|s| s.as_ref().map(RelationCategory::from_stats))
        .collect()
}
