use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::dataset::{FilterIndex, RelationCategory, RelationId, Triple};
use crate::model::{GateMode, JointModel, ModelLayout};
use crate::diffmath::ParameterStore;
use crate::scalar::Scalar;

/// Cutoff for entity Hits@k.
pub const ENTITY_HITS_AT: usize = 10;
/// Cutoff for relation Hits@k.
pub const RELATION_HITS_AT: usize = 1;

/// Which entity of a triple is hidden and predicted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Head,
    Tail,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Head, Side::Tail];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Side::Head => "head",
            Side::Tail => "tail",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankResult {
    pub triple: Triple,
    pub side: Side,
    pub raw: usize,
    pub filtered: usize,
}

/// Raw and filtered rank of `scores[target]`. Candidates scoring equal to the
/// target count as ahead of it, as does anything compared against a NaN.
/// `known(i)` marks candidates excluded under filtering.
pub fn rank_of<T: Scalar>(scores: &[T], target: usize, known: impl Fn(usize) -> bool) -> (usize, usize) {
    let s = scores[target];
    let (mut raw, mut filtered) = (1, 1);
    for (i, &c) in scores.iter().enumerate() {
        if i == target || c < s {
            continue;
        }
        raw += 1;
        if !known(i) {
            filtered += 1;
        }
    }
    (raw, filtered)
}

/// Rank-sum accumulator for one cell of a report.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RankStats {
    pub count: usize,
    pub raw_sum: u64,
    pub filtered_sum: u64,
    pub raw_hits: usize,
    pub filtered_hits: usize,
}

impl RankStats {
    pub fn push(&mut self, raw: usize, filtered: usize, hits_at: usize) {
        self.count += 1;
        self.raw_sum += raw as u64;
        self.filtered_sum += filtered as u64;
        self.raw_hits += usize::from(raw <= hits_at);
        self.filtered_hits += usize::from(filtered <= hits_at);
    }

    pub fn merge(&mut self, other: &RankStats) {
        self.count += other.count;
        self.raw_sum += other.raw_sum;
        self.filtered_sum += other.filtered_sum;
        self.raw_hits += other.raw_hits;
        self.filtered_hits += other.filtered_hits;
    }

    fn ratio(num: u64, den: usize) -> f64 {
        if den == 0 {
            f64::NAN
        } else {
            num as f64 / den as f64
        }
    }

    pub fn mean_rank_raw(&self) -> f64 {
        Self::ratio(self.raw_sum, self.count)
    }

    pub fn mean_rank_filtered(&self) -> f64 {
        Self::ratio(self.filtered_sum, self.count)
    }

    /// Percentage in `[0, 100]`.
    pub fn hits_raw(&self) -> f64 {
        100.0 * Self::ratio(self.raw_hits as u64, self.count)
    }

    pub fn hits_filtered(&self) -> f64 {
        100.0 * Self::ratio(self.filtered_hits as u64, self.count)
    }
}

/// Link-prediction results over a set of test triples.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkPredReport {
    pub overall: RankStats,
    /// Indexed by [`Side::index`].
    pub by_side: [RankStats; 2],
    /// `[category][side]`, indexed by [`RelationCategory::index`].
    pub by_category: [[RankStats; 2]; 4],
    /// Queries whose relation has no category (absent from training).
    pub uncategorized: [RankStats; 2],
    /// Every individual rank, ordered by triple then side.
    pub ranks: Vec<RankResult>,
}

impl LinkPredReport {
    pub fn from_ranks(ranks: Vec<RankResult>, categories: &[Option<RelationCategory>]) -> Self {
        let mut report = LinkPredReport {
            overall: RankStats::default(),
            by_side: Default::default(),
            by_category: Default::default(),
            uncategorized: Default::default(),
            ranks: Vec::new(),
        };
        for r in &ranks {
            let s = r.side.index();
            report.overall.push(r.raw, r.filtered, ENTITY_HITS_AT);
            report.by_side[s].push(r.raw, r.filtered, ENTITY_HITS_AT);
            match categories.get(r.triple.relation.index()).copied().flatten() {
                Some(c) => report.by_category[c.index()][s].push(r.raw, r.filtered, ENTITY_HITS_AT),
                None => report.uncategorized[s].push(r.raw, r.filtered, ENTITY_HITS_AT),
            }
        }
        report.ranks = ranks;
        report
    }
}

fn score_against_table<T: Scalar>(
    layout: &ModelLayout,
    rel: &[T],
    fixed: &[T],
    table: &[T],
    side: Side,
    out: &mut Vec<T>,
) {
    let d = layout.dim();
    out.clear();
    out.extend(table.chunks_exact(d).map(|cand| match side {
        Side::Tail => layout.score_vectors(fixed, rel, cand),
        Side::Head => layout.score_vectors(cand, rel, fixed),
    }));
}

fn rank_with_table<T: Scalar>(
    layout: &ModelLayout,
    store: &ParameterStore<T>,
    filter: &FilterIndex,
    table: &[T],
    triple: Triple,
    side: Side,
    scratch: &mut Vec<T>,
) -> RankResult {
    let d = layout.dim();
    let rel = store.row(layout.relation_slot(), triple.relation.index());
    let (fixed, target, known) = match side {
        Side::Tail => (triple.head, triple.tail, filter.tails(triple.head, triple.relation)),
        Side::Head => (triple.tail, triple.head, filter.heads(triple.relation, triple.tail)),
    };
    let fixed_row = &table[fixed.index() * d..(fixed.index() + 1) * d];
    score_against_table(layout, rel, fixed_row, table, side, scratch);
    let mut is_known = vec![false; scratch.len()];
    for e in known {
        is_known[e.index()] = true;
    }
    let (raw, filtered) = rank_of(scratch, target.index(), |i| is_known[i]);
    RankResult {
        triple,
        side,
        raw,
        filtered,
    }
}

/// Ranks the true entity of `triple` among all entities with the `side`
/// entity hidden.
pub fn rank_entities<T: Scalar>(model: &JointModel<T>, filter: &FilterIndex, triple: Triple, side: Side) -> RankResult {
    let table = model
        .layout()
        .entity_table(model.params(), triple.relation, GateMode::Learned);
    rank_with_table(model.layout(), model.params(), filter, &table, triple, side, &mut Vec::new())
}

/// Both-side ranks of every triple, grouped by relation so that each joint
/// entity table is computed once per relation (or once overall when the
/// encoder ignores the relation).
pub fn rank_all<T: Scalar>(model: &JointModel<T>, filter: &FilterIndex, triples: &[Triple]) -> Vec<RankResult> {
    let layout = model.layout();
    let store = model.params();
    let mut groups: BTreeMap<Option<RelationId>, Vec<usize>> = BTreeMap::new();
    for (i, t) in triples.iter().enumerate() {
        let key = layout.relation_conditioned().then_some(t.relation);
        groups.entry(key).or_default().push(i);
    }
    let mut out: Vec<Option<[RankResult; 2]>> = vec![None; triples.len()];
    for (key, idx) in groups {
        let table = layout.entity_table(store, key.unwrap_or(RelationId(0)), GateMode::Learned);
        let ranked: Vec<(usize, [RankResult; 2])> = idx
            .par_iter()
            .map_init(Vec::new, |scratch, &i| {
                let t = triples[i];
                let head = rank_with_table(layout, store, filter, &table, t, Side::Head, scratch);
                let tail = rank_with_table(layout, store, filter, &table, t, Side::Tail, scratch);
                (i, [head, tail])
            })
            .collect();
        for (i, pair) in ranked {
            out[i] = Some(pair);
        }
    }
    out.into_iter().flat_map(|p| p.expect("every triple ranked")).collect()
}

/// Raw and filtered link prediction over `triples`, both directions.
pub fn link_prediction_eval<T: Scalar>(model: &JointModel<T>, triples: &[Triple]) -> LinkPredReport {
    let ds = model.dataset();
    LinkPredReport::from_ranks(rank_all(model, ds.filter(), triples), &ds.categories)
}

/// Ranks the true relation of `(h, ?, t)` among all relations.
pub fn rank_relations<T: Scalar>(model: &JointModel<T>, filter: &FilterIndex, triple: Triple) -> (usize, usize) {
    let n = model.dataset().relation_count();
    let scores: Vec<T> = (0..n)
        .map(|r| model.score_joint(Triple { relation: RelationId(r as u32), ..triple }))
        .collect();
    let mut known = vec![false; n];
    for r in filter.relations(triple.head, triple.tail) {
        known[r.index()] = true;
    }
    rank_of(&scores, triple.relation.index(), |i| known[i])
}

/// Relation prediction over `triples`, Hits@1.
pub fn relation_prediction_eval<T: Scalar>(model: &JointModel<T>, triples: &[Triple]) -> RankStats {
    let filter = model.dataset().filter();
    triples
        .par_iter()
        .map(|&t| {
            let (raw, filtered) = rank_relations(model, filter, t);
            let mut s = RankStats::default();
            s.push(raw, filtered, RELATION_HITS_AT);
            s
        })
        .reduce(RankStats::default, |mut a, b| {
            a.merge(&b);
            a
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_candidate_ranks_first() {
        assert_eq!(rank_of(&[0.3], 0, |_| false), (1, 1));
    }

    #[test]
    fn ties_count_against_target() {
        assert_eq!(rank_of(&[1.0, 2.0, 2.0, 0.5], 1, |_| false), (2, 2));
    }

    #[test]
    fn known_competitor_is_filtered() {
        let scores = [0.9, 0.5, 0.1];
        assert_eq!(rank_of(&scores, 1, |_| false), (2, 2));
        assert_eq!(rank_of(&scores, 1, |i| i == 0), (2, 1));
    }

    #[test]
    fn nan_target_ranks_last() {
        assert_eq!(rank_of(&[f64::NAN, 1.0, 2.0], 0, |_| false), (3, 3));
    }

    #[test]
    fn perfect_ranks_give_mr_one_and_full_hits() {
        let mut s = RankStats::default();
        for _ in 0..5 {
            s.push(1, 1, ENTITY_HITS_AT);
        }
        assert_eq!((s.mean_rank_raw(), s.hits_filtered()), (1.0, 100.0));
    }

    proptest! {
        #[test]
        fn filtered_never_exceeds_raw(
            scores in proptest::collection::vec(-5.0f64..5.0, 1..30),
            mask in proptest::collection::vec(any::<bool>(), 30),
            target in 0usize..30,
        ) {
            let target = target % scores.len();
            let (raw, filtered) = rank_of(&scores, target, |i| mask[i]);
            prop_assert!(filtered >= 1 && filtered <= raw && raw <= scores.len());
        }
    }
}
