use std::collections::{HashMap, HashSet};

use super::triples::Triple;
use super::vocab::{EntityId, RelationId};

/// Set of every known triple, with side indexes for filtered ranking.
#[derive(Debug, Clone, Default)]
pub struct FilterIndex {
    known: HashSet<Triple>,
    tails: HashMap<(EntityId, RelationId), Vec<EntityId>>,
    heads: HashMap<(RelationId, EntityId), Vec<EntityId>>,
    relations: HashMap<(EntityId, EntityId), Vec<RelationId>>,
}

impl FilterIndex {
    pub fn build<'a>(splits: impl IntoIterator<Item = &'a [Triple]>) -> Self {
        let mut index = FilterIndex::default();
        for split in splits {
            for &t in split {
                if index.known.insert(t) {
                    index.tails.entry((t.head, t.relation)).or_default().push(t.tail);
                    index.heads.entry((t.relation, t.tail)).or_default().push(t.head);
                    index.relations.entry((t.head, t.tail)).or_default().push(t.relation);
                }
            }
        }
        index
    }

    pub fn contains(&self, t: &Triple) -> bool {
        self.known.contains(t)
    }

    pub fn len(&self) -> usize {
        self.known.len()
    }

    pub fn is_empty(&self) -> bool {
        self.known.is_empty()
    }

    /// Known tails for `(head, relation, ?)`.
    pub fn tails(&self, head: EntityId, relation: RelationId) -> &[EntityId] {
        self.tails.get(&(head, relation)).map_or(&[], Vec::as_slice)
    }

    /// Known heads for `(?, relation, tail)`.
    pub fn heads(&self, relation: RelationId, tail: EntityId) -> &[EntityId] {
        self.heads.get(&(relation, tail)).map_or(&[], Vec::as_slice)
    }

    /// Known relations for `(head, ?, tail)`.
    pub fn relations(&self, head: EntityId, tail: EntityId) -> &[RelationId] {
        self.relations.get(&(head, tail)).map_or(&[], Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Triple> {
        self.known.iter()
    }
}
