use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::vocab::{EntityId, RelationId, Vocab};
use crate::error::{Error, Result};

/// A `(head, relation, tail)` fact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "[u32; 3]", into = "[u32; 3]")]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

impl Triple {
    pub fn new(head: impl Into<EntityId>, relation: impl Into<RelationId>, tail: impl Into<EntityId>) -> Self {
        Triple {
            head: head.into(),
            relation: relation.into(),
            tail: tail.into(),
        }
    }
}

impl From<[u32; 3]> for Triple {
    fn from([h, r, t]: [u32; 3]) -> Self {
        Triple {
            head: EntityId(h),
            relation: RelationId(r),
            tail: EntityId(t),
        }
    }
}

impl From<Triple> for [u32; 3] {
    fn from(t: Triple) -> Self {
        [t.head.0, t.relation.0, t.tail.0]
    }
}

/// Whether unseen identifiers may extend the vocabularies while loading.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VocabMode {
    Extend,
    Frozen,
}

/// Parses `head<TAB>relation<TAB>tail` lines. Blank lines are skipped.
///
/// `source` is only used for error messages.
pub fn parse_triples<R: BufRead>(
    reader: R,
    source: &Path,
    entities: &mut Vocab,
    relations: &mut Vocab,
    mode: VocabMode,
) -> Result<Vec<Triple>> {
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(format!("reading {}", source.display()), e))?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: source.to_path_buf(),
            line: lineno + 1,
            message,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 || fields.iter().any(|f| f.is_empty()) {
            return Err(parse_err(format!(
                "expected `head<TAB>relation<TAB>tail`, found {} field(s)",
                fields.len()
            )));
        }
        let (h, r, t) = (fields[0], fields[1], fields[2]);
        let triple = match mode {
            VocabMode::Extend => Triple {
                head: EntityId(entities.get_or_insert(h)),
                relation: RelationId(relations.get_or_insert(r)),
                tail: EntityId(entities.get_or_insert(t)),
            },
            VocabMode::Frozen => {
                let ent = |name: &str| {
                    entities
                        .get(name)
                        .map(EntityId)
                        .ok_or_else(|| parse_err(format!("unknown entity `{name}`")))
                };
                let rel = relations
                    .get(r)
                    .map(RelationId)
                    .ok_or_else(|| parse_err(format!("unknown relation `{r}`")))?;
                Triple {
                    head: ent(h)?,
                    relation: rel,
                    tail: ent(t)?,
                }
            }
        };
        out.push(triple);
    }
    Ok(out)
}

pub fn load_triples(
    path: &Path,
    entities: &mut Vocab,
    relations: &mut Vocab,
    mode: VocabMode,
) -> Result<Vec<Triple>> {
    let file = File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    parse_triples(BufReader::new(file), path, entities, relations, mode)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str, ents: &mut Vocab, rels: &mut Vocab, mode: VocabMode) -> Result<Vec<Triple>> {
        parse_triples(text.as_bytes(), Path::new("mem.txt"), ents, rels, mode)
    }

    #[test]
    fn three_lines_two_entities() {
        let (mut e, mut r) = (Vocab::new(), Vocab::new());
        let ts = parse("a\tlikes\tb\nb\tlikes\ta\na\tknows\tb\n", &mut e, &mut r, VocabMode::Extend).unwrap();
        assert_eq!(ts.len(), 3);
        assert_eq!(e.len(), 2);
        assert_eq!(e.get("a"), Some(0));
        assert_eq!(e.get("b"), Some(1));
        assert_eq!(r.len(), 2);
        assert_eq!(ts[2], Triple::new(0usize, 1usize, 1usize));
    }

    #[test]
    fn empty_input_leaves_vocab_unchanged() {
        let (mut e, mut r) = (Vocab::new(), Vocab::new());
        e.get_or_insert("x");
        let ts = parse("", &mut e, &mut r, VocabMode::Extend).unwrap();
        assert!(ts.is_empty());
        assert_eq!(e.len(), 1);
        assert!(r.is_empty());
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let (mut e, mut r) = (Vocab::new(), Vocab::new());
        let err = parse("a\tr\tb\na r b\n", &mut e, &mut r, VocabMode::Extend).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn frozen_vocab_rejects_unknown_entity() {
        let (mut e, mut r) = (Vocab::new(), Vocab::new());
        parse("a\tr\tb\n", &mut e, &mut r, VocabMode::Extend).unwrap();
        let err = parse("a\tr\tc\n", &mut e, &mut r, VocabMode::Frozen).unwrap_err();
        assert!(err.to_string().contains("unknown entity `c`"), "{err}");
        assert_eq!(e.len(), 2);
    }

    #[test]
    fn crlf_line_endings() {
        let (mut e, mut r) = (Vocab::new(), Vocab::new());
        let ts = parse("a\tr\tb\r\n", &mut e, &mut r, VocabMode::Extend).unwrap();
        assert_eq!(ts.len(), 1);
        assert_eq!(e.get("b"), Some(1));
    }
}
