use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use super::vocab::{EntityId, Vocab, WordId};
use crate::error::{Error, Result};

pub const UNK_WORD: &str = "<unk>";
pub const UNK_ID: WordId = WordId(0);

pub const DEFAULT_MAX_LEN: usize = 128;
pub const DEFAULT_MIN_WORD_FREQ: usize = 2;

/// Where an entity's token sequence came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coverage {
    /// Text taken from the description file.
    Described,
    /// Not in the description file; tokens come from the entity identifier.
    NameFallback,
    /// No usable text. The gate is pinned to one and only the structure
    /// embedding contributes.
    StructureOnly,
}

impl Coverage {
    pub fn has_text(self) -> bool {
        !matches!(self, Coverage::StructureOnly)
    }
}

/// Per-entity word-id sequences.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DescriptionTable {
    coverage: Vec<Coverage>,
    sequences: Vec<Vec<WordId>>,
}

impl DescriptionTable {
    /// Table in which every entity is structure-only.
    pub fn without_text(entity_count: usize) -> Self {
        DescriptionTable {
            coverage: vec![Coverage::StructureOnly; entity_count],
            sequences: vec![Vec::new(); entity_count],
        }
    }

    /// Builds a table directly from sequences; an empty sequence marks the
    /// entity structure-only, any other is treated as described.
    pub fn from_sequences(sequences: Vec<Vec<WordId>>) -> Self {
        let coverage = sequences
            .iter()
            .map(|s| if s.is_empty() { Coverage::StructureOnly } else { Coverage::Described })
            .collect();
        DescriptionTable { coverage, sequences }
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn tokens(&self, entity: EntityId) -> &[WordId] {
        &self.sequences[entity.index()]
    }

    pub fn coverage(&self, entity: EntityId) -> Coverage {
        self.coverage[entity.index()]
    }

    pub fn is_structure_only(&self, entity: EntityId) -> bool {
        !self.coverage[entity.index()].has_text()
    }

    pub fn iter(&self) -> impl Iterator<Item = (EntityId, &[WordId])> {
        self.sequences
            .iter()
            .enumerate()
            .map(|(i, s)| (EntityId::from(i), s.as_slice()))
    }
}

/// Lowercases and splits on whitespace and punctuation. No stemming.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Reads `entity<TAB>free text` lines and builds the description table plus
/// its word vocabulary. Word id 0 is always the unknown-word token.
pub fn parse_descriptions<R: BufRead>(
    reader: R,
    source: &Path,
    entities: &Vocab,
    max_len: usize,
    min_word_freq: usize,
) -> Result<(DescriptionTable, Vocab)> {
    if max_len == 0 || min_word_freq == 0 {
        return Err(Error::Config("max_len and min_word_freq must be positive".into()));
    }
    let mut texts: Vec<Option<Vec<String>>> = vec![None; entities.len()];
    let mut skipped = 0usize;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(format!("reading {}", source.display()), e))?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() {
            continue;
        }
        let Some((name, text)) = line.split_once('\t') else {
            return Err(Error::Parse {
                path: source.to_path_buf(),
                line: lineno + 1,
                message: "expected `entity<TAB>text`".into(),
            });
        };
        let Some(id) = entities.get(name) else {
            skipped += 1;
            continue;
        };
        let slot = &mut texts[id as usize];
        if slot.is_some() {
            warn!("{}:{}: duplicate description for `{name}`; keeping the first", source.display(), lineno + 1);
            continue;
        }
        let mut tokens = tokenize(text);
        tokens.truncate(max_len);
        *slot = Some(tokens);
    }
    if skipped > 0 {
        warn!("{}: skipped {skipped} description(s) for unknown entities", source.display());
    }

    let mut coverage = Vec::with_capacity(entities.len());
    let mut token_lists = Vec::with_capacity(entities.len());
    for (i, text) in texts.into_iter().enumerate() {
        match text {
            Some(tokens) if !tokens.is_empty() => {
                coverage.push(Coverage::Described);
                token_lists.push(tokens);
            }
            _ => {
                let mut tokens = tokenize(entities.name(i as u32));
                tokens.truncate(max_len);
                coverage.push(if tokens.is_empty() {
                    Coverage::StructureOnly
                } else {
                    Coverage::NameFallback
                });
                token_lists.push(tokens);
            }
        }
    }

    let mut freq: HashMap<&str, usize> = HashMap::new();
    for tokens in &token_lists {
        for t in tokens {
            *freq.entry(t.as_str()).or_default() += 1;
        }
    }
    let mut words = Vocab::new();
    words.get_or_insert(UNK_WORD);
    let sequences = token_lists
        .iter()
        .map(|tokens| {
            tokens
                .iter()
                .map(|t| {
                    if freq[t.as_str()] >= min_word_freq {
                        WordId(words.get_or_insert(t))
                    } else {
                        UNK_ID
                    }
                })
                .collect()
        })
        .collect();
    Ok((DescriptionTable { coverage, sequences }, words))
}

pub fn load_descriptions(
    path: &Path,
    entities: &Vocab,
    max_len: usize,
    min_word_freq: usize,
) -> Result<(DescriptionTable, Vocab)> {
    let file = File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    parse_descriptions(BufReader::new(file), path, entities, max_len, min_word_freq)
}
