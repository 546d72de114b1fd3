//! Triple and description ingestion, vocabularies, sampling statistics,
//! relation categories and the filtered-evaluation index.

mod descriptions;
mod filter;
mod stats;
mod synthetic;
mod triples;
mod vocab;

use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};

pub use descriptions::{
    load_descriptions, parse_descriptions, tokenize, Coverage, DescriptionTable, DEFAULT_MAX_LEN,
    DEFAULT_MIN_WORD_FREQ, UNK_ID, UNK_WORD,
};
pub use filter::FilterIndex;
pub use stats::{categorize_relations, BernoulliStats, RelationCategory, RelationStats, CATEGORY_THRESHOLD};
pub use synthetic::{synthetic_dataset, SyntheticSpec};
pub use triples::{load_triples, parse_triples, Triple, VocabMode};
pub use vocab::{EntityId, RelationId, Vocab, WordId};

use crate::error::{Error, Result};
use crate::io::write_atomic;

pub const BUNDLE_VERSION: u32 = 1;

/// Input files and tokenizer settings for [`Dataset::prepare`].
#[derive(Debug, Clone)]
pub struct PrepareOptions {
    pub train: PathBuf,
    pub valid: PathBuf,
    pub test: PathBuf,
    pub descriptions: Option<PathBuf>,
    pub max_len: usize,
    pub min_word_freq: usize,
    /// Reject entities or relations in valid/test that never occur in train.
    pub strict_vocab: bool,
}

impl PrepareOptions {
    pub fn new(train: impl Into<PathBuf>, valid: impl Into<PathBuf>, test: impl Into<PathBuf>) -> Self {
        PrepareOptions {
            train: train.into(),
            valid: valid.into(),
            test: test.into(),
            descriptions: None,
            max_len: DEFAULT_MAX_LEN,
            min_word_freq: DEFAULT_MIN_WORD_FREQ,
            strict_vocab: false,
        }
    }
}

/// A fully ingested dataset. Immutable after construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    pub format_version: u32,
    pub entities: Vocab,
    pub relations: Vocab,
    pub words: Vocab,
    pub train: Vec<Triple>,
    pub valid: Vec<Triple>,
    pub test: Vec<Triple>,
    pub descriptions: DescriptionTable,
    pub stats: BernoulliStats,
    pub categories: Vec<Option<RelationCategory>>,
    #[serde(skip)]
    filter: FilterIndex,
}

impl Dataset {
    /// Assembles a dataset from already-indexed parts and derives the
    /// statistics, categories and filter index.
    pub fn from_parts(
        entities: Vocab,
        relations: Vocab,
        words: Vocab,
        train: Vec<Triple>,
        valid: Vec<Triple>,
        test: Vec<Triple>,
        descriptions: DescriptionTable,
    ) -> Result<Self> {
        if descriptions.len() != entities.len() {
            return Err(Error::Mismatch(format!(
                "{} descriptions for {} entities",
                descriptions.len(),
                entities.len()
            )));
        }
        let stats = BernoulliStats::compute(&train, relations.len());
        let categories = categorize_relations(&stats);
        let mut ds = Dataset {
            format_version: BUNDLE_VERSION,
            entities,
            relations,
            words,
            train,
            valid,
            test,
            descriptions,
            stats,
            categories,
            filter: FilterIndex::default(),
        };
        ds.validate()?;
        ds.rebuild_filter();
        Ok(ds)
    }

    pub fn prepare(opts: &PrepareOptions) -> Result<Self> {
        let mut entities = Vocab::new();
        let mut relations = Vocab::new();
        let train = load_triples(&opts.train, &mut entities, &mut relations, VocabMode::Extend)?;
        let mode = if opts.strict_vocab { VocabMode::Frozen } else { VocabMode::Extend };
        let (n_ent, n_rel) = (entities.len(), relations.len());
        let valid = load_triples(&opts.valid, &mut entities, &mut relations, mode)?;
        let test = load_triples(&opts.test, &mut entities, &mut relations, mode)?;
        if entities.len() != n_ent || relations.len() != n_rel {
            warn!(
                "valid/test introduced {} entities and {} relations absent from train",
                entities.len() - n_ent,
                relations.len() - n_rel
            );
        }
        let (descriptions, words) = match &opts.descriptions {
            Some(p) if p.exists() => load_descriptions(p, &entities, opts.max_len, opts.min_word_freq)?,
            Some(p) => {
                warn!("description file {} not found; every entity is structure-only", p.display());
                (DescriptionTable::without_text(entities.len()), Vocab::from(vec![UNK_WORD.to_owned()]))
            }
            None => {
                warn!("no description file given; every entity is structure-only");
                (DescriptionTable::without_text(entities.len()), Vocab::from(vec![UNK_WORD.to_owned()]))
            }
        };
        let ds = Dataset::from_parts(entities, relations, words, train, valid, test, descriptions)?;
        info!(
            "prepared {} entities, {} relations, {} words; train/valid/test = {}/{}/{}",
            ds.entities.len(),
            ds.relations.len(),
            ds.words.len(),
            ds.train.len(),
            ds.valid.len(),
            ds.test.len()
        );
        Ok(ds)
    }

    fn validate(&self) -> Result<()> {
        let (ne, nr) = (self.entities.len() as u32, self.relations.len() as u32);
        for t in self.train.iter().chain(&self.valid).chain(&self.test) {
            if t.head.0 >= ne || t.tail.0 >= ne || t.relation.0 >= nr {
                return Err(Error::Mismatch(format!("triple {t:?} out of vocabulary range")));
            }
        }
        let nw = self.words.len();
        for (e, seq) in self.descriptions.iter() {
            if let Some(w) = seq.iter().find(|w| w.index() >= nw) {
                return Err(Error::Mismatch(format!("entity {e} uses word {w} beyond vocabulary")));
            }
        }
        Ok(())
    }

    fn rebuild_filter(&mut self) {
        self.filter = FilterIndex::build([&self.train[..], &self.valid[..], &self.test[..]]);
    }

    /// Every triple across train, valid and test.
    pub fn filter(&self) -> &FilterIndex {
        &self.filter
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn relation_count(&self) -> usize {
        self.relations.len()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut bytes = serde_json::to_vec(self)?;
        bytes.push(b'\n');
        Ok(bytes)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        let mut ds: Dataset = serde_json::from_slice(&bytes)?;
        if ds.format_version != BUNDLE_VERSION {
            return Err(Error::Mismatch(format!(
                "bundle format version {} (expected {BUNDLE_VERSION})",
                ds.format_version
            )));
        }
        ds.validate()?;
        ds.rebuild_filter();
        Ok(ds)
    }

    /// Number of training triples each entity takes part in (as head or tail).
    pub fn entity_frequencies(&self) -> Vec<usize> {
        let mut freq = vec![0usize; self.entities.len()];
        for t in &self.train {
            freq[t.head.index()] += 1;
            freq[t.tail.index()] += 1;
        }
        freq
    }
}
