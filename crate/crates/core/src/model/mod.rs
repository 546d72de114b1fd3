//! Structural embeddings, relation embeddings and per-entity gates combined
//! with a text encoder into joint entity representations and triple scores.

mod config;

pub(crate) use config::parse_num;

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;

pub use config::{Dissimilarity, ModelConfig};

use crate::dataset::{Dataset, EntityId, RelationId, Triple};
use crate::diffmath::ops::{axpy, sign};
use crate::diffmath::{Checkpoint, CheckpointHeader, LrGroup, ParameterStore, Shape, SlotId, CHECKPOINT_VERSION};
use crate::encoders::{EncodingTrace, TextEncoder};
use crate::error::{Error, Result};
use crate::scalar::{sigmoid, Scalar};

pub const ENTITY_SLOT: &str = "entity";
pub const RELATION_SLOT: &str = "relation";
pub const GATE_SLOT: &str = "gate";

/// Range of the uniform initialisation of encoder weights and unlinked words.
pub const INIT_RANGE: f64 = 0.1;

/// How entity gates are applied when forming joint representations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateMode {
    /// `σ(g̃_e)`, or one for structure-only entities.
    Learned,
    /// Every gate pinned to one: the representation is `e_s`.
    StructureOnly,
}

/// Everything about a model except its parameter values: configuration, slot
/// handles, the encoder and the dataset it indexes into.
#[derive(Debug, Clone)]
pub struct ModelLayout {
    config: ModelConfig,
    dataset: Arc<Dataset>,
    entity: SlotId,
    relation: SlotId,
    gate: Option<SlotId>,
    encoder: Option<TextEncoder>,
}

#[derive(Debug, Clone)]
struct TextSide<T> {
    encoding: Vec<T>,
    gate: Vec<T>,
    trace: EncodingTrace<T>,
}

#[derive(Debug, Clone)]
pub struct SideTrace<T> {
    entity: EntityId,
    repr: Vec<T>,
    text: Option<TextSide<T>>,
}

impl<T> SideTrace<T> {
    pub fn repr(&self) -> &[T] {
        &self.repr
    }
}

/// Forward intermediates of one triple score.
#[derive(Debug, Clone)]
pub struct ScoreTrace<T> {
    pub triple: Triple,
    pub score: T,
    pub head: SideTrace<T>,
    pub tail: SideTrace<T>,
    residual: Vec<T>,
}

impl ModelLayout {
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn dataset(&self) -> &Arc<Dataset> {
        &self.dataset
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn entity_slot(&self) -> SlotId {
        self.entity
    }

    pub fn relation_slot(&self) -> SlotId {
        self.relation
    }

    pub fn gate_slot(&self) -> Option<SlotId> {
        self.gate
    }

    pub fn encoder(&self) -> Option<&TextEncoder> {
        self.encoder.as_ref()
    }

    /// Whether entity representations depend on the relation being scored.
    pub fn relation_conditioned(&self) -> bool {
        self.encoder.as_ref().is_some_and(|e| e.uses_relation())
    }

    fn has_text(&self, e: EntityId) -> bool {
        self.encoder.is_some() && !self.dataset.descriptions.is_structure_only(e)
    }

    pub fn dissimilarity<T: Scalar>(&self, h: &[T], r: &[T], t: &[T]) -> T {
        let it = h.iter().zip(r).zip(t).map(|((&a, &b), &c)| a + b - c);
        match self.config.dissimilarity {
            Dissimilarity::L1 => it.map(T::abs).sum(),
            Dissimilarity::SqL2 => it.map(|x| x * x).sum(),
        }
    }

    /// `−D(h + r − t)`
    pub fn score_vectors<T: Scalar>(&self, h: &[T], r: &[T], t: &[T]) -> T {
        -self.dissimilarity(h, r, t)
    }

    /// Effective gate of an entity, `None` for models without text.
    pub fn effective_gate<T: Scalar>(&self, store: &ParameterStore<T>, e: EntityId) -> Option<Vec<T>> {
        let gate = self.gate?;
        Some(if self.has_text(e) {
            store.row(gate, e.index()).iter().map(|&g| sigmoid(g)).collect()
        } else {
            vec![T::one(); self.dim()]
        })
    }

    fn side_forward<T: Scalar>(
        &self,
        store: &ParameterStore<T>,
        e: EntityId,
        rel: &[T],
        mode: GateMode,
        keep_trace: bool,
    ) -> SideTrace<T> {
        let es = store.row(self.entity, e.index());
        let (Some(encoder), true, GateMode::Learned) = (&self.encoder, self.has_text(e), mode) else {
            return SideTrace {
                entity: e,
                repr: es.to_vec(),
                text: None,
            };
        };
        let tokens = self.dataset.descriptions.tokens(e);
        let (encoding, trace) = encoder
            .encode(store, tokens, rel)
            .expect("entities with text have non-empty token sequences");
        let gate_slot = self.gate.expect("text models have gates");
        let gate: Vec<T> = store.row(gate_slot, e.index()).iter().map(|&g| sigmoid(g)).collect();
        let repr = es
            .iter()
            .zip(&encoding)
            .zip(&gate)
            .map(|((&s, &d), &g)| g * s + (T::one() - g) * d)
            .collect();
        SideTrace {
            entity: e,
            repr,
            text: keep_trace.then_some(TextSide { encoding, gate, trace }),
        }
    }

    /// Joint representation `g ⊙ e_s + (1 − g) ⊙ e_d` of `e` in the context of
    /// relation vector `rel`.
    pub fn joint_repr<T: Scalar>(&self, store: &ParameterStore<T>, e: EntityId, rel: &[T], mode: GateMode) -> Vec<T> {
        self.side_forward(store, e, rel, mode, false).repr
    }

    pub fn score_transe<T: Scalar>(&self, store: &ParameterStore<T>, t: Triple) -> T {
        self.score_vectors(
            store.row(self.entity, t.head.index()),
            store.row(self.relation, t.relation.index()),
            store.row(self.entity, t.tail.index()),
        )
    }

    pub fn score<T: Scalar>(&self, store: &ParameterStore<T>, t: Triple, mode: GateMode) -> T {
        let rel = store.row(self.relation, t.relation.index());
        let h = self.joint_repr(store, t.head, rel, mode);
        let tl = self.joint_repr(store, t.tail, rel, mode);
        self.score_vectors(&h, rel, &tl)
    }

    pub fn forward<T: Scalar>(&self, store: &ParameterStore<T>, t: Triple) -> ScoreTrace<T> {
        let rel = store.row(self.relation, t.relation.index());
        let head = self.side_forward(store, t.head, rel, GateMode::Learned, true);
        let tail = self.side_forward(store, t.tail, rel, GateMode::Learned, true);
        let residual: Vec<T> = head
            .repr
            .iter()
            .zip(rel)
            .zip(&tail.repr)
            .map(|((&a, &b), &c)| a + b - c)
            .collect();
        let score = -match self.config.dissimilarity {
            Dissimilarity::L1 => residual.iter().map(|x| x.abs()).sum(),
            Dissimilarity::SqL2 => residual.iter().map(|&x| x * x).sum::<T>(),
        };
        ScoreTrace {
            triple: t,
            score,
            head,
            tail,
            residual,
        }
    }

    /// Accumulates `d_score · ∂score/∂θ` into the store's gradients.
    pub fn backward<T: Scalar>(&self, store: &mut ParameterStore<T>, trace: &ScoreTrace<T>, d_score: T) {
        let d_res: Vec<T> = trace
            .residual
            .iter()
            .map(|&x| match self.config.dissimilarity {
                Dissimilarity::L1 => -d_score * sign(x),
                Dissimilarity::SqL2 => -d_score * T::two() * x,
            })
            .collect();
        let r = trace.triple.relation.index();
        let rel = store.row(self.relation, r).to_vec();
        axpy(T::one(), &d_res, store.grad_row_mut(self.relation, r));
        self.side_backward(store, &trace.head, &rel, r, &d_res);
        let d_tail: Vec<T> = d_res.iter().map(|&x| -x).collect();
        self.side_backward(store, &trace.tail, &rel, r, &d_tail);
    }

    fn side_backward<T: Scalar>(
        &self,
        store: &mut ParameterStore<T>,
        side: &SideTrace<T>,
        rel: &[T],
        r: usize,
        d_repr: &[T],
    ) {
        let e = side.entity.index();
        let Some(text) = &side.text else {
            axpy(T::one(), d_repr, store.grad_row_mut(self.entity, e));
            return;
        };
        let es = store.row(self.entity, e).to_vec();
        let mut d_es = vec![T::zero(); d_repr.len()];
        let mut d_ed = vec![T::zero(); d_repr.len()];
        let mut d_gate = vec![T::zero(); d_repr.len()];
        for k in 0..d_repr.len() {
            let g = text.gate[k];
            d_es[k] = g * d_repr[k];
            d_ed[k] = (T::one() - g) * d_repr[k];
            d_gate[k] = (es[k] - text.encoding[k]) * d_repr[k] * g * (T::one() - g);
        }
        axpy(T::one(), &d_es, store.grad_row_mut(self.entity, e));
        axpy(T::one(), &d_gate, store.grad_row_mut(self.gate.expect("gate slot"), e));
        let encoder = self.encoder.as_ref().expect("encoder");
        let tokens = self.dataset.descriptions.tokens(side.entity);
        let d_rel = encoder.backward(store, tokens, rel, &text.trace, &d_ed);
        if self.relation_conditioned() {
            axpy(T::one(), &d_rel, store.grad_row_mut(self.relation, r));
        }
    }

    /// Joint representations of all entities, row-major `entities × d`.
    /// `relation` conditions the attentive encoder and is otherwise ignored.
    pub fn entity_table<T: Scalar>(&self, store: &ParameterStore<T>, relation: RelationId, mode: GateMode) -> Vec<T> {
        let d = self.dim();
        let rel = store.row(self.relation, relation.index());
        let mut out = vec![T::zero(); self.dataset.entity_count() * d];
        out.par_chunks_mut(d).enumerate().for_each(|(i, row)| {
            row.copy_from_slice(&self.joint_repr(store, EntityId::from(i), rel, mode));
        });
        out
    }
}

/// A model layout together with its parameter values.
#[derive(Debug, Clone)]
pub struct JointModel<T> {
    layout: ModelLayout,
    params: ParameterStore<T>,
}

fn fill_uniform<T: Scalar, R: Rng + ?Sized>(values: &mut [T], bound: f64, rng: &mut R) {
    for v in values {
        *v = T::from_f64_lossy(rng.gen_range(-bound..=bound));
    }
}

impl<T: Scalar> JointModel<T> {
    /// Registers all slots and draws a random initialisation: structure rows
    /// uniform in `±6/√d` then unit-normalised, gates zero, word and encoder
    /// weights uniform in `±0.1`.
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, dataset: Arc<Dataset>, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let d = config.dim;
        let mut params = ParameterStore::new();
        let entity = params.add(ENTITY_SLOT, Shape::Matrix(dataset.entity_count(), d), LrGroup::Structure);
        let relation = params.add(RELATION_SLOT, Shape::Matrix(dataset.relation_count(), d), LrGroup::Structure);
        let (gate, encoder) = match config.encoder {
            Some(kind) => {
                let gate = params.add(GATE_SLOT, Shape::Matrix(dataset.entity_count(), d), LrGroup::Text);
                let enc = TextEncoder::register(&mut params, kind, d, dataset.words.len())?;
                (Some(gate), Some(enc))
            }
            None => (None, None),
        };
        let bound = 6.0 / (d as f64).sqrt();
        fill_uniform(params.value_mut(entity), bound, rng);
        fill_uniform(params.value_mut(relation), bound, rng);
        params.renormalize_rows(entity, 0..dataset.entity_count());
        params.renormalize_rows(relation, 0..dataset.relation_count());
        if let Some(enc) = &encoder {
            fill_uniform(params.value_mut(enc.word_slot()), INIT_RANGE, rng);
            for slot in enc.weight_slots() {
                fill_uniform(params.value_mut(slot), INIT_RANGE, rng);
            }
        }
        Ok(JointModel {
            layout: ModelLayout {
                config,
                dataset,
                entity,
                relation,
                gate,
                encoder,
            },
            params,
        })
    }

    pub fn layout(&self) -> &ModelLayout {
        &self.layout
    }

    pub fn config(&self) -> &ModelConfig {
        &self.layout.config
    }

    pub fn dataset(&self) -> &Arc<Dataset> {
        &self.layout.dataset
    }

    pub fn params(&self) -> &ParameterStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterStore<T> {
        &mut self.params
    }

    /// Disjoint borrows of the layout and the mutable parameters.
    pub fn split_mut(&mut self) -> (&ModelLayout, &mut ParameterStore<T>) {
        (&self.layout, &mut self.params)
    }

    pub fn relation_vector(&self, r: RelationId) -> &[T] {
        self.params.row(self.layout.relation, r.index())
    }

    pub fn joint_repr(&self, e: EntityId, r: RelationId) -> Vec<T> {
        self.layout
            .joint_repr(&self.params, e, self.relation_vector(r), GateMode::Learned)
    }

    /// Structure-only translational score.
    pub fn score_transe(&self, t: Triple) -> T {
        self.layout.score_transe(&self.params, t)
    }

    /// Score over joint representations.
    pub fn score_joint(&self, t: Triple) -> T {
        self.layout.score(&self.params, t, GateMode::Learned)
    }

    pub fn score_with(&self, t: Triple, mode: GateMode) -> T {
        self.layout.score(&self.params, t, mode)
    }

    pub fn effective_gate(&self, e: EntityId) -> Option<Vec<T>> {
        self.layout.effective_gate(&self.params, e)
    }

    /// Copies entity and relation embeddings from a structure-only checkpoint
    /// over the same vocabularies and dimension.
    pub fn init_structure_from_pretrained(&mut self, ckpt: &Checkpoint) -> Result<()> {
        if ckpt.header.dim as usize != self.layout.dim() {
            return Err(Error::Mismatch(format!(
                "pretrained dimension {} vs model dimension {}",
                ckpt.header.dim,
                self.layout.dim()
            )));
        }
        let ds = &self.layout.dataset;
        if ckpt.entities != ds.entities.names() || ckpt.relations != ds.relations.names() {
            return Err(Error::Mismatch("pretrained vocabularies differ from the dataset".into()));
        }
        for (name, slot) in [(ENTITY_SLOT, self.layout.entity), (RELATION_SLOT, self.layout.relation)] {
            let rec = ckpt
                .slot(name)
                .ok_or_else(|| Error::Mismatch(format!("pretrained checkpoint lacks `{name}`")))?;
            self.params.copy_record(slot, rec)?;
        }
        Ok(())
    }

    /// Sets each word vector to the mean structure embedding of the entities
    /// whose token sequence contains it. Words linked to no entity are drawn
    /// uniformly from `±0.1`.
    pub fn init_word_embeddings<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let Some(enc) = self.layout.encoder else { return };
        let d = self.layout.dim();
        let words = enc.word_slot();
        let n_words = self.params.rows(words);
        let mut sums = vec![0.0f64; n_words * d];
        let mut counts = vec![0usize; n_words];
        let mut seen = vec![usize::MAX; n_words];
        let ds = Arc::clone(&self.layout.dataset);
        for (e, tokens) in ds.descriptions.iter() {
            if ds.descriptions.is_structure_only(e) {
                continue;
            }
            let es = self.params.row(self.layout.entity, e.index());
            for w in tokens {
                let w = w.index();
                if seen[w] == e.index() {
                    continue;
                }
                seen[w] = e.index();
                counts[w] += 1;
                for (s, &x) in sums[w * d..(w + 1) * d].iter_mut().zip(es) {
                    *s += x.to_f64_lossless();
                }
            }
        }
        for w in 0..n_words {
            let row = self.params.row_mut(words, w);
            if counts[w] == 0 {
                fill_uniform(row, INIT_RANGE, rng);
            } else {
                let n = counts[w] as f64;
                for (dst, &s) in row.iter_mut().zip(&sums[w * d..(w + 1) * d]) {
                    *dst = T::from_f64_lossy(s / n);
                }
            }
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let ds = &self.layout.dataset;
        let cfg = &self.layout.config;
        Checkpoint {
            header: CheckpointHeader {
                format_version: CHECKPOINT_VERSION,
                dim: cfg.dim as u32,
                encoder: config::encoder_name(cfg.encoder).to_owned(),
                entity_count: ds.entity_count() as u64,
                relation_count: ds.relation_count() as u64,
                word_count: ds.words.len() as u64,
                config: cfg.to_pairs(),
            },
            slots: self.params.to_records(),
            entities: ds.entities.names().to_vec(),
            relations: ds.relations.names().to_vec(),
            words: ds.words.names().to_vec(),
        }
    }

    /// Rebuilds a model from a checkpoint, checking it against the dataset.
    pub fn from_checkpoint(ckpt: &Checkpoint, dataset: Arc<Dataset>) -> Result<Self> {
        let config = ModelConfig::from_pairs(ckpt.header.config.iter().map(|(k, v)| (k.as_str(), v.as_str())))?;
        if config.dim != ckpt.header.dim as usize || config::encoder_name(config.encoder) != ckpt.header.encoder {
            return Err(Error::Checkpoint("header disagrees with stored configuration".into()));
        }
        if ckpt.entities != dataset.entities.names()
            || ckpt.relations != dataset.relations.names()
            || ckpt.words != dataset.words.names()
        {
            return Err(Error::Mismatch("checkpoint vocabularies differ from the dataset bundle".into()));
        }
        let mut model = JointModel::new(config, dataset, &mut rand::rngs::mock::StepRng::new(0, 0))?;
        model.params.load_records(&ckpt.slots)?;
        Ok(model)
    }
}
