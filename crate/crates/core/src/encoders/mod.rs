//! Text encoders mapping a word-id sequence to a `d`-dimensional vector:
//! bag of words, BLSTM, and relation-attentive BLSTM.

mod attention;
mod lstm;

use std::fmt;
use std::str::FromStr;

pub use attention::{
    attention, attention_weights, encode_attentive, encode_attentive_backward, weighted_sum, AttentionGrads,
    AttentionTrace, AttentionWeights,
};
pub use lstm::{
    blstm, blstm_backward, lstm_direction, lstm_direction_backward, BlstmGrads, BlstmTrace, BlstmWeights, Direction,
    LstmGrads, LstmTrace, LstmWeights,
};

use crate::dataset::WordId;
use crate::diffmath::ops::axpy;
use crate::diffmath::{LrGroup, ParameterStore, Shape, SlotId};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EncoderKind {
    Nbow,
    Lstm,
    Alstm,
}

impl EncoderKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EncoderKind::Nbow => "nbow",
            EncoderKind::Lstm => "lstm",
            EncoderKind::Alstm => "alstm",
        }
    }

    pub fn uses_lstm(self) -> bool {
        matches!(self, EncoderKind::Lstm | EncoderKind::Alstm)
    }
}

impl fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EncoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nbow" | "cbow" => Ok(EncoderKind::Nbow),
            "lstm" | "blstm" => Ok(EncoderKind::Lstm),
            "alstm" | "a-lstm" => Ok(EncoderKind::Alstm),
            other => Err(Error::Config(format!("unknown encoder `{other}` (nbow|lstm|alstm)"))),
        }
    }
}

/// Sum of the word embeddings.
pub fn encode_nbow<T: Scalar>(embeddings: &[&[T]]) -> Result<Vec<T>> {
    let first = embeddings.first().ok_or(Error::EmptySequence)?;
    let mut out = vec![T::zero(); first.len()];
    for e in embeddings {
        axpy(T::one(), e, &mut out);
    }
    Ok(out)
}

/// `Σ_i z_i` over the BLSTM outputs.
pub fn encode_blstm<T: Scalar>(w: &BlstmWeights<'_, T>, inputs: &[&[T]]) -> Result<(Vec<T>, BlstmTrace<T>)> {
    if inputs.is_empty() {
        return Err(Error::EmptySequence);
    }
    let trace = blstm(w, inputs);
    let h = w.forward.hidden;
    let mut out = vec![T::zero(); 2 * h];
    for i in 0..trace.len() {
        axpy(T::one(), trace.forward.state(i), &mut out[..h]);
        axpy(T::one(), trace.backward.state(i), &mut out[h..]);
    }
    Ok((out, trace))
}

#[derive(Debug, Clone, Copy)]
struct DirectionSlots {
    input: SlotId,
    recurrent: SlotId,
    bias: SlotId,
}

/// Parameter-store slots owned by an encoder.
#[derive(Debug, Clone, Copy)]
pub struct TextEncoder {
    kind: EncoderKind,
    dim: usize,
    words: SlotId,
    lstm: Option<[DirectionSlots; 2]>,
    attention: Option<[SlotId; 3]>,
}

/// Forward intermediates kept for the backward pass.
#[derive(Debug, Clone)]
pub enum EncodingTrace<T> {
    Nbow,
    Lstm(BlstmTrace<T>),
    Alstm {
        blstm: BlstmTrace<T>,
        outputs: Vec<Vec<T>>,
        attention: AttentionTrace<T>,
    },
}

pub const WORD_SLOT: &str = "word";

impl TextEncoder {
    /// Registers the encoder's slots (zero-initialised). `dim` must be even
    /// for the LSTM encoders.
    pub fn register<T: Scalar>(
        store: &mut ParameterStore<T>,
        kind: EncoderKind,
        dim: usize,
        word_count: usize,
    ) -> Result<Self> {
        if kind.uses_lstm() && !dim.is_multiple_of(2) {
            return Err(Error::Config(format!("{kind} encoder needs an even dimension, got {dim}")));
        }
        let words = store.add(WORD_SLOT, Shape::Matrix(word_count, dim), LrGroup::Text);
        let lstm = kind.uses_lstm().then(|| {
            let h = dim / 2;
            let mut dir = |prefix: &str| DirectionSlots {
                input: store.add(&format!("{prefix}_input"), Shape::Matrix(4 * h, dim), LrGroup::Text),
                recurrent: store.add(&format!("{prefix}_recurrent"), Shape::Matrix(4 * h, h), LrGroup::Text),
                bias: store.add(&format!("{prefix}_bias"), Shape::Vector(4 * h), LrGroup::Text),
            };
            [dir("lstm_fwd"), dir("lstm_bwd")]
        });
        let attention = (kind == EncoderKind::Alstm).then(|| {
            [
                store.add("attn_w", Shape::Matrix(dim, dim), LrGroup::Text),
                store.add("attn_u", Shape::Matrix(dim, dim), LrGroup::Text),
                store.add("attn_v", Shape::Vector(dim), LrGroup::Text),
            ]
        });
        Ok(TextEncoder {
            kind,
            dim,
            words,
            lstm,
            attention,
        })
    }

    pub fn kind(&self) -> EncoderKind {
        self.kind
    }

    pub fn word_slot(&self) -> SlotId {
        self.words
    }

    /// Slots other than the word table (LSTM and attention weights).
    pub fn weight_slots(&self) -> Vec<SlotId> {
        let mut out = Vec::new();
        if let Some(dirs) = &self.lstm {
            for d in dirs {
                out.extend([d.input, d.recurrent, d.bias]);
            }
        }
        if let Some(a) = &self.attention {
            out.extend(a);
        }
        out
    }

    /// Whether the encoding depends on the relation.
    pub fn uses_relation(&self) -> bool {
        self.kind == EncoderKind::Alstm
    }

    fn blstm_weights<'a, T: Scalar>(&self, store: &'a ParameterStore<T>) -> BlstmWeights<'a, T> {
        let dirs = self.lstm.as_ref().expect("LSTM encoder");
        let view = |d: &DirectionSlots| LstmWeights {
            input: store.value(d.input),
            recurrent: store.value(d.recurrent),
            bias: store.value(d.bias),
            hidden: self.dim / 2,
            input_dim: self.dim,
        };
        BlstmWeights {
            forward: view(&dirs[0]),
            backward: view(&dirs[1]),
        }
    }

    fn attention_weights<'a, T: Scalar>(&self, store: &'a ParameterStore<T>) -> AttentionWeights<'a, T> {
        let [w, u, v] = self.attention.expect("attentive encoder");
        AttentionWeights {
            w: store.value(w),
            u: store.value(u),
            v: store.value(v),
            dim: self.dim,
        }
    }

    /// Encodes `tokens`; `rel` is only read by the attentive encoder.
    pub fn encode<T: Scalar>(
        &self,
        store: &ParameterStore<T>,
        tokens: &[WordId],
        rel: &[T],
    ) -> Result<(Vec<T>, EncodingTrace<T>)> {
        if tokens.is_empty() {
            return Err(Error::EmptySequence);
        }
        let inputs: Vec<&[T]> = tokens.iter().map(|w| store.row(self.words, w.index())).collect();
        match self.kind {
            EncoderKind::Nbow => Ok((encode_nbow(&inputs)?, EncodingTrace::Nbow)),
            EncoderKind::Lstm => {
                let (out, trace) = encode_blstm(&self.blstm_weights(store), &inputs)?;
                Ok((out, EncodingTrace::Lstm(trace)))
            }
            EncoderKind::Alstm => {
                let blstm = blstm(&self.blstm_weights(store), &inputs);
                let outputs = blstm.outputs();
                let (out, attention) = encode_attentive(&self.attention_weights(store), &outputs, rel);
                Ok((
                    out,
                    EncodingTrace::Alstm {
                        blstm,
                        outputs,
                        attention,
                    },
                ))
            }
        }
    }

    /// Accumulates parameter gradients for upstream gradient `d_out` and
    /// returns the gradient with respect to `rel` (zero unless attentive).
    pub fn backward<T: Scalar>(
        &self,
        store: &mut ParameterStore<T>,
        tokens: &[WordId],
        rel: &[T],
        trace: &EncodingTrace<T>,
        d_out: &[T],
    ) -> Vec<T> {
        let mut d_rel = vec![T::zero(); self.dim];
        match trace {
            EncodingTrace::Nbow => {
                for w in tokens {
                    axpy(T::one(), d_out, store.grad_row_mut(self.words, w.index()));
                }
            }
            EncodingTrace::Lstm(blstm) => {
                let d_outputs = vec![d_out.to_vec(); tokens.len()];
                let grads = self.blstm_grads(store, tokens, blstm, &d_outputs);
                self.apply_blstm_grads(store, tokens, &grads);
            }
            EncodingTrace::Alstm {
                blstm,
                outputs,
                attention,
            } => {
                let attn_grads =
                    encode_attentive_backward(&self.attention_weights(store), outputs, rel, attention, d_out);
                let grads = self.blstm_grads(store, tokens, blstm, &attn_grads.states);
                self.apply_blstm_grads(store, tokens, &grads);
                let [w, u, v] = self.attention.expect("attentive encoder");
                axpy(T::one(), &attn_grads.w, store.grad_mut(w));
                axpy(T::one(), &attn_grads.u, store.grad_mut(u));
                axpy(T::one(), &attn_grads.v, store.grad_mut(v));
                d_rel = attn_grads.rel;
            }
        }
        d_rel
    }

    fn blstm_grads<T: Scalar>(
        &self,
        store: &ParameterStore<T>,
        tokens: &[WordId],
        trace: &BlstmTrace<T>,
        d_outputs: &[Vec<T>],
    ) -> BlstmGrads<T> {
        let inputs: Vec<&[T]> = tokens.iter().map(|w| store.row(self.words, w.index())).collect();
        blstm_backward(&self.blstm_weights(store), &inputs, trace, d_outputs)
    }

    fn apply_blstm_grads<T: Scalar>(&self, store: &mut ParameterStore<T>, tokens: &[WordId], grads: &BlstmGrads<T>) {
        let dirs = self.lstm.expect("LSTM encoder");
        for (slots, g) in dirs.iter().zip([&grads.forward, &grads.backward]) {
            axpy(T::one(), &g.input, store.grad_mut(slots.input));
            axpy(T::one(), &g.recurrent, store.grad_mut(slots.recurrent));
            axpy(T::one(), &g.bias, store.grad_mut(slots.bias));
        }
        for (i, w) in tokens.iter().enumerate() {
            let d = grads.input_grad(i);
            axpy(T::one(), &d, store.grad_row_mut(self.words, w.index()));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffmath::check_gradients;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn randomize(store: &mut ParameterStore<f64>, rng: &mut ChaCha8Rng, scale: f64) {
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            for v in store.value_mut(id) {
                *v = rng.gen_range(-scale..scale);
            }
        }
    }

    fn setup(kind: EncoderKind, seed: u64) -> (ParameterStore<f64>, TextEncoder) {
        let mut store = ParameterStore::new();
        let enc = TextEncoder::register(&mut store, kind, 6, 7).unwrap();
        randomize(&mut store, &mut ChaCha8Rng::seed_from_u64(seed), 0.5);
        (store, enc)
    }

    #[test]
    fn nbow_single_and_cancelling_tokens() {
        let u = [0.5, -1.0, 2.0];
        let neg: Vec<f64> = u.iter().map(|x| -x).collect();
        assert_eq!(encode_nbow(&[&u[..]]).unwrap(), u.to_vec());
        assert_eq!(encode_nbow(&[&u[..], &neg[..]]).unwrap(), vec![0.0; 3]);
        assert!(matches!(encode_nbow::<f64>(&[]), Err(Error::EmptySequence)));
    }

    #[test]
    fn nbow_matches_naive_loop() {
        let (store, enc) = setup(EncoderKind::Nbow, 1);
        let tokens: Vec<WordId> = [3u32, 0, 6, 3, 2].into_iter().map(WordId).collect();
        let (out, _) = enc.encode(&store, &tokens, &[0.0; 6]).unwrap();
        let mut oracle = [0.0f64; 6];
        for t in &tokens {
            for k in 0..6 {
                oracle[k] += store.row(enc.word_slot(), t.index())[k];
            }
        }
        assert_eq!(out, oracle.to_vec());
    }

    #[test]
    fn blstm_zero_parameters_give_zero_vector() {
        let mut store = ParameterStore::<f64>::new();
        let enc = TextEncoder::register(&mut store, EncoderKind::Lstm, 4, 3).unwrap();
        for v in store.value_mut(enc.word_slot()) {
            *v = 1.0;
        }
        let (out, _) = enc.encode(&store, &[WordId(1), WordId(2)], &[0.0; 4]).unwrap();
        assert_eq!(out, vec![0.0; 4]);
    }

    #[test]
    fn blstm_sum_matches_materialised_outputs() {
        let (store, enc) = setup(EncoderKind::Lstm, 2);
        let tokens: Vec<WordId> = [1u32, 4, 5].into_iter().map(WordId).collect();
        let (out, trace) = enc.encode(&store, &tokens, &[0.0; 6]).unwrap();
        let EncodingTrace::Lstm(t) = trace else { panic!() };
        let z = t.outputs();
        for k in 0..6 {
            let oracle: f64 = z.iter().map(|zi| zi[k]).sum();
            assert!((out[k] - oracle).abs() < 1e-15);
        }
        // Length one: the sum is the single concatenated output.
        let (one, trace) = enc.encode(&store, &tokens[..1], &[0.0; 6]).unwrap();
        let EncodingTrace::Lstm(t) = trace else { panic!() };
        assert_eq!(one, t.output(0));
    }

    #[test]
    fn blstm_is_order_sensitive_nbow_is_not() {
        let (store, enc) = setup(EncoderKind::Lstm, 3);
        let a: Vec<WordId> = [1u32, 2, 3].into_iter().map(WordId).collect();
        let b: Vec<WordId> = [3u32, 1, 2].into_iter().map(WordId).collect();
        let (ea, _) = enc.encode(&store, &a, &[0.0; 6]).unwrap();
        let (eb, _) = enc.encode(&store, &b, &[0.0; 6]).unwrap();
        assert!(ea.iter().zip(&eb).any(|(x, y)| (x - y).abs() > 1e-9));
    }

    #[test]
    fn attentive_equals_mean_blstm_for_identical_states() {
        let (mut store, enc) = setup(EncoderKind::Alstm, 4);
        // Repeated token, no recurrence and a closed forget gate: every
        // position emits the same state.
        for name in ["lstm_fwd_recurrent", "lstm_bwd_recurrent"] {
            let id = store.id(name).unwrap();
            store.value_mut(id).fill(0.0);
        }
        for name in ["lstm_fwd_bias", "lstm_bwd_bias"] {
            let id = store.id(name).unwrap();
            store.value_mut(id)[3..6].fill(-60.0);
        }
        let tokens = vec![WordId(2); 4];
        let rel = [0.3, -0.2, 0.1, 0.9, -0.4, 0.0];
        let (att, _) = enc.encode(&store, &tokens, &rel).unwrap();

        let mut lstm_store = ParameterStore::<f64>::new();
        let lstm = TextEncoder::register(&mut lstm_store, EncoderKind::Lstm, 6, 7).unwrap();
        for id in lstm_store.ids().collect::<Vec<_>>() {
            let src = store.id(lstm_store.name(id)).unwrap();
            let vals = store.value(src).to_vec();
            lstm_store.value_mut(id).copy_from_slice(&vals);
        }
        let (sum, _) = lstm.encode(&lstm_store, &tokens, &rel).unwrap();
        for k in 0..6 {
            assert!((att[k] - sum[k] / 4.0).abs() < 1e-14);
        }
    }

    #[test]
    fn odd_dimension_rejected_for_lstm() {
        let mut store = ParameterStore::<f64>::new();
        assert!(TextEncoder::register(&mut store, EncoderKind::Alstm, 5, 3).is_err());
        assert!(TextEncoder::register(&mut store, EncoderKind::Nbow, 5, 3).is_ok());
    }

    #[test]
    fn encoder_gradients_pass_checker() {
        for (seed, kind) in [EncoderKind::Nbow, EncoderKind::Lstm, EncoderKind::Alstm].into_iter().enumerate() {
            let (mut store, enc) = setup(kind, 10 + seed as u64);
            let tokens: Vec<WordId> = [1u32, 3, 1, 6].into_iter().map(WordId).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            let proj: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
            // Put the relation into the store so its gradient is checked too.
            let rel = store.add("rel", Shape::Vector(6), LrGroup::Structure);
            for v in store.value_mut(rel) {
                *v = rng.gen_range(-1.0..1.0);
            }
            let report = check_gradients(
                &mut store,
                |s| {
                    let r = s.value(rel).to_vec();
                    let (out, trace) = enc.encode(s, &tokens, &r).unwrap();
                    let d_rel = enc.backward(s, &tokens, &r, &trace, &proj);
                    axpy(1.0, &d_rel, s.grad_mut(rel));
                    out.iter().zip(&proj).map(|(a, b)| a * b).sum()
                },
                1e-5,
            );
            assert!(report.max_rel_err() < 1e-4, "{kind}: {:?}", report.worst());
        }
    }

    proptest! {
        #[test]
        fn nbow_is_permutation_invariant(
            tokens in proptest::collection::vec(0u32..7, 1..8),
            seed in 0u64..1000,
        ) {
            let (store, enc) = setup(EncoderKind::Nbow, seed);
            let ids: Vec<WordId> = tokens.iter().copied().map(WordId).collect();
            let mut shuffled = ids.clone();
            shuffled.reverse();
            shuffled.rotate_left(seed as usize % ids.len());
            let (a, _) = enc.encode(&store, &ids, &[0.0; 6]).unwrap();
            let (b, _) = enc.encode(&store, &shuffled, &[0.0; 6]).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }

        #[test]
        fn attention_weights_form_a_distribution(
            tokens in proptest::collection::vec(0u32..7, 1..6),
            seed in 0u64..1000,
        ) {
            let (store, enc) = setup(EncoderKind::Alstm, seed);
            let ids: Vec<WordId> = tokens.iter().copied().map(WordId).collect();
            let rel = [0.5, 0.1, -0.3, 0.2, 0.0, -0.9];
            let (out, trace) = enc.encode(&store, &ids, &rel).unwrap();
            let EncodingTrace::Alstm { outputs, attention, .. } = trace else { unreachable!() };
            let total: f64 = attention.weights().iter().sum();
            prop_assert!((total - 1.0).abs() <= 1e-9);
            prop_assert!(attention.weights().iter().all(|&a| (0.0..=1.0).contains(&a)));
            // Convex combination: each coordinate between min and max of the z_i.
            for k in 0..6 {
                let lo = outputs.iter().map(|z| z[k]).fold(f64::INFINITY, f64::min);
                let hi = outputs.iter().map(|z| z[k]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(out[k] >= lo - 1e-12 && out[k] <= hi + 1e-12);
            }
        }
    }
}
