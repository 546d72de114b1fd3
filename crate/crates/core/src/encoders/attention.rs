//! Relation-conditioned additive attention over BLSTM outputs.
//!
//! `e_i = v·tanh(W z_i + U r)`, `α = softmax(e)`, `enc = Σ α_i z_i`.

use crate::diffmath::ops::{axpy, dot, matvec_into, matvec_t_acc, outer_acc, softmax_backward_into, softmax_in_place};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy)]
pub struct AttentionWeights<'a, T> {
    /// `d × d`, applied to each position output.
    pub w: &'a [T],
    /// `d × d`, applied to the relation vector.
    pub u: &'a [T],
    /// `d`
    pub v: &'a [T],
    pub dim: usize,
}

#[derive(Debug, Clone)]
pub struct AttentionTrace<T> {
    /// `tanh(W z_i + U r)` per position.
    activations: Vec<Vec<T>>,
    weights: Vec<T>,
}

impl<T: Scalar> AttentionTrace<T> {
    /// The attention distribution `α`.
    pub fn weights(&self) -> &[T] {
        &self.weights
    }
}

pub fn attention<T: Scalar>(w: &AttentionWeights<'_, T>, states: &[Vec<T>], rel: &[T]) -> AttentionTrace<T> {
    let d = w.dim;
    assert!(!states.is_empty(), "attention over an empty sequence");
    let mut ur = vec![T::zero(); d];
    matvec_into(w.u, d, d, rel, &mut ur);
    let mut scores = Vec::with_capacity(states.len());
    let activations: Vec<Vec<T>> = states
        .iter()
        .map(|z| {
            let mut a = vec![T::zero(); d];
            matvec_into(w.w, d, d, z, &mut a);
            for (x, &b) in a.iter_mut().zip(&ur) {
                *x = (*x + b).tanh();
            }
            scores.push(dot(w.v, &a));
            a
        })
        .collect();
    softmax_in_place(&mut scores);
    AttentionTrace {
        activations,
        weights: scores,
    }
}

/// Attention distribution of `states` under relation vector `rel`.
pub fn attention_weights<T: Scalar>(w: &AttentionWeights<'_, T>, states: &[Vec<T>], rel: &[T]) -> Vec<T> {
    attention(w, states, rel).weights
}

/// `Σ α_i z_i`
pub fn weighted_sum<T: Scalar>(states: &[Vec<T>], weights: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); states[0].len()];
    for (z, &a) in states.iter().zip(weights) {
        axpy(a, z, &mut out);
    }
    out
}

pub fn encode_attentive<T: Scalar>(w: &AttentionWeights<'_, T>, states: &[Vec<T>], rel: &[T]) -> (Vec<T>, AttentionTrace<T>) {
    let trace = attention(w, states, rel);
    (weighted_sum(states, &trace.weights), trace)
}

#[derive(Debug, Clone)]
pub struct AttentionGrads<T> {
    pub w: Vec<T>,
    pub u: Vec<T>,
    pub v: Vec<T>,
    pub states: Vec<Vec<T>>,
    pub rel: Vec<T>,
}

/// Backward pass of [`encode_attentive`] given the upstream gradient of the
/// encoding.
pub fn encode_attentive_backward<T: Scalar>(
    w: &AttentionWeights<'_, T>,
    states: &[Vec<T>],
    rel: &[T],
    trace: &AttentionTrace<T>,
    d_out: &[T],
) -> AttentionGrads<T> {
    let d = w.dim;
    let n = states.len();
    let alpha = &trace.weights;
    let d_alpha: Vec<T> = states.iter().map(|z| dot(d_out, z)).collect();
    let mut d_scores = vec![T::zero(); n];
    softmax_backward_into(alpha, &d_alpha, &mut d_scores);

    let mut grads = AttentionGrads {
        w: vec![T::zero(); d * d],
        u: vec![T::zero(); d * d],
        v: vec![T::zero(); d],
        states: states
            .iter()
            .zip(alpha)
            .map(|(_, &a)| d_out.iter().map(|&g| a * g).collect())
            .collect(),
        rel: vec![T::zero(); d],
    };
    let mut d_pre_total = vec![T::zero(); d];
    let mut d_pre = vec![T::zero(); d];
    for i in 0..n {
        let act = &trace.activations[i];
        axpy(d_scores[i], act, &mut grads.v);
        for k in 0..d {
            d_pre[k] = d_scores[i] * w.v[k] * (T::one() - act[k] * act[k]);
        }
        outer_acc(&mut grads.w, &d_pre, &states[i]);
        matvec_t_acc(w.w, d, d, &d_pre, &mut grads.states[i]);
        axpy(T::one(), &d_pre, &mut d_pre_total);
    }
    outer_acc(&mut grads.u, &d_pre_total, rel);
    matvec_t_acc(w.u, d, d, &d_pre_total, &mut grads.rel);
    grads
}
