//! Unidirectional LSTM recurrence and its bidirectional composition.
//!
//! Gate rows in the stacked weight matrices are ordered input, forget,
//! output, candidate:
//!
//! ```text
//! i = σ(W_i x + U_i h + b_i)    f = σ(W_f x + U_f h + b_f)
//! o = σ(W_o x + U_o h + b_o)    g = tanh(W_g x + U_g h + b_g)
//! c ← f ⊙ c + i ⊙ g             h ← o ⊙ tanh(c)
//! ```

use crate::diffmath::ops::{matvec_acc, matvec_t_acc, outer_acc};
use crate::scalar::{sigmoid, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    LeftToRight,
    RightToLeft,
}

/// Borrowed weights of one LSTM direction.
#[derive(Debug, Clone, Copy)]
pub struct LstmWeights<'a, T> {
    /// `4h × input_dim`
    pub input: &'a [T],
    /// `4h × h`
    pub recurrent: &'a [T],
    /// `4h`
    pub bias: &'a [T],
    pub hidden: usize,
    pub input_dim: usize,
}

impl<T> LstmWeights<'_, T> {
    fn check(&self) {
        let g = 4 * self.hidden;
        assert_eq!(self.input.len(), g * self.input_dim, "LSTM input weights");
        assert_eq!(self.recurrent.len(), g * self.hidden, "LSTM recurrent weights");
        assert_eq!(self.bias.len(), g, "LSTM bias");
    }
}

#[derive(Debug, Clone)]
struct Step<T> {
    /// Activated gates `[i, f, o, g]`, each of length `h`.
    gates: Vec<T>,
    cell: Vec<T>,
    tanh_cell: Vec<T>,
    hidden: Vec<T>,
}

/// Forward activations of one direction, indexed by sequence position.
#[derive(Debug, Clone)]
pub struct LstmTrace<T> {
    direction: Direction,
    steps: Vec<Step<T>>,
}

impl<T: Scalar> LstmTrace<T> {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Hidden state emitted at sequence position `i`.
    pub fn state(&self, i: usize) -> &[T] {
        &self.steps[i].hidden
    }

    pub fn states(&self) -> Vec<Vec<T>> {
        self.steps.iter().map(|s| s.hidden.clone()).collect()
    }

    fn order(&self) -> Vec<usize> {
        order(self.direction, self.steps.len())
    }
}

fn order(direction: Direction, n: usize) -> Vec<usize> {
    match direction {
        Direction::LeftToRight => (0..n).collect(),
        Direction::RightToLeft => (0..n).rev().collect(),
    }
}

/// Runs the recurrence over `inputs` from zero initial hidden and cell states.
pub fn lstm_direction<T: Scalar>(w: &LstmWeights<'_, T>, inputs: &[&[T]], direction: Direction) -> LstmTrace<T> {
    w.check();
    let h = w.hidden;
    let n = inputs.len();
    let mut slots: Vec<Option<Step<T>>> = vec![None; n];
    let mut prev_h = vec![T::zero(); h];
    let mut prev_c = vec![T::zero(); h];
    let mut pre = vec![T::zero(); 4 * h];
    for pos in order(direction, n) {
        pre.copy_from_slice(w.bias);
        matvec_acc(w.input, 4 * h, w.input_dim, inputs[pos], &mut pre);
        matvec_acc(w.recurrent, 4 * h, h, &prev_h, &mut pre);
        let mut gates = vec![T::zero(); 4 * h];
        for k in 0..3 * h {
            gates[k] = sigmoid(pre[k]);
        }
        for k in 3 * h..4 * h {
            gates[k] = pre[k].tanh();
        }
        let mut cell = vec![T::zero(); h];
        let mut tanh_cell = vec![T::zero(); h];
        let mut hidden = vec![T::zero(); h];
        for j in 0..h {
            let (i, f, o, g) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
            cell[j] = f * prev_c[j] + i * g;
            tanh_cell[j] = cell[j].tanh();
            hidden[j] = o * tanh_cell[j];
        }
        prev_h.copy_from_slice(&hidden);
        prev_c.copy_from_slice(&cell);
        slots[pos] = Some(Step {
            gates,
            cell,
            tanh_cell,
            hidden,
        });
    }
    LstmTrace {
        direction,
        steps: slots.into_iter().map(|s| s.expect("every position visited")).collect(),
    }
}

/// Gradients of one direction's weights and of each input vector.
#[derive(Debug, Clone)]
pub struct LstmGrads<T> {
    pub input: Vec<T>,
    pub recurrent: Vec<T>,
    pub bias: Vec<T>,
    /// Gradient per input position.
    pub inputs: Vec<Vec<T>>,
}

/// Backpropagation through time. `d_states[i]` is the upstream gradient of
/// the hidden state at position `i`.
pub fn lstm_direction_backward<T: Scalar>(
    w: &LstmWeights<'_, T>,
    inputs: &[&[T]],
    trace: &LstmTrace<T>,
    d_states: &[&[T]],
) -> LstmGrads<T> {
    let h = w.hidden;
    let n = trace.len();
    assert_eq!(d_states.len(), n);
    let mut grads = LstmGrads {
        input: vec![T::zero(); 4 * h * w.input_dim],
        recurrent: vec![T::zero(); 4 * h * h],
        bias: vec![T::zero(); 4 * h],
        inputs: vec![vec![T::zero(); w.input_dim]; n],
    };
    let zeros = vec![T::zero(); h];
    let mut dh_next = vec![T::zero(); h];
    let mut dc_next = vec![T::zero(); h];
    let mut dpre = vec![T::zero(); 4 * h];
    let seq = trace.order();
    for (k, &pos) in seq.iter().enumerate().rev() {
        let step = &trace.steps[pos];
        let (prev_h, prev_c) = match k.checked_sub(1) {
            Some(p) => (&trace.steps[seq[p]].hidden[..], &trace.steps[seq[p]].cell[..]),
            None => (&zeros[..], &zeros[..]),
        };
        for j in 0..h {
            let (i, f, o, g) = (
                step.gates[j],
                step.gates[h + j],
                step.gates[2 * h + j],
                step.gates[3 * h + j],
            );
            let dh = d_states[pos][j] + dh_next[j];
            let tc = step.tanh_cell[j];
            let dc = dh * o * (T::one() - tc * tc) + dc_next[j];
            let d_o = dh * tc;
            let d_i = dc * g;
            let d_g = dc * i;
            let d_f = dc * prev_c[j];
            dc_next[j] = dc * f;
            dpre[j] = d_i * i * (T::one() - i);
            dpre[h + j] = d_f * f * (T::one() - f);
            dpre[2 * h + j] = d_o * o * (T::one() - o);
            dpre[3 * h + j] = d_g * (T::one() - g * g);
        }
        outer_acc(&mut grads.input, &dpre, inputs[pos]);
        outer_acc(&mut grads.recurrent, &dpre, prev_h);
        for (b, &d) in grads.bias.iter_mut().zip(&dpre) {
            *b += d;
        }
        matvec_t_acc(w.input, 4 * h, w.input_dim, &dpre, &mut grads.inputs[pos]);
        dh_next.fill(T::zero());
        matvec_t_acc(w.recurrent, 4 * h, h, &dpre, &mut dh_next);
    }
    grads
}

/// Weights of both directions. Each produces `hidden` units; the per-position
/// output is their concatenation.
#[derive(Debug, Clone, Copy)]
pub struct BlstmWeights<'a, T> {
    pub forward: LstmWeights<'a, T>,
    pub backward: LstmWeights<'a, T>,
}

#[derive(Debug, Clone)]
pub struct BlstmTrace<T> {
    pub forward: LstmTrace<T>,
    pub backward: LstmTrace<T>,
}

impl<T: Scalar> BlstmTrace<T> {
    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    /// `z_i`: forward state concatenated with backward state at position `i`.
    pub fn output(&self, i: usize) -> Vec<T> {
        let mut z = self.forward.state(i).to_vec();
        z.extend_from_slice(self.backward.state(i));
        z
    }

    pub fn outputs(&self) -> Vec<Vec<T>> {
        (0..self.len()).map(|i| self.output(i)).collect()
    }
}

pub fn blstm<T: Scalar>(w: &BlstmWeights<'_, T>, inputs: &[&[T]]) -> BlstmTrace<T> {
    BlstmTrace {
        forward: lstm_direction(&w.forward, inputs, Direction::LeftToRight),
        backward: lstm_direction(&w.backward, inputs, Direction::RightToLeft),
    }
}

pub struct BlstmGrads<T> {
    pub forward: LstmGrads<T>,
    pub backward: LstmGrads<T>,
}

impl<T: Scalar> BlstmGrads<T> {
    /// Combined gradient of input position `i` over both directions.
    pub fn input_grad(&self, i: usize) -> Vec<T> {
        self.forward.inputs[i]
            .iter()
            .zip(&self.backward.inputs[i])
            .map(|(&a, &b)| a + b)
            .collect()
    }
}

/// `d_outputs[i]` is the upstream gradient of `z_i` (length `2h`).
pub fn blstm_backward<T: Scalar>(
    w: &BlstmWeights<'_, T>,
    inputs: &[&[T]],
    trace: &BlstmTrace<T>,
    d_outputs: &[Vec<T>],
) -> BlstmGrads<T> {
    let h = w.forward.hidden;
    let d_fwd: Vec<&[T]> = d_outputs.iter().map(|d| &d[..h]).collect();
    let d_bwd: Vec<&[T]> = d_outputs.iter().map(|d| &d[h..]).collect();
    BlstmGrads {
        forward: lstm_direction_backward(&w.forward, inputs, &trace.forward, &d_fwd),
        backward: lstm_direction_backward(&w.backward, inputs, &trace.backward, &d_bwd),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sig(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    struct Owned {
        input: Vec<f64>,
        recurrent: Vec<f64>,
        bias: Vec<f64>,
        hidden: usize,
        input_dim: usize,
    }

    impl Owned {
        fn random(rng: &mut ChaCha8Rng, hidden: usize, input_dim: usize, scale: f64) -> Self {
            let mut draw = |n: usize| (0..n).map(|_| rng.gen_range(-scale..scale)).collect::<Vec<f64>>();
            Owned {
                input: draw(4 * hidden * input_dim),
                recurrent: draw(4 * hidden * hidden),
                bias: draw(4 * hidden),
                hidden,
                input_dim,
            }
        }

        fn view(&self) -> LstmWeights<'_, f64> {
            LstmWeights {
                input: &self.input,
                recurrent: &self.recurrent,
                bias: &self.bias,
                hidden: self.hidden,
                input_dim: self.input_dim,
            }
        }
    }

    /// Textbook recurrence written with per-gate index arithmetic, independent
    /// of the stacked kernels above.
    fn reference(w: &Owned, xs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let (h, d) = (w.hidden, w.input_dim);
        let mut hs = vec![0.0; h];
        let mut cs = vec![0.0; h];
        let mut out = Vec::new();
        for x in xs {
            let pre = |gate: usize, j: usize, hs: &[f64]| {
                let row = gate * h + j;
                let mut s = w.bias[row];
                for k in 0..d {
                    s += w.input[row * d + k] * x[k];
                }
                for k in 0..h {
                    s += w.recurrent[row * h + k] * hs[k];
                }
                s
            };
            let mut nh = vec![0.0; h];
            let mut nc = vec![0.0; h];
            for j in 0..h {
                let i = sig(pre(0, j, &hs));
                let f = sig(pre(1, j, &hs));
                let o = sig(pre(2, j, &hs));
                let g = pre(3, j, &hs).tanh();
                nc[j] = f * cs[j] + i * g;
                nh[j] = o * nc[j].tanh();
            }
            hs = nh;
            cs = nc;
            out.push(hs.clone());
        }
        out
    }

    #[test]
    fn zero_parameters_give_zero_states() {
        let w = Owned {
            input: vec![0.0; 4 * 2 * 3],
            recurrent: vec![0.0; 16],
            bias: vec![0.0; 8],
            hidden: 2,
            input_dim: 3,
        };
        let xs = [vec![1.0, -2.0, 0.5], vec![0.3, 0.3, 0.3]];
        let inputs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        let trace = lstm_direction(&w.view(), &inputs, Direction::LeftToRight);
        for i in 0..2 {
            assert!(trace.state(i).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn matches_reference_recurrence() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = Owned::random(&mut rng, 3, 4, 0.1);
        let xs: Vec<Vec<f64>> = (0..2).map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let inputs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        let trace = lstm_direction(&w.view(), &inputs, Direction::LeftToRight);
        let oracle = reference(&w, &xs);
        for (i, expect) in oracle.iter().enumerate() {
            for (a, b) in trace.state(i).iter().zip(expect) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        // Right-to-left equals the reference run on the reversed sequence.
        let rev = lstm_direction(&w.view(), &inputs, Direction::RightToLeft);
        let rev_xs: Vec<Vec<f64>> = xs.iter().rev().cloned().collect();
        let rev_oracle = reference(&w, &rev_xs);
        for i in 0..2 {
            for (a, b) in rev.state(1 - i).iter().zip(&rev_oracle[i]) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn palindrome_gives_mirrored_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let w = Owned::random(&mut rng, 2, 3, 0.5);
        let a: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let seq = [&a[..], &b[..], &c[..], &b[..], &a[..]];
        let fwd = lstm_direction(&w.view(), &seq, Direction::LeftToRight);
        let bwd = lstm_direction(&w.view(), &seq, Direction::RightToLeft);
        for i in 0..5 {
            assert_eq!(fwd.state(i), bwd.state(4 - i));
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let w = Owned::random(&mut rng, 2, 3, 0.6);
        let xs: Vec<Vec<f64>> = (0..4).map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let proj: Vec<Vec<f64>> = (0..4).map(|_| (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        for dir in [Direction::LeftToRight, Direction::RightToLeft] {
            let loss = |w: &Owned, xs: &[Vec<f64>]| {
                let inputs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
                let t = lstm_direction(&w.view(), &inputs, dir);
                (0..4)
                    .map(|i| t.state(i).iter().zip(&proj[i]).map(|(a, b)| a * b).sum::<f64>())
                    .sum::<f64>()
            };
            let inputs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
            let trace = lstm_direction(&w.view(), &inputs, dir);
            let d_states: Vec<&[f64]> = proj.iter().map(Vec::as_slice).collect();
            let g = lstm_direction_backward(&w.view(), &inputs, &trace, &d_states);

            let eps = 1e-6;
            let check = |analytic: f64, plus: f64, minus: f64| {
                let n = (plus - minus) / (2.0 * eps);
                let err = (analytic - n).abs() / analytic.abs().max(n.abs()).max(1e-8);
                assert!(err < 1e-5, "{analytic} vs {n}");
            };
            for k in 0..w.input.len() {
                let mut p = Owned { input: w.input.clone(), recurrent: w.recurrent.clone(), bias: w.bias.clone(), ..w };
                p.input[k] += eps;
                let plus = loss(&p, &xs);
                p.input[k] -= 2.0 * eps;
                check(g.input[k], plus, loss(&p, &xs));
            }
            for k in 0..w.recurrent.len() {
                let mut p = Owned { input: w.input.clone(), recurrent: w.recurrent.clone(), bias: w.bias.clone(), ..w };
                p.recurrent[k] += eps;
                let plus = loss(&p, &xs);
                p.recurrent[k] -= 2.0 * eps;
                check(g.recurrent[k], plus, loss(&p, &xs));
            }
            for k in 0..w.bias.len() {
                let mut p = Owned { input: w.input.clone(), recurrent: w.recurrent.clone(), bias: w.bias.clone(), ..w };
                p.bias[k] += eps;
                let plus = loss(&p, &xs);
                p.bias[k] -= 2.0 * eps;
                check(g.bias[k], plus, loss(&p, &xs));
            }
            for pos in 0..4 {
                for k in 0..3 {
                    let mut xp = xs.clone();
                    xp[pos][k] += eps;
                    let plus = loss(&w, &xp);
                    xp[pos][k] -= 2.0 * eps;
                    check(g.inputs[pos][k], plus, loss(&w, &xp));
                }
            }
        }
    }
}
