use log::warn;

use super::tensor::{Shape, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Learning-rate group of a parameter slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LrGroup {
    /// Entity structure embeddings and relation embeddings.
    Structure,
    /// Word embeddings, gates and encoder weights.
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SlotId(usize);

#[derive(Debug, Clone)]
struct Slot<T> {
    name: String,
    group: LrGroup,
    value: Tensor<T>,
    grad: Vec<T>,
    row_touched: Vec<bool>,
    touched: Vec<usize>,
}

impl<T: Scalar> Slot<T> {
    fn cols(&self) -> usize {
        self.value.shape().as_rows().1
    }

    fn rows(&self) -> usize {
        self.value.shape().as_rows().0
    }

    fn touch(&mut self, row: usize) {
        if !self.row_touched[row] {
            self.row_touched[row] = true;
            self.touched.push(row);
        }
    }

    fn clear_grad(&mut self) {
        let cols = self.cols();
        for &r in &self.touched {
            self.grad[r * cols..(r + 1) * cols].fill(T::zero());
            self.row_touched[r] = false;
        }
        self.touched.clear();
    }
}

/// Named parameter tensors with paired gradient accumulators.
///
/// Every slot is viewed as a table of rows; vectors are a single row. Gradient
/// writes mark rows as touched, and only touched rows are updated by
/// [`ParameterStore::sgd_step`].
#[derive(Debug, Clone, Default)]
pub struct ParameterStore<T> {
    slots: Vec<Slot<T>>,
}

impl<T: Scalar> ParameterStore<T> {
    pub fn new() -> Self {
        ParameterStore { slots: Vec::new() }
    }

    /// Registers a zero-initialised slot. Panics on duplicate names.
    pub fn add(&mut self, name: &str, shape: Shape, group: LrGroup) -> SlotId {
        assert!(self.id(name).is_none(), "duplicate slot `{name}`");
        let (rows, _) = shape.as_rows();
        self.slots.push(Slot {
            name: name.to_owned(),
            group,
            value: Tensor::zeros(shape),
            grad: vec![T::zero(); shape.numel()],
            row_touched: vec![false; rows],
            touched: Vec::new(),
        });
        SlotId(self.slots.len() - 1)
    }

    pub fn id(&self, name: &str) -> Option<SlotId> {
        self.slots.iter().position(|s| s.name == name).map(SlotId)
    }

    pub fn ids(&self) -> impl Iterator<Item = SlotId> {
        (0..self.slots.len()).map(SlotId)
    }

    pub fn name(&self, id: SlotId) -> &str {
        &self.slots[id.0].name
    }

    pub fn group(&self, id: SlotId) -> LrGroup {
        self.slots[id.0].group
    }

    pub fn shape(&self, id: SlotId) -> Shape {
        self.slots[id.0].value.shape()
    }

    pub fn value(&self, id: SlotId) -> &[T] {
        self.slots[id.0].value.data()
    }

    pub fn value_mut(&mut self, id: SlotId) -> &mut [T] {
        self.slots[id.0].value.data_mut()
    }

    pub fn tensor(&self, id: SlotId) -> &Tensor<T> {
        &self.slots[id.0].value
    }

    pub fn row(&self, id: SlotId, row: usize) -> &[T] {
        self.slots[id.0].value.row(row)
    }

    pub fn row_mut(&mut self, id: SlotId, row: usize) -> &mut [T] {
        self.slots[id.0].value.row_mut(row)
    }

    pub fn rows(&self, id: SlotId) -> usize {
        self.slots[id.0].rows()
    }

    pub fn grad(&self, id: SlotId) -> &[T] {
        &self.slots[id.0].grad
    }

    pub fn grad_row(&self, id: SlotId, row: usize) -> &[T] {
        let cols = self.slots[id.0].cols();
        &self.slots[id.0].grad[row * cols..(row + 1) * cols]
    }

    /// Gradient accumulator of one row; marks the row as touched.
    pub fn grad_row_mut(&mut self, id: SlotId, row: usize) -> &mut [T] {
        let slot = &mut self.slots[id.0];
        slot.touch(row);
        let cols = slot.cols();
        &mut slot.grad[row * cols..(row + 1) * cols]
    }

    /// Whole gradient accumulator; marks every row as touched.
    pub fn grad_mut(&mut self, id: SlotId) -> &mut [T] {
        let slot = &mut self.slots[id.0];
        for r in 0..slot.rows() {
            slot.touch(r);
        }
        &mut slot.grad
    }

    /// Rows with accumulated gradient since the last step, in first-touch order.
    pub fn touched_rows(&self, id: SlotId) -> &[usize] {
        &self.slots[id.0].touched
    }

    pub fn zero_grad(&mut self) {
        for slot in &mut self.slots {
            slot.clear_grad();
        }
    }

    /// `p ← p − lr_group · (grad + 2·l2·p)` on every touched row, then clears
    /// the accumulators. Nothing is updated if any gradient is non-finite.
    pub fn sgd_step(&mut self, lr_structure: T, lr_text: T, l2_weight: T) -> Result<()> {
        for slot in &self.slots {
            let cols = slot.cols();
            for &r in &slot.touched {
                if slot.grad[r * cols..(r + 1) * cols].iter().any(|g| !g.is_finite()) {
                    return Err(Error::NonFiniteGradient {
                        slot: slot.name.clone(),
                    });
                }
            }
        }
        let two_l2 = T::two() * l2_weight;
        for slot in &mut self.slots {
            let lr = match slot.group {
                LrGroup::Structure => lr_structure,
                LrGroup::Text => lr_text,
            };
            let cols = slot.cols();
            slot.touched.sort_unstable();
            let params = slot.value.data_mut();
            for &r in &slot.touched {
                let range = r * cols..(r + 1) * cols;
                for (p, &g) in params[range.clone()].iter_mut().zip(&slot.grad[range]) {
                    *p -= lr * (g + two_l2 * *p);
                }
            }
            slot.clear_grad();
        }
        Ok(())
    }

    /// Rescales each listed row to unit L2 norm. Zero rows are left alone;
    /// returns how many were found.
    pub fn renormalize_rows(&mut self, id: SlotId, rows: impl IntoIterator<Item = usize>) -> usize {
        let slot = &mut self.slots[id.0];
        let mut zero_rows = 0;
        for r in rows {
            let row = slot.value.row_mut(r);
            let norm = row.iter().map(|&x| x * x).sum::<T>().sqrt();
            if norm == T::zero() {
                zero_rows += 1;
                continue;
            }
            for x in row.iter_mut() {
                *x = *x / norm;
            }
        }
        if zero_rows > 0 {
            warn!("renormalize `{}`: left {zero_rows} zero row(s) unchanged", slot.name);
        }
        zero_rows
    }

    /// Redraws every value uniformly from `[-bound, bound]`.
    pub fn randomize<R: rand::Rng + ?Sized>(&mut self, bound: f64, rng: &mut R) {
        for slot in &mut self.slots {
            for v in slot.value.data_mut() {
                *v = T::from_f64_lossy(rng.gen_range(-bound..=bound));
            }
        }
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.slots.iter().map(|s| s.value.len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn single(value: f64, group: LrGroup) -> (ParameterStore<f64>, SlotId) {
        let mut s = ParameterStore::new();
        let id = s.add("p", Shape::Vector(1), group);
        s.value_mut(id)[0] = value;
        (s, id)
    }

    #[test]
    fn zero_gradient_no_l2_is_identity() {
        let mut s = ParameterStore::<f64>::new();
        let id = s.add("t", Shape::Matrix(3, 2), LrGroup::Text);
        s.value_mut(id).copy_from_slice(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        s.grad_mut(id);
        s.sgd_step(0.1, 0.1, 0.0).unwrap();
        assert_eq!(s.value(id), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn plain_gradient_step() {
        let (mut s, id) = single(1.0, LrGroup::Structure);
        s.grad_row_mut(id, 0)[0] = 1.0;
        s.sgd_step(0.1, 0.5, 0.0).unwrap();
        assert!((s.value(id)[0] - 0.9).abs() < 1e-15);
        assert!(s.touched_rows(id).is_empty());
        assert_eq!(s.grad(id), &[0.0]);
    }

    #[test]
    fn regulariser_only_step() {
        let (mut s, id) = single(1.0, LrGroup::Text);
        s.grad_row_mut(id, 0);
        s.sgd_step(0.5, 0.1, 0.5).unwrap();
        assert!((s.value(id)[0] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn untouched_rows_are_not_regularised() {
        let mut s = ParameterStore::<f64>::new();
        let id = s.add("t", Shape::Matrix(2, 1), LrGroup::Text);
        s.value_mut(id).copy_from_slice(&[1.0, 1.0]);
        s.grad_row_mut(id, 1)[0] = 0.0;
        s.sgd_step(0.1, 0.1, 0.5).unwrap();
        assert_eq!(s.value(id)[0], 1.0);
        assert!((s.value(id)[1] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_aborts_with_slot_name() {
        let (mut s, id) = single(1.0, LrGroup::Text);
        s.grad_row_mut(id, 0)[0] = f64::NAN;
        let err = s.sgd_step(0.1, 0.1, 0.0).unwrap_err();
        assert!(err.to_string().contains("`p`"), "{err}");
        assert_eq!(s.value(id)[0], 1.0);
    }

    #[test]
    fn renormalize_examples() {
        let mut s = ParameterStore::<f64>::new();
        let id = s.add("e", Shape::Matrix(3, 2), LrGroup::Structure);
        s.value_mut(id).copy_from_slice(&[3.0, 4.0, 1.0, 0.0, 0.0, 0.0]);
        let zeros = s.renormalize_rows(id, 0..3);
        assert_eq!(zeros, 1);
        assert_eq!(s.row(id, 0), &[0.6, 0.8]);
        assert_eq!(s.row(id, 1), &[1.0, 0.0]);
        assert_eq!(s.row(id, 2), &[0.0, 0.0]);
    }

    proptest! {
        #[test]
        fn renormalize_is_idempotent(row in proptest::collection::vec(-5.0f64..5.0, 1..8)) {
            let mut s = ParameterStore::<f64>::new();
            let id = s.add("e", Shape::Matrix(1, row.len()), LrGroup::Structure);
            s.value_mut(id).copy_from_slice(&row);
            s.renormalize_rows(id, [0]);
            let once = s.value(id).to_vec();
            s.renormalize_rows(id, [0]);
            for (a, b) in once.iter().zip(s.value(id)) {
                prop_assert!((a - b).abs() <= 1e-15);
            }
        }

        #[test]
        fn sgd_touches_only_looked_up_rows(
            rows in proptest::collection::btree_set(0usize..10, 0..10),
            l2 in 0.0f64..1.0,
        ) {
            let mut s = ParameterStore::<f64>::new();
            let id = s.add("t", Shape::Matrix(10, 3), LrGroup::Text);
            for (i, v) in s.value_mut(id).iter_mut().enumerate() {
                *v = 1.0 + i as f64;
            }
            let before = s.value(id).to_vec();
            for &r in &rows {
                s.grad_row_mut(id, r)[1] = 0.25;
            }
            s.sgd_step(0.1, 0.1, l2).unwrap();
            for r in 0..10 {
                let changed = s.row(id, r) != &before[r * 3..r * 3 + 3];
                prop_assert_eq!(changed, rows.contains(&r));
            }
        }
    }
}
