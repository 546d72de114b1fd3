use super::store::ParameterStore;
use crate::scalar::Scalar;

/// Floor of the relative-error denominator.
pub const REL_ERR_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct SlotError {
    pub slot: String,
    pub max_rel_err: f64,
    /// Flat index of the worst component.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Maximum relative error between analytic and central-difference gradients,
/// per parameter slot.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub slots: Vec<SlotError>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.slots.iter().map(|s| s.max_rel_err).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&SlotError> {
        self.slots
            .iter()
            .max_by(|a, b| a.max_rel_err.total_cmp(&b.max_rel_err))
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

/// Compares the gradient that `loss_fn` accumulates into the store against
/// central differences with step `eps`, for every component of every slot.
/// The five-point stencil is used: its truncation error is fourth order in
/// `eps`, so a step large enough to keep rounding noise small stays accurate.
///
/// `loss_fn` must be deterministic and must both return the loss and add its
/// gradient into the store's accumulators. Parameter values are restored and
/// accumulators are left cleared.
pub fn check_gradients<T, F>(store: &mut ParameterStore<T>, mut loss_fn: F, eps: f64) -> GradCheckReport
where
    T: Scalar,
    F: FnMut(&mut ParameterStore<T>) -> T,
{
    store.zero_grad();
    loss_fn(store);
    let ids: Vec<_> = store.ids().collect();
    let analytic: Vec<Vec<f64>> = ids
        .iter()
        .map(|&id| store.grad(id).iter().map(|g| g.to_f64_lossless()).collect())
        .collect();
    store.zero_grad();

    let step = T::from_f64_lossy(eps);
    let mut slots = Vec::with_capacity(ids.len());
    for (&id, grads) in ids.iter().zip(&analytic) {
        let mut worst = SlotError {
            slot: store.name(id).to_owned(),
            max_rel_err: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for (i, &a) in grads.iter().enumerate() {
            let orig = store.value(id)[i];
            let mut at = |k: T| {
                store.value_mut(id)[i] = orig + k * step;
                let v = loss_fn(store).to_f64_lossless();
                store.zero_grad();
                v
            };
            let two = T::two();
            let (p2, p1, m1, m2) = (at(two), at(T::one()), at(-T::one()), at(-two));
            store.value_mut(id)[i] = orig;
            // Fourth-order central stencil.
            let n = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * eps);
            let err = relative_error(a, n);
            if err > worst.max_rel_err {
                worst = SlotError {
                    max_rel_err: err,
                    worst_index: i,
                    analytic: a,
                    numeric: n,
                    ..worst
                };
            }
        }
        slots.push(worst);
    }
    GradCheckReport { slots }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffmath::{LrGroup, Shape};

    #[test]
    fn linear_loss_is_exact() {
        let mut store = ParameterStore::<f64>::new();
        let w = store.add("w", Shape::Vector(4), LrGroup::Text);
        store.value_mut(w).copy_from_slice(&[0.5, -1.0, 2.0, 0.25]);
        let coef = [1.0, -3.0, 0.5, 2.0];
        let report = check_gradients(
            &mut store,
            |s| {
                s.grad_mut(w).copy_from_slice(&coef);
                s.value(w).iter().zip(&coef).map(|(x, c)| x * c).sum()
            },
            1e-5,
        );
        assert!(report.max_rel_err() < 1e-9, "{report:?}");
        assert_eq!(store.value(w), &[0.5, -1.0, 2.0, 0.25]);
    }

    #[test]
    fn detects_wrong_gradient() {
        let mut store = ParameterStore::<f64>::new();
        let w = store.add("w", Shape::Vector(2), LrGroup::Text);
        store.value_mut(w).copy_from_slice(&[0.7, -0.3]);
        let report = check_gradients(
            &mut store,
            |s| {
                let v = s.value(w).to_vec();
                let g = s.grad_mut(w);
                g[0] = 2.0 * v[0] * 1.5;
                g[1] = 2.0 * v[1];
                v.iter().map(|x| x * x).sum()
            },
            1e-5,
        );
        assert!(report.max_rel_err() > 1e-2);
        assert_eq!(report.worst().unwrap().worst_index, 0);
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1e-9, 0.0) - 0.1).abs() < 1e-12);
    }
}
