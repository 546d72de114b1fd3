use crate::dataset::EntityId;
use crate::error::{Error, Result};
use crate::model::JointModel;
use crate::scalar::Scalar;

pub const DEFAULT_GATE_GROUPS: usize = 50;
pub const SUMMARY_GATE_GROUPS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct GateGroup {
    pub group_index: usize,
    pub entities: usize,
    pub freq_lo: usize,
    pub freq_hi: usize,
    /// Mean over all gate components of the group's entities.
    pub mean_gate: f64,
}

/// Splits `order` into `groups` contiguous chunks whose sizes differ by at
/// most one (the earlier chunks take the remainder).
pub fn partition_sizes(n: usize, groups: usize) -> Vec<usize> {
    let (base, extra) = (n / groups, n % groups);
    (0..groups).map(|g| base + usize::from(g < extra)).collect()
}

/// Mean gate activation per frequency group, most frequent entities first.
/// `groups` is capped at the number of entities. Entities without text count
/// with their fixed gate of one.
pub fn gate_report<T: Scalar>(model: &JointModel<T>, groups: usize) -> Result<Vec<GateGroup>> {
    if model.layout().gate_slot().is_none() {
        return Err(Error::Config("model has no gates (structure-only)".into()));
    }
    let freq = model.dataset().entity_frequencies();
    let mut order: Vec<usize> = (0..freq.len()).collect();
    order.sort_by(|&a, &b| freq[b].cmp(&freq[a]).then(a.cmp(&b)));
    let groups = groups.clamp(1, order.len().max(1));
    let mut out = Vec::with_capacity(groups);
    let mut start = 0;
    for (g, size) in partition_sizes(order.len(), groups).into_iter().enumerate() {
        let members = &order[start..start + size];
        start += size;
        let (mut sum, mut n) = (0.0, 0usize);
        for &e in members {
            let gate = model.effective_gate(EntityId(e as u32)).expect("gated model");
            sum += gate.iter().map(|x| x.to_f64_lossless()).sum::<f64>();
            n += gate.len();
        }
        out.push(GateGroup {
            group_index: g,
            entities: members.len(),
            freq_lo: members.iter().map(|&e| freq[e]).min().unwrap_or(0),
            freq_hi: members.iter().map(|&e| freq[e]).max().unwrap_or(0),
            mean_gate: if n == 0 { f64::NAN } else { sum / n as f64 },
        });
    }
    Ok(out)
}
