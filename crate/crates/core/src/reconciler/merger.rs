use std::collections::BTreeSet;

use super::ReconcileError;
use crate::algebra::{exec_order, Command};
use crate::canonical::CanonicalSet;

pub const DEFAULT_MERGER_BOUND: usize = 20;

/// `m` is a merger of `a` and `b`: a canonical subset of `a ∪ b` to which no
/// further command of the union can be added.
pub fn is_merger(a: &CanonicalSet, b: &CanonicalSet, m: &BTreeSet<Command>) -> bool {
    let union: BTreeSet<&Command> = a.iter().chain(b.iter()).collect();
    if !m.iter().all(|c| union.contains(c)) {
        return false;
    }
    if CanonicalSet::new(m.iter().cloned()).is_err() {
        return false;
    }
    union
        .into_iter()
        .filter(|c| !m.contains(*c))
        .all(|c| CanonicalSet::new(m.iter().chain(std::iter::once(c)).cloned()).is_err())
}

pub fn enumerate_mergers(a: &CanonicalSet, b: &CanonicalSet) -> Result<Vec<CanonicalSet>, ReconcileError> {
    enumerate_mergers_bounded(a, b, DEFAULT_MERGER_BOUND)
}

/// Every maximal canonical subset of `a ∪ b`, sorted.
///
/// Exhaustive over all subsets of the union, so refused when the union has
/// more than `bound` commands.
pub fn enumerate_mergers_bounded(
    a: &CanonicalSet,
    b: &CanonicalSet,
    bound: usize,
) -> Result<Vec<CanonicalSet>, ReconcileError> {
    let union: Vec<Command> = a
        .iter()
        .chain(b.iter())
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let size = union.len();
    if size > bound || size >= 64 {
        return Err(ReconcileError::EnumerationTooLarge {
            size,
            bound: bound.min(63),
        });
    }
    let masks = Masks::new(&union);

    let mut canonical: Vec<u64> = (0..1u64 << size).filter(|&m| masks.is_canonical(m)).collect();
    canonical.sort_by_key(|m| std::cmp::Reverse(m.count_ones()));
    let mut maximal: Vec<u64> = Vec::new();
    for m in canonical {
        if maximal.iter().all(|&big| m & big != m) {
            maximal.push(m);
        }
    }

    let mut out = maximal
        .into_iter()
        .map(|m| {
            let members = (0..size).filter(|i| m >> i & 1 == 1).map(|i| union[i].clone());
            CanonicalSet::new(members).map_err(ReconcileError::from)
        })
        .collect::<Result<Vec<_>, _>>()?;
    out.sort();
    Ok(out)
}

/// Per-command bitmasks encoding the local canonicity conditions.
struct Masks {
    same_node: Vec<u64>,
    parent: Vec<u64>,
    related_parent: Vec<u64>,
    far_ancestor: Vec<u64>,
}

impl Masks {
    fn new(union: &[Command]) -> Self {
        let n = union.len();
        let mut masks = Masks {
            same_node: vec![0; n],
            parent: vec![0; n],
            related_parent: vec![0; n],
            far_ancestor: vec![0; n],
        };
        for (i, c) in union.iter().enumerate() {
            for (j, d) in union.iter().enumerate() {
                let bit = 1u64 << j;
                if i != j && c.node == d.node {
                    masks.same_node[i] |= bit;
                } else if d.node.is_parent_of(&c.node) {
                    masks.parent[i] |= bit;
                    if exec_order(c, d) || exec_order(d, c) {
                        masks.related_parent[i] |= bit;
                    }
                } else if d.node.is_ancestor_of(&c.node) {
                    masks.far_ancestor[i] |= bit;
                }
            }
        }
        masks
    }

    fn is_canonical(&self, m: u64) -> bool {
        let mut rest = m;
        while rest != 0 {
            let i = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            if m & self.same_node[i] != 0 {
                return false;
            }
            let p = m & self.parent[i];
            let ok = if p != 0 {
                p & !self.related_parent[i] == 0
            } else {
                m & self.far_ancestor[i] == 0
            };
            if !ok {
                return false;
            }
        }
        true
    }
}
