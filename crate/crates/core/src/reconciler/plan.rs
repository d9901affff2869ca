use std::sync::Arc;

use super::merger::is_merger;
use super::ReconcileError;
use crate::algebra::{invert_sequence, Command};
use crate::canonical::{common_witness, CanonicalSet};
use crate::fstree::{apply_sequence, ApplyOutcome, FileSystem};
use crate::namespace::Namespace;

/// What one replica runs to reach the merged state: undo its own commands
/// outside the merger, then perform the other side's commands inside it.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReplicaPlan {
    pub rollback: Vec<Command>,
    pub apply: Vec<Command>,
}

impl ReplicaPlan {
    pub fn is_empty(&self) -> bool {
        self.rollback.is_empty() && self.apply.is_empty()
    }

    /// Rollback then apply, as one sequence.
    pub fn steps(&self) -> impl Iterator<Item = &Command> + '_ {
        self.rollback.iter().chain(self.apply.iter())
    }

    pub fn execute(&self, replica: &FileSystem) -> ApplyOutcome {
        apply_sequence(replica, self.steps())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergePlan {
    pub merger: CanonicalSet,
    pub replica1: ReplicaPlan,
    pub replica2: ReplicaPlan,
}

impl MergePlan {
    /// `replica` is 1 or 2.
    pub fn replica(&self, replica: u8) -> Option<&ReplicaPlan> {
        match replica {
            1 => Some(&self.replica1),
            2 => Some(&self.replica2),
            _ => None,
        }
    }

    /// Runs both plans on their replicas and checks that each lands on the
    /// merger applied to the original. Returns the merged filesystem.
    pub fn verify(
        &self,
        original: &FileSystem,
        replica1: &FileSystem,
        replica2: &FileSystem,
    ) -> Result<FileSystem, ReconcileError> {
        let merged = self.merger.apply_to(original)?;
        for (i, plan, fs) in [(1, &self.replica1, replica1), (2, &self.replica2, replica2)] {
            let got = plan.execute(fs)?;
            if got != merged {
                return Err(ReconcileError::PlanMismatch {
                    replica: i,
                    detail: "final state differs from the merger applied to the original".into(),
                });
            }
        }
        Ok(merged)
    }
}

/// Per-replica plans realizing merger `m` of `a` and `b`.
///
/// Both plans are checked on a filesystem that accepts `a` and `b`.
pub fn merge_plan(a: &CanonicalSet, b: &CanonicalSet, m: &CanonicalSet) -> Result<MergePlan, ReconcileError> {
    if !is_merger(a, b, &m.to_set()) {
        return Err(ReconcileError::NotAMerger);
    }
    let side = |own: &CanonicalSet| -> Result<ReplicaPlan, ReconcileError> {
        let dropped: Vec<Command> = own.order().into_iter().filter(|c| !m.contains(c)).collect();
        Ok(ReplicaPlan {
            rollback: invert_sequence(&dropped),
            apply: m.minus(own)?.order(),
        })
    };
    let plan = MergePlan {
        merger: m.clone(),
        replica1: side(a)?,
        replica2: side(b)?,
    };

    let ns = Arc::new(Namespace::build(a.iter().chain(b.iter()).map(|c| c.node.clone())));
    let original = common_witness(a, b, &ns).ok_or(ReconcileError::NotRefluent)?;
    plan.verify(&original, &a.apply_to(&original)?, &b.apply_to(&original)?)?;
    Ok(plan)
}
