//! Mergers of two update sets, the conflict graph, winner/loser resolution
//! and the per-replica plans that realize a merger.

mod conflict;
mod merger;
mod plan;
mod resolve;

use thiserror::Error;

use crate::algebra::Command;
use crate::canonical::Violation;
use crate::fstree::Broken;

pub use conflict::{
    build_conflict_graph, collapse_constructor_clusters, CollapsedGraph, Conflict, ConflictGraph, ConflictKind, Side,
};
pub use merger::{enumerate_mergers, enumerate_mergers_bounded, is_merger, DEFAULT_MERGER_BOUND};
pub use plan::{merge_plan, MergePlan, ReplicaPlan};
pub use resolve::{
    reconcile, reconcile_disjoint, reconcile_disjoint_traced, reconcile_traced, Arbiter, ContentPolicy, Decision,
    Policy, Reconciliation, Resolver, Step,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReconcileError {
    #[error("`{0}` occurs in both update sets; reconcile the general case instead")]
    NotDisjoint(Command),
    #[error("guided target is not a merger of the inputs: {0}")]
    GuidedTargetInvalid(String),
    #[error("content conflict needs an explicit decision: {0}")]
    ContentConflictNeedsDecision(Conflict),
    #[error("conflict {0} is not live")]
    StaleConflict(usize),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("conflict resolution aborted")]
    Aborted,
    #[error("{size} commands exceed the enumeration bound of {bound}")]
    EnumerationTooLarge { size: usize, bound: usize },
    #[error("the given set is not a merger of the inputs")]
    NotAMerger,
    #[error("the update sets are not applicable to a common filesystem")]
    NotRefluent,
    #[error("plan for replica {replica} does not reach the merged state: {detail}")]
    PlanMismatch { replica: u8, detail: String },
    #[error("plan step failed: {0}")]
    Broken(#[from] Broken),
    #[error(transparent)]
    Violation(#[from] Violation),
    #[error("internal error: {0}")]
    Internal(String),
}
