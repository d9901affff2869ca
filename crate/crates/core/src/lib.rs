//! Reconciliation of two diverged filesystem replicas.
//!
//! Updates are detected as canonical sets of internal commands; a merger is
//! a maximal canonical subset of both update sets, reached by resolving
//! conflicts one winner at a time and realized on each replica by a
//! rollback-then-apply plan.

pub mod algebra;
pub mod canonical;
pub mod cli;
pub mod detector;
pub mod formats;
pub mod fstree;
pub mod namespace;
pub mod reconciler;
#[cfg(feature = "server")]
pub mod service;

#[cfg(test)]
mod testkit;

pub use algebra::{Command, CommandClass};
pub use canonical::CanonicalSet;
pub use detector::{diff_states, replay_log, UpdateLog};
pub use fstree::{Content, ContentKind, FileSystem, Payload};
pub use namespace::{Namespace, NodeId};
pub use reconciler::{enumerate_mergers, merge_plan, reconcile, MergePlan, Policy};
