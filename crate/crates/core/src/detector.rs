//! Update detection: the canonical set that turns the original filesystem
//! into a replica, computed either from the two states or from a log.

use std::collections::hash_map::Entry;
use std::collections::HashMap;
use std::iter::Peekable;

use thiserror::Error;

use crate::algebra::{compose_same_node, Command, Composition};
use crate::canonical::{CanonicalSet, Violation};
use crate::fstree::{apply_sequence, Broken, Content, FileSystem};
use crate::namespace::NodeId;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DetectError {
    #[error("filesystems are defined over different namespaces")]
    NamespaceMismatch,
    #[error("{which} filesystem violates the tree property at {node}")]
    TreeProperty { which: &'static str, node: NodeId },
    #[error("log entry does not apply: {0}")]
    LogBroken(#[from] Broken),
    #[error("detected command set is not canonical: {0}")]
    Internal(#[from] Violation),
}

/// An original filesystem together with a log of commands that applies to
/// it in order.
#[derive(Debug, Clone)]
pub struct UpdateLog {
    original: FileSystem,
    entries: Vec<Command>,
    result: FileSystem,
}

impl UpdateLog {
    pub fn new(original: FileSystem, entries: Vec<Command>) -> Result<Self, DetectError> {
        if let Some(node) = original.tree_violation() {
            return Err(DetectError::TreeProperty {
                which: "original",
                node,
            });
        }
        let result = apply_sequence(&original, &entries)?;
        Ok(Self {
            original,
            entries,
            result,
        })
    }

    pub fn original(&self) -> &FileSystem {
        &self.original
    }

    pub fn entries(&self) -> &[Command] {
        &self.entries
    }

    /// The state after every entry has been applied.
    pub fn result(&self) -> &FileSystem {
        &self.result
    }
}

/// State-based detector: one command `⟨n, FS(n), FS₁(n)⟩` per node where the
/// two filesystems differ.
///
/// Both inputs store only their visible (non-Empty) nodes in pre-order, so a
/// merge-walk over the two visible trees finds every difference without ever
/// touching nodes that are Empty on both sides.
pub fn diff_states(original: &FileSystem, replica: &FileSystem) -> Result<CanonicalSet, DetectError> {
    if original.namespace() != replica.namespace() {
        return Err(DetectError::NamespaceMismatch);
    }
    if let Some(node) = original.tree_violation() {
        return Err(DetectError::TreeProperty {
            which: "original",
            node,
        });
    }
    if let Some(node) = replica.tree_violation() {
        return Err(DetectError::TreeProperty { which: "replica", node });
    }
    let diff = MergeWalk {
        left: original.visible().peekable(),
        right: replica.visible().peekable(),
    }
    .filter(|(_, before, after)| before != after)
    .map(|(node, before, after)| Command::new(node.clone(), before.clone(), after.clone()));
    Ok(CanonicalSet::new(diff)?)
}

struct MergeWalk<'a, L, R>
where
    L: Iterator<Item = (&'a NodeId, &'a Content)>,
    R: Iterator<Item = (&'a NodeId, &'a Content)>,
{
    left: Peekable<L>,
    right: Peekable<R>,
}

impl<'a, L, R> Iterator for MergeWalk<'a, L, R>
where
    L: Iterator<Item = (&'a NodeId, &'a Content)>,
    R: Iterator<Item = (&'a NodeId, &'a Content)>,
{
    type Item = (&'a NodeId, &'a Content, &'a Content);

    fn next(&mut self) -> Option<Self::Item> {
        static EMPTY: Content = Content::Empty;
        match (self.left.peek(), self.right.peek()) {
            (None, None) => None,
            (Some(_), None) => self.left.next().map(|(n, c)| (n, c, &EMPTY)),
            (None, Some(_)) => self.right.next().map(|(n, c)| (n, &EMPTY, c)),
            (Some((ln, _)), Some((rn, _))) => match ln.cmp(rn) {
                std::cmp::Ordering::Less => self.left.next().map(|(n, c)| (n, c, &EMPTY)),
                std::cmp::Ordering::Greater => self.right.next().map(|(n, c)| (n, &EMPTY, c)),
                std::cmp::Ordering::Equal => {
                    let (n, l) = self.left.next()?;
                    let (_, r) = self.right.next()?;
                    Some((n, l, r))
                }
            },
        }
    }
}

/// Command-based detector: fold the log per node, composing each entry into
/// the accumulated command for its node, then drop the nulls.
pub fn replay_log(log: &UpdateLog) -> Result<CanonicalSet, DetectError> {
    let mut acc: HashMap<&NodeId, Command> = HashMap::with_capacity(log.entries.len());
    for c in &log.entries {
        match acc.entry(&c.node) {
            Entry::Vacant(v) => {
                v.insert(c.clone());
            }
            Entry::Occupied(mut o) => match compose_same_node(o.get(), c).expect("same node") {
                Composition::Command(fused) => {
                    o.insert(fused);
                }
                Composition::BreaksEverything => {
                    // the log applied cleanly, so consecutive same-node
                    // entries always chain
                    unreachable!("validated log fused to ε at {}", c.node)
                }
            },
        }
    }
    Ok(CanonicalSet::new(acc.into_values().filter(|c| !c.is_null()))?)
}
