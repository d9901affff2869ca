//! Internal commands: classification, inversion, same-node composition and
//! the forced parent/child execution order.

use std::fmt;

use thiserror::Error;

use crate::fstree::{Content, ContentKind};
use crate::namespace::NodeId;

/// Replace `before` with `after` at `node`.
///
/// Null commands (`before == after`) are representable but never appear in
/// canonical sets.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Command {
    pub node: NodeId,
    pub before: Content,
    pub after: Content,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CommandClass {
    /// Upgrades the type E → F → D.
    Constructor,
    /// Downgrades the type D → F → E.
    Destructor,
    /// Replaces one file payload with a different one.
    EditFile,
    Null,
}

impl CommandClass {
    pub fn is_structural(self) -> bool {
        matches!(self, CommandClass::Constructor | CommandClass::Destructor)
    }
}

/// Result of fusing two commands on the same node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Composition {
    Command(Command),
    /// The pair breaks every filesystem (the ε command).
    BreaksEverything,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("cannot compose commands on different nodes {0} and {1}")]
pub struct NodeMismatch(pub NodeId, pub NodeId);

impl Command {
    pub fn new(node: NodeId, before: Content, after: Content) -> Self {
        Self { node, before, after }
    }

    pub fn class(&self) -> CommandClass {
        classify(self)
    }

    pub fn is_null(&self) -> bool {
        self.before == self.after
    }

    pub fn is_constructor(&self) -> bool {
        self.class() == CommandClass::Constructor
    }

    pub fn is_destructor(&self) -> bool {
        self.class() == CommandClass::Destructor
    }

    pub fn inverse(&self) -> Command {
        Command::new(self.node.clone(), self.after.clone(), self.before.clone())
    }

    /// `self ⊏ other`: `self` must run before `other`.
    pub fn precedes(&self, other: &Command) -> bool {
        exec_order(self, other)
    }

    /// The commands act on independent (incomparable) nodes.
    pub fn is_independent_of(&self, other: &Command) -> bool {
        independent(self, other)
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {} -> {}", self.node, self.before, self.after)
    }
}

pub fn classify(c: &Command) -> CommandClass {
    if c.is_null() {
        return CommandClass::Null;
    }
    let (x, y) = (c.before.kind(), c.after.kind());
    match x.cmp(&y) {
        std::cmp::Ordering::Less => CommandClass::Constructor,
        std::cmp::Ordering::Greater => CommandClass::Destructor,
        // only F → F with different payloads remains
        std::cmp::Ordering::Equal => CommandClass::EditFile,
    }
}

pub fn invert(c: &Command) -> Command {
    c.inverse()
}

/// Inverts every command and reverses the order.
pub fn invert_sequence(seq: &[Command]) -> Vec<Command> {
    seq.iter().rev().map(Command::inverse).collect()
}

/// Fuses `s` followed by `t` on the same node into one command.
pub fn compose_same_node(s: &Command, t: &Command) -> Result<Composition, NodeMismatch> {
    if s.node != t.node {
        return Err(NodeMismatch(s.node.clone(), t.node.clone()));
    }
    if s.after == t.before {
        Ok(Composition::Command(Command::new(
            s.node.clone(),
            s.before.clone(),
            t.after.clone(),
        )))
    } else {
        Ok(Composition::BreaksEverything)
    }
}

/// The execution-order relation `s ⊏ t`.
///
/// Holds when the pair matches `⟨n, DF, E⟩ ⊏ ⟨parent n, D, FE⟩` (a directory
/// is emptied bottom-up) or `⟨parent n, EF, D⟩ ⊏ ⟨n, E, FD⟩` (a directory is
/// created before its content).
pub fn exec_order(s: &Command, t: &Command) -> bool {
    use ContentKind::{Directory as D, Empty as E, File as F};
    let (sx, sy) = (s.before.kind(), s.after.kind());
    let (tx, ty) = (t.before.kind(), t.after.kind());
    let upward = t.node.is_parent_of(&s.node) && matches!(sx, D | F) && sy == E && tx == D && matches!(ty, F | E);
    let downward = s.node.is_parent_of(&t.node) && matches!(sx, E | F) && sy == D && tx == E && matches!(ty, F | D);
    upward || downward
}

/// `s ⊥ t`: the nodes are distinct and neither is an ancestor of the other.
pub fn independent(s: &Command, t: &Command) -> bool {
    !s.node.is_comparable(&t.node)
}
