//! Filesystem states over a namespace and the application of commands.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Bound::{Excluded, Unbounded};
use std::sync::Arc;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::algebra::Command;
use crate::namespace::{Namespace, NamespaceError, NodeId};

/// Default refusal threshold for [`enumerate_filesystems`].
pub const DEFAULT_ENUMERATION_BOUND: u64 = 1_000_000;

/// Full content of a file. Compared byte for byte.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Payload(Arc<[u8]>);

impl Payload {
    pub fn new(bytes: impl Into<Vec<u8>>) -> Self {
        Self(Arc::from(bytes.into()))
    }

    pub fn bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_text(&self) -> Option<&str> {
        std::str::from_utf8(&self.0).ok()
    }

    /// `sha256:<hex>` of the bytes.
    pub fn digest(&self) -> String {
        format!("sha256:{}", hex::encode(Sha256::digest(&self.0)))
    }

    /// Short human-facing label: a quoted literal for short text, otherwise
    /// an abbreviated digest.
    pub fn label(&self) -> String {
        match self.as_text() {
            Some(t) if t.chars().count() <= 40 => serde_json::to_string(t).unwrap_or_else(|_| self.digest()),
            _ => {
                let d = self.digest();
                d[..d.len().min(7 + 16)].to_owned()
            }
        }
    }
}

impl From<&str> for Payload {
    fn from(s: &str) -> Self {
        Self::new(s.as_bytes().to_vec())
    }
}

impl From<Vec<u8>> for Payload {
    fn from(v: Vec<u8>) -> Self {
        Self::new(v)
    }
}

impl fmt::Debug for Payload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Payload({})", self.label())
    }
}

/// Type of a node value. Ordered by constructor direction: E < F < D.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ContentKind {
    Empty,
    File,
    Directory,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum Content {
    #[default]
    Empty,
    Directory,
    File(Payload),
}

impl Content {
    pub fn file(payload: impl Into<Payload>) -> Self {
        Content::File(payload.into())
    }

    pub fn kind(&self) -> ContentKind {
        match self {
            Content::Empty => ContentKind::Empty,
            Content::Directory => ContentKind::Directory,
            Content::File(_) => ContentKind::File,
        }
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, Content::Empty)
    }

    pub fn is_dir(&self) -> bool {
        matches!(self, Content::Directory)
    }

    pub fn payload(&self) -> Option<&Payload> {
        match self {
            Content::File(p) => Some(p),
            _ => None,
        }
    }
}

impl From<Payload> for Content {
    fn from(p: Payload) -> Self {
        Content::File(p)
    }
}

impl fmt::Display for Content {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Content::Empty => f.write_str("empty"),
            Content::Directory => f.write_str("dir"),
            Content::File(p) => write!(f, "file({})", p.label()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BreakReason {
    /// The node did not hold the command's before-content.
    PreconditionMismatch {
        found: Content,
    },
    /// Substituting the after-content would leave `violator` without a
    /// directory parent.
    TreeProperty {
        violator: NodeId,
    },
    UnknownNode,
}

/// The ⊥ outcome: a command (at `index` in its sequence) was not applicable.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("command #{index} `{command}` breaks the filesystem: {}", describe(.reason))]
pub struct Broken {
    pub index: usize,
    pub command: Command,
    pub reason: BreakReason,
}

fn describe(reason: &BreakReason) -> String {
    match reason {
        BreakReason::PreconditionMismatch { found } => format!("node holds {found}"),
        BreakReason::TreeProperty { violator } => {
            format!("tree property violated at {violator}")
        }
        BreakReason::UnknownNode => "node outside the namespace".to_owned(),
    }
}

pub type ApplyOutcome = Result<FileSystem, Broken>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EnumerationError {
    #[error("enumeration would visit up to {estimate} content maps, above the bound {bound}")]
    TooLarge { estimate: u128, bound: u64 },
}

/// Node values over a namespace. Empty values are not stored.
#[derive(Clone, PartialEq, Eq)]
pub struct FileSystem {
    ns: Arc<Namespace>,
    values: BTreeMap<NodeId, Content>,
}

impl FileSystem {
    /// The all-Empty filesystem.
    pub fn new(ns: Arc<Namespace>) -> Self {
        Self {
            ns,
            values: BTreeMap::new(),
        }
    }

    /// Builds a filesystem from explicit values. The tree property is not
    /// checked here; see [`FileSystem::tree_violation`].
    pub fn from_entries<I>(ns: Arc<Namespace>, entries: I) -> Result<Self, NamespaceError>
    where
        I: IntoIterator<Item = (NodeId, Content)>,
    {
        let mut fs = Self::new(ns);
        for (node, content) in entries {
            fs.set(node, content)?;
        }
        Ok(fs)
    }

    pub fn namespace(&self) -> &Arc<Namespace> {
        &self.ns
    }

    pub fn get(&self, node: &NodeId) -> &Content {
        static EMPTY: Content = Content::Empty;
        self.values.get(node).unwrap_or(&EMPTY)
    }

    /// Raw assignment without a tree-property check.
    pub fn set(&mut self, node: NodeId, content: Content) -> Result<(), NamespaceError> {
        self.ns.check(&node)?;
        if content.is_empty() {
            self.values.remove(&node);
        } else {
            self.values.insert(node, content);
        }
        Ok(())
    }

    /// Non-Empty nodes in pre-order.
    pub fn visible(&self) -> impl Iterator<Item = (&NodeId, &Content)> + '_ {
        self.values.iter()
    }

    pub fn visible_len(&self) -> usize {
        self.values.len()
    }

    /// First node (in pre-order) whose parent is not a directory while the
    /// node itself is non-Empty.
    pub fn tree_violation(&self) -> Option<NodeId> {
        self.values
            .keys()
            .find(|n| n.parent().is_some_and(|p| !self.get(&p).is_dir()))
            .cloned()
    }

    pub fn has_tree_property(&self) -> bool {
        self.tree_violation().is_none()
    }

    fn first_visible_descendant(&self, node: &NodeId) -> Option<&NodeId> {
        self.values
            .range((Excluded(node), Unbounded))
            .next()
            .map(|(d, _)| d)
            .filter(|d| node.is_ancestor_of(d))
    }

    fn apply_in_place(&mut self, c: &Command) -> Result<(), BreakReason> {
        if !self.ns.contains(&c.node) {
            return Err(BreakReason::UnknownNode);
        }
        let found = self.get(&c.node);
        if *found != c.before {
            return Err(BreakReason::PreconditionMismatch { found: found.clone() });
        }
        if !c.after.is_empty() {
            if let Some(p) = c.node.parent() {
                if !self.get(&p).is_dir() {
                    return Err(BreakReason::TreeProperty {
                        violator: c.node.clone(),
                    });
                }
            }
        }
        if !c.after.is_dir() {
            if let Some(d) = self.first_visible_descendant(&c.node) {
                return Err(BreakReason::TreeProperty { violator: d.clone() });
            }
        }
        if c.after.is_empty() {
            self.values.remove(&c.node);
        } else {
            self.values.insert(c.node.clone(), c.after.clone());
        }
        Ok(())
    }

    pub fn apply(&self, c: &Command) -> ApplyOutcome {
        apply_command(self, c)
    }

    pub fn apply_all<'a, I>(&self, seq: I) -> ApplyOutcome
    where
        I: IntoIterator<Item = &'a Command>,
    {
        apply_sequence(self, seq)
    }
}

impl fmt::Debug for FileSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_map()
            .entries(self.values.iter().map(|(k, v)| (k.to_string(), v.to_string())))
            .finish()
    }
}

pub fn check_tree_property(fs: &FileSystem) -> Result<(), NodeId> {
    match fs.tree_violation() {
        None => Ok(()),
        Some(n) => Err(n),
    }
}

pub fn apply_command(fs: &FileSystem, c: &Command) -> ApplyOutcome {
    let mut out = fs.clone();
    out.apply_in_place(c).map_err(|reason| Broken {
        index: 0,
        command: c.clone(),
        reason,
    })?;
    Ok(out)
}

/// Left-to-right action of a command sequence; the empty sequence is the
/// identity.
pub fn apply_sequence<'a, I>(fs: &FileSystem, seq: I) -> ApplyOutcome
where
    I: IntoIterator<Item = &'a Command>,
{
    let mut out = fs.clone();
    for (index, c) in seq.into_iter().enumerate() {
        out.apply_in_place(c).map_err(|reason| Broken {
            index,
            command: c.clone(),
            reason,
        })?;
    }
    Ok(out)
}

/// All filesystems over `ns` that have the tree property, with file payloads
/// drawn from `alphabet`. Refuses when `(2 + |alphabet|)^|ns|` exceeds `bound`.
pub fn enumerate_filesystems(
    ns: &Arc<Namespace>,
    alphabet: &[Payload],
    bound: u64,
) -> Result<std::vec::IntoIter<FileSystem>, EnumerationError> {
    let base = 2u128 + alphabet.len() as u128;
    let estimate = base.checked_pow(ns.len() as u32).unwrap_or(u128::MAX);
    if estimate > bound as u128 {
        return Err(EnumerationError::TooLarge { estimate, bound });
    }

    let nodes: Vec<&NodeId> = ns.iter().collect();
    let parent_idx: Vec<Option<usize>> = nodes
        .iter()
        .map(|n| n.parent().and_then(|p| nodes.iter().position(|m| **m == p)))
        .collect();
    let mut choices = vec![Content::Empty, Content::Directory];
    choices.extend(alphabet.iter().cloned().map(Content::File));

    let mut out = Vec::new();
    let mut current = vec![Content::Empty; nodes.len()];
    fill(0, &nodes, &parent_idx, &choices, &mut current, ns, &mut out);
    Ok(out.into_iter())
}

fn fill(
    i: usize,
    nodes: &[&NodeId],
    parent_idx: &[Option<usize>],
    choices: &[Content],
    current: &mut Vec<Content>,
    ns: &Arc<Namespace>,
    out: &mut Vec<FileSystem>,
) {
    if i == nodes.len() {
        let values = nodes
            .iter()
            .zip(current.iter())
            .filter(|(_, c)| !c.is_empty())
            .map(|(n, c)| ((*n).clone(), c.clone()))
            .collect();
        out.push(FileSystem {
            ns: Arc::clone(ns),
            values,
        });
        return;
    }
    let parent_is_dir = parent_idx[i].is_none_or(|p| current[p].is_dir());
    let allowed = if parent_is_dir { choices } else { &choices[..1] };
    for c in allowed {
        current[i] = c.clone();
        fill(i + 1, nodes, parent_idx, choices, current, ns, out);
    }
    current[i] = Content::Empty;
}
