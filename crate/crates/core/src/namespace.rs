//! Node identities and the fixed forest of paths they live in.
//!
//! A node is identified by its full path. The ancestor relation is therefore
//! structural: `/a` is above `/a/b/c` no matter which namespace both belong
//! to. A [`Namespace`] fixes the finite, ancestor-closed set of nodes a
//! synchronization run is allowed to touch.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PathError {
    #[error("path `{0}` must start with `/`")]
    NotAbsolute(String),
    #[error("path `{0}` is empty")]
    Empty(String),
    #[error("path `{0}` contains an empty segment")]
    EmptySegment(String),
    #[error("segment `{0}` contains a path separator")]
    Separator(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NamespaceError {
    #[error("node {0} is not in the namespace")]
    UnknownNode(NodeId),
}

/// A node of the namespace, named by its path segments.
///
/// Ordering is lexicographic on the segment list, so a node sorts right
/// before all of its descendants and every subtree is a contiguous range.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId {
    segments: Vec<String>,
}

impl NodeId {
    pub fn from_segments<I, S>(segments: I) -> Result<Self, PathError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let segments: Vec<String> = segments.into_iter().map(Into::into).collect();
        if segments.is_empty() {
            return Err(PathError::Empty(String::new()));
        }
        for s in &segments {
            if s.is_empty() {
                return Err(PathError::EmptySegment(format!("/{}", segments.join("/"))));
            }
            if s.contains('/') {
                return Err(PathError::Separator(s.clone()));
            }
        }
        Ok(Self { segments })
    }

    pub fn parse(path: &str) -> Result<Self, PathError> {
        let rest = path
            .strip_prefix('/')
            .ok_or_else(|| PathError::NotAbsolute(path.to_owned()))?;
        if rest.is_empty() {
            return Err(PathError::Empty(path.to_owned()));
        }
        if rest.split('/').any(str::is_empty) {
            return Err(PathError::EmptySegment(path.to_owned()));
        }
        Ok(Self {
            segments: rest.split('/').map(str::to_owned).collect(),
        })
    }

    pub fn segments(&self) -> &[String] {
        &self.segments
    }

    pub fn name(&self) -> &str {
        self.segments.last().map(String::as_str).unwrap_or_default()
    }

    /// Number of segments; roots have depth 1.
    pub fn depth(&self) -> usize {
        self.segments.len()
    }

    pub fn is_root(&self) -> bool {
        self.segments.len() == 1
    }

    /// The one-segment-shorter prefix, `None` for roots.
    pub fn parent(&self) -> Option<NodeId> {
        if self.is_root() {
            None
        } else {
            Some(Self {
                segments: self.segments[..self.segments.len() - 1].to_vec(),
            })
        }
    }

    pub fn child(&self, name: &str) -> Result<NodeId, PathError> {
        if name.is_empty() {
            return Err(PathError::EmptySegment(format!("{self}/")));
        }
        if name.contains('/') {
            return Err(PathError::Separator(name.to_owned()));
        }
        let mut segments = self.segments.clone();
        segments.push(name.to_owned());
        Ok(Self { segments })
    }

    /// Strict ancestors, nearest first.
    pub fn ancestors(&self) -> impl Iterator<Item = NodeId> + '_ {
        (1..self.segments.len()).rev().map(move |len| Self {
            segments: self.segments[..len].to_vec(),
        })
    }

    /// `self ≺ other`: self is a strict ancestor of other.
    pub fn is_ancestor_of(&self, other: &NodeId) -> bool {
        self.segments.len() < other.segments.len() && other.segments[..self.segments.len()] == self.segments[..]
    }

    pub fn is_parent_of(&self, other: &NodeId) -> bool {
        self.segments.len() + 1 == other.segments.len() && self.is_ancestor_of(other)
    }

    pub fn relation(&self, other: &NodeId) -> Relation {
        if self == other {
            Relation::Equal
        } else if self.is_ancestor_of(other) {
            Relation::Above
        } else if other.is_ancestor_of(self) {
            Relation::Below
        } else {
            Relation::Independent
        }
    }

    pub fn is_comparable(&self, other: &NodeId) -> bool {
        self.relation(other) != Relation::Independent
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.segments {
            write!(f, "/{s}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "NodeId({self})")
    }
}

impl FromStr for NodeId {
    type Err = PathError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

impl Serialize for NodeId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for NodeId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        NodeId::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// Position of one node relative to another in the ancestor order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Relation {
    Equal,
    /// The first node is a strict ancestor of the second.
    Above,
    /// The first node is a strict descendant of the second.
    Below,
    Independent,
}

/// A finite, ancestor-closed set of nodes.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Namespace {
    nodes: BTreeSet<NodeId>,
}

impl Namespace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Ancestor closure of the given nodes.
    pub fn build<I>(nodes: I) -> Self
    where
        I: IntoIterator<Item = NodeId>,
    {
        let mut ns = Self::new();
        ns.extend(nodes);
        ns
    }

    /// Parses every path and builds the ancestor closure.
    pub fn from_paths<I, S>(paths: I) -> Result<Self, PathError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let nodes = paths
            .into_iter()
            .map(|p| NodeId::parse(p.as_ref()))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::build(nodes))
    }

    pub fn insert(&mut self, node: NodeId) {
        if self.nodes.contains(&node) {
            return;
        }
        for a in node.ancestors() {
            if !self.nodes.insert(a) {
                // ancestors of an existing node are already present
                break;
            }
        }
        self.nodes.insert(node);
    }

    pub fn merge(&mut self, other: &Namespace) {
        self.nodes.extend(other.nodes.iter().cloned());
    }

    pub fn contains(&self, node: &NodeId) -> bool {
        self.nodes.contains(node)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes in pre-order (parents before children, siblings sorted).
    pub fn iter(&self) -> impl Iterator<Item = &NodeId> + '_ {
        self.nodes.iter()
    }

    pub fn roots(&self) -> impl Iterator<Item = &NodeId> + '_ {
        self.nodes.iter().filter(|n| n.is_root())
    }

    pub fn children<'a>(&'a self, node: &'a NodeId) -> impl Iterator<Item = &'a NodeId> + 'a {
        self.descendants(node).filter(move |d| node.is_parent_of(d))
    }

    /// Strict descendants of `node`, in pre-order.
    pub fn descendants<'a>(&'a self, node: &'a NodeId) -> impl Iterator<Item = &'a NodeId> + 'a {
        use std::ops::Bound::{Excluded, Unbounded};
        self.nodes
            .range((Excluded(node), Unbounded))
            .take_while(move |d| node.is_ancestor_of(d))
    }

    pub fn check(&self, node: &NodeId) -> Result<(), NamespaceError> {
        if self.contains(node) {
            Ok(())
        } else {
            Err(NamespaceError::UnknownNode(node.clone()))
        }
    }

    pub fn parent(&self, node: &NodeId) -> Result<Option<NodeId>, NamespaceError> {
        self.check(node)?;
        Ok(node.parent())
    }

    pub fn compare(&self, n: &NodeId, m: &NodeId) -> Result<Relation, NamespaceError> {
        self.check(n)?;
        self.check(m)?;
        Ok(n.relation(m))
    }

    /// True when every node's parent is also present.
    pub fn is_ancestor_closed(&self) -> bool {
        self.nodes
            .iter()
            .all(|n| n.parent().is_none_or(|p| self.nodes.contains(&p)))
    }
}

impl Extend<NodeId> for Namespace {
    fn extend<T: IntoIterator<Item = NodeId>>(&mut self, iter: T) {
        for n in iter {
            self.insert(n);
        }
    }
}

impl FromIterator<NodeId> for Namespace {
    fn from_iter<T: IntoIterator<Item = NodeId>>(iter: T) -> Self {
        Self::build(iter)
    }
}
