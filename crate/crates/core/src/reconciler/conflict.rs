use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::ReconcileError;
use crate::algebra::Command;
use crate::canonical::{clusters, CanonicalSet, ClusterKind};

/// Which replica's update set a command belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    A,
    B,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::A => Side::B,
            Side::B => Side::A,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::A => "a",
            Side::B => "b",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConflictKind {
    /// Any conflict that is not a content conflict.
    Structural,
    /// Both commands act on the same node and leave the same content type
    /// there, i.e. two different files.
    Content,
}

/// A pair of commands from the two sides acting on comparable nodes.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Conflict {
    pub left: Command,
    pub right: Command,
    pub kind: ConflictKind,
}

impl Conflict {
    pub fn command(&self, side: Side) -> &Command {
        match side {
            Side::A => &self.left,
            Side::B => &self.right,
        }
    }
}

impl fmt::Display for Conflict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            ConflictKind::Structural => "structural",
            ConflictKind::Content => "content",
        };
        write!(f, "[{kind}] a: {} | b: {}", self.left, self.right)
    }
}

/// Bipartite graph of conflicts between two disjoint canonical sets.
///
/// Edges are kept sorted by (left node, right node); an edge's index is its
/// stable identifier.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConflictGraph {
    pub a_side: CanonicalSet,
    pub b_side: CanonicalSet,
    pub edges: Vec<Conflict>,
}

impl ConflictGraph {
    pub fn edges_of(&self, side: Side, c: &Command) -> impl Iterator<Item = (usize, &Conflict)> + '_ {
        let c = c.clone();
        self.edges
            .iter()
            .enumerate()
            .filter(move |(_, e)| *e.command(side) == c)
    }

    pub fn side(&self, side: Side) -> &CanonicalSet {
        match side {
            Side::A => &self.a_side,
            Side::B => &self.b_side,
        }
    }
}

pub fn build_conflict_graph(a: &CanonicalSet, b: &CanonicalSet) -> Result<ConflictGraph, ReconcileError> {
    if let Some(shared) = a.iter().find(|c| b.contains(c)) {
        return Err(ReconcileError::NotDisjoint(shared.clone()));
    }
    let mut edges = Vec::new();
    for left in a.iter() {
        // comparable nodes of B: ancestors, the node itself, descendants
        let ancestors = left.node.ancestors().filter_map(|n| b.get(&n));
        let same_or_below = b
            .iter()
            .filter(|r| r.node == left.node || left.node.is_ancestor_of(&r.node));
        for right in ancestors.chain(same_or_below) {
            let kind = if left.node == right.node && left.after.kind() == right.after.kind() {
                ConflictKind::Content
            } else {
                ConflictKind::Structural
            };
            edges.push(Conflict {
                left: left.clone(),
                right: right.clone(),
                kind,
            });
        }
    }
    edges.sort_by(|x, y| (&x.left.node, &x.right.node).cmp(&(&y.left.node, &y.right.node)));
    Ok(ConflictGraph {
        a_side: a.clone(),
        b_side: b.clone(),
        edges,
    })
}

/// Conflict graph with every constructor cluster merged into one vertex.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CollapsedGraph {
    /// Members of each A-side vertex (the expansion map).
    pub a_vertices: Vec<Vec<Command>>,
    pub b_vertices: Vec<Vec<Command>>,
    /// `(a vertex, b vertex, kind)`, sorted.
    pub edges: Vec<(usize, usize, ConflictKind)>,
}

pub fn collapse_constructor_clusters(g: &ConflictGraph) -> Result<CollapsedGraph, ReconcileError> {
    let a_vertices = side_vertices(g, Side::A)?;
    let b_vertices = side_vertices(g, Side::B)?;
    let index = |vertices: &[Vec<Command>]| -> BTreeMap<Command, usize> {
        vertices
            .iter()
            .enumerate()
            .flat_map(|(i, members)| members.iter().map(move |c| (c.clone(), i)))
            .collect()
    };
    let a_index = index(&a_vertices);
    let b_index = index(&b_vertices);

    let mut merged: BTreeMap<(usize, usize), ConflictKind> = BTreeMap::new();
    for e in &g.edges {
        let key = (a_index[&e.left], b_index[&e.right]);
        merged
            .entry(key)
            .and_modify(|k| {
                if *k != e.kind {
                    *k = ConflictKind::Structural;
                }
            })
            .or_insert(e.kind);
    }
    Ok(CollapsedGraph {
        a_vertices,
        b_vertices,
        edges: merged.into_iter().map(|((a, b), k)| (a, b, k)).collect(),
    })
}

fn side_vertices(g: &ConflictGraph, side: Side) -> Result<Vec<Vec<Command>>, ReconcileError> {
    let mut vertices = Vec::new();
    for cluster in clusters(g.side(side)) {
        if cluster.kind != ClusterKind::Constructor {
            vertices.extend(cluster.commands.into_iter().map(|c| vec![c]));
            continue;
        }
        let neighbourhood = |c: &Command| -> Vec<Command> {
            g.edges_of(side, c)
                .map(|(_, e)| e.command(side.other()).clone())
                .collect()
        };
        let first = neighbourhood(&cluster.commands[0]);
        if let Some(odd) = cluster.commands.iter().find(|c| neighbourhood(c) != first) {
            return Err(ReconcileError::Internal(format!(
                "constructor cluster member `{odd}` has a different conflict neighbourhood"
            )));
        }
        vertices.push(cluster.commands);
    }
    Ok(vertices)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fstree::Content;
    use crate::testkit::*;

    #[test]
    fn sample_graph() {
        let g = build_conflict_graph(&sample_a(), &sample_b()).unwrap();
        assert_eq!(g.edges.len(), 15);
        let degree = |i| g.edges_of(Side::A, &sigma(i)).count();
        assert_eq!([degree(1), degree(2), degree(3), degree(4), degree(5)], [5, 4, 3, 2, 1]);
        let partners = |i| -> Vec<Command> { g.edges_of(Side::A, &sigma(i)).map(|(_, e)| e.right.clone()).collect() };
        for (i, expect) in [
            (1, vec![5, 6, 7, 8, 9]),
            (2, vec![5, 7, 8, 9]),
            (3, vec![5, 8, 9]),
            (4, vec![5, 9]),
            (5, vec![5]),
        ] {
            let mut got = partners(i);
            got.sort();
            let mut want: Vec<_> = expect.into_iter().map(tau).collect();
            want.sort();
            assert_eq!(got, want, "σ{i}");
        }
        assert!(g.edges.iter().all(|e| e.kind == ConflictKind::Structural));
    }

    #[test]
    fn content_conflict() {
        let a = set([cmd(5, Content::Directory, Content::file("f"))]);
        let b = set([cmd(5, Content::Directory, Content::file("g"))]);
        let g = build_conflict_graph(&a, &b).unwrap();
        assert_eq!(g.edges.len(), 1);
        assert_eq!(g.edges[0].kind, ConflictKind::Content);
    }

    #[test]
    fn independent_sets_have_no_edges() {
        let a = set([tau(6)]);
        let b = set([tau(7), tau(5)]);
        assert!(build_conflict_graph(&a, &b).unwrap().edges.is_empty());
    }

    #[test]
    fn shared_commands_are_rejected() {
        assert!(matches!(
            build_conflict_graph(&sample_a(), &sample_a()),
            Err(ReconcileError::NotDisjoint(_))
        ));
    }

    #[test]
    fn collapsing() {
        let g = build_conflict_graph(&sample_a(), &sample_b()).unwrap();
        let c = collapse_constructor_clusters(&g).unwrap();
        // destructor chain stays expanded; B is all singletons
        assert_eq!(c.a_vertices.len(), 5);
        assert_eq!(c.b_vertices.len(), 5);
        assert_eq!(c.edges.len(), 15);

        // constructor chain n2 ⊏ n3 ⊏ n4 against a file created at n2
        let e = Content::Empty;
        let d = Content::Directory;
        let a = set([
            cmd(2, e.clone(), d.clone()),
            cmd(3, e.clone(), d.clone()),
            cmd(4, e.clone(), d.clone()),
        ]);
        let b = set([cmd(2, e.clone(), Content::file("x"))]);
        let g = build_conflict_graph(&a, &b).unwrap();
        assert_eq!(g.edges.len(), 3);
        let c = collapse_constructor_clusters(&g).unwrap();
        assert_eq!(c.a_vertices.len(), 1);
        assert_eq!(c.a_vertices[0].len(), 3);
        assert_eq!(c.edges, vec![(0, 0, ConflictKind::Structural)]);

        let empty = build_conflict_graph(&CanonicalSet::empty(), &CanonicalSet::empty()).unwrap();
        let c = collapse_constructor_clusters(&empty).unwrap();
        assert!(c.a_vertices.is_empty() && c.edges.is_empty());
    }
}
