//! Fixtures and brute-force oracles shared by the integration tests.
//!
//! Nothing here calls into the library's ordering, canonicity or merger code;
//! the oracles work from the raw command triples.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;

use rand::rngs::StdRng;
use rand::Rng;

use treesync::algebra::Command;
use treesync::canonical::CanonicalSet;
use treesync::formats::Snapshot;
use treesync::{diff_states, Content, ContentKind, FileSystem, Namespace, NodeId, Payload};

// ---------------------------------------------------------------------------
// the nine-node example

pub fn n(i: usize) -> NodeId {
    let path = match i {
        1 => "/n1",
        2 => "/n1/n2",
        3 => "/n1/n2/n3",
        4 => "/n1/n2/n3/n4",
        5 => "/n1/n2/n3/n4/n5",
        6 => "/n1/n6",
        7 => "/n1/n2/n7",
        8 => "/n1/n2/n3/n8",
        9 => "/n1/n2/n3/n4/n9",
        _ => panic!("no node n{i}"),
    };
    NodeId::parse(path).unwrap()
}

pub fn f(i: usize) -> Content {
    Content::file(format!("f{i}").as_str())
}

pub fn sigma(i: usize) -> Command {
    Command::new(n(i), Content::Directory, Content::Empty)
}

pub fn tau(i: usize) -> Command {
    let before = if i == 5 { Content::Directory } else { Content::Empty };
    Command::new(n(i), before, f(i))
}

pub fn set(cmds: impl IntoIterator<Item = Command>) -> CanonicalSet {
    CanonicalSet::new(cmds).unwrap()
}

pub fn cmds(cmds: impl IntoIterator<Item = Command>) -> BTreeSet<Command> {
    cmds.into_iter().collect()
}

pub fn sample_ns() -> Arc<Namespace> {
    Arc::new(Namespace::build((1..=9).map(n)))
}

/// n1..n5 are directories.
pub fn sample_original() -> FileSystem {
    FileSystem::from_entries(sample_ns(), (1..=5).map(|i| (n(i), Content::Directory))).unwrap()
}

/// Everything deleted.
pub fn sample_replica1() -> FileSystem {
    FileSystem::new(sample_ns())
}

/// n5 replaced by a file, files added at n6..n9.
pub fn sample_replica2() -> FileSystem {
    FileSystem::from_entries(
        sample_ns(),
        (1..=4)
            .map(|i| (n(i), Content::Directory))
            .chain((5..=9).map(|i| (n(i), f(i)))),
    )
    .unwrap()
}

pub fn sample_a() -> CanonicalSet {
    set((1..=5).map(sigma))
}

pub fn sample_b() -> CanonicalSet {
    set((5..=9).map(tau))
}

/// The six mergers: both sides, and the four mixed ones.
pub fn sample_mergers() -> Vec<BTreeSet<Command>> {
    vec![
        cmds((1..=5).map(sigma)),
        cmds((5..=9).map(tau)),
        cmds([sigma(5), tau(6), tau(7), tau(8), tau(9)]),
        cmds([sigma(4), sigma(5), tau(6), tau(7), tau(8)]),
        cmds([sigma(3), sigma(4), sigma(5), tau(6), tau(7)]),
        cmds([sigma(2), sigma(3), sigma(4), sigma(5), tau(6)]),
    ]
}

/// Writes the example's original and replicas as snapshot files.
pub fn write_sample_snapshots(dir: &Path) -> [std::path::PathBuf; 3] {
    let paths = ["original.jsonl", "replica1.jsonl", "replica2.jsonl"].map(|p| dir.join(p));
    for (path, fs) in paths
        .iter()
        .zip([sample_original(), sample_replica1(), sample_replica2()])
    {
        Snapshot::from_fs(&fs).write(path).unwrap();
    }
    paths
}

// ---------------------------------------------------------------------------
// canonicity oracle

/// `s ⊏ t`, straight from the two patterns: a directory is emptied before its
/// parent stops being one, and a parent becomes a directory before anything
/// is put into it.
pub fn precedes(s: &Command, t: &Command) -> bool {
    use ContentKind::{Directory as D, Empty as E, File as F};
    let (sx, sy, tx, ty) = (s.before.kind(), s.after.kind(), t.before.kind(), t.after.kind());
    let up = t.node.is_parent_of(&s.node) && (sx == D || sx == F) && sy == E && tx == D && (ty == F || ty == E);
    let down = s.node.is_parent_of(&t.node) && (sx == E || sx == F) && sy == D && tx == E && (ty == F || ty == D);
    up || down
}

pub fn comparable(x: &NodeId, y: &NodeId) -> bool {
    x == y || x.is_ancestor_of(y) || y.is_ancestor_of(x)
}

/// No nulls, distinct nodes, and every pair on comparable nodes joined by a
/// `⊏`-chain inside the set.
pub fn is_canonical(set: &[Command]) -> bool {
    if set.iter().any(|c| c.before == c.after) {
        return false;
    }
    let nodes: BTreeSet<&NodeId> = set.iter().map(|c| &c.node).collect();
    if nodes.len() != set.len() {
        return false;
    }
    let reach: Vec<Vec<bool>> = (0..set.len())
        .map(|i| {
            let mut seen = vec![false; set.len()];
            let mut stack = vec![i];
            seen[i] = true;
            while let Some(k) = stack.pop() {
                for j in 0..set.len() {
                    if !seen[j] && precedes(&set[k], &set[j]) {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
            seen
        })
        .collect();
    for i in 0..set.len() {
        for j in i + 1..set.len() {
            if comparable(&set[i].node, &set[j].node) && !reach[i][j] && !reach[j][i] {
                return false;
            }
        }
    }
    true
}

/// Every maximal canonical subset of `a ∪ b`, by exhaustive search over the
/// subsets with at most one command per node.
pub fn oracle_mergers(a: &CanonicalSet, b: &CanonicalSet) -> BTreeSet<BTreeSet<Command>> {
    let union: BTreeSet<Command> = a.iter().chain(b.iter()).cloned().collect();
    let mut by_node: BTreeMap<NodeId, Vec<Command>> = BTreeMap::new();
    for c in &union {
        by_node.entry(c.node.clone()).or_default().push(c.clone());
    }
    let groups: Vec<Vec<Command>> = by_node.into_values().collect();

    let mut canonical: Vec<Vec<Command>> = Vec::new();
    let mut pick = Vec::new();
    walk(&groups, 0, &mut pick, &mut canonical);

    canonical.sort_by_key(|s| std::cmp::Reverse(s.len()));
    let mut maximal: Vec<BTreeSet<Command>> = Vec::new();
    for s in canonical {
        let s: BTreeSet<Command> = s.into_iter().collect();
        if !maximal.iter().any(|m| m.len() > s.len() && s.is_subset(m)) {
            maximal.push(s);
        }
    }
    maximal.into_iter().collect()
}

fn walk(groups: &[Vec<Command>], i: usize, pick: &mut Vec<Command>, out: &mut Vec<Vec<Command>>) {
    if i == groups.len() {
        if is_canonical(pick) {
            out.push(pick.clone());
        }
        return;
    }
    walk(groups, i + 1, pick, out);
    for c in &groups[i] {
        pick.push(c.clone());
        walk(groups, i + 1, pick, out);
        pick.pop();
    }
}

/// Neighbourhood of `c` among `other`: everything on a comparable node.
pub fn neighbourhood(c: &Command, other: &CanonicalSet) -> BTreeSet<Command> {
    other.iter().filter(|o| comparable(&c.node, &o.node)).cloned().collect()
}

fn rank(c: &Content) -> u8 {
    match c {
        Content::Empty => 0,
        Content::File(_) => 1,
        Content::Directory => 2,
    }
}

/// Constructors of `side` grouped into `⊏`-connected components.
pub fn constructor_clusters(side: &CanonicalSet) -> Vec<Vec<Command>> {
    let ctors: Vec<Command> = side
        .iter()
        .filter(|c| rank(&c.before) < rank(&c.after))
        .cloned()
        .collect();
    let mut component: Vec<usize> = (0..ctors.len()).collect();
    loop {
        let mut changed = false;
        for i in 0..ctors.len() {
            for j in 0..ctors.len() {
                if precedes(&ctors[i], &ctors[j]) && component[i] != component[j] {
                    let low = component[i].min(component[j]);
                    component[i] = low;
                    component[j] = low;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let mut groups: BTreeMap<usize, Vec<Command>> = BTreeMap::new();
    for (c, k) in ctors.into_iter().zip(component) {
        groups.entry(k).or_default().push(c);
    }
    groups.into_values().collect()
}

// ---------------------------------------------------------------------------
// random instances

pub struct Instance {
    pub original: FileSystem,
    pub replica1: FileSystem,
    pub replica2: FileSystem,
    pub a: CanonicalSet,
    pub b: CanonicalSet,
}

impl std::fmt::Debug for Instance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Instance")
            .field("original", &self.original)
            .field("a", &self.a)
            .field("b", &self.b)
            .finish()
    }
}

/// A random forest of at most `max_nodes` nodes.
pub fn random_namespace(rng: &mut StdRng, max_nodes: usize) -> Arc<Namespace> {
    let k = rng.random_range(1..=max_nodes);
    let mut nodes: Vec<NodeId> = Vec::with_capacity(k);
    for i in 0..k {
        let name = format!("x{i}");
        let node = if nodes.is_empty() || rng.random_bool(0.2) {
            NodeId::parse(&format!("/{name}")).unwrap()
        } else {
            let p = &nodes[rng.random_range(0..nodes.len())];
            p.child(&name).unwrap()
        };
        nodes.push(node);
    }
    Arc::new(Namespace::build(nodes))
}

fn random_content(rng: &mut StdRng, alphabet: &[Payload]) -> Content {
    match rng.random_range(0..3) {
        0 => Content::Empty,
        1 => Content::Directory,
        _ => Content::File(alphabet[rng.random_range(0..alphabet.len())].clone()),
    }
}

fn parent_is_dir(fs: &FileSystem, node: &NodeId) -> bool {
    node.parent().is_none_or(|p| fs.get(&p).is_dir())
}

/// A random filesystem with the tree property, filled top-down.
pub fn random_filesystem(rng: &mut StdRng, ns: &Arc<Namespace>, alphabet: &[Payload]) -> FileSystem {
    let mut nodes: Vec<NodeId> = ns.iter().cloned().collect();
    nodes.sort_by_key(NodeId::depth);
    let mut fs = FileSystem::new(Arc::clone(ns));
    for node in nodes {
        if parent_is_dir(&fs, &node) {
            let c = random_content(rng, alphabet);
            fs.set(node, c).unwrap();
        }
    }
    fs
}

/// Up to `max_edits` random single-node edits, each keeping the tree
/// property.
pub fn random_edits(rng: &mut StdRng, fs: &FileSystem, alphabet: &[Payload], max_edits: usize) -> FileSystem {
    let nodes: Vec<NodeId> = fs.namespace().iter().cloned().collect();
    let mut fs = fs.clone();
    let edits = rng.random_range(1..=max_edits);
    let mut done = 0;
    for _ in 0..edits * 20 {
        if done == edits {
            break;
        }
        let node = nodes[rng.random_range(0..nodes.len())].clone();
        let content = random_content(rng, alphabet);
        if &content == fs.get(&node) {
            continue;
        }
        let mut next = fs.clone();
        next.set(node, content).unwrap();
        if next.has_tree_property() {
            fs = next;
            done += 1;
        }
    }
    fs
}

/// A random original state and two independently edited replicas, with
/// their update sets.
pub fn random_instance(rng: &mut StdRng) -> Instance {
    let ns = random_namespace(rng, 9);
    let alphabet: Vec<Payload> = ["p", "q"][..rng.random_range(1..=2)]
        .iter()
        .map(|&s| Payload::from(s))
        .collect();
    let original = random_filesystem(rng, &ns, &alphabet);
    let replica1 = random_edits(rng, &original, &alphabet, 6);
    let replica2 = random_edits(rng, &original, &alphabet, 6);
    let a = diff_states(&original, &replica1).unwrap();
    let b = diff_states(&original, &replica2).unwrap();
    Instance {
        original,
        replica1,
        replica2,
        a,
        b,
    }
}
