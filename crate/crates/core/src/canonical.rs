//! Canonical command sequences and sets.
//!
//! A canonical set has no null commands, at most one command per node, and
//! any two of its commands on comparable nodes are joined by an `⊏`-chain
//! inside the set. Because `⊏` only ever relates a node and its parent, the
//! chain condition reduces to a local one: a command whose parent node also
//! carries a command must be `⊏`-related to it, and a command whose parent
//! carries none must have no commanded ancestor at all.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::algebra::{compose_same_node, exec_order, independent, Command, CommandClass, Composition};
use crate::fstree::{apply_sequence, ApplyOutcome, Content, FileSystem};
use crate::namespace::{Namespace, NodeId};

/// The first clause of the canonicity characterization a set or sequence
/// fails.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Violation {
    #[error("null command `{0}`")]
    Null(Command),
    #[error("two commands on node {0}")]
    DuplicateNode(NodeId),
    #[error("`{later}` must run before `{earlier}`")]
    OrderNotHonored { earlier: Command, later: Command },
    #[error("`{upper}` and `{lower}` are on comparable nodes but not joined by an execution chain")]
    Disconnected { upper: Command, lower: Command },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NotNormalizable {
    #[error("`{first}` leaves a value that `{second}` does not expect")]
    FuseMismatch { first: Command, second: Command },
    #[error("`{first}` cannot be followed by `{second}` on a comparable node")]
    IllegalPair { first: Command, second: Command },
    #[error("`{first}` and `{second}` cannot be brought together")]
    Stuck { first: Command, second: Command },
    #[error("fused sequence is not canonical: {0}")]
    Residual(Violation),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{0} is not a member of the enclosing set")]
pub struct NotASubset(pub Command);

/// A validated canonical set, keyed by node.
#[derive(Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CanonicalSet {
    commands: BTreeMap<NodeId, Command>,
}

impl CanonicalSet {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn new<I>(commands: I) -> Result<Self, Violation>
    where
        I: IntoIterator<Item = Command>,
    {
        let mut map = BTreeMap::new();
        for c in commands {
            if c.is_null() {
                return Err(Violation::Null(c));
            }
            if let Some(prev) = map.insert(c.node.clone(), c) {
                return Err(Violation::DuplicateNode(prev.node));
            }
        }
        check_connected(&map)?;
        Ok(Self { commands: map })
    }

    pub fn len(&self) -> usize {
        self.commands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.commands.is_empty()
    }

    /// Commands in node order.
    pub fn iter(&self) -> impl Iterator<Item = &Command> + '_ {
        self.commands.values()
    }

    pub fn get(&self, node: &NodeId) -> Option<&Command> {
        self.commands.get(node)
    }

    pub fn contains(&self, c: &Command) -> bool {
        self.commands.get(&c.node) == Some(c)
    }

    pub fn to_set(&self) -> BTreeSet<Command> {
        self.iter().cloned().collect()
    }

    /// The commands of `self` that are not in `other`, as a canonical set.
    pub fn minus(&self, other: &CanonicalSet) -> Result<CanonicalSet, Violation> {
        CanonicalSet::new(self.iter().filter(|c| !other.contains(c)).cloned())
    }

    pub fn intersection(&self, other: &CanonicalSet) -> Result<CanonicalSet, Violation> {
        CanonicalSet::new(self.iter().filter(|c| other.contains(c)).cloned())
    }

    pub fn is_subset_of(&self, other: &CanonicalSet) -> bool {
        self.iter().all(|c| other.contains(c))
    }

    /// Deterministic `⊏`-honoring order.
    pub fn order(&self) -> Vec<Command> {
        order(self)
    }

    pub fn apply_to(&self, fs: &FileSystem) -> ApplyOutcome {
        apply_sequence(fs, &self.order())
    }

    /// The command on the parent of `c`'s node, if any.
    fn parent_command(&self, c: &Command) -> Option<&Command> {
        c.node.parent().and_then(|p| self.commands.get(&p))
    }

    fn child_commands<'a>(&'a self, c: &'a Command) -> impl Iterator<Item = &'a Command> + 'a {
        use std::ops::Bound::{Excluded, Unbounded};
        self.commands
            .range((Excluded(&c.node), Unbounded))
            .take_while(move |(k, _)| c.node.is_ancestor_of(k))
            .filter(move |(k, _)| c.node.is_parent_of(k))
            .map(|(_, v)| v)
    }
}

impl fmt::Debug for CanonicalSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter().map(ToString::to_string)).finish()
    }
}

impl<'a> IntoIterator for &'a CanonicalSet {
    type Item = &'a Command;
    type IntoIter = std::collections::btree_map::Values<'a, NodeId, Command>;

    fn into_iter(self) -> Self::IntoIter {
        self.commands.values()
    }
}

fn related(s: &Command, t: &Command) -> bool {
    exec_order(s, t) || exec_order(t, s)
}

fn check_connected(map: &BTreeMap<NodeId, Command>) -> Result<(), Violation> {
    for c in map.values() {
        let mut ancestors = c.node.ancestors();
        let Some(parent) = ancestors.next() else {
            continue;
        };
        match map.get(&parent) {
            Some(pc) if related(pc, c) => {}
            Some(pc) => {
                return Err(Violation::Disconnected {
                    upper: pc.clone(),
                    lower: c.clone(),
                })
            }
            None => {
                if let Some(ac) = ancestors.find_map(|a| map.get(&a)) {
                    return Err(Violation::Disconnected {
                        upper: ac.clone(),
                        lower: c.clone(),
                    });
                }
            }
        }
    }
    Ok(())
}

/// Purely syntactic canonicity test: no nulls, distinct nodes, `⊏` honored,
/// `⊏`-connected.
pub fn is_canonical_sequence(seq: &[Command]) -> Result<(), Violation> {
    let mut position = BTreeMap::new();
    for (i, c) in seq.iter().enumerate() {
        if c.is_null() {
            return Err(Violation::Null(c.clone()));
        }
        if position.insert(&c.node, i).is_some() {
            return Err(Violation::DuplicateNode(c.node.clone()));
        }
    }
    for (i, c) in seq.iter().enumerate() {
        let Some(p) = c.node.parent() else { continue };
        let Some(&j) = position.get(&p) else { continue };
        let pc = &seq[j];
        if exec_order(c, pc) && j < i {
            return Err(Violation::OrderNotHonored {
                earlier: pc.clone(),
                later: c.clone(),
            });
        }
        if exec_order(pc, c) && i < j {
            return Err(Violation::OrderNotHonored {
                earlier: c.clone(),
                later: pc.clone(),
            });
        }
    }
    let map = seq.iter().map(|c| (c.node.clone(), c.clone())).collect();
    check_connected(&map)
}

/// Turns an arbitrary command sequence into a canonical one that agrees with
/// it on every filesystem the input does not break.
///
/// Nulls are dropped; then the closest pair of commands on the same node is
/// bubbled together by swapping with independent neighbours and fused. If a
/// fuse or a swap is impossible the input breaks every filesystem.
pub fn normalize(seq: &[Command]) -> Result<Vec<Command>, NotNormalizable> {
    let mut work: Vec<Command> = seq.iter().filter(|c| !c.is_null()).cloned().collect();

    while let Some((mut i, mut j)) = closest_same_node_pair(&work) {
        while j > i + 1 {
            let next = &work[i + 1];
            if independent(&work[i], next) {
                work.swap(i, i + 1);
                i += 1;
                continue;
            }
            if !exec_order(&work[i], next) {
                return Err(NotNormalizable::IllegalPair {
                    first: work[i].clone(),
                    second: next.clone(),
                });
            }
            let prev = &work[j - 1];
            if independent(prev, &work[j]) {
                work.swap(j - 1, j);
                j -= 1;
                continue;
            }
            if !exec_order(prev, &work[j]) {
                return Err(NotNormalizable::IllegalPair {
                    first: prev.clone(),
                    second: work[j].clone(),
                });
            }
            return Err(NotNormalizable::Stuck {
                first: work[i].clone(),
                second: work[j].clone(),
            });
        }
        let second = work.remove(j);
        let first = work.remove(i);
        match compose_same_node(&first, &second).expect("pair shares a node") {
            Composition::BreaksEverything => return Err(NotNormalizable::FuseMismatch { first, second }),
            Composition::Command(fused) if fused.is_null() => {}
            Composition::Command(fused) => work.insert(i, fused),
        }
    }

    is_canonical_sequence(&work).map_err(NotNormalizable::Residual)?;
    Ok(work)
}

fn closest_same_node_pair(seq: &[Command]) -> Option<(usize, usize)> {
    let mut last_seen: BTreeMap<&NodeId, usize> = BTreeMap::new();
    let mut best: Option<(usize, usize)> = None;
    for (j, c) in seq.iter().enumerate() {
        if let Some(&i) = last_seen.get(&c.node) {
            if best.is_none_or(|(bi, bj)| j - i < bj - bi) {
                best = Some((i, j));
            }
        }
        last_seen.insert(&c.node, j);
    }
    best
}

/// Topological sort of a canonical set with lexicographic node tie-break.
pub fn order(set: &CanonicalSet) -> Vec<Command> {
    let mut indegree: BTreeMap<&NodeId, usize> = set.commands.keys().map(|k| (k, 0)).collect();
    let mut successors: BTreeMap<&NodeId, Vec<&NodeId>> = BTreeMap::new();
    for c in set.iter() {
        if let Some(pc) = set.parent_command(c) {
            let (from, to) = if exec_order(c, pc) {
                (&c.node, &pc.node)
            } else {
                (&pc.node, &c.node)
            };
            successors.entry(from).or_default().push(to);
            *indegree.get_mut(to).expect("node present") += 1;
        }
    }
    let mut ready: BTreeSet<&NodeId> = indegree.iter().filter(|(_, d)| **d == 0).map(|(k, _)| *k).collect();
    let mut out = Vec::with_capacity(set.len());
    while let Some(node) = ready.pop_first() {
        out.push(set.commands[node].clone());
        for next in successors.get(node).into_iter().flatten() {
            let d = indegree.get_mut(next).expect("node present");
            *d -= 1;
            if *d == 0 {
                ready.insert(next);
            }
        }
    }
    debug_assert_eq!(out.len(), set.len());
    out
}

/// `b ⊑c a`: `b` is closed under `⊏`-predecessors inside `a`, so it can be
/// executed first without changing the semantics of `a`.
pub fn is_prefix_set(b: &BTreeSet<Command>, a: &CanonicalSet) -> Result<bool, NotASubset> {
    if let Some(c) = b.iter().find(|c| !a.contains(c)) {
        return Err(NotASubset(c.clone()));
    }
    let closed = b.iter().all(|t| {
        a.parent_command(t)
            .into_iter()
            .chain(a.child_commands(t))
            .all(|s| !exec_order(s, t) || b.contains(s))
    });
    Ok(closed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ClusterKind {
    Constructor,
    Destructor,
    Editor,
}

/// A connected component of the `⊏` graph of a canonical set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cluster {
    /// Members in `⊏`-honoring order.
    pub commands: Vec<Command>,
    pub kind: ClusterKind,
}

impl Cluster {
    /// Topmost node of the cluster's subtree.
    pub fn top(&self) -> &NodeId {
        self.commands
            .iter()
            .map(|c| &c.node)
            .min_by_key(|n| n.depth())
            .expect("clusters are nonempty")
    }
}

pub fn clusters(set: &CanonicalSet) -> Vec<Cluster> {
    // Each command's component is identified by the topmost node reachable
    // through related parent links.
    let mut groups: BTreeMap<NodeId, Vec<Command>> = BTreeMap::new();
    for c in set.order() {
        let mut top = c.clone();
        while let Some(pc) = set.parent_command(&top) {
            debug_assert!(related(pc, &top));
            top = pc.clone();
        }
        groups.entry(top.node).or_default().push(c);
    }
    groups
        .into_values()
        .map(|commands| {
            let kind = match commands[0].class() {
                CommandClass::Constructor => ClusterKind::Constructor,
                CommandClass::Destructor => ClusterKind::Destructor,
                CommandClass::EditFile => ClusterKind::Editor,
                CommandClass::Null => unreachable!("canonical sets have no nulls"),
            };
            Cluster { commands, kind }
        })
        .collect()
}

/// A filesystem the set does not break: mentioned nodes hold the commands'
/// before-contents, their unmentioned strict ancestors are directories, all
/// other nodes are Empty.
pub fn witness_filesystem(set: &CanonicalSet, ns: &Arc<Namespace>) -> FileSystem {
    let fs = witness_values(set.iter(), ns).expect("witness construction for a canonical set");
    if let Err(broken) = set.apply_to(&fs) {
        panic!("canonical set breaks its own witness: {broken}");
    }
    fs
}

fn witness_values<'a, I>(commands: I, ns: &Arc<Namespace>) -> Option<FileSystem>
where
    I: IntoIterator<Item = &'a Command>,
{
    let mut values: BTreeMap<NodeId, Content> = BTreeMap::new();
    let mut ancestors = BTreeSet::new();
    for c in commands {
        if let Some(prev) = values.get(&c.node) {
            if *prev != c.before {
                return None;
            }
        }
        values.insert(c.node.clone(), c.before.clone());
        ancestors.extend(c.node.ancestors());
    }
    for a in ancestors {
        values.entry(a).or_insert(Content::Directory);
    }
    FileSystem::from_entries(Arc::clone(ns), values).ok()
}

/// A filesystem both sets apply to, built like [`witness_filesystem`] over
/// the union of their preconditions.
pub fn common_witness(a: &CanonicalSet, b: &CanonicalSet, ns: &Arc<Namespace>) -> Option<FileSystem> {
    let fs = witness_values(a.iter().chain(b.iter()), ns)?;
    (fs.has_tree_property() && a.apply_to(&fs).is_ok() && b.apply_to(&fs).is_ok()).then_some(fs)
}

/// Whether some filesystem accepts both sets.
pub fn are_refluent(a: &CanonicalSet, b: &CanonicalSet, ns: &Arc<Namespace>) -> bool {
    common_witness(a, b, ns).is_some()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fstree::Payload;
    use crate::testkit::*;

    #[test]
    fn canonical_sequences() {
        let chain = [sigma(5), sigma(4), sigma(3), sigma(2), sigma(1)];
        assert_eq!(is_canonical_sequence(&chain), Ok(()));
        assert!(matches!(
            is_canonical_sequence(&[sigma(4), sigma(5)]),
            Err(Violation::OrderNotHonored { .. })
        ));
        assert_eq!(
            is_canonical_sequence(&[sigma(5), sigma(3)]),
            Err(Violation::Disconnected {
                upper: sigma(3),
                lower: sigma(5)
            })
        );
        assert!(matches!(
            is_canonical_sequence(&[sigma(5), sigma(5)]),
            Err(Violation::DuplicateNode(_))
        ));
        let null = cmd(6, Content::Empty, Content::Empty);
        assert_eq!(
            is_canonical_sequence(std::slice::from_ref(&null)),
            Err(Violation::Null(null))
        );
    }

    #[test]
    fn set_validation() {
        assert!(CanonicalSet::new((1..=5).map(sigma)).is_ok());
        assert!(CanonicalSet::new([sigma(5), tau(5)]).is_err());
        assert!(matches!(
            CanonicalSet::new([sigma(5), sigma(3)]),
            Err(Violation::Disconnected { .. })
        ));
        // σ2 and τ7 are on parent/child nodes but not ⊏-related
        assert!(matches!(
            CanonicalSet::new([sigma(2), tau(7)]),
            Err(Violation::Disconnected { .. })
        ));
    }

    #[test]
    fn normalize_examples() {
        let e = Content::Empty;
        let f6: Content = f(6).into();
        let g6 = Content::File(Payload::from("g6"));
        assert_eq!(
            normalize(&[cmd(6, e.clone(), f6.clone()), cmd(6, f6.clone(), e.clone())]),
            Ok(vec![])
        );

        let out = normalize(&[
            cmd(6, e.clone(), f6.clone()),
            cmd(7, e.clone(), f(7).into()),
            cmd(6, f6.clone(), g6.clone()),
        ])
        .unwrap();
        let got: BTreeSet<_> = out.into_iter().collect();
        let want: BTreeSet<_> = [cmd(6, e.clone(), g6.clone()), cmd(7, e.clone(), f(7).into())]
            .into_iter()
            .collect();
        assert_eq!(got, want);

        assert!(matches!(
            normalize(&[cmd(6, e.clone(), f6.clone()), cmd(6, g6.clone(), e.clone())]),
            Err(NotNormalizable::FuseMismatch { .. })
        ));
        assert!(matches!(
            normalize(&[sigma(4), sigma(5)]),
            Err(NotNormalizable::Residual(_))
        ));
    }

    #[test]
    fn normalize_blocked_by_chain() {
        // create n4, create n5 under it, then try to recreate n4: the second
        // n4 command cannot move past the n5 constructor.
        let e = Content::Empty;
        let d = Content::Directory;
        let seq = [
            cmd(4, e.clone(), d.clone()),
            cmd(5, e.clone(), d.clone()),
            cmd(4, d.clone(), e.clone()),
        ];
        assert!(normalize(&seq).is_err());
    }

    #[test]
    fn normalize_is_idempotent_on_canonical_input() {
        let chain = vec![sigma(5), sigma(4), sigma(3), sigma(2), sigma(1)];
        assert_eq!(normalize(&chain), Ok(chain));
    }

    #[test]
    fn ordering() {
        assert_eq!(
            sample_a().order(),
            vec![sigma(5), sigma(4), sigma(3), sigma(2), sigma(1)]
        );
        let b = sample_b().order();
        let mut sorted = b.clone();
        sorted.sort_by(|x, y| x.node.cmp(&y.node));
        assert_eq!(b, sorted);
        assert_eq!(CanonicalSet::empty().order(), vec![]);

        let e = Content::Empty;
        let d = Content::Directory;
        let cons = set([
            cmd(3, e.clone(), d.clone()),
            cmd(4, e.clone(), d.clone()),
            cmd(2, e.clone(), d.clone()),
        ]);
        let nodes: Vec<_> = cons.order().into_iter().map(|c| c.node).collect();
        assert_eq!(nodes, vec![n(2), n(3), n(4)]);
    }

    #[test]
    fn prefix_sets() {
        let a = sample_a();
        let only = |cs: &[Command]| cs.iter().cloned().collect::<BTreeSet<_>>();
        assert_eq!(is_prefix_set(&only(&[sigma(5)]), &a), Ok(true));
        assert_eq!(is_prefix_set(&only(&[sigma(4)]), &a), Ok(false));
        assert_eq!(is_prefix_set(&only(&[sigma(5), sigma(4)]), &a), Ok(true));
        assert_eq!(is_prefix_set(&only(&[]), &a), Ok(true));
        assert!(is_prefix_set(&only(&[tau(6)]), &a).is_err());
    }

    #[test]
    fn cluster_examples() {
        let cs = clusters(&sample_a());
        assert_eq!(cs.len(), 1);
        assert_eq!(cs[0].kind, ClusterKind::Destructor);
        assert_eq!(cs[0].commands.len(), 5);
        assert_eq!(cs[0].top(), &n(1));

        let cs = clusters(&sample_b());
        assert_eq!(cs.len(), 5);
        for c in &cs {
            assert_eq!(c.commands.len(), 1);
            let want = if c.commands[0] == tau(5) {
                ClusterKind::Destructor
            } else {
                ClusterKind::Constructor
            };
            assert_eq!(c.kind, want);
        }

        let edit = set([cmd(6, f(1).into(), f(2).into())]);
        assert_eq!(clusters(&edit)[0].kind, ClusterKind::Editor);
    }

    #[test]
    fn witnesses() {
        let ns = Arc::new(sample_namespace());
        assert_eq!(witness_filesystem(&sample_a(), &ns), sample_fs());
        assert_eq!(witness_filesystem(&CanonicalSet::empty(), &ns).visible_len(), 0);
        let w = witness_filesystem(&set([tau(9)]), &ns);
        let visible: Vec<_> = w.visible().map(|(k, v)| (k.clone(), v.clone())).collect();
        assert_eq!(visible, (1..=4).map(|i| (n(i), Content::Directory)).collect::<Vec<_>>());
    }

    #[test]
    fn refluence() {
        let ns = Arc::new(sample_namespace());
        assert!(are_refluent(&sample_a(), &sample_b(), &ns));
        let clash = set([cmd(6, f(1).into(), Content::Empty)]);
        let other = set([cmd(6, Content::Empty, Content::Directory)]);
        assert!(!are_refluent(&clash, &other, &ns));
    }
}
