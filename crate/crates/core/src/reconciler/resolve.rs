use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::conflict::{build_conflict_graph, Conflict, ConflictGraph, ConflictKind, Side};
use super::merger::is_merger;
use super::ReconcileError;
use crate::algebra::Command;
use crate::canonical::CanonicalSet;

/// How ConstructorWins settles a content conflict.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContentPolicy {
    First,
    Second,
    #[default]
    Fail,
}

/// A winner chosen by an [`Arbiter`] for one of the live conflicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    /// Identifier (initial edge index) of the conflict being settled.
    pub conflict: usize,
    pub winner: Side,
}

/// Source of interactive decisions. Receives the live conflicts, content
/// conflicts first and then in edge order, as `(id, conflict)` pairs.
pub trait Arbiter {
    fn decide(&mut self, live: &[(usize, &Conflict)]) -> Result<Decision, ReconcileError>;
}

impl<F> Arbiter for F
where
    F: FnMut(&[(usize, &Conflict)]) -> Result<Decision, ReconcileError>,
{
    fn decide(&mut self, live: &[(usize, &Conflict)]) -> Result<Decision, ReconcileError> {
        self(live)
    }
}

pub enum Policy<'p> {
    FirstWins,
    SecondWins,
    /// Constructors beat destructors; ties go to the first replica.
    ConstructorWins {
        content: ContentPolicy,
    },
    /// Steer towards a known merger.
    Guided(CanonicalSet),
    Interactive(&'p mut dyn Arbiter),
}

impl fmt::Debug for Policy<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Policy::FirstWins => f.write_str("FirstWins"),
            Policy::SecondWins => f.write_str("SecondWins"),
            Policy::ConstructorWins { content } => f.debug_struct("ConstructorWins").field("content", content).finish(),
            Policy::Guided(m) => f.debug_tuple("Guided").field(m).finish(),
            Policy::Interactive(_) => f.write_str("Interactive"),
        }
    }
}

/// One resolution: the conflict, its winner, and everything that vanished.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub conflict: usize,
    pub winner: Side,
    /// Loser-side commands deleted, in node order.
    pub removed: Vec<Command>,
    /// Edge ids that disappeared with them.
    pub removed_edges: Vec<usize>,
}

/// Incremental conflict resolution over a fixed initial graph.
#[derive(Debug, Clone)]
pub struct Resolver {
    graph: ConflictGraph,
    live_a: BTreeSet<Command>,
    live_b: BTreeSet<Command>,
    live_edges: BTreeSet<usize>,
    history: Vec<Step>,
}

impl Resolver {
    pub fn new(a: &CanonicalSet, b: &CanonicalSet) -> Result<Self, ReconcileError> {
        let graph = build_conflict_graph(a, b)?;
        Ok(Self {
            live_a: a.to_set(),
            live_b: b.to_set(),
            live_edges: (0..graph.edges.len()).collect(),
            graph,
            history: Vec::new(),
        })
    }

    /// The initial graph; edge indices are conflict ids.
    pub fn graph(&self) -> &ConflictGraph {
        &self.graph
    }

    pub fn history(&self) -> &[Step] {
        &self.history
    }

    pub fn is_finished(&self) -> bool {
        self.live_edges.is_empty()
    }

    pub fn live_edge_ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.live_edges.iter().copied()
    }

    pub fn live_count(&self) -> usize {
        self.live_edges.len()
    }

    /// Live conflicts, content conflicts first, then by id.
    pub fn live_conflicts(&self) -> Vec<(usize, &Conflict)> {
        let mut live: Vec<_> = self.live_edges.iter().map(|&i| (i, &self.graph.edges[i])).collect();
        live.sort_by_key(|(i, c)| (c.kind != ConflictKind::Content, *i));
        live
    }

    pub fn is_live(&self, side: Side, c: &Command) -> bool {
        match side {
            Side::A => self.live_a.contains(c),
            Side::B => self.live_b.contains(c),
        }
    }

    pub fn residue(&self, side: Side) -> Result<CanonicalSet, ReconcileError> {
        let live = match side {
            Side::A => &self.live_a,
            Side::B => &self.live_b,
        };
        Ok(CanonicalSet::new(live.iter().cloned())?)
    }

    /// Union of the residues; a merger once no conflicts remain.
    pub fn merger(&self) -> Result<CanonicalSet, ReconcileError> {
        Ok(CanonicalSet::new(
            self.live_a.iter().chain(self.live_b.iter()).cloned(),
        )?)
    }

    /// Settles conflict `id` for `winner`: every loser-side command in
    /// conflict with the winning command is deleted.
    pub fn resolve(&mut self, id: usize, winner: Side) -> Result<&Step, ReconcileError> {
        if !self.live_edges.contains(&id) {
            return Err(ReconcileError::StaleConflict(id));
        }
        let w = self.graph.edges[id].command(winner).clone();
        let loser = winner.other();
        let losers: BTreeSet<Command> = self
            .live_edges
            .iter()
            .map(|&i| &self.graph.edges[i])
            .filter(|e| *e.command(winner) == w)
            .map(|e| e.command(loser).clone())
            .collect();
        let removed_edges: Vec<usize> = self
            .live_edges
            .iter()
            .copied()
            .filter(|&i| losers.contains(self.graph.edges[i].command(loser)))
            .collect();
        for i in &removed_edges {
            self.live_edges.remove(i);
        }
        let live = match loser {
            Side::A => &mut self.live_a,
            Side::B => &mut self.live_b,
        };
        for c in &losers {
            live.remove(c);
        }
        let mut removed: Vec<Command> = losers.into_iter().collect();
        removed.sort_by(|x, y| x.node.cmp(&y.node));
        self.history.push(Step {
            conflict: id,
            winner,
            removed,
            removed_edges,
        });
        Ok(self.history.last().expect("just pushed"))
    }
}

/// Outcome of a reconciliation together with the steps that produced it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reconciliation {
    /// Commands both replicas already performed.
    pub common: CanonicalSet,
    pub merger: CanonicalSet,
    pub initial_conflicts: usize,
    pub steps: Vec<Step>,
}

pub fn reconcile(a: &CanonicalSet, b: &CanonicalSet, policy: Policy<'_>) -> Result<CanonicalSet, ReconcileError> {
    reconcile_traced(a, b, policy).map(|r| r.merger)
}

/// Reduces to the disjoint case by setting aside the common commands.
pub fn reconcile_traced(
    a: &CanonicalSet,
    b: &CanonicalSet,
    policy: Policy<'_>,
) -> Result<Reconciliation, ReconcileError> {
    let common = a.intersection(b)?;
    let policy = match policy {
        Policy::Guided(target) => {
            if !is_merger(a, b, &target.to_set()) {
                return Err(ReconcileError::GuidedTargetInvalid(format!("{target:?}")));
            }
            if !common.is_subset_of(&target) {
                return Err(ReconcileError::GuidedTargetInvalid(
                    "target does not contain every common command".into(),
                ));
            }
            Policy::Guided(target.minus(&common)?)
        }
        other => other,
    };
    let rest = reconcile_disjoint_traced(&a.minus(&common)?, &b.minus(&common)?, policy)?;
    let merger = CanonicalSet::new(common.iter().chain(rest.merger.iter()).cloned())?;
    Ok(Reconciliation { common, merger, ..rest })
}

pub fn reconcile_disjoint(
    a: &CanonicalSet,
    b: &CanonicalSet,
    policy: Policy<'_>,
) -> Result<CanonicalSet, ReconcileError> {
    reconcile_disjoint_traced(a, b, policy).map(|r| r.merger)
}

pub fn reconcile_disjoint_traced(
    a: &CanonicalSet,
    b: &CanonicalSet,
    mut policy: Policy<'_>,
) -> Result<Reconciliation, ReconcileError> {
    if let Policy::Guided(target) = &policy {
        if !is_merger(a, b, &target.to_set()) {
            return Err(ReconcileError::GuidedTargetInvalid(format!("{target:?}")));
        }
    }
    let mut r = Resolver::new(a, b)?;
    let initial_conflicts = r.live_count();
    while !r.is_finished() {
        let Decision { conflict, winner } = choose(&r, &mut policy)?;
        let before = r.live_count();
        r.resolve(conflict, winner)?;
        if r.live_count() >= before {
            return Err(ReconcileError::Internal("resolution step removed no conflict".into()));
        }
    }
    Ok(Reconciliation {
        common: CanonicalSet::empty(),
        merger: r.merger()?,
        initial_conflicts,
        steps: r.history,
    })
}

fn choose(r: &Resolver, policy: &mut Policy<'_>) -> Result<Decision, ReconcileError> {
    let first = r.live_edge_ids().next().expect("conflicts remain");
    let edge = &r.graph().edges[first];
    let decide = |winner| {
        Ok(Decision {
            conflict: first,
            winner,
        })
    };
    match policy {
        Policy::FirstWins => decide(Side::A),
        Policy::SecondWins => decide(Side::B),
        Policy::ConstructorWins { content } => match edge.kind {
            ConflictKind::Content => match content {
                ContentPolicy::First => decide(Side::A),
                ContentPolicy::Second => decide(Side::B),
                ContentPolicy::Fail => Err(ReconcileError::ContentConflictNeedsDecision(edge.clone())),
            },
            ConflictKind::Structural => {
                if edge.right.is_constructor() && !edge.left.is_constructor() {
                    decide(Side::B)
                } else {
                    decide(Side::A)
                }
            }
        },
        Policy::Guided(target) => r
            .live_edge_ids()
            .find_map(|i| {
                let e = &r.graph().edges[i];
                [Side::A, Side::B]
                    .into_iter()
                    .find(|&s| target.contains(e.command(s)))
                    .map(|winner| Decision { conflict: i, winner })
            })
            .ok_or_else(|| ReconcileError::Internal("no live conflict touches the guided target".into())),
        Policy::Interactive(arbiter) => {
            let live = r.live_conflicts();
            let d = arbiter.decide(&live)?;
            if !live.iter().any(|(i, _)| *i == d.conflict) {
                return Err(ReconcileError::Protocol(format!(
                    "decision names conflict {} which is not live",
                    d.conflict
                )));
            }
            Ok(d)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::canonical::is_prefix_set;
    use crate::fstree::Content;
    use crate::reconciler::enumerate_mergers;
    use crate::testkit::*;

    fn m(a: &[usize], b: &[usize]) -> CanonicalSet {
        set(a.iter().copied().map(sigma).chain(b.iter().copied().map(tau)))
    }

    fn id_of(r: &Resolver, left: Command, right: Command) -> usize {
        r.graph()
            .edges
            .iter()
            .position(|e| e.left == left && e.right == right)
            .unwrap()
    }

    #[test]
    fn walkthrough_trace_step_by_step() {
        let (a, b) = (sample_a(), sample_b());
        let mut r = Resolver::new(&a, &b).unwrap();
        assert_eq!(r.live_count(), 15);

        let step = r.resolve(id_of(&r, sigma(2), tau(7)), Side::B).unwrap().clone();
        assert_eq!(step.removed, vec![sigma(1), sigma(2)]);
        assert_eq!(step.removed_edges.len(), 9);
        assert_eq!(r.live_count(), 6);

        let step = r.resolve(id_of(&r, sigma(4), tau(5)), Side::A).unwrap().clone();
        let mut removed = step.removed.clone();
        removed.sort();
        let mut want = vec![tau(9), tau(5)];
        want.sort();
        assert_eq!(removed, want);

        let step = r.resolve(id_of(&r, sigma(3), tau(8)), Side::B).unwrap().clone();
        assert_eq!(step.removed, vec![sigma(3)]);
        assert!(r.is_finished());
        assert_eq!(r.merger().unwrap(), m(&[4, 5], &[6, 7, 8]));

        // residues stay prefix-closed in the originals
        assert!(is_prefix_set(&r.residue(Side::A).unwrap().to_set(), &a).unwrap());
        assert!(is_prefix_set(&r.residue(Side::B).unwrap().to_set(), &b).unwrap());
    }

    #[test]
    fn stale_conflicts_are_rejected() {
        let mut r = Resolver::new(&sample_a(), &sample_b()).unwrap();
        let id = id_of(&r, sigma(1), tau(6));
        r.resolve(id_of(&r, sigma(2), tau(7)), Side::B).unwrap();
        assert_eq!(r.resolve(id, Side::A), Err(ReconcileError::StaleConflict(id)));
    }

    #[test]
    fn interactive_walkthrough() {
        let script = [
            (sigma(2), tau(7), Side::B),
            (sigma(4), tau(5), Side::A),
            (sigma(3), tau(8), Side::B),
        ];
        let mut next = script.iter();
        let mut arbiter = |live: &[(usize, &Conflict)]| -> Result<Decision, ReconcileError> {
            let (l, r, w) = next.next().ok_or(ReconcileError::Aborted)?;
            let (id, _) = live.iter().find(|(_, c)| c.left == *l && c.right == *r).unwrap();
            Ok(Decision {
                conflict: *id,
                winner: *w,
            })
        };
        let out = reconcile_disjoint_traced(&sample_a(), &sample_b(), Policy::Interactive(&mut arbiter)).unwrap();
        assert_eq!(out.merger, m(&[4, 5], &[6, 7, 8]));
        assert_eq!(out.steps.len(), 3);
        assert_eq!(out.initial_conflicts, 15);
    }

    #[test]
    fn interactive_protocol_errors() {
        let mut bad = |_: &[(usize, &Conflict)]| {
            Ok(Decision {
                conflict: 999,
                winner: Side::A,
            })
        };
        assert!(matches!(
            reconcile(&sample_a(), &sample_b(), Policy::Interactive(&mut bad)),
            Err(ReconcileError::Protocol(_))
        ));
        let mut quit = |_: &[(usize, &Conflict)]| Err(ReconcileError::Aborted);
        assert_eq!(
            reconcile(&sample_a(), &sample_b(), Policy::Interactive(&mut quit)),
            Err(ReconcileError::Aborted)
        );
    }

    #[test]
    fn fixed_policies() {
        let (a, b) = (sample_a(), sample_b());
        assert_eq!(reconcile(&a, &b, Policy::FirstWins).unwrap(), a);
        assert_eq!(reconcile(&a, &b, Policy::SecondWins).unwrap(), b);
        // every τ is a constructor except τ5 (D → f)
        let cw = reconcile(
            &a,
            &b,
            Policy::ConstructorWins {
                content: ContentPolicy::Fail,
            },
        )
        .unwrap();
        assert!(enumerate_mergers(&a, &b).unwrap().contains(&cw));
        assert_eq!(reconcile(&a, &a, Policy::SecondWins).unwrap(), a);
    }

    #[test]
    fn guided_reaches_every_merger() {
        let (a, b) = (sample_a(), sample_b());
        for target in enumerate_mergers(&a, &b).unwrap() {
            assert_eq!(reconcile(&a, &b, Policy::Guided(target.clone())).unwrap(), target);
        }
        assert!(matches!(
            reconcile(&a, &b, Policy::Guided(m(&[5], &[6]))),
            Err(ReconcileError::GuidedTargetInvalid(_))
        ));
    }

    #[test]
    fn content_conflicts() {
        let a = set([cmd(5, Content::Directory, Content::file("f"))]);
        let b = set([cmd(5, Content::Directory, Content::file("g"))]);
        let fail = reconcile(
            &a,
            &b,
            Policy::ConstructorWins {
                content: ContentPolicy::Fail,
            },
        );
        assert!(matches!(fail, Err(ReconcileError::ContentConflictNeedsDecision(_))));
        let second = reconcile(
            &a,
            &b,
            Policy::ConstructorWins {
                content: ContentPolicy::Second,
            },
        )
        .unwrap();
        assert_eq!(second, b);
    }

    #[test]
    fn common_commands_are_kept() {
        let a = set([sigma(5), sigma(4), tau(6)]);
        let b = set([tau(6), tau(9)]);
        let out = reconcile_traced(&a, &b, Policy::SecondWins).unwrap();
        assert_eq!(out.common, set([tau(6)]));
        // τ9 beats σ4; σ5 sits beside n9 and survives
        assert_eq!(out.merger, set([sigma(5), tau(6), tau(9)]));
    }
}
