//! Shared fixtures for unit tests: the nine-node example tree with its
//! original filesystem and two diverged replicas.

use std::sync::Arc;

use crate::algebra::Command;
use crate::canonical::CanonicalSet;
use crate::fstree::{Content, FileSystem, Payload};
use crate::namespace::{Namespace, NodeId};

/// n1 → n2 → n3 → n4 → n5 is a chain; n6..n9 hang below n1..n4.
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

pub fn f(i: usize) -> Payload {
    Payload::from(format!("f{i}").as_str())
}

pub fn cmd(i: usize, before: Content, after: Content) -> Command {
    Command::new(n(i), before, after)
}

pub fn sigma(i: usize) -> Command {
    cmd(i, Content::Directory, Content::Empty)
}

pub fn tau(i: usize) -> Command {
    if i == 5 {
        cmd(5, Content::Directory, f(5).into())
    } else {
        cmd(i, Content::Empty, f(i).into())
    }
}

pub fn sample_namespace() -> Namespace {
    Namespace::build((1..=9).map(n))
}

pub fn sample_fs() -> FileSystem {
    let ns = Arc::new(sample_namespace());
    FileSystem::from_entries(ns, (1..=5).map(|i| (n(i), Content::Directory))).unwrap()
}

pub fn sample_fs1() -> FileSystem {
    FileSystem::new(Arc::new(sample_namespace()))
}

pub fn sample_fs2() -> FileSystem {
    let ns = Arc::new(sample_namespace());
    FileSystem::from_entries(
        ns,
        (1..=4)
            .map(|i| (n(i), Content::Directory))
            .chain((5..=9).map(|i| (n(i), Content::File(f(i))))),
    )
    .unwrap()
}

pub fn set(cmds: impl IntoIterator<Item = Command>) -> CanonicalSet {
    CanonicalSet::new(cmds).unwrap()
}

pub fn sample_a() -> CanonicalSet {
    set((1..=5).map(sigma))
}

pub fn sample_b() -> CanonicalSet {
    set((5..=9).map(tau))
}
