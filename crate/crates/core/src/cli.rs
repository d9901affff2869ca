//! Workflows behind the `treesync` command: diff, replay, mergers,
//! reconcile, plan, apply and directory scanning.

use std::io::{BufRead, Write};

use thiserror::Error;

use crate::algebra::Command;
use crate::canonical::CanonicalSet;
use crate::detector::{diff_states, replay_log, DetectError, UpdateLog};
use crate::formats::{shared_filesystems, FormatError, Snapshot};
use crate::fstree::{Broken, FileSystem};
use crate::reconciler::{
    enumerate_mergers_bounded, merge_plan, reconcile_traced, Arbiter, Conflict, ConflictKind, Decision, MergePlan,
    Policy, ReconcileError, Reconciliation, Side,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_ABORTED: i32 = 3;
pub const EXIT_BROKEN: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Reconcile(#[from] ReconcileError),
    #[error("log entry {}: {}", .0.index + 1, .0)]
    LogBroken(Broken),
    #[error(transparent)]
    Broken(Broken),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Format(_) | CliError::Detect(_) | CliError::LogBroken(_) | CliError::Usage(_) => EXIT_VALIDATION,
            CliError::Reconcile(e) => match e {
                ReconcileError::Aborted | ReconcileError::ContentConflictNeedsDecision(_) => EXIT_ABORTED,
                ReconcileError::Broken(_) => EXIT_BROKEN,
                ReconcileError::Internal(_) | ReconcileError::PlanMismatch { .. } => EXIT_OTHER,
                _ => EXIT_VALIDATION,
            },
            CliError::Broken(_) => EXIT_BROKEN,
            CliError::Io(_) => EXIT_OTHER,
        }
    }
}

/// The three filesystems of a synchronization run over one namespace, and
/// the update sets of both replicas.
#[derive(Debug, Clone)]
pub struct Replicas {
    pub original: FileSystem,
    pub replica1: FileSystem,
    pub replica2: FileSystem,
    pub a: CanonicalSet,
    pub b: CanonicalSet,
}

impl Replicas {
    pub fn from_snapshots(original: &Snapshot, replica1: &Snapshot, replica2: &Snapshot) -> Result<Self, CliError> {
        let mut fss = shared_filesystems(&[original, replica1, replica2], [])?.into_iter();
        let (original, replica1, replica2) = (
            fss.next().expect("three"),
            fss.next().expect("three"),
            fss.next().expect("three"),
        );
        let a = diff_states(&original, &replica1)?;
        let b = diff_states(&original, &replica2)?;
        Ok(Self {
            original,
            replica1,
            replica2,
            a,
            b,
        })
    }

    pub fn plan(&self, merger: &CanonicalSet) -> Result<MergePlan, CliError> {
        let plan = merge_plan(&self.a, &self.b, merger)?;
        plan.verify(&self.original, &self.replica1, &self.replica2)?;
        Ok(plan)
    }
}

pub fn diff(original: &Snapshot, replica: &Snapshot) -> Result<CanonicalSet, CliError> {
    let fss = shared_filesystems(&[original, replica], [])?;
    Ok(diff_states(&fss[0], &fss[1])?)
}

pub fn replay(original: &Snapshot, log: Vec<Command>) -> Result<CanonicalSet, CliError> {
    let fs = shared_filesystems(&[original], log.iter().map(|c| &c.node))?.remove(0);
    let log = UpdateLog::new(fs, log).map_err(|e| match e {
        DetectError::LogBroken(b) => CliError::LogBroken(b),
        other => CliError::Detect(other),
    })?;
    Ok(replay_log(&log)?)
}

pub fn mergers(replicas: &Replicas, max_enum: usize) -> Result<Vec<CanonicalSet>, CliError> {
    Ok(enumerate_mergers_bounded(&replicas.a, &replicas.b, max_enum)?)
}

/// Resolves all conflicts under `policy` and plans the resulting merger.
pub fn reconcile(replicas: &Replicas, policy: Policy<'_>) -> Result<(Reconciliation, MergePlan), CliError> {
    let r = reconcile_traced(&replicas.a, &replicas.b, policy)?;
    let plan = replicas.plan(&r.merger)?;
    Ok((r, plan))
}

/// Runs one replica's part of `plan`. Nothing is returned on failure.
pub fn apply(snapshot: &Snapshot, plan: &MergePlan, replica: u8) -> Result<Snapshot, CliError> {
    let rp = plan
        .replica(replica)
        .ok_or_else(|| CliError::Usage(format!("replica must be 1 or 2, not {replica}")))?;
    let extra: Vec<_> = plan.merger.iter().chain(rp.steps()).map(|c| &c.node).collect();
    let fs = shared_filesystems(&[snapshot], extra)?.remove(0);
    let out = rp.execute(&fs).map_err(CliError::Broken)?;
    Ok(Snapshot::from_fs(&out))
}

/// The merged filesystem rendered over the original's namespace.
pub fn merged_state(replicas: &Replicas, plan: &MergePlan) -> Result<FileSystem, CliError> {
    Ok(plan.merger.apply_to(&replicas.original).map_err(ReconcileError::from)?)
}

/// Prompts on a terminal for each decision.
///
/// Accepts `<number> a|b` (number from the printed list), or `q` to abort.
pub struct TerminalArbiter<R, W> {
    input: R,
    output: W,
}

impl<R: BufRead, W: Write> TerminalArbiter<R, W> {
    pub fn new(input: R, output: W) -> Self {
        Self { input, output }
    }

    fn prompt(&mut self, live: &[(usize, &Conflict)]) -> std::io::Result<Option<Decision>> {
        writeln!(self.output, "{} live conflicts:", live.len())?;
        for (i, (_, c)) in live.iter().enumerate() {
            let kind = match c.kind {
                ConflictKind::Structural => "structural",
                ConflictKind::Content => "content",
            };
            writeln!(self.output, "  [{}] {kind}", i + 1)?;
            writeln!(self.output, "      a: {}", c.left)?;
            writeln!(self.output, "      b: {}", c.right)?;
        }
        loop {
            write!(self.output, "winner (e.g. `1 a`, `q` to abort)> ")?;
            self.output.flush()?;
            let mut line = String::new();
            if self.input.read_line(&mut line)? == 0 {
                return Ok(None);
            }
            let words: Vec<&str> = line.split_whitespace().collect();
            match words.as_slice() {
                ["q"] | ["quit"] => return Ok(None),
                [num, side] => {
                    let winner = match *side {
                        "a" | "A" | "1" => Some(Side::A),
                        "b" | "B" | "2" => Some(Side::B),
                        _ => None,
                    };
                    let pick = num
                        .parse::<usize>()
                        .ok()
                        .and_then(|k| k.checked_sub(1))
                        .and_then(|k| live.get(k));
                    if let (Some(winner), Some((id, _))) = (winner, pick) {
                        return Ok(Some(Decision { conflict: *id, winner }));
                    }
                }
                _ => {}
            }
            writeln!(self.output, "not understood")?;
        }
    }
}

impl<R: BufRead, W: Write> Arbiter for TerminalArbiter<R, W> {
    fn decide(&mut self, live: &[(usize, &Conflict)]) -> Result<Decision, ReconcileError> {
        match self.prompt(live) {
            Ok(Some(d)) => Ok(d),
            Ok(None) => Err(ReconcileError::Aborted),
            Err(e) => Err(ReconcileError::Protocol(e.to_string())),
        }
    }
}

/// Reads a real directory tree into a snapshot. Symbolic links are
/// rejected; names must be valid UTF-8.
#[cfg(feature = "cli")]
pub fn scan_directory(root: &std::path::Path) -> Result<Snapshot, CliError> {
    use std::collections::BTreeMap;

    use crate::fstree::{Content, Payload};
    use crate::namespace::NodeId;

    let mut entries = BTreeMap::new();
    for entry in walkdir::WalkDir::new(root).min_depth(1).follow_links(false) {
        let entry = entry.map_err(|e| CliError::Usage(e.to_string()))?;
        let rel = entry.path().strip_prefix(root).expect("walk stays below root");
        let segments = rel
            .components()
            .map(|c| {
                c.as_os_str()
                    .to_str()
                    .map(str::to_owned)
                    .ok_or_else(|| CliError::Usage(format!("{} is not valid UTF-8", rel.display())))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let node = NodeId::from_segments(segments).map_err(|e| CliError::Usage(e.to_string()))?;
        let ft = entry.file_type();
        let content = if ft.is_symlink() {
            return Err(CliError::Usage(format!(
                "{} is a symbolic link",
                entry.path().display()
            )));
        } else if ft.is_dir() {
            Content::Directory
        } else if ft.is_file() {
            Content::File(Payload::new(std::fs::read(entry.path())?))
        } else {
            return Err(CliError::Usage(format!(
                "{} is not a regular file",
                entry.path().display()
            )));
        };
        entries.insert(node, content);
    }
    Ok(Snapshot::new(entries)?)
}
