//! Line-oriented JSON files: snapshots, logs, command sets and plans.
//!
//! Every file starts with a header line `{"format": ..., "version": 1}`
//! followed by one record per line. File payloads are inlined as UTF-8
//! `text` or `hex`; with a sidecar blob directory, payloads above
//! [`INLINE_LIMIT`] bytes are stored there and referenced by `digest`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::Command;
use crate::canonical::{CanonicalSet, Violation};
use crate::fstree::{Content, FileSystem, Payload};
use crate::namespace::{Namespace, NodeId};
use crate::reconciler::{MergePlan, ReplicaPlan};

pub const FORMAT_VERSION: u32 = 1;
pub const INLINE_LIMIT: usize = 4096;

pub const SNAPSHOT: &str = "treesync/snapshot";
pub const LOG: &str = "treesync/log";
pub const COMMANDS: &str = "treesync/commands";
pub const PLAN: &str = "treesync/plan";

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("missing header line")]
    MissingHeader,
    #[error("expected a {expected} file, found {found}")]
    WrongFormat { expected: &'static str, found: String },
    #[error("unsupported version {0}")]
    Version(u32),
    #[error("line {line}: {msg}")]
    Record { line: usize, msg: String },
    #[error("payload {0} is referenced but not available")]
    MissingBlob(String),
    #[error("blob {0} does not match its digest")]
    CorruptBlob(String),
    #[error("{0} is listed twice")]
    Duplicate(NodeId),
    #[error("tree property violated at {0}")]
    TreeProperty(NodeId),
    #[error("command set is not canonical: {0}")]
    NotCanonical(#[from] Violation),
}

type Result<T> = std::result::Result<T, FormatError>;

/// Where large payloads go.
#[derive(Debug, Clone, Default)]
pub struct Blobs {
    dir: Option<PathBuf>,
}

impl Blobs {
    /// Everything inline; digest references cannot be resolved.
    pub fn inline() -> Self {
        Self { dir: None }
    }

    /// The `<file>.blobs/` directory next to `file`.
    pub fn sidecar(file: &Path) -> Self {
        let mut name = file.as_os_str().to_owned();
        name.push(".blobs");
        Self {
            dir: Some(PathBuf::from(name)),
        }
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    fn blob_path(dir: &Path, digest: &str) -> PathBuf {
        dir.join(digest.trim_start_matches("sha256:"))
    }

    fn store(&self, p: &Payload) -> Result<Option<String>> {
        let Some(dir) = &self.dir else {
            return Ok(None);
        };
        if p.len() <= INLINE_LIMIT {
            return Ok(None);
        }
        let digest = p.digest();
        fs::create_dir_all(dir).map_err(|source| FormatError::Io {
            path: dir.clone(),
            source,
        })?;
        let path = Self::blob_path(dir, &digest);
        if !path.exists() {
            write_atomic(&path, p.bytes())?;
        }
        Ok(Some(digest))
    }

    fn load(&self, digest: &str) -> Result<Payload> {
        let dir = self
            .dir
            .as_ref()
            .ok_or_else(|| FormatError::MissingBlob(digest.into()))?;
        let bytes = fs::read(Self::blob_path(dir, digest)).map_err(|_| FormatError::MissingBlob(digest.into()))?;
        let p = Payload::new(bytes);
        if p.digest() != digest {
            return Err(FormatError::CorruptBlob(digest.into()));
        }
        Ok(p)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Kind {
    Empty,
    Dir,
    File,
}

#[derive(Debug, Serialize, Deserialize)]
struct ContentRecord {
    kind: Kind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hex: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    digest: Option<String>,
}

impl ContentRecord {
    fn encode(c: &Content, blobs: &Blobs) -> Result<Self> {
        let mut r = ContentRecord {
            kind: Kind::Empty,
            text: None,
            hex: None,
            digest: None,
        };
        match c {
            Content::Empty => {}
            Content::Directory => r.kind = Kind::Dir,
            Content::File(p) => {
                r.kind = Kind::File;
                if let Some(d) = blobs.store(p)? {
                    r.digest = Some(d);
                } else if let Some(t) = p.as_text() {
                    r.text = Some(t.to_owned());
                } else {
                    r.hex = Some(hex::encode(p.bytes()));
                }
            }
        }
        Ok(r)
    }

    fn decode(self, line: usize, blobs: &Blobs) -> Result<Content> {
        let bad = |msg: &str| FormatError::Record {
            line,
            msg: msg.to_owned(),
        };
        let given = [self.text.is_some(), self.hex.is_some(), self.digest.is_some()]
            .iter()
            .filter(|x| **x)
            .count();
        match self.kind {
            Kind::Empty | Kind::Dir if given > 0 => Err(bad("only files carry a payload")),
            Kind::Empty => Ok(Content::Empty),
            Kind::Dir => Ok(Content::Directory),
            Kind::File if given != 1 => Err(bad("a file needs exactly one of text, hex, digest")),
            Kind::File => {
                let payload = if let Some(t) = self.text {
                    Payload::new(t.into_bytes())
                } else if let Some(h) = self.hex {
                    Payload::new(hex::decode(h).map_err(|e| bad(&format!("bad hex payload: {e}")))?)
                } else {
                    blobs.load(&self.digest.expect("counted above"))?
                };
                Ok(Content::File(payload))
            }
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SnapshotRecord {
    path: NodeId,
    #[serde(flatten)]
    content: ContentRecord,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Section {
    Merger,
    Rollback,
    Apply,
}

#[derive(Debug, Serialize, Deserialize)]
struct CommandRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    section: Option<Section>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    replica: Option<u8>,
    path: NodeId,
    before: ContentRecord,
    after: ContentRecord,
}

impl CommandRecord {
    fn encode(c: &Command, section: Option<Section>, replica: Option<u8>, blobs: &Blobs) -> Result<Self> {
        Ok(Self {
            section,
            replica,
            path: c.node.clone(),
            before: ContentRecord::encode(&c.before, blobs)?,
            after: ContentRecord::encode(&c.after, blobs)?,
        })
    }

    fn decode(self, line: usize, blobs: &Blobs) -> Result<(Option<Section>, Option<u8>, Command)> {
        let before = self.before.decode(line, blobs)?;
        let after = self.after.decode(line, blobs)?;
        Ok((self.section, self.replica, Command::new(self.path, before, after)))
    }
}

fn header_line(format: &str) -> String {
    serde_json::to_string(&Header {
        format: format.to_owned(),
        version: FORMAT_VERSION,
    })
    .expect("header serializes")
}

/// Parses the header and yields `(line number, record)` for the rest.
fn records<'t, T>(text: &'t str, format: &'static str) -> Result<impl Iterator<Item = Result<(usize, T)>> + 't>
where
    T: serde::de::DeserializeOwned + 't,
{
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (i, first) = lines.next().ok_or(FormatError::MissingHeader)?;
    let header: Header = serde_json::from_str(first).map_err(|source| FormatError::Json { line: i + 1, source })?;
    if header.format != format {
        return Err(FormatError::WrongFormat {
            expected: format,
            found: header.format,
        });
    }
    if header.version != FORMAT_VERSION {
        return Err(FormatError::Version(header.version));
    }
    Ok(lines.map(|(i, l)| {
        serde_json::from_str(l)
            .map(|r| (i + 1, r))
            .map_err(|source| FormatError::Json { line: i + 1, source })
    }))
}

fn push_json<T: Serialize>(out: &mut String, record: &T) {
    out.push_str(&serde_json::to_string(record).expect("records serialize"));
    out.push('\n');
}

/// Visible values of a filesystem; omitted paths are Empty.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Snapshot {
    entries: BTreeMap<NodeId, Content>,
}

impl Snapshot {
    pub fn from_fs(fs: &FileSystem) -> Self {
        Self {
            entries: fs.visible().map(|(n, c)| (n.clone(), c.clone())).collect(),
        }
    }

    /// Validates the tree property over the snapshot's own paths.
    pub fn new(entries: BTreeMap<NodeId, Content>) -> Result<Self> {
        let s = Self {
            entries: entries.into_iter().filter(|(_, c)| !c.is_empty()).collect(),
        };
        s.to_fs(Arc::new(Namespace::build(s.entries.keys().cloned())))?;
        Ok(s)
    }

    pub fn entries(&self) -> &BTreeMap<NodeId, Content> {
        &self.entries
    }

    pub fn nodes(&self) -> impl Iterator<Item = &NodeId> + '_ {
        self.entries.keys()
    }

    /// The snapshot as a filesystem over `ns`, which must contain every path.
    pub fn to_fs(&self, ns: Arc<Namespace>) -> Result<FileSystem> {
        let fs =
            FileSystem::from_entries(ns, self.entries.iter().map(|(n, c)| (n.clone(), c.clone()))).map_err(|e| {
                FormatError::Record {
                    line: 0,
                    msg: e.to_string(),
                }
            })?;
        if let Some(n) = fs.tree_violation() {
            return Err(FormatError::TreeProperty(n));
        }
        Ok(fs)
    }

    pub fn parse(text: &str, blobs: &Blobs) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for r in records::<SnapshotRecord>(text, SNAPSHOT)? {
            let (line, r) = r?;
            if r.content.kind == Kind::Empty {
                return Err(FormatError::Record {
                    line,
                    msg: "snapshots list only dirs and files".into(),
                });
            }
            let content = r.content.decode(line, blobs)?;
            if entries.insert(r.path.clone(), content).is_some() {
                return Err(FormatError::Duplicate(r.path));
            }
        }
        Self::new(entries)
    }

    pub fn render(&self, blobs: &Blobs) -> Result<String> {
        let mut out = header_line(SNAPSHOT);
        out.push('\n');
        for (path, c) in &self.entries {
            push_json(
                &mut out,
                &SnapshotRecord {
                    path: path.clone(),
                    content: ContentRecord::encode(c, blobs)?,
                },
            );
        }
        Ok(out)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&read_text(path)?, &Blobs::sidecar(path))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = self.render(&Blobs::sidecar(path))?;
        write_atomic(path, text.as_bytes())
    }
}

/// Puts several snapshots, plus any extra nodes, on one shared namespace.
pub fn shared_filesystems<'a, I>(snapshots: &[&Snapshot], extra: I) -> Result<Vec<FileSystem>>
where
    I: IntoIterator<Item = &'a NodeId>,
{
    let mut ns = Namespace::build(snapshots.iter().flat_map(|s| s.nodes().cloned()));
    for n in extra {
        ns.insert(n.clone());
    }
    let ns = Arc::new(ns);
    snapshots.iter().map(|s| s.to_fs(Arc::clone(&ns))).collect()
}

fn parse_commands(text: &str, format: &'static str, blobs: &Blobs) -> Result<Vec<Command>> {
    let mut out = Vec::new();
    for r in records::<CommandRecord>(text, format)? {
        let (line, r) = r?;
        let (section, replica, c) = r.decode(line, blobs)?;
        if section.is_some() || replica.is_some() {
            return Err(FormatError::Record {
                line,
                msg: "section fields belong in plan files".into(),
            });
        }
        out.push(c);
    }
    Ok(out)
}

fn render_commands<'a, I>(format: &str, cmds: I, blobs: &Blobs) -> Result<String>
where
    I: IntoIterator<Item = &'a Command>,
{
    let mut out = header_line(format);
    out.push('\n');
    for c in cmds {
        push_json(&mut out, &CommandRecord::encode(c, None, None, blobs)?);
    }
    Ok(out)
}

/// A log: commands in the order they were performed.
pub fn parse_log(text: &str, blobs: &Blobs) -> Result<Vec<Command>> {
    parse_commands(text, LOG, blobs)
}

pub fn render_log(entries: &[Command], blobs: &Blobs) -> Result<String> {
    render_commands(LOG, entries, blobs)
}

pub fn read_log(path: &Path) -> Result<Vec<Command>> {
    parse_log(&read_text(path)?, &Blobs::sidecar(path))
}

pub fn write_log(path: &Path, entries: &[Command]) -> Result<()> {
    write_atomic(path, render_log(entries, &Blobs::sidecar(path))?.as_bytes())
}

/// A canonical set, written in execution order.
pub fn parse_command_set(text: &str, blobs: &Blobs) -> Result<CanonicalSet> {
    Ok(CanonicalSet::new(parse_commands(text, COMMANDS, blobs)?)?)
}

pub fn render_command_set(set: &CanonicalSet, blobs: &Blobs) -> Result<String> {
    render_commands(COMMANDS, &set.order(), blobs)
}

pub fn read_command_set(path: &Path) -> Result<CanonicalSet> {
    parse_command_set(&read_text(path)?, &Blobs::sidecar(path))
}

pub fn write_command_set(path: &Path, set: &CanonicalSet) -> Result<()> {
    write_atomic(path, render_command_set(set, &Blobs::sidecar(path))?.as_bytes())
}

pub fn render_plan(plan: &MergePlan, blobs: &Blobs) -> Result<String> {
    let mut out = header_line(PLAN);
    out.push('\n');
    for c in plan.merger.order() {
        push_json(
            &mut out,
            &CommandRecord::encode(&c, Some(Section::Merger), None, blobs)?,
        );
    }
    for (i, rp) in [(1u8, &plan.replica1), (2, &plan.replica2)] {
        for (section, cmds) in [(Section::Rollback, &rp.rollback), (Section::Apply, &rp.apply)] {
            for c in cmds {
                push_json(&mut out, &CommandRecord::encode(c, Some(section), Some(i), blobs)?);
            }
        }
    }
    Ok(out)
}

pub fn parse_plan(text: &str, blobs: &Blobs) -> Result<MergePlan> {
    let mut merger = Vec::new();
    let mut replicas = [ReplicaPlan::default(), ReplicaPlan::default()];
    for r in records::<CommandRecord>(text, PLAN)? {
        let (line, r) = r?;
        let (section, replica, c) = r.decode(line, blobs)?;
        let bad = |msg: &str| FormatError::Record {
            line,
            msg: msg.to_owned(),
        };
        match (section, replica) {
            (Some(Section::Merger), None) => merger.push(c),
            (Some(s), Some(i @ (1 | 2))) if s != Section::Merger => {
                let rp = &mut replicas[usize::from(i - 1)];
                if s == Section::Rollback {
                    rp.rollback.push(c);
                } else {
                    rp.apply.push(c);
                }
            }
            _ => {
                return Err(bad(
                    "expected a merger record or a rollback/apply record for replica 1 or 2",
                ))
            }
        }
    }
    let [replica1, replica2] = replicas;
    Ok(MergePlan {
        merger: CanonicalSet::new(merger)?,
        replica1,
        replica2,
    })
}

pub fn read_plan(path: &Path) -> Result<MergePlan> {
    parse_plan(&read_text(path)?, &Blobs::sidecar(path))
}

pub fn write_plan(path: &Path, plan: &MergePlan) -> Result<()> {
    write_atomic(path, render_plan(plan, &Blobs::sidecar(path))?.as_bytes())
}

/// `node: before -> after`, one per line.
pub fn text_commands<'a, I>(cmds: I) -> String
where
    I: IntoIterator<Item = &'a Command>,
{
    let mut out = String::new();
    for c in cmds {
        let _ = writeln!(out, "{c}");
    }
    out
}

pub fn text_plan(plan: &MergePlan) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "merger ({} commands):", plan.merger.len());
    for c in plan.merger.order() {
        let _ = writeln!(out, "  {c}");
    }
    for (i, rp) in [(1, &plan.replica1), (2, &plan.replica2)] {
        let _ = writeln!(out, "replica {i} rollback:");
        for c in &rp.rollback {
            let _ = writeln!(out, "  {c}");
        }
        let _ = writeln!(out, "replica {i} apply:");
        for c in &rp.apply {
            let _ = writeln!(out, "  {c}");
        }
    }
    out
}

/// Indented tree of the visible nodes: `name/` for directories,
/// `name = file(...)` for files.
pub fn text_tree(fs: &FileSystem) -> String {
    let mut out = String::new();
    for (n, c) in fs.visible() {
        let indent = "  ".repeat(n.depth().saturating_sub(1));
        match c {
            Content::Directory => {
                let _ = writeln!(out, "{indent}{}/", n.name());
            }
            other => {
                let _ = writeln!(out, "{indent}{} = {other}", n.name());
            }
        }
    }
    out
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| FormatError::Io {
        path: path.to_owned(),
        source,
    })
}

/// Writes via a temporary sibling and a rename, so readers never observe a
/// partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let io_err = |source| FormatError::Io {
        path: path.to_owned(),
        source,
    };
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(io_err)?;
    fs::rename(&tmp, path).map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fstree::enumerate_filesystems;
    use crate::reconciler::merge_plan;
    use crate::testkit::*;

    #[test]
    fn snapshot_round_trip_exhaustive() {
        let ns = Arc::new(Namespace::from_paths(["/a/b/c", "/a/d", "/e"]).unwrap());
        let payloads = [Payload::from("x"), Payload::new(vec![0xff, 0x00])];
        for fs in enumerate_filesystems(&ns, &payloads, 1 << 20).unwrap() {
            let text = Snapshot::from_fs(&fs).render(&Blobs::inline()).unwrap();
            let back = Snapshot::parse(&text, &Blobs::inline()).unwrap();
            assert_eq!(back.to_fs(Arc::clone(&ns)).unwrap(), fs);
        }
    }

    #[test]
    fn snapshot_records() {
        let text = Snapshot::from_fs(&sample_fs2()).render(&Blobs::inline()).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(r#"{"format":"treesync/snapshot","version":1}"#));
        assert_eq!(lines.next(), Some(r#"{"path":"/n1","kind":"dir"}"#));
        assert!(text.contains(r#"{"path":"/n1/n6","kind":"file","text":"f6"}"#));
    }

    #[test]
    fn snapshot_validation() {
        let orphan = format!(
            "{}\n{}\n",
            header_line(SNAPSHOT),
            r#"{"path":"/a/b","kind":"file","text":"x"}"#
        );
        assert!(matches!(
            Snapshot::parse(&orphan, &Blobs::inline()),
            Err(FormatError::TreeProperty(n)) if n.to_string() == "/a/b"
        ));
        let dup = format!(
            "{}\n{}\n{}\n",
            header_line(SNAPSHOT),
            r#"{"path":"/a","kind":"dir"}"#,
            r#"{"path":"/a","kind":"dir"}"#
        );
        assert!(matches!(
            Snapshot::parse(&dup, &Blobs::inline()),
            Err(FormatError::Duplicate(_))
        ));
        let wrong = render_log(&[], &Blobs::inline()).unwrap();
        assert!(matches!(
            Snapshot::parse(&wrong, &Blobs::inline()),
            Err(FormatError::WrongFormat { .. })
        ));
        let two_payloads = format!(
            "{}\n{}\n",
            header_line(SNAPSHOT),
            r#"{"path":"/a","kind":"file","text":"x","hex":"00"}"#
        );
        assert!(matches!(
            Snapshot::parse(&two_payloads, &Blobs::inline()),
            Err(FormatError::Record { line: 2, .. })
        ));
        assert!(matches!(
            Snapshot::parse("", &Blobs::inline()),
            Err(FormatError::MissingHeader)
        ));
    }

    #[test]
    fn large_payloads_go_to_the_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("snap.jsonl");
        let big = Payload::new(vec![7u8; INLINE_LIMIT + 1]);
        let ns = Arc::new(Namespace::from_paths(["/big", "/small"]).unwrap());
        let fs = FileSystem::from_entries(
            Arc::clone(&ns),
            [
                (NodeId::parse("/big").unwrap(), Content::File(big.clone())),
                (NodeId::parse("/small").unwrap(), Content::file("s")),
            ],
        )
        .unwrap();
        Snapshot::from_fs(&fs).write(&path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.contains(&big.digest()));
        let blob = dir.path().join("snap.jsonl.blobs").join(&big.digest()[7..]);
        assert!(blob.exists());
        assert_eq!(Snapshot::read(&path).unwrap().to_fs(Arc::clone(&ns)).unwrap(), fs);

        fs::write(&blob, b"tampered").unwrap();
        assert!(matches!(Snapshot::read(&path), Err(FormatError::CorruptBlob(_))));
        fs::remove_file(&blob).unwrap();
        assert!(matches!(Snapshot::read(&path), Err(FormatError::MissingBlob(_))));
    }

    #[test]
    fn plan_round_trip() {
        let (a, b) = (sample_a(), sample_b());
        for m in crate::reconciler::enumerate_mergers(&a, &b).unwrap() {
            let plan = merge_plan(&a, &b, &m).unwrap();
            let text = render_plan(&plan, &Blobs::inline()).unwrap();
            assert_eq!(parse_plan(&text, &Blobs::inline()).unwrap(), plan);
        }
        let text = render_plan(&merge_plan(&a, &b, &a).unwrap(), &Blobs::inline()).unwrap();
        assert!(text.lines().skip(1).all(|l| !l.contains(r#""replica":1"#)));
    }

    #[test]
    fn command_files() {
        let text = render_command_set(&sample_a(), &Blobs::inline()).unwrap();
        assert_eq!(parse_command_set(&text, &Blobs::inline()).unwrap(), sample_a());
        assert!(text.lines().nth(1).unwrap().contains("/n1/n2/n3/n4/n5"));
        let log = vec![tau(6), tau(6).inverse()];
        let text = render_log(&log, &Blobs::inline()).unwrap();
        assert_eq!(parse_log(&text, &Blobs::inline()).unwrap(), log);
        let bad = text.replace("\"path\"", "\"section\":\"merger\",\"path\"");
        assert!(parse_log(&bad, &Blobs::inline()).is_err());
    }

    #[test]
    fn text_rendering() {
        assert_eq!(text_commands([&sigma(5)]), "/n1/n2/n3/n4/n5: dir -> empty\n");
        assert_eq!(text_commands([&tau(6)]), "/n1/n6: empty -> file(\"f6\")\n");
        let tree = text_tree(&sample_fs2());
        assert!(tree.starts_with("n1/\n  n2/\n"));
        assert!(tree.contains("  n6 = file(\"f6\")\n"));
    }
}
