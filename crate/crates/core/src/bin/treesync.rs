use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};

use treesync::canonical::CanonicalSet;
use treesync::cli::{self, CliError, Replicas, TerminalArbiter};
use treesync::formats::{
    read_command_set, read_log, read_plan, render_command_set, render_plan, text_commands, text_plan, text_tree,
    write_command_set, write_plan, Blobs, Snapshot,
};
use treesync::reconciler::{ContentPolicy, Policy};

#[derive(Parser)]
#[command(
    name = "treesync",
    version,
    about = "Reconcile two diverged replicas of a filesystem tree"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum, Default)]
enum Format {
    #[default]
    Text,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    FirstWins,
    SecondWins,
    ConstructorWins,
    Guided,
    Interactive,
}

#[derive(Clone, Copy, ValueEnum, Default)]
enum ContentArg {
    First,
    Second,
    #[default]
    Fail,
}

#[derive(clap::Args)]
struct Three {
    /// Snapshot of the common original state
    original: PathBuf,
    /// Snapshot of replica 1
    replica1: PathBuf,
    /// Snapshot of replica 2
    replica2: PathBuf,
}

impl Three {
    fn load(&self) -> anyhow::Result<Replicas> {
        let o = read_snapshot(&self.original)?;
        let r1 = read_snapshot(&self.replica1)?;
        let r2 = read_snapshot(&self.replica2)?;
        Ok(Replicas::from_snapshots(&o, &r1, &r2)?)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Commands that turn ORIGINAL into REPLICA
    Diff {
        original: PathBuf,
        replica: PathBuf,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// Fold a command log into its canonical set
    Replay {
        original: PathBuf,
        log: PathBuf,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// List every merger of the two replicas' updates
    Mergers {
        #[command(flatten)]
        inputs: Three,
        #[arg(long, default_value_t = treesync::reconciler::DEFAULT_MERGER_BOUND)]
        max_enum: usize,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
        /// Also write each merger as a command file `merger-<k>.jsonl`
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Resolve conflicts and write the merge plan
    Reconcile {
        #[command(flatten)]
        inputs: Three,
        #[arg(long, value_enum, default_value = "first-wins")]
        policy: PolicyArg,
        /// Command file of the merger to reach (guided policy)
        #[arg(long)]
        target: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t)]
        content_policy: ContentArg,
        /// Same as `--policy interactive`
        #[arg(long)]
        interactive: bool,
        /// Plan file to write; printed to stdout when absent
        #[arg(short, long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// Plan a given merger without conflict resolution
    Plan {
        #[command(flatten)]
        inputs: Three,
        #[arg(long)]
        target: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// Run one replica's part of a plan on its snapshot
    Apply {
        snapshot: PathBuf,
        plan: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        replica: u8,
        /// Snapshot to write; printed to stdout when absent
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Read a directory tree into a snapshot
    Scan {
        dir: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Serve reconciliation sessions over HTTP
    #[cfg(feature = "server")]
    Serve {
        #[arg(long, default_value = treesync::service::DEFAULT_BIND)]
        bind: std::net::SocketAddr,
        /// Directory where sessions are persisted
        #[arg(long)]
        state_dir: Option<PathBuf>,
        /// Static files for the browser UI
        #[arg(long)]
        ui: Option<PathBuf>,
    },
}

fn read_snapshot(path: &Path) -> anyhow::Result<Snapshot> {
    Snapshot::read(path)
        .map_err(CliError::from)
        .with_context(|| format!("reading {}", path.display()))
}

fn print_set(set: &CanonicalSet, format: Format) -> anyhow::Result<()> {
    let text = match format {
        Format::Text => text_commands(&set.order()),
        Format::Json => render_command_set(set, &Blobs::inline()).map_err(CliError::from)?,
    };
    io::stdout().write_all(text.as_bytes())?;
    Ok(())
}

fn emit_plan(plan: &treesync::MergePlan, out: Option<&Path>, format: Format) -> anyhow::Result<()> {
    if let Some(path) = out {
        write_plan(path, plan).map_err(CliError::from)?;
    }
    let text = match (format, out) {
        (Format::Json, None) => render_plan(plan, &Blobs::inline()).map_err(CliError::from)?,
        (Format::Json, Some(_)) => String::new(),
        (Format::Text, _) => text_plan(plan),
    };
    io::stdout().write_all(text.as_bytes())?;
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Diff {
            original,
            replica,
            format,
        } => {
            let set = cli::diff(&read_snapshot(&original)?, &read_snapshot(&replica)?)?;
            print_set(&set, format)
        }
        Command::Replay { original, log, format } => {
            let entries = read_log(&log).map_err(CliError::from)?;
            let set = cli::replay(&read_snapshot(&original)?, entries)?;
            print_set(&set, format)
        }
        Command::Mergers {
            inputs,
            max_enum,
            format,
            out_dir,
        } => {
            let replicas = inputs.load()?;
            let all = cli::mergers(&replicas, max_enum)?;
            if let Some(dir) = &out_dir {
                std::fs::create_dir_all(dir).map_err(CliError::from)?;
                for (k, m) in all.iter().enumerate() {
                    write_command_set(&dir.join(format!("merger-{}.jsonl", k + 1)), m).map_err(CliError::from)?;
                }
            }
            let mut out = io::stdout().lock();
            for (k, m) in all.iter().enumerate() {
                match format {
                    Format::Text => {
                        writeln!(out, "merger {} ({} commands):", k + 1, m.len())?;
                        for c in m.iter() {
                            writeln!(out, "  {c}")?;
                        }
                    }
                    Format::Json => {
                        let cmds: Vec<String> = m.iter().map(ToString::to_string).collect();
                        writeln!(out, "{}", serde_json::json!({ "merger": k + 1, "commands": cmds }))?;
                    }
                }
            }
            match format {
                Format::Text => writeln!(out, "{} mergers", all.len())?,
                Format::Json => writeln!(out, "{}", serde_json::json!({ "count": all.len() }))?,
            }
            Ok(())
        }
        Command::Reconcile {
            inputs,
            policy,
            target,
            content_policy,
            interactive,
            out,
            format,
        } => {
            let replicas = inputs.load()?;
            let policy = if interactive { PolicyArg::Interactive } else { policy };
            let content = match content_policy {
                ContentArg::First => ContentPolicy::First,
                ContentArg::Second => ContentPolicy::Second,
                ContentArg::Fail => ContentPolicy::Fail,
            };
            let stdin = io::stdin();
            let mut arbiter = TerminalArbiter::new(stdin.lock(), io::stderr());
            let policy = match policy {
                PolicyArg::FirstWins => Policy::FirstWins,
                PolicyArg::SecondWins => Policy::SecondWins,
                PolicyArg::ConstructorWins => Policy::ConstructorWins { content },
                PolicyArg::Interactive => Policy::Interactive(&mut arbiter),
                PolicyArg::Guided => {
                    let path = target.ok_or_else(|| CliError::Usage("--policy guided needs --target".into()))?;
                    Policy::Guided(read_command_set(&path).map_err(CliError::from)?)
                }
            };
            let (rec, plan) = cli::reconcile(&replicas, policy)?;
            if let Format::Text = format {
                eprintln!(
                    "{} conflicts, {} resolution steps, merger of {} commands",
                    rec.initial_conflicts,
                    rec.steps.len(),
                    rec.merger.len()
                );
            }
            emit_plan(&plan, out.as_deref(), format)
        }
        Command::Plan {
            inputs,
            target,
            out,
            format,
        } => {
            let replicas = inputs.load()?;
            let merger = read_command_set(&target).map_err(CliError::from)?;
            let plan = replicas.plan(&merger)?;
            if let Format::Text = format {
                let merged = cli::merged_state(&replicas, &plan)?;
                eprint!("merged tree:\n{}", text_tree(&merged));
            }
            emit_plan(&plan, out.as_deref(), format)
        }
        Command::Apply {
            snapshot,
            plan,
            replica,
            out,
        } => {
            let plan = read_plan(&plan).map_err(CliError::from)?;
            let result = cli::apply(&read_snapshot(&snapshot)?, &plan, replica)?;
            match out {
                Some(path) => result.write(&path).map_err(CliError::from)?,
                None => io::stdout().write_all(result.render(&Blobs::inline()).map_err(CliError::from)?.as_bytes())?,
            }
            Ok(())
        }
        Command::Scan { dir, out } => {
            let snap = cli::scan_directory(&dir)?;
            match out {
                Some(path) => snap.write(&path).map_err(CliError::from)?,
                None => io::stdout().write_all(snap.render(&Blobs::inline()).map_err(CliError::from)?.as_bytes())?,
            }
            Ok(())
        }
        #[cfg(feature = "server")]
        Command::Serve { bind, state_dir, ui } => {
            let rt = tokio::runtime::Runtime::new()?;
            eprintln!("listening on http://{bind}");
            rt.block_on(treesync::service::serve(bind, state_dir, ui))?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e
                .chain()
                .find_map(|c| c.downcast_ref::<CliError>())
                .map_or(cli::EXIT_OTHER, CliError::exit_code);
            ExitCode::from(u8::try_from(code).unwrap_or(1))
        }
    }
}
