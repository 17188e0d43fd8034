// SPDX-License-Identifier: Apache-2.0

//! `twinsym`: compare two IR programs on shared symbolic inputs.
//!
//! Exit codes: 0 all compared targets equal, 1 differences found, 2 usage or
//! validation error, 3 the solver gave up on some question.

mod report;
mod testgen;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use twinsym::exec::{Harness, HarnessSpec};
use twinsym::expr::ExprPool;
use twinsym::session::{analyze, export_session, view_for, AcceptFile, AnalysisConfig, Outcome, SessionDoc};
use twinsym::solver::{Backend, Solver, SolverConfig};
use twinsym::tree::Relation;

#[derive(Parser)]
#[command(name = "twinsym", version, about = "Comparative symbolic execution of two IR programs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OnOff {
    On,
    Off,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SolverKind {
    Embedded,
    External,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Harness file (JSON).
    harness: PathBuf,
    /// Directory for session.json; defaults to `twinsym-out/<harness name>`
    /// next to the harness.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Check every pair with the solver instead of consulting cached cores.
    #[arg(long)]
    no_core_cache: bool,
    #[arg(long, value_enum, default_value = "on")]
    core_minimize: OnOff,
    /// Tree compression level stored in the session.
    #[arg(long, default_value_t = 0, value_parser = clap::value_parser!(u8).range(0..=2))]
    compress: u8,
    /// Comma-separated relations: any, status, io, memory:<annotation>.
    #[arg(long, value_delimiter = ',')]
    prune: Vec<String>,
    #[arg(long, value_enum, default_value = "embedded")]
    solver: SolverKind,
    /// Command line of the external SMT-LIB solver.
    #[arg(long, default_value = "z3 -in")]
    solver_cmd: String,
    /// Per-query solver time budget in seconds.
    #[arg(long, default_value_t = 30)]
    solver_timeout: u64,
    #[arg(long)]
    loop_bound: Option<u32>,
    #[arg(long)]
    concretions: Option<usize>,
    /// Seed for solver tie-breaking.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Compute refinement for every compatible pair.
    #[arg(long)]
    refine_all: bool,
    /// Approved differing pairs; exit 1 becomes 0 when all are listed.
    #[arg(long)]
    accept_file: Option<PathBuf>,
    /// Print the full report after the run.
    #[arg(long)]
    report: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Analyse a harness and write a session document.
    Run(Box<RunArgs>),
    /// Print a text report of a session.
    Report { session: PathBuf },
    /// Write one concrete test vector per concretion in a session.
    Testgen {
        session: PathBuf,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Copy a session into the review UI's data directory.
    Export {
        session: PathBuf,
        /// Directory to create `twinsym-ui/` in; defaults to the session's.
        #[arg(long)]
        dest: Option<PathBuf>,
    },
}

/// An error with the exit code it maps to.
struct Fail(u8, anyhow::Error);

impl<E: Into<anyhow::Error>> From<E> for Fail {
    fn from(e: E) -> Self {
        Fail(2, e.into())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(&args),
        Command::Report { session } => read_session(&session).map(|doc| {
            print!("{}", report::render(&doc));
            0
        }),
        Command::Testgen { session, out } => testgen(&session, out.as_deref()),
        Command::Export { session, dest } => export(&session, dest.as_deref()),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Fail(code, e)) => {
            eprintln!("twinsym: {e:#}");
            ExitCode::from(code)
        }
    }
}

fn read_session(path: &Path) -> Result<SessionDoc, Fail> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(SessionDoc::from_json(&text).with_context(|| path.display().to_string())?)
}

fn solver_config(args: &RunArgs) -> Result<SolverConfig> {
    let backend = match args.solver {
        SolverKind::Embedded => Backend::Embedded,
        SolverKind::External => {
            let cmd: Vec<String> = args.solver_cmd.split_whitespace().map(String::from).collect();
            if cmd.is_empty() {
                bail!("--solver-cmd is empty");
            }
            Backend::External(cmd)
        }
    };
    Ok(SolverConfig {
        backend,
        minimize_cores: args.core_minimize == OnOff::On,
        time_budget: Duration::from_secs(args.solver_timeout.max(1)),
        seed: args.seed,
        ..SolverConfig::default()
    })
}

fn run(args: &RunArgs) -> Result<u8, Fail> {
    if args.workers == 0 {
        return Err(Fail(2, anyhow::anyhow!("--workers must be at least 1")));
    }
    if args.concretions == Some(0) {
        return Err(Fail(2, anyhow::anyhow!("--concretions must be at least 1")));
    }
    let solver = solver_config(args)?;
    let mut spec = HarnessSpec::load(&args.harness)?;
    if let Some(b) = args.loop_bound {
        spec.loop_bound = Some(b);
    }
    if let Some(k) = args.concretions {
        spec.concretions = Some(k);
    }
    let relations: Vec<Relation> = args
        .prune
        .iter()
        .map(|r| r.parse::<Relation>().map_err(anyhow::Error::msg))
        .collect::<Result<_>>()?;
    let dir = args.harness.parent().unwrap_or(Path::new("."));
    let pool = ExprPool::new();
    let h = Harness::from_spec(spec, dir, &pool).with_context(|| args.harness.display().to_string())?;
    for r in &relations {
        if let Relation::MemoryDiffers(name) = r {
            if !h.diff_annotations.iter().any(|&i| &h.annotations[i].display == name) {
                return Err(Fail(2, anyhow::anyhow!("--prune memory:{name}: not a diff target of this harness")));
            }
        }
    }
    let accept = match &args.accept_file {
        None => None,
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?;
            Some(AcceptFile::parse(&text).map_err(anyhow::Error::msg).with_context(|| p.display().to_string())?)
        }
    };

    let config = AnalysisConfig {
        solver: Solver { config: solver },
        workers: args.workers,
        core_cache: !args.no_core_cache,
        concretions: h.concretions,
        refine_all: args.refine_all,
    };
    let analysis = analyze(&pool, &h, &config);
    let view = view_for(&analysis, &relations, args.compress)?;
    let doc = export_session(&pool, &h, &analysis, view)?;

    let out_dir = match &args.out {
        Some(d) => d.clone(),
        None => {
            let stem = args.harness.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "session".into());
            dir.join("twinsym-out").join(stem)
        }
    };
    std::fs::create_dir_all(&out_dir).with_context(|| format!("cannot create {}", out_dir.display()))?;
    let path = out_dir.join("session.json");
    std::fs::write(&path, doc.to_json()).with_context(|| format!("cannot write {}", path.display()))?;

    print!("{}", report::summary(&doc));
    println!("session written to {}", path.display());
    if args.report {
        print!("{}", report::render(&doc));
    }

    let mut code = match doc.outcome {
        Outcome::Equal => 0,
        Outcome::Differs => 1,
        Outcome::Unknown => 3,
    };
    if let Some(accept) = accept {
        let hash = doc.hash();
        if accept.session.as_deref().is_some_and(|s| s != hash) {
            return Err(Fail(
                2,
                anyhow::anyhow!("accept-file is for session {}, this run is {hash}", accept.session.unwrap()),
            ));
        }
        let differing = doc.differing_pairs();
        for p in accept.pairs.difference(&differing) {
            eprintln!("twinsym: accepted pair ({}, {}) is not a differing pair; ignored", p.0, p.1);
        }
        let open: Vec<_> = differing.difference(&accept.pairs).collect();
        if code == 1 && open.is_empty() {
            println!("all {} differing pairs are accepted", differing.len());
            code = 0;
        } else if code == 1 {
            println!("{} differing pairs are not accepted", open.len());
        }
    }
    Ok(code)
}

fn testgen(session: &Path, out: Option<&Path>) -> Result<u8, Fail> {
    let doc = read_session(session)?;
    let vectors = testgen::vectors(&doc)?;
    if vectors.is_empty() {
        return Err(Fail(2, anyhow::anyhow!("{} has no concretions", session.display())));
    }
    let text: String = vectors.iter().map(|v| serde_json::to_string(v).expect("vectors serialize") + "\n").collect();
    match out {
        Some(p) => {
            std::fs::write(p, text).with_context(|| format!("cannot write {}", p.display()))?;
            println!("{} vectors written to {}", vectors.len(), p.display());
        }
        None => {
            use std::io::Write;
            let mut stdout = std::io::stdout().lock();
            if let Err(e) = stdout.write_all(text.as_bytes()).and_then(|_| stdout.flush()) {
                if e.kind() != std::io::ErrorKind::BrokenPipe {
                    return Err(e.into());
                }
            }
        }
    }
    Ok(0)
}

fn export(session: &Path, dest: Option<&Path>) -> Result<u8, Fail> {
    let doc = read_session(session)?;
    let base = dest.or_else(|| session.parent()).unwrap_or(Path::new("."));
    let dir = base.join("twinsym-ui");
    std::fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let path = dir.join("session.json");
    std::fs::write(&path, doc.to_json()).with_context(|| format!("cannot write {}", path.display()))?;
    println!("{}", path.display());
    Ok(0)
}
