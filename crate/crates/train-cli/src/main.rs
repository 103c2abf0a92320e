//! Command-line front end for the attestation simulator.
//!
//! `train run <config.json>` executes the configured scenario and
//! prints one tally line and one metrics line of JSON per instance.
//! `train sweep <config.json> --axis ...` repeats the scenario across
//! an axis and prints a CSV table. `train chain gen|show` handles
//! chain files. Results go to standard output, diagnostics to
//! standard error. Exit codes: 0 success, 2 usage or configuration
//! error, 3 internal invariant violation.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use train_cli::config::{self, ConfigError};
use train_cli::{chain_file, output, trace_file};
use train_core::chain::HashChain;
use train_core::engine::run;
use train_core::metrics::{sweep_csv, toctou_sa_us, SweepRow};
use train_core::scenario::Scenario;
use train_core::topology::{Topology, TopologyKind};
use train_core::trace::TraceMode;

#[derive(Parser)]
#[command(name = "train", version, about = "Network attestation simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the configured scenario; prints a tally line and a metrics
    /// line per instance.
    Run {
        config: PathBuf,
        /// Record every transmitted frame here, with a JSON sidecar of
        /// per-device attestation instants next to it.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run the scenario once per axis point; prints a CSV table.
    Sweep {
        config: PathBuf,
        /// n=10,100,1000 or topo=star,line,tree:2
        #[arg(long)]
        axis: String,
    },
    /// Generate or inspect chain files.
    Chain {
        #[command(subcommand)]
        cmd: ChainCmd,
    },
}

#[derive(Subcommand)]
enum ChainCmd {
    /// Evaluate a chain from a hex seed and print or save it.
    Gen {
        /// Hex seed; 32 bytes are used as the root directly, anything
        /// else is hashed down to 32.
        #[arg(long)]
        seed: String,
        /// Number of links above the root.
        #[arg(long)]
        m: u32,
        /// Write to this file instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Validate a chain file and echo its canonical form.
    Show { file: PathBuf },
}

enum Failure {
    /// Caller mistake: unreadable input, invalid document, bad flag.
    Usage(String),
    /// State the validated inputs should have made impossible.
    Internal(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Internal(msg)) => {
            eprintln!("internal error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.cmd {
        Cmd::Run { config, trace } => cmd_run(&config, trace.as_deref()),
        Cmd::Sweep { config, axis } => cmd_sweep(&config, &axis),
        Cmd::Chain { cmd } => match cmd {
            ChainCmd::Gen { seed, m, out } => cmd_chain_gen(&seed, m, out.as_deref()),
            ChainCmd::Show { file } => cmd_chain_show(&file),
        },
    }
}

/// Prints to stdout; a reader that has gone away (`train ... | head`)
/// ends the process quietly instead of panicking.
fn emit(text: &str) -> Result<(), Failure> {
    let mut out = io::stdout().lock();
    let done = out.write_all(text.as_bytes()).and_then(|()| out.flush());
    match done {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == io::ErrorKind::BrokenPipe => std::process::exit(0),
        Err(e) => Err(Failure::Internal(format!("stdout: {e}"))),
    }
}

fn emit_line(text: &str) -> Result<(), Failure> {
    emit(text)?;
    emit("\n")
}

fn load_scenario(path: &Path) -> Result<Scenario, Failure> {
    let mut sc = config::load(path).map_err(|e| match e {
        ConfigError::Io(io) => Failure::Usage(format!("{}: {io}", path.display())),
        other => Failure::Usage(format!("{}: {other}", path.display())),
    })?;
    config::apply_seed_override(&mut sc, std::env::var("TRAIN_SEED").ok().as_deref())?;
    if let Some(warning) = config::timing_warning(&sc) {
        eprintln!("warning: {warning}");
    }
    Ok(sc)
}

fn cmd_run(config: &Path, trace: Option<&Path>) -> Result<(), Failure> {
    let mut sc = load_scenario(config)?;
    if trace.is_some() {
        sc.trace = TraceMode::Full;
    }
    let out = run(&sc).map_err(|e| Failure::Internal(e.to_string()))?;
    for inst in &out.instances {
        emit_line(&output::tally_line(inst))?;
        emit_line(&output::metrics_line(inst))?;
    }
    if out.exhausted {
        eprintln!(
            "warning: hash chain depleted after {} of {} instances",
            out.instances.len(),
            sc.instances
        );
    }
    if let Some(path) = trace {
        trace_file::write(path, &out)
            .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

#[derive(PartialEq)]
enum AxisPoint {
    N(u32),
    Topo(TopologyKind),
}

impl AxisPoint {
    fn label(&self) -> String {
        match self {
            AxisPoint::N(n) => format!("n={n}"),
            AxisPoint::Topo(TopologyKind::Line) => "line".into(),
            AxisPoint::Topo(TopologyKind::Star) => "star".into(),
            AxisPoint::Topo(TopologyKind::Tree { degree }) => format!("tree:{degree}"),
        }
    }
}

fn parse_axis(spec: &str) -> Result<Vec<AxisPoint>, Failure> {
    let (key, rest) = spec
        .split_once('=')
        .ok_or_else(|| Failure::Usage(format!("axis must be n=... or topo=..., got {spec:?}")))?;
    let mut points: Vec<AxisPoint> = Vec::new();
    let mut push = |p: AxisPoint| {
        if !points.contains(&p) {
            points.push(p);
        }
    };
    for item in rest.split(',').filter(|s| !s.is_empty()) {
        match key {
            "n" => push(AxisPoint::N(item.parse().map_err(|_| {
                Failure::Usage(format!("axis point {item:?} is not a device count"))
            })?)),
            "topo" => push(AxisPoint::Topo(parse_topo(item)?)),
            _ => {
                return Err(Failure::Usage(format!(
                    "unknown axis {key:?}, expected n or topo"
                )))
            }
        }
    }
    Ok(points)
}

fn parse_topo(item: &str) -> Result<TopologyKind, Failure> {
    match item {
        "line" => Ok(TopologyKind::Line),
        "star" => Ok(TopologyKind::Star),
        _ => {
            let degree = item
                .strip_prefix("tree:")
                .and_then(|d| d.parse().ok())
                .ok_or_else(|| {
                    Failure::Usage(format!(
                        "axis point {item:?} is not star, line, or tree:<degree>"
                    ))
                })?;
            Ok(TopologyKind::Tree { degree })
        }
    }
}

fn cmd_sweep(config: &Path, axis: &str) -> Result<(), Failure> {
    let base = load_scenario(config)?;
    let points = parse_axis(axis)?;
    let mut rows = Vec::with_capacity(points.len());
    for point in points {
        let mut sc = base.clone();
        match point {
            AxisPoint::N(n) => sc.n_provers = n,
            AxisPoint::Topo(kind) => sc.topology = kind,
        }
        sc.validate()
            .map_err(|e| Failure::Usage(format!("axis point {}: {e}", point.label())))?;
        let topo = Topology::build(sc.topology, sc.n_provers)
            .map_err(|e| Failure::Usage(format!("axis point {}: {e}", point.label())))?;
        let out = run(&sc).map_err(|e| Failure::Internal(e.to_string()))?;
        let inst = out
            .instances
            .first()
            .ok_or_else(|| Failure::Internal("run produced no instances".into()))?;
        rows.push(SweepRow {
            kind: sc.topology,
            n_provers: sc.n_provers,
            height_net: topo.height_net(),
            total_runtime_us: inst.tally_us - inst.initiate_us,
            toctou_sa_us: toctou_sa_us(inst).unwrap_or(0),
            attest: inst.sets.attest.len() as u32,
            fail: inst.sets.fail.len() as u32,
            norep: inst.sets.norep.len() as u32,
        });
    }
    emit(&sweep_csv(&rows))
}

fn cmd_chain_gen(seed: &str, m: u32, out: Option<&Path>) -> Result<(), Failure> {
    let root = chain_file::root_from_seed(seed).map_err(Failure::Usage)?;
    let chain = HashChain::generate(root, m)
        .map_err(|e| Failure::Usage(format!("--m {m}: {e}")))?;
    let text = chain_file::render(&chain);
    match out {
        Some(path) => fs::write(path, text)
            .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?,
        None => emit(&text)?,
    }
    Ok(())
}

fn cmd_chain_show(file: &Path) -> Result<(), Failure> {
    let text = fs::read_to_string(file)
        .map_err(|e| Failure::Usage(format!("{}: {e}", file.display())))?;
    let chain = chain_file::parse(&text)
        .map_err(|e| Failure::Usage(format!("{}: {e}", file.display())))?;
    emit(&chain_file::render(&chain))
}
