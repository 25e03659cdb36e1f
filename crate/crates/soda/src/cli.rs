//! Command-line front end: single experiments, seed sweeps, protocol
//! comparisons, the sender-crash uniformity matrix, and trace replay.

use crate::checker::{check_run, render_op_log, CheckSet};
use crate::experiments::{self, sweep, uniformity_matrix, CostRow, SweepSummary};
use crate::sim::{
    self, config::parse_crash_list, config::parse_error_list, DeliveryModel, Protocol, SimConfig,
};
use crate::trace::{parse_trace, render_replay, render_trace};
use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "soda",
    about = "Erasure-coded atomic register protocols under a deterministic simulated network",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run seeded experiments and verify the enabled checks
    Run(Box<RunArgs>),
    /// Pretty-print a trace file as a per-tick timeline
    Replay { trace: PathBuf },
}

#[derive(Args)]
struct RunArgs {
    /// Config file (key = value text, or JSON)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Protocol: soda, soda_err or abd
    #[arg(long)]
    protocol: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    f: Option<usize>,
    /// Error tolerance e (soda_err only)
    #[arg(long)]
    e: Option<usize>,
    #[arg(long)]
    writers: Option<u32>,
    #[arg(long)]
    readers: Option<u32>,
    /// Operations per client
    #[arg(long)]
    ops: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of seeded repetitions
    #[arg(long)]
    seeds: Option<u64>,
    /// Switch to delta-bounded delivery with this bound in ticks
    #[arg(long)]
    delta: Option<u64>,
    /// Async mode: maximum per-envelope delay in ticks
    #[arg(long)]
    max_delay: Option<u64>,
    #[arg(long)]
    value_size: Option<usize>,
    /// Crash schedule, e.g. "s1@t=0, w1@vsends=2"
    #[arg(long)]
    crash: Option<String>,
    /// Disk-error schedule, e.g. "s3@r1#2"
    #[arg(long)]
    error: Option<String>,
    /// Directory for per-run reports and traces
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated checks (default: all that apply)
    #[arg(long)]
    checks: Option<String>,
    /// Also run this protocol on the same workload and print a cost table
    #[arg(long)]
    compare: Option<String>,
    /// Run the exhaustive sender-crash-prefix uniformity suite instead
    #[arg(long)]
    crash_matrix: bool,
    /// Enable adversarial schedule mutators (async mode)
    #[arg(long)]
    adversarial: bool,
    /// Readers start only after all writes complete
    #[arg(long)]
    read_after_write: bool,
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run_cli(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run_cli(cli: Cli) -> Result<bool, String> {
    match cli.cmd {
        Cmd::Run(args) => cmd_run(*args),
        Cmd::Replay { trace } => cmd_replay(&trace),
    }
}

fn build_config(args: &RunArgs) -> Result<SimConfig, String> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            SimConfig::parse(&text).map_err(|e| e.to_string())?
        }
        None => {
            let mut cfg = SimConfig::new(Protocol::Soda, 5, 2);
            cfg.writers = 2;
            cfg.readers = 2;
            cfg.ops_per_client = 2;
            cfg.value_size = 1000;
            cfg
        }
    };
    if let Some(p) = &args.protocol {
        cfg.protocol = p.parse().map_err(|e: sim::ConfigError| e.to_string())?;
    }
    if let Some(n) = args.n {
        cfg.n = n;
    }
    if let Some(f) = args.f {
        cfg.f = f;
    }
    if let Some(e) = args.e {
        cfg.e = e;
    }
    if let Some(w) = args.writers {
        cfg.writers = w;
    }
    if let Some(r) = args.readers {
        cfg.readers = r;
    }
    if let Some(ops) = args.ops {
        cfg.ops_per_client = ops;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(delta) = args.delta {
        cfg.delivery = DeliveryModel::DeltaBounded { delta };
    }
    if let Some(max_delay) = args.max_delay {
        cfg.delivery = DeliveryModel::AsyncUnordered { max_delay };
    }
    if let Some(size) = args.value_size {
        cfg.value_size = size;
    }
    if let Some(crash) = &args.crash {
        cfg.crash = parse_crash_list(crash)?;
    }
    if let Some(err) = &args.error {
        cfg.error_schedule = parse_error_list(err)?;
    }
    if args.adversarial {
        cfg.adversarial = true;
    }
    if args.read_after_write {
        cfg.read_after_write = true;
    }
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn cmd_run(args: RunArgs) -> Result<bool, String> {
    let cfg = build_config(&args)?;

    if args.crash_matrix {
        let outcome = uniformity_matrix(cfg.n, cfg.f, cfg.value_size, 3);
        println!(
            "uniformity matrix: {} crash cases, {} runs, {} failures",
            outcome.cases,
            outcome.runs,
            outcome.failures.len()
        );
        for f in outcome.failures.iter().take(10) {
            println!("  {f}");
        }
        return Ok(outcome.all_pass());
    }

    let checks = match &args.checks {
        Some(s) => CheckSet::parse(s)?,
        None => CheckSet::for_config(&cfg),
    };
    let seeds = args.seeds.unwrap_or(1);

    let mut all_pass = true;
    let mut rows: Vec<CostRow> = Vec::new();

    let mut protocols = vec![cfg.protocol];
    if let Some(other) = &args.compare {
        let other: Protocol = other.parse().map_err(|e: sim::ConfigError| e.to_string())?;
        if other != cfg.protocol {
            protocols.push(other);
        }
    }

    for protocol in protocols {
        let mut pcfg = cfg.clone();
        pcfg.protocol = protocol;
        if protocol != Protocol::SodaErr {
            pcfg.e = 0;
            pcfg.error_schedule.clear();
        }
        pcfg.validate().map_err(|e| e.to_string())?;
        let mut pchecks = checks;
        if !matches!(pcfg.delivery, DeliveryModel::DeltaBounded { .. }) {
            pchecks.latency = false;
        }
        let agg = if let Some(dir) = &args.out {
            run_with_outputs(&pcfg, seeds, &pchecks, dir)?
        } else {
            sweep(&pcfg, seeds, &pchecks)
        };
        println!("{protocol}: {} runs, {} failing", agg.runs, agg.failures.len());
        for (seed, msg) in agg.failures.iter().take(5) {
            println!("  seed {seed}: {msg}");
        }
        println!(
            "  max write cost {:.3} units, max read cost {:.3} units, storage {:.3} units",
            agg.max_write_units, agg.max_read_units, agg.max_storage_units
        );
        println!(
            "  max write latency {} ticks, max read latency {} ticks, {} events total",
            agg.max_write_duration, agg.max_read_duration, agg.total_events
        );
        all_pass &= agg.all_pass();
        rows.push(CostRow {
            protocol,
            storage_units: agg.max_storage_units,
            max_write_units: agg.max_write_units,
            max_read_units: agg.max_read_units,
        });
    }

    if rows.len() > 1 {
        println!("\n{}", experiments::render_cost_table(&rows));
    }
    Ok(all_pass)
}

fn run_with_outputs(
    cfg: &SimConfig,
    seeds: u64,
    checks: &CheckSet,
    dir: &Path,
) -> Result<SweepSummary, String> {
    std::fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
    let mut agg = SweepSummary::default();
    for i in 0..seeds {
        let run_cfg = cfg.clone().with_seed(cfg.seed.wrapping_add(i));
        let art = sim::run(&run_cfg).map_err(|e| e.to_string())?;
        let report = check_run(&art, checks);
        let summary = experiments::summarize(&art, checks);

        let stem = format!("{}_{:04}", run_cfg.protocol, i);
        let report_path = dir.join(format!("{stem}.report.txt"));
        let mut text = format!("# seed {}\n{report}\n# operation log\n", run_cfg.seed);
        text.push_str(&render_op_log(&art));
        std::fs::write(&report_path, text).map_err(|e| e.to_string())?;
        let trace_path = dir.join(format!("{stem}.trace"));
        std::fs::write(&trace_path, render_trace(&art.trace)).map_err(|e| e.to_string())?;

        agg.runs += 1;
        if !summary.pass {
            agg.failures.push((summary.seed, summary.failures.join("; ")));
        }
        agg.max_write_units = agg.max_write_units.max(summary.max_write_units);
        agg.max_read_units = agg.max_read_units.max(summary.max_read_units);
        agg.max_storage_units = agg.max_storage_units.max(summary.storage_units);
        agg.max_write_duration =
            agg.max_write_duration.max(summary.write_durations.iter().copied().max().unwrap_or(0));
        agg.max_read_duration =
            agg.max_read_duration.max(summary.read_durations.iter().copied().max().unwrap_or(0));
        agg.read_durations.extend(summary.read_durations);
        agg.total_events += summary.events;
    }
    let summary_path = dir.join("summary.txt");
    let text = format!(
        "runs {}\nfailures {}\nmax_write_units {:.4}\nmax_read_units {:.4}\n\
         storage_units {:.4}\nmax_write_latency {}\nmax_read_latency {}\n",
        agg.runs,
        agg.failures.len(),
        agg.max_write_units,
        agg.max_read_units,
        agg.max_storage_units,
        agg.max_write_duration,
        agg.max_read_duration
    );
    std::fs::write(summary_path, text).map_err(|e| e.to_string())?;
    Ok(agg)
}

fn cmd_replay(path: &Path) -> Result<bool, String> {
    use std::io::Write;
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let lines = parse_trace(&text).map_err(|e| e.to_string())?;
    // tolerate a closed pipe (e.g. piping into `head`)
    match std::io::stdout().write_all(render_replay(&lines).as_bytes()) {
        Ok(()) => Ok(true),
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(true),
        Err(e) => Err(format!("cannot write timeline: {e}")),
    }
}
