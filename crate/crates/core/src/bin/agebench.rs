use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use agebench::device_model::{doubling_sizes, estimate_trace_cost, probe_plan};
use agebench::harness::{self, emit_csv, emit_sweep_csv, ExperimentConfig, ProfileSpec};
use agebench::simfs::ImageSnapshot;
use agebench::trace_analysis::{dynamic_layout_score, free_extent_histogram};
use agebench::workloads::{export_ops, import_ops, RoundedStream};
use agebench::{AccessTrace, Error, LayoutScore, Result};

/// File-system aging workbench.
#[derive(Parser)]
#[command(name = "agebench", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Emit a bandwidth probe plan as `offset,size` lines.
    Probe {
        #[arg(long)]
        device_bytes: u64,
        #[arg(long, default_value_t = 64)]
        offsets: usize,
        #[arg(long, default_value_t = 4096)]
        min_size: u64,
        #[arg(long, default_value_t = 64 << 20)]
        max_size: u64,
        #[arg(long, default_value_t = 4096)]
        block_size: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run an experiment config and print its CSV report.
    Run { config: PathBuf },
    /// Run a config once per value of one numeric parameter.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Dynamic layout score (and modeled cost) of a trace file.
    Score {
        trace: PathBuf,
        /// Profile name for the cost line.
        #[arg(long, default_value = "hdd")]
        profile: String,
    },
    /// Free-extent histogram of an image snapshot.
    Hist { snapshot: PathBuf },
    /// Replay a config on one image and print its snapshot.
    Snapshot {
        config: PathBuf,
        /// Use the empty-size device instead of the full-size one.
        #[arg(long)]
        empty: bool,
    },
    /// Print the op stream a config generates.
    ExportOps { config: PathBuf },
    /// Run a config against a recorded op stream instead of its workload.
    ImportOps { config: PathBuf, ops: PathBuf },
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn load(path: &Path) -> Result<ExperimentConfig> {
    ExperimentConfig::from_json(&read(path)?)
}

/// Output plus whether the full image stopped early.
struct Done {
    text: String,
    truncated: bool,
}

impl From<String> for Done {
    fn from(text: String) -> Self {
        Done {
            text,
            truncated: false,
        }
    }
}

fn run(cmd: Cmd) -> Result<Done> {
    match cmd {
        Cmd::Probe {
            device_bytes,
            offsets,
            min_size,
            max_size,
            block_size,
            seed,
        } => {
            let plan = probe_plan(
                device_bytes,
                offsets,
                &doubling_sizes(min_size, max_size),
                block_size,
                seed,
            )?;
            let mut out = String::from("offset,size\n");
            for p in plan {
                out.push_str(&format!("{},{}\n", p.offset, p.size));
            }
            Ok(out.into())
        }
        Cmd::Run { config } => {
            let out = harness::run_experiment_with(&load(&config)?, |_| {})?;
            if let Some(r) = out.full_stopped_round {
                eprintln!("full image ran out of space in round {r}");
            }
            Ok(Done {
                text: emit_csv(&out.rows),
                truncated: out.full_stopped_round.is_some(),
            })
        }
        Cmd::Sweep {
            config,
            axis,
            values,
        } => {
            let rows = harness::sweep(&load(&config)?, &axis, &values)?;
            Ok(emit_sweep_csv(&axis, &rows).into())
        }
        Cmd::Score { trace, profile } => {
            let t = AccessTrace::parse(&read(&trace)?)?;
            let s: LayoutScore = dynamic_layout_score(&t)?;
            let p = ProfileSpec::Named(profile).resolve()?;
            let cost = estimate_trace_cost(&t, &p)?;
            Ok(format!(
                "dynamic_layout {:.6}\nblocks {}\nconsecutive {}\nruns {}\nest_seconds {:.6}\n",
                s.value, s.n_blocks, s.consecutive, cost.n_runs, cost.total_seconds
            )
            .into())
        }
        Cmd::Hist { snapshot } => {
            let snap = ImageSnapshot::parse(&read(&snapshot)?)?;
            Ok(free_extent_histogram(&snap.free, snap.block_size)?
                .to_table()
                .into())
        }
        Cmd::Snapshot { config, empty } => {
            let cfg = load(&config)?;
            let blocks = if empty {
                cfg.device_blocks_empty
            } else {
                cfg.device_blocks_full
            };
            Ok(harness::replay(&cfg, blocks)?.snapshot().into())
        }
        Cmd::ExportOps { config } => {
            let cfg = load(&config)?;
            let bs = cfg.profile()?.block_size;
            let stream = cfg
                .workload
                .stream(cfg.device_blocks_full * bs, bs, cfg.seed)?;
            Ok(export_ops(stream).into())
        }
        Cmd::ImportOps { config, ops } => {
            let cfg = load(&config)?;
            let stream = RoundedStream::from_ops(import_ops(&read(&ops)?)?);
            let out = harness::run_stream(&cfg, stream, |_| {})?;
            Ok(Done {
                text: emit_csv(&out.rows),
                truncated: out.full_stopped_round.is_some(),
            })
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_)
        | Error::Parse { .. }
        | Error::Json(_)
        | Error::TraceFormat(_)
        | Error::InvalidParameter(_)
        | Error::Io(_) => 2,
        Error::Capacity(_) | Error::NoSpace { .. } => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(done) => {
            let mut stdout = io::stdout().lock();
            if stdout
                .write_all(done.text.as_bytes())
                .and_then(|_| stdout.flush())
                .is_err()
            {
                return ExitCode::from(1);
            }
            ExitCode::from(if done.truncated { 3 } else { 0 })
        }
        Err(e) => {
            eprintln!("agebench: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
