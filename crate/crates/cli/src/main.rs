//! `dynclust`: replay update streams, generate workloads, compare against
//! recompute-from-scratch baselines.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error.

mod config;

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};
use dynclust::{
    bench_compare, format_stream, gen_workload, parse_stream, run, Located, Profile, StreamOp,
    WorkloadSpec,
};

use config::Overrides;

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
}

impl From<dynclust::Error> for Failure {
    fn from(e: dynclust::Error) -> Self {
        if e.is_data_error() {
            Failure::Data(e.to_string())
        } else {
            Failure::Usage(e.to_string())
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

#[derive(Parser)]
#[command(
    name = "dynclust",
    version,
    about = "Fully dynamic k-median / k-means clustering"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Replay a stream and write JSON Lines records.
    Run {
        stream: PathBuf,
        #[command(flatten)]
        settings: Overrides,
    },
    /// Generate a synthetic stream.
    Gen {
        /// insert_only, sliding_window:W, random_mix[:p] or blob_churn[:B].
        #[arg(long)]
        profile: Profile,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long, default_value_t = 3)]
        k: usize,
        /// Insert `Q k` after every this many ops.
        #[arg(long)]
        query_every: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare the dynamic engine against static baselines on a stream.
    Bench {
        stream: PathBuf,
        /// Skip the per-update rebuild baseline once its projected runtime
        /// exceeds this many seconds.
        #[arg(long, default_value_t = 60.0)]
        baseline_cap: f64,
        #[command(flatten)]
        settings: Overrides,
    },
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn load_stream(path: &Path) -> Result<Vec<Located>, Failure> {
    let text =
        fs::read_to_string(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    parse_stream(&text).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn stream_dim(ops: &[Located]) -> Option<usize> {
    ops.iter().find_map(|l| match &l.op {
        StreamOp::Insert { coords, .. } => Some(coords.len()),
        _ => None,
    })
}

fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run { stream, settings } => {
            let settings = settings.resolve()?;
            let ops = load_stream(&stream)?;
            let config = settings.run_config(stream_dim(&ops))?;
            let mut out = open_out(settings.out.as_deref())?;
            run(&ops, &config, &mut out)?;
        }
        Command::Gen {
            profile,
            n,
            dim,
            k,
            query_every,
            seed,
            out,
        } => {
            let spec = WorkloadSpec {
                profile,
                n,
                dim,
                k,
                query_every,
                seed,
            };
            let ops = gen_workload(&spec)?;
            let mut w = open_out(out.as_deref())?;
            writeln!(w, "# {profile} n={n} dim={dim} k={k} seed={seed}")?;
            w.write_all(format_stream(&ops).as_bytes())?;
            w.flush()?;
        }
        Command::Bench {
            stream,
            baseline_cap,
            settings,
        } => {
            if !(baseline_cap.is_finite() && baseline_cap >= 0.0) {
                return Err(Failure::Usage(
                    "baseline cap must be a non-negative number".into(),
                ));
            }
            let settings = settings.resolve()?;
            let ops = load_stream(&stream)?;
            let config = settings.run_config(stream_dim(&ops))?;
            let report = bench_compare(&ops, &config, Duration::from_secs_f64(baseline_cap))?;
            if let Some(reason) = &report.static_coreset.skipped {
                eprintln!("note: static_coreset baseline skipped: {reason}");
            }
            let mut out = open_out(settings.out.as_deref())?;
            serde_json::to_writer(&mut out, &report).map_err(|e| Failure::Data(e.to_string()))?;
            writeln!(out)?;
            out.flush()?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
