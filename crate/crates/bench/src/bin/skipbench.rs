use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use skipbench::{emit_csv, run, BenchError, Distribution, RunConfig, Variant, WorkloadSpec};
use skipforge::LevelGenConfig;

#[derive(Parser)]
#[command(name = "skipbench", version, about = "Benchmark skipforge variants and emit CSV metrics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one workload against one variant
    Run(RunArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Dist {
    Uniform,
    Zipf,
}

#[derive(Args)]
struct RunArgs {
    /// classic, classic-unrolled, deterministic, concurrent, adaptive or mvcc
    #[arg(long)]
    variant: String,
    #[arg(long, default_value_t = 100_000)]
    ops: u64,
    #[arg(long, default_value_t = 0.5)]
    read_frac: f64,
    #[arg(long, default_value_t = 0.3)]
    insert_frac: f64,
    #[arg(long, default_value_t = 0.1)]
    remove_frac: f64,
    #[arg(long, default_value_t = 0.1)]
    scan_frac: f64,
    /// Size of the key space
    #[arg(long, default_value_t = 10_000)]
    keys: u64,
    #[arg(long, value_enum, default_value_t = Dist::Uniform)]
    dist: Dist,
    #[arg(long, default_value_t = 0.99)]
    zipf_theta: f64,
    #[arg(long, default_value_t = 1)]
    actors: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Promotion probability for tower heights
    #[arg(long, default_value_t = 0.5)]
    p: f64,
    #[arg(long, default_value_t = 32)]
    max_level: usize,
    /// Entries per node for classic-unrolled
    #[arg(long, default_value_t = 16)]
    node_capacity: usize,
    /// Key slots covered by each scan
    #[arg(long, default_value_t = 16)]
    scan_width: u64,
    /// Output file, or - for standard output
    #[arg(long, default_value = "-")]
    out: String,
    #[arg(long, hide = true)]
    inject_mismatch: bool,
}

fn execute(args: RunArgs) -> Result<(), BenchError> {
    let variant: Variant = args.variant.parse()?;
    let distribution = match args.dist {
        Dist::Uniform => Distribution::Uniform,
        Dist::Zipf => Distribution::Zipfian { theta: args.zipf_theta },
    };
    let workload = WorkloadSpec {
        op_count: args.ops,
        read_frac: args.read_frac,
        insert_frac: args.insert_frac,
        remove_frac: args.remove_frac,
        scan_frac: args.scan_frac,
        key_space: args.keys,
        distribution,
        scan_width: args.scan_width,
        seed: args.seed,
    };
    let config = RunConfig {
        variant,
        workload,
        actors: args.actors,
        level: LevelGenConfig {
            p: args.p,
            max_level: args.max_level,
            seed: args.seed,
        },
        node_capacity: args.node_capacity,
        inject_mismatch: args.inject_mismatch,
    };
    let row = run(&config)?;

    if args.out == "-" {
        emit_csv(&[row], io::stdout().lock())
    } else {
        let mut sink = BufWriter::new(File::create(&args.out)?);
        emit_csv(&[row], &mut sink)?;
        sink.flush()?;
        Ok(())
    }
}

fn main() -> ExitCode {
    let Command::Run(args) = Cli::parse().command;
    match execute(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("skipbench: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
