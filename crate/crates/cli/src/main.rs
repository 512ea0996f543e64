use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use posestream::bench::{render_table, run_bench, BenchProfile};
use posestream::config::ExecutionMode;
use posestream::operators::PosePipeline;
use posestream::selftest::run_selftest;
use posestream::{Error, PipelineConfig};

const EXIT_RUNTIME: u8 = 1;
const EXIT_CONFIG: u8 = 2;

#[derive(Parser)]
#[command(name = "posestream", version, about = "Streaming multi-person pose estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pose pipeline and write poses.jsonl, stats.json and overlays.
    Run(RunArgs),
    /// Measure throughput for every configuration of a benchmark profile.
    Bench(BenchArgs),
    /// Check the parser against its oracles, recovery, ordering and file formats.
    Selftest(SelftestArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

impl Switch {
    fn on(self) -> bool {
        self == Switch::On
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Pipelined,
    Sequential,
}

#[derive(Args)]
struct RunArgs {
    /// Pipeline TOML file; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `synth:procedural`, `synth:<corpus.toml>` or `file:<dir of .hpt>`.
    #[arg(long)]
    backend: Option<String>,
    /// `coco18` or a topology TOML file.
    #[arg(long)]
    topology: Option<String>,
    #[arg(long)]
    frames: Option<u64>,
    /// Directory of PPM frames; blank frames are used without it.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    batch_max: Option<u32>,
    #[arg(long = "channel-cap")]
    channel_capacity: Option<u32>,
    #[arg(long)]
    scheduler: Option<Switch>,
    #[arg(long)]
    linger_us: Option<u64>,
    #[arg(long)]
    source_latency_us: Option<u64>,
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    out_overlay: Option<Switch>,
    /// Also write the inferred maps of every frame as HPT1 files here.
    #[arg(long)]
    dump_maps: Option<PathBuf>,
    /// Abort if the run has not drained after this many seconds (0 = never).
    #[arg(long)]
    watchdog_s: Option<u64>,
    /// Print a progress line to stderr once per second.
    #[arg(long)]
    progress: bool,
    /// Print the resolved configuration as TOML and exit.
    #[arg(long)]
    print_config: bool,
}

impl RunArgs {
    fn resolve(&self) -> Result<PipelineConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        if let Some(v) = &self.backend {
            cfg.backend = v.clone();
        }
        if let Some(v) = &self.topology {
            cfg.topology = v.clone();
        }
        if let Some(v) = self.frames {
            cfg.frames = Some(v);
        }
        if let Some(v) = &self.input {
            cfg.input = Some(v.clone());
        }
        if let Some(v) = self.batch_max {
            cfg.scheduler.batch_max = v;
        }
        if let Some(v) = self.channel_capacity {
            cfg.channel_capacity = v;
        }
        if let Some(v) = self.scheduler {
            cfg.scheduler.enabled = v.on();
        }
        if let Some(v) = self.linger_us {
            cfg.scheduler.linger_us = v;
        }
        if let Some(v) = self.source_latency_us {
            cfg.source_latency_us = v;
        }
        if let Some(v) = self.mode {
            cfg.mode = match v {
                Mode::Pipelined => ExecutionMode::Pipelined,
                Mode::Sequential => ExecutionMode::Sequential,
            };
        }
        if let Some(v) = &self.out {
            cfg.out = v.clone();
        }
        if let Some(v) = self.out_overlay {
            cfg.out_overlay = v.on();
        }
        if let Some(v) = &self.dump_maps {
            cfg.dump_maps = Some(v.clone());
        }
        if let Some(v) = self.watchdog_s {
            cfg.watchdog_s = v;
        }
        if self.progress {
            cfg.progress = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct BenchArgs {
    /// Profile TOML file, or one of the built-in profiles
    /// `scheduler-gain`, `pipelining`, `io-masking`.
    #[arg(long, default_value = "scheduler-gain")]
    profile: String,
    /// Directory for bench_report.json, bench_table.txt and per-run outputs.
    #[arg(long, default_value = "bench-report")]
    report: PathBuf,
    /// Override the profile's repetition count (at least 3).
    #[arg(long)]
    repetitions: Option<u32>,
    /// Override the profile's frame count.
    #[arg(long)]
    frames: Option<u64>,
    /// Print the resolved profile as TOML and exit.
    #[arg(long)]
    print_config: bool,
}

impl BenchArgs {
    fn resolve(&self) -> Result<BenchProfile, Error> {
        let mut profile = match self.profile.as_str() {
            "scheduler-gain" => BenchProfile::scheduler_gain(),
            "pipelining" => BenchProfile::pipelining(),
            "io-masking" => BenchProfile::io_masking(),
            path => BenchProfile::load(path.as_ref())?,
        };
        if let Some(r) = self.repetitions {
            profile.repetitions = r;
        }
        if let Some(f) = self.frames {
            profile.frames = f;
        }
        profile.validate()?;
        Ok(profile)
    }
}

#[derive(Args)]
struct SelftestArgs {
    /// Topology to validate: `coco18` or a topology TOML file.
    #[arg(long, default_value = "coco18")]
    topology: String,
    /// Print the default pipeline configuration as TOML and exit.
    #[arg(long)]
    print_config: bool,
}

fn config_error(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(EXIT_CONFIG)
}

fn cmd_run(args: &RunArgs) -> ExitCode {
    let cfg = match args.resolve() {
        Ok(c) => c,
        Err(e) => return config_error(&e),
    };
    if args.print_config {
        print!("{}", cfg.to_toml_string());
        return ExitCode::SUCCESS;
    }
    let pipeline = match PosePipeline::build(&cfg) {
        Ok(p) => p,
        Err(e) => return config_error(&e),
    };
    let outcome = pipeline.run();
    let stats = &outcome.stats;
    match outcome.error {
        None => {
            println!(
                "{} frames in {:.2} s ({:.1} fps), latency p50 {:.2} ms p99 {:.2} ms; output in {}",
                stats.frames_emitted,
                stats.wall_ns as f64 / 1e9,
                stats.fps,
                stats.latency.p50_us / 1e3,
                stats.latency.p99_us / 1e3,
                cfg.out.display()
            );
            ExitCode::SUCCESS
        }
        Some(e) => {
            match e.operator() {
                Some(op) => eprintln!("error: run aborted in operator `{op}`: {e}"),
                None => eprintln!("error: run aborted: {e}"),
            }
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

fn cmd_bench(args: &BenchArgs) -> ExitCode {
    let profile = match args.resolve() {
        Ok(p) => p,
        Err(e) => return config_error(&e),
    };
    if args.print_config {
        print!("{}", profile.to_toml_string());
        return ExitCode::SUCCESS;
    }
    match run_bench(&profile, &args.report) {
        Ok(report) => {
            print!("{}", render_table(&report));
            if report.all_completed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_RUNTIME)
            }
        }
        Err(e @ Error::Config(_)) => config_error(&e),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

fn cmd_selftest(args: &SelftestArgs) -> ExitCode {
    if args.print_config {
        print!("{}", PipelineConfig::default().to_toml_string());
        return ExitCode::SUCCESS;
    }
    let results = run_selftest(&args.topology);
    for r in &results {
        println!("{}", r.line());
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!("{} of {} checks passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_RUNTIME)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Selftest(a) => cmd_selftest(a),
    }
}
