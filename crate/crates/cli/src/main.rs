use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use miniuuv::exec::Execution;
use miniuuv::harness::{
    builtin, evaluate_run_dir, run_batch, split_override, write_artifacts, write_metrics, ConfigError, HarnessError,
    Scenario,
};
use miniuuv::tracking::{read_detections, run_segments, segment_stream, write_estimates, PipelineConfig};

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "miniuuv", version, about = "Miniature UUV testbed: simulate, track, score")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run scenarios (files or built-in names); each gets its own directory under --out.
    Run {
        #[arg(required = true)]
        scenarios: Vec<String>,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Override a scenario key, e.g. `--set camera.tilt_deg=5`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Disable camera noise, jitter and dropouts.
        #[arg(long)]
        noiseless: bool,
        /// Run scenarios one after another instead of in parallel.
        #[arg(long)]
        sequential: bool,
    },
    /// List the built-in scenarios.
    ListScenarios,
    /// Recompute metrics from a run directory and print them as CSV.
    Metrics { run_dir: PathBuf },
    /// Run the estimation pipeline on a detections CSV.
    Track {
        detections: PathBuf,
        /// Estimates CSV to write; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Runtime(String),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        if e.is_config() {
            Failure::Config(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(format!("configuration error: {e}"))
    }
}

fn load_scenario(arg: &str) -> Result<Scenario, ConfigError> {
    let path = Path::new(arg);
    if path.is_file() {
        return Scenario::from_file(path);
    }
    builtin::builtin(arg).ok_or_else(|| {
        ConfigError::new(
            "scenario",
            format!("`{arg}` is neither a file nor a built-in scenario ({})", builtin::NAMES.join(", ")),
        )
    })
}

fn run(
    names: &[String],
    out: &Path,
    seed: Option<u64>,
    overrides: &[String],
    noiseless: bool,
    sequential: bool,
) -> Result<(), Failure> {
    let mut scenarios = Vec::with_capacity(names.len());
    for name in names {
        let mut s = load_scenario(name)?;
        if let Some(seed) = seed {
            s.seed = seed;
        }
        for o in overrides {
            let (k, v) = split_override(o)?;
            s.set(k, v)?;
        }
        if noiseless {
            s = s.noiseless();
        }
        s.resolve()?;
        scenarios.push(s);
    }
    let exec = if sequential { Execution::Sequential } else { Execution::default() };
    let mut failure = None;
    for (s, result) in scenarios.iter().zip(run_batch(&scenarios, exec)) {
        let dir = out.join(&s.name);
        match result.and_then(|run| write_artifacts(&run, &dir).map(|_| run)) {
            Ok(run) => {
                let pick = |k: &str| run.metrics.get(k).map_or("-".to_string(), |v| format!("{v:.4}"));
                println!(
                    "{}: {} (rmse_xy {}, rmse_u {}, coverage {})",
                    s.name,
                    dir.display(),
                    pick("rmse_xy"),
                    pick("rmse_u"),
                    pick("detection_coverage")
                );
            }
            Err(e) => {
                eprintln!("{}: {e}", s.name);
                failure.get_or_insert(Failure::from(e));
            }
        }
    }
    failure.map_or(Ok(()), Err)
}

fn track(detections: &Path, out: Option<&Path>, overrides: &[String]) -> Result<(), Failure> {
    let mut cfg = PipelineConfig::default();
    let mut scratch = Scenario::default();
    for o in overrides {
        let (k, v) = split_override(o)?;
        if !k.starts_with("pipeline.") {
            return Err(ConfigError::new(k, "only pipeline.* keys apply to track").into());
        }
        scratch.set(k, v)?;
        cfg = scratch.pipeline;
    }
    cfg.validate().map_err(|e| Failure::Config(e.to_string()))?;
    let file = std::fs::File::open(detections).map_err(|e| Failure::Runtime(format!("{}: {e}", detections.display())))?;
    let dets = read_detections(file).map_err(|e| Failure::Runtime(e.to_string()))?;
    let segments = segment_stream(&dets, &cfg).map_err(|e| Failure::Runtime(e.to_string()))?;
    let mut states = Vec::new();
    for (seg, res) in segments.iter().zip(run_segments(&segments, &cfg, Execution::default())) {
        match res {
            Ok(track) => states.extend(track.states),
            Err(e) => eprintln!("segment at t = {:.3}: {e}", seg.start_time()),
        }
    }
    let written = match out {
        Some(path) => {
            let f = std::fs::File::create(path).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
            write_estimates(f, &states)
        }
        None => write_estimates(std::io::stdout().lock(), &states),
    };
    written.map_err(|e| Failure::Runtime(e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { scenarios, out, seed, overrides, noiseless, sequential } => {
            run(&scenarios, &out, seed, &overrides, noiseless, sequential)
        }
        Command::ListScenarios => {
            for name in builtin::NAMES {
                println!("{name:<10} {}", builtin::describe(name).unwrap_or_default());
            }
            Ok(())
        }
        Command::Metrics { run_dir } => evaluate_run_dir(&run_dir)
            .and_then(|m| write_metrics(std::io::stdout().lock(), &m))
            .map_err(Failure::from),
        Command::Track { detections, out, overrides } => track(&detections, out.as_deref(), &overrides),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("{m}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
