use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{ArgGroup, Parser, ValueEnum};
use swarmsim_core::{ScenarioKind, SwarmEnv, SwarmEnvConfig};
use swarmsim_harness::{
    record_trajectory, replay_actions, run_benchmark, BenchmarkConfig, Budget, Dump, Encoding, HarnessError,
    Policy, PolicyKind, RecordOptions,
};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PolicyArg {
    Random,
    Hover,
    Replay,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EncodingArg {
    Hex,
    Decimal,
}

/// Headless multi-quadrotor simulator: benchmark, record and replay.
#[derive(Debug, Parser)]
#[command(name = "swarmsim", version)]
#[command(group(ArgGroup::new("budget").args(["steps", "seconds"])))]
#[command(group(ArgGroup::new("mode").args(["bench", "record", "replay"])))]
struct Cli {
    /// Configuration file (TOML). Built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scenario kind, e.g. static_formation or pursuit_bezier.
    #[arg(long)]
    scenario: Option<ScenarioKind>,
    /// Number of quadrotors per environment.
    #[arg(long)]
    agents: Option<usize>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, default_value_t = 1)]
    envs_per_worker: usize,
    /// Control steps per environment (default: one episode).
    #[arg(long)]
    steps: Option<u64>,
    /// Wall-clock budget for a benchmark run.
    #[arg(long)]
    seconds: Option<f64>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Episode seed used when recording.
    #[arg(long, default_value_t = 0)]
    episode: u64,
    /// Run the throughput benchmark with per-phase timing.
    #[arg(long)]
    bench: bool,
    /// Record one environment's trajectory to this file.
    #[arg(long)]
    record: Option<PathBuf>,
    /// Verify a recorded trajectory by re-simulating it.
    #[arg(long)]
    replay: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "random")]
    policy: PolicyArg,
    /// Dump whose actions the replay policy plays back.
    #[arg(long, required_if_eq("policy", "replay"))]
    actions: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "hex")]
    encoding: EncodingArg,
    /// Include the per-component reward breakdown in recorded records.
    #[arg(long)]
    breakdown: bool,
    /// Unmeasured steps per environment before the benchmark clock starts.
    #[arg(long, default_value_t = 0)]
    warmup: u64,
    /// Disable every noise source.
    #[arg(long)]
    no_noise: bool,
    /// Disable quad-quad collisions and downwash.
    #[arg(long)]
    no_collisions: bool,
}

fn build_config(cli: &Cli) -> Result<SwarmEnvConfig, HarnessError> {
    let mut cfg = match &cli.config {
        Some(p) => SwarmEnvConfig::load(p)?,
        None => SwarmEnvConfig::default(),
    };
    if let Some(kind) = cli.scenario {
        cfg.scenario.kind = kind;
    }
    if let Some(n) = cli.agents {
        cfg.env.n_agents = n;
        cfg.env.neighbors = cfg.env.neighbors.min(n.saturating_sub(1));
    }
    if let Some(seed) = cli.seed {
        cfg.env.master_seed = seed;
    }
    if cli.no_noise {
        cfg.disable_noise();
    }
    if cli.no_collisions {
        cfg.disable_collisions();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn build_policy(cli: &Cli) -> Result<PolicyKind, HarnessError> {
    Ok(match cli.policy {
        PolicyArg::Random => PolicyKind::RandomGaussian,
        PolicyArg::Hover => PolicyKind::Hover,
        PolicyArg::Replay => {
            let path = cli.actions.as_ref().expect("clap enforces --actions");
            PolicyKind::ScriptedReplay(Arc::new(Dump::read(path)?.actions()))
        }
    })
}

fn run(cli: &Cli) -> Result<bool, HarnessError> {
    if let Some(path) = &cli.replay {
        let dump = Dump::read(path)?;
        let verdict = replay_actions(&dump, None)?;
        println!("replay {}: {verdict}", path.display());
        return Ok(verdict.is_identical());
    }

    let cfg = build_config(cli)?;
    let policy = build_policy(cli)?;

    if let Some(path) = &cli.record {
        let steps = cli.steps.unwrap_or_else(|| cfg.episode_steps());
        let mut env = SwarmEnv::new(cfg.clone(), 0)?;
        let mut pol = Policy::new(policy, cfg.env.master_seed, 0);
        let opts = RecordOptions {
            encoding: match cli.encoding {
                EncodingArg::Hex => Encoding::Hex,
                EncodingArg::Decimal => Encoding::Decimal,
            },
            breakdown: cli.breakdown,
        };
        let sink = BufWriter::new(File::create(path)?);
        let n = record_trajectory(&mut env, cli.episode, &mut pol, steps, sink, opts)?;
        println!("recorded {n} records to {}", path.display());
        return Ok(true);
    }

    let mut bench = BenchmarkConfig::new(cfg.clone());
    bench.n_workers = cli.workers;
    bench.envs_per_worker = cli.envs_per_worker;
    bench.policy = policy;
    bench.warmup_steps = cli.warmup;
    bench.profile = cli.bench;
    bench.budget = match (cli.steps, cli.seconds) {
        (_, Some(s)) => Budget::Seconds(s),
        (Some(n), None) => Budget::Steps(n),
        (None, None) => Budget::Steps(cfg.episode_steps()),
    };
    let report = run_benchmark(&bench)?;
    print!("{}", report.to_text());
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
