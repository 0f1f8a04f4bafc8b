//! Throughput measurement over parallel workers.
//!
//! Each worker thread owns its environments outright. The driver only
//! releases all workers together, optionally raises a stop flag when a time
//! budget runs out, and collects counters once everything has joined.

use std::fmt::Write as _;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Barrier;
use std::time::{Duration, Instant};

use swarmsim_core::{EnvError, PhaseTimings, StepResult, SwarmEnv, SwarmEnvConfig};

use crate::policy::{Policy, PolicyKind};
use crate::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Budget {
    /// Control steps per environment after warmup.
    Steps(u64),
    /// Wall-clock seconds after warmup.
    Seconds(f64),
}

#[derive(Debug, Clone)]
pub struct BenchmarkConfig {
    pub env: SwarmEnvConfig,
    pub n_workers: usize,
    pub envs_per_worker: usize,
    pub policy: PolicyKind,
    pub budget: Budget,
    /// Unmeasured steps per environment before the clock starts.
    pub warmup_steps: u64,
    /// Record per-phase timings. Costs a few clock reads per step.
    pub profile: bool,
}

impl BenchmarkConfig {
    pub fn new(env: SwarmEnvConfig) -> Self {
        Self {
            env,
            n_workers: 1,
            envs_per_worker: 1,
            policy: PolicyKind::RandomGaussian,
            budget: Budget::Steps(1000),
            warmup_steps: 0,
            profile: false,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.n_workers == 0 || self.envs_per_worker == 0 {
            return Err(HarnessError::InvalidBenchmark(
                "n_workers and envs_per_worker must be >= 1".into(),
            ));
        }
        if let Budget::Seconds(s) = self.budget {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(HarnessError::InvalidBenchmark("seconds budget must be finite and >= 0".into()));
            }
        }
        self.env.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkerReport {
    pub env_steps: u64,
    pub episodes: u64,
    pub seconds: f64,
    pub sps: Option<f64>,
}

/// Share of stepping time spent in each phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Breakdown {
    pub dynamics: f64,
    pub collisions: f64,
    pub observations: f64,
    pub rewards: f64,
}

impl Breakdown {
    pub fn sum(&self) -> f64 {
        self.dynamics + self.collisions + self.observations + self.rewards
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkReport {
    pub n_workers: usize,
    pub envs_per_worker: usize,
    pub n_agents: usize,
    pub policy: &'static str,
    pub total_env_steps: u64,
    /// `total_env_steps * n_agents`.
    pub total_samples: u64,
    pub wall_seconds: f64,
    /// `None` for an empty run.
    pub sps: Option<f64>,
    pub env_steps_per_second: Option<f64>,
    pub workers: Vec<WorkerReport>,
    pub breakdown: Option<Breakdown>,
}

impl BenchmarkReport {
    pub fn is_empty_run(&self) -> bool {
        self.total_samples == 0
    }

    /// `key = value` lines, one per field, workers indexed.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let opt = |v: Option<f64>| v.map_or("undefined".to_string(), |x| format!("{x:.3}"));
        let _ = writeln!(s, "[benchmark]");
        let _ = writeln!(s, "n_workers = {}", self.n_workers);
        let _ = writeln!(s, "envs_per_worker = {}", self.envs_per_worker);
        let _ = writeln!(s, "n_agents = {}", self.n_agents);
        let _ = writeln!(s, "policy = {}", self.policy);
        let _ = writeln!(s, "total_env_steps = {}", self.total_env_steps);
        let _ = writeln!(s, "total_samples = {}", self.total_samples);
        let _ = writeln!(s, "wall_seconds = {:.6}", self.wall_seconds);
        let _ = writeln!(s, "sps = {}", opt(self.sps));
        let _ = writeln!(s, "env_steps_per_second = {}", opt(self.env_steps_per_second));
        let _ = writeln!(s, "empty_run = {}", self.is_empty_run());
        if let Some(b) = &self.breakdown {
            let _ = writeln!(s, "fraction_dynamics = {:.4}", b.dynamics);
            let _ = writeln!(s, "fraction_collisions = {:.4}", b.collisions);
            let _ = writeln!(s, "fraction_observations = {:.4}", b.observations);
            let _ = writeln!(s, "fraction_rewards = {:.4}", b.rewards);
        }
        for (i, w) in self.workers.iter().enumerate() {
            let _ = writeln!(s, "worker.{i}.env_steps = {}", w.env_steps);
            let _ = writeln!(s, "worker.{i}.episodes = {}", w.episodes);
            let _ = writeln!(s, "worker.{i}.seconds = {:.6}", w.seconds);
            let _ = writeln!(s, "worker.{i}.sps = {}", opt(w.sps));
        }
        s
    }
}

struct WorkerOutcome {
    env_steps: u64,
    episodes: u64,
    seconds: f64,
    timings: PhaseTimings,
}

struct Worker {
    envs: Vec<(SwarmEnv, Policy, u64)>,
    actions: Vec<[f64; 4]>,
    result: StepResult,
}

impl Worker {
    fn build(cfg: &BenchmarkConfig, worker: usize) -> Result<Self, EnvError> {
        let envs = (0..cfg.envs_per_worker)
            .map(|e| {
                let index = (worker * cfg.envs_per_worker + e) as u64;
                let mut env = SwarmEnv::new(cfg.env.clone(), index)?;
                env.set_profiling(cfg.profile);
                let policy = Policy::new(cfg.policy.clone(), cfg.env.env.master_seed, index);
                Ok((env, policy, 0))
            })
            .collect::<Result<_, EnvError>>()?;
        Ok(Self {
            envs,
            actions: Vec::new(),
            result: StepResult::default(),
        })
    }

    /// Steps every environment once; returns episodes finished.
    fn round(&mut self) -> Result<u64, EnvError> {
        let mut finished = 0;
        for (env, policy, episode) in &mut self.envs {
            policy.act(env, &mut self.actions);
            env.step_into(&self.actions, &mut self.result)?;
            if self.result.done {
                *episode += 1;
                finished += 1;
                env.reset(*episode)?;
            }
        }
        Ok(finished)
    }

    fn reset_timings(&mut self) {
        self.envs.iter_mut().for_each(|(e, _, _)| e.reset_timings());
    }

    fn timings(&self) -> PhaseTimings {
        let mut t = PhaseTimings::default();
        self.envs.iter().for_each(|(e, _, _)| t.add(e.timings()));
        t
    }
}

fn run_worker(
    cfg: &BenchmarkConfig,
    index: usize,
    start: &Barrier,
    stop: &AtomicBool,
) -> Result<WorkerOutcome, EnvError> {
    let prepared = Worker::build(cfg, index).and_then(|mut w| {
        for _ in 0..cfg.warmup_steps {
            w.round()?;
        }
        w.reset_timings();
        Ok(w)
    });
    // Everyone meets at the barrier, even a worker that failed to set up,
    // so the others are not left waiting.
    start.wait();
    let mut w = match prepared {
        Ok(w) => w,
        Err(e) => {
            stop.store(true, Ordering::Relaxed);
            return Err(e);
        }
    };
    let t0 = Instant::now();
    let mut rounds = 0u64;
    let mut episodes = 0u64;
    let result = (|| {
        match cfg.budget {
            Budget::Steps(n) => {
                while rounds < n && !stop.load(Ordering::Relaxed) {
                    episodes += w.round()?;
                    rounds += 1;
                }
            }
            Budget::Seconds(_) => {
                while !stop.load(Ordering::Relaxed) {
                    episodes += w.round()?;
                    rounds += 1;
                }
            }
        }
        Ok(())
    })();
    if let Err(e) = result {
        stop.store(true, Ordering::Relaxed);
        return Err(e);
    }
    Ok(WorkerOutcome {
        env_steps: rounds * cfg.envs_per_worker as u64,
        episodes,
        seconds: t0.elapsed().as_secs_f64(),
        timings: w.timings(),
    })
}

fn rate(count: u64, seconds: f64) -> Option<f64> {
    (count > 0 && seconds > 0.0).then(|| count as f64 / seconds)
}

/// Runs the benchmark. Any worker fault aborts the run and discards the
/// partial counts.
pub fn run_benchmark(cfg: &BenchmarkConfig) -> Result<BenchmarkReport, HarnessError> {
    cfg.validate()?;
    let start = Barrier::new(cfg.n_workers + 1);
    let stop = AtomicBool::new(false);
    let (outcomes, wall) = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..cfg.n_workers)
            .map(|i| {
                let (start, stop) = (&start, &stop);
                scope.spawn(move || run_worker(cfg, i, start, stop))
            })
            .collect();
        start.wait();
        let t0 = Instant::now();
        if let Budget::Seconds(s) = cfg.budget {
            let deadline = t0 + Duration::from_secs_f64(s);
            while !stop.load(Ordering::Relaxed) {
                let now = Instant::now();
                if now >= deadline {
                    break;
                }
                std::thread::sleep((deadline - now).min(Duration::from_millis(5)));
            }
            stop.store(true, Ordering::Relaxed);
        }
        let outcomes: Vec<_> = handles
            .into_iter()
            .map(|h| h.join().expect("benchmark worker panicked"))
            .collect();
        (outcomes, t0.elapsed().as_secs_f64())
    });

    let mut workers = Vec::with_capacity(outcomes.len());
    let mut timings = PhaseTimings::default();
    let mut busy = 0.0;
    for (i, o) in outcomes.into_iter().enumerate() {
        let o = o.map_err(|source| HarnessError::Worker { worker: i, source })?;
        timings.add(&o.timings);
        busy += o.seconds;
        workers.push(WorkerReport {
            env_steps: o.env_steps,
            episodes: o.episodes,
            seconds: o.seconds,
            sps: rate(o.env_steps * cfg.env.env.n_agents as u64, o.seconds),
        });
    }
    let total_env_steps: u64 = workers.iter().map(|w| w.env_steps).sum();
    let total_samples = total_env_steps * cfg.env.env.n_agents as u64;
    let breakdown = (cfg.profile && busy > 0.0 && total_env_steps > 0).then(|| Breakdown {
        dynamics: timings.dynamics.as_secs_f64() / busy,
        collisions: timings.collisions.as_secs_f64() / busy,
        observations: timings.observations.as_secs_f64() / busy,
        rewards: timings.rewards.as_secs_f64() / busy,
    });
    Ok(BenchmarkReport {
        n_workers: cfg.n_workers,
        envs_per_worker: cfg.envs_per_worker,
        n_agents: cfg.env.env.n_agents,
        policy: cfg.policy.name(),
        total_env_steps,
        total_samples,
        wall_seconds: wall,
        sps: rate(total_samples, wall),
        env_steps_per_second: rate(total_env_steps, wall),
        workers,
        breakdown,
    })
}
