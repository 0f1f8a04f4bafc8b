//! Action sources for rollouts.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use swarmsim_core::{SeedKey, Stream, SwarmEnv};

#[derive(Debug, Clone, PartialEq)]
pub enum PolicyKind {
    /// Independent standard normal per motor; the environment clips.
    RandomGaussian,
    /// Equilibrium thrust on every motor.
    Hover,
    /// Recorded actions, one row of per-agent actions per control step,
    /// looped when exhausted.
    ScriptedReplay(Arc<Vec<Vec<[f64; 4]>>>),
}

impl PolicyKind {
    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::RandomGaussian => "random_gaussian",
            PolicyKind::Hover => "hover",
            PolicyKind::ScriptedReplay(_) => "scripted_replay",
        }
    }
}

/// A policy bound to one environment.
///
/// Random draws come from the environment's own key on the policy stream,
/// so the action sequence depends only on `(seed, env_index, episode)` and
/// the step counter, never on scheduling.
pub struct Policy {
    kind: PolicyKind,
    rng: ChaCha8Rng,
    cursor: usize,
}

impl Policy {
    pub fn new(kind: PolicyKind, master_seed: u64, env_index: u64) -> Self {
        Self {
            kind,
            rng: SeedKey::new(master_seed, env_index, 0).stream(Stream::Policy),
            cursor: 0,
        }
    }

    /// Fills `out` with one action per agent for the env's next step.
    pub fn act(&mut self, env: &SwarmEnv, out: &mut Vec<[f64; 4]>) {
        let n = env.n_agents();
        out.clear();
        match &self.kind {
            PolicyKind::RandomGaussian => {
                for _ in 0..n {
                    out.push(std::array::from_fn(|_| self.rng.sample(StandardNormal)));
                }
            }
            PolicyKind::Hover => out.resize(n, env.hover_action()),
            PolicyKind::ScriptedReplay(script) => {
                let row = if script.is_empty() {
                    None
                } else {
                    Some(&script[self.cursor % script.len()])
                };
                self.cursor += 1;
                for i in 0..n {
                    out.push(row.and_then(|r| r.get(i)).copied().unwrap_or_else(|| env.hover_action()));
                }
            }
        }
    }
}
