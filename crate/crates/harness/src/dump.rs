//! Trajectory dumps and replay verification.
//!
//! A dump is a `#`-prefixed text header followed by one fixed-width record
//! per agent per control step. The header carries everything needed to
//! rebuild the run: the full configuration as one line of JSON, its SHA-256,
//! the episode seed and the environment index. Values are written either as
//! the 16 hex digits of the IEEE-754 bit pattern or as 17-significant-digit
//! decimals. Both forms read back to the exact same `f64`.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};
use swarmsim_core::rewards::COMPONENT_NAMES;
use swarmsim_core::{RigidState, StepResult, SwarmEnv, SwarmEnvConfig};

use crate::policy::Policy;
use crate::HarnessError;

pub const FORMAT_MAGIC: &str = "swarmsim trajectory v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Encoding {
    Hex,
    Decimal,
}

impl Encoding {
    fn name(self) -> &'static str {
        match self {
            Encoding::Hex => "hex",
            Encoding::Decimal => "decimal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecordOptions {
    pub encoding: Encoding,
    /// Append the 14 reward components after the total.
    pub breakdown: bool,
}

impl Default for RecordOptions {
    fn default() -> Self {
        Self {
            encoding: Encoding::Hex,
            breakdown: false,
        }
    }
}

/// Value columns of a record, after `step` and `agent`.
const STATE_COLUMNS: [(&str, &str); 23] = [
    ("x", "m"),
    ("y", "m"),
    ("z", "m"),
    ("vx", "m/s"),
    ("vy", "m/s"),
    ("vz", "m/s"),
    ("r00", "1"),
    ("r01", "1"),
    ("r02", "1"),
    ("r10", "1"),
    ("r11", "1"),
    ("r12", "1"),
    ("r20", "1"),
    ("r21", "1"),
    ("r22", "1"),
    ("wx", "rad/s"),
    ("wy", "rad/s"),
    ("wz", "rad/s"),
    ("a0", "1"),
    ("a1", "1"),
    ("a2", "1"),
    ("a3", "1"),
    ("reward", "1"),
];

const ACTION_OFFSET: usize = 18;
const REWARD_OFFSET: usize = 22;

fn column_names(breakdown: bool) -> Vec<String> {
    let mut v: Vec<String> = STATE_COLUMNS.iter().map(|(n, _)| n.to_string()).collect();
    if breakdown {
        v.extend(COMPONENT_NAMES.iter().map(|n| format!("reward_{n}")));
    }
    v
}

/// SHA-256 over the canonical JSON form of the configuration, lowercase hex.
pub fn config_hash(cfg: &SwarmEnvConfig) -> String {
    hex(&Sha256::digest(canonical_json(cfg).as_bytes()))
}

fn canonical_json(cfg: &SwarmEnvConfig) -> String {
    serde_json::to_string(cfg).expect("config serializes to JSON")
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(bytes.len() * 2), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DumpHeader {
    pub encoding: Encoding,
    pub breakdown: bool,
    pub config_hash: String,
    pub episode_seed: u64,
    pub env_index: u64,
    pub n_agents: usize,
    pub config: SwarmEnvConfig,
}

impl DumpHeader {
    fn write(&self, out: &mut String) {
        let cols = column_names(self.breakdown);
        let mut units: Vec<&str> = STATE_COLUMNS.iter().map(|(_, u)| *u).collect();
        if self.breakdown {
            units.extend(std::iter::repeat_n("1", COMPONENT_NAMES.len()));
        }
        let _ = writeln!(out, "# {FORMAT_MAGIC}");
        let _ = writeln!(out, "# encoding {}", self.encoding.name());
        let _ = writeln!(out, "# breakdown {}", self.breakdown);
        let _ = writeln!(out, "# config_hash {}", self.config_hash);
        let _ = writeln!(out, "# seed {}", self.episode_seed);
        let _ = writeln!(out, "# env_index {}", self.env_index);
        let _ = writeln!(out, "# n_agents {}", self.n_agents);
        let _ = writeln!(out, "# columns step agent {}", cols.join(" "));
        let _ = writeln!(out, "# units 1 1 {}", units.join(" "));
        let _ = writeln!(out, "# config {}", canonical_json(&self.config));
        let _ = writeln!(out, "# end");
    }

    /// Values per record, excluding step and agent.
    pub fn width(&self) -> usize {
        STATE_COLUMNS.len() + if self.breakdown { COMPONENT_NAMES.len() } else { 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub step: u64,
    pub agent: usize,
    pub values: Vec<f64>,
}

impl Record {
    pub fn action(&self) -> [f64; 4] {
        std::array::from_fn(|i| self.values[ACTION_OFFSET + i])
    }

    pub fn reward(&self) -> f64 {
        self.values[REWARD_OFFSET]
    }
}

fn record_values(s: &RigidState, action: &[f64; 4], result: &StepResult, agent: usize, breakdown: bool) -> Vec<f64> {
    let mut v = Vec::with_capacity(37);
    v.extend_from_slice(s.position.as_slice());
    v.extend_from_slice(s.velocity.as_slice());
    for r in 0..3 {
        for c in 0..3 {
            v.push(s.rotation[(r, c)]);
        }
    }
    v.extend_from_slice(s.angular_velocity.as_slice());
    v.extend_from_slice(action);
    v.push(result.rewards[agent].total);
    if breakdown {
        v.extend_from_slice(&result.rewards[agent].components());
    }
    v
}

fn write_record(out: &mut String, step: u64, agent: usize, values: &[f64], enc: Encoding) {
    let _ = write!(out, "{step:>8} {agent:>5}");
    for x in values {
        let _ = match enc {
            Encoding::Hex => write!(out, " {:016x}", x.to_bits()),
            Encoding::Decimal => write!(out, " {x:>+24.16e}"),
        };
    }
    out.push('\n');
}

/// Resets `env` to `episode_seed`, then runs up to `steps` control steps
/// (fewer if the episode ends) writing every agent's record to `sink`.
///
/// Records are written whole, so a sink failure leaves a file that parses
/// up to the last complete record. Returns the number of records written.
pub fn record_trajectory<W: Write>(
    env: &mut SwarmEnv,
    episode_seed: u64,
    policy: &mut Policy,
    steps: u64,
    mut sink: W,
    opts: RecordOptions,
) -> Result<u64, HarnessError> {
    env.reset(episode_seed)?;
    let header = DumpHeader {
        encoding: opts.encoding,
        breakdown: opts.breakdown,
        config_hash: config_hash(env.config()),
        episode_seed,
        env_index: env.env_index(),
        n_agents: env.n_agents(),
        config: env.config().clone(),
    };
    let mut buf = String::new();
    header.write(&mut buf);
    sink.write_all(buf.as_bytes())?;

    let mut actions = Vec::new();
    let mut records = 0;
    for step in 0..steps {
        policy.act(env, &mut actions);
        let result = env.step(&actions)?;
        buf.clear();
        for (i, s) in env.states().iter().enumerate() {
            let v = record_values(s, &actions[i], &result, i, opts.breakdown);
            write_record(&mut buf, step, i, &v, opts.encoding);
        }
        sink.write_all(buf.as_bytes())?;
        records += env.n_agents() as u64;
        if result.done {
            break;
        }
    }
    sink.flush()?;
    Ok(records)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dump {
    pub header: DumpHeader,
    pub records: Vec<Record>,
    /// The file ended mid-record; that partial line was dropped.
    pub truncated: bool,
}

fn perr(offset: usize, reason: impl Into<String>) -> HarnessError {
    HarnessError::Parse {
        offset,
        reason: reason.into(),
    }
}

impl Dump {
    pub fn read(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let mut lines = Lines { text, pos: 0 };
        let mut field = |name: &str| -> Result<(usize, String), HarnessError> {
            let (off, line) = lines
                .next()
                .ok_or_else(|| perr(text.len(), format!("header ends before '{name}'")))?;
            let body = line
                .strip_prefix("# ")
                .ok_or_else(|| perr(off, "header line must start with '# '"))?;
            if name.is_empty() {
                return Ok((off, body.to_string()));
            }
            let value = body
                .strip_prefix(name)
                .and_then(|r| r.strip_prefix(' '))
                .ok_or_else(|| perr(off, format!("expected header field '{name}'")))?;
            Ok((off, value.to_string()))
        };

        let (off, magic) = field("")?;
        if magic != FORMAT_MAGIC {
            return Err(perr(off, format!("unknown format '{magic}'")));
        }
        let (off, enc) = field("encoding")?;
        let encoding = match enc.as_str() {
            "hex" => Encoding::Hex,
            "decimal" => Encoding::Decimal,
            _ => return Err(perr(off, format!("unknown encoding '{enc}'"))),
        };
        let (off, b) = field("breakdown")?;
        let breakdown = b.parse().map_err(|_| perr(off, "breakdown must be true or false"))?;
        let (_, config_hash) = field("config_hash")?;
        let (off, seed) = field("seed")?;
        let episode_seed = seed.parse().map_err(|_| perr(off, "bad seed"))?;
        let (off, idx) = field("env_index")?;
        let env_index = idx.parse().map_err(|_| perr(off, "bad env_index"))?;
        let (off, n) = field("n_agents")?;
        let n_agents: usize = n.parse().map_err(|_| perr(off, "bad n_agents"))?;
        let (off, cols) = field("columns")?;
        let expected = format!("step agent {}", column_names(breakdown).join(" "));
        if cols != expected {
            return Err(perr(off, "column list does not match this format version"));
        }
        field("units")?;
        let (off, json) = field("config")?;
        let config: SwarmEnvConfig =
            serde_json::from_str(&json).map_err(|e| perr(off, format!("bad config JSON: {e}")))?;
        if config_hash_of(&json) != config_hash {
            return Err(perr(off, "config does not match config_hash"));
        }
        if config.env.n_agents != n_agents {
            return Err(perr(off, "n_agents disagrees with config"));
        }
        let (off, end) = field("")?;
        if end != "end" {
            return Err(perr(off, "expected '# end'"));
        }
        let header = DumpHeader {
            encoding,
            breakdown,
            config_hash,
            episode_seed,
            env_index,
            n_agents,
            config,
        };

        let width = header.width();
        let mut records = Vec::new();
        let mut truncated = false;
        while let Some((off, line)) = lines.next() {
            if !lines.ended_with_newline() {
                truncated = true;
                break;
            }
            records.push(parse_record(off, line, width, encoding)?);
        }
        Ok(Dump {
            header,
            records,
            truncated,
        })
    }

    /// Recorded actions grouped per control step, in agent order.
    pub fn actions(&self) -> Vec<Vec<[f64; 4]>> {
        let mut out: Vec<Vec<[f64; 4]>> = Vec::new();
        for r in &self.records {
            let step = r.step as usize;
            if out.len() <= step {
                out.resize(step + 1, Vec::new());
            }
            out[step].push(r.action());
        }
        out
    }
}

fn config_hash_of(json: &str) -> String {
    hex(&Sha256::digest(json.as_bytes()))
}

fn parse_record(off: usize, line: &str, width: usize, enc: Encoding) -> Result<Record, HarnessError> {
    let mut fields = line.split_ascii_whitespace();
    let mut next = |what: &str| fields.next().ok_or_else(|| perr(off, format!("record is missing {what}")));
    let step = next("step")?.parse().map_err(|_| perr(off, "bad step index"))?;
    let agent = next("agent")?.parse().map_err(|_| perr(off, "bad agent index"))?;
    let mut values = Vec::with_capacity(width);
    for k in 0..width {
        let tok = next("a value")?;
        let v = match enc {
            Encoding::Hex if tok.len() == 16 => u64::from_str_radix(tok, 16).ok().map(f64::from_bits),
            Encoding::Hex => None,
            Encoding::Decimal => tok.parse().ok(),
        };
        values.push(v.ok_or_else(|| perr(off, format!("bad value in column {}", k + 2)))?);
    }
    if next("").is_ok() {
        return Err(perr(off, "record has extra fields"));
    }
    Ok(Record { step, agent, values })
}

/// Line iterator that keeps byte offsets.
struct Lines<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Option<(usize, &'a str)> {
        if self.pos >= self.text.len() {
            return None;
        }
        let start = self.pos;
        let rest = &self.text[start..];
        let len = rest.find('\n').unwrap_or(rest.len());
        self.pos = start + len + 1;
        Some((start, &rest[..len]))
    }

    fn ended_with_newline(&self) -> bool {
        self.pos <= self.text.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Identical { records: usize },
    /// `record` is 1-based in file order.
    Diverged {
        record: usize,
        step: u64,
        agent: usize,
        column: String,
    },
}

impl Verdict {
    pub fn is_identical(&self) -> bool {
        matches!(self, Verdict::Identical { .. })
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Verdict::Identical { records } => write!(f, "identical ({records} records)"),
            Verdict::Diverged {
                record,
                step,
                agent,
                column,
            } => write!(f, "diverged at record {record} (step {step}, agent {agent}, column {column})"),
        }
    }
}

/// Re-simulates a dump from its header and recorded actions and compares
/// every value bit for bit. `seed_override` replays under another episode
/// seed instead of the recorded one.
pub fn replay_actions(dump: &Dump, seed_override: Option<u64>) -> Result<Verdict, HarnessError> {
    let h = &dump.header;
    let mut env = SwarmEnv::new(h.config.clone(), h.env_index)?;
    env.reset(seed_override.unwrap_or(h.episode_seed))?;
    let n = h.n_agents;
    let columns = column_names(h.breakdown);
    let mut idx = 0;
    while idx < dump.records.len() {
        let group = &dump.records[idx..(idx + n).min(dump.records.len())];
        let step = group[0].step;
        let mut actions = vec![[0.0; 4]; n];
        for (k, r) in group.iter().enumerate() {
            if r.step != step || r.agent != k {
                return Ok(Verdict::Diverged {
                    record: idx + k + 1,
                    step: r.step,
                    agent: r.agent,
                    column: "step/agent".into(),
                });
            }
            actions[k] = r.action();
        }
        // A truncated final group has only some agents; the rest hold the
        // last recorded action of agent 0 since their results are not checked.
        for a in actions.iter_mut().skip(group.len()) {
            *a = group[0].action();
        }
        let result = match env.step(&actions) {
            Ok(r) => r,
            Err(_) => {
                return Ok(Verdict::Diverged {
                    record: idx + 1,
                    step,
                    agent: 0,
                    column: "step".into(),
                })
            }
        };
        for (k, r) in group.iter().enumerate() {
            let expect = record_values(&env.states()[k], &actions[k], &result, k, h.breakdown);
            if let Some(c) = expect.iter().zip(&r.values).position(|(a, b)| a.to_bits() != b.to_bits()) {
                return Ok(Verdict::Diverged {
                    record: idx + k + 1,
                    step,
                    agent: k,
                    column: columns[c].clone(),
                });
            }
        }
        idx += n;
    }
    Ok(Verdict::Identical {
        records: dump.records.len(),
    })
}
