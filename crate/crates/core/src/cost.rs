//! Inference FLOPs for decoder-only transformers and latency accounting from
//! measured tables.
//!
//! Per layer, each processed token costs `8d^2 + 4dm` for the Q/K/V/O
//! projections and the MLP. Attention costs `4d` per attended position. The LM
//! head adds `2 d V` per generated token. Normalization, activations and
//! positional encodings are not counted. Full-width K/V projections are
//! assumed (no grouped-query correction).

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::model::TokenStats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Hidden size.
    pub d: u64,
    /// MLP intermediate size.
    pub m: u64,
    #[serde(rename = "L", alias = "l", alias = "layers")]
    pub layers: u64,
    #[serde(rename = "V", alias = "v", alias = "vocab")]
    pub vocab: u64,
}

impl ModelConfig {
    pub fn new(d: u64, m: u64, layers: u64, vocab: u64) -> Result<Self> {
        let cfg = ModelConfig { d, m, layers, vocab };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.m == 0 || self.layers == 0 || self.vocab == 0 {
            return Err(Error::InvalidModelConfig(format!(
                "d, m, L, V must be positive (got d={}, m={}, L={}, V={})",
                self.d, self.m, self.layers, self.vocab
            )));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ModelConfig = toml::from_str(text).map_err(|e| Error::InvalidModelConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// DeepSeek-R1-Distill-Qwen-32B dimensions.
    pub fn qwen_32b() -> Self {
        ModelConfig::from_toml(include_str!("../fixtures/qwen2.5-32b.toml")).expect("bundled config")
    }

    /// DeepSeek-R1-Distill-Qwen-1.5B dimensions.
    pub fn qwen_1_5b() -> Self {
        ModelConfig::from_toml(include_str!("../fixtures/qwen2.5-1.5b.toml")).expect("bundled config")
    }

    fn per_token_projection(&self) -> u128 {
        let (d, m) = (self.d as u128, self.m as u128);
        8 * d * d + 4 * d * m
    }
}

/// FLOPs split by component, held exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FlopsBreakdown {
    pub projections: u128,
    pub attention_prefill: u128,
    pub attention_decode: u128,
    pub lm_head: u128,
}

impl FlopsBreakdown {
    pub fn total(&self) -> u128 {
        self.projections + self.attention_prefill + self.attention_decode + self.lm_head
    }

    pub fn total_f64(&self) -> f64 {
        self.total() as f64
    }

    pub fn scaled(self, k: u128) -> Self {
        FlopsBreakdown {
            projections: self.projections * k,
            attention_prefill: self.attention_prefill * k,
            attention_decode: self.attention_decode * k,
            lm_head: self.lm_head * k,
        }
    }
}

impl std::ops::Add for FlopsBreakdown {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        FlopsBreakdown {
            projections: self.projections + o.projections,
            attention_prefill: self.attention_prefill + o.attention_prefill,
            attention_decode: self.attention_decode + o.attention_decode,
            lm_head: self.lm_head + o.lm_head,
        }
    }
}

impl std::iter::Sum for FlopsBreakdown {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(FlopsBreakdown::default(), |a, b| a + b)
    }
}

impl Serialize for FlopsBreakdown {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Reals {
            projections: f64,
            attention_prefill: f64,
            attention_decode: f64,
            lm_head: f64,
            total: f64,
        }
        Reals {
            projections: self.projections as f64,
            attention_prefill: self.attention_prefill as f64,
            attention_decode: self.attention_decode as f64,
            lm_head: self.lm_head as f64,
            total: self.total_f64(),
        }
        .serialize(s)
    }
}

/// Validates a signed token count coming from user input.
pub fn token_count(x: i64) -> Result<u64> {
    u64::try_from(x).map_err(|_| Error::InvalidTokenCount(x))
}

/// Processing a `t_in`-token prompt in parallel: token k attends to k positions.
pub fn flops_prefill(cfg: &ModelConfig, t_in: u64) -> FlopsBreakdown {
    let (t, d, l) = (t_in as u128, cfg.d as u128, cfg.layers as u128);
    FlopsBreakdown {
        projections: cfg.per_token_projection() * t * l,
        attention_prefill: 4 * d * (t * (t + 1) / 2) * l,
        attention_decode: 0,
        lm_head: 0,
    }
}

/// Generating `t_out` tokens after a cached `t_in`-token prefix. The j-th
/// generated token attends to `t_in + j - 1` cached positions.
pub fn flops_decode(cfg: &ModelConfig, t_in: u64, t_out: u64, head_vocab: u64) -> FlopsBreakdown {
    let (ti, to, d, l) = (t_in as u128, t_out as u128, cfg.d as u128, cfg.layers as u128);
    let attended = ti * to + to * to.saturating_sub(1) / 2;
    FlopsBreakdown {
        projections: cfg.per_token_projection() * to * l,
        attention_prefill: 0,
        attention_decode: 4 * d * attended * l,
        lm_head: 2 * d * head_vocab as u128 * to,
    }
}

pub fn flops_generation(cfg: &ModelConfig, t_in: u64, t_out: u64) -> FlopsBreakdown {
    flops_prefill(cfg, t_in) + flops_decode(cfg, t_in, t_out, cfg.vocab)
}

/// One scalar-output forward pass over `t_in` tokens (V = 1, T_out = 1).
pub fn flops_disc_verification(cfg: &ModelConfig, t_in: u64) -> FlopsBreakdown {
    flops_prefill(cfg, t_in) + flops_decode(cfg, t_in, 1, 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PipelineMode {
    /// Generation only.
    Sc,
    /// Generation plus one discriminative pass per candidate.
    Disc,
    /// Generation plus M generative verifications per candidate.
    Gen,
}

impl FromStr for PipelineMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sc" => Ok(PipelineMode::Sc),
            "disc" => Ok(PipelineMode::Disc),
            "gen" => Ok(PipelineMode::Gen),
            _ => Err(Error::InvalidConfig(format!("unknown pipeline mode {s:?}"))),
        }
    }
}

impl fmt::Display for PipelineMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PipelineMode::Sc => "sc",
            PipelineMode::Disc => "disc",
            PipelineMode::Gen => "gen",
        })
    }
}

/// Inputs to [`pipeline_flops`] beyond the token statistics.
#[derive(Debug, Clone, Copy)]
pub struct Pipeline<'a> {
    pub solver: &'a ModelConfig,
    pub verifier: Option<&'a ModelConfig>,
    pub mode: PipelineMode,
    /// Verifications per candidate (gen mode only).
    pub m: usize,
    /// Output length of one generative verification, used when a record
    /// carries no `verify_out_tokens`.
    pub verify_out_tokens: Option<u64>,
}

/// Total FLOPs to generate, then verify, every candidate in `stats`.
///
/// The verifier reads the solution with reasoning removed (`solution_tokens`).
pub fn pipeline_flops(p: &Pipeline<'_>, stats: &[TokenStats]) -> Result<FlopsBreakdown> {
    let generation: FlopsBreakdown = stats
        .iter()
        .map(|s| flops_generation(p.solver, s.prompt_tokens, s.output_tokens))
        .sum();
    let verification = match p.mode {
        PipelineMode::Sc => FlopsBreakdown::default(),
        PipelineMode::Gen if p.m == 0 => FlopsBreakdown::default(),
        PipelineMode::Disc => {
            let v = p.verifier.ok_or_else(|| Error::MissingInput("discriminative verifier config".into()))?;
            stats.iter().map(|s| flops_disc_verification(v, s.solution_tokens)).sum()
        }
        PipelineMode::Gen => {
            let v = p.verifier.ok_or_else(|| Error::MissingInput("generative verifier config".into()))?;
            let once = stats
                .iter()
                .map(|s| {
                    let out = s.verify_out_tokens.or(p.verify_out_tokens).ok_or_else(|| {
                        Error::MissingInput("verify_out_tokens (per record or as a constant)".into())
                    })?;
                    Ok(flops_generation(v, s.solution_tokens, out))
                })
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .sum::<FlopsBreakdown>();
            once.scaled(p.m as u128)
        }
    };
    Ok(generation + verification)
}

// ---------------------------------------------------------------------------
// Latency

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatencyRole {
    Generation,
    DiscVerify,
    GenVerify,
}

impl fmt::Display for LatencyRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LatencyRole::Generation => "generation",
            LatencyRole::DiscVerify => "disc_verify",
            LatencyRole::GenVerify => "gen_verify",
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Measurement {
    pub role: LatencyRole,
    pub n: usize,
    #[serde(default)]
    pub m: usize,
    pub seconds: f64,
}

/// Measured wall-clock seconds keyed by (role, N, M). Missing keys are errors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LatencyTable {
    entries: BTreeMap<(LatencyRole, usize, usize), f64>,
}

impl LatencyTable {
    pub fn insert(&mut self, role: LatencyRole, n: usize, m: usize, seconds: f64) -> Result<()> {
        if !seconds.is_finite() || seconds < 0.0 {
            return Err(Error::InvalidConfig(format!("latency {role} N={n} M={m}: seconds must be >= 0")));
        }
        self.entries.insert((role, n, m), seconds);
        Ok(())
    }

    pub fn get(&self, role: LatencyRole, n: usize, m: usize) -> Result<f64> {
        self.entries.get(&(role, n, m)).copied().ok_or(Error::NoMeasurement {
            role: role.to_string(),
            n,
            m,
        })
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Doc {
            #[serde(default)]
            measurement: Vec<Measurement>,
        }
        let doc: Doc = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        let mut t = LatencyTable::default();
        for m in doc.measurement {
            t.insert(m.role, m.n, m.m, m.seconds)?;
        }
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// H100 measurements for a 32B solver, 1.5B discriminative verifier and a
    /// 32B generative verifier at M = 2.
    pub fn bundled() -> Self {
        LatencyTable::from_toml(include_str!("../fixtures/latency_h100.toml")).expect("bundled latency table")
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// End-to-end seconds for a pipeline at slate size `n` with `m` verifications.
pub fn latency_lookup(table: &LatencyTable, mode: PipelineMode, n: usize, m: usize) -> Result<f64> {
    let gen = table.get(LatencyRole::Generation, n, 0)?;
    Ok(match mode {
        PipelineMode::Sc => gen,
        PipelineMode::Disc => gen + table.get(LatencyRole::DiscVerify, n, 0)?,
        PipelineMode::Gen if m == 0 => gen,
        PipelineMode::Gen => gen + table.get(LatencyRole::GenVerify, n, m)?,
    })
}
