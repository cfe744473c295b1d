//! Resampled slate evaluation, pass@N, budget-equalized accuracy curves and
//! crossover thresholds.
//!
//! Every (problem, draw) pair owns an RNG stream derived from
//! `(seed, problem_id, draw_index)`, and all reductions run in a fixed order, so
//! reports are bit-identical regardless of how many threads evaluate them.

use std::collections::HashMap;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::cost::{latency_lookup, pipeline_flops, LatencyTable, ModelConfig, Pipeline, PipelineMode};
use crate::error::{Error, Result};
use crate::model::{candidate_id_order, Problem, ScoreTransform, NO_ANSWER};
use crate::selection::{mean_verdict, pick, ClusterStat, Method, MethodKind, Rule, TieBreak};

pub const DEFAULT_DRAWS: usize = 1000;
pub const DEFAULT_CI_LEVEL: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CiMethod {
    /// mean ± z·s/√draws over per-draw benchmark accuracies.
    #[default]
    Normal,
    /// Empirical quantiles of the per-draw benchmark accuracies.
    Percentile,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampling {
    /// `draws` seeded random slates per problem.
    #[default]
    Random,
    /// Every size-`n` subset of each pool exactly once (no sampling error).
    Enumerate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    pub n: usize,
    pub draws: usize,
    pub seed: u64,
    pub ci_level: f64,
    pub replacement: bool,
    pub method: Method,
    pub ci_method: CiMethod,
    pub sampling: Sampling,
    pub transform: ScoreTransform,
    pub tie_break: TieBreak,
}

impl EvalConfig {
    pub fn new(method: Method, n: usize) -> Self {
        EvalConfig {
            n,
            draws: DEFAULT_DRAWS,
            seed: 0,
            ci_level: DEFAULT_CI_LEVEL,
            replacement: false,
            method,
            ci_method: CiMethod::Normal,
            sampling: Sampling::Random,
            transform: ScoreTransform::Sigmoid,
            tie_break: TieBreak::Deterministic,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_draws(mut self, draws: usize) -> Self {
        self.draws = draws;
        self
    }

    fn validate(&self) -> Result<()> {
        self.method.validate()?;
        if self.n == 0 {
            return Err(Error::InvalidConfig("slate size N must be >= 1".into()));
        }
        if self.draws == 0 && self.sampling == Sampling::Random {
            return Err(Error::InvalidConfig("draws must be >= 1".into()));
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(Error::InvalidConfig(format!("ci_level must lie in (0,1), got {}", self.ci_level)));
        }
        if self.sampling == Sampling::Enumerate && self.replacement {
            return Err(Error::InvalidConfig("slate enumeration is without replacement".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemAccuracy {
    pub problem_id: String,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapReport {
    pub method: MethodKind,
    pub n: usize,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub draws: usize,
    pub seed: u64,
    pub m: usize,
    pub alpha: Option<f64>,
    pub ci_level: f64,
    pub ci_method: CiMethod,
    pub sampling: Sampling,
    pub replacement: bool,
    pub per_problem: Vec<ProblemAccuracy>,
}

// ---------------------------------------------------------------------------
// RNG streams

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn fnv1a(s: &str) -> u64 {
    s.bytes()
        .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3))
}

/// The RNG stream owned by one (seed, problem, draw) triple.
pub fn draw_rng(seed: u64, problem_id: &str, draw: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(fnv1a(problem_id))));
    rng.set_stream(draw as u64);
    rng
}

/// Candidate indices of one random slate, in draw order.
pub fn draw_slate(seed: u64, problem_id: &str, draw: usize, pool: usize, n: usize, replacement: bool) -> Vec<usize> {
    let mut rng = draw_rng(seed, problem_id, draw);
    if replacement {
        (0..n).map(|_| rng.random_range(0..pool)).collect()
    } else {
        index::sample(&mut rng, pool, n).into_vec()
    }
}

/// Seed for a seeded tie-break in one draw; independent of the slate stream.
pub fn tie_seed(base: u64, problem_id: &str, draw: usize) -> u64 {
    splitmix64(base ^ splitmix64(fnv1a(problem_id) ^ splitmix64(draw as u64)))
}

/// All size-`n` subsets of `0..pool` in lexicographic order.
pub fn combinations(pool: usize, n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if n > pool {
        return out;
    }
    let mut idx: Vec<usize> = (0..n).collect();
    loop {
        out.push(idx.clone());
        let Some(i) = (0..n).rev().find(|&i| idx[i] != i + pool - n) else {
            return out;
        };
        idx[i] += 1;
        for j in i + 1..n {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

// ---------------------------------------------------------------------------
// Per-problem precomputation

struct Prepared<'a> {
    problem_id: &'a str,
    /// Answer id per candidate; ids ascend with `answer_key`.
    key_of: Vec<usize>,
    key_selectable: Vec<bool>,
    key_correct: Vec<bool>,
    /// Score each candidate contributes to its cluster sum under the method.
    weight: Vec<f64>,
    /// Raw discriminative score (BoN).
    raw: Vec<f64>,
    /// Position of each candidate under candidate-id order (BoN tie-break).
    id_rank: Vec<usize>,
}

impl<'a> Prepared<'a> {
    fn new(p: &'a Problem, method: &Method, transform: ScoreTransform) -> Result<Self> {
        if !p.is_labeled() {
            return Err(Error::LabelsRequired(p.problem_id.clone()));
        }
        let mut keys: Vec<&str> = p.candidates.iter().map(|c| c.answer_key.as_str()).collect();
        keys.sort_unstable();
        keys.dedup();
        let id_of: HashMap<&str, usize> = keys.iter().enumerate().map(|(i, k)| (*k, i)).collect();
        let key_of: Vec<usize> = p.candidates.iter().map(|c| id_of[c.answer_key.as_str()]).collect();
        let mut key_correct = vec![false; keys.len()];
        for (c, &k) in p.candidates.iter().zip(&key_of) {
            key_correct[k] |= c.correct == Some(true);
        }
        let key_selectable = keys.iter().map(|k| *k != NO_ANSWER).collect();

        let missing = || Error::InvalidProblem {
            problem_id: p.problem_id.clone(),
            message: format!("{} needs verifier scores", method.kind()),
        };
        let raw: Vec<f64> = if method.kind().needs_disc_scores() {
            p.candidates
                .iter()
                .map(|c| c.disc_score.ok_or_else(missing))
                .collect::<Result<_>>()?
        } else {
            vec![0.0; p.len()]
        };
        let weight: Vec<f64> = match method {
            Method::Gpv { m, .. } => p
                .candidates
                .iter()
                .map(|c| {
                    let g = c.gen_scores.as_ref().ok_or_else(missing)?;
                    if g.len() < *m {
                        return Err(Error::InvalidProblem {
                            problem_id: p.problem_id.clone(),
                            message: format!("GPV with M={m} but only {} gen_scores per candidate", g.len()),
                        });
                    }
                    Ok(mean_verdict(&g[..*m], transform))
                })
                .collect::<Result<_>>()?,
            Method::Sc | Method::Bon => vec![0.0; p.len()],
            Method::Wsc | Method::Pv { .. } => raw.iter().map(|&s| transform.apply(s)).collect(),
        };

        let mut order: Vec<usize> = (0..p.len()).collect();
        order.sort_by(|&a, &b| candidate_id_order(&p.candidates[a].candidate_id, &p.candidates[b].candidate_id));
        let mut id_rank = vec![0; p.len()];
        for (rank, &i) in order.iter().enumerate() {
            id_rank[i] = rank;
        }
        Ok(Prepared {
            problem_id: &p.problem_id,
            key_of,
            key_selectable,
            key_correct,
            weight,
            raw,
            id_rank,
        })
    }

    fn pool(&self) -> usize {
        self.key_of.len()
    }
}

/// Reusable buffers for tallying one slate.
struct Tally {
    count: Vec<usize>,
    sum: Vec<f64>,
    touched: Vec<usize>,
    stats: Vec<ClusterStat>,
    keys: Vec<usize>,
}

impl Tally {
    fn new(n_keys: usize) -> Self {
        Tally {
            count: vec![0; n_keys],
            sum: vec![0.0; n_keys],
            touched: Vec::new(),
            stats: Vec::new(),
            keys: Vec::new(),
        }
    }

    /// Answer id chosen by `method` on the slate, `None` if nothing is selectable.
    fn choose(&mut self, prep: &Prepared<'_>, slate: &[usize], method: &Method, tie: TieBreak) -> Option<usize> {
        if let Method::Bon = method {
            return choose_bon(prep, slate, tie);
        }
        for &i in slate {
            let k = prep.key_of[i];
            if self.count[k] == 0 {
                self.touched.push(k);
            }
            self.count[k] += 1;
            self.sum[k] += prep.weight[i];
        }
        let count = &self.count;
        self.touched.sort_unstable_by(|&a, &b| count[b].cmp(&count[a]).then(a.cmp(&b)));
        self.stats.clear();
        self.keys.clear();
        for &k in &self.touched {
            self.stats.push(ClusterStat {
                n: self.count[k],
                sum: self.sum[k],
                selectable: prep.key_selectable[k],
            });
            self.keys.push(k);
        }
        let n_total = slate.len();
        let rule = match *method {
            Method::Sc => Rule::Plurality,
            Method::Wsc => Rule::Weight,
            Method::Pv { alpha } => Rule::pv(alpha, n_total),
            Method::Gpv { alpha, m } => Rule::gpv(alpha, n_total, m),
            Method::Bon => unreachable!(),
        };
        let chosen = pick(&self.stats, rule, tie).map(|i| self.keys[i]);
        for &k in &self.touched {
            self.count[k] = 0;
            self.sum[k] = 0.0;
        }
        self.touched.clear();
        chosen
    }
}

fn choose_bon(prep: &Prepared<'_>, slate: &[usize], tie: TieBreak) -> Option<usize> {
    let eligible = slate.iter().copied().filter(|&i| prep.key_selectable[prep.key_of[i]]);
    let top = eligible.clone().map(|i| prep.raw[i]).fold(f64::NEG_INFINITY, f64::max);
    let mut tied: Vec<usize> = eligible.filter(|&i| prep.raw[i] == top).collect();
    if tied.is_empty() {
        return None;
    }
    tied.sort_unstable_by_key(|&i| prep.id_rank[i]);
    tied.dedup();
    let pick = match tie {
        TieBreak::Seeded(seed) if tied.len() > 1 => ChaCha8Rng::seed_from_u64(seed).random_range(0..tied.len()),
        _ => 0,
    };
    Some(prep.key_of[tied[pick]])
}

/// 0/1 outcome of every draw for one problem.
fn problem_outcomes(p: &Problem, cfg: &EvalConfig) -> Result<Vec<u8>> {
    let prep = Prepared::new(p, &cfg.method, cfg.transform)?;
    if !cfg.replacement && cfg.n > prep.pool() {
        return Err(Error::SlateTooLarge {
            problem_id: p.problem_id.clone(),
            n: cfg.n,
            pool: prep.pool(),
        });
    }
    let mut tally = Tally::new(prep.key_correct.len());
    let mut outcome = |draw: usize, slate: &[usize]| -> u8 {
        let tie = match cfg.tie_break {
            TieBreak::Deterministic => TieBreak::Deterministic,
            TieBreak::Seeded(base) => TieBreak::Seeded(tie_seed(base, prep.problem_id, draw)),
        };
        match tally.choose(&prep, slate, &cfg.method, tie) {
            Some(k) if prep.key_correct[k] => 1,
            _ => 0,
        }
    };
    Ok(match cfg.sampling {
        Sampling::Random => (0..cfg.draws)
            .map(|d| {
                let slate = draw_slate(cfg.seed, prep.problem_id, d, prep.pool(), cfg.n, cfg.replacement);
                outcome(d, &slate)
            })
            .collect(),
        Sampling::Enumerate => combinations(prep.pool(), cfg.n)
            .iter()
            .enumerate()
            .map(|(d, slate)| outcome(d, slate))
            .collect(),
    })
}

fn z_value(ci_level: f64) -> f64 {
    Normal::standard().inverse_cdf(0.5 + ci_level / 2.0)
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Mean selection accuracy over resampled slates of size `cfg.n`.
pub fn bootstrap_accuracy(problems: &[Problem], cfg: &EvalConfig) -> Result<BootstrapReport> {
    cfg.validate()?;
    if problems.is_empty() {
        return Err(Error::NoProblems);
    }
    let outcomes: Vec<Vec<u8>> = problems
        .par_iter()
        .map(|p| problem_outcomes(p, cfg))
        .collect::<Result<_>>()?;

    let per_problem: Vec<ProblemAccuracy> = problems
        .iter()
        .zip(&outcomes)
        .map(|(p, o)| ProblemAccuracy {
            problem_id: p.problem_id.clone(),
            accuracy: o.iter().map(|&x| x as u64).sum::<u64>() as f64 / o.len() as f64,
        })
        .collect();
    let mean = per_problem.iter().map(|a| a.accuracy).sum::<f64>() / per_problem.len() as f64;

    let (ci_low, ci_high, draws) = match cfg.sampling {
        Sampling::Enumerate => (mean, mean, 0),
        Sampling::Random => {
            let n_problems = problems.len() as f64;
            let per_draw: Vec<f64> = (0..cfg.draws)
                .map(|d| outcomes.iter().map(|o| o[d] as u64).sum::<u64>() as f64 / n_problems)
                .collect();
            let (lo, hi) = match cfg.ci_method {
                CiMethod::Normal => {
                    let sd = if cfg.draws > 1 {
                        let mu = per_draw.iter().sum::<f64>() / cfg.draws as f64;
                        (per_draw.iter().map(|a| (a - mu).powi(2)).sum::<f64>() / (cfg.draws - 1) as f64).sqrt()
                    } else {
                        0.0
                    };
                    let half = z_value(cfg.ci_level) * sd / (cfg.draws as f64).sqrt();
                    (mean - half, mean + half)
                }
                CiMethod::Percentile => {
                    let mut sorted = per_draw;
                    sorted.sort_by(|a, b| a.total_cmp(b));
                    let tail = (1.0 - cfg.ci_level) / 2.0;
                    (quantile(&sorted, tail), quantile(&sorted, 1.0 - tail))
                }
            };
            (lo.min(mean).max(0.0), hi.max(mean).min(1.0), cfg.draws)
        }
    };

    Ok(BootstrapReport {
        method: cfg.method.kind(),
        n: cfg.n,
        mean,
        ci_low,
        ci_high,
        draws,
        seed: cfg.seed,
        m: cfg.method.m(),
        alpha: cfg.method.alpha(),
        ci_level: cfg.ci_level,
        ci_method: cfg.ci_method,
        sampling: cfg.sampling,
        replacement: cfg.replacement,
        per_problem,
    })
}

/// Unbiased pass@n from a pool of `k` candidates with `c` correct:
/// `1 - C(k-c, n) / C(k, n)`.
pub fn pass_at_n_counts(k: usize, c: usize, n: usize) -> Result<f64> {
    if n > k {
        return Err(Error::SlateTooLarge {
            problem_id: String::new(),
            n,
            pool: k,
        });
    }
    if c > k {
        return Err(Error::InvalidConfig(format!("{c} correct out of {k}")));
    }
    if k - c < n {
        return Ok(1.0);
    }
    // C(k-c, n)/C(k, n) = prod_{i<n} (k-c-i)/(k-i)
    let ratio = (0..n).fold(1.0, |acc, i| acc * (k - c - i) as f64 / (k - i) as f64);
    Ok(1.0 - ratio)
}

pub fn pass_at_n(problem: &Problem, n: usize) -> Result<f64> {
    if !problem.is_labeled() {
        return Err(Error::LabelsRequired(problem.problem_id.clone()));
    }
    pass_at_n_counts(problem.len(), problem.num_correct(), n).map_err(|e| match e {
        Error::SlateTooLarge { n, pool, .. } => Error::SlateTooLarge {
            problem_id: problem.problem_id.clone(),
            n,
            pool,
        },
        e => e,
    })
}

/// Mean pass@n over problems.
pub fn benchmark_pass_at_n(problems: &[Problem], n: usize) -> Result<f64> {
    if problems.is_empty() {
        return Err(Error::NoProblems);
    }
    let total = problems.iter().map(|p| pass_at_n(p, n)).sum::<Result<f64>>()?;
    Ok(total / problems.len() as f64)
}

// ---------------------------------------------------------------------------
// Budget curves

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BudgetMode {
    #[default]
    Flops,
    Latency,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetPoint {
    pub method: MethodKind,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "M")]
    pub m: usize,
    /// Total FLOPs or seconds per problem.
    pub budget: f64,
    pub accuracy: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Cost inputs shared by every point of a curve.
#[derive(Debug, Clone, Copy)]
pub struct CostSetup<'a> {
    pub budget: BudgetMode,
    pub solver: Option<&'a ModelConfig>,
    pub disc_verifier: Option<&'a ModelConfig>,
    pub gen_verifier: Option<&'a ModelConfig>,
    pub latency: Option<&'a LatencyTable>,
    pub verify_out_tokens: Option<u64>,
}

pub fn pipeline_mode(kind: MethodKind) -> PipelineMode {
    match kind {
        MethodKind::Sc => PipelineMode::Sc,
        MethodKind::Bon | MethodKind::Wsc | MethodKind::Pv => PipelineMode::Disc,
        MethodKind::Gpv => PipelineMode::Gen,
    }
}

/// Expected per-problem compute of a size-`n` slate with `m` verifications.
pub fn slate_budget(problems: &[Problem], kind: MethodKind, n: usize, m: usize, cost: &CostSetup<'_>) -> Result<f64> {
    let mode = pipeline_mode(kind);
    let budget = match cost.budget {
        BudgetMode::Latency => {
            let table = cost.latency.ok_or_else(|| Error::MissingInput("latency table".into()))?;
            latency_lookup(table, mode, n, m)?
        }
        BudgetMode::Flops => {
            let solver = cost.solver.ok_or_else(|| Error::MissingInput("solver config".into()))?;
            let pipe = Pipeline {
                solver,
                verifier: match mode {
                    PipelineMode::Sc => None,
                    PipelineMode::Disc => cost.disc_verifier,
                    PipelineMode::Gen => cost.gen_verifier,
                },
                mode,
                m,
                verify_out_tokens: cost.verify_out_tokens,
            };
            let mut total = 0.0;
            for p in problems {
                let stats: Vec<_> = p.candidates.iter().map(|c| c.token_stats).collect();
                total += pipeline_flops(&pipe, &stats)?.total_f64() * n as f64 / p.len() as f64;
            }
            total / problems.len() as f64
        }
    };
    if budget.is_nan() || budget <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "{kind} at N={n}, M={m} has non-positive budget {budget}; token statistics missing?"
        )));
    }
    Ok(budget)
}

/// One curve per (method, M): bootstrap accuracy and budget at every N.
///
/// `base` supplies draws, seed, CI settings and sampling; its method and N are
/// overridden per point.
pub fn budget_curve(
    problems: &[Problem],
    methods: &[Method],
    n_grid: &[usize],
    m_grid: &[usize],
    cost: &CostSetup<'_>,
    base: &EvalConfig,
) -> Result<Vec<BudgetPoint>> {
    if n_grid.is_empty() {
        return Err(Error::InvalidConfig("empty N grid".into()));
    }
    if cost.budget == BudgetMode::Latency && cost.latency.is_none() {
        return Err(Error::MissingInput("latency table".into()));
    }
    let mut out = Vec::new();
    for method in methods {
        let variants: Vec<Method> = match *method {
            Method::Gpv { alpha, .. } => {
                if m_grid.is_empty() {
                    return Err(Error::InvalidConfig("GPV needs a nonempty M grid".into()));
                }
                m_grid.iter().map(|&m| Method::Gpv { alpha, m }).collect()
            }
            other => vec![other],
        };
        for variant in variants {
            let mut curve = Vec::with_capacity(n_grid.len());
            for &n in n_grid {
                let cfg = EvalConfig { method: variant, n, ..*base };
                let report = bootstrap_accuracy(problems, &cfg)?;
                curve.push(BudgetPoint {
                    method: variant.kind(),
                    n,
                    m: variant.m(),
                    budget: slate_budget(problems, variant.kind(), n, variant.m(), cost)?,
                    accuracy: report.mean,
                    ci_low: report.ci_low,
                    ci_high: report.ci_high,
                });
            }
            curve.sort_by(|a, b| a.budget.total_cmp(&b.budget));
            if let Some(w) = curve.windows(2).find(|w| w[0].budget >= w[1].budget) {
                return Err(Error::InvalidConfig(format!(
                    "{} budget does not strictly increase between N={} and N={}",
                    variant.kind(),
                    w[0].n,
                    w[1].n
                )));
            }
            out.extend(curve);
        }
    }
    Ok(out)
}

fn interp(curve: &[(f64, f64)], x: f64) -> f64 {
    let j = curve.partition_point(|p| p.0 < x);
    if j == 0 {
        return curve[0].1;
    }
    if j == curve.len() {
        return curve[j - 1].1;
    }
    let ((x0, y0), (x1, y1)) = (curve[j - 1], curve[j]);
    if x1 == x0 {
        return y1;
    }
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

/// Smallest budget on the shared axis at which the piecewise-linear accuracy of
/// `b` meets or exceeds that of `a`. Curves are `(budget, accuracy)` pairs.
pub fn crossover_threshold(a: &[(f64, f64)], b: &[(f64, f64)]) -> Result<Option<f64>> {
    for c in [a, b] {
        if c.len() < 2 {
            return Err(Error::InsufficientPoints(c.len()));
        }
        if c.windows(2).any(|w| w[0].0.partial_cmp(&w[1].0) != Some(std::cmp::Ordering::Less)) {
            return Err(Error::InvalidConfig("curve budgets must strictly increase".into()));
        }
    }
    let lo = a[0].0.max(b[0].0);
    let hi = a[a.len() - 1].0.min(b[b.len() - 1].0);
    if lo > hi {
        return Ok(None);
    }
    let mut xs: Vec<f64> = a
        .iter()
        .chain(b)
        .map(|p| p.0)
        .filter(|&x| x > lo && x < hi)
        .chain([lo, hi])
        .collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let gap = |x: f64| interp(b, x) - interp(a, x);
    let mut prev = (xs[0], gap(xs[0]));
    if prev.1 >= 0.0 {
        return Ok(Some(prev.0));
    }
    for &x in &xs[1..] {
        let g = gap(x);
        if g >= 0.0 {
            // the gap is linear between consecutive breakpoints
            let (x0, g0) = prev;
            return Ok(Some(x0 + (x - x0) * (-g0) / (g - g0)));
        }
        prev = (x, g);
    }
    Ok(None)
}

/// Crossover between two budget curves; see [`crossover_threshold`].
pub fn crossover_between(a: &[BudgetPoint], b: &[BudgetPoint]) -> Result<Option<f64>> {
    let xy = |c: &[BudgetPoint]| c.iter().map(|p| (p.budget, p.accuracy)).collect::<Vec<_>>();
    crossover_threshold(&xy(a), &xy(b))
}
