//! Answer-selection rules over a pool of scored candidates.
//!
//! Cluster-level rules (SC, WSC, PV, GPV) break ties by the deterministic cluster
//! order of [`cluster_by_answer`]; BoN breaks ties by the lowest candidate id.
//! Candidates without an extracted answer are never selected.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{candidate_id_order, cluster_by_answer, AnswerCluster, Candidate, ScoreTransform};

pub const DEFAULT_PV_ALPHA: f64 = 0.5;
pub const DEFAULT_GPV_ALPHA: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MethodKind {
    #[serde(rename = "SC")]
    Sc,
    #[serde(rename = "BoN")]
    Bon,
    #[serde(rename = "WSC")]
    Wsc,
    #[serde(rename = "PV")]
    Pv,
    #[serde(rename = "GPV")]
    Gpv,
}

impl MethodKind {
    pub const ALL: [MethodKind; 5] = [MethodKind::Sc, MethodKind::Bon, MethodKind::Wsc, MethodKind::Pv, MethodKind::Gpv];

    pub fn label(self) -> &'static str {
        match self {
            MethodKind::Sc => "SC",
            MethodKind::Bon => "BoN",
            MethodKind::Wsc => "WSC",
            MethodKind::Pv => "PV",
            MethodKind::Gpv => "GPV",
        }
    }

    pub fn needs_disc_scores(self) -> bool {
        matches!(self, MethodKind::Bon | MethodKind::Wsc | MethodKind::Pv)
    }
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for MethodKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sc" => Ok(MethodKind::Sc),
            "bon" => Ok(MethodKind::Bon),
            "wsc" => Ok(MethodKind::Wsc),
            "pv" => Ok(MethodKind::Pv),
            "gpv" => Ok(MethodKind::Gpv),
            _ => Err(Error::InvalidConfig(format!("unknown method {s:?}"))),
        }
    }
}

/// A selection rule together with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Method {
    Sc,
    Bon,
    Wsc,
    Pv { alpha: f64 },
    Gpv { alpha: f64, m: usize },
}

impl Method {
    pub fn kind(&self) -> MethodKind {
        match self {
            Method::Sc => MethodKind::Sc,
            Method::Bon => MethodKind::Bon,
            Method::Wsc => MethodKind::Wsc,
            Method::Pv { .. } => MethodKind::Pv,
            Method::Gpv { .. } => MethodKind::Gpv,
        }
    }

    pub fn alpha(&self) -> Option<f64> {
        match *self {
            Method::Pv { alpha } | Method::Gpv { alpha, .. } => Some(alpha),
            _ => None,
        }
    }

    /// Generative verifications per candidate; 0 for every other rule.
    pub fn m(&self) -> usize {
        match *self {
            Method::Gpv { m, .. } => m,
            _ => 0,
        }
    }

    pub fn from_kind(kind: MethodKind, alpha: Option<f64>, m: usize) -> Method {
        match kind {
            MethodKind::Sc => Method::Sc,
            MethodKind::Bon => Method::Bon,
            MethodKind::Wsc => Method::Wsc,
            MethodKind::Pv => Method::Pv {
                alpha: alpha.unwrap_or(DEFAULT_PV_ALPHA),
            },
            MethodKind::Gpv => Method::Gpv {
                alpha: alpha.unwrap_or(DEFAULT_GPV_ALPHA),
                m,
            },
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if let Some(alpha) = self.alpha() {
            if !alpha.is_finite() || alpha < 0.0 {
                return Err(Error::InvalidAlpha(alpha));
            }
        }
        if let Method::Gpv { m, .. } = self {
            if *m == 0 {
                return Err(Error::InvalidConfig("GPV needs M >= 1".into()));
            }
        }
        Ok(())
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Pv { alpha } => write!(f, "PV(alpha={alpha})"),
            Method::Gpv { alpha, m } => write!(f, "GPV(alpha={alpha},M={m})"),
            other => f.write_str(other.kind().label()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum TieBreak {
    /// First cluster in deterministic order / lowest candidate id.
    #[default]
    Deterministic,
    /// Uniform choice among exact ties, seeded for reproducibility.
    Seeded(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SelectConfig {
    pub transform: ScoreTransform,
    pub tie_break: TieBreak,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterDiagnostic {
    pub answer_key: String,
    pub n_a: usize,
    pub sum_score: Option<f64>,
    pub mean_score: Option<f64>,
    pub penalty: Option<f64>,
    /// `None` for the unselectable no-answer cluster.
    pub objective: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionParams {
    pub alpha: Option<f64>,
    pub m: Option<usize>,
    pub n_total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub method: MethodKind,
    pub chosen_answer: String,
    pub chosen_candidate: Option<String>,
    pub cluster_diagnostics: Vec<ClusterDiagnostic>,
    pub params: SelectionParams,
}

// ---------------------------------------------------------------------------
// Shared objective and argmax, used by the public rules and the evaluator.

#[derive(Debug, Clone, Copy)]
pub(crate) struct ClusterStat {
    pub n: usize,
    pub sum: f64,
    pub selectable: bool,
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum Rule {
    Plurality,
    Weight,
    /// `mean - alpha * ln(total) / (n * per_member + 1)`.
    Pessimistic { alpha: f64, ln_total: f64, per_member: f64 },
}

impl Rule {
    pub(crate) fn pv(alpha: f64, n_total: usize) -> Rule {
        Rule::Pessimistic {
            alpha,
            ln_total: (n_total as f64).ln(),
            per_member: 1.0,
        }
    }

    pub(crate) fn gpv(alpha: f64, n_total: usize, m: usize) -> Rule {
        Rule::Pessimistic {
            alpha,
            ln_total: ((n_total * m) as f64).ln(),
            per_member: m as f64,
        }
    }

    pub(crate) fn penalty(&self, n: usize) -> Option<f64> {
        match *self {
            Rule::Pessimistic { ln_total, per_member, .. } => Some(ln_total / (n as f64 * per_member + 1.0)),
            _ => None,
        }
    }

    pub(crate) fn objective(&self, stat: &ClusterStat) -> f64 {
        match *self {
            Rule::Plurality => stat.n as f64,
            Rule::Weight => stat.sum,
            Rule::Pessimistic { alpha, .. } => {
                stat.sum / stat.n as f64 - alpha * self.penalty(stat.n).unwrap_or(0.0)
            }
        }
    }
}

/// Index of the winning cluster; `stats` must already be in deterministic order.
pub(crate) fn pick(stats: &[ClusterStat], rule: Rule, tie: TieBreak) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in stats.iter().enumerate().filter(|(_, s)| s.selectable) {
        let obj = rule.objective(s);
        match best {
            Some((_, b)) if obj <= b => {}
            _ => best = Some((i, obj)),
        }
    }
    let (first, top) = best?;
    match tie {
        TieBreak::Deterministic => Some(first),
        TieBreak::Seeded(seed) => {
            let tied: Vec<usize> = stats
                .iter()
                .enumerate()
                .filter(|(_, s)| s.selectable && rule.objective(s) == top)
                .map(|(i, _)| i)
                .collect();
            if tied.len() == 1 {
                return Some(first);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Some(tied[rng.random_range(0..tied.len())])
        }
    }
}

fn seeded_pick<T>(tied: &[T], tie: TieBreak) -> usize {
    match tie {
        TieBreak::Seeded(seed) if tied.len() > 1 => ChaCha8Rng::seed_from_u64(seed).random_range(0..tied.len()),
        _ => 0,
    }
}

// ---------------------------------------------------------------------------

fn ensure_nonempty(clusters: &[AnswerCluster]) -> Result<()> {
    if clusters.is_empty() {
        Err(Error::EmptyPool)
    } else {
        Ok(())
    }
}

fn scored_sums(clusters: &[AnswerCluster]) -> Result<Vec<f64>> {
    clusters
        .iter()
        .map(|c| c.sum_score.ok_or(Error::ScoresRequired))
        .collect()
}

fn finish(
    method: MethodKind,
    clusters: &[AnswerCluster],
    stats: &[ClusterStat],
    rule: Rule,
    tie: TieBreak,
    params: SelectionParams,
) -> Result<SelectionResult> {
    let chosen = pick(stats, rule, tie).ok_or(Error::NoSelectableAnswer)?;
    let has_scores = !matches!(rule, Rule::Plurality) || clusters.iter().all(|c| c.sum_score.is_some());
    let cluster_diagnostics = clusters
        .iter()
        .zip(stats)
        .map(|(c, s)| ClusterDiagnostic {
            answer_key: c.answer_key.clone(),
            n_a: c.n_a,
            sum_score: has_scores.then_some(s.sum),
            mean_score: has_scores.then(|| s.sum / s.n as f64),
            penalty: rule.penalty(s.n),
            objective: s.selectable.then(|| rule.objective(s)),
        })
        .collect();
    Ok(SelectionResult {
        method,
        chosen_answer: clusters[chosen].answer_key.clone(),
        chosen_candidate: None,
        cluster_diagnostics,
        params,
    })
}

fn stats_with(clusters: &[AnswerCluster], sums: &[f64]) -> Vec<ClusterStat> {
    clusters
        .iter()
        .zip(sums)
        .map(|(c, &sum)| ClusterStat {
            n: c.n_a,
            sum,
            selectable: c.is_selectable(),
        })
        .collect()
}

fn pool_size(clusters: &[AnswerCluster]) -> usize {
    clusters.iter().map(|c| c.n_a).sum()
}

/// Self-consistency: the answer with the largest support.
pub fn select_sc(clusters: &[AnswerCluster]) -> Result<SelectionResult> {
    select_sc_with(clusters, TieBreak::Deterministic)
}

pub fn select_sc_with(clusters: &[AnswerCluster], tie: TieBreak) -> Result<SelectionResult> {
    ensure_nonempty(clusters)?;
    let sums: Vec<f64> = clusters.iter().map(|c| c.sum_score.unwrap_or(0.0)).collect();
    let stats = stats_with(clusters, &sums);
    let params = SelectionParams {
        alpha: None,
        m: None,
        n_total: pool_size(clusters),
    };
    finish(MethodKind::Sc, clusters, &stats, Rule::Plurality, tie, params)
}

/// Best-of-N: the answer of the single highest-scoring candidate.
///
/// Compares raw `disc_score` values so that saturating transforms cannot
/// manufacture ties.
pub fn select_bon(candidates: &[Candidate]) -> Result<SelectionResult> {
    select_bon_with(candidates, TieBreak::Deterministic)
}

pub fn select_bon_with(candidates: &[Candidate], tie: TieBreak) -> Result<SelectionResult> {
    if candidates.is_empty() {
        return Err(Error::EmptyPool);
    }
    let scores: Vec<f64> = candidates
        .iter()
        .map(|c| c.disc_score.ok_or(Error::ScoresRequired))
        .collect::<Result<_>>()?;
    let top = candidates
        .iter()
        .zip(&scores)
        .filter(|(c, _)| c.has_answer())
        .map(|(_, &s)| s)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut tied: Vec<&Candidate> = candidates
        .iter()
        .zip(&scores)
        .filter(|(c, &s)| c.has_answer() && s == top)
        .map(|(c, _)| c)
        .collect();
    if tied.is_empty() {
        return Err(Error::NoSelectableAnswer);
    }
    tied.sort_by(|a, b| candidate_id_order(&a.candidate_id, &b.candidate_id));
    let winner = tied[seeded_pick(&tied, tie)];

    let clusters = cluster_by_answer(candidates, ScoreTransform::Raw)?;
    let by_id: HashMap<&str, f64> = candidates
        .iter()
        .zip(&scores)
        .map(|(c, &s)| (c.candidate_id.as_str(), s))
        .collect();
    let cluster_diagnostics = clusters
        .iter()
        .map(|c| {
            let best = c
                .member_ids
                .iter()
                .map(|id| by_id[id.as_str()])
                .fold(f64::NEG_INFINITY, f64::max);
            ClusterDiagnostic {
                answer_key: c.answer_key.clone(),
                n_a: c.n_a,
                sum_score: c.sum_score,
                mean_score: c.mean_score,
                penalty: None,
                objective: c.is_selectable().then_some(best),
            }
        })
        .collect();
    Ok(SelectionResult {
        method: MethodKind::Bon,
        chosen_answer: winner.answer_key.clone(),
        chosen_candidate: Some(winner.candidate_id.clone()),
        cluster_diagnostics,
        params: SelectionParams {
            alpha: None,
            m: None,
            n_total: candidates.len(),
        },
    })
}

/// Weighted self-consistency: the answer with the largest summed score.
pub fn select_wsc(clusters: &[AnswerCluster]) -> Result<SelectionResult> {
    select_wsc_with(clusters, TieBreak::Deterministic)
}

pub fn select_wsc_with(clusters: &[AnswerCluster], tie: TieBreak) -> Result<SelectionResult> {
    ensure_nonempty(clusters)?;
    let sums = scored_sums(clusters)?;
    let stats = stats_with(clusters, &sums);
    let params = SelectionParams {
        alpha: None,
        m: None,
        n_total: pool_size(clusters),
    };
    finish(MethodKind::Wsc, clusters, &stats, Rule::Weight, tie, params)
}

/// Pessimistic verification: cluster mean score minus `alpha * ln(N) / (n_a + 1)`.
pub fn select_pv(clusters: &[AnswerCluster], alpha: f64, n_total: usize) -> Result<SelectionResult> {
    select_pv_with(clusters, alpha, n_total, TieBreak::Deterministic)
}

pub fn select_pv_with(clusters: &[AnswerCluster], alpha: f64, n_total: usize, tie: TieBreak) -> Result<SelectionResult> {
    ensure_nonempty(clusters)?;
    Method::Pv { alpha }.validate()?;
    if n_total == 0 {
        return Err(Error::EmptyPool);
    }
    let sums = scored_sums(clusters)?;
    let stats = stats_with(clusters, &sums);
    let params = SelectionParams {
        alpha: Some(alpha),
        m: None,
        n_total,
    };
    finish(MethodKind::Pv, clusters, &stats, Rule::pv(alpha, n_total), tie, params)
}

/// Generative pessimistic verification: PV over per-candidate scores averaged
/// across `m` generative verdicts, penalty `ln(N*M) / (n_a*M + 1)`.
pub fn select_gpv(
    clusters: &[AnswerCluster],
    candidates: &[Candidate],
    alpha: f64,
    n_total: usize,
    m: usize,
    transform: ScoreTransform,
) -> Result<SelectionResult> {
    select_gpv_with(clusters, candidates, alpha, n_total, m, transform, TieBreak::Deterministic)
}

pub fn select_gpv_with(
    clusters: &[AnswerCluster],
    candidates: &[Candidate],
    alpha: f64,
    n_total: usize,
    m: usize,
    transform: ScoreTransform,
    tie: TieBreak,
) -> Result<SelectionResult> {
    ensure_nonempty(clusters)?;
    Method::Gpv { alpha, m }.validate()?;
    if n_total == 0 {
        return Err(Error::EmptyPool);
    }
    let mut averaged: HashMap<&str, f64> = HashMap::with_capacity(candidates.len());
    for c in candidates {
        let g = c.gen_scores.as_ref().ok_or(Error::ScoresRequired)?;
        if g.len() != m {
            return Err(Error::InconsistentM {
                expected: m,
                found: g.len(),
            });
        }
        averaged.insert(c.candidate_id.as_str(), mean_verdict(g, transform));
    }
    let sums = clusters
        .iter()
        .map(|cl| {
            cl.member_ids.iter().try_fold(0.0, |acc, id| {
                averaged
                    .get(id.as_str())
                    .map(|r| acc + r)
                    .ok_or_else(|| Error::InvalidConfig(format!("cluster member {id:?} not among candidates")))
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    let stats = stats_with(clusters, &sums);
    let params = SelectionParams {
        alpha: Some(alpha),
        m: Some(m),
        n_total,
    };
    finish(MethodKind::Gpv, clusters, &stats, Rule::gpv(alpha, n_total, m), tie, params)
}

/// `(1/M) * sum_m transform(r_{i,m})`.
pub(crate) fn mean_verdict(scores: &[f64], transform: ScoreTransform) -> f64 {
    scores.iter().map(|&s| transform.apply(s)).sum::<f64>() / scores.len() as f64
}

/// Clusters `candidates` and applies `method`, with N equal to the pool size.
pub fn select(method: Method, candidates: &[Candidate], cfg: &SelectConfig) -> Result<SelectionResult> {
    method.validate()?;
    if candidates.is_empty() {
        return Err(Error::EmptyPool);
    }
    let n_total = candidates.len();
    match method {
        Method::Bon => select_bon_with(candidates, cfg.tie_break),
        Method::Sc => select_sc_with(&cluster_by_answer(candidates, cfg.transform)?, cfg.tie_break),
        Method::Wsc => select_wsc_with(&cluster_by_answer(candidates, cfg.transform)?, cfg.tie_break),
        Method::Pv { alpha } => {
            select_pv_with(&cluster_by_answer(candidates, cfg.transform)?, alpha, n_total, cfg.tie_break)
        }
        Method::Gpv { alpha, m } => {
            let clusters = cluster_by_answer(candidates, cfg.transform)?;
            select_gpv_with(&clusters, candidates, alpha, n_total, m, cfg.transform, cfg.tie_break)
        }
    }
}
