//! Candidate pools, answer canonicalization and answer clustering.

use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Key given to candidates whose final answer could not be extracted.
/// Such candidates cluster together and are never selectable.
pub const NO_ANSWER: &str = "<none>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CanonMode {
    #[default]
    Exact,
    Numeric,
}

/// How raw verifier outputs (logits) are mapped before aggregation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreTransform {
    #[default]
    Sigmoid,
    Raw,
}

impl ScoreTransform {
    pub fn apply(self, logit: f64) -> f64 {
        match self {
            ScoreTransform::Sigmoid => sigmoid(logit),
            ScoreTransform::Raw => logit,
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenStats {
    pub prompt_tokens: u64,
    /// Full generated length, reasoning included.
    pub output_tokens: u64,
    /// Generated length with the reasoning span removed; the verifier's input length.
    pub solution_tokens: u64,
    pub reasoning_budget: Option<u64>,
    /// Output length of one generative verification of this candidate.
    pub verify_out_tokens: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub candidate_id: String,
    pub answer_raw: String,
    pub answer_key: String,
    pub correct: Option<bool>,
    /// Raw discriminative verifier logit.
    pub disc_score: Option<f64>,
    /// One raw score per generative verification.
    pub gen_scores: Option<Vec<f64>>,
    pub token_stats: TokenStats,
}

impl Candidate {
    pub fn new(candidate_id: impl Into<String>, answer_raw: impl Into<String>, mode: CanonMode) -> Self {
        let answer_raw = answer_raw.into();
        let answer_key = canonicalize_answer(&answer_raw, mode);
        Candidate {
            candidate_id: candidate_id.into(),
            answer_raw,
            answer_key,
            correct: None,
            disc_score: None,
            gen_scores: None,
            token_stats: TokenStats::default(),
        }
    }

    pub fn with_score(mut self, score: f64) -> Self {
        self.disc_score = Some(score);
        self
    }

    pub fn with_label(mut self, correct: bool) -> Self {
        self.correct = Some(correct);
        self
    }

    pub fn with_gen_scores(mut self, scores: Vec<f64>) -> Self {
        self.gen_scores = Some(scores);
        self
    }

    pub fn has_answer(&self) -> bool {
        self.answer_key != NO_ANSWER
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub problem_id: String,
    pub candidates: Vec<Candidate>,
}

impl Problem {
    /// Builds a problem and checks every per-problem invariant.
    pub fn new(problem_id: impl Into<String>, candidates: Vec<Candidate>) -> Result<Self> {
        let p = Problem {
            problem_id: problem_id.into(),
            candidates,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |message: String| Error::InvalidProblem {
            problem_id: self.problem_id.clone(),
            message,
        };
        if self.candidates.is_empty() {
            return Err(fail("no candidates".into()));
        }
        let mut seen = HashMap::with_capacity(self.candidates.len());
        for c in &self.candidates {
            if seen.insert(c.candidate_id.as_str(), ()).is_some() {
                return Err(fail(format!("duplicate candidate_id {:?}", c.candidate_id)));
            }
            let ts = &c.token_stats;
            if ts.solution_tokens > ts.output_tokens {
                return Err(fail(format!(
                    "candidate {}: solution_tokens {} exceeds output_tokens {}",
                    c.candidate_id, ts.solution_tokens, ts.output_tokens
                )));
            }
            if !c.answer_raw.trim().is_empty() && c.answer_key.is_empty() {
                return Err(fail(format!("candidate {}: empty answer_key", c.candidate_id)));
            }
            if let Some(s) = c.disc_score {
                if !s.is_finite() {
                    return Err(fail(format!("candidate {}: non-finite disc_score", c.candidate_id)));
                }
            }
            if let Some(g) = &c.gen_scores {
                if g.is_empty() {
                    return Err(fail(format!("candidate {}: empty gen_scores", c.candidate_id)));
                }
                if g.iter().any(|s| !s.is_finite()) {
                    return Err(fail(format!("candidate {}: non-finite gen_scores", c.candidate_id)));
                }
            }
        }

        let first = &self.candidates[0];
        let all_same = |f: &dyn Fn(&Candidate) -> bool| self.candidates.iter().all(|c| f(c) == f(first));
        if !all_same(&|c| c.correct.is_some()) {
            return Err(fail("mixed labeled and unlabeled candidates".into()));
        }
        if !all_same(&|c| c.disc_score.is_some()) {
            return Err(fail("disc_score present on some candidates but not all".into()));
        }
        if !all_same(&|c| c.gen_scores.is_some()) {
            return Err(fail("gen_scores present on some candidates but not all".into()));
        }
        if let Some(m) = first.gen_scores.as_ref().map(Vec::len) {
            if let Some(bad) = self
                .candidates
                .iter()
                .find(|c| c.gen_scores.as_ref().map(Vec::len) != Some(m))
            {
                return Err(fail(format!(
                    "inconsistent M: candidate {} has {} gen_scores, expected {m}",
                    bad.candidate_id,
                    bad.gen_scores.as_ref().map_or(0, Vec::len)
                )));
            }
        }

        if self.is_labeled() {
            let mut label_of: HashMap<&str, bool> = HashMap::new();
            for c in &self.candidates {
                let label = c.correct.unwrap_or(false);
                match label_of.insert(c.answer_key.as_str(), label) {
                    Some(prev) if prev != label => {
                        return Err(fail(format!(
                            "answer {:?} carries both correct and incorrect labels",
                            c.answer_key
                        )))
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn is_labeled(&self) -> bool {
        self.candidates.first().is_some_and(|c| c.correct.is_some())
    }

    pub fn is_scored(&self) -> bool {
        self.candidates.first().is_some_and(|c| c.disc_score.is_some())
    }

    /// Number of generative verifications per candidate, if present.
    pub fn gen_m(&self) -> Option<usize> {
        self.candidates.first().and_then(|c| c.gen_scores.as_ref().map(Vec::len))
    }

    pub fn num_correct(&self) -> usize {
        self.candidates.iter().filter(|c| c.correct == Some(true)).count()
    }

    /// True when the pool holds at least one correct and one incorrect candidate.
    pub fn is_learnable(&self) -> bool {
        let c = self.num_correct();
        self.is_labeled() && c > 0 && c < self.len()
    }
}

/// Candidates sharing one canonical answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerCluster {
    pub answer_key: String,
    pub member_ids: Vec<String>,
    pub n_a: usize,
    pub sum_score: Option<f64>,
    pub mean_score: Option<f64>,
}

impl AnswerCluster {
    pub fn is_selectable(&self) -> bool {
        self.answer_key != NO_ANSWER
    }
}

/// Deterministic cluster order: larger support first, then ascending key.
pub fn cluster_order(n_a: usize, key_a: &str, n_b: usize, key_b: &str) -> Ordering {
    n_b.cmp(&n_a).then_with(|| key_a.cmp(key_b))
}

/// Orders candidate ids numerically when both parse as integers, lexically otherwise.
pub fn candidate_id_order(a: &str, b: &str) -> Ordering {
    match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y).then_with(|| a.cmp(b)),
        (Ok(_), Err(_)) => Ordering::Less,
        (Err(_), Ok(_)) => Ordering::Greater,
        (Err(_), Err(_)) => a.cmp(b),
    }
}

/// Groups candidates by `answer_key`. Aggregates use the transformed `disc_score`
/// and are summed in candidate order.
pub fn cluster_by_answer(candidates: &[Candidate], transform: ScoreTransform) -> Result<Vec<AnswerCluster>> {
    if candidates.is_empty() {
        return Err(Error::EmptyPool);
    }
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut clusters: Vec<AnswerCluster> = Vec::new();
    for c in candidates {
        let slot = *index.entry(c.answer_key.as_str()).or_insert_with(|| {
            clusters.push(AnswerCluster {
                answer_key: c.answer_key.clone(),
                member_ids: Vec::new(),
                n_a: 0,
                sum_score: c.disc_score.map(|_| 0.0),
                mean_score: None,
            });
            clusters.len() - 1
        });
        let cl = &mut clusters[slot];
        cl.member_ids.push(c.candidate_id.clone());
        cl.n_a += 1;
        cl.sum_score = match (cl.sum_score, c.disc_score) {
            (Some(acc), Some(s)) => Some(acc + transform.apply(s)),
            _ => None,
        };
    }
    for cl in &mut clusters {
        cl.mean_score = cl.sum_score.map(|s| s / cl.n_a as f64);
    }
    clusters.sort_by(|a, b| cluster_order(a.n_a, &a.answer_key, b.n_a, &b.answer_key));
    Ok(clusters)
}

/// Maps raw answer text to a canonical key. Never fails: text the numeric mode
/// cannot parse falls back to the exact-mode key.
pub fn canonicalize_answer(raw: &str, mode: CanonMode) -> String {
    let exact = raw.split_whitespace().collect::<Vec<_>>().join(" ");
    if exact.is_empty() {
        return NO_ANSWER.to_string();
    }
    match mode {
        CanonMode::Exact => exact,
        CanonMode::Numeric => match parse_rational(&exact) {
            Some((num, 1)) => num.to_string(),
            Some((num, den)) => format!("{num}/{den}"),
            None => exact,
        },
    }
}

fn parse_rational(s: &str) -> Option<(i128, i128)> {
    let s = s.replace(' ', "");
    let (num, den) = match s.split_once('/') {
        Some((n, d)) => {
            let (nn, nd) = parse_decimal(n)?;
            let (dn, dd) = parse_decimal(d)?;
            // (nn/nd) / (dn/dd)
            (nn.checked_mul(dd)?, nd.checked_mul(dn)?)
        }
        None => parse_decimal(&s)?,
    };
    if den == 0 {
        return None;
    }
    let g = gcd(num.unsigned_abs(), den.unsigned_abs()) as i128;
    let (mut num, mut den) = (num / g, den / g);
    if den < 0 {
        num = num.checked_neg()?;
        den = den.checked_neg()?;
    }
    Some((num, den))
}

/// Parses `[+-]digits[.digits]` into an unreduced fraction.
fn parse_decimal(s: &str) -> Option<(i128, i128)> {
    let (neg, body) = match s.as_bytes().first()? {
        b'-' => (true, &s[1..]),
        b'+' => (false, &s[1..]),
        _ => (false, s),
    };
    let (int_part, frac_part) = body.split_once('.').unwrap_or((body, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.bytes().chain(frac_part.bytes()).all(|b| b.is_ascii_digit()) {
        return None;
    }
    let mut num: i128 = 0;
    for b in int_part.bytes().chain(frac_part.bytes()) {
        num = num.checked_mul(10)?.checked_add((b - b'0') as i128)?;
    }
    let den = 10i128.checked_pow(frac_part.len() as u32)?;
    Some((if neg { -num } else { num }, den))
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.max(1)
}
