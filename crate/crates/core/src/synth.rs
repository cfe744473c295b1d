//! Seeded synthetic candidate pools with Beta-distributed verifier scores.
//!
//! Scores are drawn on the probability scale and stored as logits, so the
//! default sigmoid transform recovers the Beta draw.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{canonicalize_answer, Candidate, CanonMode, Problem, TokenStats};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaParams {
    pub a: f64,
    pub b: f64,
}

impl BetaParams {
    pub fn new(a: f64, b: f64) -> Self {
        BetaParams { a, b }
    }

    pub fn mean(&self) -> f64 {
        self.a / (self.a + self.b)
    }

    pub fn variance(&self) -> f64 {
        let s = self.a + self.b;
        self.a * self.b / (s * s * (s + 1.0))
    }
}

/// Token statistics stamped on every synthetic candidate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthTokens {
    pub prompt: u64,
    pub output: u64,
    pub solution: u64,
    pub verify_out: u64,
}

impl Default for SynthTokens {
    fn default() -> Self {
        SynthTokens {
            prompt: 128,
            output: 8192,
            solution: 1024,
            verify_out: 8192,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub seed: u64,
    pub n_problems: usize,
    pub pool_size: usize,
    /// Probability that any one candidate is correct.
    pub p_correct: f64,
    /// Number of distinct wrong answers per problem.
    pub answer_space: usize,
    pub correct_dist: BetaParams,
    pub incorrect_dist: BetaParams,
    /// Generative verdicts per candidate (0 for none), drawn from the same
    /// label-conditional distributions.
    pub gen_m: usize,
    pub tokens: SynthTokens,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            seed: 42,
            n_problems: 200,
            pool_size: 128,
            p_correct: 0.5,
            answer_space: 3,
            correct_dist: BetaParams::new(8.0, 2.0),
            incorrect_dist: BetaParams::new(2.0, 8.0),
            gen_m: 0,
            tokens: SynthTokens::default(),
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.pool_size == 0 {
            return bad("pool_size must be >= 1".into());
        }
        if self.n_problems == 0 {
            return bad("n_problems must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.p_correct) {
            return bad(format!("p_correct must lie in [0,1], got {}", self.p_correct));
        }
        if self.answer_space == 0 && self.p_correct < 1.0 {
            return bad("answer_space must be >= 1 unless p_correct = 1".into());
        }
        for d in [self.correct_dist, self.incorrect_dist] {
            if !(d.a > 0.0 && d.b > 0.0 && d.a.is_finite() && d.b.is_finite()) {
                return bad(format!("Beta parameters must be positive, got ({}, {})", d.a, d.b));
            }
        }
        if self.tokens.solution > self.tokens.output {
            return bad("solution tokens cannot exceed output tokens".into());
        }
        Ok(())
    }
}

const LOGIT_CLAMP: f64 = 1e-12;

pub fn logit(p: f64) -> f64 {
    let p = p.clamp(LOGIT_CLAMP, 1.0 - LOGIT_CLAMP);
    (p / (1.0 - p)).ln()
}

fn problem_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Generates `n_problems` labeled, scored pools; deterministic in `spec`.
pub fn generate_pool(spec: &SynthSpec) -> Result<Vec<Problem>> {
    spec.validate()?;
    let correct = Beta::new(spec.correct_dist.a, spec.correct_dist.b)
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let incorrect = Beta::new(spec.incorrect_dist.a, spec.incorrect_dist.b)
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let width = spec.n_problems.saturating_sub(1).to_string().len().max(3);
    let tokens = TokenStats {
        prompt_tokens: spec.tokens.prompt,
        output_tokens: spec.tokens.output,
        solution_tokens: spec.tokens.solution,
        reasoning_budget: None,
        verify_out_tokens: (spec.gen_m > 0).then_some(spec.tokens.verify_out),
    };

    (0..spec.n_problems)
        .into_par_iter()
        .map(|pi| {
            let mut rng = problem_rng(spec.seed, pi);
            // answers are the integers 0..=answer_space; one of them is correct
            let right = rng.random_range(0..=spec.answer_space);
            let candidates = (0..spec.pool_size)
                .map(|ci| {
                    let ok = rng.random_bool(spec.p_correct);
                    let answer = if ok {
                        right
                    } else {
                        let w = rng.random_range(0..spec.answer_space);
                        if w >= right {
                            w + 1
                        } else {
                            w
                        }
                    };
                    let dist = if ok { &correct } else { &incorrect };
                    let disc = logit(dist.sample(&mut rng));
                    let gen: Option<Vec<f64>> =
                        (spec.gen_m > 0).then(|| (0..spec.gen_m).map(|_| logit(dist.sample(&mut rng))).collect());
                    let raw = answer.to_string();
                    Candidate {
                        candidate_id: ci.to_string(),
                        answer_key: canonicalize_answer(&raw, CanonMode::Exact),
                        answer_raw: raw,
                        correct: Some(ok),
                        disc_score: Some(disc),
                        gen_scores: gen,
                        token_stats: tokens,
                    }
                })
                .collect();
            Problem::new(format!("p{pi:0width$}"), candidates)
        })
        .collect()
}
