//! Bradley–Terry ranking objective for a discriminative verifier, its analytic
//! gradient, and the score-margin training diagnostic.
//!
//! For a batch of logits `r_1..r_m` with correct set P and incorrect set N:
//!
//! ```text
//! L = -1/(|P||N|) * sum_{i in P} sum_{j in N} log sigmoid(r_i - r_j) + (lambda/2) * mean(r^2)
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{sigmoid, Problem};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredGroup {
    pub scores: Vec<f64>,
    pub labels: Vec<bool>,
}

impl ScoredGroup {
    pub fn new(scores: Vec<f64>, labels: Vec<bool>) -> Result<Self> {
        if scores.is_empty() || scores.len() != labels.len() {
            return Err(Error::InvalidConfig(format!(
                "group needs matching nonempty scores and labels (got {} and {})",
                scores.len(),
                labels.len()
            )));
        }
        Ok(ScoredGroup { scores, labels })
    }

    /// Discriminative scores and labels of a labeled, scored problem.
    pub fn from_problem(p: &Problem) -> Result<Self> {
        let scores = p
            .candidates
            .iter()
            .map(|c| c.disc_score.ok_or(Error::ScoresRequired))
            .collect::<Result<Vec<_>>>()?;
        let labels = p
            .candidates
            .iter()
            .map(|c| c.correct.ok_or_else(|| Error::LabelsRequired(p.problem_id.clone())))
            .collect::<Result<Vec<_>>>()?;
        ScoredGroup::new(scores, labels)
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn is_learnable(&self) -> bool {
        self.labels.iter().any(|&l| l) && self.labels.iter().any(|&l| !l)
    }

    fn split(&self) -> Result<(Vec<usize>, Vec<usize>)> {
        let (pos, neg): (Vec<usize>, Vec<usize>) = (0..self.len()).partition(|&k| self.labels[k]);
        if pos.is_empty() || neg.is_empty() {
            return Err(Error::NoLearnableSignal);
        }
        Ok((pos, neg))
    }
}

/// Keeps only groups with at least one correct and one incorrect member.
pub fn filter_learnable_groups(groups: &[ScoredGroup]) -> Vec<ScoredGroup> {
    groups.iter().filter(|g| g.is_learnable()).cloned().collect()
}

/// Same filter over labeled candidate pools.
pub fn filter_learnable_problems(problems: &[Problem]) -> Vec<Problem> {
    problems.iter().filter(|p| p.is_learnable()).cloned().collect()
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `ln sigmoid(x) = -softplus(-x)`.
pub fn log_sigmoid(x: f64) -> f64 {
    -softplus(-x)
}

pub fn bt_loss(group: &ScoredGroup, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    let (pos, neg) = group.split()?;
    let r = &group.scores;
    let mut pairwise = 0.0;
    for &i in &pos {
        for &j in &neg {
            pairwise -= log_sigmoid(r[i] - r[j]);
        }
    }
    pairwise /= (pos.len() * neg.len()) as f64;
    Ok(pairwise + 0.5 * lambda * mean_square(r))
}

/// Analytic `dL/dr_k` for every score in the group.
pub fn bt_loss_gradient(group: &ScoredGroup, lambda: f64) -> Result<Vec<f64>> {
    check_lambda(lambda)?;
    let (pos, neg) = group.split()?;
    let r = &group.scores;
    let m = r.len() as f64;
    let scale = 1.0 / (pos.len() * neg.len()) as f64;
    let mut grad: Vec<f64> = r.iter().map(|&x| lambda * x / m).collect();
    for &i in &pos {
        for &j in &neg {
            // d/dr_i [-log sigmoid(r_i - r_j)] = -sigmoid(r_j - r_i)
            let w = scale * sigmoid(r[j] - r[i]);
            grad[i] -= w;
            grad[j] += w;
        }
    }
    Ok(grad)
}

/// Mean score of correct members minus mean score of incorrect members.
pub fn score_margin(group: &ScoredGroup) -> Result<f64> {
    let (pos, neg) = group.split()?;
    let mean = |idx: &[usize]| idx.iter().map(|&k| group.scores[k]).sum::<f64>() / idx.len() as f64;
    Ok(mean(&pos) - mean(&neg))
}

fn mean_square(r: &[f64]) -> f64 {
    r.iter().map(|x| x * x).sum::<f64>() / r.len() as f64
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda >= 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("lambda must be a nonnegative real, got {lambda}")))
    }
}

/// Finite-difference comparison for one group.
#[derive(Debug, Clone, Serialize)]
pub struct GradCheck {
    pub size: usize,
    pub lambda: f64,
    pub max_rel_error: f64,
}

/// Relative error floor; components smaller than this are compared absolutely.
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

/// Compares the analytic gradient with central differences of step `h`.
pub fn grad_check(group: &ScoredGroup, lambda: f64, h: f64) -> Result<GradCheck> {
    let analytic = bt_loss_gradient(group, lambda)?;
    let mut probe = group.clone();
    let mut worst: f64 = 0.0;
    for (k, &a) in analytic.iter().enumerate() {
        let x = group.scores[k];
        probe.scores[k] = x + h;
        let up = bt_loss(&probe, lambda)?;
        probe.scores[k] = x - h;
        let down = bt_loss(&probe, lambda)?;
        probe.scores[k] = x;
        let numeric = (up - down) / (2.0 * h);
        let denom = a.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR);
        worst = worst.max((a - numeric).abs() / denom);
    }
    Ok(GradCheck {
        size: group.len(),
        lambda,
        max_rel_error: worst,
    })
}

/// Random learnable groups: sizes 2..=16, scores uniform in [-4, 4],
/// lambda cycling through {0, 0.01, 1}.
pub fn random_groups(seed: u64, count: usize) -> Vec<(ScoredGroup, f64)> {
    const LAMBDAS: [f64; 3] = [0.0, 0.01, 1.0];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|k| {
            let size = rng.random_range(2..=16usize);
            let scores: Vec<f64> = (0..size).map(|_| rng.random_range(-4.0..=4.0)).collect();
            let mut labels: Vec<bool> = (0..size).map(|_| rng.random_bool(0.5)).collect();
            // force at least one of each label
            let a = rng.random_range(0..size);
            let b = (a + rng.random_range(1..size)) % size;
            labels[a] = true;
            labels[b] = false;
            (ScoredGroup { scores, labels }, LAMBDAS[k % LAMBDAS.len()])
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn g(scores: &[f64], labels: &[bool]) -> ScoredGroup {
        ScoredGroup::new(scores.to_vec(), labels.to_vec()).unwrap()
    }

    // Scalar oracle: ln(1 + e^{-x}) evaluated directly for moderate x.
    fn neg_log_sigmoid_naive(x: f64) -> f64 {
        (1.0 + (-x).exp()).ln()
    }

    #[test]
    fn filter_keeps_mixed_groups_only() {
        let groups = vec![
            g(&[1.0, 2.0, 3.0], &[true, true, true]),
            g(&[1.0, 2.0], &[false, false]),
            g(&[1.0, 2.0], &[true, false]),
        ];
        let kept = filter_learnable_groups(&groups);
        assert_eq!(kept, vec![groups[2].clone()]);
        assert!(filter_learnable_groups(&groups[..2]).is_empty());
    }

    #[test]
    fn loss_examples() {
        for c in [-3.0, 0.0, 0.25, 17.0] {
            assert_abs_diff_eq!(bt_loss(&g(&[c, c], &[true, false]), 0.0).unwrap(), 2f64.ln(), epsilon = 1e-12);
        }
        let l = bt_loss(&g(&[2.0, 0.0], &[true, false]), 0.0).unwrap();
        assert_abs_diff_eq!(l, neg_log_sigmoid_naive(2.0), epsilon = 1e-14);
        assert_abs_diff_eq!(l, 0.126928, epsilon = 1e-6);

        let l = bt_loss(&g(&[1.0, -1.0], &[true, false]), 1.0).unwrap();
        assert_abs_diff_eq!(l, neg_log_sigmoid_naive(2.0) + 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(l, 0.626928, epsilon = 1e-6);
    }

    #[test]
    fn loss_requires_both_labels() {
        assert_eq!(bt_loss(&g(&[1.0, 2.0], &[true, true]), 0.0), Err(Error::NoLearnableSignal));
        assert_eq!(bt_loss_gradient(&g(&[1.0], &[false]), 0.0), Err(Error::NoLearnableSignal));
        assert_eq!(score_margin(&g(&[1.0], &[false])), Err(Error::NoLearnableSignal));
    }

    #[test]
    fn gradient_examples() {
        let grad = bt_loss_gradient(&g(&[0.0, 0.0], &[true, false]), 0.0).unwrap();
        assert_abs_diff_eq!(grad[0], -0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(grad[1], 0.5, epsilon = 1e-15);

        let grad = bt_loss_gradient(&g(&[2.0, 0.0], &[true, false]), 0.0).unwrap();
        let s = 1.0 / (1.0 + 2f64.exp());
        assert_abs_diff_eq!(grad[0], -s, epsilon = 1e-15);
        assert_abs_diff_eq!(grad[1], s, epsilon = 1e-15);
        assert_abs_diff_eq!(grad[1], 0.119203, epsilon = 1e-6);
    }

    #[test]
    fn gradient_sum_identity() {
        for (group, lambda) in random_groups(3, 50) {
            let grad = bt_loss_gradient(&group, lambda).unwrap();
            let expect = lambda / group.len() as f64 * group.scores.iter().sum::<f64>();
            assert_abs_diff_eq!(grad.iter().sum::<f64>(), expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn margin_examples() {
        assert_abs_diff_eq!(score_margin(&g(&[1.0, 1.0, 0.0], &[true, true, false])).unwrap(), 1.0);
        assert_abs_diff_eq!(score_margin(&g(&[0.9, 0.2], &[true, false])).unwrap(), 0.7, epsilon = 1e-12);
        assert_abs_diff_eq!(score_margin(&g(&[1.9, 1.2], &[true, false])).unwrap(), 0.7, epsilon = 1e-12);
    }

    #[test]
    fn stable_log_sigmoid_extremes() {
        assert_eq!(log_sigmoid(800.0), 0.0);
        assert_abs_diff_eq!(log_sigmoid(-800.0), -800.0, epsilon = 1e-9);
        assert!(bt_loss(&g(&[-500.0, 500.0], &[true, false]), 0.0).unwrap().is_finite());
    }

    #[test]
    fn grad_check_small_suite() {
        for (group, lambda) in random_groups(11, 200) {
            let gc = grad_check(&group, lambda, 1e-5).unwrap();
            assert!(gc.max_rel_error < 1e-5, "{gc:?}");
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn group_strategy() -> impl Strategy<Value = ScoredGroup> {
            (2usize..12).prop_flat_map(|n| {
                (prop::collection::vec(-6.0f64..6.0, n), prop::collection::vec(any::<bool>(), n)).prop_map(
                    |(scores, mut labels)| {
                        labels[0] = true;
                        labels[1] = false;
                        ScoredGroup { scores, labels }
                    },
                )
            })
        }

        proptest! {
            #[test]
            fn pairwise_term_is_translation_invariant(group in group_strategy(), c in -50.0f64..50.0) {
                let shifted = ScoredGroup { scores: group.scores.iter().map(|x| x + c).collect(), labels: group.labels.clone() };
                let a = bt_loss(&group, 0.0).unwrap();
                let b = bt_loss(&shifted, 0.0).unwrap();
                prop_assert!((a - b).abs() <= 1e-10);
            }

            #[test]
            fn raising_a_correct_score_never_hurts(group in group_strategy(), bump in 0.0f64..5.0) {
                let k = group.labels.iter().position(|&l| l).unwrap();
                let mut raised = group.clone();
                raised.scores[k] += bump;
                prop_assert!(bt_loss(&raised, 0.0).unwrap() <= bt_loss(&group, 0.0).unwrap() + 1e-15);
            }

            #[test]
            fn loss_is_nonnegative(group in group_strategy(), lambda in 0.0f64..2.0) {
                prop_assert!(bt_loss(&group, lambda).unwrap() >= 0.0);
            }

            #[test]
            fn margin_is_affine_equivariant(group in group_strategy(), c in -10.0f64..10.0, s in 0.1f64..10.0) {
                let m = score_margin(&group).unwrap();
                let moved = ScoredGroup { scores: group.scores.iter().map(|x| s * x + c).collect(), labels: group.labels.clone() };
                prop_assert!((score_margin(&moved).unwrap() - s * m).abs() <= 1e-9 * (1.0 + s * m.abs()));
            }
        }
    }

    #[test]
    fn pairwise_term_vanishes_with_separation() {
        let l = bt_loss(&g(&[60.0, 61.0, -60.0], &[true, true, false]), 0.0).unwrap();
        assert!(l < 1e-25);
    }
}
