//! Answer selection over pools of verifier-scored candidate solutions, inference
//! cost accounting, and budget-equalized evaluation of test-time scaling.
//!
//! The five selection rules are self-consistency ([`select_sc`]), best-of-N
//! ([`select_bon`]), weighted self-consistency ([`select_wsc`]), pessimistic
//! verification ([`select_pv`]) and its generative variant ([`select_gpv`]).

pub mod cost;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod model;
pub mod selection;
pub mod synth;
pub mod verifier_math;

pub use cost::{
    flops_decode, flops_disc_verification, flops_generation, flops_prefill, latency_lookup, pipeline_flops,
    FlopsBreakdown, LatencyRole, LatencyTable, ModelConfig, Pipeline, PipelineMode,
};
pub use error::{Error, Result};
pub use evaluation::{
    bootstrap_accuracy, budget_curve, crossover_threshold, pass_at_n, BootstrapReport, BudgetMode, BudgetPoint,
    CiMethod, CostSetup, EvalConfig, Sampling,
};
pub use model::{
    canonicalize_answer, cluster_by_answer, AnswerCluster, Candidate, CanonMode, Problem, ScoreTransform, TokenStats,
    NO_ANSWER,
};
pub use selection::{
    select, select_bon, select_gpv, select_pv, select_sc, select_wsc, Method, MethodKind, SelectConfig,
    SelectionResult, TieBreak,
};
pub use synth::{generate_pool, BetaParams, SynthSpec};
pub use verifier_math::{bt_loss, bt_loss_gradient, filter_learnable_groups, score_margin, ScoredGroup};
