//! `verisel`: answer selection, cost accounting and budget-equalized evaluation
//! over line-delimited candidate records.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use verisel_core::cost::{token_count, FlopsBreakdown};
use verisel_core::evaluation::crossover_between;
use verisel_core::io::{curve_to_csv, ingest, to_json, write_records, Ingested};
use verisel_core::verifier_math::{grad_check, random_groups};
use verisel_core::{
    bootstrap_accuracy, bt_loss, bt_loss_gradient, budget_curve, flops_decode, flops_disc_verification,
    flops_generation, flops_prefill, generate_pool, pipeline_flops, score_margin, select, BetaParams, BudgetMode,
    CanonMode, CiMethod, CostSetup, EvalConfig, LatencyTable, Method, MethodKind, ModelConfig, Pipeline,
    PipelineMode, Problem, Sampling, ScoreTransform, ScoredGroup, SelectConfig, SynthSpec, TieBreak,
};

#[derive(Parser)]
#[command(name = "verisel", version, about = "Verifier-based answer selection and test-time compute accounting")]
struct Cli {
    /// Seed for slate resampling, seeded tie-breaking and simulation.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// How verifier logits are mapped before aggregation.
    #[arg(long, global = true, value_enum, default_value_t = TransformArg::Sigmoid)]
    score_transform: TransformArg,
    /// Answer canonicalization.
    #[arg(long, global = true, value_enum, default_value_t = CanonArg::Exact)]
    canon: CanonArg,
    /// Worker threads (default: all cores). Output does not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Bootstrap accuracy of one selection rule at one slate size.
    Evaluate(EvaluateArgs),
    /// Accuracy-versus-budget curves over a grid of slate sizes.
    Curve(CurveArgs),
    /// FLOPs breakdown for a single call or a whole record stream.
    Cost(CostArgs),
    /// Pairwise ranking loss, gradient and score margin per problem.
    Btloss(BtlossArgs),
    /// Writes a synthetic labeled, scored record stream.
    Simulate(SimulateArgs),
    /// Runs one selection rule on every full pool and prints the diagnostics.
    Select(SelectArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum TransformArg {
    Sigmoid,
    Raw,
}

#[derive(Clone, Copy, ValueEnum)]
enum CanonArg {
    Exact,
    Numeric,
}

#[derive(Clone, Copy, ValueEnum)]
enum TieArg {
    Deterministic,
    Seeded,
}

#[derive(Clone, Copy, ValueEnum)]
enum CiArg {
    Normal,
    Percentile,
}

#[derive(Clone, Copy, ValueEnum)]
enum SamplingArg {
    Random,
    Enumerate,
}

#[derive(Clone, Copy, ValueEnum)]
enum BudgetArg {
    Flops,
    Latency,
}

#[derive(Clone, Copy, ValueEnum, PartialEq)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum CostKind {
    Prefill,
    Decode,
    Generation,
    DiscVerify,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Sc,
    Disc,
    Gen,
}

#[derive(Args)]
struct MethodArgs {
    /// sc, bon, wsc, pv or gpv.
    #[arg(long, value_parser = parse_kind)]
    method: MethodKind,
    /// Penalty weight (PV default 0.5, GPV default 0.1).
    #[arg(long)]
    alpha: Option<f64>,
    /// Generative verdicts per candidate for GPV (default: all recorded).
    #[arg(long)]
    m: Option<usize>,
    #[arg(long, value_enum, default_value_t = TieArg::Deterministic)]
    tie_break: TieArg,
}

#[derive(Args)]
struct SamplingArgs {
    #[arg(long, default_value_t = 1000)]
    draws: usize,
    #[arg(long, default_value_t = 0.95)]
    ci_level: f64,
    #[arg(long, value_enum, default_value_t = CiArg::Normal)]
    ci_method: CiArg,
    #[arg(long, value_enum, default_value_t = SamplingArg::Random)]
    sampling: SamplingArg,
    /// Draw slates with replacement.
    #[arg(long)]
    replacement: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Record file, or `-` for standard input.
    #[arg(long, short)]
    input: PathBuf,
    #[command(flatten)]
    method: MethodArgs,
    /// Slate size.
    #[arg(long)]
    n: usize,
    #[command(flatten)]
    sampling: SamplingArgs,
    /// Omit the per-problem accuracies from the report.
    #[arg(long)]
    summary: bool,
}

#[derive(Args)]
struct CurveArgs {
    #[arg(long, short)]
    input: PathBuf,
    /// Comma-separated methods.
    #[arg(long, value_delimiter = ',', value_parser = parse_kind, default_value = "sc,bon,wsc,pv")]
    methods: Vec<MethodKind>,
    #[arg(long, value_delimiter = ',', required = true)]
    n_grid: Vec<usize>,
    /// Verification counts for GPV curves.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    m_grid: Vec<usize>,
    /// Penalty weight applied to PV and GPV (defaults per rule).
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, value_enum, default_value_t = BudgetArg::Flops)]
    budget: BudgetArg,
    /// Solver model config (default: bundled 32B).
    #[arg(long)]
    solver: Option<PathBuf>,
    /// Discriminative verifier config (default: bundled 1.5B).
    #[arg(long)]
    disc_verifier: Option<PathBuf>,
    /// Generative verifier config (default: bundled 32B).
    #[arg(long)]
    gen_verifier: Option<PathBuf>,
    /// Latency measurements (default: bundled H100 table).
    #[arg(long)]
    latency_table: Option<PathBuf>,
    /// Output tokens per generative verification when records lack them.
    #[arg(long)]
    verify_out_tokens: Option<i64>,
    #[arg(long, value_enum, default_value_t = TieArg::Deterministic)]
    tie_break: TieArg,
    #[command(flatten)]
    sampling: SamplingArgs,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Args)]
struct CostArgs {
    /// Model config file with d, m, L, V (default: bundled 32B).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Single call to cost; ignored when --input is given.
    #[arg(long, value_enum, default_value_t = CostKind::Generation)]
    kind: CostKind,
    #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
    t_in: i64,
    #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
    t_out: i64,
    /// Records whose token statistics are summed into a pipeline cost.
    #[arg(long, short)]
    input: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ModeArg::Sc)]
    mode: ModeArg,
    /// Verifier config (default: bundled 1.5B for disc, 32B for gen).
    #[arg(long)]
    verifier: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    m: usize,
    #[arg(long)]
    verify_out_tokens: Option<i64>,
}

#[derive(Args)]
struct BtlossArgs {
    #[arg(long, short)]
    input: Option<PathBuf>,
    #[arg(long, default_value_t = 0.01)]
    lambda: f64,
    /// Run the finite-difference check on random groups instead.
    #[arg(long)]
    grad_check: bool,
    #[arg(long, default_value_t = 1000)]
    groups: usize,
    #[arg(long, default_value_t = 1e-5)]
    tolerance: f64,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 200)]
    problems: usize,
    #[arg(long, default_value_t = 128)]
    pool_size: usize,
    #[arg(long, default_value_t = 0.5)]
    p_correct: f64,
    /// Distinct wrong answers per problem.
    #[arg(long, default_value_t = 3)]
    answer_space: usize,
    /// Beta(a,b) for correct candidates' scores.
    #[arg(long, value_parser = parse_beta, default_value = "8,2")]
    correct_beta: BetaParams,
    #[arg(long, value_parser = parse_beta, default_value = "2,8")]
    incorrect_beta: BetaParams,
    /// Generative verdicts per candidate.
    #[arg(long, default_value_t = 0)]
    gen_m: usize,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SelectArgs {
    #[arg(long, short)]
    input: PathBuf,
    #[command(flatten)]
    method: MethodArgs,
}

fn parse_kind(s: &str) -> Result<MethodKind, String> {
    s.parse().map_err(|e: verisel_core::Error| e.to_string())
}

fn parse_beta(s: &str) -> Result<BetaParams, String> {
    let (a, b) = s.split_once(',').ok_or("expected a,b")?;
    let p = |x: &str| x.trim().parse::<f64>().map_err(|e| e.to_string());
    Ok(BetaParams::new(p(a)?, p(b)?))
}

struct Global {
    seed: u64,
    transform: ScoreTransform,
    canon: CanonMode,
}

impl Global {
    fn tie(&self, t: TieArg) -> TieBreak {
        match t {
            TieArg::Deterministic => TieBreak::Deterministic,
            TieArg::Seeded => TieBreak::Seeded(self.seed),
        }
    }

    fn load(&self, path: &Path) -> Result<Vec<Problem>> {
        let Ingested {
            problems,
            stats,
            unknown_fields,
        } = if path == Path::new("-") {
            ingest(io::stdin().lock(), self.canon)
        } else {
            let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            ingest(BufReader::new(f), self.canon)
        }
        .with_context(|| format!("reading {}", path.display()))?;
        if !unknown_fields.is_empty() {
            log::warn!("ignored unknown fields: {unknown_fields:?}");
        }
        log::info!(
            "{} problems, {} candidates, {:.3} labeled",
            stats.problems,
            stats.candidates,
            stats.labeled_fraction
        );
        Ok(problems)
    }
}

fn gen_m_of(problems: &[Problem]) -> Result<usize> {
    match problems.first().and_then(Problem::gen_m) {
        Some(m) => Ok(m),
        None => bail!("GPV needs gen_scores in the records or an explicit --m"),
    }
}

fn build_method(args: &MethodArgs, problems: &[Problem]) -> Result<Method> {
    let m = match (args.method, args.m) {
        (MethodKind::Gpv, None) => gen_m_of(problems)?,
        (_, m) => m.unwrap_or(0),
    };
    Ok(Method::from_kind(args.method, args.alpha, m))
}

fn eval_config(g: &Global, method: Method, n: usize, s: &SamplingArgs, tie: TieArg) -> EvalConfig {
    EvalConfig {
        n,
        draws: s.draws,
        seed: g.seed,
        ci_level: s.ci_level,
        replacement: s.replacement,
        method,
        ci_method: match s.ci_method {
            CiArg::Normal => CiMethod::Normal,
            CiArg::Percentile => CiMethod::Percentile,
        },
        sampling: match s.sampling {
            SamplingArg::Random => Sampling::Random,
            SamplingArg::Enumerate => Sampling::Enumerate,
        },
        transform: g.transform,
        tie_break: g.tie(tie),
    }
}

fn model_or(path: &Option<PathBuf>, fallback: fn() -> ModelConfig) -> Result<ModelConfig> {
    match path {
        Some(p) => ModelConfig::load(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(fallback()),
    }
}

fn emit(out: &str) -> Result<()> {
    let mut w = io::stdout().lock();
    w.write_all(out.as_bytes())?;
    w.flush()?;
    Ok(())
}

fn evaluate(g: &Global, a: &EvaluateArgs) -> Result<()> {
    let problems = g.load(&a.input)?;
    let method = build_method(&a.method, &problems)?;
    let cfg = eval_config(g, method, a.n, &a.sampling, a.method.tie_break);
    let mut report = bootstrap_accuracy(&problems, &cfg)?;
    if a.summary {
        report.per_problem.clear();
    }
    emit(&to_json(&report)?)
}

#[derive(Serialize)]
struct Crossover {
    from: String,
    to: String,
    budget: Option<f64>,
}

#[derive(Serialize)]
struct CurveReport {
    points: Vec<verisel_core::BudgetPoint>,
    crossovers: Vec<Crossover>,
}

fn curve(g: &Global, a: &CurveArgs) -> Result<()> {
    let problems = g.load(&a.input)?;
    let solver = model_or(&a.solver, ModelConfig::qwen_32b)?;
    let disc = model_or(&a.disc_verifier, ModelConfig::qwen_1_5b)?;
    let genv = model_or(&a.gen_verifier, ModelConfig::qwen_32b)?;
    let latency = match &a.latency_table {
        Some(p) => LatencyTable::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => LatencyTable::bundled(),
    };
    let cost = CostSetup {
        budget: match a.budget {
            BudgetArg::Flops => BudgetMode::Flops,
            BudgetArg::Latency => BudgetMode::Latency,
        },
        solver: Some(&solver),
        disc_verifier: Some(&disc),
        gen_verifier: Some(&genv),
        latency: Some(&latency),
        verify_out_tokens: a.verify_out_tokens.map(token_count).transpose()?,
    };
    let methods: Vec<Method> = a
        .methods
        .iter()
        .map(|&k| Method::from_kind(k, a.alpha, a.m_grid.first().copied().unwrap_or(1)))
        .collect();
    let first_n = a.n_grid[0];
    let base = eval_config(g, Method::Sc, first_n, &a.sampling, a.tie_break);
    let points = budget_curve(&problems, &methods, &a.n_grid, &a.m_grid, &cost, &base)?;
    match a.format {
        Format::Csv => emit(&curve_to_csv(&points)),
        Format::Json => {
            // crossover of every other curve against the SC baseline, when present
            let mut curves: Vec<Vec<verisel_core::BudgetPoint>> = Vec::new();
            for p in &points {
                match curves.last_mut() {
                    Some(c) if c[0].method == p.method && c[0].m == p.m => c.push(p.clone()),
                    _ => curves.push(vec![p.clone()]),
                }
            }
            let label = |c: &[verisel_core::BudgetPoint]| match c[0].method {
                MethodKind::Gpv => format!("GPV@M={}", c[0].m),
                k => k.to_string(),
            };
            let mut crossovers = Vec::new();
            if let Some(sc) = curves.iter().find(|c| c[0].method == MethodKind::Sc) {
                for c in curves.iter().filter(|c| c[0].method != MethodKind::Sc) {
                    if sc.len() >= 2 && c.len() >= 2 {
                        crossovers.push(Crossover {
                            from: label(sc),
                            to: label(c),
                            budget: crossover_between(sc, c)?,
                        });
                    }
                }
            }
            emit(&to_json(&CurveReport { points, crossovers })?)
        }
    }
}

#[derive(Serialize)]
struct CostReport {
    mode: String,
    candidates: usize,
    flops: FlopsBreakdown,
}

fn cost(a: &CostArgs) -> Result<()> {
    let cfg = model_or(&a.config, ModelConfig::qwen_32b)?;
    let Some(input) = &a.input else {
        let (t_in, t_out) = (token_count(a.t_in)?, token_count(a.t_out)?);
        let flops = match a.kind {
            CostKind::Prefill => flops_prefill(&cfg, t_in),
            CostKind::Decode => flops_decode(&cfg, t_in, t_out, cfg.vocab),
            CostKind::Generation => flops_generation(&cfg, t_in, t_out),
            CostKind::DiscVerify => flops_disc_verification(&cfg, t_in),
        };
        return emit(&to_json(&flops)?);
    };
    let ingested = if input == Path::new("-") {
        ingest(io::stdin().lock(), CanonMode::Exact)?
    } else {
        ingest(BufReader::new(File::open(input)?), CanonMode::Exact)?
    };
    let stats: Vec<_> = ingested
        .problems
        .iter()
        .flat_map(|p| p.candidates.iter().map(|c| c.token_stats))
        .collect();
    let mode = match a.mode {
        ModeArg::Sc => PipelineMode::Sc,
        ModeArg::Disc => PipelineMode::Disc,
        ModeArg::Gen => PipelineMode::Gen,
    };
    let verifier = match mode {
        PipelineMode::Sc => None,
        PipelineMode::Disc => Some(model_or(&a.verifier, ModelConfig::qwen_1_5b)?),
        PipelineMode::Gen => Some(model_or(&a.verifier, ModelConfig::qwen_32b)?),
    };
    let pipe = Pipeline {
        solver: &cfg,
        verifier: verifier.as_ref(),
        mode,
        m: a.m,
        verify_out_tokens: a.verify_out_tokens.map(token_count).transpose()?,
    };
    let flops = pipeline_flops(&pipe, &stats)?;
    emit(&to_json(&CostReport {
        mode: mode.to_string(),
        candidates: stats.len(),
        flops,
    })?)
}

#[derive(Serialize)]
struct GroupLoss {
    problem_id: String,
    size: usize,
    loss: f64,
    margin: f64,
    gradient: Vec<f64>,
}

#[derive(Serialize)]
struct BtReport {
    lambda: f64,
    groups: usize,
    skipped: usize,
    mean_loss: f64,
    mean_margin: f64,
    per_group: Vec<GroupLoss>,
}

#[derive(Serialize)]
struct GradReport {
    groups: usize,
    tolerance: f64,
    max_rel_error: f64,
    failures: usize,
}

fn btloss(g: &Global, a: &BtlossArgs) -> Result<()> {
    if a.grad_check {
        let mut worst: f64 = 0.0;
        let mut failures = 0;
        for (group, lambda) in random_groups(g.seed, a.groups) {
            let r = grad_check(&group, lambda, 1e-5)?.max_rel_error;
            worst = worst.max(r);
            failures += usize::from(r > a.tolerance);
        }
        emit(&to_json(&GradReport {
            groups: a.groups,
            tolerance: a.tolerance,
            max_rel_error: worst,
            failures,
        })?)?;
        if failures > 0 {
            bail!("{failures} groups exceed relative error {}", a.tolerance);
        }
        return Ok(());
    }
    let Some(input) = &a.input else {
        bail!("--input is required unless --grad-check is given");
    };
    let problems = g.load(input)?;
    let mut per_group = Vec::new();
    let mut skipped = 0;
    for p in &problems {
        if !p.is_learnable() {
            skipped += 1;
            continue;
        }
        let group = ScoredGroup::from_problem(p)?;
        per_group.push(GroupLoss {
            problem_id: p.problem_id.clone(),
            size: group.len(),
            loss: bt_loss(&group, a.lambda)?,
            margin: score_margin(&group)?,
            gradient: bt_loss_gradient(&group, a.lambda)?,
        });
    }
    if per_group.is_empty() {
        return Err(verisel_core::Error::NoLearnableSignal.into());
    }
    let k = per_group.len() as f64;
    emit(&to_json(&BtReport {
        lambda: a.lambda,
        groups: per_group.len(),
        skipped,
        mean_loss: per_group.iter().map(|x| x.loss).sum::<f64>() / k,
        mean_margin: per_group.iter().map(|x| x.margin).sum::<f64>() / k,
        per_group,
    })?)
}

fn simulate(g: &Global, a: &SimulateArgs) -> Result<()> {
    let spec = SynthSpec {
        seed: g.seed,
        n_problems: a.problems,
        pool_size: a.pool_size,
        p_correct: a.p_correct,
        answer_space: a.answer_space,
        correct_dist: a.correct_beta,
        incorrect_dist: a.incorrect_beta,
        gen_m: a.gen_m,
        ..SynthSpec::default()
    };
    let problems = generate_pool(&spec)?;
    match &a.out {
        Some(p) => {
            let f = File::create(p).with_context(|| format!("creating {}", p.display()))?;
            let mut w = BufWriter::new(f);
            write_records(&problems, &mut w)?;
            w.flush()?;
        }
        None => {
            let mut w = BufWriter::new(io::stdout().lock());
            write_records(&problems, &mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct PoolSelection {
    problem_id: String,
    correct: Option<bool>,
    #[serde(flatten)]
    result: verisel_core::SelectionResult,
}

fn select_cmd(g: &Global, a: &SelectArgs) -> Result<()> {
    let problems = g.load(&a.input)?;
    let method = build_method(&a.method, &problems)?;
    let cfg = SelectConfig {
        transform: g.transform,
        tie_break: g.tie(a.method.tie_break),
    };
    let mut out = Vec::with_capacity(problems.len());
    for p in &problems {
        let result = select(method, &p.candidates, &cfg).with_context(|| format!("problem {}", p.problem_id))?;
        let correct = p
            .candidates
            .iter()
            .find(|c| c.answer_key == result.chosen_answer)
            .and_then(|c| c.correct);
        out.push(PoolSelection {
            problem_id: p.problem_id.clone(),
            correct,
            result,
        });
    }
    emit(&to_json(&out)?)
}

fn run(cli: Cli) -> Result<()> {
    let g = Global {
        seed: cli.seed,
        transform: match cli.score_transform {
            TransformArg::Sigmoid => ScoreTransform::Sigmoid,
            TransformArg::Raw => ScoreTransform::Raw,
        },
        canon: match cli.canon {
            CanonArg::Exact => CanonMode::Exact,
            CanonArg::Numeric => CanonMode::Numeric,
        },
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cli.threads {
        if t == 0 {
            bail!("--threads must be >= 1");
        }
        pool = pool.num_threads(t);
    }
    let pool = pool.build()?;
    pool.install(|| match &cli.command {
        Command::Evaluate(a) => evaluate(&g, a),
        Command::Curve(a) => curve(&g, a),
        Command::Cost(a) => cost(a),
        Command::Btloss(a) => btloss(&g, a),
        Command::Simulate(a) => simulate(&g, a),
        Command::Select(a) => select_cmd(&g, a),
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
