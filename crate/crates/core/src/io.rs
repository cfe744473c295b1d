//! Line-delimited candidate records and report emission.
//!
//! One JSON object per line, one candidate per object:
//!
//! ```text
//! {"problem_id":"p1","candidate_id":"0","answer_raw":"42","correct":true,
//!  "disc_score":1.3,"gen_scores":[0.2,0.9],"prompt_tokens":120,
//!  "output_tokens":9000,"solution_tokens":700,"reasoning_budget":null,
//!  "verify_out_tokens":6000}
//! ```
//!
//! Only `problem_id`, `candidate_id` and `answer_raw` are required. A problem's
//! candidates may be contiguous or interleaved with other problems.

use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::evaluation::BudgetPoint;
use crate::model::{canonicalize_answer, Candidate, CanonMode, Problem, TokenStats};

const KNOWN_FIELDS: &[&str] = &[
    "problem_id",
    "candidate_id",
    "answer_raw",
    "answer",
    "correct",
    "disc_score",
    "gen_scores",
    "prompt_tokens",
    "output_tokens",
    "solution_tokens",
    "reasoning_budget",
    "verify_out_tokens",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub problem_id: String,
    #[serde(deserialize_with = "id_string")]
    pub candidate_id: String,
    #[serde(alias = "answer", default)]
    pub answer_raw: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disc_score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gen_scores: Option<Vec<f64>>,
    #[serde(default)]
    pub prompt_tokens: u64,
    #[serde(default)]
    pub output_tokens: u64,
    #[serde(default)]
    pub solution_tokens: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reasoning_budget: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify_out_tokens: Option<u64>,
}

fn id_string<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<String, D::Error> {
    match Value::deserialize(d)? {
        Value::String(s) => Ok(s),
        Value::Number(n) => Ok(n.to_string()),
        other => Err(serde::de::Error::custom(format!("candidate_id must be a string or integer, got {other}"))),
    }
}

impl Record {
    pub fn from_candidate(problem_id: &str, c: &Candidate) -> Self {
        let t = &c.token_stats;
        Record {
            problem_id: problem_id.to_string(),
            candidate_id: c.candidate_id.clone(),
            answer_raw: c.answer_raw.clone(),
            correct: c.correct,
            disc_score: c.disc_score,
            gen_scores: c.gen_scores.clone(),
            prompt_tokens: t.prompt_tokens,
            output_tokens: t.output_tokens,
            solution_tokens: t.solution_tokens,
            reasoning_budget: t.reasoning_budget,
            verify_out_tokens: t.verify_out_tokens,
        }
    }

    pub fn into_candidate(self, mode: CanonMode) -> Candidate {
        Candidate {
            answer_key: canonicalize_answer(&self.answer_raw, mode),
            candidate_id: self.candidate_id,
            answer_raw: self.answer_raw,
            correct: self.correct,
            disc_score: self.disc_score,
            gen_scores: self.gen_scores,
            token_stats: TokenStats {
                prompt_tokens: self.prompt_tokens,
                output_tokens: self.output_tokens,
                solution_tokens: self.solution_tokens,
                reasoning_budget: self.reasoning_budget,
                verify_out_tokens: self.verify_out_tokens,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IngestStats {
    pub problems: usize,
    pub candidates: usize,
    pub labeled_fraction: f64,
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub problems: Vec<Problem>,
    pub stats: IngestStats,
    /// Field names seen in the input that the format does not define.
    pub unknown_fields: BTreeSet<String>,
}

/// Reads and validates a record stream.
pub fn ingest<R: BufRead>(reader: R, mode: CanonMode) -> Result<Ingested> {
    let mut order: Vec<(String, Vec<Candidate>)> = Vec::new();
    let mut slot: HashMap<String, usize> = HashMap::new();
    let mut unknown_fields = BTreeSet::new();

    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| Error::MalformedLine { line: lineno, message };
        let value: Value = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        let Value::Object(map) = &value else {
            return Err(malformed("expected a JSON object".into()));
        };
        for key in map.keys() {
            if !KNOWN_FIELDS.contains(&key.as_str()) && unknown_fields.insert(key.clone()) {
                log::warn!("line {lineno}: ignoring unknown field {key:?}");
            }
        }
        let rec: Record = serde_json::from_value(value).map_err(|e| malformed(e.to_string()))?;
        let i = *slot.entry(rec.problem_id.clone()).or_insert_with(|| {
            order.push((rec.problem_id.clone(), Vec::new()));
            order.len() - 1
        });
        order[i].1.push(rec.into_candidate(mode));
    }

    if order.is_empty() {
        return Err(Error::NoProblems);
    }
    let problems = order
        .into_iter()
        .map(|(id, cands)| Problem::new(id, cands))
        .collect::<Result<Vec<_>>>()?;
    let candidates: usize = problems.iter().map(Problem::len).sum();
    let labeled: usize = problems.iter().filter(|p| p.is_labeled()).map(Problem::len).sum();
    Ok(Ingested {
        stats: IngestStats {
            problems: problems.len(),
            candidates,
            labeled_fraction: labeled as f64 / candidates as f64,
        },
        problems,
        unknown_fields,
    })
}

pub fn ingest_path(path: &std::path::Path, mode: CanonMode) -> Result<Ingested> {
    let file = std::fs::File::open(path).map_err(|e| Error::MissingInput(format!("{}: {e}", path.display())))?;
    ingest(std::io::BufReader::new(file), mode)
}

/// Writes problems in the record format, one candidate per line.
pub fn write_records<W: Write>(problems: &[Problem], mut w: W) -> Result<()> {
    for p in problems {
        for c in &p.candidates {
            let line = serde_json::to_string(&Record::from_candidate(&p.problem_id, c))
                .map_err(|e| Error::InvalidConfig(e.to_string()))?;
            writeln!(w, "{line}")?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Reports

/// Rounds to six significant digits.
pub fn round_sig(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.5e}").parse().unwrap_or(x)
}

/// Six significant digits, exponent notation outside [1e-4, 1e15).
pub fn fmt_num(x: f64) -> String {
    let r = round_sig(x);
    if r != 0.0 && (r.abs() >= 1e15 || r.abs() < 1e-4) {
        format!("{r:e}")
    } else {
        format!("{r}")
    }
}

fn round_value(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => n
            .as_f64()
            .and_then(|x| serde_json::Number::from_f64(round_sig(x)))
            .map_or(Value::Null, Value::Number),
        Value::Array(a) => Value::Array(a.into_iter().map(round_value).collect()),
        Value::Object(m) => Value::Object(m.into_iter().map(|(k, v)| (k, round_value(v))).collect()),
        other => other,
    }
}

/// Pretty JSON with struct field order preserved and reals at six significant digits.
pub fn to_json<T: Serialize>(report: &T) -> Result<String> {
    let v = serde_json::to_value(report).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut s = serde_json::to_string_pretty(&round_value(v)).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub const CURVE_CSV_HEADER: &str = "method,N,M,budget,accuracy,ci_low,ci_high";

pub fn curve_to_csv(points: &[BudgetPoint]) -> String {
    let mut out = String::from(CURVE_CSV_HEADER);
    out.push('\n');
    for p in points {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            p.method,
            p.n,
            p.m,
            fmt_num(p.budget),
            fmt_num(p.accuracy),
            fmt_num(p.ci_low),
            fmt_num(p.ci_high)
        ));
    }
    out
}
