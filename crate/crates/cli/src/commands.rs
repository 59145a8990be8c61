//! Subcommand implementations. Each returns a [`Report`] holding both the
//! JSON and the CSV rendering.

use gwspeed::conductance::{sample_beta, DEFAULT_VISIT_BUDGET};
use gwspeed::envlab::{
    empirical_degree_law, green_sum_check, lemma21_stat_check, lemma31_sweep, lemma43_sweep, predicted_degree_law,
    verify_prop32, EnvError, DEFAULT_SHAPE_BUDGET,
};
use gwspeed::speed::{
    speed_formula, speed_srw_closed, speed_walk_all, Method, SampleConfig, SpeedError, SpeedEstimate, WalkConfig,
};
use gwspeed::stats::mean_stderr;
use gwspeed::{OffspringLaw, RegimeError, Seed};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Command, RunConfig};

/// Everything that ends a run with exit code 2.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Regime(RegimeError),
    Failed(String),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Regime(e) => e.kind(),
            CliError::Failed(_) => "failed",
        }
    }

    pub fn message(&self) -> String {
        match self {
            CliError::Usage(m) | CliError::Failed(m) => m.clone(),
            CliError::Regime(e) => e.to_string(),
        }
    }
}

impl From<SpeedError> for CliError {
    fn from(e: SpeedError) -> Self {
        match e {
            SpeedError::Regime(r) => CliError::Regime(r),
            other => CliError::Failed(other.to_string()),
        }
    }
}

impl From<EnvError> for CliError {
    fn from(e: EnvError) -> Self {
        match e {
            EnvError::Speed(s) => s.into(),
            other => CliError::Failed(other.to_string()),
        }
    }
}

pub struct Report {
    pub json: Value,
    pub csv: String,
    /// False when a verification check failed.
    pub passed: bool,
}

pub fn run(cfg: &RunConfig) -> Result<Report, CliError> {
    match cfg.command {
        Command::Speed => speed(cfg),
        Command::Beta => beta(cfg),
        Command::Verify => verify(cfg),
        Command::Envdist => envdist(cfg),
    }
}

fn echo(cfg: &RunConfig) -> Value {
    serde_json::to_value(cfg).expect("config serializes")
}

fn walk_config(cfg: &RunConfig) -> WalkConfig {
    let mut w = WalkConfig::new(cfg.steps, cfg.replicas);
    w.tail_buffer = cfg.tail_buffer;
    w
}

fn sample_config(cfg: &RunConfig) -> SampleConfig {
    let mut s = SampleConfig::new(cfg.samples, cfg.beta_tol);
    s.node_budget = cfg.budget.unwrap_or(DEFAULT_VISIT_BUDGET);
    s
}

fn speed(cfg: &RunConfig) -> Result<Report, CliError> {
    let law = cfg.law();
    let lambda = cfg.lambda();
    let seed = Seed::new(cfg.seed);
    law.validate_regime(lambda).map_err(CliError::Regime)?;
    let method = cfg.method.as_deref().unwrap_or("all");
    let mut estimates: Vec<SpeedEstimate> = Vec::new();
    if method == "formula" || method == "all" {
        estimates.push(speed_formula(&law, lambda, &sample_config(cfg), seed.derive("formula"))?);
    }
    if matches!(method, "empirical" | "regen" | "drift" | "all") {
        let walks = speed_walk_all(&law, lambda, &walk_config(cfg), seed.derive("walks"))?;
        estimates.extend(walks.into_iter().filter(|e| method == "all" || e.method.name() == method));
    }
    if method == "closed" {
        if lambda != 1.0 {
            return Err(CliError::Usage("--method closed: only defined for --lambda 1".into()));
        }
        let value = speed_srw_closed(&law)?;
        estimates.push(SpeedEstimate {
            method: Method::Closed,
            value,
            stderr: 0.0,
            n_effective: 0,
            rejected_replicas: 0,
        });
    }

    let config_echo = echo(cfg);
    let items: Vec<Value> = estimates
        .iter()
        .map(|e| {
            json!({
                "method": e.method,
                "value": e.value,
                "stderr": e.stderr,
                "n_effective": e.n_effective,
                "rejected_replicas": e.rejected_replicas,
                "config_echo": config_echo,
            })
        })
        .collect();
    let json = if items.len() == 1 {
        items.into_iter().next().unwrap()
    } else {
        Value::Array(items)
    };
    let mut csv = String::from("method,value,stderr,n_effective,rejected_replicas\n");
    for e in &estimates {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            e.method.name(),
            e.value,
            e.stderr,
            e.n_effective,
            e.rejected_replicas
        ));
    }
    Ok(Report { json, csv, passed: true })
}

const HISTOGRAM_BINS: usize = 20;

#[derive(Serialize)]
struct Bin {
    lo: f64,
    hi: f64,
    count: usize,
}

/// Conductances exist for every supercritical law below `λ = m`; the
/// zero-speed range is allowed here.
fn check_beta_regime(law: &OffspringLaw, lambda: f64) -> Result<(), RegimeError> {
    match law.validate_regime(lambda) {
        Ok(_) | Err(RegimeError::ZeroSpeed { .. }) => Ok(()),
        Err(e) => Err(e),
    }
}

fn beta(cfg: &RunConfig) -> Result<Report, CliError> {
    let law = cfg.law();
    let lambda = cfg.lambda();
    check_beta_regime(&law, lambda).map_err(CliError::Regime)?;
    if cfg.samples == 0 {
        return Err(CliError::Usage("--samples: must be at least 1".into()));
    }
    let seed = Seed::new(cfg.seed).derive("beta");
    let budget = cfg.budget.unwrap_or(DEFAULT_VISIT_BUDGET);
    let values: Vec<f64> = (0..cfg.samples as u64)
        .into_par_iter()
        .map(|i| sample_beta(&law, lambda, cfg.beta_tol, seed.index(i), budget))
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Failed(e.to_string()))?;
    let (mean, stderr) = mean_stderr(&values);
    let q_hat = values.iter().filter(|&&b| b == 0.0).count() as f64 / values.len() as f64;
    let width = 1.0 / HISTOGRAM_BINS as f64;
    let mut counts = [0usize; HISTOGRAM_BINS];
    for &b in &values {
        counts[((b / width) as usize).min(HISTOGRAM_BINS - 1)] += 1;
    }
    let histogram: Vec<Bin> = counts
        .iter()
        .enumerate()
        .map(|(i, &count)| Bin {
            lo: i as f64 * width,
            hi: (i + 1) as f64 * width,
            count,
        })
        .collect();
    let mut csv = String::from("lo,hi,count\n");
    for b in &histogram {
        csv.push_str(&format!("{},{},{}\n", b.lo, b.hi, b.count));
    }
    let json = json!({
        "law": law.to_string(),
        "lambda": lambda,
        "samples": values.len(),
        "mean": mean,
        "stderr": stderr,
        "q_hat": q_hat,
        "histogram": histogram,
        "config_echo": echo(cfg),
    });
    Ok(Report { json, csv, passed: true })
}

#[derive(Serialize)]
struct CheckResult {
    name: String,
    passed: bool,
    statistic: f64,
    threshold: f64,
    detail: Value,
}

impl CheckResult {
    /// Passes when `statistic < threshold`.
    fn below(name: impl Into<String>, statistic: f64, threshold: f64, detail: impl Serialize) -> Self {
        CheckResult {
            name: name.into(),
            passed: statistic < threshold,
            statistic,
            threshold,
            detail: serde_json::to_value(detail).expect("detail serializes"),
        }
    }

    /// Passes when `statistic > threshold`.
    fn above(name: impl Into<String>, statistic: f64, threshold: f64, detail: impl Serialize) -> Self {
        CheckResult {
            passed: statistic > threshold,
            ..CheckResult::below(name, statistic, threshold, detail)
        }
    }
}

const SWEEP_INSTANCES: usize = 1000;
const LEAFY_LAW: &str = "0:0.25,2:0.75";
const LEMMA21_WORDS: [&str; 2] = ["11", "21"];
const LEMMA21_ALPHA: f64 = 1e-3;

fn verify(cfg: &RunConfig) -> Result<Report, CliError> {
    let check = cfg.check.as_deref().unwrap_or("all");
    let want = |name: &str| check == "all" || check == name;
    let seed = Seed::new(cfg.seed);
    let shape_budget = cfg.budget.unwrap_or(DEFAULT_SHAPE_BUDGET);
    let leafy: OffspringLaw = LEAFY_LAW.parse().expect("valid literal");
    let mut results = Vec::new();

    if want("lemma31") {
        let r = lemma31_sweep(SWEEP_INSTANCES, 5, 30, seed.derive("lemma31"))?;
        results.push(CheckResult::below("lemma31", r.max_residual, 1e-12, r));
    }
    if want("lemma43") {
        let r = lemma43_sweep(SWEEP_INSTANCES, 5, 30, seed.derive("lemma43"))?;
        results.push(CheckResult::below("lemma43", r.max_residual, 1e-12, r));
    }
    if want("lemma21") {
        // Bonferroni over the words tested
        let alpha = LEMMA21_ALPHA / LEMMA21_WORDS.len() as f64;
        for x in LEMMA21_WORDS {
            let word = x.parse().expect("valid word");
            let r = lemma21_stat_check(&leafy, &word, 3, cfg.samples, seed.derive("lemma21").derive(x), shape_budget)?;
            results.push(CheckResult::above(format!("lemma21[x={x}]"), r.p_value, alpha, r));
        }
    }
    if want("prop32") {
        for law in ["2:1", LEAFY_LAW] {
            let l: OffspringLaw = law.parse().expect("valid literal");
            // (k, horizon, outcome depth); the longer horizons see backtracking
            for (k, len, depth) in [(1, 4, 2), (2, 4, 2), (3, 5, 1), (4, 5, 1)] {
                for lambda in [0.8, 1.5] {
                    let r = verify_prop32(&l, lambda, k, len, depth, shape_budget)?;
                    results.push(CheckResult::below(
                        format!("prop32[law={law},k={k},L={len},lambda={lambda}]"),
                        r.residual,
                        1e-10,
                        r,
                    ));
                }
            }
        }
    }
    if want("green") {
        for (a, b) in [(2, 2), (3, 3), (2, 3)] {
            let g = green_sum_check(a, b, 1.0, cfg.steps, cfg.replicas, seed.derive("green").index(u64::from(10 * a + b)))?;
            let tol = 0.05f64.max(3.0 * g.stderr);
            results.push(CheckResult::below(format!("green[{a},{b}]"), (g.mc - g.closed).abs(), tol, g));
        }
    }
    if want("envdist") {
        let (tv, detail) = degree_laws(&leafy, 0.8, cfg, seed)?;
        results.push(CheckResult::below("envdist", tv, 0.02, detail));
    }

    let passed = results.iter().all(|r| r.passed);
    let mut csv = String::from("name,passed,statistic,threshold\n");
    for r in &results {
        csv.push_str(&format!("\"{}\",{},{},{}\n", r.name, r.passed, r.statistic, r.threshold));
    }
    let json = json!({
        "passed": passed,
        "checks": results,
        "config_echo": echo(cfg),
    });
    Ok(Report { json, csv, passed })
}

fn degree_laws(law: &OffspringLaw, lambda: f64, cfg: &RunConfig, seed: Seed) -> Result<(f64, Value), CliError> {
    let extinction_budget = WalkConfig::new(1, 1).extinction_budget;
    let emp = empirical_degree_law(law, lambda, cfg.steps, cfg.replicas, extinction_budget, seed.derive("empirical"))?;
    let pred = predicted_degree_law(law, lambda, &sample_config(cfg), seed.derive("predicted"))?;
    let tv = emp.total_variation(&pred);
    let detail = json!({
        "law": law.to_string(),
        "lambda": lambda,
        "empirical": emp,
        "predicted": pred,
        "tv": tv,
    });
    Ok((tv, detail))
}

fn envdist(cfg: &RunConfig) -> Result<Report, CliError> {
    let law = cfg.law();
    let lambda = cfg.lambda();
    law.validate_regime(lambda).map_err(CliError::Regime)?;
    let (_, mut json) = degree_laws(&law, lambda, cfg, Seed::new(cfg.seed))?;
    let emp = json["empirical"]["pmf"].as_array().cloned().unwrap_or_default();
    let pred = json["predicted"]["pmf"].as_array().cloned().unwrap_or_default();
    let mut csv = String::from("k,empirical,predicted\n");
    for k in 0..emp.len().max(pred.len()) {
        let e = emp.get(k).and_then(Value::as_f64).unwrap_or(0.0);
        let p = pred.get(k).and_then(Value::as_f64).unwrap_or(0.0);
        csv.push_str(&format!("{k},{e},{p}\n"));
    }
    json["config_echo"] = echo(cfg);
    Ok(Report { json, csv, passed: true })
}
