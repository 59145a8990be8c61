//! Command-line flags, the flat `key=value` config file, and their merge
//! into a single [`RunConfig`].

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use gwspeed::OffspringLaw;
use serde::Serialize;

pub const SEED_ENV: &str = "GWSPEED_SEED";

#[derive(Debug, Parser)]
#[command(name = "gwspeed", version, about = "Speed of biased random walks on Galton-Watson trees")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub opts: Opts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Estimate the speed of the walk.
    Speed,
    /// Sample conductances of Galton-Watson trees.
    Beta,
    /// Run the exact and statistical identity checks.
    Verify,
    /// Compare the simulated and predicted degree law at the walker.
    Envdist,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Opts {
    /// Offspring law literal, e.g. `0:0.25,2:0.75`.
    #[arg(long, global = true)]
    pub law: Option<String>,
    /// Bias toward the root.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub lambda: Option<f64>,
    /// formula | empirical | regen | drift | closed | all
    #[arg(long, global = true)]
    pub method: Option<String>,
    /// lemma31 | lemma43 | lemma21 | prop32 | green | envdist | all
    #[arg(long, global = true)]
    pub check: Option<String>,
    /// Walk horizon.
    #[arg(long, global = true)]
    pub steps: Option<usize>,
    #[arg(long, global = true)]
    pub replicas: Option<usize>,
    /// Conductance or tree samples.
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    #[arg(long = "beta-tol", global = true)]
    pub beta_tol: Option<f64>,
    /// Master seed; defaults to $GWSPEED_SEED, then 0.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// json | csv
    #[arg(long, global = true)]
    pub format: Option<String>,
    /// Worker threads; output does not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Flat `key=value` file with the same keys as the flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Node or enumeration budget.
    #[arg(long, global = true)]
    pub budget: Option<usize>,
    /// Steps before the horizon in which regenerations are censored.
    #[arg(long = "tail-buffer", global = true)]
    pub tail_buffer: Option<usize>,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

/// Everything a run depends on. Threads, format and output path do not
/// change the numbers and are left out of the echo.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: Command,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub law: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub check: Option<String>,
    pub steps: usize,
    pub replicas: usize,
    pub samples: usize,
    pub beta_tol: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tail_buffer: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budget: Option<usize>,
    #[serde(skip)]
    pub format: Format,
    #[serde(skip)]
    pub threads: Option<usize>,
    #[serde(skip)]
    pub output: Option<PathBuf>,
}

pub const METHODS: [&str; 6] = ["formula", "empirical", "regen", "drift", "closed", "all"];
pub const CHECKS: [&str; 7] = ["lemma31", "lemma43", "lemma21", "prop32", "green", "envdist", "all"];

struct Defaults {
    steps: usize,
    replicas: usize,
    samples: usize,
}

fn defaults(cmd: Command) -> Defaults {
    match cmd {
        Command::Speed => Defaults {
            steps: 100_000,
            replicas: 200,
            samples: 20_000,
        },
        Command::Beta => Defaults {
            steps: 0,
            replicas: 0,
            samples: 10_000,
        },
        Command::Verify | Command::Envdist => Defaults {
            steps: 10_000,
            replicas: 10_000,
            samples: 100_000,
        },
    }
}

pub const DEFAULT_BETA_TOL: f64 = 5e-3;

/// Parses a flat config file: one `key=value` per line, `#` comments.
pub fn read_config_file(path: &PathBuf) -> Result<Opts, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("--config: cannot read {}: {e}", path.display()))?;
    parse_config_text(&text)
}

fn parse_field<T: FromStr>(key: &str, value: &str) -> Result<Option<T>, String> {
    value
        .parse()
        .map(Some)
        .map_err(|_| format!("config key `{key}`: invalid value `{value}`"))
}

pub fn parse_config_text(text: &str) -> Result<Opts, String> {
    let mut map = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("config line {}: expected key=value", n + 1))?;
        map.insert(k.trim().replace('_', "-"), v.trim().to_string());
    }
    let mut o = Opts::default();
    for (k, v) in &map {
        match k.as_str() {
            "law" => o.law = Some(v.clone()),
            "lambda" => o.lambda = parse_field(k, v)?,
            "method" => o.method = Some(v.clone()),
            "check" => o.check = Some(v.clone()),
            "steps" => o.steps = parse_field(k, v)?,
            "replicas" => o.replicas = parse_field(k, v)?,
            "samples" => o.samples = parse_field(k, v)?,
            "beta-tol" => o.beta_tol = parse_field(k, v)?,
            "seed" => o.seed = parse_field(k, v)?,
            "format" => o.format = Some(v.clone()),
            "threads" => o.threads = parse_field(k, v)?,
            "budget" => o.budget = parse_field(k, v)?,
            "tail-buffer" => o.tail_buffer = parse_field(k, v)?,
            "output" => o.output = Some(PathBuf::from(v)),
            _ => return Err(format!("config: unknown key `{k}`")),
        }
    }
    Ok(o)
}

impl Opts {
    /// Fields set in `self` win over those in `file`.
    fn over(self, file: Opts) -> Opts {
        Opts {
            law: self.law.or(file.law),
            lambda: self.lambda.or(file.lambda),
            method: self.method.or(file.method),
            check: self.check.or(file.check),
            steps: self.steps.or(file.steps),
            replicas: self.replicas.or(file.replicas),
            samples: self.samples.or(file.samples),
            beta_tol: self.beta_tol.or(file.beta_tol),
            seed: self.seed.or(file.seed),
            format: self.format.or(file.format),
            threads: self.threads.or(file.threads),
            config: self.config,
            budget: self.budget.or(file.budget),
            tail_buffer: self.tail_buffer.or(file.tail_buffer),
            output: self.output.or(file.output),
        }
    }
}

fn pick(flag: &str, value: Option<String>, allowed: &[&str], default: &str) -> Result<String, String> {
    let v = value.unwrap_or_else(|| default.to_string());
    if allowed.contains(&v.as_str()) {
        Ok(v)
    } else {
        Err(format!("--{flag}: unknown value `{v}` (expected one of {})", allowed.join(", ")))
    }
}

impl RunConfig {
    /// Merges flags, the optional config file and the seed environment
    /// variable, and validates the result.
    pub fn resolve(cmd: Command, flags: Opts, env_seed: Option<String>) -> Result<RunConfig, String> {
        let file = match &flags.config {
            Some(p) => read_config_file(p)?,
            None => Opts::default(),
        };
        let o = flags.over(file);
        let d = defaults(cmd);

        let seed = match (o.seed, env_seed) {
            (Some(s), _) => s,
            (None, Some(s)) => s
                .trim()
                .parse()
                .map_err(|_| format!("{SEED_ENV}: invalid seed `{s}`"))?,
            (None, None) => 0,
        };
        let format = match o.format.as_deref() {
            None | Some("json") => Format::Json,
            Some("csv") => Format::Csv,
            Some(other) => return Err(format!("--format: unknown value `{other}` (expected json or csv)")),
        };
        let law = match o.law {
            Some(s) => Some(
                s.parse::<OffspringLaw>()
                    .map_err(|e| format!("--law: {e}"))?
                    .to_string(),
            ),
            None => None,
        };
        if let Some(l) = o.lambda {
            if !(l.is_finite() && l > 0.0) {
                return Err(format!("--lambda: must be positive, got {l}"));
            }
        }
        if let Some(t) = o.beta_tol {
            if !(t.is_finite() && t > 0.0) {
                return Err(format!("--beta-tol: must be positive, got {t}"));
            }
        }
        if o.threads == Some(0) {
            return Err("--threads: must be at least 1".into());
        }
        let needs_law = matches!(cmd, Command::Speed | Command::Beta | Command::Envdist);
        if needs_law && law.is_none() {
            return Err("--law: required for this subcommand".into());
        }
        if needs_law && o.lambda.is_none() {
            return Err("--lambda: required for this subcommand".into());
        }
        let method = match cmd {
            Command::Speed => Some(pick("method", o.method, &METHODS, "all")?),
            _ => None,
        };
        let check = match cmd {
            Command::Verify => Some(pick("check", o.check, &CHECKS, "all")?),
            _ => None,
        };
        Ok(RunConfig {
            command: cmd,
            law,
            lambda: o.lambda,
            seed,
            method,
            check,
            steps: o.steps.unwrap_or(d.steps),
            replicas: o.replicas.unwrap_or(d.replicas),
            samples: o.samples.unwrap_or(d.samples),
            beta_tol: o.beta_tol.unwrap_or(DEFAULT_BETA_TOL),
            tail_buffer: o.tail_buffer,
            budget: o.budget,
            format,
            threads: o.threads,
            output: o.output,
        })
    }

    pub fn law(&self) -> OffspringLaw {
        self.law
            .as_deref()
            .expect("law checked at resolve time")
            .parse()
            .expect("law validated at resolve time")
    }

    pub fn lambda(&self) -> f64 {
        self.lambda.expect("lambda checked at resolve time")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("gwspeed").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn speed_flags() {
        let cli = parse(&["speed", "--law", "0:0.25,2:0.75", "--lambda", "0.8", "--method", "all", "--seed", "7"]);
        let c = RunConfig::resolve(cli.command, cli.opts, None).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.lambda, Some(0.8));
        assert_eq!(c.method.as_deref(), Some("all"));
    }

    #[test]
    fn negative_lambda_is_rejected() {
        let cli = parse(&["speed", "--law", "2:1", "--lambda", "-1"]);
        let e = RunConfig::resolve(cli.command, cli.opts, None).unwrap_err();
        assert!(e.starts_with("--lambda"), "{e}");
    }

    #[test]
    fn flags_override_file() {
        let file = parse_config_text("replicas=100\nsamples = 5 # comment\nbeta_tol=0.01\n").unwrap();
        let cli = parse(&["speed", "--law", "2:1", "--lambda", "1", "--replicas", "200"]);
        let merged = cli.opts.over(file);
        let c = RunConfig::resolve(Command::Speed, merged, None).unwrap();
        assert_eq!(c.replicas, 200);
        assert_eq!(c.samples, 5);
        assert_eq!(c.beta_tol, 0.01);
    }

    #[test]
    fn seed_precedence() {
        let cli = parse(&["verify"]);
        let c = RunConfig::resolve(cli.command, cli.opts.clone(), Some("42".into())).unwrap();
        assert_eq!(c.seed, 42);
        let mut o = cli.opts;
        o.seed = Some(3);
        assert_eq!(RunConfig::resolve(Command::Verify, o, Some("42".into())).unwrap().seed, 3);
    }

    #[test]
    fn bad_values_name_the_flag() {
        let cli = parse(&["speed", "--law", "2:1", "--lambda", "1", "--method", "magic"]);
        assert!(RunConfig::resolve(cli.command, cli.opts, None).unwrap_err().starts_with("--method"));
        let cli = parse(&["speed", "--law", "2:oops", "--lambda", "1"]);
        assert!(RunConfig::resolve(cli.command, cli.opts, None).unwrap_err().starts_with("--law"));
        assert!(parse_config_text("colour=blue").unwrap_err().contains("colour"));
    }
}
