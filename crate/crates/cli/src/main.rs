//! Command-line front end: run configuration, training artifacts on disk,
//! evaluation, plots, and reports. Core training logic lives in `cic-core`;
//! this binary owns argument parsing, file formats, and exit codes.
//!
//! Exit codes are a stable contract: 0 success, 1 IO, 2 configuration,
//! 3 numerical abort, 4 corrupt artifact.

mod checkpoint;
mod config;
mod flow;
mod report;
mod runio;
mod study;

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use cic_core::baselines::one_hot;
use cic_core::cic;
use cic_core::error::Error;
use cic_core::rng::SeedTree;
use cic_core::trainer::{self, Agent, AgentKind};

#[derive(Debug)]
pub enum CliError {
    Core(Error),
    Io(std::io::Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(Error::Config(_)) | CliError::Core(Error::Contract(_)) => 2,
            CliError::Core(Error::Training { .. }) | CliError::Core(Error::NotReady) => 3,
            CliError::Core(Error::Corrupt(_)) => 4,
            CliError::Io(_) => 1,
        }
    }
}

fn usage(msg: String) -> CliError {
    CliError::Core(Error::Config(msg))
}

const USAGE: &str = "\
usage: cic <command> [--flags] [--section.key=value ...]

commands:
  pretrain         reward-free skill pretraining; writes a run directory
                   (--config PATH, --name NAME, --out-dir DIR)
  finetune         adapt a pretrained checkpoint to a task; appends a score row
                   (--checkpoint PATH, --scores PATH, --name, --out-dir)
  eval             deterministic rollouts of a checkpoint, JSON on stdout
                   (--checkpoint PATH, --episodes N, --skill V)
  plot-flow        behavior flow field of a pointmass checkpoint as SVG
                   (--checkpoint PATH, --out PATH, --skills V,V,.., --grid N,
                    --horizon N, --deterministic)
  report           aggregate score CSVs into statistics with intervals
                   (--scores PATH[,PATH..], --expert PATH, --out-dir DIR,
                    --phase NAME, --deterministic)
  gridworld-study  coverage comparison of skill learners on the gridworld
                   (--seeds N, --ks K,K,.., --steps N, --out PATH, --jobs N)

Any flag of the form --section.key=value overrides a config file entry;
sections are env, agent, train, stats. The CIC_RUN_DIR environment variable
sets the default output root for run directories.";

/// Parsed command tail: config overrides plus named flags, each flag
/// possibly repeated.
pub struct Flags {
    pub overrides: Vec<(String, String, String)>,
    values: BTreeMap<&'static str, Vec<String>>,
}

impl Flags {
    pub fn get(&self, name: &str) -> Option<&str> {
        self.values.get(name).and_then(|v| v.last()).map(|s| s.as_str())
    }

    pub fn all(&self, name: &str) -> impl Iterator<Item = &str> {
        self.values.get(name).into_iter().flatten().map(|s| s.as_str())
    }

    pub fn has(&self, name: &str) -> bool {
        self.values.contains_key(name)
    }

    pub fn parsed<T: std::str::FromStr>(&self, name: &str, what: &str) -> Result<Option<T>, CliError> {
        match self.get(name) {
            None => Ok(None),
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|_| usage(format!("--{name} {raw}: expected {what}"))),
        }
    }
}

/// Splits a command tail into `--section.key=value` overrides and the
/// command's own flags. `spec` lists (name, takes_value); anything else is
/// rejected by name.
pub fn parse_flags(args: &[String], spec: &[(&'static str, bool)]) -> Result<Flags, CliError> {
    let mut overrides = Vec::new();
    let mut values: BTreeMap<&'static str, Vec<String>> = BTreeMap::new();
    let mut i = 0;
    while i < args.len() {
        let arg = &args[i];
        let body = arg
            .strip_prefix("--")
            .ok_or_else(|| usage(format!("unexpected argument '{arg}' (flags start with --)")))?;
        let dot = body.find('.');
        let eq = body.find('=');
        if matches!((dot, eq), (Some(d), Some(e)) if d < e) || (dot.is_some() && eq.is_none()) {
            overrides.push(config::parse_override(arg)?);
            i += 1;
            continue;
        }
        let (name, inline) = match body.split_once('=') {
            Some((n, v)) => (n, Some(v.to_string())),
            None => (body, None),
        };
        let &(canon, takes_value) = spec
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| usage(format!("unknown flag --{name}")))?;
        let value = match (takes_value, inline) {
            (false, None) => String::from("true"),
            (false, Some(v)) => {
                return Err(usage(format!("--{name} takes no value, got '{v}'")))
            }
            (true, Some(v)) => v,
            (true, None) => {
                i += 1;
                args.get(i)
                    .cloned()
                    .ok_or_else(|| usage(format!("--{name} needs a value")))?
            }
        };
        values.entry(canon).or_default().push(value);
        i += 1;
    }
    Ok(Flags { overrides, values })
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    match dispatch(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn dispatch(args: &[String]) -> Result<(), CliError> {
    let Some(cmd) = args.first() else {
        eprintln!("{USAGE}");
        return Err(usage(String::from("missing command")));
    };
    let rest = &args[1..];
    match cmd.as_str() {
        "pretrain" => cmd_pretrain(rest),
        "finetune" => cmd_finetune(rest),
        "eval" => cmd_eval(rest),
        "plot-flow" => flow::cmd_plot_flow(rest),
        "report" => report::cmd_report(rest),
        "gridworld-study" => study::cmd_study(rest),
        "help" | "--help" | "-h" => {
            println!("{USAGE}");
            println!("\nconfig keys:");
            for key in config::known_keys() {
                println!("  {key}");
            }
            Ok(())
        }
        other => Err(usage(format!(
            "unknown command '{other}' (run 'cic help' for the list)"
        ))),
    }
}

/// Reads the optional config file named by --config.
fn load_config_file(flags: &Flags) -> Result<(Option<String>, String), CliError> {
    match flags.get("config") {
        Some(path) => Ok((Some(std::fs::read_to_string(path)?), path.to_string())),
        None => Ok((None, String::from("config"))),
    }
}

/// The skill vector a checkpointed agent should be evaluated with when the
/// caller names a scalar grid value `v`.
fn skill_for(agent: &Agent, v: f64) -> Result<Vec<f64>, CliError> {
    let width = agent.skill_width();
    Ok(match agent.kind {
        AgentKind::Apt => Vec::new(),
        AgentKind::Cic => {
            if !(0.0..=1.0).contains(&v) {
                return Err(usage(format!("--skill {v}: grid values live in [0, 1]")));
            }
            cic::constant_skill(v, width)
        }
        AgentKind::Diayn => {
            let idx = v as usize;
            if v.fract() != 0.0 || idx >= width {
                return Err(usage(format!(
                    "--skill {v}: discrete skills are integers 0..{width}"
                )));
            }
            one_hot(idx, width)
        }
    })
}

fn cmd_pretrain(rest: &[String]) -> Result<(), CliError> {
    let flags = parse_flags(
        rest,
        &[
            ("config", true),
            ("name", true),
            ("out-dir", true),
            ("deterministic", false),
        ],
    )?;
    let (text, origin) = load_config_file(&flags)?;
    let resolved = config::resolve(text.as_deref(), &origin, &flags.overrides)?;
    let run = &resolved.run;
    let name = flags
        .get("name")
        .map(String::from)
        .unwrap_or_else(|| format!("pretrain-s{}", run.train.seed));
    let dir = runio::create_run_dir(flags.get("out-dir"), &name)?;
    let echo = resolved.echo();
    std::fs::write(dir.join("config.ini"), &echo)?;

    let seeds = SeedTree::new(run.train.seed);
    let mut agent = Agent::new(run, run.env.obs_dim(), run.env.action_dim(), &seeds)?;
    let mut sink = runio::JsonlSink::new(&echo);
    let outcome = trainer::pretrain(&mut agent, run, &mut sink, false);
    // the log and periodic checkpoints survive a numerical abort
    sink.flush(&dir)?;
    let outcome = outcome?;
    std::fs::write(dir.join("checkpoint.cick"), checkpoint::encode(&echo, &agent.to_arrays()))?;

    println!(
        "{}",
        serde_json::json!({
            "run_dir": dir.to_string_lossy(),
            "steps": outcome.steps,
            "episodes": outcome.episodes,
            "updates": outcome.updates,
            "coverage_cells": outcome.coverage_cells,
        })
    );
    Ok(())
}

fn cmd_finetune(rest: &[String]) -> Result<(), CliError> {
    let flags = parse_flags(
        rest,
        &[
            ("checkpoint", true),
            ("scores", true),
            ("name", true),
            ("out-dir", true),
            ("deterministic", false),
        ],
    )?;
    let ck_path = flags
        .get("checkpoint")
        .ok_or_else(|| usage(String::from("finetune needs --checkpoint")))?;
    let bytes = std::fs::read(ck_path)?;
    let (stored, arrays) = checkpoint::decode(&bytes)?;
    let resolved = config::resolve(Some(&stored), "checkpoint", &flags.overrides)?;
    let run = &resolved.run;
    let name = flags.get("name").map(String::from).unwrap_or_else(|| {
        format!("finetune-{}-s{}", run.env.task_name(), run.train.seed)
    });
    let dir = runio::create_run_dir(flags.get("out-dir"), &name)?;
    let echo = resolved.echo();
    std::fs::write(dir.join("config.ini"), &echo)?;

    let mut agent = Agent::from_arrays(run, run.env.obs_dim(), run.env.action_dim(), &arrays)?;
    let mut sink = runio::JsonlSink::new(&echo);
    let outcome = trainer::finetune(&mut agent, run, &mut sink);
    sink.flush(&dir)?;
    let outcome = outcome?;
    std::fs::write(dir.join("checkpoint.cick"), checkpoint::encode(&echo, &agent.to_arrays()))?;

    let scores_path = flags
        .get("scores")
        .map(PathBuf::from)
        .unwrap_or_else(|| runio::output_root(flags.get("out-dir")).join("scores.csv"));
    runio::append_score(
        &scores_path,
        run.env.task_name(),
        run.train.seed,
        "finetune",
        outcome.score,
    )?;

    println!(
        "{}",
        serde_json::json!({
            "run_dir": dir.to_string_lossy(),
            "task": run.env.task_name(),
            "seed": run.train.seed,
            "swept_v": outcome.swept_v,
            "env_steps": outcome.env_steps,
            "updates": outcome.updates,
            "score": outcome.score,
            "scores_csv": scores_path.to_string_lossy(),
        })
    );
    Ok(())
}

fn cmd_eval(rest: &[String]) -> Result<(), CliError> {
    let flags = parse_flags(
        rest,
        &[("checkpoint", true), ("episodes", true), ("skill", true)],
    )?;
    let ck_path = flags
        .get("checkpoint")
        .ok_or_else(|| usage(String::from("eval needs --checkpoint")))?;
    let bytes = std::fs::read(ck_path)?;
    let (stored, arrays) = checkpoint::decode(&bytes)?;
    let resolved = config::resolve(Some(&stored), "checkpoint", &flags.overrides)?;
    let run = &resolved.run;
    let agent = Agent::from_arrays(run, run.env.obs_dim(), run.env.action_dim(), &arrays)?;

    let episodes = flags
        .parsed::<u32>("episodes", "a positive integer")?
        .unwrap_or(run.train.eval_episodes);
    let v = flags.parsed::<f64>("skill", "a number")?.unwrap_or(0.5);
    let skill = skill_for(&agent, v)?;
    let seeds = SeedTree::new(run.train.seed);
    let out = trainer::evaluate(&agent, &run.env, episodes, &skill, &seeds)?;

    println!(
        "{}",
        serde_json::json!({
            "task": run.env.task_name(),
            "episodes": episodes,
            "skill": skill,
            "mean_return": out.mean_return,
            "returns": out.returns,
        })
    );
    Ok(())
}
