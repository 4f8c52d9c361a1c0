//! Line-based run configuration: `[section]` headers over `key = value`
//! pairs, with later sources (file, then command-line overrides) winning.
//! Every key belongs to exactly one section's registry; anything else is
//! rejected by name. The fully resolved config echoes back to text that
//! parses to the same resolution, which is what run directories and
//! checkpoints store.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use cic_core::cic::RewardVariant;
use cic_core::entropy::EntropyForm;
use cic_core::envs::{
    EnvConfig, GridTask, GridworldConfig, PointmassConfig, PointmassTask, TerminationMode,
};
use cic_core::error::Error;
use cic_core::trainer::{AgentKind, RunConfig};

use crate::CliError;

/// `[stats]` section: bootstrap reporting parameters.
#[derive(Debug, Clone)]
pub struct StatsParams {
    pub resamples: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for StatsParams {
    fn default() -> Self {
        StatsParams {
            resamples: 2000,
            level: 0.95,
            seed: 1,
        }
    }
}

/// Environment selection as written in the config, kept alongside the built
/// EnvConfig so the echo can reproduce it.
#[derive(Debug, Clone)]
struct EnvKeys {
    kind: Option<String>,
    task: Option<String>,
    episode_length: u32,
    termination: String,
}

impl Default for EnvKeys {
    fn default() -> Self {
        EnvKeys {
            kind: None,
            task: None,
            episode_length: 200,
            termination: String::from("fixed"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Resolved {
    pub run: RunConfig,
    pub stats: StatsParams,
    env: EnvKeys,
}

/// One parsed `key = value` assignment with its origin for error messages.
#[derive(Debug, Clone)]
struct Assign {
    section: String,
    key: String,
    value: String,
    origin: String,
}

/// Parses config text into assignments. `origin` names the source (path or
/// "override") and is carried into error messages with the line number.
fn parse_text(text: &str, origin: &str) -> Result<Vec<Assign>, CliError> {
    let mut out = Vec::new();
    let mut section: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let lineno = i + 1;
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| usage(format!("{origin}:{lineno}: unterminated section header '{line}'")))?
                .trim();
            if !matches!(name, "env" | "agent" | "train" | "stats") {
                return Err(usage(format!(
                    "{origin}:{lineno}: unknown section [{name}] (expected env, agent, train, stats)"
                )));
            }
            section = Some(name.to_string());
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            usage(format!("{origin}:{lineno}: expected 'key = value', got '{line}'"))
        })?;
        let section = section.clone().ok_or_else(|| {
            usage(format!("{origin}:{lineno}: key '{}' outside any [section]", key.trim()))
        })?;
        out.push(Assign {
            section,
            key: key.trim().to_string(),
            value: value.trim().to_string(),
            origin: format!("{origin}:{lineno}"),
        });
    }
    Ok(out)
}

/// Parses one `--section.key=value` override.
pub fn parse_override(arg: &str) -> Result<(String, String, String), CliError> {
    let body = arg.trim_start_matches("--");
    let (path, value) = body
        .split_once('=')
        .ok_or_else(|| usage(format!("override '{arg}' needs =value")))?;
    let (section, key) = path
        .split_once('.')
        .ok_or_else(|| usage(format!("override '{arg}' needs section.key")))?;
    if !matches!(section, "env" | "agent" | "train" | "stats") {
        return Err(usage(format!(
            "override '{arg}': unknown section '{section}' (expected env, agent, train, stats)"
        )));
    }
    Ok((section.to_string(), key.to_string(), value.to_string()))
}

fn usage(msg: String) -> CliError {
    CliError::Core(Error::Config(msg))
}

fn bad_key(a: &Assign) -> CliError {
    usage(format!(
        "{}: unknown key [{}] {}",
        a.origin, a.section, a.key
    ))
}

fn bad_value(a: &Assign, why: &str) -> CliError {
    usage(format!(
        "{}: [{}] {} = {}: {}",
        a.origin, a.section, a.key, a.value, why
    ))
}

fn parse_as<T: std::str::FromStr>(a: &Assign, what: &str) -> Result<T, CliError> {
    a.value
        .parse::<T>()
        .map_err(|_| bad_value(a, &format!("expected {what}")))
}

fn parse_bool(a: &Assign) -> Result<bool, CliError> {
    match a.value.as_str() {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(bad_value(a, "expected true or false")),
    }
}

/// Resolves file text plus overrides into a validated run configuration.
/// Overrides use the same section/key registry and win over the file.
pub fn resolve(
    file_text: Option<&str>,
    file_origin: &str,
    overrides: &[(String, String, String)],
) -> Result<Resolved, CliError> {
    resolve_layered(None, file_text, file_origin, overrides)
}

/// Like `resolve`, with an extra lowest-priority layer beneath the file —
/// commands with their own protocol defaults (the gridworld study) put them
/// there so a config file or override still wins.
pub fn resolve_layered(
    defaults_text: Option<&str>,
    file_text: Option<&str>,
    file_origin: &str,
    overrides: &[(String, String, String)],
) -> Result<Resolved, CliError> {
    let mut assigns = match defaults_text {
        Some(d) => parse_text(d, "defaults")?,
        None => Vec::new(),
    };
    if let Some(t) = file_text {
        assigns.extend(parse_text(t, file_origin)?);
    }
    for (section, key, value) in overrides {
        assigns.push(Assign {
            section: section.clone(),
            key: key.clone(),
            value: value.clone(),
            origin: String::from("override"),
        });
    }

    let mut env = EnvKeys::default();
    let mut run = RunConfig::desk(EnvConfig::Pointmass(PointmassConfig::default()));
    let mut stats = StatsParams::default();

    for a in &assigns {
        match a.section.as_str() {
            "env" => match a.key.as_str() {
                "kind" => env.kind = Some(a.value.clone()),
                "task" => env.task = Some(a.value.clone()),
                "episode_length" => env.episode_length = parse_as(a, "a positive integer")?,
                "termination" => env.termination = a.value.clone(),
                _ => return Err(bad_key(a)),
            },
            "agent" => match a.key.as_str() {
                "kind" => run.agent.kind = AgentKind::parse(&a.value).map_err(CliError::Core)?,
                "skill_dim" => run.agent.skill_dim = parse_as(a, "an integer")?,
                "hidden_dim" => run.agent.hidden_dim = parse_as(a, "an integer")?,
                "embed_dim" => run.agent.embed_dim = parse_as(a, "an integer")?,
                "temperature" => run.agent.temperature = parse_as(a, "a float")?,
                "prediction_head" => run.agent.prediction_head = parse_bool(a)?,
                "ensemble" => run.agent.ensemble = parse_as(a, "an integer")?,
                "variant" => {
                    run.agent.variant = RewardVariant::parse(&a.value).map_err(CliError::Core)?
                }
                "knn_k" => run.agent.knn_k = parse_as(a, "an integer")?,
                "entropy_form" => {
                    run.agent.entropy_form = match a.value.as_str() {
                        "log1p_mean" => EntropyForm::Log1pMean,
                        "mean_log" => EntropyForm::MeanLog,
                        _ => return Err(bad_value(a, "expected log1p_mean or mean_log")),
                    }
                }
                "lr" => run.agent.lr = parse_as(a, "a float")?,
                "noise_sigma" => run.agent.noise_sigma = parse_as(a, "a float")?,
                "noise_clip" => run.agent.noise_clip = parse_as(a, "a float")?,
                "polyak" => run.agent.polyak = parse_as(a, "a float")?,
                "normalizer_decay" => run.agent.normalizer_decay = parse_as(a, "a float")?,
                "repr_learning" => run.agent.repr_learning = parse_bool(a)?,
                _ => return Err(bad_key(a)),
            },
            "train" => match a.key.as_str() {
                "seed" => run.train.seed = parse_as(a, "an integer")?,
                "num_pretrain_steps" => run.train.pretrain_steps = parse_as(a, "an integer")?,
                "num_finetune_steps" => run.train.finetune_steps = parse_as(a, "an integer")?,
                "seed_frames" => run.train.seed_frames = parse_as(a, "an integer")?,
                "skill_period" => run.train.skill_period = parse_as(a, "an integer")?,
                "sweep_step" => run.train.sweep_step = parse_as(a, "a float")?,
                "sweep_period" => run.train.sweep_period = parse_as(a, "an integer")?,
                "eval_episodes" => run.train.eval_episodes = parse_as(a, "an integer")?,
                "update_every" => run.train.update_every = parse_as(a, "an integer")?,
                "batch_size" => run.train.batch_size = parse_as(a, "an integer")?,
                "nstep" => run.train.nstep = parse_as(a, "an integer")?,
                "gamma" => run.train.gamma = parse_as(a, "a float")?,
                "replay_capacity" => run.train.replay_capacity = parse_as(a, "an integer")?,
                "checkpoint_every" => run.train.checkpoint_every = parse_as(a, "an integer")?,
                _ => return Err(bad_key(a)),
            },
            "stats" => match a.key.as_str() {
                "resamples" => stats.resamples = parse_as(a, "an integer")?,
                "level" => stats.level = parse_as(a, "a float")?,
                "seed" => stats.seed = parse_as(a, "an integer")?,
                _ => return Err(bad_key(a)),
            },
            _ => unreachable!("sections are validated at parse time"),
        }
    }

    run.env = build_env(&env)?;
    run.validate().map_err(CliError::Core)?;
    Ok(Resolved { run, stats, env })
}

fn build_env(env: &EnvKeys) -> Result<EnvConfig, CliError> {
    let kind = env
        .kind
        .as_deref()
        .ok_or_else(|| usage(String::from("missing required key: [env] kind")))?;
    match kind {
        "pointmass" => {
            let task = match env.task.as_deref() {
                None | Some("free") => PointmassTask::Free,
                Some(other) => PointmassTask::parse(other).map_err(CliError::Core)?,
            };
            let termination = match env.termination.as_str() {
                "fixed" => TerminationMode::FixedLength,
                "early" => TerminationMode::EarlyTermination,
                other => {
                    return Err(usage(format!(
                        "[env] termination = {other}: expected fixed or early"
                    )))
                }
            };
            Ok(EnvConfig::Pointmass(PointmassConfig {
                task,
                episode_length: env.episode_length,
                termination,
                ..PointmassConfig::default()
            }))
        }
        "gridworld" => {
            let task = match env.task.as_deref() {
                None | Some("free") => GridTask::Free,
                Some("reach_corner") => GridTask::ReachCorner,
                Some(other) => {
                    return Err(usage(format!(
                        "[env] task = {other}: gridworld tasks are free, reach_corner"
                    )))
                }
            };
            Ok(EnvConfig::Gridworld(GridworldConfig {
                task,
                episode_length: env.episode_length,
                ..GridworldConfig::default()
            }))
        }
        other => Err(usage(format!(
            "[env] kind = {other}: expected pointmass or gridworld"
        ))),
    }
}

impl Resolved {
    /// Canonical text form: parsing it back resolves to this exact config.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        let a = &self.run.agent;
        let t = &self.run.train;
        writeln!(s, "[env]").unwrap();
        writeln!(s, "kind = {}", self.env.kind.as_deref().unwrap_or("pointmass")).unwrap();
        writeln!(s, "task = {}", self.run.env.task_name()).unwrap();
        writeln!(s, "episode_length = {}", self.env.episode_length).unwrap();
        if matches!(self.run.env, EnvConfig::Pointmass(_)) {
            writeln!(s, "termination = {}", self.env.termination).unwrap();
        }
        writeln!(s).unwrap();
        writeln!(s, "[agent]").unwrap();
        writeln!(s, "kind = {}", a.kind.name()).unwrap();
        writeln!(s, "skill_dim = {}", a.skill_dim).unwrap();
        writeln!(s, "hidden_dim = {}", a.hidden_dim).unwrap();
        writeln!(s, "embed_dim = {}", a.embed_dim).unwrap();
        writeln!(s, "temperature = {}", a.temperature).unwrap();
        writeln!(s, "prediction_head = {}", a.prediction_head).unwrap();
        writeln!(s, "ensemble = {}", a.ensemble).unwrap();
        writeln!(s, "variant = {}", a.variant.name()).unwrap();
        writeln!(s, "knn_k = {}", a.knn_k).unwrap();
        writeln!(
            s,
            "entropy_form = {}",
            match a.entropy_form {
                EntropyForm::Log1pMean => "log1p_mean",
                EntropyForm::MeanLog => "mean_log",
            }
        )
        .unwrap();
        writeln!(s, "lr = {}", a.lr).unwrap();
        writeln!(s, "noise_sigma = {}", a.noise_sigma).unwrap();
        writeln!(s, "noise_clip = {}", a.noise_clip).unwrap();
        writeln!(s, "polyak = {}", a.polyak).unwrap();
        writeln!(s, "normalizer_decay = {}", a.normalizer_decay).unwrap();
        writeln!(s, "repr_learning = {}", a.repr_learning).unwrap();
        writeln!(s).unwrap();
        writeln!(s, "[train]").unwrap();
        writeln!(s, "seed = {}", t.seed).unwrap();
        writeln!(s, "num_pretrain_steps = {}", t.pretrain_steps).unwrap();
        writeln!(s, "num_finetune_steps = {}", t.finetune_steps).unwrap();
        writeln!(s, "seed_frames = {}", t.seed_frames).unwrap();
        writeln!(s, "skill_period = {}", t.skill_period).unwrap();
        writeln!(s, "sweep_step = {}", t.sweep_step).unwrap();
        writeln!(s, "sweep_period = {}", t.sweep_period).unwrap();
        writeln!(s, "eval_episodes = {}", t.eval_episodes).unwrap();
        writeln!(s, "update_every = {}", t.update_every).unwrap();
        writeln!(s, "batch_size = {}", t.batch_size).unwrap();
        writeln!(s, "nstep = {}", t.nstep).unwrap();
        writeln!(s, "gamma = {}", t.gamma).unwrap();
        writeln!(s, "replay_capacity = {}", t.replay_capacity).unwrap();
        writeln!(s, "checkpoint_every = {}", t.checkpoint_every).unwrap();
        writeln!(s).unwrap();
        writeln!(s, "[stats]").unwrap();
        writeln!(s, "resamples = {}", self.stats.resamples).unwrap();
        writeln!(s, "level = {}", self.stats.level).unwrap();
        writeln!(s, "seed = {}", self.stats.seed).unwrap();
        s
    }
}

/// Names every key the registry accepts; used by the usage message.
pub fn known_keys() -> BTreeSet<&'static str> {
    [
        "env.kind",
        "env.task",
        "env.episode_length",
        "env.termination",
        "agent.kind",
        "agent.skill_dim",
        "agent.hidden_dim",
        "agent.embed_dim",
        "agent.temperature",
        "agent.prediction_head",
        "agent.ensemble",
        "agent.variant",
        "agent.knn_k",
        "agent.entropy_form",
        "agent.lr",
        "agent.noise_sigma",
        "agent.noise_clip",
        "agent.polyak",
        "agent.normalizer_decay",
        "agent.repr_learning",
        "train.seed",
        "train.num_pretrain_steps",
        "train.num_finetune_steps",
        "train.seed_frames",
        "train.skill_period",
        "train.sweep_step",
        "train.sweep_period",
        "train.eval_episodes",
        "train.update_every",
        "train.batch_size",
        "train.nstep",
        "train.gamma",
        "train.replay_capacity",
        "train.checkpoint_every",
        "stats.resamples",
        "stats.level",
        "stats.seed",
    ]
    .into_iter()
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ov(s: &str) -> (String, String, String) {
        parse_override(s).unwrap()
    }

    #[test]
    fn echo_round_trips() {
        let text = "[env]\nkind = pointmass\ntask = reach_ne\n[agent]\nskill_dim = 8\n[train]\nseed = 7\n";
        let r = resolve(Some(text), "t", &[]).unwrap();
        let echoed = r.echo();
        let r2 = resolve(Some(&echoed), "echo", &[]).unwrap();
        assert_eq!(echoed, r2.echo());
        assert_eq!(r2.run.train.seed, 7);
        assert_eq!(r2.run.agent.skill_dim, 8);
        assert_eq!(r2.run.env.task_name(), "reach_ne");
    }

    #[test]
    fn overrides_win_over_file() {
        let text = "[env]\nkind = pointmass\n[train]\nseed = 1\n";
        let r = resolve(Some(text), "t", &[ov("--train.seed=9"), ov("--env.task=run_x")]).unwrap();
        assert_eq!(r.run.train.seed, 9);
        assert_eq!(r.run.env.task_name(), "run_x");
    }

    #[test]
    fn unknown_key_is_named() {
        let text = "[env]\nkind = pointmass\nflavor = mild\n";
        let err = resolve(Some(text), "cfg.ini", &[]).unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("[env] flavor"), "{msg}");
        assert!(msg.contains("cfg.ini:3"), "{msg}");
    }

    #[test]
    fn missing_env_kind_is_named() {
        let err = resolve(Some("[train]\nseed = 3\n"), "t", &[]).unwrap_err();
        assert!(format!("{err}").contains("[env] kind"));
    }

    #[test]
    fn unknown_section_and_bad_values_fail() {
        assert!(resolve(Some("[magic]\nx = 1\n"), "t", &[]).is_err());
        let text = "[env]\nkind = pointmass\n[train]\nseed = banana\n";
        assert!(resolve(Some(text), "t", &[]).is_err());
        let text = "[env]\nkind = spaceship\n";
        assert!(resolve(Some(text), "t", &[]).is_err());
    }

    #[test]
    fn gridworld_echo_omits_termination() {
        let r = resolve(Some("[env]\nkind = gridworld\ntask = reach_corner\n"), "t", &[]).unwrap();
        assert!(!r.echo().contains("termination"));
        let r2 = resolve(Some(&r.echo()), "echo", &[]).unwrap();
        assert_eq!(r.echo(), r2.echo());
    }

    #[test]
    fn override_grammar() {
        assert!(parse_override("--train.seed").is_err());
        assert!(parse_override("--seed=1").is_err());
        assert!(parse_override("--magic.seed=1").is_err());
        let (s, k, v) = ov("--agent.variant=similarity");
        assert_eq!((s.as_str(), k.as_str(), v.as_str()), ("agent", "variant", "similarity"));
    }

    #[test]
    fn float_keys_echo_round_trip_exactly() {
        let text = "[env]\nkind = pointmass\n[agent]\nlr = 0.0003\ntemperature = 0.7\n[train]\ngamma = 0.975\nsweep_step = 0.25\n";
        let r = resolve(Some(text), "t", &[]).unwrap();
        let r2 = resolve(Some(&r.echo()), "echo", &[]).unwrap();
        assert_eq!(r2.run.agent.lr, 0.0003);
        assert_eq!(r2.run.agent.temperature, 0.7);
        assert_eq!(r2.run.train.gamma, 0.975);
        assert_eq!(r2.run.train.sweep_step, 0.25);
    }
}
