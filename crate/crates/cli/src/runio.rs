//! Run-directory plumbing: where artifacts land, the JSONL training log,
//! and the score summary CSV. A run directory holds config.ini, log.jsonl,
//! checkpoint.cick, and any periodic checkpoint-{step}.cick files.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use cic_core::error::Result as CoreResult;
use cic_core::trainer::{EpisodeRecord, LogSink, NamedArray, SkillRecord, UpdateRecord};

use crate::checkpoint;
use crate::CliError;

/// Output root: explicit flag, then CIC_RUN_DIR, then ./runs.
pub fn output_root(flag: Option<&str>) -> PathBuf {
    match flag {
        Some(d) => PathBuf::from(d),
        None => match std::env::var_os("CIC_RUN_DIR") {
            Some(d) => PathBuf::from(d),
            None => PathBuf::from("runs"),
        },
    }
}

/// Creates (or reuses) the named run directory under the output root.
/// Reuse keeps reruns idempotent: identical inputs overwrite in place.
pub fn create_run_dir(flag: Option<&str>, name: &str) -> Result<PathBuf, CliError> {
    let dir = output_root(flag).join(name);
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

/// Buffers training events in memory and writes them out in one pass, so a
/// numerical abort mid-run still leaves a complete log and the periodic
/// checkpoints taken before the failure.
pub struct JsonlSink {
    echo: String,
    lines: Vec<String>,
    checkpoints: Vec<(u64, Vec<u8>)>,
}

impl JsonlSink {
    pub fn new(config_echo: &str) -> Self {
        JsonlSink {
            echo: String::from(config_echo),
            lines: Vec::new(),
            checkpoints: Vec::new(),
        }
    }

    pub fn flush(&self, dir: &Path) -> Result<(), CliError> {
        let mut log = String::new();
        for line in &self.lines {
            log.push_str(line);
            log.push('\n');
        }
        fs::write(dir.join("log.jsonl"), log)?;
        for (step, bytes) in &self.checkpoints {
            fs::write(dir.join(format!("checkpoint-{step}.cick")), bytes)?;
        }
        Ok(())
    }
}

impl LogSink for JsonlSink {
    fn update(&mut self, r: &UpdateRecord) -> CoreResult<()> {
        self.lines.push(
            serde_json::json!({
                "kind": "update",
                "step": r.step,
                "intrinsic_mean": r.intrinsic_mean,
                "repr_loss": r.repr_loss,
                "critic_loss": r.critic_loss,
                "actor_loss": r.actor_loss,
            })
            .to_string(),
        );
        Ok(())
    }

    fn episode(&mut self, r: &EpisodeRecord) -> CoreResult<()> {
        self.lines.push(
            serde_json::json!({
                "kind": "episode",
                "step": r.step,
                "episode": r.episode,
                "return": r.ret,
            })
            .to_string(),
        );
        Ok(())
    }

    fn skill(&mut self, r: &SkillRecord) -> CoreResult<()> {
        self.lines.push(
            serde_json::json!({
                "kind": "skill",
                "step": r.step,
                "skill": r.skill,
            })
            .to_string(),
        );
        Ok(())
    }

    fn checkpoint(&mut self, step: u64, arrays: &[NamedArray]) -> CoreResult<()> {
        self.checkpoints
            .push((step, checkpoint::encode(&self.echo, arrays)));
        Ok(())
    }
}

pub const SCORES_HEADER: &str = "task,seed,phase,score";

/// Appends one summary row, creating the file (with header) on first use.
pub fn append_score(
    path: &Path,
    task: &str,
    seed: u64,
    phase: &str,
    score: f64,
) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let fresh = !path.exists();
    let mut f = fs::OpenOptions::new().create(true).append(true).open(path)?;
    if fresh {
        writeln!(f, "{SCORES_HEADER}")?;
    }
    writeln!(f, "{task},{seed},{phase},{score}")?;
    Ok(())
}
