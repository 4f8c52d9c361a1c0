//! Score aggregation: reads one or more summary CSVs plus an expert
//! reference file, normalizes per task, and reports IQM, optimality gap,
//! median, and mean with stratified-bootstrap confidence intervals. Desk
//! scale is stamped onto every row so the numbers cannot be mistaken for
//! full-scale benchmark results.

use std::path::{Path, PathBuf};

use cic_core::rng::SeedTree;
use cic_core::stats::{point_statistic, stratified_bootstrap_ci, ScoreTable, Statistic};

use crate::config::StatsParams;
use crate::runio::SCORES_HEADER;
use crate::{parse_flags, usage, CliError};

const EXPERT_HEADER: &str = "task,expert";
const REPORT_STATS: [Statistic; 4] = [
    Statistic::Iqm,
    Statistic::OptimalityGap,
    Statistic::Median,
    Statistic::Mean,
];

fn split_csv_line(line: &str) -> Vec<&str> {
    line.split(',').map(str::trim).collect()
}

/// Loads `task,seed,phase,score` rows matching `phase` into the table.
/// Every malformed line is reported with its file and line number.
pub fn load_scores(path: &Path, phase: &str, table: &mut ScoreTable) -> Result<(), CliError> {
    let text = std::fs::read_to_string(path)?;
    let name = path.to_string_lossy();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        if lineno == 1 {
            if line.trim() != SCORES_HEADER {
                return Err(usage(format!(
                    "{name}:1: expected header '{SCORES_HEADER}', got '{line}'"
                )));
            }
            continue;
        }
        let fields = split_csv_line(line);
        let [task, seed, row_phase, score] = fields.as_slice() else {
            return Err(usage(format!(
                "{name}:{lineno}: expected 4 comma-separated fields, got {}",
                fields.len()
            )));
        };
        if task.is_empty() {
            return Err(usage(format!("{name}:{lineno}: empty task name")));
        }
        let seed: u64 = seed
            .parse()
            .map_err(|_| usage(format!("{name}:{lineno}: seed '{seed}' is not an integer")))?;
        let score: f64 = score
            .parse()
            .map_err(|_| usage(format!("{name}:{lineno}: score '{score}' is not a number")))?;
        if !score.is_finite() {
            return Err(usage(format!("{name}:{lineno}: score {score} is not finite")));
        }
        if *row_phase != phase {
            continue;
        }
        table
            .push(task, seed, score)
            .map_err(|e| usage(format!("{name}:{lineno}: {e}")))?;
    }
    Ok(())
}

/// Loads the `task,expert` reference file.
pub fn load_expert(path: &Path, table: &mut ScoreTable) -> Result<(), CliError> {
    let text = std::fs::read_to_string(path)?;
    let name = path.to_string_lossy();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        if lineno == 1 {
            if line.trim() != EXPERT_HEADER {
                return Err(usage(format!(
                    "{name}:1: expected header '{EXPERT_HEADER}', got '{line}'"
                )));
            }
            continue;
        }
        let fields = split_csv_line(line);
        let [task, expert] = fields.as_slice() else {
            return Err(usage(format!(
                "{name}:{lineno}: expected 2 comma-separated fields, got {}",
                fields.len()
            )));
        };
        let expert: f64 = expert.parse().map_err(|_| {
            usage(format!("{name}:{lineno}: expert '{expert}' is not a number"))
        })?;
        table
            .set_expert(task, expert)
            .map_err(|e| usage(format!("{name}:{lineno}: {e}")))?;
    }
    Ok(())
}

pub struct ReportRow {
    pub statistic: &'static str,
    pub point: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Computes the four reported statistics with their intervals. Each
/// statistic draws from its own named stream, so adding one never perturbs
/// another.
pub fn compute_rows(table: &ScoreTable, stats: &StatsParams) -> Result<Vec<ReportRow>, CliError> {
    let seeds = SeedTree::new(stats.seed);
    let mut rows = Vec::with_capacity(REPORT_STATS.len());
    for stat in REPORT_STATS {
        let point = point_statistic(table, stat)?;
        let mut rng = seeds.stream(&format!("report/{}", stat.name()));
        let (lo, hi) =
            stratified_bootstrap_ci(table, stat, stats.resamples, stats.level, &mut rng)?;
        rows.push(ReportRow {
            statistic: stat.name(),
            point,
            lo,
            hi,
        });
    }
    Ok(rows)
}

pub fn report_csv(rows: &[ReportRow]) -> String {
    let mut s = String::from("statistic,point,lo,hi,scale\n");
    for r in rows {
        s.push_str(&format!("{},{},{},{},desk\n", r.statistic, r.point, r.lo, r.hi));
    }
    s
}

const PLOT_W: f64 = 460.0;
const PLOT_H_ROW: f64 = 34.0;
const MARGIN_L: f64 = 130.0;
const MARGIN_R: f64 = 30.0;
const MARGIN_T: f64 = 40.0;

/// Horizontal interval plot, one row per statistic.
pub fn intervals_svg(rows: &[ReportRow], stats: &StatsParams, runs: usize, deterministic: bool) -> String {
    let lo = rows.iter().map(|r| r.lo).fold(f64::INFINITY, f64::min);
    let hi = rows.iter().map(|r| r.hi).fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if lo < hi {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    } else {
        (lo - 0.5, hi + 0.5)
    };
    let span = hi - lo;
    let x = |v: f64| MARGIN_L + (v - lo) / span * (PLOT_W - MARGIN_L - MARGIN_R);
    let height = MARGIN_T + rows.len() as f64 * PLOT_H_ROW + 20.0;

    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{PLOT_W:.0}\" height=\"{height:.0}\" \
         viewBox=\"0 0 {PLOT_W:.0} {height:.0}\">\n"
    );
    if !deterministic {
        let secs = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        s.push_str(&format!("<!-- generated at unix {secs} -->\n"));
    }
    s.push_str(
        "<style>text{font-family:monospace;font-size:12px;fill:#333}\
         .iv{stroke:#1f6feb;stroke-width:3}\
         .pt{fill:#0a3069}</style>\n\
         <rect width=\"100%\" height=\"100%\" fill=\"#fff\"/>\n",
    );
    s.push_str(&format!(
        "<text x=\"10\" y=\"20\">desk-scale aggregate, {:.0}% stratified bootstrap, {} runs</text>\n",
        stats.level * 100.0,
        runs
    ));
    for (i, r) in rows.iter().enumerate() {
        let y = MARGIN_T + (i as f64 + 0.5) * PLOT_H_ROW;
        s.push_str(&format!(
            "<text x=\"10\" y=\"{:.1}\">{}</text>\n",
            y + 4.0,
            r.statistic
        ));
        s.push_str(&format!(
            "<line class=\"iv\" x1=\"{:.2}\" y1=\"{y:.1}\" x2=\"{:.2}\" y2=\"{y:.1}\"/>\n",
            x(r.lo),
            x(r.hi)
        ));
        s.push_str(&format!(
            "<circle class=\"pt\" cx=\"{:.2}\" cy=\"{y:.1}\" r=\"4\"/>\n",
            x(r.point)
        ));
    }
    s.push_str("</svg>\n");
    s
}

/// Applies `--stats.key=value` overrides; report takes no other sections
/// because everything else is already baked into the score rows.
fn stats_from_overrides(overrides: &[(String, String, String)]) -> Result<StatsParams, CliError> {
    let mut stats = StatsParams::default();
    for (section, key, value) in overrides {
        if section != "stats" {
            return Err(usage(format!(
                "report accepts only [stats] overrides, got [{section}] {key}"
            )));
        }
        match key.as_str() {
            "resamples" => {
                stats.resamples = value
                    .parse()
                    .map_err(|_| usage(format!("[stats] resamples = {value}: expected an integer")))?
            }
            "level" => {
                stats.level = value
                    .parse()
                    .map_err(|_| usage(format!("[stats] level = {value}: expected a float")))?
            }
            "seed" => {
                stats.seed = value
                    .parse()
                    .map_err(|_| usage(format!("[stats] seed = {value}: expected an integer")))?
            }
            _ => return Err(usage(format!("override: unknown key [stats] {key}"))),
        }
    }
    Ok(stats)
}

pub fn cmd_report(rest: &[String]) -> Result<(), CliError> {
    let flags = parse_flags(
        rest,
        &[
            ("scores", true),
            ("expert", true),
            ("out-dir", true),
            ("phase", true),
            ("deterministic", false),
        ],
    )?;
    let paths: Vec<PathBuf> = flags
        .all("scores")
        .flat_map(|v| v.split(','))
        .filter(|p| !p.is_empty())
        .map(PathBuf::from)
        .collect();
    if paths.is_empty() {
        return Err(usage(String::from("report needs --scores with at least one CSV")));
    }
    let expert = flags
        .get("expert")
        .ok_or_else(|| usage(String::from("report needs --expert (task,expert reference CSV)")))?;
    let phase = flags.get("phase").unwrap_or("finetune");
    let stats = stats_from_overrides(&flags.overrides)?;

    let mut table = ScoreTable::new();
    load_expert(Path::new(expert), &mut table)?;
    for p in &paths {
        load_scores(p, phase, &mut table)?;
    }
    if table.is_empty() {
        return Err(usage(format!("no rows matched phase '{phase}'")));
    }
    let runs = table.pooled_normalized().map_err(CliError::Core)?.len();
    let rows = compute_rows(&table, &stats)?;

    let out_dir = PathBuf::from(flags.get("out-dir").unwrap_or("."));
    std::fs::create_dir_all(&out_dir)?;
    let csv_path = out_dir.join("report.csv");
    let svg_path = out_dir.join("intervals.svg");
    std::fs::write(&csv_path, report_csv(&rows))?;
    std::fs::write(
        &svg_path,
        intervals_svg(&rows, &stats, runs, flags.has("deterministic")),
    )?;
    println!(
        "{}",
        serde_json::json!({
            "report_csv": csv_path.to_string_lossy(),
            "intervals_svg": svg_path.to_string_lossy(),
            "statistics": rows.len(),
            "runs": runs,
        })
    );
    Ok(())
}
