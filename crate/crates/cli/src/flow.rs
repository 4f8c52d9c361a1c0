//! Behavior flow field for pointmass checkpoints: roll the deterministic
//! policy from a lattice of start positions under each requested constant
//! skill and draw the mean per-step displacement as an arrow. One SVG panel
//! per skill value; a JSONL dump of every trajectory rides along so the
//! arrows can be recomputed from raw data.

use std::path::PathBuf;

use cic_core::envs::{Environment, EnvConfig, Pointmass, PointmassConfig};
use cic_core::trainer::Agent;

use crate::{checkpoint, config, parse_flags, skill_for, usage, CliError};

pub struct FlowSpec {
    pub skills: Vec<f64>,
    pub grid: usize,
    pub horizon: u32,
}

pub struct Arrow {
    /// Start position (lattice point, after wall clamping).
    pub start: [f64; 2],
    /// Mean per-step displacement over the horizon.
    pub mean_disp: [f64; 2],
    /// Visited positions, start first, horizon+1 entries.
    pub path: Vec<[f64; 2]>,
}

pub struct Panel {
    pub v: f64,
    pub arrows: Vec<Arrow>,
}

pub struct FlowData {
    pub panels: Vec<Panel>,
    pub grid: usize,
    pub horizon: u32,
}

/// Lattice of cell centers, so no start sits on a wall.  The single
/// division keeps symmetric grids exactly symmetric about zero.
fn lattice(grid: usize) -> Vec<f64> {
    (0..grid)
        .map(|i| ((2 * i + 1) as f64 - grid as f64) / grid as f64)
        .collect()
}

pub fn flow_field(
    agent: &Agent,
    cfg: &PointmassConfig,
    spec: &FlowSpec,
) -> Result<FlowData, CliError> {
    if spec.grid == 0 || spec.horizon == 0 || spec.skills.is_empty() {
        return Err(usage(String::from(
            "flow field needs --grid >= 1, --horizon >= 1 and at least one skill value",
        )));
    }
    let axis = lattice(spec.grid);
    let mut panels = Vec::with_capacity(spec.skills.len());
    for &v in &spec.skills {
        let skill = skill_for(agent, v)?;
        let mut arrows = Vec::with_capacity(spec.grid * spec.grid);
        // row-major from the north-west corner, matching reading order
        for &y in axis.iter().rev() {
            for &x in &axis {
                let mut env = Pointmass::new(cfg.clone())?;
                env.place([x, y], [0.0, 0.0]);
                let start = env.position();
                let mut obs = vec![start[0], start[1], 0.0, 0.0];
                let mut path = Vec::with_capacity(spec.horizon as usize + 1);
                path.push(start);
                // raw dynamics probe: episode bookkeeping (done flags,
                // cliffs) is deliberately ignored
                for _ in 0..spec.horizon {
                    let action = agent.ddpg.act(&obs, &skill, None)?;
                    let sr = env.step(&action);
                    obs = sr.obs;
                    path.push(env.position());
                }
                let end = *path.last().expect("horizon >= 1");
                let h = spec.horizon as f64;
                arrows.push(Arrow {
                    start,
                    mean_disp: [(end[0] - start[0]) / h, (end[1] - start[1]) / h],
                    path,
                });
            }
        }
        panels.push(Panel { v, arrows });
    }
    Ok(FlowData {
        panels,
        grid: spec.grid,
        horizon: spec.horizon,
    })
}

/// One JSONL record per arrow; `arrow` must equal
/// (path.last - path.first) / horizon, which readers can recheck.
pub fn trajectories_jsonl(data: &FlowData) -> String {
    let mut out = String::new();
    for (pi, panel) in data.panels.iter().enumerate() {
        for a in &panel.arrows {
            out.push_str(
                &serde_json::json!({
                    "panel": pi,
                    "v": panel.v,
                    "horizon": data.horizon,
                    "start": a.start,
                    "arrow": a.mean_disp,
                    "path": a.path,
                })
                .to_string(),
            );
            out.push('\n');
        }
    }
    out
}

const PANEL_PX: f64 = 220.0;
const PAD_PX: f64 = 20.0;
const TITLE_PX: f64 = 28.0;

pub fn render_svg(data: &FlowData, deterministic: bool) -> String {
    let n = data.panels.len();
    let width = PAD_PX + n as f64 * (PANEL_PX + PAD_PX);
    let height = TITLE_PX + PANEL_PX + PAD_PX;
    // shared arrow scale across panels so lengths are comparable
    let max_mag = data
        .panels
        .iter()
        .flat_map(|p| &p.arrows)
        .map(|a| (a.mean_disp[0].powi(2) + a.mean_disp[1].powi(2)).sqrt())
        .fold(0.0_f64, f64::max);
    let cell_px = PANEL_PX / data.grid as f64;
    let scale = if max_mag > 0.0 { 0.45 * cell_px / max_mag } else { 0.0 };

    let mut s = String::new();
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" \
         viewBox=\"0 0 {width:.0} {height:.0}\">\n"
    ));
    if !deterministic {
        let secs = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        s.push_str(&format!("<!-- generated at unix {secs} -->\n"));
    }
    s.push_str(
        "<defs><marker id=\"tip\" markerWidth=\"6\" markerHeight=\"6\" refX=\"5\" refY=\"3\" \
         orient=\"auto\"><path d=\"M0,0 L6,3 L0,6 z\" fill=\"#1f6feb\"/></marker></defs>\n\
         <style>.arrow{stroke:#1f6feb;stroke-width:1.5;fill:none}\
         .frame{fill:none;stroke:#888}\
         text{font-family:monospace;font-size:12px;fill:#333}</style>\n\
         <rect width=\"100%\" height=\"100%\" fill=\"#fff\"/>\n",
    );
    for (pi, panel) in data.panels.iter().enumerate() {
        let ox = PAD_PX + pi as f64 * (PANEL_PX + PAD_PX);
        let oy = TITLE_PX;
        s.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\">v = {}</text>\n",
            ox,
            TITLE_PX - 10.0,
            panel.v
        ));
        s.push_str(&format!(
            "<rect class=\"frame\" x=\"{ox:.2}\" y=\"{oy:.2}\" width=\"{PANEL_PX:.2}\" height=\"{PANEL_PX:.2}\"/>\n"
        ));
        for a in &panel.arrows {
            // arena [-1,1]^2 to pixels; +y (north) is up
            let px = ox + (a.start[0] + 1.0) / 2.0 * PANEL_PX;
            let py = oy + (1.0 - (a.start[1] + 1.0) / 2.0) * PANEL_PX;
            let qx = px + a.mean_disp[0] * scale;
            let qy = py - a.mean_disp[1] * scale;
            s.push_str(&format!(
                "<line class=\"arrow\" x1=\"{px:.2}\" y1=\"{py:.2}\" x2=\"{qx:.2}\" y2=\"{qy:.2}\" \
                 marker-end=\"url(#tip)\"/>\n"
            ));
        }
    }
    s.push_str("</svg>\n");
    s
}

fn parse_skill_list(raw: &str) -> Result<Vec<f64>, CliError> {
    raw.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| usage(format!("--skills: '{t}' is not a number")))
        })
        .collect()
}

pub fn cmd_plot_flow(rest: &[String]) -> Result<(), CliError> {
    let flags = parse_flags(
        rest,
        &[
            ("checkpoint", true),
            ("out", true),
            ("skills", true),
            ("grid", true),
            ("horizon", true),
            ("deterministic", false),
        ],
    )?;
    let ck_path = flags
        .get("checkpoint")
        .ok_or_else(|| usage(String::from("plot-flow needs --checkpoint")))?;
    let bytes = std::fs::read(ck_path)?;
    let (stored, arrays) = checkpoint::decode(&bytes)?;
    let resolved = config::resolve(Some(&stored), "checkpoint", &flags.overrides)?;
    let run = &resolved.run;
    let EnvConfig::Pointmass(pm_cfg) = &run.env else {
        return Err(usage(String::from(
            "flow fields are a pointmass plot; this checkpoint holds a different environment",
        )));
    };
    let agent = Agent::from_arrays(run, run.env.obs_dim(), run.env.action_dim(), &arrays)?;

    let spec = FlowSpec {
        skills: parse_skill_list(flags.get("skills").unwrap_or("0,0.5,1"))?,
        grid: flags.parsed::<usize>("grid", "a positive integer")?.unwrap_or(5),
        horizon: flags.parsed::<u32>("horizon", "a positive integer")?.unwrap_or(24),
    };
    let data = flow_field(&agent, pm_cfg, &spec)?;

    let out = PathBuf::from(flags.get("out").unwrap_or("flow.svg"));
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(&out, render_svg(&data, flags.has("deterministic")))?;
    let traj = out.with_extension("traj.jsonl");
    std::fs::write(&traj, trajectories_jsonl(&data))?;
    println!(
        "{}",
        serde_json::json!({
            "svg": out.to_string_lossy(),
            "trajectories": traj.to_string_lossy(),
            "panels": data.panels.len(),
            "arrows_per_panel": data.grid * data.grid,
        })
    );
    Ok(())
}
