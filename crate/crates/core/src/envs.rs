//! Toy environments: a damped 2-D pointmass in a unit box and a 10x10
//! gridworld, plus a synthetic probe used to validate skill adaptation.
//! Both real environments are cheap enough that full training studies run
//! in seconds to minutes on one core.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::rng::StreamRng;

/// Outcome of one environment step.
#[derive(Debug, Clone)]
pub struct StepResult {
    pub obs: Vec<f64>,
    pub reward: f64,
    /// Episode is over (time limit or terminal state); caller must reset.
    pub done: bool,
    /// The new state is genuinely terminal: bootstrapped values should be
    /// zeroed. Time-limit endings leave this false.
    pub terminal: bool,
}

/// Continuous-control environment interface used by the training loops.
pub trait Environment {
    fn obs_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn episode_length(&self) -> u32;
    fn reset(&mut self, rng: &mut StreamRng) -> Vec<f64>;
    fn step(&mut self, action: &[f64]) -> StepResult;
    /// The trainer announces the active skill whenever it changes. Synthetic
    /// diagnostic environments may condition their reward on it; physical
    /// environments ignore it.
    fn on_skill(&mut self, _skill: &[f64]) {}
    /// Lifetime count of distinct states touched, for environments with a
    /// discrete notion of coverage.
    fn coverage_cells(&self) -> Option<usize> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerminationMode {
    /// Episodes always run to the configured length.
    FixedLength,
    /// A cliff band near the walls ends the episode early with a terminal
    /// state.
    EarlyTermination,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointmassTask {
    /// No extrinsic reward; used for reward-free pretraining.
    Free,
    ReachNw,
    ReachNe,
    ReachSw,
    ReachSe,
    /// Reward is the velocity component along +x.
    RunX,
}

impl PointmassTask {
    pub fn name(&self) -> &'static str {
        match self {
            PointmassTask::Free => "free",
            PointmassTask::ReachNw => "reach_nw",
            PointmassTask::ReachNe => "reach_ne",
            PointmassTask::ReachSw => "reach_sw",
            PointmassTask::ReachSe => "reach_se",
            PointmassTask::RunX => "run_x",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "free" => PointmassTask::Free,
            "reach_nw" => PointmassTask::ReachNw,
            "reach_ne" => PointmassTask::ReachNe,
            "reach_sw" => PointmassTask::ReachSw,
            "reach_se" => PointmassTask::ReachSe,
            "run_x" => PointmassTask::RunX,
            other => return Err(Error::Config(format!("unknown pointmass task '{other}'"))),
        })
    }

    fn corner(&self) -> Option<[f64; 2]> {
        // +y is north, +x is east
        match self {
            PointmassTask::ReachNw => Some([-1.0, 1.0]),
            PointmassTask::ReachNe => Some([1.0, 1.0]),
            PointmassTask::ReachSw => Some([-1.0, -1.0]),
            PointmassTask::ReachSe => Some([1.0, -1.0]),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PointmassConfig {
    pub task: PointmassTask,
    pub episode_length: u32,
    pub dt: f64,
    pub damping: f64,
    pub force_scale: f64,
    /// Reset position is uniform in [-start_radius, start_radius]^2.
    pub start_radius: f64,
    pub termination: TerminationMode,
    /// Early termination triggers once |x| or |y| reaches this value.
    pub cliff_margin: f64,
}

impl Default for PointmassConfig {
    fn default() -> Self {
        PointmassConfig {
            task: PointmassTask::Free,
            episode_length: 200,
            dt: 0.05,
            damping: 0.05,
            force_scale: 1.0,
            start_radius: 0.1,
            termination: TerminationMode::FixedLength,
            cliff_margin: 0.9,
        }
    }
}

/// Damped pointmass in the box [-1, 1]^2 with semi-implicit Euler dynamics.
/// With the defaults a constant full-force action crosses the arena in well
/// under half an episode.
#[derive(Debug, Clone)]
pub struct Pointmass {
    cfg: PointmassConfig,
    pos: [f64; 2],
    vel: [f64; 2],
    step_idx: u32,
}

impl Pointmass {
    pub fn new(cfg: PointmassConfig) -> Result<Self> {
        if cfg.dt <= 0.0 || !(0.0..1.0).contains(&cfg.damping) || cfg.force_scale <= 0.0 {
            return Err(Error::Config(format!(
                "pointmass dynamics out of range: dt {} damping {} force {}",
                cfg.dt, cfg.damping, cfg.force_scale
            )));
        }
        if !(0.0..=1.0).contains(&cfg.start_radius) || !(0.0..=1.0).contains(&cfg.cliff_margin) {
            return Err(Error::Config(String::from(
                "start_radius and cliff_margin must lie in [0, 1]",
            )));
        }
        Ok(Pointmass {
            cfg,
            pos: [0.0; 2],
            vel: [0.0; 2],
            step_idx: 0,
        })
    }

    pub fn config(&self) -> &PointmassConfig {
        &self.cfg
    }

    /// Pin the state directly; used by trajectory probes and plots.
    pub fn place(&mut self, pos: [f64; 2], vel: [f64; 2]) {
        self.pos = [pos[0].clamp(-1.0, 1.0), pos[1].clamp(-1.0, 1.0)];
        self.vel = vel;
        self.step_idx = 0;
    }

    pub fn position(&self) -> [f64; 2] {
        self.pos
    }

    fn observe(&self) -> Vec<f64> {
        vec![self.pos[0], self.pos[1], self.vel[0], self.vel[1]]
    }

    fn reward(&self) -> f64 {
        if let Some(c) = self.cfg.task.corner() {
            let dx = self.pos[0] - c[0];
            let dy = self.pos[1] - c[1];
            -math::sqrt(dx * dx + dy * dy)
        } else if self.cfg.task == PointmassTask::RunX {
            self.vel[0]
        } else {
            0.0
        }
    }
}

impl Environment for Pointmass {
    fn obs_dim(&self) -> usize {
        4
    }

    fn action_dim(&self) -> usize {
        2
    }

    fn episode_length(&self) -> u32 {
        self.cfg.episode_length
    }

    fn reset(&mut self, rng: &mut StreamRng) -> Vec<f64> {
        let r = self.cfg.start_radius;
        self.pos = [rng.uniform_in(-r, r), rng.uniform_in(-r, r)];
        self.vel = [0.0; 2];
        self.step_idx = 0;
        self.observe()
    }

    fn step(&mut self, action: &[f64]) -> StepResult {
        assert_eq!(action.len(), 2, "pointmass takes 2-d actions");
        let cfg = &self.cfg;
        for axis in 0..2 {
            let a = action[axis].clamp(-1.0, 1.0);
            self.vel[axis] =
                (1.0 - cfg.damping) * self.vel[axis] + cfg.force_scale * a * cfg.dt;
            let p = self.pos[axis] + self.vel[axis] * cfg.dt;
            if p > 1.0 {
                self.pos[axis] = 1.0;
                self.vel[axis] = 0.0; // wall contact kills the velocity on this axis
            } else if p < -1.0 {
                self.pos[axis] = -1.0;
                self.vel[axis] = 0.0;
            } else {
                self.pos[axis] = p;
            }
        }
        self.step_idx += 1;
        let cliff = cfg.termination == TerminationMode::EarlyTermination
            && (math::abs(self.pos[0]) >= cfg.cliff_margin
                || math::abs(self.pos[1]) >= cfg.cliff_margin);
        StepResult {
            obs: self.observe(),
            reward: self.reward(),
            done: cliff || self.step_idx >= cfg.episode_length,
            terminal: cliff,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridTask {
    Free,
    /// Indicator reward for standing on the far corner (9, 9).
    ReachCorner,
}

pub const GRID_SIDE: usize = 10;
pub const GRID_CELLS: usize = GRID_SIDE * GRID_SIDE;

#[derive(Debug, Clone)]
pub struct GridworldConfig {
    pub task: GridTask,
    pub episode_length: u32,
    pub start: (usize, usize),
}

impl Default for GridworldConfig {
    fn default() -> Self {
        GridworldConfig {
            task: GridTask::Free,
            episode_length: 200,
            start: (4, 4),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridMove {
    Up,
    Down,
    Left,
    Right,
}

impl GridMove {
    pub const ALL: [GridMove; 4] = [GridMove::Up, GridMove::Down, GridMove::Left, GridMove::Right];

    pub fn index(&self) -> usize {
        match self {
            GridMove::Up => 0,
            GridMove::Down => 1,
            GridMove::Left => 2,
            GridMove::Right => 3,
        }
    }

    pub fn from_index(i: usize) -> GridMove {
        Self::ALL[i]
    }

    fn delta(&self) -> (isize, isize) {
        match self {
            GridMove::Up => (0, 1),
            GridMove::Down => (0, -1),
            GridMove::Left => (-1, 0),
            GridMove::Right => (1, 0),
        }
    }
}

/// 10x10 gridworld with blocking walls and fixed-length episodes. Tracks the
/// set of cells visited since the last `clear_visited` so coverage studies
/// can read visitation straight off the environment.
#[derive(Debug, Clone)]
pub struct Gridworld {
    cfg: GridworldConfig,
    x: usize,
    y: usize,
    step_idx: u32,
    visited: [bool; GRID_CELLS],
}

impl Gridworld {
    pub fn new(cfg: GridworldConfig) -> Result<Self> {
        if cfg.start.0 >= GRID_SIDE || cfg.start.1 >= GRID_SIDE {
            return Err(Error::Config(format!(
                "start cell {:?} outside the {GRID_SIDE}x{GRID_SIDE} grid",
                cfg.start
            )));
        }
        let mut g = Gridworld {
            cfg,
            x: 0,
            y: 0,
            step_idx: 0,
            visited: [false; GRID_CELLS],
        };
        g.reset_state();
        Ok(g)
    }

    fn reset_state(&mut self) {
        self.x = self.cfg.start.0;
        self.y = self.cfg.start.1;
        self.step_idx = 0;
        self.visited[self.cell()] = true;
    }

    pub fn config(&self) -> &GridworldConfig {
        &self.cfg
    }

    pub fn cell(&self) -> usize {
        self.y * GRID_SIDE + self.x
    }

    pub fn clear_visited(&mut self) {
        self.visited = [false; GRID_CELLS];
        self.visited[self.cell()] = true;
    }

    pub fn visited_count(&self) -> usize {
        self.visited.iter().filter(|&&v| v).count()
    }

    /// Fraction of the grid touched since the last `clear_visited`.
    pub fn visited_fraction(&self) -> f64 {
        self.visited_count() as f64 / GRID_CELLS as f64
    }

    /// One-hot encoding over the 100 cells.
    pub fn obs_onehot(&self) -> Vec<f64> {
        let mut v = vec![0.0; GRID_CELLS];
        v[self.cell()] = 1.0;
        v
    }

    /// Coordinate encoding (x, y) / 10.
    pub fn obs_coords(&self) -> Vec<f64> {
        vec![self.x as f64 / GRID_SIDE as f64, self.y as f64 / GRID_SIDE as f64]
    }

    pub fn reset_discrete(&mut self) -> usize {
        self.reset_state();
        self.cell()
    }

    /// Take a cardinal move; walls block (the agent stays put).
    pub fn step_discrete(&mut self, m: GridMove) -> (usize, f64, bool) {
        let (dx, dy) = m.delta();
        let nx = self.x as isize + dx;
        let ny = self.y as isize + dy;
        if (0..GRID_SIDE as isize).contains(&nx) && (0..GRID_SIDE as isize).contains(&ny) {
            self.x = nx as usize;
            self.y = ny as usize;
        }
        self.step_idx += 1;
        self.visited[self.cell()] = true;
        let reward = match self.cfg.task {
            GridTask::ReachCorner => {
                if self.x == GRID_SIDE - 1 && self.y == GRID_SIDE - 1 {
                    1.0
                } else {
                    0.0
                }
            }
            GridTask::Free => 0.0,
        };
        (self.cell(), reward, self.step_idx >= self.cfg.episode_length)
    }
}

/// Continuous-control adapter: a 2-d action moves along its dominant axis,
/// positive x meaning right and positive y meaning up. Observations are the
/// coordinate encoding.
#[derive(Debug, Clone)]
pub struct GridworldContinuous {
    pub grid: Gridworld,
}

impl GridworldContinuous {
    pub fn new(cfg: GridworldConfig) -> Result<Self> {
        Ok(GridworldContinuous {
            grid: Gridworld::new(cfg)?,
        })
    }

    pub fn action_to_move(action: &[f64]) -> GridMove {
        debug_assert_eq!(action.len(), 2);
        let (ax, ay) = (action[0], action[1]);
        if math::abs(ax) >= math::abs(ay) {
            if ax >= 0.0 {
                GridMove::Right
            } else {
                GridMove::Left
            }
        } else if ay >= 0.0 {
            GridMove::Up
        } else {
            GridMove::Down
        }
    }
}

impl Environment for GridworldContinuous {
    fn obs_dim(&self) -> usize {
        2
    }

    fn action_dim(&self) -> usize {
        2
    }

    fn episode_length(&self) -> u32 {
        self.grid.cfg.episode_length
    }

    fn reset(&mut self, _rng: &mut StreamRng) -> Vec<f64> {
        self.grid.reset_discrete();
        self.grid.obs_coords()
    }

    fn step(&mut self, action: &[f64]) -> StepResult {
        let (_, reward, done) = self.grid.step_discrete(Self::action_to_move(action));
        StepResult {
            obs: self.grid.obs_coords(),
            reward,
            done,
            terminal: false,
        }
    }

    fn coverage_cells(&self) -> Option<usize> {
        Some(self.grid.visited_count())
    }
}

/// Fraction of cells covered by a log of one-hot observations. Input rows
/// must be exact one-hot vectors over the same width.
pub fn coverage(onehot_obs: &[Vec<f64>]) -> Result<f64> {
    if onehot_obs.is_empty() {
        return Ok(0.0);
    }
    let width = onehot_obs[0].len();
    if width == 0 {
        return Err(Error::Contract(String::from("empty observation rows")));
    }
    let mut seen = vec![false; width];
    for (ri, row) in onehot_obs.iter().enumerate() {
        if row.len() != width {
            return Err(Error::Contract(format!(
                "row {ri} has width {}, expected {width}",
                row.len()
            )));
        }
        let mut hot = None;
        for (i, &v) in row.iter().enumerate() {
            if v == 1.0 {
                if hot.is_some() {
                    hot = None;
                    break;
                }
                hot = Some(i);
            } else if v != 0.0 {
                hot = None;
                break;
            }
        }
        match hot {
            Some(i) => seen[i] = true,
            None => {
                return Err(Error::Contract(format!(
                    "row {ri} is not one-hot"
                )))
            }
        }
    }
    Ok(seen.iter().filter(|&&s| s).count() as f64 / width as f64)
}

/// Synthetic environment for validating skill selection: reward depends only
/// on the announced skill, peaking when its mean hits `target`. Exists for
/// tests and diagnostics, not for training studies.
#[derive(Debug, Clone)]
pub struct SkillRewardProbe {
    pub target: f64,
    pub episode_length: u32,
    skill_mean: f64,
    step_idx: u32,
}

impl SkillRewardProbe {
    pub fn new(target: f64, episode_length: u32) -> Self {
        SkillRewardProbe {
            target,
            episode_length,
            skill_mean: 0.0,
            step_idx: 0,
        }
    }
}

impl Environment for SkillRewardProbe {
    fn obs_dim(&self) -> usize {
        1
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn episode_length(&self) -> u32 {
        self.episode_length
    }

    fn reset(&mut self, _rng: &mut StreamRng) -> Vec<f64> {
        self.step_idx = 0;
        vec![0.0]
    }

    fn step(&mut self, _action: &[f64]) -> StepResult {
        self.step_idx += 1;
        StepResult {
            obs: vec![0.0],
            reward: -math::abs(self.skill_mean - self.target),
            done: self.step_idx >= self.episode_length,
            terminal: false,
        }
    }

    fn on_skill(&mut self, skill: &[f64]) {
        self.skill_mean = if skill.is_empty() {
            0.0
        } else {
            skill.iter().sum::<f64>() / skill.len() as f64
        };
    }
}

/// Environment selection as it appears in run configuration.
#[derive(Debug, Clone)]
pub enum EnvConfig {
    Pointmass(PointmassConfig),
    Gridworld(GridworldConfig),
}

impl EnvConfig {
    pub fn build(&self) -> Result<Box<dyn Environment>> {
        Ok(match self {
            EnvConfig::Pointmass(cfg) => Box::new(Pointmass::new(cfg.clone())?),
            EnvConfig::Gridworld(cfg) => Box::new(GridworldContinuous::new(cfg.clone())?),
        })
    }

    pub fn obs_dim(&self) -> usize {
        match self {
            EnvConfig::Pointmass(_) => 4,
            EnvConfig::Gridworld(_) => 2,
        }
    }

    pub fn action_dim(&self) -> usize {
        2
    }

    pub fn episode_length(&self) -> u32 {
        match self {
            EnvConfig::Pointmass(cfg) => cfg.episode_length,
            EnvConfig::Gridworld(cfg) => cfg.episode_length,
        }
    }

    pub fn task_name(&self) -> &'static str {
        match self {
            EnvConfig::Pointmass(cfg) => cfg.task.name(),
            EnvConfig::Gridworld(cfg) => match cfg.task {
                GridTask::Free => "free",
                GridTask::ReachCorner => "reach_corner",
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedTree;

    #[test]
    fn hand_integrated_first_step() {
        let mut pm = Pointmass::new(PointmassConfig {
            dt: 0.1,
            damping: 0.0,
            force_scale: 1.0,
            start_radius: 0.0,
            ..PointmassConfig::default()
        })
        .unwrap();
        pm.place([0.0, 0.0], [0.0, 0.0]);
        let r = pm.step(&[1.0, 0.0]);
        assert!((r.obs[2] - 0.1).abs() < 1e-15, "vx {}", r.obs[2]);
        assert_eq!(r.obs[3], 0.0);
        assert!((r.obs[0] - 0.01).abs() < 1e-15, "px {}", r.obs[0]);
        assert_eq!(r.obs[1], 0.0);
    }

    #[test]
    fn zero_action_decays_velocity_geometrically() {
        let mut pm = Pointmass::new(PointmassConfig::default()).unwrap();
        pm.place([0.0, 0.0], [0.5, -0.5]);
        let mut v = 0.5;
        for _ in 0..50 {
            let r = pm.step(&[0.0, 0.0]);
            v *= 1.0 - 0.05;
            assert!((r.obs[2] - v).abs() < 1e-12);
            assert!((r.obs[3] + v).abs() < 1e-12);
        }
    }

    #[test]
    fn full_force_crosses_arena_within_half_episode() {
        let mut pm = Pointmass::new(PointmassConfig::default()).unwrap();
        pm.place([0.0, 0.0], [0.0, 0.0]);
        let mut crossed_at = None;
        for t in 1..=100 {
            let r = pm.step(&[1.0, 0.0]);
            if r.obs[0] >= 0.99 {
                crossed_at = Some(t);
                break;
            }
        }
        assert!(crossed_at.is_some(), "never reached the east wall");
    }

    #[test]
    fn walls_clamp_position_and_zero_velocity() {
        let mut pm = Pointmass::new(PointmassConfig::default()).unwrap();
        pm.place([0.999, 0.0], [1.0, 0.0]);
        let r = pm.step(&[1.0, 0.0]);
        assert_eq!(r.obs[0], 1.0);
        assert_eq!(r.obs[2], 0.0);
        assert!(math::all_finite(&r.obs));
    }

    #[test]
    fn positions_stay_in_box_under_random_play() {
        let mut pm = Pointmass::new(PointmassConfig::default()).unwrap();
        let mut rng = SeedTree::new(1).stream("env");
        pm.reset(&mut rng);
        for _ in 0..2000 {
            let a = [rng.uniform_in(-2.0, 2.0), rng.uniform_in(-2.0, 2.0)];
            let r = pm.step(&a);
            assert!(r.obs[0].abs() <= 1.0 && r.obs[1].abs() <= 1.0);
            if r.done {
                pm.reset(&mut rng);
            }
        }
    }

    #[test]
    fn early_termination_never_outlasts_fixed_length() {
        let mk = |mode| {
            Pointmass::new(PointmassConfig {
                termination: mode,
                ..PointmassConfig::default()
            })
            .unwrap()
        };
        let mut fixed = mk(TerminationMode::FixedLength);
        let mut early = mk(TerminationMode::EarlyTermination);
        let mut rng = SeedTree::new(9).stream("acts");
        for _ in 0..20 {
            let mut r1 = fixed.reset(&mut SeedTree::new(2).stream("r"));
            let r2 = early.reset(&mut SeedTree::new(2).stream("r"));
            assert_eq!(r1, r2);
            let mut t_fixed = None;
            let mut t_early = None;
            for t in 1..=400 {
                let a = [rng.uniform_in(-1.0, 1.0), rng.uniform_in(-1.0, 1.0)];
                let s1 = fixed.step(&a);
                if t_early.is_none() {
                    let s2 = early.step(&a);
                    if s2.done {
                        t_early = Some(t);
                        assert!(s2.terminal || t == 200);
                    }
                }
                if s1.done {
                    t_fixed = Some(t);
                    assert!(!s1.terminal);
                    r1 = s1.obs;
                    break;
                }
            }
            let _ = r1;
            assert_eq!(t_fixed, Some(200));
            assert!(t_early.unwrap() <= 200);
        }
    }

    #[test]
    fn reach_reward_is_negative_distance() {
        let mut pm = Pointmass::new(PointmassConfig {
            task: PointmassTask::ReachNe,
            ..PointmassConfig::default()
        })
        .unwrap();
        pm.place([1.0, 1.0], [0.0, 0.0]);
        let r = pm.step(&[0.0, 0.0]);
        assert_eq!(r.reward, 0.0);
        pm.place([-1.0, 1.0], [0.0, 0.0]);
        let r = pm.step(&[0.0, 0.0]);
        assert!((r.reward + 2.0).abs() < 1e-12);
    }

    #[test]
    fn grid_moves_and_walls() {
        let mut g = Gridworld::new(GridworldConfig {
            start: (0, 0),
            ..GridworldConfig::default()
        })
        .unwrap();
        let (cell, _, _) = g.step_discrete(GridMove::Right);
        assert_eq!(cell, 1);
        let (cell, _, _) = g.step_discrete(GridMove::Down); // blocked at the south wall
        assert_eq!(cell, 1);
        let (cell, _, _) = g.step_discrete(GridMove::Up);
        assert_eq!(cell, 11);
        assert_eq!(g.visited_count(), 3);
    }

    #[test]
    fn grid_episode_ends_at_length() {
        let mut g = Gridworld::new(GridworldConfig {
            episode_length: 5,
            ..GridworldConfig::default()
        })
        .unwrap();
        for t in 1..=5 {
            let (_, _, done) = g.step_discrete(GridMove::Left);
            assert_eq!(done, t == 5);
        }
    }

    #[test]
    fn corner_reward_fires_only_on_goal() {
        let mut g = Gridworld::new(GridworldConfig {
            task: GridTask::ReachCorner,
            start: (8, 9),
            ..GridworldConfig::default()
        })
        .unwrap();
        let (_, r, _) = g.step_discrete(GridMove::Right);
        assert_eq!(r, 1.0);
        let (_, r, _) = g.step_discrete(GridMove::Left);
        assert_eq!(r, 0.0);
    }

    #[test]
    fn continuous_adapter_maps_dominant_axis() {
        assert_eq!(GridworldContinuous::action_to_move(&[0.6, 0.2]), GridMove::Right);
        assert_eq!(GridworldContinuous::action_to_move(&[-0.6, 0.2]), GridMove::Left);
        assert_eq!(GridworldContinuous::action_to_move(&[0.1, 0.5]), GridMove::Up);
        assert_eq!(GridworldContinuous::action_to_move(&[0.1, -0.5]), GridMove::Down);
        // ties go to the x axis; an all-zero action drifts right
        assert_eq!(GridworldContinuous::action_to_move(&[0.0, 0.0]), GridMove::Right);
    }

    #[test]
    fn coverage_counts_distinct_cells() {
        let g = Gridworld::new(GridworldConfig::default()).unwrap();
        let a = g.obs_onehot();
        let mut g2 = Gridworld::new(GridworldConfig::default()).unwrap();
        g2.step_discrete(GridMove::Right);
        let b = g2.obs_onehot();
        let frac = coverage(&[a.clone(), b, a]).unwrap();
        assert!((frac - 2.0 / 100.0).abs() < 1e-15);
    }

    #[test]
    fn coverage_rejects_non_onehot() {
        let mut row = vec![0.0; 100];
        row[3] = 0.5;
        assert!(matches!(coverage(&[row]), Err(Error::Contract(_))));
        let two = {
            let mut r = vec![0.0; 100];
            r[1] = 1.0;
            r[2] = 1.0;
            r
        };
        assert!(coverage(&[two]).is_err());
    }

    #[test]
    fn coverage_matches_set_based_oracle_on_random_walk() {
        let mut g = Gridworld::new(GridworldConfig::default()).unwrap();
        let mut rng = SeedTree::new(4).stream("walk");
        let mut log = Vec::new();
        let mut oracle = std::collections::HashSet::new();
        log.push(g.obs_onehot());
        oracle.insert(g.cell());
        for _ in 0..5000 {
            let m = GridMove::from_index(rng.index(4));
            let (cell, _, done) = g.step_discrete(m);
            log.push(g.obs_onehot());
            oracle.insert(cell);
            if done {
                g.reset_discrete();
            }
        }
        let frac = coverage(&log).unwrap();
        assert_eq!(frac, oracle.len() as f64 / 100.0);
        assert_eq!(frac, g.visited_fraction());
    }

    #[test]
    fn probe_reward_tracks_announced_skill() {
        let mut p = SkillRewardProbe::new(0.3, 10);
        p.on_skill(&[0.3, 0.3]);
        assert_eq!(p.step(&[0.0]).reward, 0.0);
        p.on_skill(&[1.0, 0.0]);
        assert!((p.step(&[0.0]).reward + 0.2).abs() < 1e-12);
    }
}
