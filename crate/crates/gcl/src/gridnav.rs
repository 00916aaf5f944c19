//! Continuous-pose navigation in an occupancy grid: unicycle kinematics,
//! ray-cast range observations, and progress-shaped reward.
//!
//! Positions are in cell units; cell (c, r) spans [c, c+1) x [r, r+1) with
//! its center at (c + 0.5, r + 0.5). The agent is a disc; touching an
//! obstacle cell ends the episode.

use std::f64::consts::PI;

use thiserror::Error;

use crate::taskgen::{validate_task, Task};

#[derive(Debug, Error)]
pub enum NavError {
    #[error("invalid task: {reasons}")]
    InvalidTask { reasons: String },
    #[error("episode already finished")]
    EpisodeFinished,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NavConfig {
    pub n_rays: usize,
    /// Field of view in radians, centered on the heading.
    pub fov: f64,
    /// Range cap in cell units.
    pub r_max: f64,
    pub v_max: f64,
    pub omega_max: f64,
    pub goal_radius: f64,
    pub agent_radius: f64,
    pub max_steps: usize,
    pub c_prog: f64,
    pub c_goal: f64,
    pub c_coll: f64,
    pub c_time: f64,
}

impl Default for NavConfig {
    fn default() -> Self {
        NavConfig {
            n_rays: 24,
            fov: 270.0_f64.to_radians(),
            r_max: 6.0,
            v_max: 1.0,
            omega_max: PI / 4.0,
            goal_radius: 0.7,
            agent_radius: 0.3,
            max_steps: 200,
            c_prog: 1.0,
            c_goal: 10.0,
            c_coll: 10.0,
            c_time: 0.01,
        }
    }
}

impl NavConfig {
    /// Observation dimension: ranges plus goal bearing and distance.
    pub fn obs_dim(&self) -> usize {
        self.n_rays + 2
    }

    /// Linear and angular velocity.
    pub const ACTION_DIM: usize = 2;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentState {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub step_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Action {
    pub linear_velocity: f64,
    pub angular_velocity: f64,
}

impl Action {
    /// Clamps to the configured bounds; applied on entry to `step`.
    pub fn clamped(&self, cfg: &NavConfig) -> Action {
        Action {
            linear_velocity: self.linear_velocity.clamp(0.0, cfg.v_max),
            angular_velocity: self.angular_velocity.clamp(-cfg.omega_max, cfg.omega_max),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub ranges: Vec<f64>,
    /// Goal bearing relative to heading, in [-pi, pi).
    pub goal_bearing: f64,
    pub goal_distance: f64,
}

impl Observation {
    /// Fixed-scale network input: ranges/r_max, bearing/pi, distance/scale.
    pub fn to_vector(&self, cfg: &NavConfig, dist_scale: f64) -> Vec<f64> {
        let mut v = Vec::with_capacity(cfg.obs_dim());
        for r in &self.ranges {
            v.push(r / cfg.r_max);
        }
        v.push(self.goal_bearing / PI);
        v.push(self.goal_distance / dist_scale);
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Running,
    ReachedGoal,
    Collided,
    TimedOut,
}

impl Outcome {
    pub fn as_u8(self) -> u8 {
        match self {
            Outcome::Running => 0,
            Outcome::ReachedGoal => 1,
            Outcome::Collided => 2,
            Outcome::TimedOut => 3,
        }
    }

    pub fn from_u8(v: u8) -> Option<Outcome> {
        Some(match v {
            0 => Outcome::Running,
            1 => Outcome::ReachedGoal,
            2 => Outcome::Collided,
            3 => Outcome::TimedOut,
            _ => return None,
        })
    }
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Outcome::Running => "running",
            Outcome::ReachedGoal => "reached_goal",
            Outcome::Collided => "collided",
            Outcome::TimedOut => "timed_out",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub outcome: Outcome,
}

/// One episode in one task. Instances are independent; a single instance
/// is stepped sequentially.
#[derive(Debug, Clone)]
pub struct NavEnv<'a> {
    pub task: &'a Task,
    pub cfg: &'a NavConfig,
    pub state: AgentState,
    prev_goal_dist: f64,
    pub initial_goal_dist: f64,
    done: bool,
    outcome: Outcome,
}

pub fn wrap_angle(a: f64) -> f64 {
    let mut a = (a + PI).rem_euclid(2.0 * PI) - PI;
    if a >= PI {
        a -= 2.0 * PI;
    }
    a
}

fn cell_center(cell: (usize, usize)) -> (f64, f64) {
    (cell.0 as f64 + 0.5, cell.1 as f64 + 0.5)
}

impl<'a> NavEnv<'a> {
    /// Places the agent at the start cell center, facing the goal.
    pub fn reset(task: &'a Task, cfg: &'a NavConfig) -> Result<(NavEnv<'a>, Observation), NavError> {
        let report = validate_task(task);
        if !report.is_valid() {
            let reasons = report
                .failures
                .iter()
                .map(|f| f.to_string())
                .collect::<Vec<_>>()
                .join(", ");
            return Err(NavError::InvalidTask { reasons });
        }
        let (sx, sy) = cell_center(task.start);
        let (gx, gy) = cell_center(task.goal);
        let heading = wrap_angle((gy - sy).atan2(gx - sx));
        let state = AgentState {
            x: sx,
            y: sy,
            heading,
            step_count: 0,
        };
        let goal_dist = ((gx - sx).powi(2) + (gy - sy).powi(2)).sqrt();
        let env = NavEnv {
            task,
            cfg,
            state,
            prev_goal_dist: goal_dist,
            initial_goal_dist: goal_dist,
            done: false,
            outcome: Outcome::Running,
        };
        let obs = env.observe();
        Ok((env, obs))
    }

    pub fn done(&self) -> bool {
        self.done
    }

    pub fn outcome(&self) -> Outcome {
        self.outcome
    }

    pub fn goal_distance(&self) -> f64 {
        let (gx, gy) = cell_center(self.task.goal);
        ((gx - self.state.x).powi(2) + (gy - self.state.y).powi(2)).sqrt()
    }

    pub fn observe(&self) -> Observation {
        let ranges = raycast(
            &self.state,
            self.task,
            self.cfg.n_rays,
            self.cfg.fov,
            self.cfg.r_max,
        );
        let (gx, gy) = cell_center(self.task.goal);
        let bearing = wrap_angle((gy - self.state.y).atan2(gx - self.state.x) - self.state.heading);
        Observation {
            ranges,
            goal_bearing: bearing,
            goal_distance: self.goal_distance(),
        }
    }

    /// Unicycle update, collision and goal tests, shaped reward:
    /// c_prog * (prev_dist - new_dist) + c_goal * [reached]
    /// - c_coll * [collided] - c_time.
    pub fn step(&mut self, action: &Action) -> Result<StepResult, NavError> {
        if self.done {
            return Err(NavError::EpisodeFinished);
        }
        let a = action.clamped(self.cfg);
        self.state.x += a.linear_velocity * self.state.heading.cos();
        self.state.y += a.linear_velocity * self.state.heading.sin();
        self.state.heading = wrap_angle(self.state.heading + a.angular_velocity);
        self.state.step_count += 1;
        // Border cells are walls, so clamping just keeps the collision
        // test in-bounds for pathological velocities.
        let w = self.task.width as f64;
        let h = self.task.height as f64;
        self.state.x = self.state.x.clamp(0.0, w - 1e-9);
        self.state.y = self.state.y.clamp(0.0, h - 1e-9);

        let new_dist = self.goal_distance();
        let collided = disc_hits_obstacle(
            self.task,
            self.state.x,
            self.state.y,
            self.cfg.agent_radius,
        );
        let reached = !collided && new_dist < self.cfg.goal_radius;
        let timed_out = !collided && !reached && self.state.step_count >= self.cfg.max_steps;

        let mut reward = self.cfg.c_prog * (self.prev_goal_dist - new_dist) - self.cfg.c_time;
        self.prev_goal_dist = new_dist;
        self.outcome = if collided {
            reward -= self.cfg.c_coll;
            Outcome::Collided
        } else if reached {
            reward += self.cfg.c_goal;
            Outcome::ReachedGoal
        } else if timed_out {
            Outcome::TimedOut
        } else {
            Outcome::Running
        };
        self.done = self.outcome != Outcome::Running;
        Ok(StepResult {
            observation: self.observe(),
            reward,
            done: self.done,
            outcome: self.outcome,
        })
    }
}

/// True when a disc at (x, y) overlaps any obstacle cell.
pub fn disc_hits_obstacle(task: &Task, x: f64, y: f64, radius: f64) -> bool {
    let c_min = ((x - radius).floor().max(0.0)) as usize;
    let c_max = ((x + radius).floor()).min(task.width as f64 - 1.0) as usize;
    let r_min = ((y - radius).floor().max(0.0)) as usize;
    let r_max = ((y + radius).floor()).min(task.height as f64 - 1.0) as usize;
    for r in r_min..=r_max {
        for c in c_min..=c_max {
            if !task.is_obstacle(c, r) {
                continue;
            }
            // Nearest point of the cell to the disc center.
            let nx = x.clamp(c as f64, c as f64 + 1.0);
            let ny = y.clamp(r as f64, r as f64 + 1.0);
            if (nx - x).powi(2) + (ny - y).powi(2) < radius * radius {
                return true;
            }
        }
    }
    false
}

/// Distances to the nearest occupied-cell boundary along `n_rays` bearings
/// evenly spanning `fov` centered on the heading, capped at `r_max`.
pub fn raycast(state: &AgentState, task: &Task, n_rays: usize, fov: f64, r_max: f64) -> Vec<f64> {
    let mut ranges = Vec::with_capacity(n_rays);
    for i in 0..n_rays {
        let frac = if n_rays == 1 {
            0.5
        } else {
            i as f64 / (n_rays - 1) as f64
        };
        let bearing = state.heading - fov / 2.0 + frac * fov;
        ranges.push(ray_distance(task, state.x, state.y, bearing, r_max));
    }
    ranges
}

/// Grid ray marching (DDA): walks cell boundaries from (x, y) along
/// `angle` and returns the parameter at which an obstacle cell is entered,
/// capped at `r_max`.
pub fn ray_distance(task: &Task, x: f64, y: f64, angle: f64, r_max: f64) -> f64 {
    let dx = angle.cos();
    let dy = angle.sin();
    let mut cc = x.floor() as i64;
    let mut cr = y.floor() as i64;
    let in_bounds = |c: i64, r: i64| c >= 0 && r >= 0 && c < task.width as i64 && r < task.height as i64;
    if in_bounds(cc, cr) && task.is_obstacle(cc as usize, cr as usize) {
        // Starting inside a wall: range is effectively zero but kept
        // strictly positive.
        return f64::MIN_POSITIVE;
    }
    let step_c: i64 = if dx > 0.0 { 1 } else { -1 };
    let step_r: i64 = if dy > 0.0 { 1 } else { -1 };
    let mut t_max_x = if dx != 0.0 {
        let next = if dx > 0.0 { cc as f64 + 1.0 } else { cc as f64 };
        (next - x) / dx
    } else {
        f64::INFINITY
    };
    let mut t_max_y = if dy != 0.0 {
        let next = if dy > 0.0 { cr as f64 + 1.0 } else { cr as f64 };
        (next - y) / dy
    } else {
        f64::INFINITY
    };
    let t_delta_x = if dx != 0.0 { (1.0 / dx).abs() } else { f64::INFINITY };
    let t_delta_y = if dy != 0.0 { (1.0 / dy).abs() } else { f64::INFINITY };

    loop {
        let t;
        if t_max_x < t_max_y {
            t = t_max_x;
            t_max_x += t_delta_x;
            cc += step_c;
        } else {
            t = t_max_y;
            t_max_y += t_delta_y;
            cr += step_r;
        }
        if t > r_max {
            return r_max;
        }
        if !in_bounds(cc, cr) {
            // Off-grid counts as solid; border walls make this rare.
            return t.min(r_max);
        }
        if task.is_obstacle(cc as usize, cr as usize) {
            return t.min(r_max);
        }
    }
}

/// Fraction of the initial goal distance closed by the episode, clamped
/// to [0, 1]; exactly 1 on success.
pub fn navigation_progress(initial_dist: f64, final_dist: f64, outcome: Outcome) -> f64 {
    if outcome == Outcome::ReachedGoal {
        return 1.0;
    }
    if initial_dist <= 0.0 {
        return 1.0;
    }
    (1.0 - final_dist / initial_dist).clamp(0.0, 1.0)
}
