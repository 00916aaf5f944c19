//! Deterministic policy evaluation (mean actions, no exploration noise)
//! and plot-data emission from training logs.

use std::path::Path;

use crate::curriculum::TrainingLog;
use crate::gridnav::{navigation_progress, Action, NavConfig, NavEnv, Outcome};
use crate::ppo::{GaussianPolicy, PpoError};
use crate::taskgen::{RealTaskSet, Task};

#[derive(Debug, Clone, PartialEq)]
pub struct EvalMetrics {
    /// Fraction of episodes that reached the goal.
    pub task_success: f64,
    /// Mean normalized reduction in goal distance (1 on success).
    pub navigation_progress: f64,
    /// Mean steps over successful episodes only; None when none succeeded.
    pub avg_steps: Option<f64>,
    pub avg_reward: f64,
    /// Mean magnitude of the clamped commanded linear velocity.
    pub avg_speed: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub task_id: String,
    pub outcome: Outcome,
    pub steps: usize,
    pub reward: f64,
    pub progress: f64,
    pub mean_speed: f64,
}

/// One mean-action episode. Identical calls give identical episodes.
pub fn deterministic_episode(
    policy: &GaussianPolicy,
    task: &Task,
    nav_cfg: &NavConfig,
) -> Result<EpisodeRecord, PpoError> {
    let scale = crate::ppo::dist_scale(task);
    let (mut env, obs) = NavEnv::reset(task, nav_cfg)?;
    let mut obs_vec = obs.to_vector(nav_cfg, scale);
    let initial = env.initial_goal_dist;
    let mut reward = 0.0;
    let mut speed_sum = 0.0;
    let mut steps = 0usize;
    loop {
        let a = policy.mean_action(&obs_vec)?;
        let action = Action {
            linear_velocity: a[0],
            angular_velocity: a[1],
        }
        .clamped(nav_cfg);
        speed_sum += action.linear_velocity.abs();
        let result = env.step(&action)?;
        reward += result.reward;
        steps += 1;
        if result.done {
            return Ok(EpisodeRecord {
                task_id: task.id.clone().unwrap_or_default(),
                outcome: result.outcome,
                steps,
                reward,
                progress: navigation_progress(initial, env.goal_distance(), result.outcome),
                mean_speed: speed_sum / steps as f64,
            });
        }
        obs_vec = result.observation.to_vector(nav_cfg, scale);
    }
}

pub fn metrics_from_records(records: &[EpisodeRecord]) -> EvalMetrics {
    assert!(!records.is_empty());
    let n = records.len() as f64;
    let successes: Vec<&EpisodeRecord> = records
        .iter()
        .filter(|r| r.outcome == Outcome::ReachedGoal)
        .collect();
    EvalMetrics {
        task_success: successes.len() as f64 / n,
        navigation_progress: records.iter().map(|r| r.progress).sum::<f64>() / n,
        avg_steps: if successes.is_empty() {
            None
        } else {
            Some(successes.iter().map(|r| r.steps as f64).sum::<f64>() / successes.len() as f64)
        },
        avg_reward: records.iter().map(|r| r.reward).sum::<f64>() / n,
        avg_speed: records.iter().map(|r| r.mean_speed).sum::<f64>() / n,
    }
}

/// Evaluates the policy once per task (the policy is deterministic here, so
/// repeats would be identical). Returns overall metrics plus the raw
/// per-episode records.
pub fn evaluate_policy(
    policy: &GaussianPolicy,
    set: &RealTaskSet,
    nav_cfg: &NavConfig,
) -> Result<(EvalMetrics, Vec<EpisodeRecord>), PpoError> {
    assert!(!set.tasks.is_empty());
    let mut records = Vec::with_capacity(set.tasks.len());
    for task in &set.tasks {
        records.push(deterministic_episode(policy, task, nav_cfg)?);
    }
    Ok((metrics_from_records(&records), records))
}

pub fn metrics_to_csv(overall: &EvalMetrics, records: &[EpisodeRecord]) -> String {
    let mut s = String::from("task_id,outcome,steps,reward,progress,mean_speed\n");
    for r in records {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.task_id, r.outcome, r.steps, r.reward, r.progress, r.mean_speed
        ));
    }
    s.push_str(&format!(
        "# overall success={} progress={} avg_steps={} avg_reward={} avg_speed={}\n",
        overall.task_success,
        overall.navigation_progress,
        overall.avg_steps.map(|v| v.to_string()).unwrap_or_else(|| "n/a".into()),
        overall.avg_reward,
        overall.avg_speed
    ));
    s
}

fn rolling_mean(values: &[f64], window: usize) -> Vec<f64> {
    // Trailing-window mean, skipping NaNs inside the window.
    let mut out = Vec::with_capacity(values.len());
    for i in 0..values.len() {
        let lo = i.saturating_sub(window.saturating_sub(1));
        let slice = &values[lo..=i];
        let finite: Vec<f64> = slice.iter().copied().filter(|v| v.is_finite()).collect();
        out.push(if finite.is_empty() {
            f64::NAN
        } else {
            finite.iter().sum::<f64>() / finite.len() as f64
        });
    }
    out
}

pub const DIFFICULTY_WINDOW: usize = 50;

/// Per-iteration curriculum-difficulty series with a rolling mean, the data
/// behind the difficulty-over-time plot.
pub fn difficulty_series_csv(log: &TrainingLog) -> String {
    let lens: Vec<f64> = log.rows.iter().map(|r| r.shortest_path_length).collect();
    let rolling = rolling_mean(&lens, DIFFICULTY_WINDOW);
    let mut s =
        String::from("iteration,shortest_path_length,source,regret,rolling_difficulty\n");
    for (row, roll) in log.rows.iter().zip(&rolling) {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            row.iteration, row.shortest_path_length, row.source, row.regret, roll
        ));
    }
    s
}

/// Per-iteration return/regret series with rolling means.
pub fn returns_series_csv(log: &TrainingLog) -> String {
    let returns: Vec<f64> = log.rows.iter().map(|r| r.student_return).collect();
    let regrets: Vec<f64> = log.rows.iter().map(|r| r.regret).collect();
    let r_roll = rolling_mean(&returns, DIFFICULTY_WINDOW);
    let g_roll = rolling_mean(&regrets, DIFFICULTY_WINDOW);
    let mut s = String::from(
        "iteration,student_return,rolling_return,antagonist_return,regret,rolling_regret\n",
    );
    for (i, row) in log.rows.iter().enumerate() {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            row.iteration, row.student_return, r_roll[i], row.antagonist_return, row.regret,
            g_roll[i]
        ));
    }
    s
}

pub fn emit_plot_data(log: &TrainingLog, out_dir: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("difficulty.csv"), difficulty_series_csv(log))?;
    std::fs::write(out_dir.join("returns.csv"), returns_series_csv(log))?;
    Ok(())
}
