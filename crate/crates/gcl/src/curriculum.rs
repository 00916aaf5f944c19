//! The training loop: task selection, student/antagonist rollouts, regret,
//! teacher state updates, and the three PPO updates per iteration. Also the
//! baseline schedules (uniform-random and difficulty-ordered) and the three
//! ablation switches, which reroute exactly one signal each.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng as _, SeedableRng};
use thiserror::Error;

use crate::checkpoint::{Checkpoint, CheckpointError, ParamBlock};
use crate::config::{RunConfig, RunMode};
use crate::gridnav::Outcome;
use crate::nn::NnError;
use crate::ppo::{
    collect_rollouts, ppo_update, PpoAgent, PpoError, Trajectory, TrajectoryStep,
};
use crate::taskgen::{
    generate_pool, load_tasks, shortest_path_length, RealTaskSet, Task, TaskError,
};
use crate::teacher::{
    compute_regret, encode_state, select_task, teacher_update, SelectionStats, TaskSource,
    TeacherConfig, TeacherError, TeacherState,
};
use crate::vae::{sample_latent, train_vae, TaskVae, VaeError};

pub const POLICY_HIDDEN: [usize; 2] = [64, 64];
pub const TEACHER_HIDDEN: [usize; 2] = [64, 64];

/// Derived-stream tags; separate streams keep setup randomness (pool, VAE
/// pretraining, weight init) from perturbing the training loop, which is
/// what makes checkpoint resume bit-exact.
pub const STREAM_VAE: u64 = 2;
pub const STREAM_INIT: u64 = 3;
pub const STREAM_LOOP: u64 = 4;
pub const STREAM_SPLIT: u64 = 5;
/// Substitute latents/returns for the ablations come from their own stream
/// (one latent + one uniform per teacher-family iteration) so the exact
/// sequence can be replayed independently of the loop.
pub const STREAM_ABLATION: u64 = 6;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Vae(#[from] VaeError),
    #[error(transparent)]
    Ppo(#[from] PpoError),
    #[error(transparent)]
    Teacher(#[from] TeacherError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot resume: {0}")]
    Resume(String),
}

/// Deterministic shuffled split; both halves are non-empty and disjoint.
pub fn split_train_test(
    mut tasks: Vec<Task>,
    train_ratio: f64,
    seed: u64,
) -> (RealTaskSet, RealTaskSet) {
    assert!(tasks.len() >= 2, "need at least two tasks to split");
    assert!(train_ratio > 0.0 && train_ratio < 1.0);
    let mut rng = crate::rng_stream(seed, STREAM_SPLIT);
    tasks.shuffle(&mut rng);
    let n_train =
        ((tasks.len() as f64 * train_ratio).round() as usize).clamp(1, tasks.len() - 1);
    let test = tasks.split_off(n_train);
    (
        RealTaskSet {
            tasks,
            split_seed: seed,
        },
        RealTaskSet {
            tasks: test,
            split_seed: seed,
        },
    )
}

/// One training-log record. Fields that do not exist under a given mode
/// (e.g. regret under `base_rl`) hold NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub iteration: u64,
    pub task_id: String,
    pub source: String,
    pub shortest_path_length: f64,
    pub student_return: f64,
    pub antagonist_return: f64,
    pub regret: f64,
    pub student_policy_loss: f64,
    pub student_value_loss: f64,
    pub antagonist_policy_loss: f64,
    pub antagonist_value_loss: f64,
    pub teacher_policy_loss: f64,
    pub teacher_value_loss: f64,
}

pub const LOG_HEADER: &str = "iteration,task_id,source,shortest_path_length,student_return,\
antagonist_return,regret,student_policy_loss,student_value_loss,antagonist_policy_loss,\
antagonist_value_loss,teacher_policy_loss,teacher_value_loss";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub rows: Vec<LogRow>,
}

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(LOG_HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                r.iteration,
                r.task_id,
                r.source,
                r.shortest_path_length,
                r.student_return,
                r.antagonist_return,
                r.regret,
                r.student_policy_loss,
                r.student_value_loss,
                r.antagonist_policy_loss,
                r.antagonist_value_loss,
                r.teacher_policy_loss,
                r.teacher_value_loss,
            ));
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self, String> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h == LOG_HEADER => {}
            other => return Err(format!("bad log header: {other:?}")),
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 13 {
                return Err(format!("log line {}: expected 13 fields, got {}", i + 2, f.len()));
            }
            let num = |s: &str| {
                s.parse::<f64>().map_err(|_| format!("log line {}: bad number '{s}'", i + 2))
            };
            rows.push(LogRow {
                iteration: f[0]
                    .parse()
                    .map_err(|_| format!("log line {}: bad iteration '{}'", i + 2, f[0]))?,
                task_id: f[1].to_string(),
                source: f[2].to_string(),
                shortest_path_length: num(f[3])?,
                student_return: num(f[4])?,
                antagonist_return: num(f[5])?,
                regret: num(f[6])?,
                student_policy_loss: num(f[7])?,
                student_value_loss: num(f[8])?,
                antagonist_policy_loss: num(f[9])?,
                antagonist_value_loss: num(f[10])?,
                teacher_policy_loss: num(f[11])?,
                teacher_value_loss: num(f[12])?,
            });
        }
        Ok(TrainingLog { rows })
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_csv())
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_csv(&text).map_err(RunError::Resume)
    }
}

/// Per-iteration bookkeeping consumed by the structural loop checks.
#[derive(Debug, Clone, Default)]
pub struct IterationAudit {
    pub tasks_selected: u32,
    pub regrets_computed: u32,
    pub state_updates: u32,
    pub student_updates: u32,
    pub antagonist_updates: u32,
    pub teacher_updates: u32,
    /// State vector fed to the teacher policy this iteration.
    pub teacher_input: Vec<f64>,
    /// Latent actually pushed into the teacher state.
    pub state_latent: Vec<f64>,
    /// Return actually pushed into the teacher state (NaN if none).
    pub state_return: f64,
}

#[derive(Debug, Clone, Default)]
pub struct RunAudit {
    pub iterations: Vec<IterationAudit>,
    pub selection: SelectionStats,
}

#[derive(Debug)]
pub struct RunOutput {
    pub config: RunConfig,
    pub student: PpoAgent,
    pub antagonist: Option<PpoAgent>,
    pub teacher: Option<PpoAgent>,
    pub vae: Option<TaskVae>,
    pub teacher_state: Option<TeacherState>,
    pub train_set: RealTaskSet,
    pub test_set: RealTaskSet,
    pub log: TrainingLog,
    pub audit: RunAudit,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for x in xs {
        sum += x;
        n += 1;
    }
    sum / n as f64
}

fn agent_blocks(prefix: &str, agent: &PpoAgent) -> Vec<(String, ParamBlock)> {
    vec![
        (
            format!("{prefix}.policy"),
            ParamBlock {
                params: agent.policy.flat_params(),
                adam_m: agent.policy_opt.m.clone(),
                adam_v: agent.policy_opt.v.clone(),
                adam_step: agent.policy_opt.step,
            },
        ),
        (
            format!("{prefix}.value"),
            ParamBlock {
                params: agent.value_net.params().to_vec(),
                adam_m: agent.value_opt.m.clone(),
                adam_v: agent.value_opt.v.clone(),
                adam_step: agent.value_opt.step,
            },
        ),
    ]
}

fn restore_agent(agent: &mut PpoAgent, ckpt: &Checkpoint, prefix: &str) -> Result<(), RunError> {
    let missing = |n: &str| RunError::Resume(format!("checkpoint missing block '{n}'"));
    let pol = ckpt
        .block(&format!("{prefix}.policy"))
        .ok_or_else(|| missing(&format!("{prefix}.policy")))?;
    agent.policy.set_flat_params(&pol.params)?;
    agent.policy_opt.m = pol.adam_m.clone();
    agent.policy_opt.v = pol.adam_v.clone();
    agent.policy_opt.step = pol.adam_step;
    let val = ckpt
        .block(&format!("{prefix}.value"))
        .ok_or_else(|| missing(&format!("{prefix}.value")))?;
    agent.value_net.set_params(&val.params)?;
    agent.value_opt.m = val.adam_m.clone();
    agent.value_opt.v = val.adam_v.clone();
    agent.value_opt.step = val.adam_step;
    Ok(())
}

pub fn run(config: &RunConfig) -> Result<RunOutput, RunError> {
    run_resumed(config, None)
}

/// Full training run; with a checkpoint, continues from its iteration and
/// reproduces the uninterrupted run exactly.
pub fn run_resumed(config: &RunConfig, resume: Option<&Checkpoint>) -> Result<RunOutput, RunError> {
    let mode = config.mode;
    let teacher_family = mode.is_teacher_family();
    let master = config.master_seed;

    // Task pool and split: deterministic in the master seed, identical on
    // resume because none of it touches the loop stream.
    let pool = match &config.tasks.dir {
        Some(dir) => load_tasks(dir)?.tasks,
        None => generate_pool(config.tasks.count, &config.tasks.generation, master)?,
    };
    let (train_set, test_set) = split_train_test(pool, config.tasks.train_ratio, master);
    let n_train = train_set.tasks.len();

    let mut init_rng = crate::rng_stream(master, STREAM_INIT);
    let obs_dim = config.nav.obs_dim();
    let mut student = PpoAgent::new(
        obs_dim,
        crate::gridnav::NavConfig::ACTION_DIM,
        &POLICY_HIDDEN,
        config.student_ppo.learning_rate,
        &mut init_rng,
    );

    let d_z = config.vae.d_z;
    let teacher_obs_dim = config.teacher.history_len * (d_z + 1);
    let (mut antagonist, mut teacher, mut vae) = if teacher_family {
        let antagonist = PpoAgent::new(
            obs_dim,
            crate::gridnav::NavConfig::ACTION_DIM,
            &POLICY_HIDDEN,
            config.student_ppo.learning_rate,
            &mut init_rng,
        );
        let vae = TaskVae::new(
            config.tasks.generation.width,
            config.tasks.generation.height,
            &config.vae,
            &mut init_rng,
        );
        let mut teacher = PpoAgent::new(
            teacher_obs_dim,
            d_z,
            &TEACHER_HIDDEN,
            config.teacher_ppo.learning_rate,
            &mut init_rng,
        );
        // The teacher acts in latent space; unit initial std matches the
        // prior the decoder was trained under, so early selections cover
        // the whole grounded task distribution instead of the dataset
        // mean (which decodes to a near-open arena).
        for ls in &mut teacher.policy.log_std {
            *ls = 0.0;
        }
        (Some(antagonist), Some(teacher), Some(vae))
    } else {
        (None, None, None)
    };

    let mut state = TeacherState::empty(config.teacher.history_len);
    let mut teacher_segment: Vec<TrajectoryStep> = Vec::new();
    let mut loop_rng;
    let start_iter;

    match resume {
        None => {
            // VAE grounding happens once, before the loop (Algorithm line 1).
            if let Some(v) = vae.as_mut() {
                let mut vae_rng = crate::rng_stream(master, STREAM_VAE);
                train_vae(v, &train_set, &config.vae, &mut vae_rng)?;
            }
            loop_rng = crate::rng_stream(master, STREAM_LOOP);
            start_iter = 0;
        }
        Some(ckpt) => {
            if ckpt.iteration as usize > config.iterations {
                return Err(RunError::Resume(format!(
                    "checkpoint is at iteration {} but the run has only {}",
                    ckpt.iteration, config.iterations
                )));
            }
            restore_agent(&mut student, ckpt, "student")?;
            if teacher_family {
                restore_agent(antagonist.as_mut().unwrap(), ckpt, "antagonist")?;
                restore_agent(teacher.as_mut().unwrap(), ckpt, "teacher")?;
                let v = vae.as_mut().unwrap();
                let enc = ckpt
                    .block("vae.encoder")
                    .ok_or_else(|| RunError::Resume("checkpoint missing vae.encoder".into()))?;
                v.encoder.set_params(&enc.params)?;
                let dec = ckpt
                    .block("vae.decoder")
                    .ok_or_else(|| RunError::Resume("checkpoint missing vae.decoder".into()))?;
                v.decoder.set_params(&dec.params)?;
            }
            for (z, ret) in &ckpt.teacher_history {
                state.update(crate::vae::LatentTask { z: z.clone() }, *ret);
            }
            teacher_segment = ckpt.teacher_segment.clone();
            loop_rng = crate::Rng::from_seed(ckpt.rng_seed);
            loop_rng.set_word_pos(ckpt.rng_word_pos);
            start_iter = ckpt.iteration as usize;
        }
    }

    // Difficulty order for the hand-designed curriculum: shortest-path
    // length ascending, id as tie-break.
    let manual_order: Vec<usize> = if mode == RunMode::ManualCl {
        let mut idx: Vec<usize> = (0..n_train).collect();
        idx.sort_by_key(|&i| {
            let t = &train_set.tasks[i];
            (shortest_path_length(t).unwrap_or(usize::MAX), t.id.clone())
        });
        idx
    } else {
        Vec::new()
    };

    let mut log = TrainingLog::default();
    let mut audit = RunAudit::default();
    let seg_len = config.teacher.pseudo_episode_len.max(1);

    let mut ablation_rng = crate::rng_stream(master, STREAM_ABLATION);
    if teacher_family {
        // Fast-forward past the iterations a resumed run already consumed.
        for _ in 0..start_iter {
            let _ = sample_latent(d_z, &mut ablation_rng);
            let _ = ablation_rng.random::<f64>();
        }
    }

    for iter in start_iter..config.iterations {
        let mut ia = IterationAudit {
            state_return: f64::NAN,
            ..Default::default()
        };
        let mut row = LogRow {
            iteration: iter as u64,
            task_id: String::new(),
            source: String::new(),
            shortest_path_length: f64::NAN,
            student_return: f64::NAN,
            antagonist_return: f64::NAN,
            regret: f64::NAN,
            student_policy_loss: f64::NAN,
            student_value_loss: f64::NAN,
            antagonist_policy_loss: f64::NAN,
            antagonist_value_loss: f64::NAN,
            teacher_policy_loss: f64::NAN,
            teacher_value_loss: f64::NAN,
        };

        if teacher_family {
            let teacher_agent = teacher.as_mut().unwrap();
            let antagonist_agent = antagonist.as_mut().unwrap();
            let vae_ref = vae.as_ref().unwrap();

            let epsilon = match mode {
                RunMode::StatelessTeacher | RunMode::GclNoReal => 0.0,
                _ => config.teacher.epsilon,
            };
            let eff_cfg = TeacherConfig {
                epsilon,
                // Without the real-task mixture there is no fallback to lean
                // on, so keep resampling until a decode is reachable.
                decode_retries: if mode == RunMode::GclNoReal {
                    10_000
                } else {
                    config.teacher.decode_retries
                },
                ..config.teacher.clone()
            };
            let state_vec = if mode == RunMode::StatelessTeacher {
                vec![0.0; teacher_obs_dim]
            } else {
                encode_state(&state, d_z, config.teacher.return_scale)
            };
            ia.teacher_input = state_vec.clone();

            let choice = select_task(
                &teacher_agent.policy,
                &state_vec,
                &eff_cfg,
                &train_set,
                vae_ref,
                &mut loop_rng,
                &mut audit.selection,
            )?;
            ia.tasks_selected += 1;
            row.task_id = match choice.source {
                TaskSource::Real => choice.task.id.clone().unwrap_or_else(|| "real".into()),
                TaskSource::Generated => format!("gen-{iter:05}"),
            };
            row.source = choice.source.to_string();
            row.shortest_path_length = shortest_path_length(&choice.task)
                .map(|n| n as f64)
                .unwrap_or(f64::NAN);

            let s_trajs = collect_rollouts(
                &student.policy,
                &student.value_net,
                &[&choice.task],
                config.episodes_per_task,
                &config.nav,
                &mut loop_rng,
            )?;
            let a_trajs = collect_rollouts(
                &antagonist_agent.policy,
                &antagonist_agent.value_net,
                &[&choice.task],
                config.episodes_per_task,
                &config.nav,
                &mut loop_rng,
            )?;
            row.student_return = mean(s_trajs.iter().map(|t| t.episode_return));
            row.antagonist_return = mean(a_trajs.iter().map(|t| t.episode_return));

            // Flexible regret from the same rollouts the updates consume.
            let gamma = config.student_ppo.gamma;
            let v_s = mean(s_trajs.iter().map(|t| t.discounted_return(gamma)));
            let v_a = mean(a_trajs.iter().map(|t| t.discounted_return(gamma)));
            let regret = compute_regret(v_a, v_s)?;
            ia.regrets_computed += 1;
            row.regret = regret;

            let ab_latent = sample_latent(d_z, &mut ablation_rng);
            let ab_return = ablation_rng.random::<f64>();
            let latent_entry = if mode == RunMode::GclNoTask {
                ab_latent
            } else {
                choice.latent.clone()
            };
            let return_entry = if mode == RunMode::GclNoPerformance {
                ab_return
            } else {
                row.student_return
            };
            ia.state_latent = latent_entry.z.clone();
            ia.state_return = return_entry;
            state.update(latent_entry, return_entry);
            ia.state_updates += 1;

            // One teacher transition per iteration; real-sourced picks get
            // their log-prob evaluated under the current policy.
            let log_prob = match choice.log_prob {
                Some(lp) => lp,
                None => {
                    let mu = teacher_agent.policy.mean_action(&state_vec)?;
                    teacher_agent.policy.log_prob(&mu, &choice.latent.z)
                }
            };
            let value_estimate = teacher_agent.value_net.output(&state_vec)?[0];
            teacher_segment.push(TrajectoryStep {
                observation: state_vec,
                action: choice.latent.z.clone(),
                log_prob,
                reward: regret,
                value_estimate,
                done: teacher_segment.len() + 1 == seg_len,
            });

            let s_report = ppo_update(&mut student, &s_trajs, &config.student_ppo, &mut loop_rng)?;
            ia.student_updates += 1;
            row.student_policy_loss = s_report.policy_loss;
            row.student_value_loss = s_report.value_loss;
            let a_report =
                ppo_update(antagonist_agent, &a_trajs, &config.student_ppo, &mut loop_rng)?;
            ia.antagonist_updates += 1;
            row.antagonist_policy_loss = a_report.policy_loss;
            row.antagonist_value_loss = a_report.value_loss;

            let seg_traj = Trajectory {
                steps: teacher_segment.clone(),
                episode_return: teacher_segment.iter().map(|s| s.reward).sum(),
                outcome: Outcome::TimedOut,
                initial_goal_distance: 0.0,
                final_goal_distance: 0.0,
            };
            let t_report =
                teacher_update(teacher_agent, &seg_traj, &config.teacher_ppo, &mut loop_rng)?;
            ia.teacher_updates += 1;
            row.teacher_policy_loss = t_report.policy_loss;
            row.teacher_value_loss = t_report.value_loss;
            if teacher_segment.len() >= seg_len {
                teacher_segment.clear();
            }
        } else {
            let task = match mode {
                RunMode::BaseRl => {
                    let idx = loop_rng.random_range(0..n_train);
                    &train_set.tasks[idx]
                }
                RunMode::ManualCl => {
                    // Uniform pacing through the difficulty ordering.
                    let idx = manual_order[iter * n_train / config.iterations];
                    &train_set.tasks[idx]
                }
                _ => unreachable!(),
            };
            ia.tasks_selected += 1;
            row.task_id = task.id.clone().unwrap_or_else(|| "real".into());
            row.source = TaskSource::Real.to_string();
            row.shortest_path_length =
                shortest_path_length(task).map(|n| n as f64).unwrap_or(f64::NAN);

            let s_trajs = collect_rollouts(
                &student.policy,
                &student.value_net,
                &[task],
                config.episodes_per_task,
                &config.nav,
                &mut loop_rng,
            )?;
            row.student_return = mean(s_trajs.iter().map(|t| t.episode_return));
            let s_report = ppo_update(&mut student, &s_trajs, &config.student_ppo, &mut loop_rng)?;
            ia.student_updates += 1;
            row.student_policy_loss = s_report.policy_loss;
            row.student_value_loss = s_report.value_loss;
        }

        log.rows.push(row);
        audit.iterations.push(ia);

        if let Some(dir) = &config.output_dir {
            let completed = iter + 1;
            let due = config.checkpoint_interval > 0 && completed % config.checkpoint_interval == 0;
            if due || completed == config.iterations {
                std::fs::create_dir_all(dir)?;
                let mut blocks = agent_blocks("student", &student);
                if teacher_family {
                    blocks.extend(agent_blocks("antagonist", antagonist.as_ref().unwrap()));
                    blocks.extend(agent_blocks("teacher", teacher.as_ref().unwrap()));
                    let v = vae.as_ref().unwrap();
                    for (name, net) in [("vae.encoder", &v.encoder), ("vae.decoder", &v.decoder)] {
                        blocks.push((
                            name.to_string(),
                            ParamBlock {
                                params: net.params().to_vec(),
                                adam_m: vec![],
                                adam_v: vec![],
                                adam_step: 0,
                            },
                        ));
                    }
                }
                let ckpt = Checkpoint {
                    iteration: completed as u64,
                    rng_seed: loop_rng.get_seed(),
                    rng_word_pos: loop_rng.get_word_pos(),
                    config_text: config.to_text(),
                    blocks,
                    teacher_history: state
                        .entries()
                        .map(|(l, r)| (l.z.clone(), *r))
                        .collect(),
                    teacher_segment: teacher_segment.clone(),
                };
                crate::checkpoint::save(&ckpt, &dir.join(format!("ckpt_{completed:06}.bin")))?;
            }
        }
    }

    if let Some(dir) = &config.output_dir {
        std::fs::create_dir_all(dir)?;
        log.save(&dir.join("log.csv"))?;
    }

    Ok(RunOutput {
        config: config.clone(),
        student,
        antagonist,
        teacher,
        vae,
        teacher_state: if teacher_family { Some(state) } else { None },
        train_set,
        test_set,
        log,
        audit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taskgen::GenerationParams;

    fn small_pool(n: usize) -> Vec<Task> {
        generate_pool(
            n,
            &GenerationParams {
                width: 10,
                height: 10,
                ..GenerationParams::default()
            },
            7,
        )
        .unwrap()
    }

    fn tiny_config(mode: RunMode) -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.mode = mode;
        cfg.iterations = 3;
        cfg.master_seed = 11;
        cfg.episodes_per_task = 2;
        cfg.tasks.count = 8;
        cfg.tasks.generation.width = 10;
        cfg.tasks.generation.height = 10;
        cfg.nav.max_steps = 40;
        cfg.vae.epochs = 5;
        cfg.vae.hidden = vec![32];
        cfg
    }

    #[test]
    fn split_is_disjoint_and_sized() {
        let pool = small_pool(10);
        let (train, test) = split_train_test(pool, 0.7, 3);
        assert_eq!(train.tasks.len(), 7);
        assert_eq!(test.tasks.len(), 3);
        for t in &train.tasks {
            assert!(!test.tasks.iter().any(|u| u.id == t.id));
        }
    }

    #[test]
    fn split_is_deterministic_in_seed() {
        let ids = |set: &RealTaskSet| -> Vec<String> {
            set.tasks.iter().map(|t| t.id.clone().unwrap()).collect()
        };
        let (a, _) = split_train_test(small_pool(10), 0.7, 3);
        let (b, _) = split_train_test(small_pool(10), 0.7, 3);
        let (c, _) = split_train_test(small_pool(10), 0.7, 4);
        assert_eq!(ids(&a), ids(&b));
        assert_ne!(ids(&a), ids(&c));
    }

    #[test]
    fn log_round_trips_including_nan() {
        let log = TrainingLog {
            rows: vec![LogRow {
                iteration: 5,
                task_id: "task-0001".into(),
                source: "real".into(),
                shortest_path_length: 12.0,
                student_return: -3.25,
                antagonist_return: f64::NAN,
                regret: f64::NAN,
                student_policy_loss: 0.013,
                student_value_loss: 1.5,
                antagonist_policy_loss: f64::NAN,
                antagonist_value_loss: f64::NAN,
                teacher_policy_loss: f64::NAN,
                teacher_value_loss: f64::NAN,
            }],
        };
        let back = TrainingLog::from_csv(&log.to_csv()).unwrap();
        assert_eq!(back.rows.len(), 1);
        let (a, b) = (&log.rows[0], &back.rows[0]);
        assert_eq!(a.iteration, b.iteration);
        assert_eq!(a.task_id, b.task_id);
        assert_eq!(a.student_return, b.student_return);
        assert!(b.regret.is_nan());
        assert!(b.antagonist_return.is_nan());
    }

    #[test]
    fn base_rl_run_has_no_teacher_artifacts() {
        let out = run(&tiny_config(RunMode::BaseRl)).unwrap();
        assert!(out.teacher.is_none());
        assert!(out.vae.is_none());
        assert_eq!(out.log.rows.len(), 3);
        for (row, ia) in out.log.rows.iter().zip(&out.audit.iterations) {
            assert!(row.regret.is_nan());
            assert!(row.antagonist_return.is_nan());
            assert_eq!(row.source, "real");
            assert_eq!(ia.student_updates, 1);
            assert_eq!(ia.teacher_updates, 0);
            assert_eq!(ia.state_updates, 0);
        }
    }

    #[test]
    fn gcl_run_does_one_of_everything_per_iteration() {
        let out = run(&tiny_config(RunMode::Gcl)).unwrap();
        assert_eq!(out.log.rows.len(), 3);
        for ia in &out.audit.iterations {
            assert_eq!(ia.tasks_selected, 1);
            assert_eq!(ia.regrets_computed, 1);
            assert_eq!(ia.state_updates, 1);
            assert_eq!(ia.student_updates, 1);
            assert_eq!(ia.antagonist_updates, 1);
            assert_eq!(ia.teacher_updates, 1);
        }
        for row in &out.log.rows {
            assert!(row.regret.is_finite());
            assert!(row.teacher_policy_loss.is_finite());
        }
    }

    #[test]
    fn manual_cl_visits_tasks_in_nondecreasing_difficulty() {
        let mut cfg = tiny_config(RunMode::ManualCl);
        cfg.iterations = 6;
        let out = run(&cfg).unwrap();
        let lens: Vec<f64> = out.log.rows.iter().map(|r| r.shortest_path_length).collect();
        for w in lens.windows(2) {
            assert!(w[1] >= w[0], "difficulty decreased: {lens:?}");
        }
    }

    #[test]
    fn stateless_teacher_sees_zero_state() {
        let out = run(&tiny_config(RunMode::StatelessTeacher)).unwrap();
        for ia in &out.audit.iterations {
            assert!(ia.teacher_input.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn identical_seeds_give_identical_logs() {
        let cfg = tiny_config(RunMode::Gcl);
        let a = run(&cfg).unwrap();
        let b = run(&cfg).unwrap();
        assert_eq!(a.log.to_csv(), b.log.to_csv());
        assert_eq!(a.student.policy.flat_params(), b.student.policy.flat_params());
    }

    #[test]
    fn resume_reproduces_the_uninterrupted_run() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_config(RunMode::Gcl);
        cfg.iterations = 4;
        cfg.checkpoint_interval = 2;
        cfg.output_dir = Some(dir.path().to_path_buf());
        let full = run(&cfg).unwrap();

        let ckpt = crate::checkpoint::load(&dir.path().join("ckpt_000002.bin")).unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        let mut cfg2 = cfg.clone();
        cfg2.output_dir = Some(dir2.path().to_path_buf());
        let resumed = run_resumed(&cfg2, Some(&ckpt)).unwrap();

        assert_eq!(resumed.log.rows.len(), 2);
        let tail = &full.log.rows[2..];
        for (a, b) in tail.iter().zip(&resumed.log.rows) {
            let csv_a = TrainingLog { rows: vec![a.clone()] }.to_csv();
            let csv_b = TrainingLog { rows: vec![b.clone()] }.to_csv();
            assert_eq!(csv_a, csv_b);
        }
        assert_eq!(
            full.student.policy.flat_params(),
            resumed.student.policy.flat_params()
        );
    }
}
