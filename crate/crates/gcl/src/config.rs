//! Flat `key = value` run configuration with section-prefixed keys
//! (`ppo.student.learning_rate = 3e-4`). `#` starts a comment. Unknown
//! keys are errors; anything omitted keeps its default.

use std::fmt::Write as _;
use std::path::PathBuf;

use thiserror::Error;

use crate::gridnav::NavConfig;
use crate::ppo::PpoConfig;
use crate::taskgen::GenerationParams;
use crate::teacher::TeacherConfig;
use crate::vae::VaeConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    Gcl,
    BaseRl,
    ManualCl,
    StatelessTeacher,
    GclNoReal,
    GclNoTask,
    GclNoPerformance,
}

pub const MODE_NAMES: [&str; 7] = [
    "gcl",
    "base_rl",
    "manual_cl",
    "stateless_teacher",
    "gcl_no_real",
    "gcl_no_task",
    "gcl_no_performance",
];

impl RunMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RunMode::Gcl => "gcl",
            RunMode::BaseRl => "base_rl",
            RunMode::ManualCl => "manual_cl",
            RunMode::StatelessTeacher => "stateless_teacher",
            RunMode::GclNoReal => "gcl_no_real",
            RunMode::GclNoTask => "gcl_no_task",
            RunMode::GclNoPerformance => "gcl_no_performance",
        }
    }

    /// Modes that run the full teacher loop (antagonist, VAE, regret).
    pub fn is_teacher_family(self) -> bool {
        !matches!(self, RunMode::BaseRl | RunMode::ManualCl)
    }
}

impl std::str::FromStr for RunMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "gcl" => RunMode::Gcl,
            "base_rl" => RunMode::BaseRl,
            "manual_cl" => RunMode::ManualCl,
            "stateless_teacher" => RunMode::StatelessTeacher,
            "gcl_no_real" => RunMode::GclNoReal,
            "gcl_no_task" => RunMode::GclNoTask,
            "gcl_no_performance" => RunMode::GclNoPerformance,
            other => {
                return Err(format!(
                    "unknown mode '{other}'; valid modes: {}",
                    MODE_NAMES.join(", ")
                ))
            }
        })
    }
}

impl std::fmt::Display for RunMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskPoolConfig {
    pub count: usize,
    pub generation: GenerationParams,
    pub train_ratio: f64,
    /// When set, the pool is loaded from this directory instead of being
    /// generated.
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: RunMode,
    pub iterations: usize,
    pub master_seed: u64,
    pub episodes_per_task: usize,
    pub checkpoint_interval: usize,
    /// Empty means no files are written (in-memory run).
    pub output_dir: Option<PathBuf>,
    pub tasks: TaskPoolConfig,
    pub nav: NavConfig,
    /// The antagonist deliberately has no config of its own: it consumes
    /// this same block.
    pub student_ppo: PpoConfig,
    pub teacher_ppo: PpoConfig,
    pub vae: VaeConfig,
    pub teacher: TeacherConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let nav = NavConfig::default();
        let gen = GenerationParams::default();
        let max_path = ((gen.width * gen.width + gen.height * gen.height) as f64).sqrt();
        RunConfig {
            mode: RunMode::Gcl,
            iterations: 1000,
            master_seed: 0,
            episodes_per_task: 8,
            checkpoint_interval: 100,
            output_dir: None,
            tasks: TaskPoolConfig {
                count: 300,
                generation: gen,
                train_ratio: 0.7,
                dir: None,
            },
            student_ppo: PpoConfig::student_default(),
            teacher_ppo: PpoConfig::teacher_default(),
            vae: VaeConfig::default(),
            teacher: TeacherConfig {
                // Analytic return bound: goal bonus plus the largest
                // possible progress sum.
                return_scale: nav.c_goal + nav.c_prog * max_path,
                ..TeacherConfig::default()
            },
            nav,
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_text(&text)
    }

    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    /// Applies `key = value` overrides on top of the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Parse {
                line: i + 1,
                message: format!("expected 'key = value', got '{line}'"),
            })?;
            self.set(key.trim(), value.trim()).map_err(|message| ConfigError::Parse {
                line: i + 1,
                message,
            })?;
        }
        Ok(())
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String> {
            value.parse().map_err(|_| format!("bad value '{value}' for {key}"))
        }
        match key {
            "run.mode" => self.mode = value.parse()?,
            "run.iterations" => self.iterations = num(key, value)?,
            "run.master_seed" => self.master_seed = num(key, value)?,
            "run.episodes_per_task" => self.episodes_per_task = num(key, value)?,
            "run.checkpoint_interval" => self.checkpoint_interval = num(key, value)?,
            "run.output_dir" => {
                self.output_dir = if value.is_empty() { None } else { Some(value.into()) }
            }
            "tasks.count" => self.tasks.count = num(key, value)?,
            "tasks.width" => self.tasks.generation.width = num(key, value)?,
            "tasks.height" => self.tasks.generation.height = num(key, value)?,
            "tasks.obstacle_density" => self.tasks.generation.obstacle_density = num(key, value)?,
            "tasks.smoothing_iterations" => {
                self.tasks.generation.smoothing_iterations = num(key, value)?
            }
            "tasks.train_ratio" => self.tasks.train_ratio = num(key, value)?,
            "tasks.dir" => {
                self.tasks.dir = if value.is_empty() { None } else { Some(value.into()) }
            }
            "nav.n_rays" => self.nav.n_rays = num(key, value)?,
            "nav.fov_degrees" => self.nav.fov = num::<f64>(key, value)?.to_radians(),
            "nav.r_max" => self.nav.r_max = num(key, value)?,
            "nav.v_max" => self.nav.v_max = num(key, value)?,
            "nav.omega_max" => self.nav.omega_max = num(key, value)?,
            "nav.goal_radius" => self.nav.goal_radius = num(key, value)?,
            "nav.agent_radius" => self.nav.agent_radius = num(key, value)?,
            "nav.max_steps" => self.nav.max_steps = num(key, value)?,
            "nav.c_prog" => self.nav.c_prog = num(key, value)?,
            "nav.c_goal" => self.nav.c_goal = num(key, value)?,
            "nav.c_coll" => self.nav.c_coll = num(key, value)?,
            "nav.c_time" => self.nav.c_time = num(key, value)?,
            _ if key.starts_with("ppo.student.") || key.starts_with("ppo.teacher.") => {
                let (ppo, field) = if let Some(f) = key.strip_prefix("ppo.student.") {
                    (&mut self.student_ppo, f)
                } else {
                    (&mut self.teacher_ppo, key.strip_prefix("ppo.teacher.").unwrap())
                };
                match field {
                    "clip_ratio" => ppo.clip_ratio = num(key, value)?,
                    "gamma" => ppo.gamma = num(key, value)?,
                    "gae_lambda" => ppo.gae_lambda = num(key, value)?,
                    "epochs" => ppo.ppo_epochs = num(key, value)?,
                    "minibatch_size" => ppo.minibatch_size = num(key, value)?,
                    "entropy_coef" => ppo.entropy_coef = num(key, value)?,
                    "log_std_min" => ppo.log_std_min = num(key, value)?,
                    "value_coef" => ppo.value_coef = num(key, value)?,
                    "max_grad_norm" => ppo.max_grad_norm = num(key, value)?,
                    "learning_rate" => ppo.learning_rate = num(key, value)?,
                    other => return Err(format!("unknown ppo key '{other}'")),
                }
            }
            "vae.latent_dim" => self.vae.d_z = num(key, value)?,
            "vae.hidden" => {
                self.vae.hidden = value
                    .split(',')
                    .map(|v| num("vae.hidden", v.trim()))
                    .collect::<Result<_, _>>()?
            }
            "vae.kl_weight" => self.vae.kl_weight = num(key, value)?,
            "vae.epochs" => self.vae.epochs = num(key, value)?,
            "vae.learning_rate" => self.vae.learning_rate = num(key, value)?,
            "teacher.history_len" => self.teacher.history_len = num(key, value)?,
            "teacher.epsilon" => self.teacher.epsilon = num(key, value)?,
            "teacher.return_scale" => self.teacher.return_scale = num(key, value)?,
            "teacher.pseudo_episode_len" => self.teacher.pseudo_episode_len = num(key, value)?,
            "teacher.decode_retries" => self.teacher.decode_retries = num(key, value)?,
            other => return Err(format!("unknown config key '{other}'")),
        }
        Ok(())
    }

    /// Canonical full dump; `from_text(to_text(c)) == c`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let w = &mut s;
        let _ = writeln!(w, "run.mode = {}", self.mode);
        let _ = writeln!(w, "run.iterations = {}", self.iterations);
        let _ = writeln!(w, "run.master_seed = {}", self.master_seed);
        let _ = writeln!(w, "run.episodes_per_task = {}", self.episodes_per_task);
        let _ = writeln!(w, "run.checkpoint_interval = {}", self.checkpoint_interval);
        let _ = writeln!(
            w,
            "run.output_dir = {}",
            self.output_dir.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
        );
        let _ = writeln!(w, "tasks.count = {}", self.tasks.count);
        let _ = writeln!(w, "tasks.width = {}", self.tasks.generation.width);
        let _ = writeln!(w, "tasks.height = {}", self.tasks.generation.height);
        let _ = writeln!(w, "tasks.obstacle_density = {}", self.tasks.generation.obstacle_density);
        let _ = writeln!(
            w,
            "tasks.smoothing_iterations = {}",
            self.tasks.generation.smoothing_iterations
        );
        let _ = writeln!(w, "tasks.train_ratio = {}", self.tasks.train_ratio);
        let _ = writeln!(
            w,
            "tasks.dir = {}",
            self.tasks.dir.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
        );
        let _ = writeln!(w, "nav.n_rays = {}", self.nav.n_rays);
        let _ = writeln!(w, "nav.fov_degrees = {}", self.nav.fov.to_degrees());
        let _ = writeln!(w, "nav.r_max = {}", self.nav.r_max);
        let _ = writeln!(w, "nav.v_max = {}", self.nav.v_max);
        let _ = writeln!(w, "nav.omega_max = {}", self.nav.omega_max);
        let _ = writeln!(w, "nav.goal_radius = {}", self.nav.goal_radius);
        let _ = writeln!(w, "nav.agent_radius = {}", self.nav.agent_radius);
        let _ = writeln!(w, "nav.max_steps = {}", self.nav.max_steps);
        let _ = writeln!(w, "nav.c_prog = {}", self.nav.c_prog);
        let _ = writeln!(w, "nav.c_goal = {}", self.nav.c_goal);
        let _ = writeln!(w, "nav.c_coll = {}", self.nav.c_coll);
        let _ = writeln!(w, "nav.c_time = {}", self.nav.c_time);
        for (name, ppo) in [("student", &self.student_ppo), ("teacher", &self.teacher_ppo)] {
            let _ = writeln!(w, "ppo.{name}.clip_ratio = {}", ppo.clip_ratio);
            let _ = writeln!(w, "ppo.{name}.gamma = {}", ppo.gamma);
            let _ = writeln!(w, "ppo.{name}.gae_lambda = {}", ppo.gae_lambda);
            let _ = writeln!(w, "ppo.{name}.epochs = {}", ppo.ppo_epochs);
            let _ = writeln!(w, "ppo.{name}.minibatch_size = {}", ppo.minibatch_size);
            let _ = writeln!(w, "ppo.{name}.entropy_coef = {}", ppo.entropy_coef);
            let _ = writeln!(w, "ppo.{name}.log_std_min = {}", ppo.log_std_min);
            let _ = writeln!(w, "ppo.{name}.value_coef = {}", ppo.value_coef);
            let _ = writeln!(w, "ppo.{name}.max_grad_norm = {}", ppo.max_grad_norm);
            let _ = writeln!(w, "ppo.{name}.learning_rate = {}", ppo.learning_rate);
        }
        let _ = writeln!(w, "vae.latent_dim = {}", self.vae.d_z);
        let hidden: Vec<String> = self.vae.hidden.iter().map(|h| h.to_string()).collect();
        let _ = writeln!(w, "vae.hidden = {}", hidden.join(","));
        let _ = writeln!(w, "vae.kl_weight = {}", self.vae.kl_weight);
        let _ = writeln!(w, "vae.epochs = {}", self.vae.epochs);
        let _ = writeln!(w, "vae.learning_rate = {}", self.vae.learning_rate);
        let _ = writeln!(w, "teacher.history_len = {}", self.teacher.history_len);
        let _ = writeln!(w, "teacher.epsilon = {}", self.teacher.epsilon);
        let _ = writeln!(w, "teacher.return_scale = {}", self.teacher.return_scale);
        let _ = writeln!(w, "teacher.pseudo_episode_len = {}", self.teacher.pseudo_episode_len);
        let _ = writeln!(w, "teacher.decode_retries = {}", self.teacher.decode_retries);
        s
    }
}
