use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::SeedableRng;

use gcl::checkpoint;
use gcl::config::{RunConfig, RunMode};
use gcl::curriculum::{self, split_train_test, TrainingLog, POLICY_HIDDEN};
use gcl::eval::{evaluate_policy, metrics_to_csv, EvalMetrics};
use gcl::ppo::GaussianPolicy;
use gcl::taskgen::{generate_pool, load_tasks, save_tasks, RealTaskSet};
use gcl::vae::{reconstruction_accuracy, train_vae, TaskVae};

#[derive(Parser)]
#[command(name = "gcl", version, about = "Curriculum-trained grid navigation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Run configuration file (key = value lines); defaults apply if omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides run.master_seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides run.mode.
    #[arg(long)]
    mode: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a solvable task pool and write it to a directory.
    GenTasks {
        #[command(flatten)]
        common: Common,
        /// Output directory for the task files and manifest.
        #[arg(long)]
        out: PathBuf,
        /// Overrides tasks.count.
        #[arg(long)]
        count: Option<usize>,
    },
    /// Pretrain the task VAE on the train split and report accuracy.
    TrainVae {
        #[command(flatten)]
        common: Common,
        /// Where to write the VAE weights (checkpoint format).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the training loop in the configured mode.
    Train {
        #[command(flatten)]
        common: Common,
        /// Output directory for checkpoints and the training log.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides run.iterations.
        #[arg(long)]
        iterations: Option<usize>,
        /// Resume from this checkpoint file.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate a trained student on the held-out split.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Checkpoint holding the student weights.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Optional CSV output path for per-task results.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Turn a training log into plot-ready CSV series.
    EmitPlots {
        /// Training log (log.csv from a run).
        #[arg(long)]
        log: PathBuf,
        /// Output directory for the series files.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug)]
enum CliError {
    /// Bad usage or configuration: exit 1.
    Config(String),
    /// Runtime failure: exit 2.
    Runtime(String),
}

impl From<gcl::curriculum::RunError> for CliError {
    fn from(e: gcl::curriculum::RunError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn load_config(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::from_file(path).map_err(|e| CliError::Config(e.to_string()))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.master_seed = seed;
    }
    if let Some(mode) = &common.mode {
        cfg.mode = mode.parse::<RunMode>().map_err(CliError::Config)?;
    }
    Ok(cfg)
}

fn build_pool(cfg: &RunConfig) -> Result<Vec<gcl::taskgen::Task>, CliError> {
    match &cfg.tasks.dir {
        Some(dir) => Ok(load_tasks(dir)
            .map_err(|e| CliError::Runtime(e.to_string()))?
            .tasks),
        None => generate_pool(cfg.tasks.count, &cfg.tasks.generation, cfg.master_seed)
            .map_err(|e| CliError::Runtime(e.to_string())),
    }
}

fn print_metrics(label: &str, m: &EvalMetrics) {
    println!(
        "{label}: success {:.3}  progress {:.3}  avg_steps {}  avg_reward {:.3}  avg_speed {:.3}",
        m.task_success,
        m.navigation_progress,
        m.avg_steps.map(|v| format!("{v:.1}")).unwrap_or_else(|| "n/a".into()),
        m.avg_reward,
        m.avg_speed
    );
}

fn cmd_gen_tasks(common: Common, out: PathBuf, count: Option<usize>) -> Result<(), CliError> {
    let mut cfg = load_config(&common)?;
    if let Some(c) = count {
        cfg.tasks.count = c;
    }
    let tasks = generate_pool(cfg.tasks.count, &cfg.tasks.generation, cfg.master_seed)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let n = tasks.len();
    let set = RealTaskSet {
        tasks,
        split_seed: cfg.master_seed,
    };
    save_tasks(&set, &out).map_err(|e| CliError::Runtime(e.to_string()))?;
    println!("wrote {n} tasks to {}", out.display());
    Ok(())
}

fn cmd_train_vae(common: Common, out: Option<PathBuf>) -> Result<(), CliError> {
    let cfg = load_config(&common)?;
    let pool = build_pool(&cfg)?;
    let (train_set, test_set) = split_train_test(pool, cfg.tasks.train_ratio, cfg.master_seed);
    let mut init_rng = gcl::rng_stream(cfg.master_seed, curriculum::STREAM_INIT);
    let mut vae = TaskVae::new(
        cfg.tasks.generation.width,
        cfg.tasks.generation.height,
        &cfg.vae,
        &mut init_rng,
    );
    let mut vae_rng = gcl::rng_stream(cfg.master_seed, curriculum::STREAM_VAE);
    let curve = train_vae(&mut vae, &train_set, &cfg.vae, &mut vae_rng)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let acc = |set: &RealTaskSet| -> Result<f64, CliError> {
        let mut sum = 0.0;
        for t in &set.tasks {
            sum += reconstruction_accuracy(&vae, t).map_err(|e| CliError::Runtime(e.to_string()))?;
        }
        Ok(sum / set.tasks.len() as f64)
    };
    println!(
        "final loss {:.4}  train accuracy {:.4}  held-out accuracy {:.4}",
        curve.last().copied().unwrap_or(f64::NAN),
        acc(&train_set)?,
        acc(&test_set)?
    );
    if let Some(path) = out {
        let blocks = vec![
            (
                "vae.encoder".to_string(),
                checkpoint::ParamBlock {
                    params: vae.encoder.params().to_vec(),
                    adam_m: vec![],
                    adam_v: vec![],
                    adam_step: 0,
                },
            ),
            (
                "vae.decoder".to_string(),
                checkpoint::ParamBlock {
                    params: vae.decoder.params().to_vec(),
                    adam_m: vec![],
                    adam_v: vec![],
                    adam_step: 0,
                },
            ),
        ];
        let ckpt = checkpoint::Checkpoint {
            iteration: 0,
            rng_seed: [0; 32],
            rng_word_pos: 0,
            config_text: cfg.to_text(),
            blocks,
            teacher_history: vec![],
            teacher_segment: vec![],
        };
        checkpoint::save(&ckpt, &path).map_err(|e| CliError::Runtime(e.to_string()))?;
        println!("wrote VAE weights to {}", path.display());
    }
    Ok(())
}

fn cmd_train(
    common: Common,
    out: Option<PathBuf>,
    iterations: Option<usize>,
    resume: Option<PathBuf>,
) -> Result<(), CliError> {
    let mut cfg = load_config(&common)?;
    if let Some(dir) = out {
        cfg.output_dir = Some(dir);
    }
    if let Some(n) = iterations {
        cfg.iterations = n;
    }
    let ckpt = match resume {
        Some(path) => {
            Some(checkpoint::load(&path).map_err(|e| CliError::Runtime(e.to_string()))?)
        }
        None => None,
    };
    let output = curriculum::run_resumed(&cfg, ckpt.as_ref())?;
    let (metrics, _) = evaluate_policy(&output.student.policy, &output.test_set, &cfg.nav)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    println!(
        "mode {}  iterations {}  train tasks {}  test tasks {}",
        cfg.mode,
        cfg.iterations,
        output.train_set.tasks.len(),
        output.test_set.tasks.len()
    );
    print_metrics("held-out", &metrics);
    if let Some(dir) = &cfg.output_dir {
        println!("log and checkpoints in {}", dir.display());
    }
    Ok(())
}

fn cmd_eval(common: Common, checkpoint_path: PathBuf, out: Option<PathBuf>) -> Result<(), CliError> {
    let ckpt =
        checkpoint::load(&checkpoint_path).map_err(|e| CliError::Runtime(e.to_string()))?;
    // The checkpoint's embedded config is the source of truth; CLI flags
    // still override on top.
    let mut cfg =
        RunConfig::from_text(&ckpt.config_text).map_err(|e| CliError::Config(e.to_string()))?;
    if let Some(path) = &common.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.apply_text(&text).map_err(|e| CliError::Config(e.to_string()))?;
    }
    if let Some(seed) = common.seed {
        cfg.master_seed = seed;
    }
    let pool = build_pool(&cfg)?;
    let (_, test_set) = split_train_test(pool, cfg.tasks.train_ratio, cfg.master_seed);

    let block = ckpt
        .block("student.policy")
        .ok_or_else(|| CliError::Runtime("checkpoint has no student.policy block".into()))?;
    let mut throwaway = gcl::Rng::seed_from_u64(0);
    let mut policy = GaussianPolicy::new(
        cfg.nav.obs_dim(),
        gcl::gridnav::NavConfig::ACTION_DIM,
        &POLICY_HIDDEN,
        &mut throwaway,
    );
    policy
        .set_flat_params(&block.params)
        .map_err(|e| CliError::Runtime(format!("checkpoint/config mismatch: {e}")))?;

    let (metrics, records) = evaluate_policy(&policy, &test_set, &cfg.nav)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    println!(
        "checkpoint {} (iteration {})  test tasks {}",
        checkpoint_path.display(),
        ckpt.iteration,
        test_set.tasks.len()
    );
    print_metrics("held-out", &metrics);
    if let Some(path) = out {
        std::fs::write(&path, metrics_to_csv(&metrics, &records))
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        println!("wrote per-task results to {}", path.display());
    }
    Ok(())
}

fn cmd_emit_plots(log: PathBuf, out: PathBuf) -> Result<(), CliError> {
    let log = TrainingLog::load(&log).map_err(|e| CliError::Runtime(e.to_string()))?;
    gcl::eval::emit_plot_data(&log, &out).map_err(|e| CliError::Runtime(e.to_string()))?;
    println!("wrote plot series to {}", out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenTasks { common, out, count } => cmd_gen_tasks(common, out, count),
        Command::TrainVae { common, out } => cmd_train_vae(common, out),
        Command::Train {
            common,
            out,
            iterations,
            resume,
        } => cmd_train(common, out, iterations, resume),
        Command::Eval {
            common,
            checkpoint,
            out,
        } => cmd_eval(common, checkpoint, out),
        Command::EmitPlots { log, out } => cmd_emit_plots(log, out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are successful exits; everything else is a
            // usage error.
            let code = if e.exit_code() == 0 { 0 } else { 1 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
