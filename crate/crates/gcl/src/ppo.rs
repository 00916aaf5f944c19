//! PPO with clipped surrogate objective and GAE, over diagonal-Gaussian
//! policies. The same machinery trains the student, the antagonist, and
//! the teacher; it also provides the empirical value estimates the regret
//! is built from.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng as _;
use thiserror::Error;

use crate::gridnav::{Action, NavConfig, NavEnv, NavError, Outcome};
use crate::nn::{clip_grad_norm, Activation, AdamState, Mlp, NnError, OutputActivation};
use crate::taskgen::Task;

#[derive(Debug, Error)]
pub enum PpoError {
    #[error("non-finite loss: {0}")]
    NonFiniteLoss(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Nav(#[from] NavError),
}

/// Diagonal-Gaussian policy: an MLP mean head plus a state-independent
/// learned log-std per action dimension.
#[derive(Debug, Clone)]
pub struct GaussianPolicy {
    pub net: Mlp,
    pub log_std: Vec<f64>,
}

pub const INIT_LOG_STD: f64 = -0.7; // std ~ 0.5

impl GaussianPolicy {
    pub fn new(obs_dim: usize, action_dim: usize, hidden: &[usize], rng: &mut crate::Rng) -> Self {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(action_dim);
        let mut net = Mlp::new(sizes, Activation::Tanh, OutputActivation::Identity);
        net.init_scaled(rng);
        // Near-zero initial means keep the initial action distribution
        // close to centered.
        net.scale_output_layer(0.01);
        GaussianPolicy {
            net,
            log_std: vec![INIT_LOG_STD; action_dim],
        }
    }

    pub fn action_dim(&self) -> usize {
        self.log_std.len()
    }

    pub fn mean_action(&self, obs: &[f64]) -> Result<Vec<f64>, NnError> {
        self.net.output(obs)
    }

    /// Samples an action and returns its log-probability (before any
    /// clamping the environment applies).
    pub fn sample(&self, obs: &[f64], rng: &mut crate::Rng) -> Result<(Vec<f64>, f64), NnError> {
        let mean = self.net.output(obs)?;
        let mut action = Vec::with_capacity(mean.len());
        for (m, ls) in mean.iter().zip(self.log_std.iter()) {
            let eps: f64 = rng.sample(rand_distr::StandardNormal);
            action.push(m + ls.exp() * eps);
        }
        let lp = self.log_prob(&mean, &action);
        Ok((action, lp))
    }

    pub fn log_prob(&self, mean: &[f64], action: &[f64]) -> f64 {
        let mut lp = 0.0;
        for ((m, a), ls) in mean.iter().zip(action.iter()).zip(self.log_std.iter()) {
            let sigma = ls.exp();
            let d = (a - m) / sigma;
            lp += -0.5 * d * d - ls - 0.5 * (2.0 * PI).ln();
        }
        lp
    }

    pub fn entropy(&self) -> f64 {
        self.log_std
            .iter()
            .map(|ls| ls + 0.5 * (1.0 + (2.0 * PI).ln()))
            .sum()
    }

    /// Flat view over [net params, log_std] for optimization/checkpoints.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut p = self.net.params().to_vec();
        p.extend_from_slice(&self.log_std);
        p
    }

    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<(), NnError> {
        let n = self.net.params().len();
        if params.len() != n + self.log_std.len() {
            return Err(NnError::DimensionMismatch {
                expected: n + self.log_std.len(),
                got: params.len(),
            });
        }
        self.net.set_params(&params[..n])?;
        self.log_std.copy_from_slice(&params[n..]);
        Ok(())
    }

    pub fn n_params(&self) -> usize {
        self.net.params().len() + self.log_std.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryStep {
    pub observation: Vec<f64>,
    pub action: Vec<f64>,
    pub log_prob: f64,
    pub reward: f64,
    pub value_estimate: f64,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<TrajectoryStep>,
    pub episode_return: f64,
    pub outcome: Outcome,
    pub initial_goal_distance: f64,
    pub final_goal_distance: f64,
}

impl Trajectory {
    pub fn discounted_return(&self, gamma: f64) -> f64 {
        let mut g = 0.0;
        for step in self.steps.iter().rev() {
            g = step.reward + gamma * g;
        }
        g
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PpoConfig {
    pub clip_ratio: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub ppo_epochs: usize,
    pub minibatch_size: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub max_grad_norm: f64,
    pub learning_rate: f64,
    /// Lower bound applied to the learned log-std after each optimizer
    /// step. Keeps enough sampling noise alive for the policy mean to
    /// keep receiving better-than-current action samples; without it the
    /// std can collapse around a timid mean and never recover.
    pub log_std_min: f64,
}

impl PpoConfig {
    pub fn student_default() -> Self {
        PpoConfig {
            clip_ratio: 0.2,
            gamma: 0.99,
            gae_lambda: 0.95,
            ppo_epochs: 5,
            minibatch_size: 64,
            // The held-out metric is the deterministic mean action; an
            // entropy bonus props sigma up and lets the optimum hide in
            // the sampling noise, so the control policies get none.
            entropy_coef: 0.0,
            value_coef: 0.5,
            max_grad_norm: 0.5,
            learning_rate: 3e-4,
            log_std_min: -1.2,
        }
    }

    pub fn teacher_default() -> Self {
        PpoConfig {
            ppo_epochs: 10,
            learning_rate: 1e-4,
            // The teacher is never evaluated deterministically; keep a
            // small bonus so task proposals stay diverse.
            entropy_coef: 0.01,
            ..PpoConfig::student_default()
        }
    }
}

/// Policy, critic, and their optimizer states.
#[derive(Debug, Clone)]
pub struct PpoAgent {
    pub policy: GaussianPolicy,
    pub value_net: Mlp,
    pub policy_opt: AdamState,
    pub value_opt: AdamState,
}

impl PpoAgent {
    pub fn new(
        obs_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        learning_rate: f64,
        rng: &mut crate::Rng,
    ) -> Self {
        let policy = GaussianPolicy::new(obs_dim, action_dim, hidden, rng);
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let mut value_net = Mlp::new(sizes, Activation::Tanh, OutputActivation::Identity);
        value_net.init_scaled(rng);
        let policy_opt = AdamState::new(policy.n_params(), learning_rate);
        let value_opt = AdamState::new(value_net.params().len(), learning_rate);
        PpoAgent {
            policy,
            value_net,
            policy_opt,
            value_opt,
        }
    }
}

/// Observation scale shared by rollouts and evaluation.
pub fn dist_scale(task: &Task) -> f64 {
    ((task.width * task.width + task.height * task.height) as f64).sqrt()
}

/// Runs one stochastic-policy episode.
pub fn rollout_episode(
    policy: &GaussianPolicy,
    value_net: &Mlp,
    task: &Task,
    nav_cfg: &NavConfig,
    rng: &mut crate::Rng,
) -> Result<Trajectory, PpoError> {
    let scale = dist_scale(task);
    let (mut env, obs) = NavEnv::reset(task, nav_cfg)?;
    let mut obs_vec = obs.to_vector(nav_cfg, scale);
    let mut steps = Vec::new();
    let mut episode_return = 0.0;
    let initial = env.initial_goal_dist;
    loop {
        let (action, log_prob) = policy.sample(&obs_vec, rng)?;
        let value_estimate = value_net.output(&obs_vec)?[0];
        let result = env.step(&Action {
            linear_velocity: action[0],
            angular_velocity: action[1],
        })?;
        episode_return += result.reward;
        steps.push(TrajectoryStep {
            observation: obs_vec,
            action,
            log_prob,
            reward: result.reward,
            value_estimate,
            done: result.done,
        });
        if result.done {
            return Ok(Trajectory {
                steps,
                episode_return,
                outcome: result.outcome,
                initial_goal_distance: initial,
                final_goal_distance: env.goal_distance(),
            });
        }
        obs_vec = result.observation.to_vector(nav_cfg, scale);
    }
}

/// Collects `episodes_per_task` complete episodes in each task.
pub fn collect_rollouts(
    policy: &GaussianPolicy,
    value_net: &Mlp,
    tasks: &[&Task],
    episodes_per_task: usize,
    nav_cfg: &NavConfig,
    rng: &mut crate::Rng,
) -> Result<Vec<Trajectory>, PpoError> {
    let mut out = Vec::with_capacity(tasks.len() * episodes_per_task);
    for task in tasks {
        for _ in 0..episodes_per_task {
            out.push(rollout_episode(policy, value_net, task, nav_cfg, rng)?);
        }
    }
    Ok(out)
}

/// GAE(gamma, lambda) advantages and returns for one complete trajectory.
/// The value after the last step is taken as zero (episodes here either
/// terminate or are treated as terminated at truncation).
pub fn compute_gae(traj: &Trajectory, config: &PpoConfig) -> (Vec<f64>, Vec<f64>) {
    let n = traj.steps.len();
    let mut advantages = vec![0.0; n];
    let mut gae = 0.0;
    for t in (0..n).rev() {
        let v_next = if t + 1 < n { traj.steps[t + 1].value_estimate } else { 0.0 };
        let delta = traj.steps[t].reward + config.gamma * v_next - traj.steps[t].value_estimate;
        gae = delta + config.gamma * config.gae_lambda * gae;
        advantages[t] = gae;
    }
    let returns: Vec<f64> = advantages
        .iter()
        .zip(traj.steps.iter())
        .map(|(a, s)| a + s.value_estimate)
        .collect();
    (advantages, returns)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
}

struct Sample<'a> {
    obs: &'a [f64],
    action: &'a [f64],
    old_log_prob: f64,
    advantage: f64,
    ret: f64,
}

/// Clipped-surrogate PPO update over `config.ppo_epochs` epochs of
/// shuffled minibatches. Advantages are normalized over the whole batch.
pub fn ppo_update(
    agent: &mut PpoAgent,
    trajectories: &[Trajectory],
    config: &PpoConfig,
    rng: &mut crate::Rng,
) -> Result<LossReport, PpoError> {
    assert!(!trajectories.is_empty(), "ppo_update needs a non-empty batch");
    let mut samples: Vec<Sample> = Vec::new();
    for traj in trajectories {
        let (advantages, returns) = compute_gae(traj, config);
        for (t, step) in traj.steps.iter().enumerate() {
            samples.push(Sample {
                obs: &step.observation,
                action: &step.action,
                old_log_prob: step.log_prob,
                advantage: advantages[t],
                ret: returns[t],
            });
        }
    }
    let n = samples.len();
    let mean_adv = samples.iter().map(|s| s.advantage).sum::<f64>() / n as f64;
    let var_adv =
        samples.iter().map(|s| (s.advantage - mean_adv).powi(2)).sum::<f64>() / n as f64;
    let std_adv = var_adv.sqrt();
    if n > 1 {
        for s in &mut samples {
            s.advantage = (s.advantage - mean_adv) / (std_adv + 1e-8);
        }
    }

    let action_dim = agent.policy.action_dim();
    let net_params = agent.policy.net.params().len();
    let mut indices: Vec<usize> = (0..n).collect();
    let mut report = LossReport {
        policy_loss: 0.0,
        value_loss: 0.0,
        entropy: agent.policy.entropy(),
        approx_kl: 0.0,
    };
    for epoch in 0..config.ppo_epochs {
        indices.shuffle(rng);
        let mut epoch_policy_loss = 0.0;
        let mut epoch_value_loss = 0.0;
        let mut epoch_kl = 0.0;
        for chunk in indices.chunks(config.minibatch_size.max(1)) {
            let mut policy_grad = vec![0.0; net_params + action_dim];
            let mut value_grad = vec![0.0; agent.value_net.params().len()];
            for &idx in chunk {
                let s = &samples[idx];
                let (mean, cache) = agent.policy.net.forward(s.obs)?;
                let logp_new = agent.policy.log_prob(&mean, s.action);
                let ratio = (logp_new - s.old_log_prob).exp();
                let unclipped = ratio * s.advantage;
                let clipped =
                    ratio.clamp(1.0 - config.clip_ratio, 1.0 + config.clip_ratio) * s.advantage;
                epoch_policy_loss += -unclipped.min(clipped);
                epoch_kl += s.old_log_prob - logp_new;
                // d(-min)/d(logp_new): the clipped branch is flat in ratio.
                let g_lp = if unclipped <= clipped { -ratio * s.advantage } else { 0.0 };
                if g_lp != 0.0 {
                    let mut out_grad = vec![0.0; action_dim];
                    for j in 0..action_dim {
                        let sigma = agent.policy.log_std[j].exp();
                        let z = (s.action[j] - mean[j]) / sigma;
                        // dlogp/dmean = (a - mu) / sigma^2
                        out_grad[j] = g_lp * z / sigma;
                        // dlogp/dlog_std = z^2 - 1
                        policy_grad[net_params + j] += g_lp * (z * z - 1.0);
                    }
                    let (pg, _) = agent.policy.net.backward(&cache, &out_grad)?;
                    for (acc, g) in policy_grad.iter_mut().zip(pg.iter()) {
                        *acc += g;
                    }
                }
                // Entropy bonus only touches log_std.
                for j in 0..action_dim {
                    policy_grad[net_params + j] -= config.entropy_coef;
                }
                let (v, vcache) = agent.value_net.forward(s.obs)?;
                let err = v[0] - s.ret;
                epoch_value_loss += 0.5 * err * err;
                let (vg, _) = agent.value_net.backward(&vcache, &[config.value_coef * err])?;
                for (acc, g) in value_grad.iter_mut().zip(vg.iter()) {
                    *acc += g;
                }
            }
            let m = chunk.len() as f64;
            for g in policy_grad.iter_mut() {
                *g /= m;
            }
            for g in value_grad.iter_mut() {
                *g /= m;
            }
            clip_grad_norm(&mut policy_grad, config.max_grad_norm);
            clip_grad_norm(&mut value_grad, config.max_grad_norm);
            let mut flat = agent.policy.flat_params();
            agent.policy_opt.update(&mut flat, &policy_grad)?;
            agent.policy.set_flat_params(&flat)?;
            for ls in &mut agent.policy.log_std {
                *ls = ls.max(config.log_std_min);
            }
            let value_opt = &mut agent.value_opt;
            value_opt.update(agent.value_net.params_mut(), &value_grad)?;
        }
        if epoch + 1 == config.ppo_epochs {
            report.policy_loss = epoch_policy_loss / n as f64;
            report.value_loss = epoch_value_loss / n as f64;
            report.approx_kl = epoch_kl / n as f64;
            report.entropy = agent.policy.entropy();
        }
    }
    if !report.policy_loss.is_finite() || !report.value_loss.is_finite() {
        return Err(PpoError::NonFiniteLoss(format!(
            "policy {} value {}",
            report.policy_loss, report.value_loss
        )));
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_episodes: usize,
}

/// Empirical value of a policy on a task: mean discounted return over
/// fresh stochastic rollouts.
pub fn estimate_value(
    policy: &GaussianPolicy,
    task: &Task,
    nav_cfg: &NavConfig,
    n_episodes: usize,
    gamma: f64,
    rng: &mut crate::Rng,
) -> Result<ValueEstimate, PpoError> {
    assert!(n_episodes >= 1);
    // The critic is irrelevant here; a zero net keeps the rollout shape.
    let dummy_value = Mlp::new(
        vec![nav_cfg.obs_dim(), 1],
        Activation::Tanh,
        OutputActivation::Identity,
    );
    let mut returns = Vec::with_capacity(n_episodes);
    for _ in 0..n_episodes {
        let traj = rollout_episode(policy, &dummy_value, task, nav_cfg, rng)?;
        returns.push(traj.discounted_return(gamma));
    }
    Ok(value_estimate_from_returns(&returns))
}

/// Mean and standard error of a set of per-episode discounted returns.
pub fn value_estimate_from_returns(returns: &[f64]) -> ValueEstimate {
    let n = returns.len();
    let mean = returns.iter().sum::<f64>() / n as f64;
    let std_error = if n > 1 {
        let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    } else {
        0.0
    };
    ValueEstimate {
        mean,
        std_error,
        n_episodes: n,
    }
}
