//! The latent task model: a VAE over flattened occupancy grids. The
//! decoder maps latent vectors to concrete tasks and is what the teacher
//! samples through; training on the real task set is what grounds the
//! generated curriculum.

use rand::Rng as _;
use thiserror::Error;

use crate::nn::{Activation, AdamState, Mlp, NnError, OutputActivation};
use crate::taskgen::{shortest_path_length, RealTaskSet, Task};

#[derive(Debug, Error)]
pub enum VaeError {
    #[error("non-finite loss at epoch {epoch}: {loss}")]
    NonFiniteLoss { epoch: usize, loss: f64 },
    #[error(transparent)]
    Nn(#[from] NnError),
}

const LOG_SIGMA_MIN: f64 = -6.0;
const LOG_SIGMA_MAX: f64 = 2.0;

/// A latent task vector z.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentTask {
    pub z: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VaeConfig {
    pub d_z: usize,
    pub hidden: Vec<usize>,
    pub kl_weight: f64,
    pub epochs: usize,
    pub learning_rate: f64,
}

impl Default for VaeConfig {
    fn default() -> Self {
        VaeConfig {
            d_z: 8,
            hidden: vec![128],
            kl_weight: 1.0,
            epochs: 500,
            learning_rate: 1e-3,
        }
    }
}

/// Encoder (grid -> mu, log sigma) and decoder (z -> occupancy logits).
#[derive(Debug, Clone)]
pub struct TaskVae {
    pub encoder: Mlp,
    pub decoder: Mlp,
    pub d_z: usize,
    pub kl_weight: f64,
    pub width: usize,
    pub height: usize,
}

impl TaskVae {
    pub fn new(width: usize, height: usize, config: &VaeConfig, rng: &mut crate::Rng) -> Self {
        let grid = width * height;
        let mut enc_sizes = vec![grid];
        enc_sizes.extend_from_slice(&config.hidden);
        enc_sizes.push(2 * config.d_z);
        let mut dec_sizes = vec![config.d_z];
        let mut rev = config.hidden.clone();
        rev.reverse();
        dec_sizes.extend_from_slice(&rev);
        dec_sizes.push(grid);
        let mut encoder = Mlp::new(enc_sizes, Activation::Tanh, OutputActivation::Identity);
        let mut decoder = Mlp::new(dec_sizes, Activation::Tanh, OutputActivation::Identity);
        encoder.init_scaled(rng);
        decoder.init_scaled(rng);
        TaskVae {
            encoder,
            decoder,
            d_z: config.d_z,
            kl_weight: config.kl_weight,
            width,
            height,
        }
    }
}

/// Deterministic encoder pass; log sigma clamped to [-6, 2].
pub fn encode(vae: &TaskVae, task: &Task) -> Result<(Vec<f64>, Vec<f64>), VaeError> {
    let out = vae.encoder.output(&task.cells_f64())?;
    let mu = out[..vae.d_z].to_vec();
    let log_sigma = out[vae.d_z..]
        .iter()
        .map(|&v| v.clamp(LOG_SIGMA_MIN, LOG_SIGMA_MAX))
        .collect();
    Ok((mu, log_sigma))
}

/// A decoded task plus whether its goal is reachable. Unreachable decodes
/// are flagged, not repaired; callers discard and resample.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedTask {
    pub task: Task,
    pub reachable: bool,
}

/// Thresholds decoder logits into an occupancy grid, then enforces the
/// structural invariants: border walls, the fixed start/goal convention,
/// and a free one-cell clearance around both.
pub fn decode(vae: &TaskVae, latent: &LatentTask) -> Result<DecodedTask, VaeError> {
    if latent.z.len() != vae.d_z {
        return Err(VaeError::Nn(NnError::DimensionMismatch {
            expected: vae.d_z,
            got: latent.z.len(),
        }));
    }
    let logits = vae.decoder.output(&latent.z)?;
    let (w, h) = (vae.width, vae.height);
    let cells: Vec<bool> = logits.iter().map(|&l| l > 0.0).collect();
    let start = (w / 2, h - 2);
    let goal = (w / 2, 1);
    let mut task = Task::new(w, h, cells, start, goal);
    for c in 0..w {
        task.set_obstacle(c, 0, true);
        task.set_obstacle(c, h - 1, true);
    }
    for r in 0..h {
        task.set_obstacle(0, r, true);
        task.set_obstacle(w - 1, r, true);
    }
    for &(cc, cr) in &[start, goal] {
        for dr in -1i64..=1 {
            for dc in -1i64..=1 {
                let c = cc as i64 + dc;
                let r = cr as i64 + dr;
                if c >= 1 && r >= 1 && (c as usize) < w - 1 && (r as usize) < h - 1 {
                    task.set_obstacle(c as usize, r as usize, false);
                }
            }
        }
    }
    let reachable = shortest_path_length(&task).is_some();
    Ok(DecodedTask { task, reachable })
}

#[derive(Debug, Clone)]
pub struct ElboReport {
    pub loss: f64,
    pub recon: f64,
    pub kl: f64,
    pub encoder_grad: Vec<f64>,
    pub decoder_grad: Vec<f64>,
}

/// One reparameterized ELBO evaluation with exact gradients.
/// recon is the Bernoulli cross-entropy of the logits against the grid;
/// kl is the analytic Gaussian KL against N(0, I); loss = recon + beta*kl.
pub fn elbo_loss(vae: &TaskVae, task: &Task, rng: &mut crate::Rng) -> Result<ElboReport, VaeError> {
    let eps: Vec<f64> = (0..vae.d_z)
        .map(|_| rng.sample(rand_distr::StandardNormal))
        .collect();
    elbo_loss_with_noise(vae, task, &eps)
}

/// Deterministic core of `elbo_loss`; split out so the finite-difference
/// oracle can hold the noise fixed.
pub fn elbo_loss_with_noise(
    vae: &TaskVae,
    task: &Task,
    eps: &[f64],
) -> Result<ElboReport, VaeError> {
    let x = task.cells_f64();
    let (enc_out, enc_cache) = vae.encoder.forward(&x)?;
    let mu = &enc_out[..vae.d_z];
    let raw_log_sigma = &enc_out[vae.d_z..];
    let log_sigma: Vec<f64> = raw_log_sigma
        .iter()
        .map(|&v| v.clamp(LOG_SIGMA_MIN, LOG_SIGMA_MAX))
        .collect();
    let sigma: Vec<f64> = log_sigma.iter().map(|ls| ls.exp()).collect();
    let z: Vec<f64> = (0..vae.d_z).map(|j| mu[j] + sigma[j] * eps[j]).collect();

    let (logits, dec_cache) = vae.decoder.forward(&z)?;
    let mut recon = 0.0;
    let mut dlogits = vec![0.0; logits.len()];
    for (i, (&l, &xi)) in logits.iter().zip(x.iter()).enumerate() {
        // Stable BCE-with-logits: max(l,0) - l*x + ln(1 + e^-|l|)
        recon += l.max(0.0) - l * xi + (-l.abs()).exp().ln_1p();
        dlogits[i] = crate::nn::sigmoid(l) - xi;
    }
    let beta = vae.kl_weight;
    let mut kl = 0.0;
    for j in 0..vae.d_z {
        kl += 0.5 * (mu[j] * mu[j] + sigma[j] * sigma[j] - 1.0 - 2.0 * log_sigma[j]);
    }
    let loss = recon + beta * kl;

    let (decoder_grad, dz) = vae.decoder.backward(&dec_cache, &dlogits)?;
    let mut enc_out_grad = vec![0.0; 2 * vae.d_z];
    for j in 0..vae.d_z {
        // z = mu + sigma*eps; KL terms flow straight into mu/log_sigma.
        enc_out_grad[j] = dz[j] + beta * mu[j];
        let clamped = raw_log_sigma[j] < LOG_SIGMA_MIN || raw_log_sigma[j] > LOG_SIGMA_MAX;
        enc_out_grad[vae.d_z + j] = if clamped {
            0.0
        } else {
            dz[j] * sigma[j] * eps[j] + beta * (sigma[j] * sigma[j] - 1.0)
        };
    }
    let (encoder_grad, _) = vae.encoder.backward(&enc_cache, &enc_out_grad)?;
    Ok(ElboReport {
        loss,
        recon,
        kl,
        encoder_grad,
        decoder_grad,
    })
}

/// Per-epoch mean loss over the training set.
pub type LossCurve = Vec<f64>;

/// ELBO training over the real task set with a linear KL warm-up across
/// the first 20% of epochs.
pub fn train_vae(
    vae: &mut TaskVae,
    real_set: &RealTaskSet,
    config: &VaeConfig,
    rng: &mut crate::Rng,
) -> Result<LossCurve, VaeError> {
    assert!(!real_set.tasks.is_empty());
    let mut enc_opt = AdamState::new(vae.encoder.params().len(), config.learning_rate);
    let mut dec_opt = AdamState::new(vae.decoder.params().len(), config.learning_rate);
    let warmup = (config.epochs as f64 * 0.2).max(1.0);
    let mut curve = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..real_set.tasks.len()).collect();
    for epoch in 0..config.epochs {
        vae.kl_weight = config.kl_weight * ((epoch as f64 / warmup).min(1.0));
        use rand::seq::SliceRandom;
        order.shuffle(rng);
        let mut epoch_loss = 0.0;
        for &i in &order {
            let report = elbo_loss(vae, &real_set.tasks[i], rng)?;
            if !report.loss.is_finite() {
                return Err(VaeError::NonFiniteLoss {
                    epoch,
                    loss: report.loss,
                });
            }
            epoch_loss += report.loss;
            enc_opt.update(vae.encoder.params_mut(), &report.encoder_grad)?;
            dec_opt.update(vae.decoder.params_mut(), &report.decoder_grad)?;
        }
        curve.push(epoch_loss / real_set.tasks.len() as f64);
    }
    vae.kl_weight = config.kl_weight;
    Ok(curve)
}

/// z ~ N(0, I).
pub fn sample_latent(d_z: usize, rng: &mut crate::Rng) -> LatentTask {
    LatentTask {
        z: (0..d_z).map(|_| rng.sample(rand_distr::StandardNormal)).collect(),
    }
}

/// Fraction of grid cells that survive an encode(mean)/decode round trip.
pub fn reconstruction_accuracy(vae: &TaskVae, task: &Task) -> Result<f64, VaeError> {
    let (mu, _) = encode(vae, task)?;
    let decoded = decode(vae, &LatentTask { z: mu })?;
    let total = task.width * task.height;
    let matching = task
        .cells()
        .iter()
        .zip(decoded.task.cells().iter())
        .filter(|(a, b)| a == b)
        .count();
    Ok(matching as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taskgen::{generate_task, GenerationParams};
    use rand::SeedableRng;

    fn rng(seed: u64) -> crate::Rng {
        crate::Rng::seed_from_u64(seed)
    }

    fn small_vae(rng: &mut crate::Rng) -> TaskVae {
        let cfg = VaeConfig {
            d_z: 4,
            hidden: vec![32],
            ..Default::default()
        };
        TaskVae::new(8, 8, &cfg, rng)
    }

    fn task8(seed: u64) -> Task {
        generate_task(&GenerationParams {
            width: 8,
            height: 8,
            obstacle_density: 0.2,
            smoothing_iterations: 1,
            rng_seed: seed,
        })
        .unwrap()
    }

    #[test]
    fn zero_encoder_gives_zero_mean() {
        let mut r = rng(1);
        let mut vae = small_vae(&mut r);
        let zeros = vec![0.0; vae.encoder.params().len()];
        vae.encoder.set_params(&zeros).unwrap();
        let (mu, log_sigma) = encode(&vae, &task8(1)).unwrap();
        assert_eq!(mu, vec![0.0; 4]);
        assert_eq!(log_sigma, vec![0.0; 4]);
    }

    #[test]
    fn encode_is_deterministic() {
        let mut r = rng(2);
        let vae = small_vae(&mut r);
        let t = task8(2);
        assert_eq!(encode(&vae, &t).unwrap(), encode(&vae, &t).unwrap());
    }

    #[test]
    fn kl_is_zero_for_standard_normal_posterior() {
        // mu = 0, sigma = 1 comes from a zeroed encoder.
        let mut r = rng(3);
        let mut vae = small_vae(&mut r);
        let zeros = vec![0.0; vae.encoder.params().len()];
        vae.encoder.set_params(&zeros).unwrap();
        let report = elbo_loss_with_noise(&vae, &task8(3), &[0.1, -0.2, 0.3, 0.0]).unwrap();
        assert!(report.kl.abs() < 1e-12, "{}", report.kl);
    }

    #[test]
    fn kl_is_nonnegative_and_zero_only_at_standard_normal() {
        let mut r = rng(4);
        for _ in 0..200 {
            let mu: f64 = r.random::<f64>() * 4.0 - 2.0;
            let ls: f64 = r.random::<f64>() * 2.0 - 1.0;
            let sigma = ls.exp();
            let kl = 0.5 * (mu * mu + sigma * sigma - 1.0 - 2.0 * ls);
            assert!(kl >= -1e-12);
            if mu.abs() > 1e-3 || ls.abs() > 1e-3 {
                assert!(kl > 0.0);
            }
        }
    }

    #[test]
    fn saturated_logits_drive_recon_to_zero() {
        let mut r = rng(5);
        let mut vae = small_vae(&mut r);
        let t = task8(5);
        // Force decoder output to +-30 matching the grid exactly via the
        // output bias on a zeroed net.
        let n = vae.decoder.params().len();
        let mut p = vec![0.0; n];
        let grid = t.cells_f64();
        let bias_off = n - grid.len();
        for (i, &xi) in grid.iter().enumerate() {
            p[bias_off + i] = if xi > 0.5 { 30.0 } else { -30.0 };
        }
        vae.decoder.set_params(&p).unwrap();
        let zeros = vec![0.0; vae.encoder.params().len()];
        vae.encoder.set_params(&zeros).unwrap();
        let report = elbo_loss_with_noise(&vae, &t, &[0.0; 4]).unwrap();
        assert!(report.recon < 1e-9, "{}", report.recon);
    }

    #[test]
    fn all_negative_decoder_bias_decodes_to_open_arena() {
        let mut r = rng(6);
        let mut vae = small_vae(&mut r);
        let n = vae.decoder.params().len();
        let mut p = vec![0.0; n];
        for q in p.iter_mut().skip(n - 64) {
            *q = -5.0;
        }
        vae.decoder.set_params(&p).unwrap();
        let d = decode(&vae, &sample_latent(4, &mut r)).unwrap();
        assert_eq!(d.task, Task::open_arena(8, 8));
        assert!(d.reachable);
    }

    #[test]
    fn elbo_gradient_matches_finite_differences() {
        let mut r = rng(7);
        let mut vae = small_vae(&mut r);
        // Small random params keep log sigma inside the clamp window.
        vae.encoder.init_scaled(&mut r);
        vae.decoder.init_scaled(&mut r);
        let t = task8(7);
        let eps = [0.4, -1.1, 0.2, 0.9];
        let report = elbo_loss_with_noise(&vae, &t, &eps).unwrap();
        let h = 1e-5;
        for block in ["encoder", "decoder"] {
            let (params_len, ana) = if block == "encoder" {
                (vae.encoder.params().len(), &report.encoder_grad)
            } else {
                (vae.decoder.params().len(), &report.decoder_grad)
            };
            // Spot-check a spread of parameters; full FD would be slow.
            for k in 0..40 {
                let i = k * (params_len / 40).max(1) % params_len;
                let mut vp = vae.clone();
                let mut vm = vae.clone();
                let (pp, pm) = if block == "encoder" {
                    (vp.encoder.params_mut(), vm.encoder.params_mut())
                } else {
                    (vp.decoder.params_mut(), vm.decoder.params_mut())
                };
                pp[i] += h;
                pm[i] -= h;
                let lp = elbo_loss_with_noise(&vp, &t, &eps).unwrap().loss;
                let lm = elbo_loss_with_noise(&vm, &t, &eps).unwrap().loss;
                let fd = (lp - lm) / (2.0 * h);
                if fd.abs() > 1e-6 {
                    let rel = (ana[i] - fd).abs() / ana[i].abs().max(fd.abs());
                    assert!(rel < 1e-4, "{block}[{i}]: {} vs {fd}", ana[i]);
                }
            }
        }
    }

    #[test]
    fn one_task_set_is_memorized() {
        let mut r = rng(8);
        let cfg = VaeConfig {
            d_z: 4,
            hidden: vec![32],
            epochs: 300,
            ..Default::default()
        };
        let mut vae = TaskVae::new(8, 8, &cfg, &mut r);
        let set = RealTaskSet {
            tasks: vec![task8(11).with_id("t")],
            split_seed: 0,
        };
        train_vae(&mut vae, &set, &cfg, &mut r).unwrap();
        let acc = reconstruction_accuracy(&vae, &set.tasks[0]).unwrap();
        assert!(acc > 0.95, "accuracy {acc}");
    }

    #[test]
    fn training_is_deterministic_under_fixed_seed() {
        let run = || {
            let mut r = rng(9);
            let cfg = VaeConfig {
                d_z: 4,
                hidden: vec![32],
                epochs: 20,
                ..Default::default()
            };
            let mut vae = TaskVae::new(8, 8, &cfg, &mut r);
            let set = RealTaskSet {
                tasks: (0..5).map(|i| task8(i).with_id(format!("t{i}"))).collect(),
                split_seed: 0,
            };
            train_vae(&mut vae, &set, &cfg, &mut r).unwrap();
            (vae.encoder.params().to_vec(), vae.decoder.params().to_vec())
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn elbo_decreases_over_training_smoothed() {
        let mut r = rng(10);
        let cfg = VaeConfig {
            d_z: 4,
            hidden: vec![32],
            epochs: 120,
            ..Default::default()
        };
        let mut vae = TaskVae::new(8, 8, &cfg, &mut r);
        let set = RealTaskSet {
            tasks: (0..10).map(|i| task8(i + 20).with_id(format!("t{i}"))).collect(),
            split_seed: 0,
        };
        let curve = train_vae(&mut vae, &set, &cfg, &mut r).unwrap();
        let head: f64 = curve[..10].iter().sum::<f64>() / 10.0;
        let tail: f64 = curve[curve.len() - 10..].iter().sum::<f64>() / 10.0;
        assert!(tail < head, "ELBO did not improve: {head} -> {tail}");
    }

    #[test]
    fn latent_samples_match_standard_normal_moments() {
        let mut r = rng(11);
        let n = 10_000;
        let d = 4;
        let mut sums = vec![0.0; d];
        let mut sq = vec![0.0; d];
        for _ in 0..n {
            let z = sample_latent(d, &mut r).z;
            for j in 0..d {
                sums[j] += z[j];
                sq[j] += z[j] * z[j];
            }
        }
        for j in 0..d {
            let mean = sums[j] / n as f64;
            let var = sq[j] / n as f64 - mean * mean;
            assert!(mean.abs() < 0.05, "dim {j} mean {mean}");
            assert!((var - 1.0).abs() < 0.1, "dim {j} var {var}");
        }
    }

    #[test]
    fn latent_sampling_is_reproducible() {
        assert_eq!(sample_latent(8, &mut rng(3)), sample_latent(8, &mut rng(3)));
    }

    proptest::proptest! {
        /// Whatever z, decode yields a structurally valid walled task with
        /// free start/goal.
        #[test]
        fn decode_always_satisfies_structural_invariants(seed in 0u64..50) {
            let mut r = rng(seed);
            let vae = small_vae(&mut r);
            let d = decode(&vae, &sample_latent(4, &mut r)).unwrap();
            let t = &d.task;
            for c in 0..t.width {
                proptest::prop_assert!(t.is_obstacle(c, 0) && t.is_obstacle(c, t.height - 1));
            }
            for row in 0..t.height {
                proptest::prop_assert!(t.is_obstacle(0, row) && t.is_obstacle(t.width - 1, row));
            }
            proptest::prop_assert!(!t.is_obstacle(t.start.0, t.start.1));
            proptest::prop_assert!(!t.is_obstacle(t.goal.0, t.goal.1));
            proptest::prop_assert!(t.start != t.goal);
        }
    }
}
