//! Grounded curriculum learning for grid-world navigation.
//!
//! A teacher agent selects navigation tasks for a student policy, mixing
//! tasks drawn from a fixed "real-world" set with tasks decoded from a
//! latent space learned by a VAE over occupancy grids. The teacher is
//! rewarded with the regret between an antagonist policy and the student,
//! and all three policies are trained with PPO on top of a small
//! hand-rolled MLP/Adam substrate.
//!
//! Modules map onto the moving parts:
//!
//! - [`taskgen`]: occupancy-grid task generation, validation, BFS path
//!   oracle, and the on-disk task format.
//! - [`gridnav`]: the continuous-pose navigation environment (unicycle
//!   kinematics, ray-cast observations, shaped reward).
//! - [`nn`]: dense networks with exact analytic gradients and Adam.
//! - [`ppo`]: clipped-surrogate PPO with GAE, rollout collection, and
//!   empirical value estimation.
//! - [`vae`]: the latent task model (encoder/decoder, ELBO training,
//!   latent sampling).
//! - [`teacher`]: teacher state, epsilon-mixed task selection, regret.
//! - [`curriculum`]: the full training loop plus baseline and ablation
//!   run modes.
//! - [`eval`]: evaluation metrics and CSV emission.
//! - [`checkpoint`]: versioned, checksummed binary checkpoints.
//! - [`config`]: the plain-text run configuration format.

pub mod checkpoint;
pub mod config;
pub mod curriculum;
pub mod eval;
pub mod gridnav;
pub mod nn;
pub mod ppo;
pub mod taskgen;
pub mod teacher;
pub mod vae;

/// The RNG used everywhere; seed plus stream position round-trips through
/// checkpoints, which is what makes resume bit-exact.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Derives an independent seeded stream from a master seed. Streams with
/// different tags never share state, so e.g. task-pool generation does not
/// perturb the training loop's RNG.
pub fn rng_stream(master_seed: u64, tag: u64) -> Rng {
    use rand::SeedableRng;
    Rng::seed_from_u64(master_seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}
