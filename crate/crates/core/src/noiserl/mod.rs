//! Fine-tuning in noise space: a Gaussian policy over the generator's input
//! noise, trained with clipped PPO and GAE while the generator stays frozen.
//! The same machinery with an identity decoder trains the action-space PPO
//! expert.

mod decoder;
mod policy;
mod ppo;
mod train;

pub use decoder::{DecoderInfo, DecoderKind, EvalMode, FrozenMeanFlow, IdentityDecoder, NoiseAgent, NoiseDecoder};
pub use policy::{
    NoisePolicy, NoisePolicyConfig, NoisePolicySpec, LOG_STD_MAX, LOG_STD_MIN, NOISE_POLICY_CHECKPOINT_KIND,
};
pub use ppo::{
    clipped_surrogate, gae_advantages, normalize_advantages, ppo_update, PpoConfig, PpoStats, RolloutBuffer,
};
pub use train::{
    collect_rollouts, fine_tune, fit_state_normalizer, mean_objective, train_noise_policy, train_ppo_expert,
    FineTuneConfig, FineTuneOutput, PpoExpertConfig, TrainOutput,
};
