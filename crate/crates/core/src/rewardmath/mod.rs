//! Reward-model and policy-gradient kernels.
//!
//! Everything here is generic over [`num_traits::Float`] so the same code runs
//! in `f32` and `f64`; see the crate-root aliases for the `f64` instantiations.

mod bt;
mod features;
mod rl;

pub use bt::{
    batch_bt_loss, best_of_n, bt_grad, bt_score_grad, pair_bt_loss, softplus, train_toy_rm,
    BtGradient, PairNormalization, TrainedModel,
};
pub use features::{featurize, FeatureVector, LinearRewardModel, NGRAM};
pub use rl::{
    gae, kl_per_token, ppo_surrogate, rpp_advantage, rpp_advantages, suffix_kl_advantage, RlConfig,
    TokenTrajectory, WHITEN_VAR_FLOOR,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MathError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("{what}: expected length {expected}, found {found}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("need at least {needed} elements, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("log-probabilities must be <= 0 ({0})")]
    PositiveLogProb(&'static str),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}
