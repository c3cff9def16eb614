//! Test-case-driven reward construction for code generation.
//!
//! The pipeline turns seed programs into questions with synthesized assert
//! tests ([`synth`]), judges candidate programs against those tests in child
//! processes ([`judge`]), filters tests and builds preference pairs
//! ([`refine`]), and provides the reward-model and policy-gradient math used
//! downstream ([`rewardmath`]). Every stage reads and writes the
//! line-delimited formats in [`corpus`].

pub mod corpus;
pub mod judge;
mod pool;
pub mod refine;
pub mod rewardmath;
pub mod scalar;
pub mod synth;

pub use scalar::{ExactRate, PassScalar};

pub type FeatureVector = rewardmath::FeatureVector<f64>;
pub type RewardModel = rewardmath::LinearRewardModel<f64>;
pub type Trajectory = rewardmath::TokenTrajectory<f64>;
pub type RlConfig = rewardmath::RlConfig<f64>;
pub type FeatureVector32 = rewardmath::FeatureVector<f32>;
pub type RewardModel32 = rewardmath::LinearRewardModel<f32>;
pub type Trajectory32 = rewardmath::TokenTrajectory<f32>;
