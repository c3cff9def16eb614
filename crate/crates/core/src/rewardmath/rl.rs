use std::ops::Sub;

use num_traits::{Float, Num};
use serde::{Deserialize, Serialize};

use super::MathError;
use crate::corpus::Record;

/// Variance floor used when whitening advantages.
pub const WHITEN_VAR_FLOOR: f64 = 1e-8;

/// Per-token log-probabilities of one sampled response plus its sequence reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenTrajectory<F> {
    pub logp_current: Vec<F>,
    pub logp_old: Vec<F>,
    pub logp_ref: Vec<F>,
    pub seq_reward: F,
}

impl<F: Float> TokenTrajectory<F> {
    pub fn new(
        logp_current: Vec<F>,
        logp_old: Vec<F>,
        logp_ref: Vec<F>,
        seq_reward: F,
    ) -> Result<Self, MathError> {
        let t = TokenTrajectory {
            logp_current,
            logp_old,
            logp_ref,
            seq_reward,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), MathError> {
        let n = self.logp_current.len();
        for (what, v) in [("logp_old", &self.logp_old), ("logp_ref", &self.logp_ref)] {
            if v.len() != n {
                return Err(MathError::LengthMismatch {
                    what,
                    expected: n,
                    found: v.len(),
                });
            }
        }
        for (what, v) in [
            ("logp_current", &self.logp_current),
            ("logp_old", &self.logp_old),
            ("logp_ref", &self.logp_ref),
        ] {
            if v.iter().any(|x| x.is_nan()) {
                return Err(MathError::NonFinite(what));
            }
            if v.iter().any(|&x| x > F::zero()) {
                return Err(MathError::PositiveLogProb(what));
            }
        }
        if !self.seq_reward.is_finite() {
            return Err(MathError::NonFinite("seq_reward"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.logp_current.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logp_current.is_empty()
    }
}

impl Record for TokenTrajectory<f64> {
    const SCHEMA: &'static str = "trajectories";

    fn validate(&self) -> Result<(), String> {
        TokenTrajectory::validate(self).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RlConfig<F> {
    pub clip_eps: F,
    pub kl_beta: F,
    pub gamma: F,
    pub lambda: F,
    pub whiten: bool,
}

impl<F: Float> Default for RlConfig<F> {
    fn default() -> Self {
        RlConfig {
            clip_eps: F::from(0.2).unwrap(),
            kl_beta: F::from(0.01).unwrap(),
            gamma: F::one(),
            lambda: F::from(0.95).unwrap(),
            whiten: false,
        }
    }
}

impl<F: Float> RlConfig<F> {
    // Negated comparisons so that NaN is rejected too.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), MathError> {
        if !(self.clip_eps > F::zero()) {
            return Err(MathError::InvalidConfig("clip_eps must be > 0".into()));
        }
        if !(self.kl_beta >= F::zero()) {
            return Err(MathError::InvalidConfig("kl_beta must be >= 0".into()));
        }
        let unit = |x: F| x >= F::zero() && x <= F::one();
        if !unit(self.gamma) || !unit(self.lambda) {
            return Err(MathError::InvalidConfig(
                "gamma and lambda must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// Single-sample KL estimate per token: `logp_current - logp_ref`.
pub fn kl_per_token<T: Copy + Sub<Output = T>>(
    logp_current: &[T],
    logp_ref: &[T],
) -> Result<Vec<T>, MathError> {
    if logp_current.len() != logp_ref.len() {
        return Err(MathError::LengthMismatch {
            what: "logp_ref",
            expected: logp_current.len(),
            found: logp_ref.len(),
        });
    }
    Ok(logp_current
        .iter()
        .zip(logp_ref)
        .map(|(&c, &r)| c - r)
        .collect())
}

/// Unwhitened `A[t] = R - beta * sum_{i >= t} kl[i]`.
///
/// Needs only ring operations, so it also runs over exact rationals.
pub fn suffix_kl_advantage<T: Num + Copy>(
    traj: &TokenTrajectory<T>,
    beta: T,
) -> Result<Vec<T>, MathError> {
    let kl = kl_per_token(&traj.logp_current, &traj.logp_ref)?;
    let mut adv = vec![T::zero(); kl.len()];
    let mut suffix = T::zero();
    for t in (0..kl.len()).rev() {
        suffix = suffix + kl[t];
        adv[t] = traj.seq_reward - beta * suffix;
    }
    Ok(adv)
}

/// KL-shaped advantages for a batch of trajectories, without a value model.
///
/// `A[t] = R - kl_beta * sum_{i >= t} kl[i]`. With `whiten`, all tokens of the
/// batch are jointly shifted to zero mean and scaled to unit variance.
pub fn rpp_advantages<F: Float>(
    batch: &[TokenTrajectory<F>],
    cfg: &RlConfig<F>,
) -> Result<Vec<Vec<F>>, MathError> {
    cfg.validate()?;
    let mut out = batch
        .iter()
        .map(|t| suffix_kl_advantage(t, cfg.kl_beta))
        .collect::<Result<Vec<_>, _>>()?;
    if cfg.whiten {
        let count = out.iter().map(Vec::len).sum::<usize>();
        if count > 0 {
            let n = F::from(count).unwrap();
            let mean = out.iter().flatten().fold(F::zero(), |a, &x| a + x) / n;
            let var = out
                .iter()
                .flatten()
                .fold(F::zero(), |a, &x| a + (x - mean) * (x - mean))
                / n;
            let scale = var.max(F::from(WHITEN_VAR_FLOOR).unwrap()).sqrt();
            for x in out.iter_mut().flatten() {
                *x = (*x - mean) / scale;
            }
        }
    }
    Ok(out)
}

/// [`rpp_advantages`] for a batch of one.
pub fn rpp_advantage<F: Float>(
    traj: &TokenTrajectory<F>,
    cfg: &RlConfig<F>,
) -> Result<Vec<F>, MathError> {
    Ok(rpp_advantages(std::slice::from_ref(traj), cfg)?
        .pop()
        .unwrap_or_default())
}

/// Generalized advantage estimation by backward recursion.
///
/// `values` carries one bootstrap entry past the last reward.
pub fn gae<T: Num + Copy>(
    rewards: &[T],
    values: &[T],
    gamma: T,
    lambda: T,
) -> Result<Vec<T>, MathError> {
    if values.len() != rewards.len() + 1 {
        return Err(MathError::LengthMismatch {
            what: "values",
            expected: rewards.len() + 1,
            found: values.len(),
        });
    }
    let mut adv = vec![T::zero(); rewards.len()];
    let mut running = T::zero();
    for t in (0..rewards.len()).rev() {
        let delta = rewards[t] + gamma * values[t + 1] - values[t];
        running = delta + gamma * lambda * running;
        adv[t] = running;
    }
    Ok(adv)
}

/// Clipped surrogate loss `-(1/T) sum_t min(r_t A_t, clip(r_t, 1-eps, 1+eps) A_t)`
/// with `r_t = exp(logp_current - logp_old)`.
pub fn ppo_surrogate<F: Float>(
    traj: &TokenTrajectory<F>,
    advantages: &[F],
    cfg: &RlConfig<F>,
) -> Result<F, MathError> {
    cfg.validate()?;
    let n = traj.len();
    if traj.logp_old.len() != n {
        return Err(MathError::LengthMismatch {
            what: "logp_old",
            expected: n,
            found: traj.logp_old.len(),
        });
    }
    if advantages.len() != n {
        return Err(MathError::LengthMismatch {
            what: "advantages",
            expected: n,
            found: advantages.len(),
        });
    }
    if n == 0 {
        return Err(MathError::TooFew { needed: 1, got: 0 });
    }
    let lo = F::one() - cfg.clip_eps;
    let hi = F::one() + cfg.clip_eps;
    let sum = (0..n).fold(F::zero(), |acc, t| {
        let ratio = (traj.logp_current[t] - traj.logp_old[t]).exp();
        let a = advantages[t];
        acc + (ratio * a).min(ratio.max(lo).min(hi) * a)
    });
    Ok(-sum / F::from(n).unwrap())
}
