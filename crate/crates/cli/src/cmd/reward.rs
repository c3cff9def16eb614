use std::collections::HashMap;
use std::path::PathBuf;

use ace_core::corpus::{load_records, save_records, CandidateProgram, PreferencePair, Task};
use ace_core::rewardmath::{
    batch_bt_loss, featurize, gae, pair_bt_loss, ppo_surrogate, rpp_advantages, train_toy_rm,
    PairNormalization,
};
use ace_core::{FeatureVector, RlConfig, Trajectory};
use anyhow::{bail, Context, Result};
use clap::{Args, Subcommand};
use serde_json::json;

use crate::config::PipelineConfig;
use crate::report::emit;

#[derive(Subcommand, Debug)]
pub enum RewardCmd {
    /// Bradley-Terry loss of one pair or of a scored batch
    BtLoss(BtLossArgs),
    /// Fit the linear toy reward model on preference pairs
    BtTrain(BtTrainArgs),
    /// Per-token KL-shaped advantages without a value model
    Advantage(AdvantageArgs),
    /// Generalized advantage estimates from rewards and values
    Gae(GaeArgs),
    /// Clipped policy surrogate loss
    Ppo(PpoArgs),
}

#[derive(Args, Debug)]
pub struct BtLossArgs {
    /// One pair as `R_POS,R_NEG`
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with_all = ["targets", "scores"])]
    pub pair: Option<Vec<f64>>,
    /// Target ordering values (higher is better), e.g. pass rates
    #[arg(
        long,
        value_delimiter = ',',
        allow_hyphen_values = true,
        requires = "scores"
    )]
    pub targets: Option<Vec<f64>>,
    /// Reward-model scores aligned with --targets
    #[arg(
        long,
        value_delimiter = ',',
        allow_hyphen_values = true,
        requires = "targets"
    )]
    pub scores: Option<Vec<f64>>,
    /// Average over active pairs instead of over all n(n-1) ordered pairs
    #[arg(long)]
    pub active_pairs: bool,
}

#[derive(Args, Debug)]
pub struct BtTrainArgs {
    /// Preference pairs file
    #[arg(long)]
    pub pairs: PathBuf,
    /// Tasks file supplying question text
    #[arg(long)]
    pub tasks: PathBuf,
    /// Programs file supplying program text
    #[arg(long)]
    pub programs: PathBuf,
    /// Output model file
    #[arg(long)]
    pub out: PathBuf,
    /// Hashed feature dimension
    #[arg(long, default_value_t = 256)]
    pub dim: usize,
    /// Full-batch gradient steps
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    /// Step size
    #[arg(long, default_value_t = 1.0)]
    pub lr: f64,
}

/// RL settings; unset flags fall back to `[rl]` in the config file, then built-in defaults.
#[derive(Args, Debug, Clone, Default)]
pub struct RlArgs {
    /// KL coefficient [default: 0.01]
    #[arg(long)]
    pub kl_beta: Option<f64>,
    /// Clip range epsilon [default: 0.2]
    #[arg(long)]
    pub clip_eps: Option<f64>,
    /// Whiten advantages jointly over the batch
    #[arg(long)]
    pub whiten: bool,
}

impl RlArgs {
    fn resolve(&self, cfg: &PipelineConfig) -> Result<RlConfig> {
        let mut rl = cfg.rl;
        if let Some(v) = self.kl_beta {
            rl.kl_beta = v;
        }
        if let Some(v) = self.clip_eps {
            rl.clip_eps = v;
        }
        rl.whiten |= self.whiten;
        rl.validate()?;
        Ok(rl)
    }
}

#[derive(Args, Debug)]
pub struct AdvantageArgs {
    /// Trajectories file; each line is one response
    #[arg(long, conflicts_with_all = ["logp_current", "logp_ref", "kl"])]
    pub trajectories: Option<PathBuf>,
    /// Per-token log-probabilities under the policy
    #[arg(
        long,
        value_delimiter = ',',
        allow_hyphen_values = true,
        requires = "logp_ref"
    )]
    pub logp_current: Option<Vec<f64>>,
    /// Per-token log-probabilities under the reference model
    #[arg(
        long,
        value_delimiter = ',',
        allow_hyphen_values = true,
        requires = "logp_current"
    )]
    pub logp_ref: Option<Vec<f64>>,
    /// Per-token KL values, instead of the two log-probability lists
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with_all = ["logp_current", "logp_ref"])]
    pub kl: Option<Vec<f64>>,
    /// Sequence reward for an inline trajectory
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub reward: f64,
    #[command(flatten)]
    pub rl: RlArgs,
}

#[derive(Args, Debug)]
pub struct GaeArgs {
    /// Per-step rewards
    #[arg(
        long,
        value_delimiter = ',',
        allow_hyphen_values = true,
        required = true
    )]
    pub rewards: Vec<f64>,
    /// Value estimates, one longer than --rewards (the last is the bootstrap value)
    #[arg(
        long,
        value_delimiter = ',',
        allow_hyphen_values = true,
        required = true
    )]
    pub values: Vec<f64>,
    /// Discount [default: 1.0]
    #[arg(long)]
    pub gamma: Option<f64>,
    /// GAE lambda [default: 0.95]
    #[arg(long)]
    pub lambda: Option<f64>,
}

#[derive(Args, Debug)]
pub struct PpoArgs {
    /// Trajectories file; advantages are computed as in `advantage`
    #[arg(long, conflicts_with_all = ["logp_current", "logp_old", "advantages"])]
    pub trajectories: Option<PathBuf>,
    /// Per-token log-probabilities under the current policy
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, requires_all = ["logp_old", "advantages"])]
    pub logp_current: Option<Vec<f64>>,
    /// Per-token log-probabilities under the sampling policy
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub logp_old: Option<Vec<f64>>,
    /// Per-token advantages
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub advantages: Option<Vec<f64>>,
    #[command(flatten)]
    pub rl: RlArgs,
}

pub fn run(cmd: &RewardCmd, cfg: &PipelineConfig) -> Result<()> {
    match cmd {
        RewardCmd::BtLoss(a) => bt_loss(a),
        RewardCmd::BtTrain(a) => bt_train(a),
        RewardCmd::Advantage(a) => advantage(a, cfg),
        RewardCmd::Gae(a) => gae_cmd(a, cfg),
        RewardCmd::Ppo(a) => ppo(a, cfg),
    }
}

fn bt_loss(a: &BtLossArgs) -> Result<()> {
    if let Some(p) = &a.pair {
        if p.len() != 2 {
            bail!("--pair takes exactly two scores, got {}", p.len());
        }
        let loss = pair_bt_loss(p[0], p[1]);
        emit("reward bt-loss", json!({ "pair": p, "loss": loss }));
        return Ok(());
    }
    let (Some(targets), Some(scores)) = (&a.targets, &a.scores) else {
        bail!("pass --pair R_POS,R_NEG or both --targets and --scores");
    };
    let norm = if a.active_pairs {
        PairNormalization::ActivePairs
    } else {
        PairNormalization::AllOrdered
    };
    let loss = batch_bt_loss(targets, scores, norm)?;
    emit(
        "reward bt-loss",
        json!({ "n": scores.len(), "normalization": format!("{norm:?}"), "loss": loss }),
    );
    Ok(())
}

fn bt_train(a: &BtTrainArgs) -> Result<()> {
    if a.dim == 0 {
        bail!("--dim must be at least 1");
    }
    let pairs: Vec<PreferencePair> = load_records(&a.pairs)?;
    let tasks: Vec<Task> = load_records(&a.tasks)?;
    let programs: Vec<CandidateProgram> = load_records(&a.programs)?;
    let questions: HashMap<&str, &str> = tasks
        .iter()
        .map(|t| (t.task_id.as_str(), t.question_text.as_str()))
        .collect();
    let texts: HashMap<(&str, u32), &str> = programs
        .iter()
        .map(|p| ((p.task_id.as_str(), p.sample_index), p.source_text.as_str()))
        .collect();
    let features = |task_id: &str, idx: u32| -> Result<FeatureVector> {
        let q = questions
            .get(task_id)
            .with_context(|| format!("pair references unknown task {task_id}"))?;
        let p = texts
            .get(&(task_id, idx))
            .with_context(|| format!("pair references unknown program {task_id}#{idx}"))?;
        Ok(featurize(q, p, a.dim))
    };
    let examples = pairs
        .iter()
        .map(|p| {
            Ok((
                features(&p.task_id, p.positive_index)?,
                features(&p.task_id, p.negative_index)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let trained = train_toy_rm(&examples, a.epochs, a.lr)?;
    let model = &trained.model;
    let mut correct = 0usize;
    for (pos, neg) in &examples {
        if model.score(pos)? > model.score(neg)? {
            correct += 1;
        }
    }
    save_records(std::slice::from_ref(model), &a.out)?;
    emit(
        "reward bt-train",
        json!({
            "pairs": examples.len(),
            "dim": a.dim,
            "epochs": a.epochs,
            "initial_loss": trained.losses[0],
            "final_loss": trained.final_loss(),
            "train_accuracy": correct as f64 / examples.len() as f64,
        }),
    );
    Ok(())
}

fn inline_or_file(
    file: &Option<PathBuf>,
    inline: impl FnOnce() -> Result<Option<Trajectory>>,
) -> Result<Vec<Trajectory>> {
    if let Some(path) = file {
        return Ok(load_records(path)?);
    }
    match inline()? {
        Some(t) => Ok(vec![t]),
        None => bail!("pass --trajectories FILE or the inline per-token lists"),
    }
}

fn advantage(a: &AdvantageArgs, cfg: &PipelineConfig) -> Result<()> {
    let rl = a.rl.resolve(cfg)?;
    let batch = inline_or_file(&a.trajectories, || {
        // A KL list stands in for logp_current - logp_ref with logp_current = 0.
        let (cur, reference) = match (&a.logp_current, &a.logp_ref, &a.kl) {
            (Some(c), Some(r), _) => (c.clone(), r.clone()),
            (_, _, Some(kl)) => (vec![0.0; kl.len()], kl.iter().map(|k| -k).collect()),
            _ => return Ok(None),
        };
        Ok(Some(Trajectory::new(
            cur.clone(),
            cur,
            reference,
            a.reward,
        )?))
    })?;
    let advantages = rpp_advantages(&batch, &rl)?;
    emit(
        "reward advantage",
        json!({ "kl_beta": rl.kl_beta, "whiten": rl.whiten, "advantages": advantages }),
    );
    Ok(())
}

fn gae_cmd(a: &GaeArgs, cfg: &PipelineConfig) -> Result<()> {
    let gamma = a.gamma.unwrap_or(cfg.rl.gamma);
    let lambda = a.lambda.unwrap_or(cfg.rl.lambda);
    let rl = RlConfig {
        gamma,
        lambda,
        ..cfg.rl
    };
    rl.validate()?;
    let adv = gae(&a.rewards, &a.values, gamma, lambda)?;
    emit(
        "reward gae",
        json!({ "gamma": gamma, "lambda": lambda, "advantages": adv }),
    );
    Ok(())
}

fn ppo(a: &PpoArgs, cfg: &PipelineConfig) -> Result<()> {
    let rl = a.rl.resolve(cfg)?;
    let (batch, advantages) = match (&a.trajectories, &a.logp_current) {
        (Some(path), _) => {
            let batch: Vec<Trajectory> = load_records(path)?;
            let adv = rpp_advantages(&batch, &rl)?;
            (batch, adv)
        }
        (None, Some(cur)) => {
            let old = a.logp_old.clone().unwrap_or_default();
            let adv = a.advantages.clone().unwrap_or_default();
            (
                vec![Trajectory::new(cur.clone(), old, cur.clone(), 0.0)?],
                vec![adv],
            )
        }
        (None, None) => bail!("pass --trajectories FILE or --logp-current/--logp-old/--advantages"),
    };
    let losses = batch
        .iter()
        .zip(&advantages)
        .map(|(t, adv)| ppo_surrogate(t, adv, &rl))
        .collect::<Result<Vec<f64>, _>>()?;
    let mean = losses.iter().sum::<f64>() / losses.len().max(1) as f64;
    emit(
        "reward ppo",
        json!({ "clip_eps": rl.clip_eps, "losses": losses, "mean_loss": mean }),
    );
    Ok(())
}
