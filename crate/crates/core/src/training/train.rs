use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::curriculum::CurriculumSchedule;
use super::objective::{supervised_update, tape_gradient, Gradient};
use super::optim::{clip_grad_norm, Optimizer, OptimizerKind};
use super::rollout::{rollout_tape, EpisodeSeed, EpisodeTrace, RolloutOptions};
use crate::envs::{lever_reward, EnvFactory, Environment, LeverGame, TaskConfig};
use crate::error::{Error, Result};
use crate::model::{Controller, Group};
use crate::numerics::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Reinforce,
    /// Cross-entropy against sorted-ID lever targets.
    Supervised,
}

impl std::str::FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reinforce" => Ok(Self::Reinforce),
            "supervised" => Ok(Self::Supervised),
            other => Err(Error::InvalidArgument(format!("unknown objective {other}"))),
        }
    }
}

/// How episodes are split across threads. Results depend on `chunk` but
/// never on `workers`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Parallelism {
    pub workers: usize,
    /// Episodes per lockstep chunk.
    pub chunk: usize,
}

impl Default for Parallelism {
    fn default() -> Self {
        Self {
            workers: 1,
            chunk: 16,
        }
    }
}

impl Parallelism {
    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers.max(1))
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub objective: Objective,
    /// Weight of the baseline regression term.
    pub alpha: f64,
    pub lr: f64,
    /// Episodes per update.
    pub batch: usize,
    pub epochs: usize,
    pub updates: usize,
    pub optimizer: OptimizerKind,
    pub max_grad_norm: Option<f64>,
    pub parallel: Parallelism,
    pub curriculum: Vec<CurriculumSchedule>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            objective: Objective::Reinforce,
            alpha: 0.03,
            lr: 0.003,
            batch: 288,
            epochs: 300,
            updates: 100,
            optimizer: OptimizerKind::RmsProp,
            max_grad_norm: None,
            parallel: Parallelism::default(),
            curriculum: Vec::new(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alpha < 0.0 || !self.alpha.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "alpha {} must be >= 0",
                self.alpha
            )));
        }
        if self.batch == 0 || self.parallel.chunk == 0 {
            return Err(Error::InvalidArgument(
                "batch and chunk must be >= 1".into(),
            ));
        }
        if !(self.lr > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "learning rate {} must be > 0",
                self.lr
            )));
        }
        Ok(())
    }
}

/// Training statistics of one epoch, over every episode it sampled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub metric_mean: f64,
    pub metric_std: f64,
    pub reward_mean: f64,
    pub episodes: usize,
    pub loss_mean: f64,
}

#[derive(Default)]
struct Tally {
    metric: Vec<f64>,
    reward: f64,
    loss: f64,
    updates: usize,
}

impl Tally {
    fn finish(self, epoch: usize) -> EpochMetrics {
        let (mean, std) = mean_std(&self.metric);
        let n = self.metric.len().max(1) as f64;
        EpochMetrics {
            epoch,
            metric_mean: mean,
            metric_std: std,
            reward_mean: self.reward / n,
            episodes: self.metric.len(),
            loss_mean: self.loss / self.updates.max(1) as f64,
        }
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Samples a batch and returns its summed, normalised policy gradient.
pub fn reinforce_batch(
    controller: &Controller,
    factory: &EnvFactory,
    root: &Rng,
    batch: usize,
    alpha: f64,
    parallel: &Parallelism,
    pool: &rayon::ThreadPool,
) -> Result<(Gradient, Vec<EpisodeTrace>)> {
    let ids: Vec<usize> = (0..batch).collect();
    let parts: Vec<Result<(Gradient, Vec<EpisodeTrace>)>> = pool.install(|| {
        ids.par_chunks(parallel.chunk)
            .map(|part| {
                let seeds = part.iter().map(|&e| EpisodeSeed::derive(root, e)).collect();
                let (traces, tape) =
                    rollout_tape(controller, factory, seeds, RolloutOptions::default())?;
                let refs: Vec<&EpisodeTrace> = traces.iter().collect();
                let grad = tape_gradient(controller, tape, &refs, alpha, batch)?;
                Ok((grad, traces))
            })
            .collect()
    });
    let mut total = Gradient::zeros(controller.params());
    let mut traces = Vec::with_capacity(batch);
    for part in parts {
        let (grad, t) = part?;
        total.accumulate(&grad)?;
        traces.extend(t);
    }
    Ok((total, traces))
}

/// Samples lever games and returns the cross-entropy gradient plus the
/// reward each game earns when the policy samples its levers.
pub fn supervised_batch(
    controller: &Controller,
    factory: &EnvFactory,
    root: &Rng,
    batch: usize,
    parallel: &Parallelism,
    pool: &rayon::ThreadPool,
) -> Result<(Gradient, Vec<f64>)> {
    let Some(TaskConfig::Lever(lever)) = factory.task() else {
        return Err(Error::InvalidArgument(
            "supervised training is defined for the lever task".into(),
        ));
    };
    let total_agents = batch * lever.levers;
    let ids: Vec<usize> = (0..batch).collect();
    let parts: Vec<Result<(Gradient, Vec<f64>)>> = pool.install(|| {
        ids.par_chunks(parallel.chunk)
            .map(|part| {
                let mut examples = Vec::with_capacity(part.len());
                let mut policy_rngs = Vec::with_capacity(part.len());
                for &e in part {
                    let mut seed = EpisodeSeed::derive(root, e);
                    let mut game = LeverGame::new(lever.clone())?;
                    game.reset(&mut seed.env)?;
                    let group = Group {
                        key: e,
                        capacity: game.capacity(),
                        agents: game.views(),
                    };
                    examples.push((group, game.targets()?));
                    policy_rngs.push(seed.policy);
                }
                let (grad, probs) = supervised_update(controller, &examples, total_agents)?;
                let mut rewards = Vec::with_capacity(part.len());
                let mut row = 0;
                for ((group, _), rng) in examples.iter().zip(&mut policy_rngs) {
                    let mut choice = Vec::with_capacity(group.agents.len());
                    for _ in &group.agents {
                        choice.push(rng.categorical(probs.row(row))?);
                        row += 1;
                    }
                    rewards.push(lever_reward(lever.levers, &choice)?);
                }
                Ok((grad, rewards))
            })
            .collect()
    });
    let mut total = Gradient::zeros(controller.params());
    let mut rewards = Vec::with_capacity(batch);
    for part in parts {
        let (grad, r) = part?;
        total.accumulate(&grad)?;
        rewards.extend(r);
    }
    Ok((total, rewards))
}

/// Trains in place. Update `u` of epoch `k` draws its episodes from
/// `root.split(k · updates + u)`. `on_epoch` runs after every epoch.
pub fn train<F>(
    controller: &mut Controller,
    factory: &mut EnvFactory,
    config: &TrainConfig,
    root: &Rng,
    mut on_epoch: F,
) -> Result<Vec<EpochMetrics>>
where
    F: FnMut(&EpochMetrics, &Controller) -> Result<()>,
{
    config.validate()?;
    let pool = config.parallel.pool()?;
    let mut optimizer = Optimizer::new(config.optimizer, config.lr, controller.params().values());
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        for schedule in &config.curriculum {
            factory.set_param(&schedule.param, schedule.value(epoch))?;
        }
        let mut tally = Tally::default();
        for u in 0..config.updates {
            let update_root = root.split((epoch * config.updates + u) as u64);
            let mut grad = match config.objective {
                Objective::Reinforce => {
                    let (grad, traces) = reinforce_batch(
                        controller,
                        factory,
                        &update_root,
                        config.batch,
                        config.alpha,
                        &config.parallel,
                        &pool,
                    )?;
                    for t in &traces {
                        tally.metric.push(t.metric);
                        tally.reward += t.total_reward();
                    }
                    grad
                }
                Objective::Supervised => {
                    let (grad, rewards) = supervised_batch(
                        controller,
                        factory,
                        &update_root,
                        config.batch,
                        &config.parallel,
                        &pool,
                    )?;
                    tally.reward += rewards.iter().sum::<f64>();
                    tally.metric.extend(rewards);
                    grad
                }
            };
            if !grad.loss.is_finite() || grad.grads.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "gradient at epoch {epoch} update {u}"
                )));
            }
            if let Some(max) = config.max_grad_norm {
                clip_grad_norm(&mut grad.grads, max);
            }
            tally.loss += grad.loss;
            tally.updates += 1;
            optimizer.step(controller.params_mut().values_mut(), &grad.grads)?;
        }
        let metrics = tally.finish(epoch);
        on_epoch(&metrics, controller)?;
        history.push(metrics);
    }
    Ok(history)
}

/// Mean evaluation metric with a 95% normal-approximation half-width.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub trials: usize,
    pub mean: f64,
    pub std: f64,
    pub half_width: f64,
    pub reward_mean: f64,
}

impl Evaluation {
    pub fn from_traces(traces: &[EpisodeTrace]) -> Self {
        let metric: Vec<f64> = traces.iter().map(|t| t.metric).collect();
        let (mean, std) = mean_std(&metric);
        let n = traces.len().max(1) as f64;
        Self {
            trials: traces.len(),
            mean,
            std,
            half_width: 1.96 * std / n.sqrt(),
            reward_mean: traces.iter().map(EpisodeTrace::total_reward).sum::<f64>() / n,
        }
    }
}

/// Samples `trials` episodes (episode `e` seeded by `root.split(e)`).
pub fn evaluate(
    controller: &Controller,
    factory: &EnvFactory,
    trials: usize,
    root: &Rng,
    parallel: &Parallelism,
    opts: RolloutOptions,
) -> Result<(Evaluation, Vec<EpisodeTrace>)> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be >= 1".into()));
    }
    let pool = parallel.pool()?;
    let ids: Vec<usize> = (0..trials).collect();
    let parts: Vec<Result<Vec<EpisodeTrace>>> = pool.install(|| {
        ids.par_chunks(parallel.chunk.max(1))
            .map(|part| {
                let seeds = part.iter().map(|&e| EpisodeSeed::derive(root, e)).collect();
                rollout_tape(controller, factory, seeds, opts).map(|(t, _)| t)
            })
            .collect()
    });
    let mut traces = Vec::with_capacity(trials);
    for p in parts {
        traces.extend(p?);
    }
    Ok((Evaluation::from_traces(&traces), traces))
}

pub const METRICS_HEADER: &str = "epoch,metric_mean,metric_std,reward_mean,episodes,loss_mean";

pub fn write_metrics_csv<W: Write>(mut out: W, history: &[EpochMetrics]) -> Result<()> {
    writeln!(out, "{METRICS_HEADER}")?;
    for m in history {
        write_metrics_row(&mut out, m)?;
    }
    Ok(())
}

pub fn write_metrics_row<W: Write>(mut out: W, m: &EpochMetrics) -> Result<()> {
    writeln!(
        out,
        "{},{},{},{},{},{}",
        m.epoch, m.metric_mean, m.metric_std, m.reward_mean, m.episodes, m.loss_mean
    )?;
    Ok(())
}
