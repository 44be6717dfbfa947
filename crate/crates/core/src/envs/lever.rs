use serde::{Deserialize, Serialize};

use super::{Environment, Outcome, StepResult};
use crate::error::{Error, Result};
use crate::model::{AgentView, Observation};
use crate::numerics::Rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeverConfig {
    /// Levers per round, and agents drawn per round.
    pub levers: usize,
    /// Size of the agent pool.
    pub pool: usize,
}

impl Default for LeverConfig {
    fn default() -> Self {
        Self {
            levers: 5,
            pool: 500,
        }
    }
}

impl LeverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levers == 0 || self.levers > self.pool {
            return Err(Error::Env(format!(
                "lever game needs 1 <= m <= N, got m={} N={}",
                self.levers, self.pool
            )));
        }
        Ok(())
    }
}

/// Reward for a joint lever choice: distinct levers over `m`.
pub fn lever_reward(levers: usize, choices: &[usize]) -> Result<f64> {
    if choices.len() != levers {
        return Err(Error::Env(format!(
            "expected {} choices, got {}",
            levers,
            choices.len()
        )));
    }
    let mut pulled = vec![false; levers];
    for &c in choices {
        *pulled
            .get_mut(c)
            .ok_or_else(|| Error::Env(format!("lever {c} out of range")))? = true;
    }
    Ok(pulled.iter().filter(|&&p| p).count() as f64 / levers as f64)
}

/// Target lever of each agent: its rank in ascending ID order.
pub fn lever_supervised_target(ids: &[usize]) -> Result<Vec<usize>> {
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by_key(|&i| ids[i]);
    if order.windows(2).any(|w| ids[w[0]] == ids[w[1]]) {
        return Err(Error::Env("duplicate agent IDs".into()));
    }
    let mut target = vec![0; ids.len()];
    for (rank, &i) in order.iter().enumerate() {
        target[i] = rank;
    }
    Ok(target)
}

/// One-shot game: `m` agents drawn from the pool each pull one of `m` levers.
#[derive(Clone, Debug)]
pub struct LeverGame {
    config: LeverConfig,
    ids: Vec<usize>,
    reward: Option<f64>,
}

impl LeverGame {
    pub fn new(config: LeverConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            ids: Vec::new(),
            reward: None,
        })
    }

    /// Seats a fixed set of agents instead of drawing them.
    pub fn seat(&mut self, ids: Vec<usize>) -> Result<()> {
        if ids.len() != self.config.levers || ids.iter().any(|&i| i >= self.config.pool) {
            return Err(Error::Env("invalid lever seating".into()));
        }
        lever_supervised_target(&ids)?;
        self.ids = ids;
        self.reward = None;
        Ok(())
    }

    /// Pool IDs of the seated agents, by seat.
    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn targets(&self) -> Result<Vec<usize>> {
        lever_supervised_target(&self.ids)
    }
}

impl Environment for LeverGame {
    fn reset(&mut self, rng: &mut Rng) -> Result<()> {
        let ids = rng.sample_without_replacement(self.config.pool, self.config.levers);
        self.seat(ids)
    }

    fn views(&self) -> Vec<AgentView> {
        if self.reward.is_some() {
            return Vec::new();
        }
        self.ids
            .iter()
            .enumerate()
            .map(|(seat, &id)| AgentView {
                slot: seat,
                obs: Observation {
                    dim: self.config.pool,
                    active: vec![id],
                },
                pos: None,
            })
            .collect()
    }

    fn capacity(&self) -> usize {
        self.config.levers
    }

    fn input_dim(&self) -> usize {
        self.config.pool
    }

    fn num_actions(&self) -> usize {
        self.config.levers
    }

    fn step(&mut self, actions: &[usize], _rng: &mut Rng) -> Result<StepResult> {
        if self.reward.is_some() {
            return Err(Error::Env("step after episode end".into()));
        }
        if self.ids.is_empty() {
            return Err(Error::Env("step before reset".into()));
        }
        let reward = lever_reward(self.config.levers, actions)?;
        self.reward = Some(reward);
        Ok(StepResult {
            reward,
            done: true,
            outcome: Some(Outcome::Finished),
        })
    }

    fn is_done(&self) -> bool {
        self.reward.is_some()
    }

    fn metric(&self) -> f64 {
        self.reward.unwrap_or(0.0)
    }

    fn step_record(&self) -> serde_json::Value {
        serde_json::json!({ "ids": self.ids, "reward": self.reward })
    }
}
