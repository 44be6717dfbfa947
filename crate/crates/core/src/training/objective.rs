use std::sync::Arc;

use super::rollout::{replay_tape, EpisodeTrace, Tape};
use crate::error::{Error, Result};
use crate::model::{Controller, Group, ParamStore, Symbols};
use crate::numerics::{Graph, MixRows, Tensor, Var};

/// Accumulated gradient of a scalar loss, aligned with parameter ids.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    pub loss: f64,
    pub grads: Vec<Tensor>,
}

impl Gradient {
    pub fn zeros(params: &ParamStore) -> Self {
        Self {
            loss: 0.0,
            grads: params.zeros_like(),
        }
    }

    /// Adds `other` elementwise; callers fix the order for reproducibility.
    pub fn accumulate(&mut self, other: &Gradient) -> Result<()> {
        self.loss += other.loss;
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            a.add_assign(b)?;
        }
        Ok(())
    }

    pub fn norm(&self) -> f64 {
        self.grads
            .iter()
            .flat_map(|t| t.data())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    fn from_graph(g: &mut Graph, loss: Var, params: &ParamStore) -> Result<Self> {
        let value = g.value(loss).item()?;
        g.backward(loss)?;
        let mut grads = params.zeros_like();
        for (id, grad) in g.param_gradients() {
            grads[id] = grad.clone();
        }
        Ok(Self { loss: value, grads })
    }
}

/// Builds the policy-gradient surrogate on a tape.
///
/// Per step the loss is `-Σ_agents log p · (R - b)` with the advantage held
/// constant, plus `α (R - b)²` where `b` is the mean of the agents' baseline
/// heads. Everything is divided by `episodes`.
fn reinforce_loss(
    tape: &mut Tape,
    returns: &[Vec<f64>],
    alpha: f64,
    episodes: usize,
) -> Result<Option<Var>> {
    let g = &mut tape.graph;
    let norm = 1.0 / episodes as f64;
    let mut total: Option<Var> = None;
    for step in &tape.steps {
        let mut mix: MixRows = Vec::with_capacity(step.groups.len());
        let mut start = 0;
        for &n in &step.rows_per_group {
            let w = 1.0 / n as f64;
            mix.push((start..start + n).map(|r| (r, w)).collect());
            start += n;
        }
        let b = g.mix(step.baseline, Arc::new(mix))?;
        let b_value = g.value(b).data().to_vec();
        let ret: Vec<f64> = step.groups.iter().map(|&(e, t)| returns[e][t]).collect();
        let mut adv_rows = Vec::with_capacity(start);
        for ((&n, r), bv) in step.rows_per_group.iter().zip(&ret).zip(&b_value) {
            adv_rows.extend(std::iter::repeat_n(r - bv, n));
        }
        let adv = g.constant(Tensor::vector(adv_rows))?;
        let weighted = g.mul(step.log_prob, adv)?;
        let score = g.sum(weighted)?;
        let score = g.scale(score, -norm)?;
        let r = g.constant(Tensor::new(vec![ret.len(), 1], ret)?)?;
        let diff = g.sub(r, b)?;
        let sq = g.mul(diff, diff)?;
        let sq = g.sum(sq)?;
        let sq = g.scale(sq, alpha * norm)?;
        let term = g.add(score, sq)?;
        total = Some(match total {
            None => term,
            Some(t) => g.add(t, term)?,
        });
    }
    Ok(total)
}

pub(crate) fn tape_gradient(
    controller: &Controller,
    mut tape: Tape,
    traces: &[&EpisodeTrace],
    alpha: f64,
    episodes: usize,
) -> Result<Gradient> {
    let returns: Vec<Vec<f64>> = traces.iter().map(|t| t.returns()).collect();
    match reinforce_loss(&mut tape, &returns, alpha, episodes)? {
        Some(loss) => Gradient::from_graph(&mut tape.graph, loss, controller.params()),
        None => Ok(Gradient::zeros(controller.params())),
    }
}

/// Policy-gradient update from stored traces.
///
/// Log-probabilities and baselines are recomputed from the stored
/// observations, actions and symbols under the current parameters. Traces are
/// processed in id order, `chunk` at a time, and normalised by the number of
/// traces.
pub fn reinforce_update(
    controller: &Controller,
    traces: &[EpisodeTrace],
    alpha: f64,
    chunk: usize,
) -> Result<Gradient> {
    if alpha < 0.0 {
        return Err(Error::InvalidArgument(format!("alpha {alpha} < 0")));
    }
    let mut ordered: Vec<&EpisodeTrace> = traces.iter().collect();
    ordered.sort_by_key(|t| t.id);
    let mut total = Gradient::zeros(controller.params());
    for part in ordered.chunks(chunk.max(1)) {
        let tape = replay_tape(controller, part)?;
        let grad = tape_gradient(controller, tape, part, alpha, traces.len())?;
        total.accumulate(&grad)?;
    }
    Ok(total)
}

/// Policy values recomputed for one stored step.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReplayStep {
    pub log_probs: Vec<f64>,
    pub baselines: Vec<f64>,
}

/// Recomputes log-probabilities and baselines of stored traces,
/// `[trace][step]`; steps without agents stay empty.
pub fn replay(controller: &Controller, traces: &[EpisodeTrace]) -> Result<Vec<Vec<ReplayStep>>> {
    let refs: Vec<&EpisodeTrace> = traces.iter().collect();
    let tape = replay_tape(controller, &refs)?;
    let mut out: Vec<Vec<ReplayStep>> = traces
        .iter()
        .map(|t| vec![ReplayStep::default(); t.steps.len()])
        .collect();
    for step in &tape.steps {
        let lp = tape.graph.value(step.log_prob).data();
        let bl = tape.graph.value(step.baseline).data();
        let mut start = 0;
        for (&(e, t), &n) in step.groups.iter().zip(&step.rows_per_group) {
            out[e][t] = ReplayStep {
                log_probs: lp[start..start + n].to_vec(),
                baselines: bl[start..start + n].to_vec(),
            };
            start += n;
        }
    }
    Ok(out)
}

/// Supervised cross-entropy on `(group, per-agent target)` pairs.
///
/// The loss is the mean negative log-likelihood over every agent in
/// `examples`; `total_agents` sets the divisor so chunks can be summed.
pub fn supervised_update(
    controller: &Controller,
    examples: &[(Group, Vec<usize>)],
    total_agents: usize,
) -> Result<(Gradient, Tensor)> {
    let batch: Vec<Group> = examples.iter().map(|(g, _)| g.clone()).collect();
    let mut g = Graph::new();
    let out = controller.forward_graph(&mut g, &batch, None, Symbols::None, false)?;
    let lp = out.log_probs[0];
    let width = g.value(lp).cols();
    let mut flat = Vec::new();
    for (group, targets) in examples {
        if targets.len() != group.agents.len() {
            return Err(Error::InvalidArgument(
                "one target per agent is required".into(),
            ));
        }
        for &t in targets {
            if t >= width {
                return Err(Error::InvalidArgument(format!("target {t} out of {width}")));
            }
            flat.push(flat.len() * width + t);
        }
    }
    let probs = g.value(lp).map(f64::exp);
    let picked = g.pick(lp, flat)?;
    let sum = g.sum(picked)?;
    let loss = g.scale(sum, -1.0 / total_agents as f64)?;
    Ok((
        Gradient::from_graph(&mut g, loss, controller.params())?,
        probs,
    ))
}
