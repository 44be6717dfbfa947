use serde::{Deserialize, Serialize};

use crate::envs::{AgentView, EnvFactory, Environment, Outcome, TraceLine};
use crate::error::{Error, Result};
use crate::model::{CommRecord, Controller, ControllerKind, GraphCarry, Group, Symbols};
use crate::numerics::{Graph, Rng, Var};

/// Suffix sums: `out[t] = Σ_{i ≥ t} rewards[i]`.
pub fn returns_to_go(rewards: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (o, r) in out.iter_mut().zip(rewards).rev() {
        acc += r;
        *o = acc;
    }
    out
}

/// One environment step as seen by the policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    /// Live agents in row order.
    pub views: Vec<AgentView>,
    pub actions: Vec<usize>,
    /// Per agent: log-probability of its action plus its emitted symbols.
    pub log_probs: Vec<f64>,
    /// Emitted symbols, `[comm step][agent]`.
    pub symbols: Vec<Vec<usize>>,
    /// Per-agent baseline heads.
    pub baselines: Vec<f64>,
    pub reward: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record: Option<serde_json::Value>,
    /// Per communication step, this group's rows of the hidden and broadcast vectors.
    #[serde(skip)]
    pub vectors: Vec<CommRecord>,
}

impl StepTrace {
    pub fn live(&self) -> Vec<usize> {
        self.views.iter().map(|v| v.slot).collect()
    }

    /// Mean of the agents' baseline heads; zero with no agents.
    pub fn baseline(&self) -> f64 {
        if self.baselines.is_empty() {
            0.0
        } else {
            self.baselines.iter().sum::<f64>() / self.baselines.len() as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    /// Position of the episode within its batch; fixes reduction order.
    pub id: usize,
    pub capacity: usize,
    pub steps: Vec<StepTrace>,
    pub outcome: Option<Outcome>,
    pub metric: f64,
}

impl EpisodeTrace {
    pub fn rewards(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.reward).collect()
    }

    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    pub fn returns(&self) -> Vec<f64> {
        returns_to_go(&self.rewards())
    }

    /// One line per step, with the live slots and the environment record.
    pub fn trace_lines(&self) -> Vec<TraceLine> {
        self.steps
            .iter()
            .enumerate()
            .map(|(t, s)| TraceLine {
                episode: self.id,
                step: t,
                live: s.views.iter().map(|v| v.slot).collect(),
                actions: s.actions.clone(),
                reward: s.reward,
                record: s.record.clone().unwrap_or(serde_json::Value::Null),
            })
            .collect()
    }
}

/// Random streams of one episode.
#[derive(Clone, Debug)]
pub struct EpisodeSeed {
    pub id: usize,
    pub env: Rng,
    pub policy: Rng,
    pub symbols: Rng,
}

impl EpisodeSeed {
    /// Streams derived from `root.split(id)`.
    pub fn derive(root: &Rng, id: usize) -> Self {
        let base = root.split(id as u64);
        Self {
            id,
            env: base.split(0),
            policy: base.split(1),
            symbols: base.split(2),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RolloutOptions {
    /// Keep each step's environment record.
    pub records: bool,
    /// Keep hidden and communication vectors.
    pub vectors: bool,
}

/// Policy quantities recorded on the tape for one lockstep step.
pub(crate) struct TapeStep {
    /// `(episode index in chunk, step index)` of each group, in batch order.
    pub groups: Vec<(usize, usize)>,
    pub rows_per_group: Vec<usize>,
    /// `[rows]` action plus symbol log-probabilities.
    pub log_prob: Var,
    /// `[rows × 1]` baseline heads.
    pub baseline: Var,
}

pub(crate) struct Tape {
    pub graph: Graph,
    pub steps: Vec<TapeStep>,
}

pub(crate) fn check_heads(controller: &Controller, actions: usize) -> Result<()> {
    let heads = &controller.config().action_heads;
    if heads.as_slice() != [actions] {
        return Err(Error::InvalidArgument(format!(
            "controller heads {heads:?} do not match the environment's {actions} actions"
        )));
    }
    Ok(())
}

/// Log-probabilities of `actions` (head 0) plus symbol terms, `[rows]`.
pub(crate) fn chosen_log_prob(
    g: &mut Graph,
    log_probs: Var,
    symbol_log_prob: Option<Var>,
    actions: &[usize],
) -> Result<Var> {
    let width = g.value(log_probs).cols();
    let flat = actions
        .iter()
        .enumerate()
        .map(|(r, &a)| {
            if a < width {
                Ok(r * width + a)
            } else {
                Err(Error::InvalidArgument(format!("action {a} out of {width}")))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let lp = g.pick(log_probs, flat)?;
    match symbol_log_prob {
        Some(s) => g.add(lp, s),
        None => Ok(lp),
    }
}

fn slice_records(records: &[CommRecord], start: usize, end: usize) -> Vec<CommRecord> {
    let rows = |t: &crate::numerics::Tensor| {
        let d = t.cols();
        crate::numerics::Tensor::new(vec![end - start, d], t.data()[start * d..end * d].to_vec())
            .expect("row slice")
    };
    records
        .iter()
        .map(|r| CommRecord {
            h: rows(&r.h),
            comm: r.comm.as_ref().map(rows),
        })
        .collect()
}

struct Live {
    env: Box<dyn Environment>,
    seed: EpisodeSeed,
    trace: EpisodeTrace,
}

/// Log-probs, baselines, symbols and records of one group at one step.
type GroupOutputs = (Vec<f64>, Vec<f64>, Vec<Vec<usize>>, Vec<CommRecord>);

/// Runs episodes in lockstep on one tape: every live episode contributes a
/// group to each step's batched forward pass.
pub(crate) fn rollout_tape(
    controller: &Controller,
    factory: &EnvFactory,
    seeds: Vec<EpisodeSeed>,
    opts: RolloutOptions,
) -> Result<(Vec<EpisodeTrace>, Tape)> {
    let mut live = Vec::with_capacity(seeds.len());
    for mut seed in seeds {
        let mut env = factory.make()?;
        check_heads(controller, env.num_actions())?;
        env.reset(&mut seed.env)?;
        live.push(Live {
            trace: EpisodeTrace {
                id: seed.id,
                capacity: env.capacity(),
                steps: Vec::new(),
                outcome: None,
                metric: 0.0,
            },
            env,
            seed,
        });
    }
    let discrete = controller.config().kind == ControllerKind::DiscreteComm;
    let mut g = Graph::new();
    let mut tape_steps = Vec::new();
    let mut carry: Option<GraphCarry> = None;
    loop {
        let active: Vec<usize> = (0..live.len())
            .filter(|&i| !live[i].env.is_done())
            .collect();
        if active.is_empty() {
            break;
        }
        let mut views: Vec<Vec<AgentView>> = active.iter().map(|&i| live[i].env.views()).collect();
        let members: Vec<usize> = (0..active.len())
            .filter(|&k| !views[k].is_empty())
            .collect();
        let mut actions: Vec<Vec<usize>> = vec![Vec::new(); active.len()];
        let mut per_agent: Vec<GroupOutputs> = vec![Default::default(); active.len()];
        if !members.is_empty() {
            let batch: Vec<Group> = members
                .iter()
                .map(|&k| Group {
                    key: live[active[k]].trace.id,
                    capacity: live[active[k]].trace.capacity,
                    agents: views[k].clone(),
                })
                .collect();
            let mut sym_rngs: Vec<Rng> = members
                .iter()
                .map(|&k| live[active[k]].seed.symbols.clone())
                .collect();
            let symbols = if discrete {
                Symbols::Sample(&mut sym_rngs)
            } else {
                Symbols::None
            };
            let out =
                controller.forward_graph(&mut g, &batch, carry.as_ref(), symbols, opts.vectors)?;
            if discrete {
                for (&k, rng) in members.iter().zip(sym_rngs) {
                    live[active[k]].seed.symbols = rng;
                }
            }
            let lp_value = g.value(out.log_probs[0]).clone();
            let mut flat_actions = Vec::with_capacity(out.rows.len());
            let mut start = 0;
            let mut rows_per_group = Vec::with_capacity(members.len());
            for &k in &members {
                let n = views[k].len();
                let ep = &mut live[active[k]];
                for r in start..start + n {
                    let p: Vec<f64> = lp_value.row(r).iter().map(|x| x.exp()).collect();
                    let a = ep.seed.policy.categorical(&p)?;
                    actions[k].push(a);
                    flat_actions.push(a);
                }
                rows_per_group.push(n);
                start += n;
            }
            let log_prob =
                chosen_log_prob(&mut g, out.log_probs[0], out.symbol_log_prob, &flat_actions)?;
            let lp = g.value(log_prob).data().to_vec();
            let bl = g.value(out.baseline).data().to_vec();
            let mut start = 0;
            for &k in &members {
                let n = views[k].len();
                let syms = out
                    .symbols
                    .iter()
                    .map(|s| s[start..start + n].to_vec())
                    .collect();
                let vectors = if opts.vectors {
                    slice_records(&out.records, start, start + n)
                } else {
                    Vec::new()
                };
                per_agent[k] = (
                    lp[start..start + n].to_vec(),
                    bl[start..start + n].to_vec(),
                    syms,
                    vectors,
                );
                start += n;
            }
            tape_steps.push(TapeStep {
                groups: members
                    .iter()
                    .map(|&k| (active[k], live[active[k]].trace.steps.len()))
                    .collect(),
                rows_per_group,
                log_prob,
                baseline: out.baseline,
            });
            carry = out.carry;
        } else {
            carry = None;
        }
        for (k, &i) in active.iter().enumerate() {
            let ep = &mut live[i];
            let result = ep.env.step(&actions[k], &mut ep.seed.env)?;
            let (log_probs, baselines, symbols, vectors) = std::mem::take(&mut per_agent[k]);
            ep.trace.steps.push(StepTrace {
                views: std::mem::take(&mut views[k]),
                actions: std::mem::take(&mut actions[k]),
                log_probs,
                symbols,
                baselines,
                reward: result.reward,
                record: opts.records.then(|| ep.env.step_record()),
                vectors,
            });
            if result.done {
                ep.trace.outcome = result.outcome;
                ep.trace.metric = ep.env.metric();
            }
        }
    }
    let traces = live.into_iter().map(|l| l.trace).collect();
    Ok((
        traces,
        Tape {
            graph: g,
            steps: tape_steps,
        },
    ))
}

/// Recomputes the tape of recorded episodes, replaying stored actions and symbols.
pub(crate) fn replay_tape(controller: &Controller, traces: &[&EpisodeTrace]) -> Result<Tape> {
    let mut g = Graph::new();
    let mut tape_steps = Vec::new();
    let mut carry: Option<GraphCarry> = None;
    let horizon = traces.iter().map(|t| t.steps.len()).max().unwrap_or(0);
    for t in 0..horizon {
        let members: Vec<usize> = (0..traces.len())
            .filter(|&i| traces[i].steps.get(t).is_some_and(|s| !s.views.is_empty()))
            .collect();
        if members.is_empty() {
            carry = None;
            continue;
        }
        let batch: Vec<Group> = members
            .iter()
            .map(|&i| Group {
                key: traces[i].id,
                capacity: traces[i].capacity,
                agents: traces[i].steps[t].views.clone(),
            })
            .collect();
        let comm_steps = traces[members[0]].steps[t].symbols.len();
        let mut recorded: Vec<Vec<usize>> = vec![Vec::new(); comm_steps];
        let mut actions = Vec::new();
        for &i in &members {
            let s = &traces[i].steps[t];
            if s.actions.len() != s.views.len() || s.symbols.len() != comm_steps {
                return Err(Error::InvalidArgument(format!(
                    "trace {} step {t} is inconsistent",
                    traces[i].id
                )));
            }
            for (dst, src) in recorded.iter_mut().zip(&s.symbols) {
                dst.extend_from_slice(src);
            }
            actions.extend_from_slice(&s.actions);
        }
        let symbols = if controller.config().kind == ControllerKind::DiscreteComm {
            Symbols::Replay(&recorded)
        } else {
            Symbols::None
        };
        let out = controller.forward_graph(&mut g, &batch, carry.as_ref(), symbols, false)?;
        check_heads(controller, g.value(out.log_probs[0]).cols())?;
        let log_prob = chosen_log_prob(&mut g, out.log_probs[0], out.symbol_log_prob, &actions)?;
        tape_steps.push(TapeStep {
            groups: members.iter().map(|&i| (i, t)).collect(),
            rows_per_group: members
                .iter()
                .map(|&i| traces[i].steps[t].views.len())
                .collect(),
            log_prob,
            baseline: out.baseline,
        });
        carry = out.carry;
    }
    Ok(Tape {
        graph: g,
        steps: tape_steps,
    })
}

/// Samples episodes with the current policy; no gradient.
pub fn rollout(
    controller: &Controller,
    factory: &EnvFactory,
    seeds: Vec<EpisodeSeed>,
    opts: RolloutOptions,
) -> Result<Vec<EpisodeTrace>> {
    rollout_tape(controller, factory, seeds, opts).map(|(traces, _)| traces)
}

/// A single episode.
pub fn rollout_episode(
    controller: &Controller,
    factory: &EnvFactory,
    seed: EpisodeSeed,
    opts: RolloutOptions,
) -> Result<EpisodeTrace> {
    let mut traces = rollout(controller, factory, vec![seed], opts)?;
    Ok(traces.remove(0))
}
