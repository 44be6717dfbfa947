//! Invariant checks runnable from the command line.
//!
//! Each property runs at a reduced size so the whole suite finishes in
//! seconds; the integration tests run the same checks at full size.

use commnet::envs::{Combat, CombatConfig, EnvFactory, Environment, TaskConfig, TrafficStepRecord};
use commnet::model::{
    build_block_t, AgentView, CellKind, Controller, ControllerConfig, ControllerKind, Group,
    Observation, Symbols,
};
use commnet::numerics::{checkpoint, grad_check, Activation, Graph, Rng, Tensor};
use commnet::training::{
    evaluate, rollout, train, EpisodeSeed, Parallelism, RolloutOptions, TrainConfig,
};

pub const KINDS: [ControllerKind; 4] = [
    ControllerKind::Independent,
    ControllerKind::FullyConnected,
    ControllerKind::DiscreteComm,
    ControllerKind::CommNet,
];
pub const CELLS: [CellKind; 3] = [CellKind::Mlp, CellKind::Rnn, CellKind::Lstm];

#[derive(Clone, Debug, PartialEq)]
pub struct PropertyResult {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

type Check = fn(&mut Rng) -> Result<String, String>;

const CHECKS: &[(&str, Check)] = &[
    ("softmax_normalisation", softmax_normalisation),
    ("permutation_equivariance", permutation_equivariance),
    ("single_agent_equivalence", single_agent_equivalence),
    (
        "wide_local_range_is_broadcast",
        wide_local_range_is_broadcast,
    ),
    ("gradient_check", gradient_check),
    ("block_matrix", block_matrix),
    ("checkpoint_round_trip", checkpoint_round_trip),
    ("lever_random_ratio", lever_random_ratio),
    ("traffic_reward_recompute", traffic_reward_recompute),
    ("combat_rules", combat_rules),
    ("recording_is_transparent", recording_is_transparent),
    ("worker_independence", worker_independence),
];

pub fn run_all(seed: u64) -> Vec<PropertyResult> {
    let root = Rng::new(seed);
    CHECKS
        .iter()
        .enumerate()
        .map(|(i, (name, check))| {
            let mut rng = root.split(i as u64);
            let (pass, detail) = match check(&mut rng) {
                Ok(d) => (true, d),
                Err(d) => (false, d),
            };
            PropertyResult { name, pass, detail }
        })
        .collect()
}

fn fail<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

pub fn toy_config(kind: ControllerKind, cell: CellKind, dim: usize) -> ControllerConfig {
    let mut c = ControllerConfig::new(kind, cell, dim, 4);
    c.hidden = 5;
    c.comm_steps = 2;
    c.agents = 3;
    c.vocab = Some(3);
    c.activation = Activation::Tanh;
    c.init_std = 0.5;
    c
}

pub fn random_group(rng: &mut Rng, key: usize, agents: usize, dim: usize) -> Group {
    Group {
        key,
        capacity: agents,
        agents: (0..agents)
            .map(|slot| AgentView {
                slot,
                obs: Observation::new(dim, rng.sample_without_replacement(dim, 2))
                    .expect("valid indices"),
                pos: Some((rng.below(6) as i64, rng.below(6) as i64)),
            })
            .collect(),
    }
}

fn softmax_normalisation(rng: &mut Rng) -> Result<String, String> {
    let mut worst: f64 = 0.0;
    for kind in KINDS {
        for cell in CELLS {
            let model = Controller::new(toy_config(kind, cell, 7), rng).map_err(fail)?;
            let batch = vec![random_group(rng, 0, 3, 7), random_group(rng, 1, 3, 7)];
            let mut streams = vec![rng.split(1), rng.split(2)];
            let (out, _) = model
                .forward(&batch, None, Symbols::Sample(&mut streams), false)
                .map_err(fail)?;
            for p in &out.probs {
                for r in 0..p.rows() {
                    worst = worst.max((p.row(r).iter().sum::<f64>() - 1.0).abs());
                }
            }
        }
    }
    if worst < 1e-12 {
        Ok(format!("max |Σp − 1| = {worst:.1e}"))
    } else {
        Err(format!("row sums off by {worst:.3e}"))
    }
}

fn permutation_equivariance(rng: &mut Rng) -> Result<String, String> {
    let model = Controller::new(toy_config(ControllerKind::CommNet, CellKind::Mlp, 7), rng)
        .map_err(fail)?;
    let mut worst: f64 = 0.0;
    for agents in 2..6 {
        let group = random_group(rng, 0, agents, 7);
        let order = rng.sample_without_replacement(agents, agents);
        let mut permuted = group.clone();
        permuted.agents = order.iter().map(|&i| group.agents[i].clone()).collect();
        let (a, _) = model
            .forward(&[group], None, Symbols::None, false)
            .map_err(fail)?;
        let (b, _) = model
            .forward(&[permuted], None, Symbols::None, false)
            .map_err(fail)?;
        for (pos, &src) in order.iter().enumerate() {
            for (x, y) in a.probs[0].row(src).iter().zip(b.probs[0].row(pos)) {
                worst = worst.max((x - y).abs());
            }
        }
    }
    if worst < 1e-12 {
        Ok(format!("max diff {worst:.1e}"))
    } else {
        Err(format!("permuted outputs differ by {worst:.3e}"))
    }
}

fn single_agent_equivalence(rng: &mut Rng) -> Result<String, String> {
    for cell in CELLS {
        let comm =
            Controller::new(toy_config(ControllerKind::CommNet, cell, 7), rng).map_err(fail)?;
        let mut indep =
            Controller::new(toy_config(ControllerKind::Independent, cell, 7), rng).map_err(fail)?;
        indep
            .params_mut()
            .copy_shared_from(comm.params())
            .map_err(fail)?;
        let batch = vec![random_group(rng, 0, 1, 7)];
        let (a, _) = comm
            .forward(&batch, None, Symbols::None, false)
            .map_err(fail)?;
        let (b, _) = indep
            .forward(&batch, None, Symbols::None, false)
            .map_err(fail)?;
        if a.probs != b.probs || a.baseline != b.baseline {
            return Err(format!("{cell:?}: single-agent outputs differ"));
        }
    }
    Ok("identical for every cell".into())
}

fn wide_local_range_is_broadcast(rng: &mut Rng) -> Result<String, String> {
    let mut cfg = toy_config(ControllerKind::CommNet, CellKind::Mlp, 7);
    let broadcast = Controller::new(cfg.clone(), rng).map_err(fail)?;
    cfg.local_range = Some(6);
    let mut local = Controller::new(cfg, rng).map_err(fail)?;
    local
        .params_mut()
        .copy_shared_from(broadcast.params())
        .map_err(fail)?;
    let batch = vec![random_group(rng, 0, 4, 7)];
    let (a, _) = broadcast
        .forward(&batch, None, Symbols::None, false)
        .map_err(fail)?;
    let (b, _) = local
        .forward(&batch, None, Symbols::None, false)
        .map_err(fail)?;
    let diff = a.probs[0].max_abs_diff(&b.probs[0]);
    if diff < 1e-12 {
        Ok(format!("max diff {diff:.1e}"))
    } else {
        Err(format!("outputs differ by {diff:.3e}"))
    }
}

/// Scalar touching every output over two time steps: chosen log-probs,
/// squared baselines and symbol log-probs.
pub fn toy_loss(
    model: &Controller,
    batch: &[Group],
    symbols: &[Vec<usize>],
) -> commnet::Result<(Graph, commnet::numerics::Var)> {
    let mut g = Graph::new();
    let mut carry = None;
    let mut total = None;
    for _ in 0..2 {
        let out = model.forward_graph(
            &mut g,
            batch,
            carry.as_ref(),
            Symbols::Replay(symbols),
            false,
        )?;
        let mut terms = Vec::new();
        for (k, &lp) in out.log_probs.iter().enumerate() {
            let a = model.config().action_heads[k];
            let picks = (0..out.rows.len()).map(|r| r * a + (r + k) % a).collect();
            let p = g.pick(lp, picks)?;
            terms.push(g.sum(p)?);
        }
        let b = g.mul(out.baseline, out.baseline)?;
        terms.push(g.sum(b)?);
        if let Some(s) = out.symbol_log_prob {
            terms.push(g.sum(s)?);
        }
        for t in terms {
            total = Some(match total {
                None => t,
                Some(acc) => g.add(acc, t)?,
            });
        }
        carry = out.carry;
    }
    let root = total.expect("at least one term");
    g.backward(root)?;
    Ok((g, root))
}

/// Worst relative gradient error over every parameter of one controller.
pub fn worst_gradient_error(
    model: &Controller,
    batch: &[Group],
    symbols: &[Vec<usize>],
) -> commnet::Result<f64> {
    let mut worst: f64 = 0.0;
    for id in 0..model.params().len() {
        let theta = model.params().value(id).clone();
        let err = grad_check(&theta, 1e-6, |t| {
            let mut probe = model.clone();
            probe.params_mut().values_mut()[id] = t.clone();
            let (g, root) = toy_loss(&probe, batch, symbols)?;
            let loss = g.value(root).item()?;
            let grad = g
                .param_grad(id)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(t.shape()));
            Ok((loss, grad))
        })?;
        worst = worst.max(err);
    }
    Ok(worst)
}

fn gradient_check(rng: &mut Rng) -> Result<String, String> {
    let mut worst: f64 = 0.0;
    for kind in KINDS {
        for cell in CELLS {
            let model = Controller::new(toy_config(kind, cell, 7), rng).map_err(fail)?;
            let batch = vec![random_group(rng, 0, 3, 7)];
            let symbols = vec![vec![0, 2, 1], vec![1, 1, 0]];
            let err = worst_gradient_error(&model, &batch, &symbols).map_err(fail)?;
            if err >= 1e-4 {
                return Err(format!("{kind:?}/{cell:?}: relative error {err:.3e}"));
            }
            worst = worst.max(err);
        }
    }
    Ok(format!("worst relative error {worst:.1e}"))
}

/// Largest gap between recorded communication steps of a linear CommNet
/// and repeated multiplication by the stacked block matrix.
pub fn block_matrix_gap(rng: &mut Rng, agents: usize, d: usize) -> commnet::Result<f64> {
    let mut cfg = ControllerConfig::new(ControllerKind::CommNet, CellKind::Mlp, 9, 3);
    cfg.hidden = d;
    cfg.activation = Activation::Identity;
    cfg.skip = false;
    cfg.init_std = 0.5;
    let model = Controller::new(cfg.clone(), rng)?;
    let batch = vec![random_group(rng, 0, agents, 9)];
    let (out, _) = model.forward(&batch, None, Symbols::None, true)?;
    let mut states: Vec<&Tensor> = out.records.iter().map(|r| &r.h).collect();
    states.push(&out.hidden);
    let mut worst: f64 = 0.0;
    for i in 0..cfg.comm_steps {
        let h = model
            .params()
            .get(&format!("step{i}.h"))
            .expect("cell weights");
        let c = model
            .params()
            .get(&format!("step{i}.c"))
            .expect("comm weights");
        let b = model.params().get(&format!("step{i}.b")).expect("bias");
        let t = build_block_t(h, c, agents)?;
        let stacked = Tensor::new(vec![agents * d, 1], states[i].data().to_vec())?;
        let next = t.matmul(&stacked)?;
        for j in 0..agents {
            for k in 0..d {
                let got = next.data()[j * d + k] + b.data()[k];
                worst = worst.max((states[i + 1].at(j, k) - got).abs());
            }
        }
    }
    Ok(worst)
}

fn block_matrix(rng: &mut Rng) -> Result<String, String> {
    let mut worst: f64 = 0.0;
    for agents in [2, 4, 6] {
        for d in [2, 5, 8] {
            worst = worst.max(block_matrix_gap(rng, agents, d).map_err(fail)?);
        }
    }
    if worst < 1e-10 {
        Ok(format!("max diff {worst:.1e}"))
    } else {
        Err(format!("block product differs by {worst:.3e}"))
    }
}

fn checkpoint_round_trip(rng: &mut Rng) -> Result<String, String> {
    let model = Controller::new(toy_config(ControllerKind::CommNet, CellKind::Lstm, 7), rng)
        .map_err(fail)?;
    let named = model.params().to_named();
    let bytes = checkpoint::to_bytes(&named);
    let back = checkpoint::read(bytes.as_slice()).map_err(fail)?;
    let same = named.len() == back.len()
        && named.iter().zip(&back).all(|((a, x), (b, y))| {
            a == b
                && x.shape() == y.shape()
                && x.data()
                    .iter()
                    .zip(y.data())
                    .all(|(p, q)| p.to_bits() == q.to_bits())
        });
    if same {
        Ok(format!("{} tensors, {} bytes", named.len(), bytes.len()))
    } else {
        Err("checkpoint did not round-trip bit-exactly".into())
    }
}

/// Lever controller whose decoder is zeroed, so every agent picks uniformly.
pub fn uniform_lever_policy() -> commnet::Result<(Controller, EnvFactory)> {
    let factory = EnvFactory::new(TaskConfig::from_name("lever")?)?;
    let (dim, actions, _) = factory.dims()?;
    let mut c = ControllerConfig::new(ControllerKind::Independent, CellKind::Mlp, dim, actions);
    c.encoder = commnet::model::EncoderKind::Lookup;
    c.hidden = 4;
    let mut model = Controller::new(c, &mut Rng::new(0))?;
    for name in ["head0.w", "head0.b"] {
        let t = model.params_mut().get_mut(name).expect("decoder");
        *t = Tensor::zeros(t.shape());
    }
    Ok((model, factory))
}

fn lever_random_ratio(rng: &mut Rng) -> Result<String, String> {
    let (model, factory) = uniform_lever_policy().map_err(fail)?;
    let parallel = Parallelism {
        workers: 1,
        chunk: 500,
    };
    let (eval, _) = evaluate(
        &model,
        &factory,
        2000,
        &rng.split(0),
        &parallel,
        RolloutOptions::default(),
    )
    .map_err(fail)?;
    let expected = testkit::lever_random_expectation_closed_form(5);
    // Four standard errors at 2000 trials.
    if (eval.mean - expected).abs() < 0.02 {
        Ok(format!("{:.4} vs {expected:.5}", eval.mean))
    } else {
        Err(format!("ratio {:.4}, expected {expected:.5}", eval.mean))
    }
}

/// Converts traffic step records into the oracle's plain form.
pub fn traffic_oracle_steps(records: &[TrafficStepRecord]) -> Vec<testkit::TrafficStep> {
    records
        .iter()
        .map(|r| testkit::TrafficStep {
            cars: r
                .cars
                .iter()
                .map(|c| testkit::TrafficCar {
                    id: c.id,
                    pos: c.pos,
                    prev: c.prev,
                })
                .collect(),
            spawned: r.spawned.clone(),
        })
        .collect()
}

/// Plays random traffic episodes; returns the number of steps compared.
pub fn traffic_reward_mismatches(
    task: &str,
    episodes: usize,
    rng: &mut Rng,
) -> commnet::Result<(usize, Vec<String>)> {
    let mut config = TaskConfig::from_name(task)?;
    config.set_param("p_arrive", 0.4)?;
    let TaskConfig::Traffic(tc) = config.clone() else {
        unreachable!("traffic task")
    };
    let factory = EnvFactory::new(config)?;
    let mut bad = Vec::new();
    let mut steps = 0;
    for e in 0..episodes {
        let mut env = factory.make()?;
        env.reset(rng)?;
        let mut records = Vec::new();
        let mut rewards = Vec::new();
        while !env.is_done() {
            let actions: Vec<usize> = env.views().iter().map(|_| rng.below(2)).collect();
            let r = env.step(&actions, rng)?;
            rewards.push(r.reward);
            let rec: TrafficStepRecord = serde_json::from_value(env.step_record())
                .map_err(|e| commnet::Error::Format(e.to_string()))?;
            records.push(rec);
        }
        let oracle = testkit::traffic_rewards(
            &traffic_oracle_steps(&records),
            tc.r_coll,
            tc.r_time,
            tc.count_swaps,
        );
        for (t, (a, b)) in rewards.iter().zip(&oracle).enumerate() {
            if a != b {
                bad.push(format!("episode {e} step {t}: {a} vs {b}"));
            }
        }
        steps += rewards.len();
    }
    Ok((steps, bad))
}

fn traffic_reward_recompute(rng: &mut Rng) -> Result<String, String> {
    let mut total = 0;
    for task in ["traffic-easy", "traffic-medium", "traffic-hard"] {
        let (n, bad) = traffic_reward_mismatches(task, 20, rng).map_err(fail)?;
        if let Some(first) = bad.first() {
            return Err(format!("{task}: {} mismatches, first {first}", bad.len()));
        }
        total += n;
    }
    Ok(format!("{total} steps match exactly"))
}

pub fn fighter_states(combat: &Combat) -> Vec<testkit::FighterState> {
    combat
        .fighters()
        .iter()
        .map(|f| testkit::FighterState {
            id: f.id,
            team: f.team,
            pos: f.pos,
            health: f.health as i64,
            cooling: f.cooling as i64,
        })
        .collect()
}

/// Plays random-action combat episodes and checks every transition.
pub fn combat_rule_violations(
    episodes: usize,
    rng: &mut Rng,
) -> commnet::Result<(usize, Vec<String>)> {
    let config = CombatConfig::default();
    let rules = testkit::CombatRules {
        grid: config.grid as i64,
        health: config.health as i64,
        cooldown: config.cooldown as i64,
        fire_range: config.fire_range as i64,
    };
    let mut bad = Vec::new();
    let mut steps = 0;
    for e in 0..episodes {
        let mut env = Combat::new(config.clone())?;
        env.reset(rng)?;
        let mut before = fighter_states(&env);
        while !env.is_done() {
            let actions: Vec<usize> = env
                .views()
                .iter()
                .map(|_| rng.below(config.num_actions()))
                .collect();
            env.step(&actions, rng)?;
            let after = fighter_states(&env);
            let hits = env
                .last_record()
                .map(|r| r.hits.clone())
                .unwrap_or_default();
            for v in testkit::combat_violations(&before, &after, &hits, rules) {
                bad.push(format!("episode {e} step {steps}: {v}"));
            }
            before = after;
            steps += 1;
        }
    }
    Ok((steps, bad))
}

fn combat_rules(rng: &mut Rng) -> Result<String, String> {
    let (steps, bad) = combat_rule_violations(300, rng).map_err(fail)?;
    match bad.first() {
        None => Ok(format!("{steps} transitions checked")),
        Some(first) => Err(format!("{} violations, first {first}", bad.len())),
    }
}

fn recording_is_transparent(rng: &mut Rng) -> Result<String, String> {
    let mut task = TaskConfig::from_name("traffic-medium").map_err(fail)?;
    task.set_param("p_arrive", 0.3).map_err(fail)?;
    let factory = EnvFactory::new(task).map_err(fail)?;
    let (dim, actions, cap) = factory.dims().map_err(fail)?;
    for cell in CELLS {
        let mut c = ControllerConfig::new(ControllerKind::CommNet, cell, dim, actions);
        c.hidden = 8;
        c.agents = cap;
        let model = Controller::new(c, rng).map_err(fail)?;
        let root = rng.split(0);
        let seeds = || (0..4).map(|e| EpisodeSeed::derive(&root, e)).collect();
        let plain = rollout(&model, &factory, seeds(), RolloutOptions::default()).map_err(fail)?;
        let hooked = rollout(
            &model,
            &factory,
            seeds(),
            RolloutOptions {
                records: true,
                vectors: true,
            },
        )
        .map_err(fail)?;
        for (a, b) in plain.iter().zip(&hooked) {
            for (x, y) in a.steps.iter().zip(&b.steps) {
                if x.actions != y.actions
                    || x.log_probs != y.log_probs
                    || x.baselines != y.baselines
                {
                    return Err(format!("{cell:?}: recording changed the rollout"));
                }
            }
        }
    }
    Ok("rollouts bit-identical with hooks on".into())
}

fn worker_independence(rng: &mut Rng) -> Result<String, String> {
    let factory =
        EnvFactory::new(TaskConfig::from_name("traffic-easy").map_err(fail)?).map_err(fail)?;
    let (dim, actions, cap) = factory.dims().map_err(fail)?;
    let mut c = ControllerConfig::new(ControllerKind::CommNet, CellKind::Mlp, dim, actions);
    c.hidden = 8;
    c.agents = cap;
    let init = Controller::new(c, rng).map_err(fail)?;
    let root = rng.split(0);
    let mut bytes = Vec::new();
    for workers in [1, 3] {
        let mut model = init.clone();
        let mut f = factory.clone();
        let config = TrainConfig {
            batch: 12,
            epochs: 2,
            updates: 3,
            parallel: Parallelism { workers, chunk: 4 },
            ..TrainConfig::default()
        };
        let history = train(&mut model, &mut f, &config, &root, |_, _| Ok(())).map_err(fail)?;
        bytes.push((
            checkpoint::to_bytes(&model.params().to_named()),
            format!("{history:?}"),
        ));
    }
    if bytes[0] == bytes[1] {
        Ok("1 and 3 workers agree bit-for-bit".into())
    } else {
        Err("parameters differ between worker counts".into())
    }
}
