//! Acceptance suite. Every test writes one `PASS`/`FAIL` line straight to
//! stderr, so the verdicts show up even when test output is captured.
//!
//! Criteria 1-4 train through the same configuration path as the binary and
//! take most of the runtime; the rest finish in seconds to minutes.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::sync::{Arc, OnceLock};

use commnet::analysis::{norm_heatmap, pca_project, record, VectorKind};
use commnet::envs::{EnvFactory, Environment, Outcome, StepResult, TaskConfig};
use commnet::model::{
    AgentView, CellKind, Controller, ControllerConfig, ControllerKind, Observation, Symbols,
};
use commnet::numerics::{Activation, Rng, Tensor};
use commnet::training::{
    evaluate, rollout, train, EpisodeSeed, Evaluation, Parallelism, RolloutOptions, TrainConfig,
};
use commnet_cli::selftest::{
    combat_rule_violations, random_group, toy_config, toy_loss, traffic_reward_mismatches,
    uniform_lever_policy, CELLS, KINDS,
};
use commnet_cli::{run, RawConfig};

fn report(criterion: &str, pass: bool, detail: &str) -> bool {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "{verdict} criterion {criterion}: {detail}");
    pass
}

fn workers() -> String {
    std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .to_string()
}

/// Trains through the CLI configuration path, then evaluates the final
/// checkpoint at the task's final difficulty.
fn train_and_evaluate(dir: &Path, settings: &[(&str, &str)]) -> Evaluation {
    let mut raw = RawConfig::default();
    raw.set("train.workers", workers());
    for (k, v) in settings {
        raw.set(k, *v);
    }
    let train_dir = dir.join("train");
    raw.set("out", train_dir.to_str().unwrap());
    let cfg = raw.resolve().expect("training config");
    run(&cfg).expect("training run");

    raw.set("mode", "eval");
    raw.set(
        "checkpoint",
        train_dir.join("checkpoint.bin").to_str().unwrap(),
    );
    raw.set("out", dir.join("eval").to_str().unwrap());
    let cfg = raw.resolve().expect("evaluation config");
    run(&cfg)
        .expect("evaluation run")
        .evaluation
        .expect("evaluation result")
}

fn lever_pair(objective: &str) -> (Evaluation, Evaluation) {
    let tmp = tempfile::tempdir().unwrap();
    let [comm, indep] = ["commnet", "independent"].map(|kind| {
        train_and_evaluate(
            &tmp.path().join(kind),
            &[
                ("task", "lever"),
                ("model.controller", kind),
                ("train.objective", objective),
                ("eval.trials", "500"),
            ],
        )
    });
    (comm, indep)
}

#[test]
fn criterion_01_lever_supervised() {
    let (comm, indep) = lever_pair("supervised");
    let pass = comm.mean >= 0.95 && indep.mean <= 0.70;
    let detail = format!(
        "lever supervised: commnet {:.4} (>= 0.95), independent {:.4} (<= 0.70)",
        comm.mean, indep.mean
    );
    assert!(report("1", pass, &detail), "{detail}");
}

#[test]
fn criterion_02_lever_reinforce() {
    let (comm, indep) = lever_pair("reinforce");
    let pass = comm.mean >= 0.85 && comm.mean >= indep.mean + 0.15;
    let detail = format!(
        "lever reinforce: commnet {:.4} (>= 0.85), independent {:.4}, gap {:.4} (>= 0.15)",
        comm.mean,
        indep.mean,
        comm.mean - indep.mean
    );
    assert!(report("2", pass, &detail), "{detail}");
}

fn traffic_run(kind: &str, vision: &str) -> Evaluation {
    let tmp = tempfile::tempdir().unwrap();
    train_and_evaluate(
        tmp.path(),
        &[
            ("task", "traffic-easy"),
            ("model.controller", kind),
            ("model.cell", "mlp"),
            ("train.epochs", "50"),
            ("train.updates", "100"),
            ("train.batch", "64"),
            ("train.curriculum", "true"),
            ("env.vision", vision),
            ("eval.trials", "500"),
        ],
    )
}

/// Failure rates of CommNet and Independent with default vision.
fn traffic_full_vision() -> &'static (f64, f64) {
    static RESULT: OnceLock<(f64, f64)> = OnceLock::new();
    RESULT.get_or_init(|| {
        (
            traffic_run("commnet", "1").mean,
            traffic_run("independent", "1").mean,
        )
    })
}

#[test]
fn criterion_03_traffic_easy() {
    let &(comm, indep) = traffic_full_vision();
    let pass = comm <= 0.5 * indep;
    let detail = format!(
        "traffic-easy failure: commnet {comm:.4}, independent {indep:.4} (commnet <= {:.4})",
        0.5 * indep
    );
    assert!(report("3", pass, &detail), "{detail}");
}

#[test]
fn visibility_sweep_traffic_easy() {
    let &(comm_full, indep_full) = traffic_full_vision();
    let comm_blind = traffic_run("commnet", "-1").mean;
    let indep_blind = traffic_run("independent", "-1").mean;
    let (dc, di) = (comm_blind - comm_full, indep_blind - indep_full);
    let pass = dc < di;
    let detail = format!(
        "visibility sweep: commnet {comm_full:.4} -> {comm_blind:.4} (+{dc:.4}), \
         independent {indep_full:.4} -> {indep_blind:.4} (+{di:.4})"
    );
    assert!(report("3 (visibility sweep)", pass, &detail), "{detail}");
}

#[test]
fn criterion_04_combat() {
    let tmp = tempfile::tempdir().unwrap();
    let [comm, indep] = ["commnet", "independent"].map(|kind| {
        train_and_evaluate(
            &tmp.path().join(kind),
            &[
                ("task", "combat"),
                ("model.controller", kind),
                ("model.cell", "mlp"),
                ("train.epochs", "50"),
                ("eval.trials", "500"),
            ],
        )
    });
    let pass = comm.mean >= indep.mean + 0.05;
    let detail = format!(
        "combat win rate: commnet {:.4}, independent {:.4}, gap {:.4} (>= 0.05)",
        comm.mean,
        indep.mean,
        comm.mean - indep.mean
    );
    assert!(report("4", pass, &detail), "{detail}");
}

fn transpose(t: &Tensor) -> Vec<f64> {
    let (r, c) = (t.rows(), t.cols());
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = t.at(i, j);
        }
    }
    out
}

/// Compares each recorded communication step of a linear CommNet with the
/// stacked block matrix built by the reference.
fn block_gap(rng: &mut Rng, agents: usize, d: usize) -> f64 {
    let mut cfg = ControllerConfig::new(ControllerKind::CommNet, CellKind::Mlp, 9, 3);
    cfg.hidden = d;
    cfg.activation = Activation::Identity;
    cfg.skip = false;
    cfg.init_std = 0.5;
    let model = Controller::new(cfg.clone(), rng).unwrap();
    let batch = vec![random_group(rng, 0, agents, 9)];
    let (out, _) = model.forward(&batch, None, Symbols::None, true).unwrap();
    let mut states: Vec<&Tensor> = out.records.iter().map(|r| &r.h).collect();
    states.push(&out.hidden);
    let mut worst: f64 = 0.0;
    for i in 0..cfg.comm_steps {
        let p = |n: &str| model.params().get(&format!("step{i}.{n}")).unwrap();
        let t = testkit::block_matrix(&transpose(p("h")), &transpose(p("c")), d, agents);
        let next = testkit::matmul_triple_loop(&t, states[i].data(), agents * d, agents * d, 1);
        for j in 0..agents {
            for k in 0..d {
                let want = next[j * d + k] + p("b").data()[k];
                worst = worst.max((states[i + 1].at(j, k) - want).abs());
            }
        }
    }
    worst
}

#[test]
fn criterion_05_block_matrix() {
    let mut rng = Rng::new(5);
    let mut worst: f64 = 0.0;
    for agents in 2..=6 {
        for d in 2..=8 {
            worst = worst.max(block_gap(&mut rng, agents, d));
        }
    }
    let pass = worst < 1e-10;
    let detail = format!("block matrix: max |diff| {worst:.2e} over J 2..6, d 2..8 (< 1e-10)");
    assert!(report("5", pass, &detail), "{detail}");
}

#[test]
fn criterion_06_gradients() {
    let mut rng = Rng::new(6);
    let mut worst: f64 = 0.0;
    let mut worst_at = String::new();
    for kind in KINDS {
        for cell in CELLS {
            let model = Controller::new(toy_config(kind, cell, 7), &mut rng).unwrap();
            assert_eq!(model.config().comm_steps, 2);
            let batch = vec![random_group(&mut rng, 0, 3, 7)];
            let symbols = vec![vec![0, 2, 1], vec![1, 1, 0]];
            let (g, _) = toy_loss(&model, &batch, &symbols).unwrap();
            for id in 0..model.params().len() {
                let theta = model.params().value(id).clone();
                let analytic = g
                    .param_grad(id)
                    .cloned()
                    .unwrap_or_else(|| Tensor::zeros(theta.shape()));
                let numeric = testkit::central_difference(
                    |x| {
                        let mut probe = model.clone();
                        probe.params_mut().values_mut()[id] =
                            Tensor::new(theta.shape().to_vec(), x.to_vec()).unwrap();
                        let (g, root) = toy_loss(&probe, &batch, &symbols).unwrap();
                        g.value(root).item().unwrap()
                    },
                    theta.data(),
                    1e-5,
                );
                for (a, n) in analytic.data().iter().zip(&numeric) {
                    let err = (a - n).abs() / n.abs().max(1.0);
                    if err > worst {
                        worst = err;
                        worst_at = format!("{kind:?}/{cell:?}");
                    }
                }
            }
        }
    }
    let pass = worst < 1e-4;
    let detail = format!("gradients: worst relative error {worst:.2e} at {worst_at} (< 1e-4)");
    assert!(report("6", pass, &detail), "{detail}");
}

#[test]
fn criterion_07_structure() {
    let mut rng = Rng::new(7);

    let mut softmax: f64 = 0.0;
    for kind in KINDS {
        for cell in CELLS {
            let model = Controller::new(toy_config(kind, cell, 7), &mut rng).unwrap();
            let batch: Vec<_> = (0..3)
                .map(|key| random_group(&mut rng, key, 3, 7))
                .collect();
            let mut streams: Vec<Rng> = (0..3).map(|i| rng.split(i)).collect();
            let (out, _) = model
                .forward(&batch, None, Symbols::Sample(&mut streams), false)
                .unwrap();
            for p in &out.probs {
                for r in 0..p.rows() {
                    softmax = softmax.max((p.row(r).iter().sum::<f64>() - 1.0).abs());
                }
            }
        }
    }

    let mut perm: f64 = 0.0;
    for kind in [ControllerKind::CommNet, ControllerKind::Independent] {
        for cell in CELLS {
            let model = Controller::new(toy_config(kind, cell, 7), &mut rng).unwrap();
            for agents in 2..=6 {
                let group = random_group(&mut rng, 0, agents, 7);
                let order = rng.sample_without_replacement(agents, agents);
                let mut permuted = group.clone();
                permuted.agents = order.iter().map(|&i| group.agents[i].clone()).collect();
                let (a, _) = model.forward(&[group], None, Symbols::None, false).unwrap();
                let (b, _) = model
                    .forward(&[permuted], None, Symbols::None, false)
                    .unwrap();
                for (pos, &src) in order.iter().enumerate() {
                    for (x, y) in a.probs[0].row(src).iter().zip(b.probs[0].row(pos)) {
                        perm = perm.max((x - y).abs());
                    }
                }
            }
        }
    }

    let mut single = true;
    for cell in CELLS {
        let comm = Controller::new(toy_config(ControllerKind::CommNet, cell, 7), &mut rng).unwrap();
        let mut indep =
            Controller::new(toy_config(ControllerKind::Independent, cell, 7), &mut rng).unwrap();
        indep.params_mut().copy_shared_from(comm.params()).unwrap();
        let batch = vec![random_group(&mut rng, 0, 1, 7)];
        let (a, _) = comm.forward(&batch, None, Symbols::None, false).unwrap();
        let (b, _) = indep.forward(&batch, None, Symbols::None, false).unwrap();
        single &= a.probs == b.probs && a.baseline == b.baseline;
    }

    // random_group places agents on a 6×6 grid, Chebyshev diameter 5.
    let mut local: f64 = 0.0;
    for cell in CELLS {
        let mut cfg = toy_config(ControllerKind::CommNet, cell, 7);
        let broadcast = Controller::new(cfg.clone(), &mut rng).unwrap();
        for range in [5, 9] {
            cfg.local_range = Some(range);
            let mut model = Controller::new(cfg.clone(), &mut rng).unwrap();
            model
                .params_mut()
                .copy_shared_from(broadcast.params())
                .unwrap();
            let batch = vec![random_group(&mut rng, 0, 5, 7)];
            let (a, _) = broadcast
                .forward(&batch, None, Symbols::None, false)
                .unwrap();
            let (b, _) = model.forward(&batch, None, Symbols::None, false).unwrap();
            local = local.max(a.probs[0].max_abs_diff(&b.probs[0]));
        }
    }

    let pass = softmax < 1e-12 && perm < 1e-12 && single && local < 1e-12;
    let detail = format!(
        "structure: permutation {perm:.1e}, single agent {}, local vs broadcast {local:.1e}, softmax {softmax:.1e} (each < 1e-12)",
        if single { "identical" } else { "differs" }
    );
    assert!(report("7", pass, &detail), "{detail}");
}

#[test]
fn criterion_08_environment_oracles() {
    let mut rng = Rng::new(8);
    let mut reward_steps = 0;
    let mut reward_bad = Vec::new();
    for task in ["traffic-easy", "traffic-medium", "traffic-hard"] {
        let (steps, bad) = traffic_reward_mismatches(task, 200, &mut rng).unwrap();
        reward_steps += steps;
        reward_bad.extend(bad);
    }

    let (model, factory) = uniform_lever_policy().unwrap();
    let parallel = Parallelism {
        workers: 1,
        chunk: 1000,
    };
    let (lever, _) = evaluate(
        &model,
        &factory,
        10_000,
        &rng.split(0),
        &parallel,
        RolloutOptions::default(),
    )
    .unwrap();
    let expected = (5.0 - 5.0 * 0.8f64.powi(5)) / 5.0;

    let (combat_steps, combat_bad) = combat_rule_violations(10_000, &mut rng).unwrap();

    let pass =
        reward_bad.is_empty() && (lever.mean - expected).abs() <= 0.02 && combat_bad.is_empty();
    let detail = format!(
        "environments: traffic rewards {} mismatches over {reward_steps} steps, \
         lever random ratio {:.4} vs {expected:.5} (±0.02), combat {} violations over {combat_steps} transitions",
        reward_bad.len(),
        lever.mean,
        combat_bad.len()
    );
    assert!(
        report("8", pass, &detail),
        "{detail}\n{reward_bad:?}\n{combat_bad:?}"
    );
}

struct ConstantEnv {
    reward: f64,
    done: bool,
}

impl Environment for ConstantEnv {
    fn reset(&mut self, _rng: &mut Rng) -> commnet::Result<()> {
        self.done = false;
        Ok(())
    }

    fn views(&self) -> Vec<AgentView> {
        if self.done {
            return Vec::new();
        }
        (0..2)
            .map(|slot| AgentView {
                slot,
                obs: Observation::one_hot(2, slot).unwrap(),
                pos: None,
            })
            .collect()
    }

    fn capacity(&self) -> usize {
        2
    }

    fn input_dim(&self) -> usize {
        2
    }

    fn num_actions(&self) -> usize {
        2
    }

    fn step(&mut self, _actions: &[usize], _rng: &mut Rng) -> commnet::Result<StepResult> {
        self.done = true;
        Ok(StepResult {
            reward: self.reward,
            done: true,
            outcome: Some(Outcome::Finished),
        })
    }

    fn is_done(&self) -> bool {
        self.done
    }

    fn metric(&self) -> f64 {
        self.reward
    }

    fn step_record(&self) -> serde_json::Value {
        serde_json::Value::Null
    }
}

#[test]
fn criterion_09_baseline_regression() {
    let target = -1.3;
    let mut factory = EnvFactory::custom(
        "constant",
        Arc::new(move || {
            Ok(Box::new(ConstantEnv {
                reward: target,
                done: false,
            }) as Box<dyn Environment>)
        }),
    );
    let mut cfg = ControllerConfig::new(ControllerKind::CommNet, CellKind::Mlp, 2, 2);
    cfg.hidden = 8;
    cfg.agents = 2;
    let mut model = Controller::new(cfg, &mut Rng::new(9)).unwrap();
    let config = TrainConfig {
        alpha: 0.03,
        batch: 8,
        epochs: 20,
        updates: 100,
        ..TrainConfig::default()
    };
    train(&mut model, &mut factory, &config, &Rng::new(90), |_, _| {
        Ok(())
    })
    .unwrap();
    let root = Rng::new(91);
    let traces = rollout(
        &model,
        &factory,
        vec![EpisodeSeed::derive(&root, 0)],
        RolloutOptions::default(),
    )
    .unwrap();
    // b(s) is the group mean of the agents' heads, the quantity the objective regresses.
    let gap = (traces[0].steps[0].baseline() - target).abs();
    let pass = gap < 0.01;
    let detail = format!(
        "baseline regression: |b - r*| = {gap:.2e} after {} updates, alpha 0.03 (< 0.01)",
        config.epochs * config.updates
    );
    assert!(report("9", pass, &detail), "{detail}");
}

fn binary(args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_commnet"))
        .args(args)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn criterion_10_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let mut checked = Vec::new();
    let mut pass = true;
    for (task, cell) in [
        ("traffic-medium", "mlp"),
        ("combat", "lstm"),
        ("lever", "mlp"),
    ] {
        let a = tmp.path().join(format!("{task}-a"));
        let b = tmp.path().join(format!("{task}-b"));
        binary(&[
            "--task",
            task,
            "--cell",
            cell,
            "--epochs",
            "3",
            "--seed",
            "10",
            "--workers",
            "1",
            "--out",
            a.to_str().unwrap(),
            "--set",
            "train.updates=4",
            "--set",
            "train.batch=24",
            "--set",
            "train.chunk=5",
            "--set",
            "model.hidden=16",
        ]);
        binary(&[
            "--config",
            a.join("manifest.txt").to_str().unwrap(),
            "--workers",
            "3",
            "--out",
            b.to_str().unwrap(),
        ]);
        for file in ["metrics.csv", "checkpoint.bin"] {
            let same = fs::read(a.join(file)).unwrap() == fs::read(b.join(file)).unwrap();
            pass &= same;
            checked.push(format!(
                "{task}/{file} {}",
                if same { "identical" } else { "differs" }
            ));
        }
    }
    let detail = format!("determinism, 1 vs 3 workers: {}", checked.join(", "));
    assert!(report("10", pass, &detail), "{detail}");
}

#[test]
fn criterion_11_analysis_oracles() {
    let mut rng = Rng::new(11);
    let factory = EnvFactory::new(TaskConfig::from_name("traffic-medium").unwrap()).unwrap();
    let (dim, actions, cap) = factory.dims().unwrap();
    let parallel = Parallelism {
        workers: 1,
        chunk: 8,
    };

    let mut c = ControllerConfig::new(ControllerKind::CommNet, CellKind::Mlp, dim, actions);
    c.hidden = 10;
    c.agents = cap;
    let model = Controller::new(c, &mut rng).unwrap();
    let (log, _) = record(&model, &factory, 30, &rng.split(0), &parallel).unwrap();

    let mut pca: f64 = 0.0;
    for kind in [VectorKind::Comm, VectorKind::Hidden] {
        let points = log.vectors(kind);
        let ours = pca_project(&points, 3).unwrap();
        let (reference, _) = testkit::jacobi_pca(&points, 3);
        for k in 0..3 {
            let dot: f64 = (0..points.len())
                .map(|i| ours.points.at(i, k) * reference[i][k])
                .sum();
            let sign = if dot < 0.0 { -1.0 } else { 1.0 };
            for (i, row) in reference.iter().enumerate() {
                pca = pca.max((ours.points.at(i, k) - sign * row[k]).abs());
            }
        }
    }

    let mut transparent = true;
    for task in ["traffic-medium", "combat"] {
        let factory = EnvFactory::new(TaskConfig::from_name(task).unwrap()).unwrap();
        let (dim, actions, cap) = factory.dims().unwrap();
        for cell in CELLS {
            let mut c = ControllerConfig::new(ControllerKind::CommNet, cell, dim, actions);
            c.hidden = 8;
            c.agents = cap;
            let model = Controller::new(c, &mut rng).unwrap();
            let root = rng.split(1);
            let seeds = || (0..10).map(|e| EpisodeSeed::derive(&root, e)).collect();
            let plain = rollout(&model, &factory, seeds(), RolloutOptions::default()).unwrap();
            let hooked = rollout(
                &model,
                &factory,
                seeds(),
                RolloutOptions {
                    records: true,
                    vectors: true,
                },
            )
            .unwrap();
            for (a, b) in plain.iter().zip(&hooked) {
                transparent &= a.steps.len() == b.steps.len();
                for (x, y) in a.steps.iter().zip(&b.steps) {
                    let bits = |v: &[f64]| v.iter().map(|f| f.to_bits()).collect::<Vec<_>>();
                    transparent &= x.actions == y.actions
                        && bits(&x.log_probs) == bits(&y.log_probs)
                        && bits(&x.baselines) == bits(&y.baselines)
                        && x.reward.to_bits() == y.reward.to_bits();
                }
            }
        }
    }

    let (rows, cols) = factory.make().unwrap().grid().unwrap();
    let heat = norm_heatmap(&log, rows, cols).unwrap();
    let mut expected = vec![0usize; rows * cols];
    for r in &log.records {
        let (i, j) = r.pos.unwrap();
        expected[i as usize * cols + j as usize] += 1;
    }
    let conserved = heat.counts.data().iter().sum::<f64>() == log.len() as f64
        && heat
            .counts
            .data()
            .iter()
            .zip(&expected)
            .all(|(&a, &b)| a == b as f64);

    let pass = pca < 1e-6 && transparent && conserved;
    let detail = format!(
        "analysis: pca vs jacobi max diff {pca:.1e} (< 1e-6), recording {}, heatmap counts {} over {} records",
        if transparent { "bit-identical" } else { "changed outputs" },
        if conserved { "conserved" } else { "not conserved" },
        log.len()
    );
    assert!(report("11", pass, &detail), "{detail}");
}
