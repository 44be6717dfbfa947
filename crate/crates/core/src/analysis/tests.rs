use super::*;
use crate::envs::{AgentView, Observation, TaskConfig};
use crate::model::{CellKind, ControllerConfig, Group, Symbols};
use crate::numerics::Graph;
use crate::training::{rollout, EpisodeSeed, StepTrace};

fn traffic(p: f64) -> EnvFactory {
    let mut task = TaskConfig::from_name("traffic-medium").unwrap();
    task.set_param("p_arrive", p).unwrap();
    EnvFactory::new(task).unwrap()
}

fn commnet(factory: &EnvFactory, cell: CellKind, seed: u64) -> Controller {
    let (dim, actions, cap) = factory.dims().unwrap();
    let mut c = ControllerConfig::new(ControllerKind::CommNet, cell, dim, actions);
    c.hidden = 6;
    c.agents = cap;
    Controller::new(c, &mut Rng::new(seed)).unwrap()
}

fn record_at(pos: (i64, i64), comm: Vec<f64>) -> VectorRecord {
    VectorRecord {
        episode: 0,
        step: 0,
        comm_step: 0,
        agent: 0,
        pos: Some(pos),
        hidden: vec![0.0; comm.len()],
        comm,
        action: 0,
    }
}

#[test]
fn record_counts() {
    let f = traffic(0.3);
    for cell in [CellKind::Mlp, CellKind::Lstm] {
        let model = commnet(&f, cell, 1);
        let k = model.config().comm_steps;
        let (log, traces) = record(&model, &f, 4, &Rng::new(2), &Parallelism::default()).unwrap();
        let agent_steps: usize = traces
            .iter()
            .flat_map(|t| &t.steps)
            .map(|s| s.views.len())
            .sum();
        assert!(agent_steps > 0);
        assert_eq!(log.len(), agent_steps * k);
    }
}

#[test]
fn recording_requires_commnet() {
    let f = traffic(0.3);
    let (dim, actions, cap) = f.dims().unwrap();
    let mut c = ControllerConfig::new(ControllerKind::Independent, CellKind::Mlp, dim, actions);
    c.agents = cap;
    let model = Controller::new(c, &mut Rng::new(0)).unwrap();
    assert!(record(&model, &f, 1, &Rng::new(0), &Parallelism::default()).is_err());
}

#[test]
fn zeroed_broadcast_weights_give_zero_vectors() {
    let f = traffic(0.3);
    let mut model = commnet(&f, CellKind::Mlp, 3);
    for name in ["step0.c", "step1.c"] {
        let t = model.params_mut().get_mut(name).unwrap();
        *t = Tensor::zeros(t.shape());
    }
    let (log, _) = record(&model, &f, 3, &Rng::new(4), &Parallelism::default()).unwrap();
    assert!(!log.is_empty());
    assert!(log.records.iter().all(|r| r.comm.iter().all(|&x| x == 0.0)));
}

#[test]
fn recorded_hidden_is_encoder_output() {
    let f = traffic(0.4);
    let model = commnet(&f, CellKind::Mlp, 5);
    let (log, traces) = record(&model, &f, 2, &Rng::new(6), &Parallelism::default()).unwrap();
    let trace = &traces[0];
    let (t, step) = trace
        .steps
        .iter()
        .enumerate()
        .find(|(_, s)| !s.views.is_empty())
        .unwrap();
    let mut g = Graph::new();
    let batch = vec![Group {
        key: trace.id,
        capacity: trace.capacity,
        agents: step.views.clone(),
    }];
    let h0 = model.encode(&mut g, &batch).unwrap();
    let h0 = g.value(h0);
    let recorded: Vec<&VectorRecord> = log
        .records
        .iter()
        .filter(|r| r.episode == trace.id && r.step == t && r.comm_step == 0)
        .collect();
    assert_eq!(recorded.len(), step.views.len());
    for (j, r) in recorded.iter().enumerate() {
        assert_eq!(r.hidden.as_slice(), h0.row(j));
    }
}

#[test]
fn recording_leaves_outputs_unchanged() {
    let f = traffic(0.3);
    let model = commnet(&f, CellKind::Rnn, 7);
    let root = Rng::new(8);
    let seeds = || (0..4).map(|e| EpisodeSeed::derive(&root, e)).collect();
    let plain = rollout(&model, &f, seeds(), Default::default()).unwrap();
    let hooked = rollout(
        &model,
        &f,
        seeds(),
        RolloutOptions {
            records: true,
            vectors: true,
        },
    )
    .unwrap();
    for (a, b) in plain.iter().zip(&hooked) {
        for (x, y) in a.steps.iter().zip(&b.steps) {
            assert_eq!(x.actions, y.actions);
            assert_eq!(x.log_probs, y.log_probs);
            assert_eq!(x.baselines, y.baselines);
        }
    }

    let batch = vec![Group {
        key: 0,
        capacity: 10,
        agents: plain[0]
            .steps
            .iter()
            .find(|s| !s.views.is_empty())
            .unwrap()
            .views
            .clone(),
    }];
    let (off, _) = model.forward(&batch, None, Symbols::None, false).unwrap();
    let (on, _) = model.forward(&batch, None, Symbols::None, true).unwrap();
    assert_eq!(off.probs, on.probs);
    assert_eq!(off.baseline, on.baseline);
}

#[test]
fn heatmap_examples() {
    let zero = VectorLog {
        records: vec![record_at((1, 1), vec![0.0, 0.0])],
    };
    let h = norm_heatmap(&zero, 4, 5).unwrap();
    assert!(h.mean.data().iter().all(|&x| x == 0.0));

    let one = VectorLog {
        records: vec![record_at((3, 4), vec![0.0, 2.0])],
    };
    let h = norm_heatmap(&one, 5, 5).unwrap();
    assert_eq!(h.mean.at(3, 4), 2.0);
    assert_eq!(h.mean.sum(), 2.0);

    let two = VectorLog {
        records: vec![
            record_at((0, 0), vec![1.0, 0.0]),
            record_at((0, 0), vec![0.0, 3.0]),
        ],
    };
    let h = norm_heatmap(&two, 2, 2).unwrap();
    assert_eq!(h.mean.at(0, 0), 2.0);
    assert_eq!(h.counts.at(0, 0), 2.0);

    assert!(norm_heatmap(&one, 3, 3).is_err());
}

#[test]
fn heatmap_conserves_counts() {
    let f = traffic(0.3);
    let model = commnet(&f, CellKind::Mlp, 9);
    let (log, _) = record(&model, &f, 6, &Rng::new(1), &Parallelism::default()).unwrap();
    let h = norm_heatmap(&log, 14, 14).unwrap();
    assert_eq!(h.counts.sum() as usize, log.len());
}

fn brake_trace(actions: Vec<usize>, cells: Vec<(i64, i64)>) -> EpisodeTrace {
    let views = cells
        .iter()
        .enumerate()
        .map(|(slot, &p)| AgentView {
            slot,
            obs: Observation::one_hot(2, 0).unwrap(),
            pos: Some(p),
        })
        .collect();
    EpisodeTrace {
        id: 0,
        capacity: 2,
        steps: vec![StepTrace {
            views,
            actions,
            log_probs: vec![],
            symbols: vec![],
            baselines: vec![],
            reward: 0.0,
            record: None,
            vectors: vec![],
        }],
        outcome: None,
        metric: 0.0,
    }
}

#[test]
fn brake_map_examples() {
    let gas = brake_trace(vec![0, 0], vec![(1, 1), (7, 7)]);
    assert_eq!(brake_map(&[gas], 14, 14).unwrap().sum(), 0.0);
    let one = brake_trace(vec![0, 1], vec![(1, 1), (7, 7)]);
    let m = brake_map(&[one], 14, 14).unwrap();
    assert_eq!(m.at(7, 7), 1.0);
    assert_eq!(m.sum(), 1.0);

    let f = traffic(0.3);
    let model = commnet(&f, CellKind::Mlp, 2);
    let (_, traces) = record(&model, &f, 5, &Rng::new(3), &Parallelism::default()).unwrap();
    let brakes: usize = traces
        .iter()
        .flat_map(|t| &t.steps)
        .flat_map(|s| &s.actions)
        .filter(|&&a| a == crate::envs::BRAKE)
        .count();
    assert_eq!(brake_map(&traces, 14, 14).unwrap().sum() as usize, brakes);
}

#[test]
fn probe_records_brake_events() {
    let f = traffic(0.3);
    let model = commnet(&f, CellKind::Mlp, 4);
    let records = two_car_probe(&model, &f, 6, &Rng::new(5), &Parallelism::default()).unwrap();
    let mut two = f.clone();
    two.set_param("car_limit", 2.0).unwrap();
    let (_, traces) = record(&model, &two, 6, &Rng::new(5), &Parallelism::default()).unwrap();
    let brakes = traces
        .iter()
        .flat_map(|t| &t.steps)
        .flat_map(|s| &s.actions)
        .filter(|&&a| a == crate::envs::BRAKE)
        .count();
    assert!(brakes > 0);
    assert_eq!(records.len(), brakes);
    let junction = f.junction().unwrap();
    assert!(records.iter().all(|r| probe_on_routes(r, junction)));

    // A policy that never brakes yields nothing.
    let mut gas = model.clone();
    let b = gas.params_mut().get_mut("head0.b").unwrap();
    b.data_mut()[0] = 100.0;
    let records = two_car_probe(&gas, &f, 3, &Rng::new(5), &Parallelism::default()).unwrap();
    assert!(records.is_empty());
}

#[test]
fn pca_on_recorded_log() {
    let f = traffic(0.3);
    let model = commnet(&f, CellKind::Mlp, 11);
    let (log, _) = record(&model, &f, 4, &Rng::new(12), &Parallelism::default()).unwrap();
    let log = log.at_comm_step(1);
    let p = pca_project(&log.vectors(VectorKind::Comm), 2).unwrap();
    let mut csv = Vec::new();
    write_projection_csv(&mut csv, &log, &p).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert_eq!(text.lines().count(), log.len() + 1);
    assert!(text.starts_with("episode,step,comm_step,agent,row,col,action,norm,pc1,pc2"));
    assert!(log.silent_fraction(0.1) <= 1.0);
    let hist = log.norm_histogram(5);
    assert_eq!(hist.iter().map(|h| h.1).sum::<usize>(), log.len());
}
