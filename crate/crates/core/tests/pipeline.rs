use commnet::envs::{EnvFactory, TaskConfig};
use commnet::model::{CellKind, Controller, ControllerConfig, ControllerKind};
use commnet::numerics::{checkpoint, Rng};
use commnet::training::{
    evaluate, replay, traffic_curriculum, train, Parallelism, RolloutOptions, TrainConfig,
};

const KINDS: [ControllerKind; 4] = [
    ControllerKind::Independent,
    ControllerKind::FullyConnected,
    ControllerKind::DiscreteComm,
    ControllerKind::CommNet,
];
const CELLS: [CellKind; 3] = [CellKind::Mlp, CellKind::Rnn, CellKind::Lstm];

fn small(factory: &EnvFactory, kind: ControllerKind, cell: CellKind) -> ControllerConfig {
    let (dim, actions, cap) = factory.dims().unwrap();
    let mut c = ControllerConfig::new(kind, cell, dim, actions);
    c.hidden = 8;
    c.agents = cap;
    if kind == ControllerKind::DiscreteComm {
        c.vocab = Some(4);
    }
    c
}

fn tiny_config() -> TrainConfig {
    TrainConfig {
        batch: 6,
        epochs: 2,
        updates: 2,
        parallel: Parallelism {
            workers: 1,
            chunk: 3,
        },
        ..TrainConfig::default()
    }
}

#[test]
fn every_controller_trains_on_every_task() {
    for task in ["lever", "traffic-easy", "combat"] {
        for kind in KINDS {
            for cell in CELLS {
                let mut factory = EnvFactory::new(TaskConfig::from_name(task).unwrap()).unwrap();
                let mut model =
                    Controller::new(small(&factory, kind, cell), &mut Rng::new(1)).unwrap();
                let before = model.params().to_named();
                let history = train(
                    &mut model,
                    &mut factory,
                    &tiny_config(),
                    &Rng::new(2),
                    |_, _| Ok(()),
                )
                .unwrap();
                assert_eq!(history.len(), 2, "{task} {kind:?} {cell:?}");
                assert!(history
                    .iter()
                    .all(|m| m.episodes == 12 && m.metric_mean.is_finite()));
                let after = model.params().to_named();
                assert!(after
                    .iter()
                    .all(|(_, t)| t.data().iter().all(|x| x.is_finite())));
                assert_ne!(before, after, "{task} {kind:?} {cell:?} did not move");
            }
        }
    }
}

#[test]
fn checkpoint_restores_the_policy() {
    let mut factory = EnvFactory::new(TaskConfig::from_name("traffic-easy").unwrap()).unwrap();
    let mut config = tiny_config();
    config.curriculum = traffic_curriculum(factory.task().unwrap(), config.epochs).unwrap();
    let spec = small(&factory, ControllerKind::CommNet, CellKind::Lstm);
    let mut model = Controller::new(spec.clone(), &mut Rng::new(3)).unwrap();
    train(&mut model, &mut factory, &config, &Rng::new(4), |_, _| {
        Ok(())
    })
    .unwrap();

    let bytes = checkpoint::to_bytes(&model.params().to_named());
    let mut restored = Controller::new(spec, &mut Rng::new(99)).unwrap();
    restored
        .params_mut()
        .load_named(checkpoint::read(bytes.as_slice()).unwrap())
        .unwrap();

    let root = Rng::new(5);
    let parallel = Parallelism {
        workers: 1,
        chunk: 4,
    };
    let a = evaluate(
        &model,
        &factory,
        12,
        &root,
        &parallel,
        RolloutOptions::default(),
    )
    .unwrap();
    let b = evaluate(
        &restored,
        &factory,
        12,
        &root,
        &parallel,
        RolloutOptions::default(),
    )
    .unwrap();
    assert_eq!(a, b);
}

#[test]
fn stored_log_probs_match_replay() {
    let factory = EnvFactory::new(TaskConfig::from_name("combat").unwrap()).unwrap();
    for kind in KINDS {
        for cell in CELLS {
            let model = Controller::new(small(&factory, kind, cell), &mut Rng::new(6)).unwrap();
            let parallel = Parallelism {
                workers: 1,
                chunk: 2,
            };
            let (_, traces) = evaluate(
                &model,
                &factory,
                4,
                &Rng::new(7),
                &parallel,
                RolloutOptions::default(),
            )
            .unwrap();
            let values = replay(&model, &traces).unwrap();
            for (trace, steps) in traces.iter().zip(&values) {
                for (stored, again) in trace.steps.iter().zip(steps) {
                    for (x, y) in stored.log_probs.iter().zip(&again.log_probs) {
                        assert!((x - y).abs() <= 1e-12, "{kind:?} {cell:?}: {x} vs {y}");
                    }
                }
            }
        }
    }
}
