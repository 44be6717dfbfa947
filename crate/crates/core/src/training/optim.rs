use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result};
use crate::numerics::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    RmsProp,
    Adam,
}

impl std::str::FromStr for OptimizerKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rmsprop" => Ok(Self::RmsProp),
            "adam" => Ok(Self::Adam),
            other => Err(crate::Error::InvalidArgument(format!(
                "unknown optimizer {other}"
            ))),
        }
    }
}

pub const RMSPROP_DECAY: f64 = 0.97;
pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.99;
pub const OPT_EPS: f64 = 1e-6;

/// Per-parameter optimizer state. Steps descend: `θ ← θ - update(g)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    /// RMSProp: mean square. Adam: first moment.
    first: Vec<Tensor>,
    /// Adam second moment.
    second: Vec<Tensor>,
    steps: u64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, params: &[Tensor]) -> Self {
        let zeros = || params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        Self {
            kind,
            lr,
            first: zeros(),
            second: if kind == OptimizerKind::Adam {
                zeros()
            } else {
                Vec::new()
            },
            steps: 0,
        }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.first.len() {
            return Err(shape_err!(
                "{} parameters, {} gradients, {} optimizer slots",
                params.len(),
                grads.len(),
                self.first.len()
            ));
        }
        for (p, g) in params.iter().zip(grads) {
            if p.shape() != g.shape() {
                return Err(shape_err!(
                    "parameter {:?} vs gradient {:?}",
                    p.shape(),
                    g.shape()
                ));
            }
        }
        self.steps += 1;
        match self.kind {
            OptimizerKind::RmsProp => {
                for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut self.first) {
                    let (p, g, v) = (p.data_mut(), g.data(), v.data_mut());
                    for i in 0..p.len() {
                        v[i] = RMSPROP_DECAY * v[i] + (1.0 - RMSPROP_DECAY) * g[i] * g[i];
                        p[i] -= self.lr * g[i] / (v[i].sqrt() + OPT_EPS);
                    }
                }
            }
            OptimizerKind::Adam => {
                let t = self.steps as i32;
                let c1 = 1.0 - ADAM_BETA1.powi(t);
                let c2 = 1.0 - ADAM_BETA2.powi(t);
                for (((p, g), m), v) in params
                    .iter_mut()
                    .zip(grads)
                    .zip(&mut self.first)
                    .zip(&mut self.second)
                {
                    let (p, g, m, v) = (p.data_mut(), g.data(), m.data_mut(), v.data_mut());
                    for i in 0..p.len() {
                        m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
                        v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
                        p[i] -= self.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + OPT_EPS);
                    }
                }
            }
        }
        Ok(())
    }
}

/// Rescales gradients so their global norm is at most `max_norm`.
pub fn clip_grad_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flat_map(|t| t.data())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        for g in grads {
            for x in g.data_mut() {
                *x *= s;
            }
        }
    }
    norm
}
