use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Activation;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ControllerKind {
    /// Per-agent controllers with no communication.
    Independent,
    /// One network over the concatenated agent encodings (fixed agent count).
    FullyConnected,
    /// Agents broadcast sampled symbols; incoming bags are OR-ed one-hots.
    DiscreteComm,
    /// Continuous mean-pooled communication between agents.
    CommNet,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellKind {
    /// Feed-forward cell with separate parameters per communication step.
    Mlp,
    /// Single-layer recurrent cell shared across steps and carried over time.
    Rnn,
    /// LSTM cell shared across steps and carried over time.
    Lstm,
}

impl CellKind {
    /// Recurrent cells carry hidden state across environment time steps.
    pub fn is_recurrent(self) -> bool {
        !matches!(self, CellKind::Mlp)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EncoderKind {
    /// Table row per input index; observations carry exactly one index.
    Lookup,
    /// Linear layer with bias over a sparse one-hot observation.
    OneHotLinear,
}

/// Structural description of a controller.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    pub kind: ControllerKind,
    pub cell: CellKind,
    /// Communication steps per decision (per time step for recurrent cells).
    pub comm_steps: usize,
    pub hidden: usize,
    /// Feed the encoder output into every communication step.
    pub skip: bool,
    /// Chebyshev communication radius; `None` broadcasts to all agents.
    pub local_range: Option<usize>,
    /// Action count of each decoder head.
    pub action_heads: Vec<usize>,
    /// Symbol vocabulary for [`ControllerKind::DiscreteComm`]; defaults to `hidden`.
    pub vocab: Option<usize>,
    pub encoder: EncoderKind,
    /// Lookup table rows or one-hot observation width.
    pub input_dim: usize,
    /// Layers inside each feed-forward cell (1 or 2).
    pub mlp_depth: usize,
    pub activation: Activation,
    /// Agent slots of the fully-connected baseline.
    pub agents: usize,
    /// Hidden width of the fully-connected baseline; `None` matches the
    /// CommNet parameter count.
    pub fc_width: Option<usize>,
    pub init_std: f64,
}

impl ControllerConfig {
    /// Defaults shared by the grid tasks: single-layer ReLU cells, hidden 50,
    /// two communication steps with skip connections.
    pub fn new(kind: ControllerKind, cell: CellKind, input_dim: usize, actions: usize) -> Self {
        Self {
            kind,
            cell,
            comm_steps: if cell.is_recurrent() { 1 } else { 2 },
            hidden: 50,
            skip: true,
            local_range: None,
            action_heads: vec![actions],
            vocab: None,
            encoder: EncoderKind::OneHotLinear,
            input_dim,
            mlp_depth: 1,
            activation: Activation::Relu,
            agents: 1,
            fc_width: None,
            init_std: 0.2,
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.unwrap_or(self.hidden)
    }

    /// Width of the communication input `c` seen by each cell.
    pub fn comm_width(&self) -> Option<usize> {
        match self.kind {
            ControllerKind::CommNet => Some(self.hidden),
            ControllerKind::DiscreteComm => Some(self.vocab_size()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Model(m.to_string()));
        if self.comm_steps == 0 {
            return fail("comm_steps must be at least 1");
        }
        if self.hidden == 0 {
            return fail("hidden width must be at least 1");
        }
        if self.local_range.is_some() && self.kind != ControllerKind::CommNet {
            return fail("local_range is only valid for CommNet");
        }
        if self.kind == ControllerKind::DiscreteComm && self.vocab_size() < 2 {
            return fail("discrete communication needs a vocabulary of at least 2");
        }
        if self.action_heads.is_empty() || self.action_heads.contains(&0) {
            return fail("every decoder head needs at least one action");
        }
        if self.input_dim == 0 {
            return fail("input_dim must be positive");
        }
        if !(1..=2).contains(&self.mlp_depth) {
            return fail("mlp_depth must be 1 or 2");
        }
        if self.kind == ControllerKind::FullyConnected && self.agents == 0 {
            return fail("fully-connected controller needs agents >= 1");
        }
        if self.fc_width == Some(0) {
            return fail("fc_width must be positive");
        }
        if !(self.init_std >= 0.0) {
            return fail("init_std must be nonnegative");
        }
        Ok(())
    }
}
