//! Controllers mapping per-agent observations to action distributions.

mod comm;
mod config;
mod controller;
mod input;
mod params;

pub use comm::{aggregate, build_block_t, CommGraph};
pub use config::{CellKind, ControllerConfig, ControllerKind, EncoderKind};
pub use controller::{
    param_count, resolve_fc_width, CarriedState, CommRecord, Controller, GraphCarry, GraphOutput,
    PolicyOutput, Symbols,
};
pub use input::{AgentView, Group, Observation, RowId};
pub use params::ParamStore;
