use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sparse binary observation: indices of the set bits in a `dim`-wide vector.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Observation {
    pub dim: usize,
    pub active: Vec<usize>,
}

impl Observation {
    pub fn new(dim: usize, mut active: Vec<usize>) -> Result<Self> {
        if let Some(&bad) = active.iter().find(|&&i| i >= dim) {
            return Err(Error::InvalidArgument(format!(
                "observation index {bad} outside width {dim}"
            )));
        }
        active.sort_unstable();
        active.dedup();
        Ok(Self { dim, active })
    }

    pub fn one_hot(dim: usize, index: usize) -> Result<Self> {
        Self::new(dim, vec![index])
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for &i in &self.active {
            v[i] = 1.0;
        }
        v
    }
}

/// One agent's input for a single decision.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentView {
    /// Stable identity within the group (car slot, team member, lever seat).
    pub slot: usize,
    pub obs: Observation,
    /// Grid position, required for local communication.
    pub pos: Option<(i64, i64)>,
}

/// Agents that communicate with one another, usually one episode.
#[derive(Clone, Debug, PartialEq)]
pub struct Group {
    /// Identifies the episode so carried state can follow it across steps.
    pub key: usize,
    /// Maximum number of agents (slot bound).
    pub capacity: usize,
    pub agents: Vec<AgentView>,
}

/// Position of a batch row.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RowId {
    pub group: usize,
    pub agent: usize,
}

/// Flattened row order of a batch: groups in order, agents in order.
pub(crate) fn row_ids(batch: &[Group]) -> Result<Vec<RowId>> {
    let mut rows = Vec::new();
    for (gi, group) in batch.iter().enumerate() {
        let mut seen = vec![false; group.capacity];
        for (ai, a) in group.agents.iter().enumerate() {
            if a.slot >= group.capacity || seen[a.slot] {
                return Err(Error::Model(format!(
                    "group {} has invalid or repeated slot {}",
                    group.key, a.slot
                )));
            }
            seen[a.slot] = true;
            rows.push(RowId {
                group: gi,
                agent: ai,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn observation_normalises_indices() {
        let o = Observation::new(5, vec![3, 1, 3]).unwrap();
        assert_eq!(o.active, vec![1, 3]);
        assert_eq!(o.to_dense(), vec![0.0, 1.0, 0.0, 1.0, 0.0]);
        assert!(Observation::new(2, vec![2]).is_err());
    }

    #[test]
    fn repeated_slots_are_rejected() {
        let view = |slot| AgentView {
            slot,
            obs: Observation::one_hot(1, 0).unwrap(),
            pos: None,
        };
        let g = Group {
            key: 0,
            capacity: 2,
            agents: vec![view(1), view(1)],
        };
        assert!(row_ids(&[g]).is_err());
    }
}
