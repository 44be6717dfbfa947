use crate::error::{shape_err, Error, Result};
use crate::numerics::{MixRows, Tensor};

use super::input::Group;

/// Who hears whom, over the flattened rows of a batch.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CommGraph {
    neighbors: Vec<Vec<usize>>,
}

impl CommGraph {
    /// Every agent hears every other agent of its own group, or only those
    /// within Chebyshev distance `range` when one is given.
    pub fn build(batch: &[Group], range: Option<usize>) -> Result<Self> {
        let mut neighbors = Vec::new();
        let mut offset = 0;
        for group in batch {
            let n = group.agents.len();
            let positions = match range {
                Some(_) => group
                    .agents
                    .iter()
                    .map(|a| {
                        a.pos.ok_or_else(|| {
                            Error::Model("local communication needs agent positions".into())
                        })
                    })
                    .collect::<Result<Vec<_>>>()?,
                None => Vec::new(),
            };
            for j in 0..n {
                let list = (0..n)
                    .filter(|&k| k != j)
                    .filter(|&k| match range {
                        None => true,
                        Some(r) => {
                            let (a, b) = (positions[j], positions[k]);
                            (a.0 - b.0).abs().max((a.1 - b.1).abs()) <= r as i64
                        }
                    })
                    .map(|k| offset + k)
                    .collect();
                neighbors.push(list);
            }
            offset += n;
        }
        Ok(Self { neighbors })
    }

    pub fn from_neighbors(neighbors: Vec<Vec<usize>>) -> Result<Self> {
        let n = neighbors.len();
        for (j, list) in neighbors.iter().enumerate() {
            if list.iter().any(|&k| k >= n || k == j) {
                return Err(Error::InvalidArgument(format!(
                    "row {j} has an invalid neighbor"
                )));
            }
        }
        Ok(Self { neighbors })
    }

    pub fn rows(&self) -> usize {
        self.neighbors.len()
    }

    pub fn neighbors(&self, row: usize) -> &[usize] {
        &self.neighbors[row]
    }

    /// Mean-pooling weights; rows without neighbors receive zero.
    pub fn mean_mix(&self) -> MixRows {
        self.neighbors
            .iter()
            .map(|list| {
                let w = 1.0 / list.len().max(1) as f64;
                list.iter().map(|&k| (k, w)).collect()
            })
            .collect()
    }
}

/// Mean of the neighbors' hidden rows; zero for agents with no neighbors.
pub fn aggregate(h: &Tensor, graph: &CommGraph) -> Result<Tensor> {
    if h.rank() != 2 || h.rows() != graph.rows() {
        return Err(shape_err!(
            "aggregate over {} rows given {:?}",
            graph.rows(),
            h.shape()
        ));
    }
    let d = h.cols();
    let mut out = Tensor::zeros(&[h.rows(), d]);
    for (j, (k, w)) in graph
        .mean_mix()
        .into_iter()
        .enumerate()
        .flat_map(|(j, row)| row.into_iter().map(move |kw| (j, kw)))
    {
        for (o, x) in out.row_mut(j).iter_mut().zip(h.row(k)) {
            *o += w * x;
        }
    }
    Ok(out)
}

/// Block matrix of one broadcast communication step over `agents` agents.
///
/// Parameters act on row vectors (`h · H`), so in column form the stacked
/// pre-activation is `T · [h₁; …; h_J]` with `Hᵀ` on the diagonal blocks and
/// `Cᵀ / (J − 1)` elsewhere. With one agent `T = Hᵀ`.
pub fn build_block_t(h: &Tensor, c: &Tensor, agents: usize) -> Result<Tensor> {
    if h.rank() != 2 || h.rows() != h.cols() || c.shape() != h.shape() {
        return Err(shape_err!(
            "block T needs equal square H and C, got {:?} and {:?}",
            h.shape(),
            c.shape()
        ));
    }
    if agents == 0 {
        return Err(Error::InvalidArgument(
            "block T needs at least one agent".into(),
        ));
    }
    let d = h.rows();
    let n = d * agents;
    let off = if agents > 1 {
        1.0 / (agents - 1) as f64
    } else {
        0.0
    };
    let mut t = Tensor::zeros(&[n, n]);
    for bi in 0..agents {
        for bj in 0..agents {
            for r in 0..d {
                for col in 0..d {
                    let v = if bi == bj {
                        h.at(col, r)
                    } else {
                        c.at(col, r) * off
                    };
                    t.set(bi * d + r, bj * d + col, v);
                }
            }
        }
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::input::{AgentView, Observation};

    fn group(key: usize, positions: &[(i64, i64)]) -> Group {
        Group {
            key,
            capacity: positions.len(),
            agents: positions
                .iter()
                .enumerate()
                .map(|(slot, &p)| AgentView {
                    slot,
                    obs: Observation::one_hot(1, 0).unwrap(),
                    pos: Some(p),
                })
                .collect(),
        }
    }

    #[test]
    fn two_agents_swap() {
        let g = CommGraph::build(&[group(0, &[(0, 0), (0, 0)])], None).unwrap();
        let h = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let c = aggregate(&h, &g).unwrap();
        assert_eq!(c.data(), &[3.0, 4.0, 1.0, 2.0]);
    }

    #[test]
    fn single_agent_hears_nothing() {
        let g = CommGraph::build(&[group(0, &[(0, 0)])], None).unwrap();
        let h = Tensor::from_rows(&[vec![5.0, -1.0]]).unwrap();
        assert_eq!(aggregate(&h, &g).unwrap().data(), &[0.0, 0.0]);
    }

    #[test]
    fn four_agent_means() {
        let g = CommGraph::build(&[group(0, &[(0, 0); 4])], None).unwrap();
        let c = aggregate(&Tensor::identity(4), &g).unwrap();
        let third = 1.0 / 3.0;
        assert_eq!(c.row(0), &[0.0, third, third, third]);
        assert_eq!(c.row(3), &[third, third, third, 0.0]);
    }

    #[test]
    fn groups_do_not_mix() {
        let g = CommGraph::build(&[group(0, &[(0, 0)]), group(1, &[(0, 0)])], None).unwrap();
        assert!(g.neighbors(0).is_empty() && g.neighbors(1).is_empty());
    }

    #[test]
    fn local_range_is_chebyshev() {
        let g = CommGraph::build(&[group(0, &[(0, 0), (2, 2), (3, 0)])], Some(2)).unwrap();
        assert_eq!(g.neighbors(0), &[1]);
        assert_eq!(g.neighbors(1), &[0, 2]);
        assert_eq!(g.neighbors(2), &[1]);
        assert!(CommGraph::build(&[group(0, &[(0, 0)])], Some(1)).is_ok());
    }
}
