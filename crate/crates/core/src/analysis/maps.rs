use serde::{Deserialize, Serialize};

use super::{l2, VectorLog};
use crate::envs::{EnvFactory, Junction, TaskConfig, BRAKE};
use crate::error::{Error, Result};
use crate::model::Controller;
use crate::numerics::{Rng, Tensor};
use crate::training::{EpisodeTrace, Parallelism};

/// Per-cell mean with the number of contributions.
#[derive(Clone, Debug, PartialEq)]
pub struct Heatmap {
    pub mean: Tensor,
    pub counts: Tensor,
}

fn cell(pos: Option<(i64, i64)>, rows: usize, cols: usize) -> Result<(usize, usize)> {
    match pos {
        Some((r, c)) if r >= 0 && c >= 0 && (r as usize) < rows && (c as usize) < cols => {
            Ok((r as usize, c as usize))
        }
        other => Err(Error::InvalidArgument(format!(
            "location {other:?} outside {rows}×{cols}"
        ))),
    }
}

/// Mean norm of broadcast vectors by the emitting agent's cell; unvisited
/// cells are zero with count zero.
pub fn norm_heatmap(log: &VectorLog, rows: usize, cols: usize) -> Result<Heatmap> {
    let mut sum = Tensor::zeros(&[rows, cols]);
    let mut counts = Tensor::zeros(&[rows, cols]);
    for r in &log.records {
        let (i, j) = cell(r.pos, rows, cols)?;
        sum.set(i, j, sum.at(i, j) + l2(&r.comm));
        counts.set(i, j, counts.at(i, j) + 1.0);
    }
    let mean = sum.zip_with(&counts, |s, n| if n > 0.0 { s / n } else { 0.0 })?;
    Ok(Heatmap { mean, counts })
}

/// Brake actions counted by the cell the car occupied when braking.
pub fn brake_map(traces: &[EpisodeTrace], rows: usize, cols: usize) -> Result<Tensor> {
    let mut map = Tensor::zeros(&[rows, cols]);
    for trace in traces {
        for step in &trace.steps {
            for (view, &a) in step.views.iter().zip(&step.actions) {
                if a == BRAKE {
                    let (i, j) = cell(view.pos, rows, cols)?;
                    map.set(i, j, map.at(i, j) + 1.0);
                }
            }
        }
    }
    Ok(map)
}

/// A brake event with the broadcast vectors of both cars.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub episode: usize,
    pub step: usize,
    pub braking: usize,
    pub braking_pos: (i64, i64),
    /// Broadcast of the braking car at the first communication step.
    pub braking_comm: Vec<f64>,
    pub other: Option<usize>,
    pub other_pos: Option<(i64, i64)>,
    pub other_comm: Option<Vec<f64>>,
}

/// Runs traffic with at most two live cars and records every brake event.
pub fn two_car_probe(
    controller: &Controller,
    factory: &EnvFactory,
    episodes: usize,
    root: &Rng,
    parallel: &Parallelism,
) -> Result<Vec<ProbeRecord>> {
    if !matches!(factory.task(), Some(TaskConfig::Traffic(_))) {
        return Err(Error::InvalidArgument(
            "the probe runs on traffic tasks".into(),
        ));
    }
    let mut two = factory.clone();
    two.set_param("car_limit", 2.0)?;
    let (_, traces) = super::record(controller, &two, episodes, root, parallel)?;
    probe_records(&traces)
}

pub(crate) fn probe_records(traces: &[EpisodeTrace]) -> Result<Vec<ProbeRecord>> {
    let mut out = Vec::new();
    for trace in traces {
        for (t, step) in trace.steps.iter().enumerate() {
            if step.views.len() > 2 {
                return Err(Error::InvalidArgument(
                    "probe traces hold at most two cars".into(),
                ));
            }
            for (j, (view, &a)) in step.views.iter().zip(&step.actions).enumerate() {
                if a != BRAKE {
                    continue;
                }
                let comm = |row: usize| -> Result<Vec<f64>> {
                    let rec = step
                        .vectors
                        .first()
                        .and_then(|v| v.comm.as_ref())
                        .ok_or_else(|| {
                            Error::InvalidArgument("probe needs recorded vectors".into())
                        })?;
                    Ok(rec.row(row).to_vec())
                };
                let other = (0..step.views.len()).find(|&k| k != j);
                out.push(ProbeRecord {
                    episode: trace.id,
                    step: t,
                    braking: view.slot,
                    braking_pos: view.pos.unwrap_or_default(),
                    braking_comm: comm(j)?,
                    other: other.map(|k| step.views[k].slot),
                    other_pos: other.and_then(|k| step.views[k].pos),
                    other_comm: other.map(comm).transpose()?,
                });
            }
        }
    }
    Ok(out)
}

/// Whether a probe record's locations lie on route cells.
pub fn probe_on_routes(record: &ProbeRecord, junction: &Junction) -> bool {
    let on = |p: (i64, i64)| junction.routes.iter().any(|r| r.contains(&p));
    on(record.braking_pos) && record.other_pos.is_none_or(on)
}
