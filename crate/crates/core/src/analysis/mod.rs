//! Hidden and communication vector logs, PCA, spatial maps and the
//! two-car probe.

mod maps;
mod pca;

use std::io::Write;

use serde::{Deserialize, Serialize};

pub use maps::{brake_map, norm_heatmap, probe_on_routes, two_car_probe, Heatmap, ProbeRecord};
pub use pca::{pca_project, Projection};

use crate::envs::EnvFactory;
use crate::error::{Error, Result};
use crate::model::{Controller, ControllerKind};
use crate::numerics::{Rng, Tensor};
use crate::training::{evaluate, EpisodeTrace, Parallelism, RolloutOptions};

/// One agent at one communication step of one environment step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VectorRecord {
    pub episode: usize,
    pub step: usize,
    pub comm_step: usize,
    pub agent: usize,
    pub pos: Option<(i64, i64)>,
    /// Hidden state entering the communication step.
    pub hidden: Vec<f64>,
    /// The agent's broadcast contribution, `h · C`.
    pub comm: Vec<f64>,
    pub action: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VectorLog {
    pub records: Vec<VectorRecord>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VectorKind {
    Hidden,
    Comm,
}

impl VectorLog {
    /// Flattens traces rolled out with vector recording.
    pub fn from_traces(traces: &[EpisodeTrace]) -> Result<Self> {
        let mut records = Vec::new();
        for trace in traces {
            for (t, step) in trace.steps.iter().enumerate() {
                if step.views.is_empty() {
                    continue;
                }
                if step.vectors.is_empty() {
                    return Err(Error::InvalidArgument(
                        "traces were rolled out without vector recording".into(),
                    ));
                }
                for (k, rec) in step.vectors.iter().enumerate() {
                    let comm = rec.comm.as_ref().ok_or_else(|| {
                        Error::InvalidArgument(
                            "communication vectors need a CommNet controller".into(),
                        )
                    })?;
                    for (j, view) in step.views.iter().enumerate() {
                        records.push(VectorRecord {
                            episode: trace.id,
                            step: t,
                            comm_step: k,
                            agent: view.slot,
                            pos: view.pos,
                            hidden: rec.h.row(j).to_vec(),
                            comm: comm.row(j).to_vec(),
                            action: step.actions[j],
                        });
                    }
                }
            }
        }
        Ok(Self { records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn vectors(&self, kind: VectorKind) -> Vec<Vec<f64>> {
        self.records
            .iter()
            .map(|r| match kind {
                VectorKind::Hidden => r.hidden.clone(),
                VectorKind::Comm => r.comm.clone(),
            })
            .collect()
    }

    /// Keeps only records of one communication step.
    pub fn at_comm_step(&self, k: usize) -> VectorLog {
        VectorLog {
            records: self
                .records
                .iter()
                .filter(|r| r.comm_step == k)
                .cloned()
                .collect(),
        }
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r).map_err(|e| Error::Format(e.to_string()))?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Fraction of broadcast vectors whose norm is below `ratio` times the
    /// largest norm in the log.
    pub fn silent_fraction(&self, ratio: f64) -> f64 {
        let norms: Vec<f64> = self.records.iter().map(|r| l2(&r.comm)).collect();
        let max = norms.iter().cloned().fold(0.0, f64::max);
        if norms.is_empty() {
            return 0.0;
        }
        norms.iter().filter(|&&n| n < ratio * max).count() as f64 / norms.len() as f64
    }

    /// Histogram of broadcast norms over `bins` equal bins up to the maximum.
    pub fn norm_histogram(&self, bins: usize) -> Vec<(f64, usize)> {
        let norms: Vec<f64> = self.records.iter().map(|r| l2(&r.comm)).collect();
        let max = norms.iter().cloned().fold(0.0, f64::max);
        let bins = bins.max(1);
        let width = if max > 0.0 { max / bins as f64 } else { 1.0 };
        let mut counts = vec![0; bins];
        for n in norms {
            counts[((n / width) as usize).min(bins - 1)] += 1;
        }
        counts
            .into_iter()
            .enumerate()
            .map(|(i, c)| (i as f64 * width, c))
            .collect()
    }
}

pub(crate) fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Rolls out `episodes` episodes with recording on and returns their log.
pub fn record(
    controller: &Controller,
    factory: &EnvFactory,
    episodes: usize,
    root: &Rng,
    parallel: &Parallelism,
) -> Result<(VectorLog, Vec<EpisodeTrace>)> {
    if controller.config().kind != ControllerKind::CommNet {
        return Err(Error::InvalidArgument(
            "vector recording is defined for CommNet controllers".into(),
        ));
    }
    let opts = RolloutOptions {
        records: true,
        vectors: true,
    };
    let (_, traces) = evaluate(controller, factory, episodes, root, parallel, opts)?;
    Ok((VectorLog::from_traces(&traces)?, traces))
}

/// Writes a header and one row per projected point.
pub fn write_projection_csv<W: Write>(
    mut out: W,
    log: &VectorLog,
    projection: &Projection,
) -> Result<()> {
    let k = projection.points.cols();
    let pcs: Vec<String> = (1..=k).map(|c| format!("pc{c}")).collect();
    writeln!(
        out,
        "episode,step,comm_step,agent,row,col,action,norm,{}",
        pcs.join(",")
    )?;
    for (i, r) in log.records.iter().enumerate() {
        let (row, col) = r.pos.map_or((String::new(), String::new()), |(a, b)| {
            (a.to_string(), b.to_string())
        });
        let coords: Vec<String> = (0..k)
            .map(|c| projection.points.at(i, c).to_string())
            .collect();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.episode,
            r.step,
            r.comm_step,
            r.agent,
            row,
            col,
            r.action,
            l2(&r.comm),
            coords.join(",")
        )?;
    }
    Ok(())
}

/// Writes `row,col,value[,count]` for every grid cell.
pub fn write_grid_csv<W: Write>(mut out: W, value: &Tensor, counts: Option<&Tensor>) -> Result<()> {
    match counts {
        Some(_) => writeln!(out, "row,col,value,count")?,
        None => writeln!(out, "row,col,value")?,
    }
    for r in 0..value.rows() {
        for c in 0..value.cols() {
            match counts {
                Some(n) => writeln!(out, "{r},{c},{},{}", value.at(r, c), n.at(r, c))?,
                None => writeln!(out, "{r},{c},{}", value.at(r, c))?,
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests;
