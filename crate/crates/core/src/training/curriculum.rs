use serde::{Deserialize, Serialize};

use crate::envs::{TaskConfig, TrafficVariant};
use crate::error::{Error, Result};

/// Linear ramp of one task parameter between two epochs, clamped outside.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurriculumSchedule {
    pub param: String,
    pub start_value: f64,
    pub end_value: f64,
    pub start_epoch: usize,
    pub end_epoch: usize,
}

impl CurriculumSchedule {
    pub fn new(
        param: impl Into<String>,
        start_value: f64,
        end_value: f64,
        start_epoch: usize,
        end_epoch: usize,
    ) -> Result<Self> {
        if end_epoch < start_epoch {
            return Err(Error::InvalidArgument(format!(
                "curriculum ends at epoch {end_epoch} before it starts at {start_epoch}"
            )));
        }
        Ok(Self {
            param: param.into(),
            start_value,
            end_value,
            start_epoch,
            end_epoch,
        })
    }

    pub fn value(&self, epoch: usize) -> f64 {
        if epoch <= self.start_epoch {
            self.start_value
        } else if epoch >= self.end_epoch {
            self.end_value
        } else {
            let f = (epoch - self.start_epoch) as f64 / (self.end_epoch - self.start_epoch) as f64;
            self.start_value + f * (self.end_value - self.start_value)
        }
    }
}

/// Default traffic curricula: flat for the first third of `epochs`, a linear
/// ramp over the middle third, flat at the final value afterwards.
pub fn traffic_curriculum(task: &TaskConfig, epochs: usize) -> Result<Vec<CurriculumSchedule>> {
    let TaskConfig::Traffic(c) = task else {
        return Ok(Vec::new());
    };
    let (a, b) = (epochs / 3, 2 * epochs / 3);
    Ok(match c.variant {
        TrafficVariant::Easy => vec![
            CurriculumSchedule::new("p_arrive", 0.1, 0.3, a, b)?,
            CurriculumSchedule::new("car_limit", 3.0, 5.0, a, b)?,
        ],
        TrafficVariant::Medium => vec![CurriculumSchedule::new("p_arrive", 0.05, 0.2, a, b)?],
        TrafficVariant::Hard => vec![CurriculumSchedule::new("p_arrive", 0.02, 0.05, a, b)?],
    })
}
