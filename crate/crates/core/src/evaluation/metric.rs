use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::dynamics::VelocityMetric;
use crate::error::{Error, Result};
use crate::trial::ImpactTrial;

/// Post-impact velocity error: which components count and whether the
/// result is divided by the incident speed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorMetric {
    pub velocity: VelocityMetric,
    pub normalized: bool,
}

impl Default for ErrorMetric {
    fn default() -> Self {
        Self {
            velocity: VelocityMetric::Linear,
            normalized: true,
        }
    }
}

impl ErrorMetric {
    pub fn new(velocity: VelocityMetric, normalized: bool) -> Self {
        Self {
            velocity,
            normalized,
        }
    }

    /// Divisor applied to raw errors for this trial (1 when not normalised).
    pub fn scale(&self, trial: &ImpactTrial) -> Result<f64> {
        if !self.normalized {
            return Ok(1.0);
        }
        let s = self.velocity.norm(&trial.body, trial.v_pre());
        if !(s > 0.0) {
            return Err(Error::Degenerate(format!(
                "trial {} has zero incident velocity under the chosen metric",
                trial.trial_id
            )));
        }
        Ok(s)
    }
}

/// `‖v̂⁺ - v⁺‖`, optionally divided by `‖v⁻‖` in the same metric.
pub fn velocity_error(trial: &ImpactTrial, v_post_predicted: &Vector3<f64>, metric: &ErrorMetric) -> Result<f64> {
    let raw = metric
        .velocity
        .norm(&trial.body, &(v_post_predicted - trial.v_post()));
    Ok(raw / metric.scale(trial)?)
}
