use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{predict_post_velocity, ModelId, ModelParams};
use crate::error::{Error, Result};
use crate::evaluation::{velocity_error, ErrorMetric};
use crate::trial::{ImpactTrial, TrialId};

/// The analytical model that explained one trial best.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PostHocChoice {
    pub trial_id: TrialId,
    pub model: ModelId,
    pub error: f64,
}

/// Per-trial minimum error over the identified models. Exact ties go to the
/// model listed first in [`ModelId::ALL`].
pub fn best_post_hoc(
    trials: &[ImpactTrial],
    params: &BTreeMap<ModelId, ModelParams>,
    metric: &ErrorMetric,
) -> Result<Vec<PostHocChoice>> {
    if trials.is_empty() {
        return Err(Error::InsufficientData("best post hoc needs at least one trial".into()));
    }
    if params.is_empty() {
        return Err(Error::invalid("best post hoc needs at least one identified model"));
    }
    trials
        .par_iter()
        .map(|trial| {
            let mut best: Option<PostHocChoice> = None;
            for (&model, p) in params {
                let v = predict_post_velocity(model, p, &trial.body, &trial.contact, trial.v_pre())?;
                let error = velocity_error(trial, &v, metric)?;
                if best.is_none_or(|b| error < b.error) {
                    best = Some(PostHocChoice {
                        trial_id: trial.trial_id,
                        model,
                        error,
                    });
                }
            }
            Ok(best.expect("params is non-empty"))
        })
        .collect()
}

/// Same selection rule applied to precomputed per-model error columns.
pub fn select_min_error(trial_ids: &[TrialId], errors: &BTreeMap<ModelId, Vec<f64>>) -> Result<Vec<PostHocChoice>> {
    for (model, column) in errors {
        if column.len() != trial_ids.len() {
            return Err(Error::invalid(format!(
                "model {model} has {} errors for {} trials",
                column.len(),
                trial_ids.len()
            )));
        }
    }
    if errors.is_empty() {
        return Err(Error::invalid("no error columns to select from"));
    }
    Ok(trial_ids
        .iter()
        .enumerate()
        .map(|(i, &trial_id)| {
            let mut best: Option<PostHocChoice> = None;
            for (&model, column) in errors {
                if best.is_none_or(|b| column[i] < b.error) {
                    best = Some(PostHocChoice {
                        trial_id,
                        model,
                        error: column[i],
                    });
                }
            }
            best.expect("errors is non-empty")
        })
        .collect())
}
