use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::kde::{default_grid, kde_pdf, Density};
use super::metric::{velocity_error, ErrorMetric};
use super::split::{check_disjoint, Split};
use crate::dataforge::write_csv;
use crate::error::{Error, Result};
use crate::gp::LearnedContactModel;
use crate::models::{irb_bound, predict_post_velocity, select_min_error, ModelId, ModelParams};
use crate::trial::{ImpactTrial, TrialId};

/// Grid resolution of the per-model error densities.
pub const KDE_POINTS: usize = 512;

/// Slack allowed in the per-trial dominance comparisons, as `tol (1 + e)`
/// with `e` the larger error.
pub const DOMINANCE_TOL: f64 = 1e-9;

/// A model under evaluation.
#[derive(Clone, Debug)]
pub enum EvalModel {
    Analytical { model: ModelId, params: ModelParams },
    Learned { name: String, model: Box<LearnedContactModel> },
}

impl EvalModel {
    pub fn name(&self) -> String {
        match self {
            EvalModel::Analytical { model, .. } => model.to_string(),
            EvalModel::Learned { name, .. } => name.clone(),
        }
    }

    fn predict(&self, trial: &ImpactTrial) -> Result<nalgebra::Vector3<f64>> {
        match self {
            EvalModel::Analytical { model, params } => {
                predict_post_velocity(*model, params, &trial.body, &trial.contact, trial.v_pre())
            }
            EvalModel::Learned { model, .. } => Ok(model.predict_trial(trial)?.v_post),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RowKind {
    Analytical,
    Learned,
    BestPostHoc,
    IrbBound,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl ErrorSummary {
    pub fn of(samples: &[f64]) -> Self {
        let n = samples.len();
        if n == 0 {
            return Self {
                n,
                mean: f64::NAN,
                median: f64::NAN,
                std: f64::NAN,
            };
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        let median = if n % 2 == 1 {
            s[n / 2]
        } else {
            0.5 * (s[n / 2 - 1] + s[n / 2])
        };
        Self {
            n,
            mean,
            median,
            std: var.sqrt(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelRow {
    pub name: String,
    pub kind: RowKind,
    pub summary: ErrorSummary,
    /// One error per evaluation trial, in the order of `EvalReport::eval_ids`.
    pub errors: Vec<f64>,
    /// Absent when fewer than two evaluation trials exist.
    pub density: Option<Density>,
    /// For the best post hoc row: the model chosen on each trial.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chosen: Option<Vec<ModelId>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DominanceCheck {
    /// `IRB ≤ best post hoc ≤ every analytical model` on every trial.
    pub holds: bool,
    pub violations: usize,
    /// Largest excess of a supposedly smaller error over a larger one.
    pub worst_excess: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    /// SHA-256 of the dataset in its CSV form.
    pub sha256: String,
    pub n_trials: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitInfo {
    pub description: String,
    pub n_train: usize,
    pub n_eval: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: DatasetInfo,
    pub split: SplitInfo,
    pub seed: u64,
    pub metric: ErrorMetric,
    pub eval_ids: Vec<TrialId>,
    pub rows: Vec<ModelRow>,
    pub dominance: DominanceCheck,
}

impl EvalReport {
    pub fn row(&self, name: &str) -> Option<&ModelRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::identification::write_json(path.as_ref(), self)
    }
}

pub fn dataset_digest(trials: &[ImpactTrial]) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(&mut buf, trials)?;
    let hash = Sha256::digest(&buf);
    Ok(hash.iter().map(|b| format!("{b:02x}")).collect())
}

fn density_of(errors: &[f64]) -> Result<Option<Density>> {
    if errors.len() < 2 {
        return Ok(None);
    }
    let grid = default_grid(errors, KDE_POINTS);
    kde_pdf(errors, &grid).map(Some)
}

fn row(name: String, kind: RowKind, errors: Vec<f64>) -> Result<ModelRow> {
    Ok(ModelRow {
        name,
        kind,
        summary: ErrorSummary::of(&errors),
        density: density_of(&errors)?,
        errors,
        chosen: None,
    })
}

fn exceeds(small: f64, large: f64) -> Option<f64> {
    let excess = small - large;
    (excess > DOMINANCE_TOL * (1.0 + large.abs())).then_some(excess)
}

/// Evaluate `models` on the evaluation half of `split`.
///
/// Learned models that saw any evaluation trial are refused. The IRB bound is
/// always reported; best post hoc is reported when at least one analytical
/// model is given.
pub fn evaluate_models(
    trials: &[ImpactTrial],
    models: &[EvalModel],
    split: &Split,
    metric: &ErrorMetric,
    seed: u64,
) -> Result<EvalReport> {
    split.check()?;
    for m in models {
        if let EvalModel::Learned { name, model } = m {
            check_disjoint(&model.train_ids, &split.eval).map_err(|e| {
                log::error!("model '{name}' was trained on evaluation trials");
                e
            })?;
        }
    }
    let mut names = std::collections::BTreeSet::new();
    for m in models {
        if !names.insert(m.name()) {
            return Err(Error::invalid(format!("model '{}' listed twice", m.name())));
        }
    }
    let (_, eval) = split.apply(trials)?;
    if eval.is_empty() {
        return Err(Error::InsufficientData("evaluation split is empty".into()));
    }

    let mut rows = Vec::new();
    let mut analytical: BTreeMap<ModelId, Vec<f64>> = BTreeMap::new();
    for m in models {
        let errors = eval
            .par_iter()
            .map(|t| velocity_error(t, &m.predict(t)?, metric))
            .collect::<Result<Vec<f64>>>()?;
        match m {
            EvalModel::Analytical { model, .. } => {
                analytical.insert(*model, errors.clone());
                rows.push(row(m.name(), RowKind::Analytical, errors)?);
            }
            EvalModel::Learned { .. } => rows.push(row(m.name(), RowKind::Learned, errors)?),
        }
    }

    let eval_ids: Vec<TrialId> = eval.iter().map(|t| t.trial_id).collect();
    let irb = eval
        .par_iter()
        .map(|t| Ok(irb_bound(t, metric.velocity)?.error / metric.scale(t)?))
        .collect::<Result<Vec<f64>>>()?;

    let mut dominance = DominanceCheck {
        holds: true,
        violations: 0,
        worst_excess: 0.0,
    };
    let mut flag = |small: f64, large: f64| {
        if let Some(e) = exceeds(small, large) {
            dominance.holds = false;
            dominance.violations += 1;
            dominance.worst_excess = dominance.worst_excess.max(e);
        }
    };
    if !analytical.is_empty() {
        let choices = select_min_error(&eval_ids, &analytical)?;
        let bph: Vec<f64> = choices.iter().map(|c| c.error).collect();
        for (i, &b) in bph.iter().enumerate() {
            flag(irb[i], b);
            for errs in analytical.values() {
                flag(b, errs[i]);
            }
        }
        let mut r = row("best-post-hoc".into(), RowKind::BestPostHoc, bph)?;
        r.chosen = Some(choices.iter().map(|c| c.model).collect());
        rows.push(r);
    }
    rows.push(row("irb-bound".into(), RowKind::IrbBound, irb)?);
    if !dominance.holds {
        log::warn!(
            "dominance violated on {} comparisons (worst excess {:.3e})",
            dominance.violations,
            dominance.worst_excess
        );
    }

    Ok(EvalReport {
        dataset: DatasetInfo {
            sha256: dataset_digest(trials)?,
            n_trials: trials.len(),
        },
        split: SplitInfo {
            description: split.description.clone(),
            n_train: split.train.len(),
            n_eval: split.eval.len(),
        },
        seed,
        metric: *metric,
        eval_ids,
        rows,
        dominance,
    })
}
