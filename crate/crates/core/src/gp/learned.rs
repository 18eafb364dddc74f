//! The four learned contact-model classes.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::features::{extract_features, FeatureSpaceId, TargetSpaceId};
use super::kernel::GpHyperparams;
use super::regressor::{gp_fit, GpFitOptions, GpRegressor};
use crate::dynamics::{
    apply_impulse, apply_wrench, BodyParams, ContactGeometry, EnergyEllipse, Impulse2, PlanarState,
    Wrench3, DEFAULT_ADMISSIBILITY_TOL,
};
use crate::error::{Error, Result};
use crate::identification::{fit_per_trial, OptimizerSettings};
use crate::models::{predict_impulse, predict_post_velocity, ModelId, ModelParams, ParamBounds};
use crate::trial::{ImpactTrial, TrialId};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LearnedClass {
    /// Features to linear impulse.
    DataDrivenRigid,
    /// Features to impulse plus torque.
    DataDriven,
    /// Analytical model plus a learned correction of its impulse or wrench.
    ReinforcedResidual,
    /// Analytical model driven by learned per-state `(μ, ε)`.
    ReinforcedParam,
}

impl LearnedClass {
    pub const ALL: [LearnedClass; 4] = [
        LearnedClass::DataDrivenRigid,
        LearnedClass::DataDriven,
        LearnedClass::ReinforcedResidual,
        LearnedClass::ReinforcedParam,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            LearnedClass::DataDrivenRigid => "data-driven-rigid",
            LearnedClass::DataDriven => "data-driven",
            LearnedClass::ReinforcedResidual => "reinforced-residual",
            LearnedClass::ReinforcedParam => "reinforced-param",
        }
    }

    pub fn needs_base(&self) -> bool {
        matches!(self, LearnedClass::ReinforcedResidual | LearnedClass::ReinforcedParam)
    }

    /// Checks a class/target combination, explaining what is wrong.
    pub fn check_target(&self, target: TargetSpaceId) -> Result<()> {
        let ok = match self {
            LearnedClass::DataDrivenRigid | LearnedClass::ReinforcedParam => target == TargetSpaceId::Y1,
            LearnedClass::DataDriven => target == TargetSpaceId::Y2,
            LearnedClass::ReinforcedResidual => true,
        };
        if ok {
            Ok(())
        } else {
            let why = match self {
                LearnedClass::DataDriven => "the wrench model predicts (P_t, P_n, tau) and needs y2",
                _ => "rigid models predict a linear impulse and need y1",
            };
            Err(Error::invalid(format!("{} with target {target}: {why}", self.name())))
        }
    }
}

impl fmt::Display for LearnedClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LearnedClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        LearnedClass::ALL
            .into_iter()
            .find(|c| c.name() == key)
            .ok_or_else(|| Error::invalid(format!("unknown model class '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaseModel {
    pub model: ModelId,
    pub params: ModelParams,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainOptions {
    pub gp: GpFitOptions,
    /// Clamp for the reinforced-param outputs and its per-trial fits.
    pub bounds: ParamBounds,
    pub per_trial: OptimizerSettings,
}

/// One output dimension: `offset + scale * gp(x)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct OutputGp {
    offset: f64,
    scale: f64,
    gp: Option<GpRegressor>,
}

impl OutputGp {
    fn predict(&self, x: &[f64]) -> Result<Option<f64>> {
        match &self.gp {
            Some(gp) => Ok(Some(self.offset + self.scale * gp.predict_mean(x)?)),
            None => Ok(None),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LearnedContactModel {
    pub format_version: u32,
    pub class: LearnedClass,
    pub features: FeatureSpaceId,
    pub target: TargetSpaceId,
    pub base: Option<BaseModel>,
    pub bounds: ParamBounds,
    pub n_train: usize,
    /// Ids of the training trials, so evaluation can refuse leaked data.
    #[serde(default)]
    pub train_ids: Vec<TrialId>,
    outputs: Vec<OutputGp>,
}

/// A learned model's output for one query.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LearnedPrediction {
    pub v_post: Vector3<f64>,
    pub impulse: Option<Impulse2>,
    pub wrench: Option<Wrench3>,
    pub params: Option<ModelParams>,
    /// Energy-ellipse verdict for linear-impulse predictions; learned
    /// impulses are not projected, so this can be false.
    pub admissible: Option<bool>,
}

fn target_vector(target: TargetSpaceId, t: &ImpactTrial) -> Result<Vec<f64>> {
    Ok(match target {
        TargetSpaceId::Y1 => {
            let p = t.measured_impulse()?;
            vec![p.tangential, p.normal]
        }
        TargetSpaceId::Y2 => {
            let w = t.measured_wrench();
            vec![w.tangential, w.normal, w.torque]
        }
    })
}

fn std_of(values: &[f64], centred: bool) -> f64 {
    let n = values.len() as f64;
    let mean = if centred { values.iter().sum::<f64>() / n } else { 0.0 };
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Fit one standardised GP. Residual outputs are scaled but not centred so
/// an untrained correction is exactly zero.
fn fit_output(x: &DMatrix<f64>, y: &[f64], centred: bool, options: &GpFitOptions) -> Result<OutputGp> {
    let n = y.len();
    let offset = if centred { y.iter().sum::<f64>() / n as f64 } else { 0.0 };
    let spread = std_of(y, centred);
    let scale = if spread > 0.0 && spread.is_finite() { spread } else { 1.0 };
    let z = DVector::from_iterator(n, y.iter().map(|v| (v - offset) / scale));
    let signal = {
        let s = std_of(z.as_slice(), centred);
        if s > 0.0 {
            s
        } else {
            1.0
        }
    };
    let lengths = (0..x.ncols())
        .map(|d| {
            let col: Vec<f64> = x.column(d).iter().copied().collect();
            let s = std_of(&col, true);
            if s > 0.0 {
                s
            } else {
                1.0
            }
        })
        .collect();
    let init = GpHyperparams::new(signal, lengths, 0.1 * signal)?;
    let gp = gp_fit(x.clone(), z, &init, options)?;
    Ok(OutputGp {
        offset,
        scale,
        gp: Some(gp),
    })
}

fn fit_outputs(x: &DMatrix<f64>, columns: Vec<Vec<f64>>, centred: bool, options: &GpFitOptions) -> Result<Vec<OutputGp>> {
    columns
        .into_par_iter()
        .enumerate()
        .map(|(d, y)| {
            let opts = GpFitOptions {
                seed: options.seed.wrapping_add(d as u64),
                ..*options
            };
            fit_output(x, &y, centred, &opts)
        })
        .collect()
}

fn columns(rows: &[Vec<f64>], dim: usize) -> Vec<Vec<f64>> {
    (0..dim).map(|d| rows.iter().map(|r| r[d]).collect()).collect()
}

fn base_wrench(base: &BaseModel, t: &ImpactTrial) -> Result<Vec<f64>> {
    let p = predict_impulse(base.model, &base.params, &t.body, &t.contact, t.v_pre())?;
    Ok(vec![p.tangential, p.normal, 0.0])
}

/// Train a learned contact model on `trials`.
pub fn train_learned_model(
    class: LearnedClass,
    features: FeatureSpaceId,
    target: TargetSpaceId,
    trials: &[ImpactTrial],
    base: Option<BaseModel>,
    options: &TrainOptions,
) -> Result<LearnedContactModel> {
    class.check_target(target)?;
    options.bounds.validate()?;
    if class.needs_base() && base.is_none() {
        return Err(Error::invalid(format!("{class} needs a base analytical model")));
    }
    if let Some(b) = &base {
        b.params.validate()?;
    }
    if trials.is_empty() && !class.needs_base() {
        return Err(Error::InsufficientData(format!("{class} needs training data")));
    }

    let rows = trials
        .iter()
        .map(|t| extract_features(features, &t.body, &t.contact, &t.state_pre))
        .collect::<Result<Vec<_>>>()?;
    let x = DMatrix::from_fn(rows.len(), features.dim(), |i, j| rows[i][j]);

    let outputs = if trials.is_empty() {
        match class {
            LearnedClass::ReinforcedParam => {
                let b = base.expect("checked above");
                vec![
                    OutputGp {
                        offset: b.params.mu,
                        scale: 1.0,
                        gp: None,
                    },
                    OutputGp {
                        offset: b.params.epsilon,
                        scale: 1.0,
                        gp: None,
                    },
                ]
            }
            _ => Vec::new(),
        }
    } else {
        match class {
            LearnedClass::DataDrivenRigid | LearnedClass::DataDriven => {
                let ys = trials
                    .iter()
                    .map(|t| target_vector(target, t))
                    .collect::<Result<Vec<_>>>()?;
                fit_outputs(&x, columns(&ys, target.dim()), true, &options.gp)?
            }
            LearnedClass::ReinforcedResidual => {
                let b = base.expect("checked above");
                let ys = trials
                    .iter()
                    .map(|t| {
                        let measured = target_vector(target, t)?;
                        let predicted = base_wrench(&b, t)?;
                        Ok(measured.iter().zip(&predicted).map(|(m, p)| m - p).collect())
                    })
                    .collect::<Result<Vec<Vec<f64>>>>()?;
                fit_outputs(&x, columns(&ys, target.dim()), false, &options.gp)?
            }
            LearnedClass::ReinforcedParam => {
                let b = base.expect("checked above");
                let fits = fit_per_trial(b.model, trials, &options.bounds, &options.per_trial)?;
                let ys: Vec<Vec<f64>> = fits.iter().map(|f| vec![f.params.mu, f.params.epsilon]).collect();
                fit_outputs(&x, columns(&ys, 2), true, &options.gp)?
            }
        }
    };

    Ok(LearnedContactModel {
        format_version: FORMAT_VERSION,
        class,
        features,
        target,
        base,
        bounds: options.bounds,
        n_train: trials.len(),
        train_ids: trials.iter().map(|t| t.trial_id).collect(),
        outputs,
    })
}

impl LearnedContactModel {
    /// Predict the post-impact velocity (and the impulse, wrench or
    /// parameters behind it) for one pre-impact state.
    pub fn predict(&self, body: &BodyParams, contact: &ContactGeometry, state_pre: &PlanarState) -> Result<LearnedPrediction> {
        let v_pre = &state_pre.v;
        let x = extract_features(self.features, body, contact, state_pre)?;
        let learned = self
            .outputs
            .iter()
            .map(|o| o.predict(&x))
            .collect::<Result<Vec<Option<f64>>>>()?;
        let impulse_prediction = |p: Impulse2| -> Result<LearnedPrediction> {
            let admissible = EnergyEllipse::new(body, contact, v_pre)
                .map(|e| e.is_admissible(&p.as_vector(), DEFAULT_ADMISSIBILITY_TOL))
                .unwrap_or(false);
            Ok(LearnedPrediction {
                v_post: apply_impulse(body, contact, v_pre, p),
                impulse: Some(p),
                wrench: None,
                params: None,
                admissible: Some(admissible),
            })
        };
        let wrench_prediction = |w: Wrench3| LearnedPrediction {
            v_post: apply_wrench(body, contact, v_pre, w),
            impulse: None,
            wrench: Some(w),
            params: None,
            admissible: None,
        };
        let value = |i: usize| learned[i].unwrap_or(0.0);

        match self.class {
            LearnedClass::DataDrivenRigid => impulse_prediction(Impulse2::new(value(0), value(1))),
            LearnedClass::DataDriven => Ok(wrench_prediction(Wrench3::new(value(0), value(1), value(2)))),
            LearnedClass::ReinforcedResidual => {
                let b = self.base.as_ref().ok_or_else(|| Error::invalid("model has no base"))?;
                let p = predict_impulse(b.model, &b.params, body, contact, v_pre)?;
                let trained = learned.iter().any(Option::is_some);
                match self.target {
                    TargetSpaceId::Y1 if !trained => impulse_prediction(p),
                    TargetSpaceId::Y1 => impulse_prediction(Impulse2::new(p.tangential + value(0), p.normal + value(1))),
                    TargetSpaceId::Y2 if !trained => {
                        let mut out = impulse_prediction(p)?;
                        out.wrench = Some(p.to_wrench());
                        out.admissible = None;
                        Ok(out)
                    }
                    TargetSpaceId::Y2 => Ok(wrench_prediction(Wrench3::new(
                        p.tangential + value(0),
                        p.normal + value(1),
                        value(2),
                    ))),
                }
            }
            LearnedClass::ReinforcedParam => {
                let b = self.base.as_ref().ok_or_else(|| Error::invalid("model has no base"))?;
                let mu = learned[0].unwrap_or(self.outputs[0].offset);
                let eps = learned[1].unwrap_or(self.outputs[1].offset);
                let params = self.bounds.clamp(mu, eps);
                let p = predict_impulse(b.model, &params, body, contact, v_pre)?;
                let mut out = impulse_prediction(p)?;
                out.v_post = predict_post_velocity(b.model, &params, body, contact, v_pre)?;
                out.params = Some(params);
                Ok(out)
            }
        }
    }

    pub fn predict_trial(&self, trial: &ImpactTrial) -> Result<LearnedPrediction> {
        self.predict(&trial.body, &trial.contact, &trial.state_pre)
    }

    /// Output GPs in target order; `None` where nothing was trained.
    pub fn regressors(&self) -> impl Iterator<Item = Option<&GpRegressor>> {
        self.outputs.iter().map(|o| o.gp.as_ref())
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let version = value.get("format_version").and_then(|v| v.as_u64());
        if version != Some(FORMAT_VERSION as u64) {
            return Err(Error::invalid(format!(
                "unsupported model format version {version:?}, expected {FORMAT_VERSION}"
            )));
        }
        let model: Self = serde_json::from_value(value)?;
        model.class.check_target(model.target)?;
        if model.class.needs_base() && model.base.is_none() {
            return Err(Error::invalid("reinforced model file has no base model"));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
