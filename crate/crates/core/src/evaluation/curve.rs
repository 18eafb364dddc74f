use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metric::{velocity_error, ErrorMetric};
use crate::error::{Error, Result};
use crate::gp::{train_learned_model, BaseModel, FeatureSpaceId, LearnedClass, TargetSpaceId, TrainOptions};
use crate::identification::{fit_batch, OptimizerSettings};
use crate::models::{predict_post_velocity, ModelId, ParamBounds};
use crate::trial::ImpactTrial;

/// What gets retrained at every training-set size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CurveModel {
    /// Identify `(μ, ε)` on the subset, then predict.
    Analytical { model: ModelId },
    Learned {
        class: LearnedClass,
        features: FeatureSpaceId,
        target: TargetSpaceId,
        base: Option<BaseModel>,
        #[serde(default)]
        options: TrainOptions,
    },
}

impl CurveModel {
    pub fn name(&self) -> String {
        match self {
            CurveModel::Analytical { model } => model.to_string(),
            CurveModel::Learned {
                class,
                features,
                target,
                ..
            } => format!("{class}/{features}/{target}"),
        }
    }

    fn errors(&self, train: &[ImpactTrial], eval: &[ImpactTrial], metric: &ErrorMetric) -> Result<Vec<f64>> {
        match self {
            CurveModel::Analytical { model } => {
                let fit = fit_batch(*model, train, &ParamBounds::default(), &OptimizerSettings::default())?;
                eval.iter()
                    .map(|t| {
                        let v = predict_post_velocity(*model, &fit.params, &t.body, &t.contact, t.v_pre())?;
                        velocity_error(t, &v, metric)
                    })
                    .collect()
            }
            CurveModel::Learned {
                class,
                features,
                target,
                base,
                options,
            } => {
                let m = train_learned_model(*class, *features, *target, train, *base, options)?;
                eval.iter()
                    .map(|t| velocity_error(t, &m.predict_trial(t)?.v_post, metric))
                    .collect()
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub model: String,
    pub sizes: Vec<usize>,
    pub repeats: usize,
    /// Mean held-out error per size, averaged over repeats.
    pub mean: Vec<f64>,
    /// Population standard deviation of the per-repeat means.
    pub std: Vec<f64>,
}

impl LearningCurve {
    /// `x,y,std` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["x", "y", "std"])?;
        for ((s, m), d) in self.sizes.iter().zip(&self.mean).zip(&self.std) {
            w.serialize((s, m, d))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Smallest size from which no further step improves the mean error by
    /// `rel` of the final error or more.
    pub fn plateau_size(&self, rel: f64) -> Option<usize> {
        let last = *self.mean.last()?;
        let threshold = rel * last;
        let mut plateau = self.sizes.len() - 1;
        for i in (0..self.sizes.len() - 1).rev() {
            if self.mean[i] - self.mean[i + 1] < threshold {
                plateau = i;
            } else {
                break;
            }
        }
        Some(self.sizes[plateau])
    }
}

/// Parse `a:b:step` into `a, a+step, …` up to and including `b`.
pub fn parse_sizes(spec: &str) -> Result<Vec<usize>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || Error::invalid(format!("sizes must look like start:stop:step, got '{spec}'"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let nums = parts
        .iter()
        .map(|p| p.trim().parse::<usize>().map_err(|_| bad()))
        .collect::<Result<Vec<_>>>()?;
    let (a, b, step) = (nums[0], nums[1], nums[2]);
    if step == 0 || a == 0 || a > b {
        return Err(bad());
    }
    Ok((a..=b).step_by(step).collect())
}

/// Held-out error of `model` against training-set size.
///
/// Both pools are put in trial-id order first, so the result does not depend
/// on how the caller ordered them. Repeat `r` shuffles the training pool with
/// its own random stream and trains on growing prefixes of that permutation.
pub fn learning_curve(
    train_pool: &[ImpactTrial],
    eval: &[ImpactTrial],
    model: &CurveModel,
    sizes: &[usize],
    repeats: usize,
    seed: u64,
    metric: &ErrorMetric,
) -> Result<LearningCurve> {
    if sizes.is_empty() || sizes.windows(2).any(|w| w[1] <= w[0]) || sizes[0] == 0 {
        return Err(Error::invalid("sizes must be positive and strictly increasing"));
    }
    if repeats == 0 {
        return Err(Error::invalid("at least one repeat is required"));
    }
    let largest = *sizes.last().expect("non-empty");
    if largest > train_pool.len() {
        return Err(Error::InsufficientData(format!(
            "largest training size {largest} exceeds the {} available training trials",
            train_pool.len()
        )));
    }
    if eval.is_empty() {
        return Err(Error::InsufficientData("evaluation set is empty".into()));
    }
    super::split::check_disjoint(
        &train_pool.iter().map(|t| t.trial_id).collect::<Vec<_>>(),
        &eval.iter().map(|t| t.trial_id).collect::<Vec<_>>(),
    )?;

    let by_id = |ts: &[ImpactTrial]| {
        let mut v = ts.to_vec();
        v.sort_by_key(|t| t.trial_id);
        v
    };
    let pool = by_id(train_pool);
    let eval = by_id(eval);

    let orders: Vec<Vec<ImpactTrial>> = (0..repeats)
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            let mut p = pool.clone();
            p.shuffle(&mut rng);
            p
        })
        .collect();
    let jobs: Vec<(usize, usize)> = (0..repeats)
        .flat_map(|r| (0..sizes.len()).map(move |i| (r, i)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(r, i)| {
            let errors = model.errors(&orders[r][..sizes[i]], &eval, metric)?;
            Ok(errors.iter().sum::<f64>() / errors.len() as f64)
        })
        .collect::<Result<Vec<f64>>>()?;

    let (mut mean, mut std) = (Vec::new(), Vec::new());
    for i in 0..sizes.len() {
        let per: Vec<f64> = (0..repeats).map(|r| results[r * sizes.len() + i]).collect();
        let m = per.iter().sum::<f64>() / repeats as f64;
        let v = per.iter().map(|x| (x - m).powi(2)).sum::<f64>() / repeats as f64;
        mean.push(m);
        std.push(v.sqrt());
    }
    Ok(LearningCurve {
        model: model.name(),
        sizes: sizes.to_vec(),
        repeats,
        mean,
        std,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn size_ranges() {
        assert_eq!(parse_sizes("10:450:20").unwrap().len(), 23);
        assert_eq!(parse_sizes("10:50:20").unwrap(), vec![10, 30, 50]);
        assert_eq!(parse_sizes("5:5:1").unwrap(), vec![5]);
        for bad in ["10:5:1", "1:10:0", "0:10:1", "1:10", "a:b:c"] {
            assert!(parse_sizes(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn plateau_detection() {
        let curve = |mean: Vec<f64>| LearningCurve {
            model: "m".into(),
            sizes: (1..=mean.len()).map(|i| 10 * i).collect(),
            repeats: 1,
            std: vec![0.0; mean.len()],
            mean,
        };
        assert_eq!(curve(vec![1.0, 0.5, 0.3, 0.29, 0.295, 0.29]).plateau_size(0.05), Some(30));
        assert_eq!(curve(vec![1.0, 0.5, 0.25]).plateau_size(0.05), Some(30));
        assert_eq!(curve(vec![0.2, 0.2]).plateau_size(0.05), Some(10));
    }
}
