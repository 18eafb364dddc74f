use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trial::{ImpactTrial, TrialId};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub train_fraction: f64,
    /// Number of incidence-angle strata; 1 disables stratification.
    pub strata: usize,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            train_fraction: 0.7,
            strata: 4,
            seed: 0,
        }
    }
}

/// Disjoint train/evaluation id sets, both sorted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<TrialId>,
    pub eval: Vec<TrialId>,
    pub description: String,
}

/// Angle of the incident contact velocity from the surface normal, in
/// `(-π/2, π/2)` for approaching contacts.
pub fn incidence_angle(trial: &ImpactTrial) -> f64 {
    let vc = trial.contact_velocity_pre();
    vc.x.atan2(-vc.y)
}

pub fn split_dataset(trials: &[ImpactTrial], config: &SplitConfig) -> Result<Split> {
    if !(config.train_fraction > 0.0 && config.train_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "train fraction must lie in (0, 1), got {}",
            config.train_fraction
        )));
    }
    if config.strata == 0 {
        return Err(Error::invalid("at least one stratum is required"));
    }
    let mut keyed: Vec<(f64, TrialId)> = trials.iter().map(|t| (incidence_angle(t), t.trial_id)).collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let n = keyed.len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (mut train, mut eval) = (Vec::new(), Vec::new());
    // Cumulative rounding keeps the overall train count at round(f n).
    let quota = |i: usize| (config.train_fraction * i as f64).round() as usize;
    for s in 0..config.strata {
        let (start, end) = (s * n / config.strata, (s + 1) * n / config.strata);
        let mut ids: Vec<TrialId> = keyed[start..end].iter().map(|k| k.1).collect();
        ids.shuffle(&mut rng);
        let k = quota(end) - quota(start);
        train.extend_from_slice(&ids[..k]);
        eval.extend_from_slice(&ids[k..]);
    }
    train.sort_unstable();
    eval.sort_unstable();
    let split = Split {
        description: format!(
            "{:.0}/{:.0} train/eval, {} incidence-angle strata, seed {}",
            100.0 * config.train_fraction,
            100.0 * (1.0 - config.train_fraction),
            config.strata,
            config.seed
        ),
        train,
        eval,
    };
    split.check()?;
    Ok(split)
}

impl Split {
    /// Ids present in both halves.
    pub fn check(&self) -> Result<()> {
        check_disjoint(&self.train, &self.eval)
    }

    /// `(train, eval)` trials, each in id order.
    pub fn apply(&self, trials: &[ImpactTrial]) -> Result<(Vec<ImpactTrial>, Vec<ImpactTrial>)> {
        let pick = |ids: &[TrialId]| -> Result<Vec<ImpactTrial>> {
            let mut out: Vec<ImpactTrial> = Vec::with_capacity(ids.len());
            let wanted: BTreeSet<TrialId> = ids.iter().copied().collect();
            out.extend(trials.iter().filter(|t| wanted.contains(&t.trial_id)).cloned());
            if out.len() != wanted.len() {
                return Err(Error::invalid(format!(
                    "split references {} trials but only {} were found",
                    wanted.len(),
                    out.len()
                )));
            }
            out.sort_by_key(|t| t.trial_id);
            Ok(out)
        };
        Ok((pick(&self.train)?, pick(&self.eval)?))
    }
}

/// Fails with the number of shared ids when the two sets overlap.
pub fn check_disjoint(train: &[TrialId], eval: &[TrialId]) -> Result<()> {
    let train: BTreeSet<_> = train.iter().collect();
    let shared = eval.iter().filter(|id| train.contains(id)).count();
    if shared > 0 {
        return Err(Error::SplitLeakage(shared));
    }
    Ok(())
}
