//! Two-parameter analytical contact models and the two post hoc references.
//!
//! Every model maps `(μ, ε)` and the pre-impact state to one impulse inside
//! the energy ellipse. The per-model laws live in [`laws`]; this module owns
//! the shared interface and the restitution cap that keeps the laws
//! energetically consistent.
//!
//! Newton and Poisson restitution combined with Coulomb friction are known to
//! create energy for some eccentric impacts. When a law's raw impulse would
//! do so (or end with the contact still approaching) the restitution
//! coefficient is lowered to the largest value in `[0, ε]` whose impulse is
//! admissible. Compression alone is always dissipative, so such a value
//! exists.

mod frame;
mod irb;
mod laws;
mod posthoc;

use std::fmt;
use std::str::FromStr;

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::dynamics::{apply_impulse, BodyParams, ContactGeometry, Impulse2};
use crate::error::{Error, Result};

pub(crate) use frame::ContactFrame;
pub use irb::{irb_bound, irb_bound_for, IrbMode, IrbResult};
pub use posthoc::{best_post_hoc, select_min_error, PostHocChoice};

/// Default ceiling for the friction coefficient.
pub const MU_MAX: f64 = 2.0;

/// Relative slack used when checking a law's raw output.
const CAP_SLACK: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelId {
    ApNewton,
    ApPoisson,
    DrumwrightShell,
    Mirtich,
    WangMason,
    Whittaker,
}

impl ModelId {
    pub const ALL: [ModelId; 6] = [
        ModelId::ApNewton,
        ModelId::ApPoisson,
        ModelId::DrumwrightShell,
        ModelId::Mirtich,
        ModelId::WangMason,
        ModelId::Whittaker,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ModelId::ApNewton => "ap-newton",
            ModelId::ApPoisson => "ap-poisson",
            ModelId::DrumwrightShell => "drumwright-shell",
            ModelId::Mirtich => "mirtich",
            ModelId::WangMason => "wang-mason",
            ModelId::Whittaker => "whittaker",
        }
    }

    /// Whether restitution is a ratio of normal velocities.
    pub fn uses_newton_restitution(&self) -> bool {
        matches!(self, ModelId::ApNewton | ModelId::Whittaker)
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        ModelId::ALL
            .into_iter()
            .find(|m| m.name() == key)
            .ok_or_else(|| Error::invalid(format!("unknown model '{s}'")))
    }
}

/// Friction and restitution coefficients.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub mu: f64,
    pub epsilon: f64,
}

impl ModelParams {
    pub fn new(mu: f64, epsilon: f64) -> Result<Self> {
        let p = Self { mu, epsilon };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu >= 0.0 && self.mu <= MU_MAX) {
            return Err(Error::invalid(format!(
                "friction coefficient must lie in [0, {MU_MAX}], got {}",
                self.mu
            )));
        }
        if !(self.epsilon >= 0.0 && self.epsilon <= 1.0) {
            return Err(Error::invalid(format!(
                "restitution coefficient must lie in [0, 1], got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Box of admissible `(μ, ε)` values for search and clamping.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamBounds {
    pub mu: (f64, f64),
    pub epsilon: (f64, f64),
}

impl Default for ParamBounds {
    fn default() -> Self {
        Self {
            mu: (0.0, MU_MAX),
            epsilon: (0.0, 1.0),
        }
    }
}

impl ParamBounds {
    pub fn validate(&self) -> Result<()> {
        let (ml, mh) = self.mu;
        let (el, eh) = self.epsilon;
        if !(0.0 <= ml && ml <= mh && mh <= MU_MAX && 0.0 <= el && el <= eh && eh <= 1.0) {
            return Err(Error::invalid(format!("invalid parameter bounds {self:?}")));
        }
        Ok(())
    }

    pub fn clamp(&self, mu: f64, epsilon: f64) -> ModelParams {
        let mu = if mu.is_nan() { self.mu.0 } else { mu };
        let epsilon = if epsilon.is_nan() { self.epsilon.0 } else { epsilon };
        ModelParams {
            mu: mu.clamp(self.mu.0, self.mu.1),
            epsilon: epsilon.clamp(self.epsilon.0, self.epsilon.1),
        }
    }

    pub fn contains(&self, p: &ModelParams) -> bool {
        (self.mu.0..=self.mu.1).contains(&p.mu) && (self.epsilon.0..=self.epsilon.1).contains(&p.epsilon)
    }
}

fn raw_law(model: ModelId, f: &ContactFrame, mu: f64, eps: f64) -> Vector2<f64> {
    use laws::{Restitution, SlipRule};
    match model {
        ModelId::Whittaker => laws::newton(f, mu, eps, SlipRule::Incident),
        ModelId::ApNewton => laws::newton(f, mu, eps, SlipRule::Consistent),
        ModelId::ApPoisson => laws::ap_poisson(f, mu, eps),
        ModelId::DrumwrightShell => laws::drumwright_shell(f, mu, eps),
        ModelId::WangMason => laws::impulse_path(f, mu, eps, Restitution::Poisson),
        ModelId::Mirtich => laws::impulse_path(f, mu, eps, Restitution::Energetic),
    }
}

/// Impulse predicted by `model` in a precomputed contact frame.
pub(crate) fn predict_in_frame(model: ModelId, f: &ContactFrame, mu: f64, eps: f64) -> Vector2<f64> {
    let p = raw_law(model, f, mu, eps);
    if f.admits(&p, CAP_SLACK) {
        return p;
    }
    // Bisection on the restitution coefficient; the low end stays admissible.
    let mut lo = 0.0;
    let mut hi = eps;
    let mut best = raw_law(model, f, mu, 0.0);
    for _ in 0..64 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let candidate = raw_law(model, f, mu, mid);
        if f.admits(&candidate, CAP_SLACK) {
            lo = mid;
            best = candidate;
        } else {
            hi = mid;
        }
    }
    best
}

/// Impulse selected by `model` for an approaching contact.
pub fn predict_impulse(
    model: ModelId,
    params: &ModelParams,
    body: &BodyParams,
    contact: &ContactGeometry,
    v_pre: &Vector3<f64>,
) -> Result<Impulse2> {
    params.validate()?;
    let frame = ContactFrame::new(body, contact, v_pre)?;
    Ok(Impulse2::from_vector(predict_in_frame(
        model,
        &frame,
        params.mu,
        params.epsilon,
    )))
}

/// [`predict_impulse`] pushed through the impulse-velocity equation.
pub fn predict_post_velocity(
    model: ModelId,
    params: &ModelParams,
    body: &BodyParams,
    contact: &ContactGeometry,
    v_pre: &Vector3<f64>,
) -> Result<Vector3<f64>> {
    let p = predict_impulse(model, params, body, contact, v_pre)?;
    Ok(apply_impulse(body, contact, v_pre, p))
}

#[cfg(test)]
mod tests;
