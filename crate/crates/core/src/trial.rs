use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    contact_velocity, effective_contact_inertia, impulse_from_velocity_change,
    wrench_from_velocity_change, BodyParams, ContactGeometry, EnergyEllipse, Impulse2,
    PlanarState, Wrench3,
};
use crate::error::{Error, Result};

pub type TrialId = u64;

/// One recorded impact: body, contact point at onset, and the states just
/// before and just after contact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImpactTrial {
    pub trial_id: TrialId,
    pub body: BodyParams,
    pub contact: ContactGeometry,
    pub state_pre: PlanarState,
    pub state_post: PlanarState,
}

impl ImpactTrial {
    pub fn v_pre(&self) -> &Vector3<f64> {
        &self.state_pre.v
    }

    pub fn v_post(&self) -> &Vector3<f64> {
        &self.state_post.v
    }

    pub fn contact_velocity_pre(&self) -> Vector2<f64> {
        contact_velocity(&self.contact, &self.state_pre.v)
    }

    pub fn contact_velocity_post(&self) -> Vector2<f64> {
        contact_velocity(&self.contact, &self.state_post.v)
    }

    pub fn is_approaching(&self) -> bool {
        self.contact_velocity_pre().y < 0.0
    }

    /// Checks the structural invariants every consumer relies on.
    pub fn validate(&self) -> Result<()> {
        self.body.validate()?;
        self.contact.validate()?;
        if !(self.state_pre.is_finite() && self.state_post.is_finite()) {
            return Err(Error::invalid(format!(
                "trial {} has non-finite state",
                self.trial_id
            )));
        }
        Ok(())
    }

    pub fn ellipse(&self) -> Result<EnergyEllipse> {
        EnergyEllipse::new(&self.body, &self.contact, &self.state_pre.v)
    }

    pub fn effective_inertia(&self) -> Result<nalgebra::Matrix2<f64>> {
        effective_contact_inertia(&self.body, &self.contact)
    }

    pub fn measured_impulse(&self) -> Result<Impulse2> {
        measured_impulse(self)
    }

    pub fn measured_wrench(&self) -> Wrench3 {
        measured_wrench(self)
    }
}

/// Rigid impulse explaining the trial's velocity change, `P = M_c Δv_c`.
pub fn measured_impulse(trial: &ImpactTrial) -> Result<Impulse2> {
    impulse_from_velocity_change(
        &trial.body,
        &trial.contact,
        &trial.state_pre.v,
        &trial.state_post.v,
    )
}

/// Wrench reproducing the trial's velocity change exactly.
pub fn measured_wrench(trial: &ImpactTrial) -> Wrench3 {
    wrench_from_velocity_change(
        &trial.body,
        &trial.contact,
        &trial.state_pre.v,
        &trial.state_post.v,
    )
}
