use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dynamics::{
    contact_velocity, effective_contact_inertia, BodyParams, ContactGeometry, PlanarState,
};
use crate::error::{Error, Result};

/// Inputs to the learned models.
///
/// `XFull` is the raw state, `X1` the effective contact inertia plus the
/// incident contact velocity, `X2` the momentum `M_c v_c` that would arrest
/// the contact point.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureSpaceId {
    XFull,
    #[default]
    X1,
    X2,
}

impl FeatureSpaceId {
    pub fn dim(&self) -> usize {
        match self {
            FeatureSpaceId::XFull => 10,
            FeatureSpaceId::X1 => 5,
            FeatureSpaceId::X2 => 2,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FeatureSpaceId::XFull => "x-full",
            FeatureSpaceId::X1 => "x1",
            FeatureSpaceId::X2 => "x2",
        }
    }
}

impl fmt::Display for FeatureSpaceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureSpaceId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "x-full" | "xfull" | "x" => Ok(FeatureSpaceId::XFull),
            "x1" => Ok(FeatureSpaceId::X1),
            "x2" => Ok(FeatureSpaceId::X2),
            _ => Err(Error::invalid(format!("unknown feature space '{s}'"))),
        }
    }
}

/// Learned outputs: `Y1 = (P_t, P_n)` or `Y2 = (P_t, P_n, τ)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetSpaceId {
    #[default]
    Y1,
    Y2,
}

impl TargetSpaceId {
    pub fn dim(&self) -> usize {
        match self {
            TargetSpaceId::Y1 => 2,
            TargetSpaceId::Y2 => 3,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TargetSpaceId::Y1 => "y1",
            TargetSpaceId::Y2 => "y2",
        }
    }
}

impl fmt::Display for TargetSpaceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TargetSpaceId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "y1" => Ok(TargetSpaceId::Y1),
            "y2" => Ok(TargetSpaceId::Y2),
            _ => Err(Error::invalid(format!("unknown target space '{s}'"))),
        }
    }
}

pub fn extract_features(
    space: FeatureSpaceId,
    body: &BodyParams,
    contact: &ContactGeometry,
    state_pre: &PlanarState,
) -> Result<Vec<f64>> {
    let v = &state_pre.v;
    Ok(match space {
        FeatureSpaceId::XFull => {
            let q = &state_pre.q;
            vec![
                body.mass,
                body.inertia,
                contact.r.x,
                contact.r.y,
                q.x,
                q.y,
                q.z,
                v.x,
                v.y,
                v.z,
            ]
        }
        FeatureSpaceId::X1 => {
            let m_c = effective_contact_inertia(body, contact)?;
            let vc = contact_velocity(contact, v);
            vec![m_c[(0, 0)], m_c[(0, 1)], m_c[(1, 1)], vc.x, vc.y]
        }
        FeatureSpaceId::X2 => {
            let m_c = effective_contact_inertia(body, contact)?;
            let p = m_c * contact_velocity(contact, v);
            vec![p.x, p.y]
        }
    })
}
