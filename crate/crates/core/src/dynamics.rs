//! Planar rigid-body impact kinematics and dynamics.
//!
//! Frame convention: the surface is the world x-axis. The tangential
//! direction `t` is world x and the normal direction `n` is world y, pointing
//! away from the surface. Contact offsets `r` are expressed in the inertial
//! frame, relative to the centre of mass.

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used by [`EnergyEllipse::classify`] when none is given.
pub const DEFAULT_ADMISSIBILITY_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipseShape {
    pub semi_major: f64,
    pub semi_minor: f64,
}

/// Mass properties of the impacting body.
///
/// The shape is only needed by the synthetic generator; the contact models see
/// nothing but `mass` and `inertia`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BodyParams {
    pub mass: f64,
    /// Second moment of inertia about the centre of mass.
    pub inertia: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<EllipseShape>,
}

impl BodyParams {
    pub fn new(mass: f64, inertia: f64) -> Result<Self> {
        let body = Self {
            mass,
            inertia,
            shape: None,
        };
        body.validate()?;
        Ok(body)
    }

    /// Uniform-density ellipse: `I = m (a² + b²) / 4`.
    pub fn uniform_ellipse(mass: f64, semi_major: f64, semi_minor: f64) -> Result<Self> {
        let body = Self {
            mass,
            inertia: mass * (semi_major * semi_major + semi_minor * semi_minor) / 4.0,
            shape: Some(EllipseShape {
                semi_major,
                semi_minor,
            }),
        };
        body.validate()?;
        Ok(body)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass.is_finite() && self.mass > 0.0) {
            return Err(Error::invalid(format!("mass must be positive, got {}", self.mass)));
        }
        if !(self.inertia.is_finite() && self.inertia > 0.0) {
            return Err(Error::invalid(format!(
                "inertia must be positive, got {}",
                self.inertia
            )));
        }
        if let Some(shape) = self.shape {
            if !(shape.semi_minor > 0.0 && shape.semi_major >= shape.semi_minor) {
                return Err(Error::invalid(format!(
                    "ellipse axes must satisfy a >= b > 0, got a={} b={}",
                    shape.semi_major, shape.semi_minor
                )));
            }
        }
        Ok(())
    }

    /// Radius of gyration `sqrt(I / m)`, used to put angular velocity in m/s.
    pub fn characteristic_length(&self) -> f64 {
        (self.inertia / self.mass).sqrt()
    }
}

/// Configuration `(x, y, θ)` and velocity `(ẋ, ẏ, θ̇)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanarState {
    pub q: Vector3<f64>,
    pub v: Vector3<f64>,
}

impl PlanarState {
    pub fn new(q: Vector3<f64>, v: Vector3<f64>) -> Self {
        Self { q, v }
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(self.v.iter()).all(|x| x.is_finite())
    }
}

/// Contact-point offset from the centre of mass, inertial frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactGeometry {
    pub r: Vector2<f64>,
}

impl ContactGeometry {
    pub fn new(rx: f64, ry: f64) -> Result<Self> {
        let contact = Self {
            r: Vector2::new(rx, ry),
        };
        contact.validate()?;
        Ok(contact)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r.iter().all(|x| x.is_finite()) && self.r.norm() > 0.0) {
            return Err(Error::invalid(format!(
                "contact offset must be finite and nonzero, got ({}, {})",
                self.r.x, self.r.y
            )));
        }
        Ok(())
    }
}

/// Linear impulse at the contact point, `(P_t, P_n)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Impulse2 {
    pub tangential: f64,
    pub normal: f64,
}

impl Impulse2 {
    pub const ZERO: Impulse2 = Impulse2 {
        tangential: 0.0,
        normal: 0.0,
    };

    pub fn new(tangential: f64, normal: f64) -> Self {
        Self { tangential, normal }
    }

    pub fn from_vector(p: Vector2<f64>) -> Self {
        Self::new(p.x, p.y)
    }

    pub fn as_vector(&self) -> Vector2<f64> {
        Vector2::new(self.tangential, self.normal)
    }

    pub fn to_wrench(self) -> Wrench3 {
        Wrench3::new(self.tangential, self.normal, 0.0)
    }
}

/// Linear impulse plus an angular impulse about the contact point.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Wrench3 {
    pub tangential: f64,
    pub normal: f64,
    pub torque: f64,
}

impl Wrench3 {
    pub fn new(tangential: f64, normal: f64, torque: f64) -> Self {
        Self {
            tangential,
            normal,
            torque,
        }
    }

    pub fn from_vector(w: Vector3<f64>) -> Self {
        Self::new(w.x, w.y, w.z)
    }

    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.tangential, self.normal, self.torque)
    }
}

pub fn inertia_matrix(body: &BodyParams) -> Result<Matrix3<f64>> {
    body.validate()?;
    Ok(Matrix3::from_diagonal(&Vector3::new(
        body.mass,
        body.mass,
        body.inertia,
    )))
}

/// `J = [[1, 0, -r_y], [0, 1, r_x]]`, so that `J v` is the contact-point velocity.
pub fn contact_jacobian(contact: &ContactGeometry) -> Matrix2x3<f64> {
    Matrix2x3::new(1.0, 0.0, -contact.r.y, 0.0, 1.0, contact.r.x)
}

/// Contact Jacobian augmented with a pure rotation row, used for wrenches.
/// Always invertible.
pub fn wrench_jacobian(contact: &ContactGeometry) -> Matrix3<f64> {
    Matrix3::new(
        1.0,
        0.0,
        -contact.r.y,
        0.0,
        1.0,
        contact.r.x,
        0.0,
        0.0,
        1.0,
    )
}

pub fn contact_velocity(contact: &ContactGeometry, v: &Vector3<f64>) -> Vector2<f64> {
    Vector2::new(v.x - contact.r.y * v.z, v.y + contact.r.x * v.z)
}

/// Inverse effective inertia `J M⁻¹ Jᵀ`, written out.
pub fn contact_compliance(body: &BodyParams, contact: &ContactGeometry) -> Matrix2<f64> {
    let (rx, ry) = (contact.r.x, contact.r.y);
    let inv_m = 1.0 / body.mass;
    let inv_i = 1.0 / body.inertia;
    Matrix2::new(
        inv_m + ry * ry * inv_i,
        -rx * ry * inv_i,
        -rx * ry * inv_i,
        inv_m + rx * rx * inv_i,
    )
}

/// Effective inertia at the contact point, `M_c = (J M⁻¹ Jᵀ)⁻¹`.
pub fn effective_contact_inertia(
    body: &BodyParams,
    contact: &ContactGeometry,
) -> Result<Matrix2<f64>> {
    body.validate()?;
    let w = contact_compliance(body, contact);
    invert_spd2(&w).ok_or_else(|| Error::invalid("contact compliance is singular"))
}

pub(crate) fn invert_spd2(w: &Matrix2<f64>) -> Option<Matrix2<f64>> {
    let det = w[(0, 0)] * w[(1, 1)] - w[(0, 1)] * w[(1, 0)];
    if !(det.is_finite() && det > 0.0 && w[(0, 0)] > 0.0) {
        return None;
    }
    Some(Matrix2::new(w[(1, 1)], -w[(0, 1)], -w[(1, 0)], w[(0, 0)]) / det)
}

/// `v⁺ = v⁻ + M⁻¹ Jᵀ P`.
pub fn apply_impulse(
    body: &BodyParams,
    contact: &ContactGeometry,
    v_pre: &Vector3<f64>,
    p: Impulse2,
) -> Vector3<f64> {
    let (rx, ry) = (contact.r.x, contact.r.y);
    v_pre
        + Vector3::new(
            p.tangential / body.mass,
            p.normal / body.mass,
            (-ry * p.tangential + rx * p.normal) / body.inertia,
        )
}

/// `v⁺ = v⁻ + M⁻¹ J_wᵀ W`; with zero torque this is exactly [`apply_impulse`].
pub fn apply_wrench(
    body: &BodyParams,
    contact: &ContactGeometry,
    v_pre: &Vector3<f64>,
    w: Wrench3,
) -> Vector3<f64> {
    let (rx, ry) = (contact.r.x, contact.r.y);
    v_pre
        + Vector3::new(
            w.tangential / body.mass,
            w.normal / body.mass,
            (-ry * w.tangential + rx * w.normal + w.torque) / body.inertia,
        )
}

/// Impulse that best explains an observed velocity change, `P = M_c J Δv`.
///
/// This is the least-squares solution of `Δv = M⁻¹ Jᵀ P` in the kinetic-energy
/// metric, so it is exact whenever the change is rigid-consistent.
pub fn impulse_from_velocity_change(
    body: &BodyParams,
    contact: &ContactGeometry,
    v_pre: &Vector3<f64>,
    v_post: &Vector3<f64>,
) -> Result<Impulse2> {
    let m_c = effective_contact_inertia(body, contact)?;
    let dvc = contact_velocity(contact, &(v_post - v_pre));
    Ok(Impulse2::from_vector(m_c * dvc))
}

/// Wrench that reproduces an observed velocity change exactly,
/// `W = J_w⁻ᵀ M Δv`.
pub fn wrench_from_velocity_change(
    body: &BodyParams,
    contact: &ContactGeometry,
    v_pre: &Vector3<f64>,
    v_post: &Vector3<f64>,
) -> Wrench3 {
    let dv = v_post - v_pre;
    let pt = body.mass * dv.x;
    let pn = body.mass * dv.y;
    // Back substitution through the triangular J_wᵀ.
    let torque = body.inertia * dv.z + contact.r.y * pt - contact.r.x * pn;
    Wrench3::new(pt, pn, torque)
}

/// Which side of the sticking line a post-impact contact velocity lies on,
/// relative to the incident slip direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SlipSide {
    /// Still slipping the way it came in (or no incident slip to compare with).
    Forward,
    /// Tangential contact velocity is zero.
    Sticking,
    /// Slip direction reversed: back-spin.
    Reversed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ImpulseRegion {
    Admissible,
    EnergyViolating,
    Penetrating,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Admissibility {
    pub region: ImpulseRegion,
    pub alpha: f64,
    pub energy_ok: bool,
    pub penetration_ok: bool,
    pub post_velocity: Vector2<f64>,
    pub slip_side: SlipSide,
}

impl Admissibility {
    pub fn is_admissible(&self) -> bool {
        self.region == ImpulseRegion::Admissible
    }
}

/// Set of impulses that do not create contact-point kinetic energy.
///
/// `(P + M_c v)ᵀ M_c⁻¹ (P + M_c v) = α vᵀ M_c v`, so the zero impulse sits on
/// the boundary (α = 1) and full arrest `P = -M_c v` at the centre (α = 0).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyEllipse {
    m_c: Matrix2<f64>,
    compliance: Matrix2<f64>,
    v_incident: Vector2<f64>,
    incident_energy: f64,
}

impl EnergyEllipse {
    pub fn new(
        body: &BodyParams,
        contact: &ContactGeometry,
        v_pre: &Vector3<f64>,
    ) -> Result<Self> {
        let m_c = effective_contact_inertia(body, contact)?;
        Self::from_parts(m_c, contact_velocity(contact, v_pre))
    }

    pub fn from_parts(m_c: Matrix2<f64>, v_incident: Vector2<f64>) -> Result<Self> {
        let compliance = invert_spd2(&m_c)
            .ok_or_else(|| Error::invalid("effective contact inertia is not positive definite"))?;
        let incident_energy = v_incident.dot(&(m_c * v_incident));
        if !(incident_energy > 0.0 && incident_energy.is_finite()) {
            return Err(Error::Degenerate(
                "incident contact velocity is zero; the energy ellipse is a point".into(),
            ));
        }
        Ok(Self {
            m_c,
            compliance,
            v_incident,
            incident_energy,
        })
    }

    pub fn m_c(&self) -> &Matrix2<f64> {
        &self.m_c
    }

    pub fn compliance(&self) -> &Matrix2<f64> {
        &self.compliance
    }

    pub fn v_incident(&self) -> &Vector2<f64> {
        &self.v_incident
    }

    /// `vᵀ M_c v`, twice the incident contact-point kinetic energy.
    pub fn incident_energy(&self) -> f64 {
        self.incident_energy
    }

    /// The full-arrest impulse `-M_c v`.
    pub fn center(&self) -> Vector2<f64> {
        -(self.m_c * self.v_incident)
    }

    pub fn post_velocity(&self, p: &Vector2<f64>) -> Vector2<f64> {
        self.v_incident + self.compliance * p
    }

    /// Energy-retention ratio of an impulse.
    pub fn alpha(&self, p: &Vector2<f64>) -> f64 {
        let shifted = p - self.center();
        shifted.dot(&(self.compliance * shifted)) / self.incident_energy
    }

    pub fn classify(&self, p: &Vector2<f64>, tol: f64) -> Admissibility {
        let alpha = self.alpha(p);
        let post = self.post_velocity(p);
        let speed = self.v_incident.norm();
        let energy_ok = alpha <= 1.0 + tol;
        let penetration_ok = post.y >= -tol * speed;
        let region = if !energy_ok {
            ImpulseRegion::EnergyViolating
        } else if !penetration_ok {
            ImpulseRegion::Penetrating
        } else {
            ImpulseRegion::Admissible
        };
        let u = self.v_incident.x;
        let slip_side = if post.x.abs() <= tol * speed {
            SlipSide::Sticking
        } else if u != 0.0 && post.x.signum() != u.signum() {
            SlipSide::Reversed
        } else {
            SlipSide::Forward
        };
        Admissibility {
            region,
            alpha,
            energy_ok,
            penetration_ok,
            post_velocity: post,
            slip_side,
        }
    }

    pub fn is_admissible(&self, p: &Vector2<f64>, tol: f64) -> bool {
        self.classify(p, tol).is_admissible()
    }
}

/// Free-function form of [`EnergyEllipse::alpha`].
pub fn energy_alpha(ellipse: &EnergyEllipse, p: Impulse2) -> f64 {
    ellipse.alpha(&p.as_vector())
}

/// Free-function form of [`EnergyEllipse::classify`].
pub fn is_admissible(ellipse: &EnergyEllipse, p: Impulse2, tol: f64) -> Admissibility {
    ellipse.classify(&p.as_vector(), tol)
}

/// How velocity errors are measured.
///
/// `Linear` compares the centre-of-mass translational velocity only.
/// `Scaled` adds the angular component multiplied by the radius of gyration
/// so all three components are in m/s.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VelocityMetric {
    #[default]
    Linear,
    Scaled,
}

impl VelocityMetric {
    /// Per-component squared weights applied to `(ẋ, ẏ, θ̇)`.
    pub fn weights(&self, body: &BodyParams) -> Vector3<f64> {
        match self {
            VelocityMetric::Linear => Vector3::new(1.0, 1.0, 0.0),
            VelocityMetric::Scaled => Vector3::new(1.0, 1.0, body.inertia / body.mass),
        }
    }

    pub fn norm(&self, body: &BodyParams, v: &Vector3<f64>) -> f64 {
        let w = self.weights(body);
        (w.x * v.x * v.x + w.y * v.y * v.y + w.z * v.z * v.z).sqrt()
    }
}
