use nalgebra::{Matrix2, Vector2, Vector3};

use crate::dynamics::{
    contact_compliance, contact_velocity, invert_spd2, BodyParams, ContactGeometry,
};
use crate::error::{Error, Result};

/// Everything a contact law needs, expressed in the contact frame.
///
/// `W = J M⁻¹ Jᵀ = [[a, b], [b, c]]` and the incident contact velocity is
/// `(u, w)` with `w < 0` for an approaching contact.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ContactFrame {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub m_c: Matrix2<f64>,
    pub u: f64,
    pub w: f64,
}

impl ContactFrame {
    pub fn new(body: &BodyParams, contact: &ContactGeometry, v_pre: &Vector3<f64>) -> Result<Self> {
        body.validate()?;
        contact.validate()?;
        let compliance = contact_compliance(body, contact);
        let m_c = invert_spd2(&compliance)
            .ok_or_else(|| Error::invalid("contact compliance is singular"))?;
        let vc = contact_velocity(contact, v_pre);
        if !(vc.y < 0.0) {
            return Err(Error::NoImpact(vc.y));
        }
        Ok(Self {
            a: compliance[(0, 0)],
            b: compliance[(0, 1)],
            c: compliance[(1, 1)],
            m_c,
            u: vc.x,
            w: vc.y,
        })
    }

    pub fn v(&self) -> Vector2<f64> {
        Vector2::new(self.u, self.w)
    }

    /// Post-impact contact velocity for impulse `p`.
    pub fn post(&self, p: &Vector2<f64>) -> Vector2<f64> {
        Vector2::new(
            self.u + self.a * p.x + self.b * p.y,
            self.w + self.b * p.x + self.c * p.y,
        )
    }

    /// `vᵀ M_c v`.
    pub fn incident_energy(&self) -> f64 {
        self.v().dot(&(self.m_c * self.v()))
    }

    /// Twice the change in contact-point kinetic energy, `2 P·v + Pᵀ W P`.
    pub fn energy_change(&self, p: &Vector2<f64>) -> f64 {
        let wp = Vector2::new(self.a * p.x + self.b * p.y, self.b * p.x + self.c * p.y);
        2.0 * p.dot(&self.v()) + p.dot(&wp)
    }

    /// Whether `p` neither adds energy nor leaves the contact approaching,
    /// up to a relative slack.
    pub fn admits(&self, p: &Vector2<f64>, slack: f64) -> bool {
        let speed = self.v().norm();
        self.energy_change(p) <= slack * self.incident_energy() && self.post(p).y >= -slack * speed
    }

    /// Coulomb friction can hold the contact stuck: the sticking line lies
    /// inside the friction cone.
    pub fn stick_sustainable(&self, mu: f64) -> bool {
        self.b.abs() <= mu * self.a * (1.0 + 1e-12)
    }
}
