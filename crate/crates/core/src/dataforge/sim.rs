//! Penalty-contact drop simulator for an ellipse on a flat floor.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::config::GenConfig;
use crate::dynamics::{BodyParams, ContactGeometry, PlanarState};
use crate::error::{Error, Result};
use crate::trial::{ImpactTrial, TrialId};

/// Why a simulated drop did not yield a usable trial.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RejectReason {
    /// The contact point is not moving into the floor at onset.
    NotApproaching,
    /// No contact within the flight horizon.
    NoContact,
    /// Contact force reappeared after separation (tumbling or bouncing).
    MultiImpact,
    /// Contact lasted longer than the configured maximum.
    LongContact,
    /// Fewer integration steps than required spanned the contact.
    TooFewSteps,
}

impl std::fmt::Display for RejectReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RejectReason::NotApproaching => "not-approaching",
            RejectReason::NoContact => "no-contact",
            RejectReason::MultiImpact => "multi-impact",
            RejectReason::LongContact => "long-contact",
            RejectReason::TooFewSteps => "too-few-steps",
        })
    }
}

/// Ellipse geometry relative to the floor `y = 0`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Ellipse {
    pub a: f64,
    pub b: f64,
}

impl Ellipse {
    /// Offset from the centre to the lowest surface point at orientation `θ`
    /// (the deepest point once penetrating).
    pub fn support(&self, theta: f64) -> (f64, f64) {
        let (s, c) = theta.sin_cos();
        let h = (self.a * self.a * s * s + self.b * self.b * c * c).sqrt();
        // Body-frame point (a cos φ, b sin φ) minimising world height.
        let cp = -self.a * s / h;
        let sp = -self.b * c / h;
        let rx = self.a * cp * c - self.b * sp * s;
        (rx, -h)
    }
}

/// Per-step contact force and where it acts.
struct Contact {
    rx: f64,
    ry: f64,
    fn_: f64,
    ft: f64,
}

pub(crate) struct Simulator<'a> {
    config: &'a GenConfig,
    body: BodyParams,
    shape: Ellipse,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Outcome {
    pub pre: PlanarState,
    pub post: PlanarState,
    pub contact: ContactGeometry,
    pub steps: usize,
}

impl<'a> Simulator<'a> {
    pub fn new(config: &'a GenConfig) -> Result<Self> {
        let body = config.body.params()?;
        Ok(Self {
            config,
            body,
            shape: Ellipse {
                a: config.body.semi_major,
                b: config.body.semi_minor,
            },
        })
    }

    fn penetration(&self, q: &Vector3<f64>) -> (f64, f64, f64) {
        let (rx, ry) = self.shape.support(q.z);
        (-(q.y + ry), rx, ry)
    }

    fn contact(&self, q: &Vector3<f64>, v: &Vector3<f64>) -> Option<Contact> {
        let (depth, rx, ry) = self.penetration(q);
        if depth <= 0.0 {
            return None;
        }
        let c = &self.config.contact;
        let vt = v.x - ry * v.z;
        let vn = v.y + rx * v.z;
        let fn_ = (c.stiffness * depth - c.damping * vn).max(0.0);
        if fn_ == 0.0 {
            return None;
        }
        let ft = -c.friction * fn_ * (vt / c.friction_reg_velocity).tanh();
        Some(Contact { rx, ry, fn_, ft })
    }

    /// Kinetic plus gravitational energy.
    pub fn energy(&self, s: &PlanarState) -> f64 {
        let v = &s.v;
        0.5 * self.body.mass * (v.x * v.x + v.y * v.y)
            + 0.5 * self.body.inertia * v.z * v.z
            + self.body.mass * self.config.gravity * s.q.y
    }

    fn step(&self, q: &mut Vector3<f64>, v: &mut Vector3<f64>, contact: Option<&Contact>) {
        let dt = self.config.dt;
        let m = self.body.mass;
        let mut acc = Vector3::new(0.0, -self.config.gravity, 0.0);
        if let Some(c) = contact {
            acc.x += c.ft / m;
            acc.y += c.fn_ / m;
            acc.z += (c.rx * c.fn_ - c.ry * c.ft) / self.body.inertia;
        }
        *v += acc * dt;
        *q += *v * dt;
    }

    /// Integrate from `initial` through one contact event.
    pub fn run(&self, initial: &PlanarState) -> std::result::Result<Outcome, RejectReason> {
        let cfg = self.config;
        let mut q = initial.q;
        let mut v = initial.v;

        // Free flight up to the step before the force switches on.
        let flight_steps = (cfg.max_flight_time / cfg.dt).ceil() as usize;
        let mut onset = false;
        for _ in 0..=flight_steps {
            let (mut q1, mut v1) = (q, v);
            self.step(&mut q1, &mut v1, None);
            if self.penetration(&q1).0 > 0.0 {
                onset = true;
                break;
            }
            q = q1;
            v = v1;
        }
        if !onset {
            return Err(RejectReason::NoContact);
        }
        let pre = PlanarState::new(q, v);
        let (rx, ry) = self.shape.support(q.z);
        if !(v.y + rx * v.z < 0.0) {
            return Err(RejectReason::NotApproaching);
        }

        let max_steps = (cfg.max_contact_time / cfg.dt).ceil() as usize;
        let mut steps = 0;
        let mut touched = false;
        let post = loop {
            let c = self.contact(&q, &v);
            match c {
                Some(_) => touched = true,
                None if touched => {
                    let (_, rx, _) = self.penetration(&q);
                    if v.y + rx * v.z >= 0.0 {
                        break PlanarState::new(q, v);
                    }
                }
                None => {}
            }
            if steps >= max_steps {
                return Err(RejectReason::LongContact);
            }
            self.step(&mut q, &mut v, c.as_ref());
            steps += 1;
        };
        if steps < cfg.min_contact_steps {
            return Err(RejectReason::TooFewSteps);
        }

        // The body must leave cleanly.
        let window = (cfg.post_window / cfg.dt).ceil() as usize;
        let (mut q2, mut v2) = (q, v);
        for _ in 0..window {
            if self.contact(&q2, &v2).is_some() {
                return Err(RejectReason::MultiImpact);
            }
            self.step(&mut q2, &mut v2, None);
        }

        Ok(Outcome {
            pre,
            post,
            contact: ContactGeometry {
                r: nalgebra::Vector2::new(rx, ry),
            },
            steps,
        })
    }

    /// State whose lowest point just touches the floor.
    pub fn touching(&self, x: f64, theta: f64, v: Vector3<f64>) -> PlanarState {
        let (_, ry) = self.shape.support(theta);
        PlanarState::new(Vector3::new(x, -ry, theta), v)
    }
}

/// A simulated contact event with the energy bookkeeping needed to audit it.
#[derive(Clone, Debug, PartialEq)]
pub struct SimulatedEvent {
    pub trial: ImpactTrial,
    /// Kinetic plus gravitational energy at onset and at separation.
    pub energy_pre: f64,
    pub energy_post: f64,
    pub contact_steps: usize,
}

/// Simulate one drop from `initial_state` and package it as a trial.
///
/// The impact is recorded as instantaneous: the post-impact state keeps the
/// configuration at onset and only the velocity is taken at separation.
pub fn simulate_impact(config: &GenConfig, initial_state: &PlanarState, trial_id: TrialId) -> Result<ImpactTrial> {
    simulate_event(config, initial_state, trial_id).map(|e| e.trial)
}

pub fn simulate_event(config: &GenConfig, initial_state: &PlanarState, trial_id: TrialId) -> Result<SimulatedEvent> {
    config.validate()?;
    let sim = Simulator::new(config)?;
    let out = sim.run(initial_state).map_err(Error::Rejected)?;
    Ok(sim.package(&out, trial_id))
}

impl Simulator<'_> {
    pub fn package(&self, out: &Outcome, trial_id: TrialId) -> SimulatedEvent {
        SimulatedEvent {
            trial: ImpactTrial {
                trial_id,
                body: self.body,
                contact: out.contact,
                state_pre: out.pre,
                state_post: PlanarState::new(out.pre.q, out.post.v),
            },
            energy_pre: self.energy(&out.pre),
            energy_post: self.energy(&out.post),
            contact_steps: out.steps,
        }
    }
}
