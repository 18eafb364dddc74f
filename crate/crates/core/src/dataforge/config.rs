use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::BodyParams;
use crate::error::{Error, Result};

/// Uniform-density ellipse body.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodyConfig {
    pub mass: f64,
    pub semi_major: f64,
    pub semi_minor: f64,
    /// Overrides the uniform-density inertia when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inertia: Option<f64>,
}

impl Default for BodyConfig {
    fn default() -> Self {
        Self {
            mass: 0.04,
            semi_major: 0.05,
            semi_minor: 0.035,
            inertia: None,
        }
    }
}

impl BodyConfig {
    /// Mass properties as recorded in trials (shape stripped: the dataset
    /// schema carries only `m` and `I`).
    pub fn params(&self) -> Result<BodyParams> {
        let uniform = BodyParams::uniform_ellipse(self.mass, self.semi_major, self.semi_minor)?;
        BodyParams::new(self.mass, self.inertia.unwrap_or(uniform.inertia))
    }
}

/// Penalty contact law.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContactConfig {
    /// Spring constant `k_c`, N/m.
    pub stiffness: f64,
    /// Damper constant `c`, N·s/m.
    pub damping: f64,
    /// True Coulomb coefficient.
    pub friction: f64,
    /// Velocity scale of the `tanh` friction regularisation, m/s.
    pub friction_reg_velocity: f64,
}

impl Default for ContactConfig {
    fn default() -> Self {
        Self {
            stiffness: 1e6,
            damping: 50.0,
            friction: 0.3,
            friction_reg_velocity: 0.01,
        }
    }
}

/// Closed sampling interval `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Range(pub f64, pub f64);

impl Range {
    pub fn validate(&self, name: &str) -> Result<()> {
        if !(self.0.is_finite() && self.1.is_finite() && self.0 <= self.1) {
            return Err(Error::Config(format!(
                "{name}: range [{}, {}] is not ordered and finite",
                self.0, self.1
            )));
        }
        Ok(())
    }

    pub fn sample(&self, u: f64) -> f64 {
        self.0 + (self.1 - self.0) * u
    }
}

/// Distribution of initial conditions. The body starts with its lowest point
/// on the floor and the vertical speed of a free fall from `drop_height`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    /// m.
    pub drop_height: Range,
    /// Horizontal velocity, m/s.
    pub horizontal_velocity: Range,
    /// rad/s.
    pub angular_velocity: Range,
    /// rad.
    pub orientation: Range,
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self {
            drop_height: Range(0.05, 0.3),
            horizontal_velocity: Range(-0.5, 0.5),
            angular_velocity: Range(-10.0, 10.0),
            orientation: Range(0.0, std::f64::consts::TAU),
        }
    }
}

/// Gaussian measurement noise, one standard deviation per velocity
/// component, applied to both pre- and post-impact velocities.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub vx: f64,
    pub vy: f64,
    pub omega: f64,
}

impl NoiseConfig {
    pub fn is_zero(&self) -> bool {
        self.vx == 0.0 && self.vy == 0.0 && self.omega == 0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub n_trials: usize,
    pub seed: u64,
    pub body: BodyConfig,
    pub contact: ContactConfig,
    pub initial: InitialConfig,
    pub noise: NoiseConfig,
    /// Integrator step, s.
    pub dt: f64,
    pub gravity: f64,
    /// Longest admissible contact phase, s.
    pub max_contact_time: f64,
    /// Free flight before the floor is declared missed, s.
    pub max_flight_time: f64,
    /// Time after separation during which renewed contact rejects the trial, s.
    pub post_window: f64,
    pub min_contact_steps: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            n_trials: 500,
            seed: 0,
            body: BodyConfig::default(),
            contact: ContactConfig::default(),
            initial: InitialConfig::default(),
            noise: NoiseConfig::default(),
            dt: 1e-6,
            gravity: 9.81,
            max_contact_time: 0.01,
            max_flight_time: 1.0,
            post_window: 0.02,
            min_contact_steps: 50,
        }
    }
}

impl GenConfig {
    /// Softer contact for which a single rigid impulse visibly fails to
    /// explain the outcome: the body rolls noticeably while in contact.
    pub fn compliant() -> Self {
        Self {
            contact: ContactConfig {
                stiffness: 1e4,
                damping: 8.0,
                friction: 0.3,
                friction_reg_velocity: 0.01,
            },
            dt: 2e-6,
            ..Self::default()
        }
    }

    /// Shortest undamped half-period over all contact points on the body,
    /// `π sqrt(m_min / k)` with `m_min` the smallest effective normal mass.
    pub fn min_contact_duration(&self) -> Result<f64> {
        let body = self.body.params()?;
        let a = self.body.semi_major;
        let compliance = 1.0 / body.mass + a * a / body.inertia;
        Ok(std::f64::consts::PI * (1.0 / (compliance * self.contact.stiffness)).sqrt())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |x: f64, name: &str| {
            if x.is_finite() && x > 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {x}")))
            }
        };
        let non_negative = |x: f64, name: &str| {
            if x.is_finite() && x >= 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be non-negative, got {x}")))
            }
        };
        positive(self.body.mass, "body.mass")?;
        positive(self.body.semi_minor, "body.semi_minor")?;
        if self.body.semi_major < self.body.semi_minor {
            return Err(Error::Config("body.semi_major must be >= body.semi_minor".into()));
        }
        if let Some(i) = self.body.inertia {
            positive(i, "body.inertia")?;
        }
        positive(self.contact.stiffness, "contact.stiffness")?;
        non_negative(self.contact.damping, "contact.damping")?;
        non_negative(self.contact.friction, "contact.friction")?;
        positive(self.contact.friction_reg_velocity, "contact.friction_reg_velocity")?;
        positive(self.dt, "dt")?;
        non_negative(self.gravity, "gravity")?;
        positive(self.max_contact_time, "max_contact_time")?;
        positive(self.max_flight_time, "max_flight_time")?;
        non_negative(self.post_window, "post_window")?;
        non_negative(self.noise.vx, "noise.vx")?;
        non_negative(self.noise.vy, "noise.vy")?;
        non_negative(self.noise.omega, "noise.omega")?;
        self.initial.drop_height.validate("initial.drop_height")?;
        self.initial.horizontal_velocity.validate("initial.horizontal_velocity")?;
        self.initial.angular_velocity.validate("initial.angular_velocity")?;
        self.initial.orientation.validate("initial.orientation")?;
        if self.initial.drop_height.0 < 0.0 {
            return Err(Error::Config("initial.drop_height must be non-negative".into()));
        }
        let steps = self.min_contact_duration()? / self.dt;
        if steps < self.min_contact_steps as f64 {
            return Err(Error::Config(format!(
                "dt = {} resolves the shortest contact with only {steps:.0} steps; need {}",
                self.dt, self.min_contact_steps
            )));
        }
        Ok(())
    }

    /// TOML, or JSON when the extension is `.json`.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let config = if is_json(path) {
            serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        } else {
            Self::from_toml(&text).map_err(|e| match e {
                Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
                other => other,
            })?
        };
        Ok(config)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }
}

pub(crate) fn is_json(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        GenConfig::default().validate().unwrap();
        GenConfig::compliant().validate().unwrap();
        let d = GenConfig::default().min_contact_duration().unwrap();
        assert!(d / 1e-6 > 100.0, "{d}");
    }

    #[test]
    fn coarse_step_rejected() {
        let cfg = GenConfig {
            dt: 1e-4,
            ..GenConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn toml_round_trip_and_partial() {
        let cfg = GenConfig::compliant();
        let back = GenConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);

        let partial = GenConfig::from_toml("seed = 7\n[contact]\nstiffness = 2e6\ndamping = 10.0\nfriction = 0.5\nfriction_reg_velocity = 0.01\n").unwrap();
        assert_eq!(partial.seed, 7);
        assert_eq!(partial.contact.friction, 0.5);
        assert_eq!(partial.dt, 1e-6);
    }

    #[test]
    fn parse_errors_name_the_location() {
        let err = GenConfig::from_toml("seed = 1\ndt = \"fast\"\n").unwrap_err().to_string();
        assert!(err.contains("line 2") && err.contains("dt"), "{err}");
        let err = GenConfig::from_toml("n_trails = 3\n").unwrap_err().to_string();
        assert!(err.contains("n_trails"), "{err}");
    }
}
