//! Ideal-rigid-body bound: the admissible impulse that best explains an
//! observed outcome.
//!
//! The objective `‖S (Δv - M⁻¹Jᵀ P)‖²` is a convex quadratic in `P` and the
//! admissible set (energy ellipse ∩ non-penetration half-plane) is convex.
//! Mapping the ellipse to the unit disk, the half-plane boundary passes
//! through the centre, so the feasible set is a half-disk and the minimiser is
//! one of: the unconstrained optimum, a point on the diameter, or a point on
//! the arc.

use nalgebra::{Matrix2, Matrix3x2, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::frame::ContactFrame;
use crate::dynamics::{apply_impulse, BodyParams, ContactGeometry, Impulse2, VelocityMetric};
use crate::error::{Error, Result};
use crate::trial::ImpactTrial;

const ARC_SAMPLES: usize = 720;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IrbMode {
    /// Restrict the impulse to the admissible set.
    #[default]
    Admissible,
    /// Plain least squares over all linear impulses.
    Unconstrained,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IrbResult {
    pub impulse: Impulse2,
    pub v_post: Vector3<f64>,
    /// Attained residual `‖S (v⁺ - v̂⁺)‖`, not normalised.
    pub error: f64,
}

pub fn irb_bound(trial: &ImpactTrial, metric: VelocityMetric) -> Result<IrbResult> {
    irb_bound_for(
        &trial.body,
        &trial.contact,
        trial.v_pre(),
        trial.v_post(),
        metric,
        IrbMode::Admissible,
    )
}

pub fn irb_bound_for(
    body: &BodyParams,
    contact: &ContactGeometry,
    v_pre: &Vector3<f64>,
    v_post: &Vector3<f64>,
    metric: VelocityMetric,
    mode: IrbMode,
) -> Result<IrbResult> {
    let frame = ContactFrame::new(body, contact, v_pre)?;
    let weights = metric.weights(body);
    let s = weights.map(f64::sqrt);
    // S M⁻¹ Jᵀ
    let sb = Matrix3x2::new(
        s.x / body.mass,
        0.0,
        0.0,
        s.y / body.mass,
        -s.z * contact.r.y / body.inertia,
        s.z * contact.r.x / body.inertia,
    );
    let target = (v_post - v_pre).component_mul(&s);

    let p = match mode {
        IrbMode::Unconstrained => least_squares(&sb, &target)?,
        IrbMode::Admissible => constrained(&frame, &sb, &target)?,
    };
    let impulse = Impulse2::from_vector(p);
    let v_hat = apply_impulse(body, contact, v_pre, impulse);
    let error = metric.norm(body, &(v_hat - v_post));
    Ok(IrbResult {
        impulse,
        v_post: v_hat,
        error,
    })
}

fn least_squares(g: &Matrix3x2<f64>, d: &Vector3<f64>) -> Result<Vector2<f64>> {
    let h: Matrix2<f64> = g.transpose() * g;
    h.try_inverse()
        .map(|hi| hi * (g.transpose() * d))
        .ok_or_else(|| Error::Degenerate("velocity metric does not see the impulse".into()))
}

fn constrained(f: &ContactFrame, sb: &Matrix3x2<f64>, target: &Vector3<f64>) -> Result<Vector2<f64>> {
    // Ellipse: (P - C)ᵀ W (P - C) <= R², W = L Lᵀ, P = C + R L⁻ᵀ z, |z| <= 1.
    let center = -(f.m_c * f.v());
    let radius = f.incident_energy().sqrt();
    if !(radius > 0.0) {
        return Err(Error::Degenerate("incident contact velocity is zero".into()));
    }
    let l11 = f.a.sqrt();
    let l21 = f.b / l11;
    let l22 = (f.c - l21 * l21).sqrt();
    let l = Matrix2::new(l11, 0.0, l21, l22);
    let l_inv_t = l
        .try_inverse()
        .ok_or_else(|| Error::invalid("singular contact compliance"))?
        .transpose();
    let to_impulse = l_inv_t * radius;
    let g: Matrix3x2<f64> = sb * to_impulse;
    let d: Vector3<f64> = target - sb * center;
    // Post normal velocity is R (L z)_n, so non-penetration is n·z >= 0.
    let n = Vector2::new(l21, l22).normalize();

    let cost = |z: &Vector2<f64>| (d - g * z).norm_squared();
    let mut best_z: Option<Vector2<f64>> = None;
    let mut best_cost = f64::INFINITY;
    let mut offer = |z: Vector2<f64>, best_z: &mut Option<Vector2<f64>>| {
        let c = cost(&z);
        if c < best_cost {
            best_cost = c;
            *best_z = Some(z);
        }
    };

    if let Ok(z0) = least_squares(&g, &d) {
        if z0.norm_squared() <= 1.0 && n.dot(&z0) >= 0.0 {
            return Ok(center + to_impulse * z0);
        }
    }

    // Diameter of the half-disk.
    let e = Vector2::new(-n.y, n.x);
    let ge = g * e;
    let denom = ge.norm_squared();
    let t = if denom > 0.0 {
        (ge.dot(&d) / denom).clamp(-1.0, 1.0)
    } else {
        0.0
    };
    offer(e * t, &mut best_z);

    // Arc: φ ∈ [φ_n - π/2, φ_n + π/2].
    let phi_n = n.y.atan2(n.x);
    let lo = phi_n - std::f64::consts::FRAC_PI_2;
    let hi = phi_n + std::f64::consts::FRAC_PI_2;
    let at = |phi: f64| Vector2::new(phi.cos(), phi.sin());
    let step = (hi - lo) / (ARC_SAMPLES - 1) as f64;
    let samples: Vec<f64> = (0..ARC_SAMPLES)
        .map(|i| cost(&at(lo + step * i as f64)))
        .collect();
    for i in 0..ARC_SAMPLES {
        let left = if i == 0 { f64::INFINITY } else { samples[i - 1] };
        let right = if i + 1 == ARC_SAMPLES {
            f64::INFINITY
        } else {
            samples[i + 1]
        };
        if samples[i] <= left && samples[i] <= right {
            let a = (lo + step * (i as f64 - 1.0)).max(lo);
            let b = (lo + step * (i as f64 + 1.0)).min(hi);
            let phi = golden_section(|phi| cost(&at(phi)), a, b);
            offer(at(phi), &mut best_z);
        }
    }

    let z = best_z.ok_or_else(|| Error::invalid("no feasible impulse found"))?;
    Ok(center + to_impulse * z)
}

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - ratio * (b - a);
    let mut x2 = a + ratio * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..200 {
        if (b - a).abs() < 1e-14 {
            break;
        }
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - ratio * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + ratio * (b - a);
            f2 = f(x2);
        }
    }
    let mid = 0.5 * (a + b);
    // The bracket ends are candidates too.
    [a, mid, b]
        .into_iter()
        .min_by(|x, y| f(*x).total_cmp(&f(*y)))
        .unwrap_or(mid)
}
