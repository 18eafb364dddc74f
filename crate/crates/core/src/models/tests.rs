use std::collections::BTreeMap;

use approx::assert_relative_eq;
use nalgebra::{Vector2, Vector3};
use proptest::prelude::*;

use super::*;
use crate::dynamics::{
    contact_velocity, effective_contact_inertia, EnergyEllipse, VelocityMetric,
    DEFAULT_ADMISSIBILITY_TOL,
};
use crate::evaluation::{velocity_error, ErrorMetric};
use crate::trial::ImpactTrial;

fn unit_body() -> BodyParams {
    BodyParams::new(1.0, 1.0).unwrap()
}

fn central() -> (BodyParams, ContactGeometry, Vector3<f64>) {
    (
        unit_body(),
        ContactGeometry::new(0.0, -1.0).unwrap(),
        Vector3::new(0.0, -1.0, 0.0),
    )
}

fn params(mu: f64, epsilon: f64) -> ModelParams {
    ModelParams::new(mu, epsilon).unwrap()
}

/// Body-frame velocity whose contact-point velocity is `(u, w)`.
fn velocity_for(contact: &ContactGeometry, u: f64, w: f64, omega: f64) -> Vector3<f64> {
    Vector3::new(u + contact.r.y * omega, w - contact.r.x * omega, omega)
}

fn trial(body: BodyParams, contact: ContactGeometry, v_pre: Vector3<f64>, v_post: Vector3<f64>) -> ImpactTrial {
    ImpactTrial {
        trial_id: 0,
        body,
        contact,
        state_pre: crate::dynamics::PlanarState::new(Vector3::zeros(), v_pre),
        state_post: crate::dynamics::PlanarState::new(Vector3::zeros(), v_post),
    }
}

#[test]
fn central_frictionless_all_models_coincide() {
    let (body, contact, v) = central();
    for eps in [0.0, 0.25, 0.5, 1.0] {
        for model in ModelId::ALL {
            let p = predict_impulse(model, &params(0.0, eps), &body, &contact, &v).unwrap();
            assert_eq!(p.tangential, 0.0, "{model}");
            assert_relative_eq!(p.normal, 1.0 + eps, epsilon = 1e-12);
        }
    }
}

#[test]
fn central_frictionless_post_velocity() {
    let (body, contact, v) = central();
    for model in ModelId::ALL {
        let v_post = predict_post_velocity(model, &params(0.0, 0.5), &body, &contact, &v).unwrap();
        assert_relative_eq!(v_post, Vector3::new(0.0, 0.5, 0.0), epsilon = 1e-12);
    }
}

#[test]
fn full_stick_at_maximum_compression() {
    let (body, contact, v) = central();
    for model in ModelId::ALL {
        let v_post = predict_post_velocity(model, &params(2.0, 0.0), &body, &contact, &v).unwrap();
        let vc = contact_velocity(&contact, &v_post);
        assert!(vc.norm() < 1e-12, "{model}: {vc:?}");
    }
}

#[test]
fn newton_family_reverses_normal_velocity() {
    let body = BodyParams::new(0.7, 0.05).unwrap();
    let contact = ContactGeometry::new(0.0, -0.3).unwrap();
    let v = Vector3::new(0.0, -2.0, 0.0);
    for model in [ModelId::ApNewton, ModelId::Whittaker] {
        for eps in [0.1, 0.5, 0.9] {
            let v_post = predict_post_velocity(model, &params(0.0, eps), &body, &contact, &v).unwrap();
            let wc = contact_velocity(&contact, &v_post).y;
            assert_relative_eq!(wc, 2.0 * eps, epsilon = 1e-10);
        }
    }
}

#[test]
fn elastic_frictionless_impact_is_on_the_ellipse() {
    let (body, contact, v) = central();
    let ellipse = EnergyEllipse::new(&body, &contact, &v).unwrap();
    for model in ModelId::ALL {
        let p = predict_impulse(model, &params(0.0, 1.0), &body, &contact, &v).unwrap();
        assert_relative_eq!(ellipse.alpha(&p.as_vector()), 1.0, epsilon = 1e-10);
    }
}

#[test]
fn not_approaching_is_rejected() {
    let (body, contact, _) = central();
    let v = Vector3::new(0.3, 0.2, 0.0);
    let err = predict_impulse(ModelId::Whittaker, &params(0.3, 0.5), &body, &contact, &v);
    assert!(matches!(err, Err(Error::NoImpact(_))));
}

#[test]
fn invalid_params_rejected() {
    assert!(ModelParams::new(-0.1, 0.5).is_err());
    assert!(ModelParams::new(2.5, 0.5).is_err());
    assert!(ModelParams::new(0.1, 1.5).is_err());
    assert!(ModelParams::new(f64::NAN, 0.5).is_err());
}

#[test]
fn model_names_round_trip() {
    for model in ModelId::ALL {
        assert_eq!(model.name().parse::<ModelId>().unwrap(), model);
        let json = serde_json::to_string(&model).unwrap();
        assert_eq!(json, format!("\"{}\"", model.name()));
    }
    assert_eq!("AP_Newton".parse::<ModelId>().unwrap(), ModelId::ApNewton);
    assert!("newton".parse::<ModelId>().is_err());
}

#[test]
fn bounds_clamp() {
    let b = ParamBounds::default();
    assert_eq!(b.clamp(-1.0, 2.0), ModelParams { mu: 0.0, epsilon: 1.0 });
    assert_eq!(b.clamp(f64::NAN, 0.4), ModelParams { mu: 0.0, epsilon: 0.4 });
    assert!(ParamBounds { mu: (1.0, 0.5), epsilon: (0.0, 1.0) }.validate().is_err());
}

/// Step-by-step Whittaker: stick if the sticking impulse is inside the cone,
/// otherwise slide against the incident slip with Newton restitution.
#[test]
fn whittaker_matches_hand_oracle() {
    let (m, inertia, rx, ry): (f64, f64, f64, f64) = (1.0, 1.0, 0.3, -0.4);
    let (mu, eps): (f64, f64) = (0.3, 0.5);
    let v: [f64; 3] = [1.0, -1.0, 0.0];
    // Contact velocity u = ẋ - r_y θ̇, w = ẏ + r_x θ̇.
    let u = v[0] - ry * v[2];
    let w = v[1] + rx * v[2];
    let a = 1.0 / m + ry * ry / inertia;
    let b = -rx * ry / inertia;
    let c = 1.0 / m + rx * rx / inertia;
    let dw = -(1.0 + eps) * w;
    // Cramer's rule for [[a,b],[b,c]] P = (-u, dw).
    let det = a * c - b * b;
    let stick_t = (-u * c - b * dw) / det;
    let stick_n = (a * dw + b * u) / det;
    assert!(stick_t.abs() > mu * stick_n, "oracle case should slide");
    let sigma = u.signum();
    let pn = dw / (c - sigma * mu * b);
    let pt = -sigma * mu * pn;

    let body = BodyParams::new(m, inertia).unwrap();
    let contact = ContactGeometry::new(rx, ry).unwrap();
    let p = predict_impulse(
        ModelId::Whittaker,
        &params(mu, eps),
        &body,
        &contact,
        &Vector3::from(v),
    )
    .unwrap();
    assert_relative_eq!(p.tangential, pt, epsilon = 1e-12);
    assert_relative_eq!(p.normal, pn, epsilon = 1e-12);
    assert_relative_eq!(pn, 1.5 / 1.054, epsilon = 1e-12);
}

#[test]
fn post_velocity_is_apply_impulse_of_prediction() {
    let body = BodyParams::new(0.4, 0.02).unwrap();
    let contact = ContactGeometry::new(0.05, -0.2).unwrap();
    let v = Vector3::new(0.4, -1.3, 2.0);
    for model in ModelId::ALL {
        let p = predict_impulse(model, &params(0.4, 0.6), &body, &contact, &v).unwrap();
        let v_post = predict_post_velocity(model, &params(0.4, 0.6), &body, &contact, &v).unwrap();
        assert_eq!(v_post, apply_impulse(&body, &contact, &v, p));
    }
}

#[test]
fn mirtich_and_wang_mason_differ_when_slip_changes() {
    let body = unit_body();
    let contact = ContactGeometry::new(0.5, -0.5).unwrap();
    let v = velocity_for(&contact, 0.3, -1.0, 0.0);
    // Slip stops part-way through compression, so the path bends.
    let wm = predict_impulse(ModelId::WangMason, &params(0.5, 0.7), &body, &contact, &v).unwrap();
    let mi = predict_impulse(ModelId::Mirtich, &params(0.5, 0.7), &body, &contact, &v).unwrap();
    assert!((wm.as_vector() - mi.as_vector()).norm() > 1e-6, "{wm:?} vs {mi:?}");
}

#[test]
fn irb_recovers_admissible_impulse() {
    let body = BodyParams::new(0.8, 0.03).unwrap();
    let contact = ContactGeometry::new(0.1, -0.15).unwrap();
    let v = velocity_for(&contact, 0.5, -1.2, 1.0);
    let p = predict_impulse(ModelId::ApPoisson, &params(0.3, 0.4), &body, &contact, &v).unwrap();
    let v_post = apply_impulse(&body, &contact, &v, p);
    for metric in [VelocityMetric::Linear, VelocityMetric::Scaled] {
        let irb = irb_bound(&trial(body, contact, v, v_post), metric).unwrap();
        assert!(irb.error < 1e-12, "{metric:?}: {}", irb.error);
        assert_relative_eq!(irb.impulse.as_vector(), p.as_vector(), epsilon = 1e-9);
    }
}

#[test]
fn irb_cannot_explain_pure_spin_change() {
    let (body, contact, v) = central();
    let v_post = Vector3::new(0.0, 0.0, 3.0);
    let irb = irb_bound(&trial(body, contact, v, v_post), VelocityMetric::Scaled).unwrap();
    assert!(irb.error > 0.1);
    let free = irb_bound_for(&body, &contact, &v, &v_post, VelocityMetric::Scaled, IrbMode::Unconstrained).unwrap();
    assert!(free.error <= irb.error + 1e-12);
}

/// Brute force over a polar grid of the ellipse (a million points) plus the
/// non-penetration filter, then a shrinking local grid around the best cell.
fn grid_oracle(t: &ImpactTrial, metric: VelocityMetric) -> f64 {
    let ellipse = t.ellipse().unwrap();
    let w = *ellipse.compliance();
    let center = ellipse.center();
    let radius = ellipse.incident_energy().sqrt();
    // W = L Lᵀ
    let l11 = w[(0, 0)].sqrt();
    let l21 = w[(0, 1)] / l11;
    let l22 = (w[(1, 1)] - l21 * l21).sqrt();
    let l = nalgebra::Matrix2::new(l11, 0.0, l21, l22);
    let map = l.try_inverse().unwrap().transpose() * radius;
    let eval = |rho: f64, phi: f64| -> f64 {
        let rho = rho.clamp(0.0, 1.0);
        let p = center + map * Vector2::new(rho * phi.cos(), rho * phi.sin());
        if ellipse.post_velocity(&p).y < 0.0 {
            return f64::INFINITY;
        }
        let v_hat = apply_impulse(&t.body, &t.contact, t.v_pre(), Impulse2::from_vector(p));
        metric.norm(&t.body, &(v_hat - t.v_post()))
    };
    let n = 1000;
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for i in 0..=n {
        let rho = i as f64 / n as f64;
        for j in 0..n {
            let phi = std::f64::consts::TAU * j as f64 / n as f64;
            let e = eval(rho, phi);
            if e < best.0 {
                best = (e, rho, phi);
            }
        }
    }
    let (mut d_rho, mut d_phi) = (1.0 / n as f64, std::f64::consts::TAU / n as f64);
    for _ in 0..30 {
        let (_, rho0, phi0) = best;
        for i in -10..=10 {
            for j in -10..=10 {
                let rho = rho0 + d_rho * i as f64 / 10.0;
                let phi = phi0 + d_phi * j as f64 / 10.0;
                let e = eval(rho, phi);
                if e < best.0 {
                    best = (e, rho.clamp(0.0, 1.0), phi);
                }
            }
        }
        d_rho *= 0.5;
        d_phi *= 0.5;
    }
    best.0
}

#[test]
fn irb_matches_dense_grid() {
    let cases = [
        (0.04, 1.4e-5, (0.02, -0.03), (0.3, -1.5, 4.0), (0.1, 0.9, -9.0)),
        (1.0, 0.2, (0.3, -0.4), (1.0, -1.0, 0.0), (0.2, 0.6, 2.5)),
        (0.5, 0.05, (-0.2, -0.1), (-0.4, -2.0, 1.0), (-1.5, 0.1, -3.0)),
        (2.0, 0.5, (0.0, -0.5), (0.0, -1.0, 0.0), (0.0, 3.0, 0.0)),
    ];
    for (m, inertia, (rx, ry), v, v_post) in cases {
        let t = trial(
            BodyParams::new(m, inertia).unwrap(),
            ContactGeometry::new(rx, ry).unwrap(),
            Vector3::new(v.0, v.1, v.2),
            Vector3::new(v_post.0, v_post.1, v_post.2),
        );
        for metric in [VelocityMetric::Linear, VelocityMetric::Scaled] {
            let irb = irb_bound(&t, metric).unwrap();
            let oracle = grid_oracle(&t, metric);
            let ellipse = t.ellipse().unwrap();
            assert!(ellipse.is_admissible(&irb.impulse.as_vector(), DEFAULT_ADMISSIBILITY_TOL));
            assert!(irb.error <= oracle + 1e-9, "{metric:?}: {} > {oracle}", irb.error);
            assert!(irb.error >= oracle - 1e-4 * (1.0 + oracle), "{metric:?}");
        }
    }
}

#[test]
fn post_hoc_selects_exact_model() {
    let body = BodyParams::new(0.3, 0.01).unwrap();
    let mut table = BTreeMap::new();
    for model in ModelId::ALL {
        table.insert(model, params(0.25, 0.45));
    }
    let trials: Vec<ImpactTrial> = (0..20)
        .map(|i| {
            let x = i as f64 / 20.0;
            let contact = ContactGeometry::new(0.1 * (x - 0.5), -0.1).unwrap();
            let v = velocity_for(&contact, 1.0 - 2.0 * x, -1.0 - x, 3.0 * x);
            let v_post = predict_post_velocity(ModelId::DrumwrightShell, &table[&ModelId::DrumwrightShell], &body, &contact, &v).unwrap();
            let mut t = trial(body, contact, v, v_post);
            t.trial_id = i;
            t
        })
        .collect();
    let choices = best_post_hoc(&trials, &table, &ErrorMetric::default()).unwrap();
    for (c, t) in choices.iter().zip(&trials) {
        assert_eq!(c.trial_id, t.trial_id);
        assert_eq!(c.error, 0.0);
        // Models that coincide on a trial resolve to the earliest id.
        assert!(c.model <= ModelId::DrumwrightShell);
    }
}

#[test]
fn post_hoc_min_composition() {
    let mut errors = BTreeMap::new();
    errors.insert(ModelId::Mirtich, vec![1.0, 3.0]);
    errors.insert(ModelId::ApNewton, vec![3.0, 1.0]);
    let choices = select_min_error(&[7, 8], &errors).unwrap();
    assert_eq!(choices[0].model, ModelId::Mirtich);
    assert_eq!(choices[1].model, ModelId::ApNewton);
    let mean = choices.iter().map(|c| c.error).sum::<f64>() / 2.0;
    assert_eq!(mean, 1.0);

    errors.insert(ModelId::Whittaker, vec![1.0, 1.0]);
    let tied = select_min_error(&[7, 8], &errors).unwrap();
    assert_eq!(tied[0].model, ModelId::Mirtich);
    assert_eq!(tied[1].model, ModelId::ApNewton);
    assert!(best_post_hoc(&[], &BTreeMap::new(), &ErrorMetric::default()).is_err());
}

prop_compose! {
    fn impact_case()(
        mass in 0.01f64..5.0,
        gyration in 0.05f64..2.0,
        r_len in 0.01f64..2.0,
        r_angle in -std::f64::consts::PI..0.0,
        u in -3.0f64..3.0,
        w in -3.0f64..-1e-3,
        omega in -20.0f64..20.0,
    ) -> (BodyParams, ContactGeometry, Vector3<f64>) {
        let body = BodyParams::new(mass, mass * (gyration * r_len).powi(2)).unwrap();
        let contact = ContactGeometry::new(r_len * r_angle.cos(), r_len * r_angle.sin()).unwrap();
        let v = velocity_for(&contact, u, w, omega);
        (body, contact, v)
    }
}

fn model_strategy() -> impl Strategy<Value = ModelId> {
    prop::sample::select(ModelId::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn predictions_are_admissible(
        (body, contact, v) in impact_case(),
        model in model_strategy(),
        mu in 0.0f64..=2.0,
        eps in 0.0f64..=1.0,
    ) {
        let p = predict_impulse(model, &params(mu, eps), &body, &contact, &v).unwrap();
        let ellipse = EnergyEllipse::new(&body, &contact, &v).unwrap();
        let verdict = ellipse.classify(&p.as_vector(), DEFAULT_ADMISSIBILITY_TOL);
        prop_assert!(verdict.is_admissible(), "{model} {verdict:?}");
        prop_assert!(p.tangential.abs() <= mu * p.normal * (1.0 + 1e-9) + 1e-12);
    }

    #[test]
    fn frictionless_impulses_are_normal(
        (body, contact, v) in impact_case(),
        model in model_strategy(),
        eps in 0.0f64..=1.0,
    ) {
        let p = predict_impulse(model, &params(0.0, eps), &body, &contact, &v).unwrap();
        prop_assert_eq!(p.tangential, 0.0);
    }

    #[test]
    fn no_back_spin_when_sticking_is_sustainable(
        (body, contact, v) in impact_case(),
        model in model_strategy(),
        mu in 0.0f64..=2.0,
        eps in 0.0f64..=1.0,
    ) {
        let w = crate::dynamics::contact_compliance(&body, &contact);
        prop_assume!(w[(0, 1)].abs() <= mu * w[(0, 0)]);
        let vc = contact_velocity(&contact, &v);
        let p = predict_impulse(model, &params(mu, eps), &body, &contact, &v).unwrap();
        let post = contact_velocity(&contact, &apply_impulse(&body, &contact, &v, p));
        prop_assert!(post.x * vc.x.signum() >= -1e-9 * vc.norm(), "{model}: {vc:?} -> {post:?}");
    }

    #[test]
    fn central_normal_impulse_increases_with_restitution(
        mass in 0.01f64..5.0,
        inertia in 0.001f64..2.0,
        depth in 0.01f64..1.0,
        u in -2.0f64..2.0,
        w in -3.0f64..-0.01,
        mu in 0.0f64..=2.0,
        model in model_strategy(),
        e1 in 0.0f64..0.99,
        de in 0.005f64..0.5,
    ) {
        let body = BodyParams::new(mass, inertia).unwrap();
        let contact = ContactGeometry::new(0.0, -depth).unwrap();
        let v = velocity_for(&contact, u, w, 0.0);
        let e2 = (e1 + de).min(1.0);
        let p1 = predict_impulse(model, &params(mu, e1), &body, &contact, &v).unwrap();
        let p2 = predict_impulse(model, &params(mu, e2), &body, &contact, &v).unwrap();
        prop_assert!(p2.normal > p1.normal, "{model}: {} !> {}", p2.normal, p1.normal);
    }

    #[test]
    fn irb_dominates_every_model(
        (body, contact, v) in impact_case(),
        dv in prop::array::uniform3(-2.0f64..2.0),
        mu in 0.0f64..=2.0,
        eps in 0.0f64..=1.0,
        scaled in any::<bool>(),
    ) {
        let metric = if scaled { VelocityMetric::Scaled } else { VelocityMetric::Linear };
        let t = trial(body, contact, v, v + Vector3::from(dv));
        let irb = irb_bound(&t, metric).unwrap();
        let em = ErrorMetric::new(metric, false);
        for model in ModelId::ALL {
            let v_hat = predict_post_velocity(model, &params(mu, eps), &body, &contact, &v).unwrap();
            let e = velocity_error(&t, &v_hat, &em).unwrap();
            prop_assert!(irb.error <= e + 1e-9 * (1.0 + e), "{model}: irb {} > {e}", irb.error);
        }
    }
}

#[test]
fn effective_inertia_matches_frame() {
    let body = BodyParams::new(1.0, 1.0).unwrap();
    let contact = ContactGeometry::new(0.3, -0.4).unwrap();
    let f = ContactFrame::new(&body, &contact, &Vector3::new(1.0, -1.0, 0.0)).unwrap();
    assert_relative_eq!(f.m_c, effective_contact_inertia(&body, &contact).unwrap(), epsilon = 1e-14);
}
