//! The six impulse laws, each written against a [`ContactFrame`].
//!
//! All laws share the same planar contact-frame algebra. Post-impact contact
//! velocity is `v + W P`, the normal component must end non-negative, and
//! Coulomb friction bounds `|P_t| <= μ P_n`. The laws differ in how they pick
//! one impulse from that set.

use nalgebra::Vector2;

use super::frame::ContactFrame;

const CONE_TOL: f64 = 1e-12;

/// Sign with `0 -> +1`, used to break symmetric ties deterministically.
fn sign_or_pos(x: f64) -> f64 {
    if x < 0.0 {
        -1.0
    } else {
        1.0
    }
}

fn in_cone(p: &Vector2<f64>, mu: f64) -> bool {
    p.y >= 0.0 && p.x.abs() <= mu * p.y + CONE_TOL * p.norm()
}

/// How a one-shot Newton law chooses the slip direction once sticking fails.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum SlipRule {
    /// Friction opposes the incident slip (Whittaker).
    Incident,
    /// Friction opposes the post-impact slip, as the complementarity
    /// conditions require (Anitescu-Potra).
    Consistent,
}

/// Newton restitution `w⁺ = -ε w` with Coulomb friction, solved by
/// enumerating the three contact modes: stick, slide left, slide right.
pub(crate) fn newton(f: &ContactFrame, mu: f64, eps: f64, rule: SlipRule) -> Vector2<f64> {
    let dw = -(1.0 + eps) * f.w;
    let stick = f.m_c * Vector2::new(-f.u, dw);
    if in_cone(&stick, mu) {
        return stick;
    }
    // Slide with friction -σ μ P_n; normal velocity gain per unit P_n is c - σ μ b.
    let slide = |sigma: f64| -> Option<Vector2<f64>> {
        let k = f.c - sigma * mu * f.b;
        (k > 0.0).then(|| {
            let pn = dw / k;
            Vector2::new(-sigma * mu * pn, pn)
        })
    };
    let incident = if f.u != 0.0 {
        f.u.signum()
    } else {
        -sign_or_pos(stick.x)
    };
    match rule {
        SlipRule::Incident => slide(incident).unwrap_or(stick),
        SlipRule::Consistent => {
            let scale = f.v().norm();
            for sigma in [incident, -incident] {
                if let Some(p) = slide(sigma) {
                    if sigma * f.post(&p).x >= -CONE_TOL * scale {
                        return p;
                    }
                }
            }
            // No consistent sliding mode (friction jam): hold the contact stuck.
            stick
        }
    }
}

/// Restitution phase shared by the two-phase laws: a fixed normal impulse
/// `p_nr` is applied on top of the compression impulse, with the tangential
/// part chosen to bring slip as close to zero as the friction cone allows.
/// This is both the restitution LCP and the kinetic-energy minimiser.
fn restitution_phase(f: &ContactFrame, mu: f64, pc: Vector2<f64>, p_nr: f64) -> Vector2<f64> {
    if p_nr <= 0.0 {
        return pc;
    }
    let uc = f.post(&pc).x;
    let free = -(uc + f.b * p_nr) / f.a;
    let pt = free.clamp(-mu * p_nr, mu * p_nr);
    pc + Vector2::new(pt, p_nr)
}

/// Anitescu-Potra with Poisson restitution: a compression LCP driving the
/// normal velocity to zero, then a restitution LCP with normal impulse
/// `ε P_nc`.
pub(crate) fn ap_poisson(f: &ContactFrame, mu: f64, eps: f64) -> Vector2<f64> {
    let pc = newton(f, mu, 0.0, SlipRule::Consistent);
    restitution_phase(f, mu, pc, eps * pc.y)
}

/// Drumwright-Shell: compression minimises post-impact kinetic energy over
/// the friction cone subject to non-penetration (a two-variable QP solved by
/// enumerating its active sets), then Poisson restitution with normal impulse
/// `ε P_nc` and dissipation-maximising friction.
pub(crate) fn drumwright_shell(f: &ContactFrame, mu: f64, eps: f64) -> Vector2<f64> {
    let pc = drumwright_shell_compression(f, mu);
    restitution_phase(f, mu, pc, eps * pc.y)
}

fn drumwright_shell_compression(f: &ContactFrame, mu: f64) -> Vector2<f64> {
    // Unconstrained minimiser: full arrest, which also has w⁺ = 0.
    let arrest = -(f.m_c * f.v());
    if in_cone(&arrest, mu) {
        return arrest;
    }
    // Otherwise the cone is active: minimise along each edge P = P_n (-σμ, 1),
    // with P_n bounded below by non-penetration.
    let mut best: Option<(f64, Vector2<f64>)> = None;
    for sigma in [1.0, -1.0] {
        let d = Vector2::new(-sigma * mu, 1.0);
        let k = f.c - sigma * mu * f.b;
        if k <= 0.0 {
            continue;
        }
        let curvature = f.a * d.x * d.x + 2.0 * f.b * d.x * d.y + f.c * d.y * d.y;
        let unconstrained = -d.dot(&f.v()) / curvature;
        let pn = unconstrained.max(-f.w / k);
        let p = d * pn;
        let energy = f.energy_change(&p);
        if best.is_none_or(|(e, _)| energy < e) {
            best = Some((energy, p));
        }
    }
    best.map(|(_, p)| p).unwrap_or(arrest)
}

/// Termination rule for the impulse-path integrators.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Restitution {
    /// Restitution ends once `P_n = (1 + ε) P_nc`.
    Poisson,
    /// Restitution ends once the normal force has returned `ε²` of the work
    /// absorbed during compression.
    Energetic,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Mode {
    Slide(f64),
    Stick,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Event {
    SlipStop,
    CompressionEnd,
    Terminal,
}

/// Routh-style integration of the contact-point velocity along the normal
/// impulse. Within a mode the velocities are affine in `P_n`, so every
/// segment is advanced exactly to its next event: slip stopping, the end of
/// compression, or the restitution terminator.
///
/// When slip stops and the sticking line lies inside the friction cone the
/// contact sticks for the rest of the impact; otherwise slip reverses.
pub(crate) fn impulse_path(f: &ContactFrame, mu: f64, eps: f64, rule: Restitution) -> Vector2<f64> {
    let stick_ok = f.stick_sustainable(mu);
    let mut p = Vector2::zeros();
    let mut u = f.u;
    let mut w = f.w;
    let mut mode = if u != 0.0 {
        Mode::Slide(u.signum())
    } else if stick_ok {
        Mode::Stick
    } else {
        Mode::Slide(f.b.signum())
    };
    let mut compressing = true;
    // Compression work (negative) once compression is over.
    let mut compression_work = 0.0;
    let mut work = 0.0;
    let mut pn_target = f64::INFINITY;
    let mut work_target = f64::INFINITY;

    for _ in 0..64 {
        let (dpt, du, dw) = match mode {
            Mode::Slide(s) => (-s * mu, f.b - s * mu * f.a, f.c - s * mu * f.b),
            Mode::Stick => (-f.b / f.a, 0.0, f.c - f.b * f.b / f.a),
        };
        let mut step = f64::INFINITY;
        let mut event = None;
        let mut consider = |d: f64, e: Event| {
            if d.is_finite() && d >= 0.0 && d < step {
                step = d;
                event = Some(e);
            }
        };
        if let Mode::Slide(s) = mode {
            if s * du < 0.0 {
                consider(-u / du, Event::SlipStop);
            }
        }
        if compressing {
            if dw > 0.0 {
                consider(-w / dw, Event::CompressionEnd);
            }
        } else {
            match rule {
                Restitution::Poisson => consider(pn_target - p.y, Event::Terminal),
                Restitution::Energetic => {
                    let remaining = work_target - work;
                    if remaining <= 0.0 {
                        consider(0.0, Event::Terminal);
                    } else {
                        let disc = w * w + 2.0 * dw * remaining;
                        if disc >= 0.0 {
                            let denom = w + disc.sqrt();
                            if denom > 0.0 {
                                consider(2.0 * remaining / denom, Event::Terminal);
                            }
                        }
                    }
                }
            }
        }
        let Some(event) = event else {
            break;
        };
        work += w * step + 0.5 * dw * step * step;
        p += Vector2::new(dpt, 1.0) * step;
        u += du * step;
        w += dw * step;
        match event {
            Event::SlipStop => {
                u = 0.0;
                mode = match mode {
                    Mode::Slide(_) if stick_ok => Mode::Stick,
                    Mode::Slide(s) => Mode::Slide(-s),
                    Mode::Stick => Mode::Stick,
                };
            }
            Event::CompressionEnd => {
                w = 0.0;
                compressing = false;
                compression_work = work;
                pn_target = (1.0 + eps) * p.y;
                work_target = compression_work * (1.0 - eps * eps);
                if eps == 0.0 {
                    return p;
                }
            }
            Event::Terminal => return p,
        }
    }
    log::debug!(
        "impulse path did not terminate (compression work {compression_work}); returning last iterate"
    );
    p
}
