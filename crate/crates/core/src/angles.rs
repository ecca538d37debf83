//! Angle arithmetic, compactification of the open coordinate, and the
//! reduced asymptotic phases.

use std::f64::consts::TAU;

use crate::types::CoreError;

/// Reduces an angle to the half-open interval [0, 2π).
///
/// Panics on non-finite input. Idempotent: `wrap_angle(wrap_angle(x))`
/// returns `wrap_angle(x)` bit for bit.
pub fn wrap_angle(x: f64) -> f64 {
    assert!(x.is_finite(), "wrap_angle: non-finite input {x}");
    let r = x.rem_euclid(TAU);
    // rem_euclid can round up to exactly 2π for tiny negative inputs.
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Shortest signed distance between two angles, in (-π, π].
pub fn angle_distance(a: f64, b: f64) -> f64 {
    let d = wrap_angle(a - b);
    if d > std::f64::consts::PI {
        d - TAU
    } else {
        d
    }
}

/// Maps the open coordinate q ∈ (-∞, ∞) onto z = tanh(q) ∈ (-1, 1).
pub fn compactify(q: f64) -> f64 {
    q.tanh()
}

/// Alternative compactification z = (2/π)·arctan(q), also onto (-1, 1).
///
/// Emitted alongside [`compactify`] in curve files; the tanh version is the
/// primary one used internally.
pub fn compactify_arctan(q: f64) -> f64 {
    q.atan() / std::f64::consts::FRAC_PI_2
}

/// Inverse of [`compactify`]; rejects |z| ≥ 1.
pub fn decompactify(z: f64) -> Result<f64, CoreError> {
    if !(z.abs() < 1.0) {
        return Err(CoreError::CompactifyDomain(z));
    }
    Ok(z.atanh())
}

/// Reduced phases (ψ, χ) of a free-channel state.
///
/// ψ = θ - sign(L)·q/p and χ = φ - 2q/p, both wrapped to [0, 2π). Here θ and
/// φ are the canonical rotation and radial-oscillation angles (frequencies
/// ±1 and 2 in the empty channel), so both outputs are constants of the free
/// motion. `sign_l` is +1 or -1.
pub fn reduced_phases(
    q: f64,
    p: f64,
    theta: f64,
    phi: f64,
    sign_l: i8,
) -> Result<(f64, f64), CoreError> {
    if p == 0.0 {
        // p = 0 lies on the NHIM; no asymptote to label.
        return Err(CoreError::ZeroMomentum);
    }
    if !(q.is_finite() && p.is_finite() && theta.is_finite() && phi.is_finite()) {
        return Err(CoreError::NonFinite(f64::NAN));
    }
    let s = f64::from(sign_l.signum());
    let psi = wrap_angle(theta - s * q / p);
    let chi = wrap_angle(phi - 2.0 * q / p);
    Ok((psi, chi))
}

/// Asymptotic phase label for iterated maps: χ = 2π(|q| - Q)/|p|.
///
/// Valid when the trajectory has stepped into the window |q| ∈ [Q, Q + |p|);
/// identifying the window endpoints makes the set of initial conditions a
/// circle.
pub fn map_phase_label(q: f64, p: f64, window_start: f64) -> Result<f64, CoreError> {
    let aq = q.abs();
    let ap = p.abs();
    if !(aq >= window_start && aq < window_start + ap) {
        return Err(CoreError::PhaseWindow {
            q,
            lo: window_start,
            hi: window_start + ap,
        });
    }
    Ok(TAU * (aq - window_start) / ap)
}
