//! Action-angle extraction for the transverse 2D isotropic oscillator.
//!
//! The empty-channel transverse motion decomposes into two circular
//! components a± = (a_x ∓ i a_y)/√2 with a_x = (x + i p_x)/√2, both rotating
//! uniformly. Their moduli give the radial action and angular momentum,
//! their arguments give the canonical angles: the radial angle φ advances at
//! frequency 2 and the rotation angle θ̄ at frequency sign(L)·1. These are
//! the angles the reduced asymptotic phases are built from.

use crate::angles::wrap_angle;
use crate::types::CoreError;

/// Transverse Cartesian state (x, y, p_x, p_y) of the channel oscillator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransverseState {
    pub x: f64,
    pub y: f64,
    pub px: f64,
    pub py: f64,
}

/// Invariants and canonical angles of a transverse oscillator state.
#[derive(Debug, Clone, Copy)]
pub struct OscillatorLabels {
    /// Transverse energy 2I + |L|.
    pub energy: f64,
    /// Radial action I = min(n₊, n₋).
    pub action: f64,
    /// Angular momentum L = n₊ - n₋.
    pub l: f64,
    /// Canonical rotation angle, dθ̄/dt = sign(L).
    pub theta: f64,
    /// Canonical radial angle, dφ/dt = 2.
    pub phi: f64,
}

impl TransverseState {
    pub fn energy(&self) -> f64 {
        0.5 * (self.px * self.px + self.py * self.py) + 0.5 * (self.x * self.x + self.y * self.y)
    }

    pub fn angular_momentum(&self) -> f64 {
        self.x * self.py - self.y * self.px
    }

    /// Circular-component decomposition: returns (n₊, α₊, n₋, α₋) with
    /// n± the moduli squared and α± the arguments of a±.
    fn circular_components(&self) -> (f64, f64, f64, f64) {
        let (re_p, im_p) = (0.5 * (self.x + self.py), 0.5 * (self.px - self.y));
        let (re_m, im_m) = (0.5 * (self.x - self.py), 0.5 * (self.px + self.y));
        let n_p = re_p * re_p + im_p * im_p;
        let n_m = re_m * re_m + im_m * im_m;
        (n_p, im_p.atan2(re_p), n_m, im_m.atan2(re_m))
    }

    /// Extracts actions and canonical angles.
    ///
    /// Fails on circular orbits (radial action 0) and on purely radial
    /// states (|L| = energy), where one of the angles is undefined.
    pub fn labels(&self) -> Result<OscillatorLabels, CoreError> {
        let (n_p, a_p, n_m, a_m) = self.circular_components();
        let degenerate_tol = 1e-14 * (n_p + n_m).max(1.0);
        if n_p < degenerate_tol || n_m < degenerate_tol {
            return Err(CoreError::InvalidLabel(format!(
                "degenerate circular component (n+ = {n_p:.3e}, n- = {n_m:.3e})"
            )));
        }
        let l = n_p - n_m;
        let theta = if l >= 0.0 { -a_p } else { a_m };
        Ok(OscillatorLabels {
            energy: n_p + n_m,
            action: n_p.min(n_m),
            l,
            theta: wrap_angle(theta),
            phi: wrap_angle(-(a_p + a_m)),
        })
    }

    /// Builds the state with given transverse energy, angular momentum and
    /// canonical angles. Inverse of [`TransverseState::labels`].
    pub fn from_labels(
        energy: f64,
        l: f64,
        theta: f64,
        phi: f64,
    ) -> Result<TransverseState, CoreError> {
        let n_p = 0.5 * (energy + l);
        let n_m = 0.5 * (energy - l);
        if !(n_p > 0.0 && n_m > 0.0) {
            return Err(CoreError::InvalidLabel(format!(
                "transverse energy {energy} and angular momentum {l} leave no radial action"
            )));
        }
        let (a_p, a_m) = if l >= 0.0 {
            (-theta, -phi + theta)
        } else {
            (-phi - theta, theta)
        };
        let (rp, ip) = (n_p.sqrt() * a_p.cos(), n_p.sqrt() * a_p.sin());
        let (rm, im) = (n_m.sqrt() * a_m.cos(), n_m.sqrt() * a_m.sin());
        // a_x = (a+ + a-)/√2·√2 = a+ + a- in (x, p_x) components, likewise
        // a_y = i(a+ - a-).
        Ok(TransverseState {
            x: rp + rm,
            px: ip + im,
            y: -(ip - im),
            py: rp - rm,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    fn advance(s: &TransverseState, t: f64) -> TransverseState {
        // Exact free evolution: both complex amplitudes rotate by e^{-it}.
        let (c, sn) = (t.cos(), t.sin());
        TransverseState {
            x: s.x * c + s.px * sn,
            px: s.px * c - s.x * sn,
            y: s.y * c + s.py * sn,
            py: s.py * c - s.y * sn,
        }
    }

    #[test]
    fn invariants_conserved_under_rotation() {
        let s = TransverseState {
            x: 0.7,
            y: -0.2,
            px: 0.4,
            py: 1.1,
        };
        let l0 = s.labels().unwrap();
        for k in 1..40 {
            let t = 0.37 * k as f64;
            let l1 = advance(&s, t).labels().unwrap();
            assert!((l1.energy - l0.energy).abs() < 1e-12);
            assert!((l1.l - l0.l).abs() < 1e-12);
            assert!((l1.action - l0.action).abs() < 1e-12);
        }
    }

    #[test]
    fn canonical_frequencies() {
        let s = TransverseState {
            x: 1.0,
            y: 0.3,
            px: -0.2,
            py: 0.8,
        };
        let l0 = s.labels().unwrap();
        let t = 0.413;
        let l1 = advance(&s, t).labels().unwrap();
        let s_l = l0.l.signum();
        let dtheta = wrap_angle(l1.theta - l0.theta - s_l * t);
        let dphi = wrap_angle(l1.phi - l0.phi - 2.0 * t);
        assert!(dtheta.min(TAU - dtheta) < 1e-12);
        assert!(dphi.min(TAU - dphi) < 1e-12);
    }

    #[test]
    fn labels_round_trip() {
        for (e, l, th, ph) in [
            (2.0, 0.7, 1.0, 2.0),
            (1.5, -0.9, 5.2, 0.3),
            (3.0, 0.0, 0.0, 4.0),
            (0.8, 0.31, 6.0, 6.1),
        ] {
            let s = TransverseState::from_labels(e, l, th, ph).unwrap();
            let lab = s.labels().unwrap();
            assert!((lab.energy - e).abs() < 1e-12, "energy for {e} {l}");
            assert!((lab.l - l).abs() < 1e-12);
            assert!(
                (lab.theta - wrap_angle(th)).abs() < 1e-10,
                "theta {} vs {}",
                lab.theta,
                wrap_angle(th)
            );
            assert!((lab.phi - wrap_angle(ph)).abs() < 1e-10);
        }
    }

    #[test]
    fn circular_orbit_rejected() {
        // Circular orbit: all energy in rotation, radial action 0.
        let s = TransverseState {
            x: 1.0,
            y: 0.0,
            px: 0.0,
            py: 1.0,
        };
        assert!(s.labels().is_err());
    }

    #[test]
    fn geometric_angle_matches_on_near_circular() {
        // For dominantly rotational motion the canonical θ̄ stays close to
        // the geometric polar angle.
        let s = TransverseState::from_labels(2.0, 1.9, 0.8, 1.3).unwrap();
        let geo = s.y.atan2(s.x);
        let lab = s.labels().unwrap();
        let d = crate::angles::angle_distance(lab.theta, geo);
        assert!(d.abs() < 0.15, "canonical {} vs geometric {}", lab.theta, geo);
    }
}
