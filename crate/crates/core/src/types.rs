//! Shared domain types used by all three model systems.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::angles::wrap_angle;

/// Default asymptotic-detection threshold on |q|.
pub const ASYMPTOTIC_Q: f64 = 8.0;

/// Default step budget before a trajectory is classified as trapped.
pub const TRAPPED_STEP_BUDGET: usize = 10_000;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("non-finite input {0}")]
    NonFinite(f64),
    #[error("|z| must be < 1 for decompactification, got {0}")]
    CompactifyDomain(f64),
    #[error("asymptotic phases undefined at p = 0")]
    ZeroMomentum,
    #[error("|q| = {q} outside the phase window [{lo}, {hi})")]
    PhaseWindow { q: f64, lo: f64, hi: f64 },
    #[error("invalid asymptotic label: {0}")]
    InvalidLabel(String),
}

/// A point (q, p, θ, L) in the 4D domain of the Poincaré map.
///
/// θ is kept reduced to [0, 2π); all fields are finite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub q: f64,
    pub p: f64,
    pub theta: f64,
    pub l: f64,
}

impl PhasePoint {
    /// Builds a phase point, wrapping θ into [0, 2π).
    pub fn new(q: f64, p: f64, theta: f64, l: f64) -> Self {
        assert!(
            q.is_finite() && p.is_finite() && theta.is_finite() && l.is_finite(),
            "phase point fields must be finite"
        );
        Self {
            q,
            p,
            theta: wrap_angle(theta),
            l,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.q.is_finite() && self.p.is_finite() && self.theta.is_finite() && self.l.is_finite()
    }
}

/// Asymptote coordinates (E, p, L, χ, ψ) labelling a free trajectory.
///
/// χ and ψ are the reduced radial and rotation phases; both live on [0, 2π).
/// Energy consistency with the owning model is checked by that model's
/// launch/extraction routines, not here.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticLabel {
    pub energy: f64,
    pub p: f64,
    pub l: f64,
    pub chi: f64,
    pub psi: f64,
}

impl AsymptoticLabel {
    pub fn new(energy: f64, p: f64, l: f64, chi: f64, psi: f64) -> Self {
        Self {
            energy,
            p,
            l,
            chi: wrap_angle(chi),
            psi: wrap_angle(psi),
        }
    }
}

/// Outcome class of a scattering trajectory.
///
/// Transmitted ⟺ final p > 0, Reflected ⟺ final p < 0; Trapped means the
/// step or time budget ran out before the asymptotic region was reached.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutcomeClass {
    Transmitted,
    Reflected,
    Trapped,
}

impl OutcomeClass {
    /// Classifies an asymptotic longitudinal momentum.
    pub fn from_final_p(p: f64) -> Self {
        if p > 0.0 {
            OutcomeClass::Transmitted
        } else {
            OutcomeClass::Reflected
        }
    }

    pub fn is_trapped(&self) -> bool {
        matches!(self, OutcomeClass::Trapped)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phase_point_wraps_theta() {
        let x = PhasePoint::new(0.0, 0.0, 7.0, 1.0);
        assert!(x.theta >= 0.0 && x.theta < std::f64::consts::TAU);
        assert!((x.theta - (7.0 - std::f64::consts::TAU)).abs() < 1e-12);
    }

    #[test]
    #[should_panic]
    fn phase_point_rejects_nan() {
        let _ = PhasePoint::new(f64::NAN, 0.0, 0.0, 0.0);
    }

    #[test]
    fn outcome_class_sign_convention() {
        assert_eq!(OutcomeClass::from_final_p(0.3), OutcomeClass::Transmitted);
        assert_eq!(OutcomeClass::from_final_p(-0.3), OutcomeClass::Reflected);
    }
}
