//! Chaotic scattering in systems with one open and two closed degrees of
//! freedom.
//!
//! Three model systems share the same asymptotic labelling: a kicked 4D
//! symplectic map ([`map`]), a channel-with-obstacle Hamiltonian flow
//! ([`channel`]) and a bottle-shaped billiard ([`billiard`]). On top of the
//! dynamics sit invariant-manifold tangles of the reduced symmetric map
//! ([`manifolds`]), scattering functions on the torus of incoming phases
//! ([`scattering`]), Monte-Carlo doubly differential cross sections
//! ([`cross_section`]) and the analytic rainbow-singularity normal form
//! ([`rainbow`]).

pub mod angles;
pub mod manifolds;
pub mod map;
pub mod oscillator;
pub mod types;

pub use types::{AsymptoticLabel, CoreError, OutcomeClass, PhasePoint};
