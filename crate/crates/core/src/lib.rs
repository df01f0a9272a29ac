//! Coherent-state propagators of the Nelson Hamiltonian around a phase-space
//! caustic.
//!
//! Three routes to `K(z'', z', T) = <z''| exp(-i H T / hbar) |z'>` live here:
//!
//! * [`semiclassical`]: the quadratic formula `K2` assembled from complex
//!   classical trajectories found by Newton shooting ([`trajectory`]);
//! * [`uniform`]: the Airy-function uniform formula `Kun`, finite where two
//!   trajectories coalesce;
//! * [`exact`]: a split-operator reference on a position grid.
//!
//! [`scan`] ties them together over the `(T, qx)` parameter plane.

pub mod airy;
pub mod exact;
pub mod hamiltonian;
pub mod linalg;
pub mod ode;
pub mod phase;
pub mod scan;
pub mod semiclassical;
pub mod trajectory;
pub mod uniform;

pub use num_complex::Complex64 as C64;

pub use hamiltonian::{CouplingForm, HamiltonianModel, HarmonicModel, NelsonModel, NelsonParams};
pub use phase::{CoherentLabel, CoherentParams, PhasePointUV};
pub use trajectory::{ShootingProblem, TrajectoryResult};

/// Library version string echoed into scan metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
