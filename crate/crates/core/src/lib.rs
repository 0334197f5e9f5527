//! Two-level diabatic surface hopping in the semiclassical regime.
//!
//! The crate implements the frozen-Gaussian (Herman-Kluk) surface hopping
//! estimator for the two-level Schrödinger equation in the diabatic
//! representation, together with the deterministic single-hop quadrature,
//! the stationary-phase rate analysis, and a split-operator spectral solver
//! used as the exact reference throughout the test suites.
//!
//! Module map:
//! - [`model`]: diabatic potential matrices, the built-in spin-boson system,
//!   adiabatic diagnostics, and the model registry.
//! - [`coherent`]: coherent-state algebra (basis evaluation, overlaps,
//!   initial amplitudes).
//! - [`trajectory`]: hopping trajectories in the extended phase space
//!   (Hamiltonian flow, action, Jacobian blocks, amplitude).
//! - [`mc_estimator`]: the stochastic wavefunction estimator with seeded,
//!   scheduling-independent ensemble averaging.
//! - [`single_hop`]: deterministic quadrature of the one-hop wavefunction
//!   term and transition-rate sweeps.
//! - [`stationary_phase`]: stationary point, complex Hessian, non-degeneracy
//!   checks, and the leading-order rate.
//! - [`spectral`]: split-operator Fourier reference solver and the
//!   strong-coupling experiment.
//! - [`verify`]: the fast identity suite behind `fgsh verify`.

pub mod coherent;
pub mod grid;
pub mod mc_estimator;
pub mod model;
pub mod quadrature;
pub mod single_hop;
pub mod spectral;
pub mod stationary_phase;
pub mod trajectory;
pub mod verify;

pub use coherent::{GaussianWavepacket, InitialData};
pub use grid::SpatialGrid;
pub use model::{DiabaticModel, ModelRegistry, Surface};
pub use trajectory::{PhaseSpacePoint, TrajectoryState};

/// Complex double, the scalar type of every wavefunction quantity.
pub type Complex = num_complex::Complex<f64>;
