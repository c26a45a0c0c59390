//! Numerical machinery for orbital stability of standing waves: bound-state
//! profiles, the scalar curve d(ω) and its derivative tests, linearized
//! spectra, modulation coordinates, and direct time evolution, for a
//! single-power Klein-Gordon equation and a double-power Schrödinger
//! equation.

pub mod dcurve;
pub mod dynamics;
pub mod error;
pub mod fd;
pub mod functionals;
pub mod grid;
pub mod model;
pub mod modulation;
pub mod profile;
pub mod spectral;
pub mod state;
pub mod tridiag;

pub use error::{Error, Result};
pub use grid::{Geometry, RadialGrid};
pub use model::ModelSpec;
pub use profile::{solve_profile, Profile, ProfileSolver};
pub use state::State;
