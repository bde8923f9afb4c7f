//! Numerical laboratory for unstable self-similar shock formation in the
//! Burgers-Hilbert equation: pseudo-spectral evolution, modulated
//! self-similar frame tracking, and Newton shooting on the two unstable
//! origin-jet directions.

pub mod config;
pub mod diagnostics;
pub mod evolve;
pub mod grid;
pub mod hilbert;
pub mod initdata;
pub mod profile;
pub mod selfsim;
pub mod shooting;
