//! Travelling waves of a discrete-velocity kinetic chemotaxis model.
//!
//! A population of run-and-tumble cells with finitely many velocities is
//! coupled to a chemoattractant `S` it produces and a nutrient `N` it
//! consumes. In the moving frame the kinetic density is an explicit sum of
//! Case modes on each side of the attractant peak; the wave speed is then
//! fixed by asking that peak to sit at the origin, i.e. `Υ(c) = ∂_z S(0) = 0`.
//!
//! * [`velocity_model`]: velocity sets, tumbling rates, admissible speeds.
//! * [`dispersion`]: mode exponents.
//! * [`wave_profile`]: mode coefficients and the normalized density.
//! * [`chemo_fields`]: the attractant and nutrient profiles.
//! * [`wave_speed`]: `Υ(c)`, scans and root refinement.
//! * [`cauchy_sim`]: time-dependent simulation of the full system.
//! * [`cli_io`]: configuration files and CSV output.

pub mod cauchy_sim;
pub mod chemo_fields;
pub mod cli_io;
pub mod dispersion;
pub mod quadrature;
pub mod velocity_model;
pub mod wave_profile;
pub mod wave_speed;

#[cfg(test)]
pub(crate) mod test_support;

pub use chemo_fields::{solve_n, solve_s, ChemParams, NField, SField};
pub use dispersion::{dispersion_residual, solve_roots, DispersionRoots};
pub use velocity_model::{Side, SpeedInterval, TumblingRates, VelocityModel};
pub use wave_profile::{solve_modes, PiecewiseExponential, WaveProfile};
pub use wave_speed::{find_wave_speeds, scan, upsilon, UpsilonCurve};
