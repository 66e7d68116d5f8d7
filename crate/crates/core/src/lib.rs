//! Collisional master equation for a multilevel quantum system immersed in a
//! dilute gas whose particles carry internal (ancilla) levels.
//!
//! The crate covers the whole chain from scattering amplitudes to
//! thermodynamics:
//!
//! * [`qmath`]: dense complex matrices, spin ladder operators, dissipators,
//!   Hermitian eigen-decomposition and von Neumann entropy.
//! * [`gas`]: the thermal gas (ancilla populations, Maxwell-Boltzmann motion,
//!   derived scales).
//! * [`scattering`]: on-shell kinematics, Born amplitudes for a Gaussian
//!   active region, tabulated amplitudes, micro-reversibility checks and
//!   Lindblad channel assembly.
//! * [`rates`]: the parameter integral `I(alpha, s)`, closed-form spin rates,
//!   quadrature rate matrices and local-detailed-balance diagnostics.
//! * [`dynamics`]: Lindblad and classical population evolution, steady states.
//! * [`thermo`]: heat power, Clausius residuals and ergotropy.
//! * [`spin`]: the spin-ladder case study wired together from the above.
//! * [`cli`]: the `gas-collide` command line front end.
//!
//! Runnable walkthroughs live in the crate's `examples/` directory.

pub mod cli;
pub mod dynamics;
mod error;
pub mod gas;
pub mod ode;
pub mod qmath;
pub mod quad;
pub mod rates;
pub mod scattering;
pub mod spin;
pub mod thermo;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
