//! Layer methods for the two-dimensional stochastic Navier-Stokes equations
//! with additive noise on the periodic square.
//!
//! The crate is organised bottom-up:
//!
//! * [`spectral`] holds truncated Fourier fields and the Leray projection.
//! * [`stochastic`] generates Wiener paths and the pathwise integral `I(t)`.
//! * [`layer`] implements the three velocity updates and pressure recovery.
//! * [`problems`] provides the model problems with exact solutions.
//! * [`metrics`] computes relative errors, Monte Carlo estimates and order fits.
//! * [`experiment`] drives configured sweeps and writes CSV output.

pub mod error;
pub mod experiment;
pub mod layer;
pub mod metrics;
pub mod problems;
pub mod spectral;
pub mod stochastic;

pub use error::{Error, Result};
pub use layer::{LayerState, Method, MethodParams};
pub use metrics::{ErrorReport, OrderFit};
pub use problems::{ExactSolution, ProblemSpec};
pub use spectral::{Axis, LerayPair, ModeIndex, SpectralField};
pub use stochastic::{PathSummary, RademacherSet, WienerPath};
