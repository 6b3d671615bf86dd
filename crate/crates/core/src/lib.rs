//! Direct and inverse solvers for the abstract Caputo diffusion-wave equation
//!
//! ```text
//! d^alpha u + A^beta u + q(t) u = f,   u(0) = phi,  u'(0) = psi,   1 < alpha < 2, 0 < beta < 1,
//! ```
//!
//! where `A` is given by its positive eigenvalues and every H-element by its
//! coefficients in the eigenbasis. The potential `q(t)` is recovered from the
//! scalar observation `mu(t) = Phi[u(t)]` by fixed-point iteration.

pub mod dd;
pub mod direct;
pub mod error;
pub mod fracops;
pub mod gamma;
pub mod inverse;
pub mod mlf;
pub mod problem;
pub mod spectrum;
pub mod synth;

pub use direct::{DirectSolver, KernelWeights, ModeTrajectory, Solution};
pub use error::{Error, Result};
pub use fracops::{Samples, TimeGrid};
pub use inverse::{InverseSolver, Measurement, RecoveryReport, RecoverySettings};
pub use mlf::{mlf, MLEvaluation, MLParams, Regime};
pub use problem::{reference_problem, Forcing, ProblemSpec, TimeProfile};
pub use spectrum::{EigenBasis, Functional, SpectralCoeffs};
