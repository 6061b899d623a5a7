//! Signal design toolkit for simultaneous wireless information and power
//! transfer (SWIPT).
//!
//! The crate covers four layers:
//!
//! * [`eh`]: energy-harvester models (a learned tanh network and the
//!   sigmoidal saturation model), regression fitting, and On-Off analysis.
//! * [`constellation`] and [`codebook`]: algorithmic information layouts and
//!   their deformation toward On-Off power signalling.
//! * [`nn`]: end-to-end autoencoder training for point-to-point, broadcast,
//!   multiple-access and interference topologies.
//! * [`channel`]: Monte Carlo evaluation of symbol error rate and delivered
//!   power over AWGN.
//!
//! Power is in µW and amplitudes in √µW throughout.

pub mod channel;
pub mod codebook;
pub mod constellation;
pub mod design;
pub mod eh;
mod error;
pub mod nn;
pub mod par;
pub mod rng;

pub use design::{CodeMatrix, Rho};
pub use error::{Error, Result};
pub use num_complex::Complex64;
