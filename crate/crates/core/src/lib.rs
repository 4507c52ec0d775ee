//! Bode sensitivity and complementary-sensitivity integrals of scalar
//! continuous-time feedback loops, computed from rational transfer functions
//! and estimated from simulated stationary signals.

pub mod bode;
pub mod error;
pub mod lti;
pub mod poly;
pub mod spectra;
pub mod stochastic;
pub mod verify;

pub use error::{BodeError, Result};
pub use lti::{PoleZeroReport, StateSpace, TransferFunction};
pub use poly::Polynomial;
