//! First-passage percolation on Z^d: passage times, the finite-horizon and
//! discounted cell problems, the discrete variational formula for the
//! effective Hamiltonian H̄(p), and an explicit minimizer iteration for
//! diagonal-symmetric media.

pub mod cell;
pub mod corrector;
pub mod error;
pub mod fpp;
pub mod medium;
pub mod oracle;
pub mod rng;
pub mod varform;
pub mod verify;

pub use error::{Error, Result};
pub use medium::{Direction, Environment, MediumKind, MediumSpec, WeightBounds};
