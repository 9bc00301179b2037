//! Weak-value direct tomography of a cavity photon state.
//!
//! A meter qubit is weakly and photon-number-selectively rotated by the cavity,
//! a second qubit post-selects the cavity through a resonant exchange followed
//! by a π/2 rotation, and the conditional meter averages yield complex weak
//! values of the Fock projectors. [`tomography`] turns those weak values back
//! into Fock amplitudes; [`oracle`] computes the same quantities directly from
//! the true state for validation.

pub mod dynamics;
pub mod error;
pub mod hilbert;
mod lm;
pub mod oracle;
pub mod protocol;
pub mod tomography;

pub use error::{Error, Result};
pub use hilbert::C64;
