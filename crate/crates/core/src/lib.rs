//! Numerics for a galvanically coupled six-junction flux qubit and the
//! four-step ultrafast CPHASE gate it enables.
//!
//! The crate is `no_std` (it needs `alloc`) and does no IO. It is organized
//! bottom-up:
//!
//! - [`ops`]: dense operators on qubit ⊗ Fock tensor products, propagators,
//!   displacement operators and partial traces.
//! - [`resonator`]: eigenmodes of a transmission line interrupted by a
//!   Josephson junction, and the phase slip each mode carries.
//! - [`junction`]: the charge-basis Hamiltonian of the junction array, the
//!   two-level projection and the longitudinal/transverse coupling weights.
//! - [`gate`]: timing, closed-form and numerically propagated CPHASE gates.
//!
//! Frequencies are cyclic and expressed in GHz, times in ns. Hamiltonian
//! matrices are stored in angular units (rad/ns) so that `exp(-i H t)` needs
//! no further conversion.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

mod error;
pub mod gate;
pub mod junction;
pub mod ops;
pub mod resonator;
mod roots;
pub mod units;

pub use crate::error::{Error, Result};
pub use crate::ops::C64;
