//! Physical constants (CODATA 2018, exact SI values where defined) and the
//! handful of unit conversions used across the crate.

use core::f64::consts::PI;

/// Reduced Planck constant, J s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Elementary charge, C.
pub const ELECTRON_CHARGE: f64 = 1.602_176_634e-19;
/// Superconducting flux quantum h / 2e, Wb.
pub const FLUX_QUANTUM: f64 = 2.067_833_848e-15;
/// Reduced flux quantum Phi_0 / 2 pi, Wb.
pub const REDUCED_FLUX_QUANTUM: f64 = FLUX_QUANTUM / (2.0 * PI);

pub const FEMTO: f64 = 1e-15;
pub const NANO: f64 = 1e-9;
pub const MILLI: f64 = 1e-3;
pub const GIGA: f64 = 1e9;

/// Cyclic frequency in GHz to angular frequency in rad/ns.
#[inline]
pub fn angular(freq_ghz: f64) -> f64 {
    2.0 * PI * freq_ghz
}
