use alloc::string::String;

/// Errors raised by the numerical routines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    /// A calibration target lies outside what the free parameter can reach.
    #[error("calibration failure: target {target} outside achievable interval [{low}, {high}]")]
    CalibrationFailure { target: f64, low: f64, high: f64 },

    #[error("degenerate qubit subspace: {0}")]
    Degeneracy(String),

    /// The CPHASE condition `4 sin(w t1) g1 g2 / w^2 = pi/4` has no solution.
    #[error(
        "unsatisfiable gate condition: g1*g2/wr^2 = {product:.6} is below the required minimum {minimum:.5} (pi/16 = 0.19635 for instantaneous switching)"
    )]
    Unsatisfiable { product: f64, minimum: f64 },

    #[error(
        "Fock truncation reached: mode {mode} has mean occupation {occupation:.3} and weight {tail_weight:.2e} in its top levels with N_trunc = {n_trunc}"
    )]
    Truncation {
        mode: usize,
        occupation: f64,
        tail_weight: f64,
        n_trunc: usize,
    },

    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
