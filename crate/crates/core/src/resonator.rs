//! Eigenmodes of a coplanar transmission-line resonator whose centre
//! conductor is interrupted by a Josephson junction.
//!
//! The line runs over `x` in `[-l, l]` with open ends and the junction at
//! `x = 0`. Modes that are even about the centre see no flux jump across the
//! junction and never couple to the qubit loop; the odd family solves
//!
//! ```text
//! k = (2 L_0 / L_J) (1 - w^2 / w_p^2) cot(k l),   w = k / sqrt(L_0 C_0)
//! ```
//!
//! with `w_p = 1 / sqrt(L_J C_J)` the junction plasma frequency. Each odd
//! mode has the profile `u(x) = A cos(k (x - l))` for `x > 0` and `-u(-x)`
//! for `x < 0`; `A` is fixed by `int C_0 u^2 dx + C_J delta^2 = C_r + C_J`
//! where `delta = u(0+) - u(0-)` is the flux jump across the junction.

use crate::error::{invalid, Error, Result};
use crate::roots::bisect;
use crate::units::{FEMTO, GIGA, HBAR, MILLI, NANO, REDUCED_FLUX_QUANTUM};
use alloc::{format, string::String, vec::Vec};
use core::f64::consts::PI;
#[cfg_attr(test, allow(unused_imports))]
#[allow(unused_imports)] // only used when std is not linked
use num_traits::Float;

/// Transmission line and central junction capacitance, without the junction
/// inductance (which is usually calibrated).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineSpec {
    pub impedance_ohm: f64,
    /// Total capacitance of the centre conductor, both halves.
    pub line_capacitance_ff: f64,
    /// Half the length of the centre conductor.
    pub half_length_mm: f64,
    pub junction_capacitance_ff: f64,
    pub n_modes: usize,
}

impl LineSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("impedance_ohm", self.impedance_ohm),
            ("line_capacitance_ff", self.line_capacitance_ff),
            ("half_length_mm", self.half_length_mm),
            ("junction_capacitance_ff", self.junction_capacitance_ff),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if self.n_modes == 0 {
            return Err(invalid("n_modes must be at least 1"));
        }
        Ok(())
    }

    /// Capacitance per unit length, F/m.
    pub fn capacitance_per_length(&self) -> f64 {
        self.line_capacitance_ff * FEMTO / (2.0 * self.half_length_mm * MILLI)
    }

    /// Inductance per unit length `Z^2 C_0`, H/m.
    pub fn inductance_per_length(&self) -> f64 {
        self.impedance_ohm * self.impedance_ohm * self.capacitance_per_length()
    }

    /// Phase velocity, m/s.
    pub fn phase_velocity(&self) -> f64 {
        1.0 / (self.inductance_per_length() * self.capacitance_per_length()).sqrt()
    }

    /// `C_r + C_J`, in F.
    pub fn loaded_capacitance(&self) -> f64 {
        (self.line_capacitance_ff + self.junction_capacitance_ff) * FEMTO
    }

    /// Fundamental of the uninterrupted line (full length `2 l`, open ends).
    pub fn bare_frequency_ghz(&self) -> f64 {
        1.0 / (2.0 * self.impedance_ohm * self.line_capacitance_ff * FEMTO) / GIGA
    }

    pub fn with_junction_inductance(self, junction_inductance_nh: f64) -> ResonatorSpec {
        ResonatorSpec {
            line: self,
            junction_inductance_nh,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResonatorSpec {
    pub line: LineSpec,
    pub junction_inductance_nh: f64,
}

/// Dimensionless form of the dispersion relation in `x = k l`.
#[derive(Clone, Copy, Debug)]
struct Dispersion {
    /// `2 L_0 l / L_J`.
    stiffness: f64,
    /// `w_p l / v`.
    plasma_x: f64,
}

impl Dispersion {
    fn residual(&self, x: f64) -> f64 {
        x - self.stiffness * (1.0 - (x / self.plasma_x).powi(2)) / x.tan()
    }
}

impl ResonatorSpec {
    pub fn validate(&self) -> Result<()> {
        self.line.validate()?;
        let lj = self.junction_inductance_nh;
        if !(lj > 0.0 && lj.is_finite()) {
            return Err(invalid(format!("junction_inductance_nh must be positive, got {lj}")));
        }
        Ok(())
    }

    /// Junction plasma frequency `1 / sqrt(L_J C_J)`, cyclic GHz.
    pub fn plasma_frequency_ghz(&self) -> f64 {
        let w = 1.0 / (self.junction_inductance_nh * NANO * self.line.junction_capacitance_ff * FEMTO).sqrt();
        w / (2.0 * PI) / GIGA
    }

    fn dispersion(&self) -> Dispersion {
        let l = self.line.half_length_mm * MILLI;
        let wp = 2.0 * PI * self.plasma_frequency_ghz() * GIGA;
        Dispersion {
            stiffness: 2.0 * self.line.inductance_per_length() * l / (self.junction_inductance_nh * NANO),
            plasma_x: wp * l / self.line.phase_velocity(),
        }
    }

    /// `k - (2 L_0 / L_J)(1 - w^2/w_p^2) cot(k l)` with `k` in 1/mm.
    pub fn dispersion_residual(&self, k_per_mm: f64) -> f64 {
        let l = self.line.half_length_mm;
        self.dispersion().residual(k_per_mm * l) / l
    }

    /// Cyclic frequency (GHz) of a wavenumber in 1/mm.
    pub fn frequency_of(&self, k_per_mm: f64) -> f64 {
        k_per_mm / MILLI * self.line.phase_velocity() / (2.0 * PI) / GIGA
    }
}

/// One odd eigenmode of the interrupted line.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mode {
    /// 1 for the fundamental.
    pub index: usize,
    pub wavenumber_per_mm: f64,
    pub freq_ghz: f64,
    /// Profile amplitude `A` after normalization.
    pub amplitude: f64,
    /// Flux jump `u(0+) - u(0-)` across the junction.
    pub discontinuity: f64,
    /// Zero-point phase slip across the junction, `delta / phi_0 * sqrt(hbar / 2 w C)`.
    pub phase_slip: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModeSet {
    pub spec: ResonatorSpec,
    pub modes: Vec<Mode>,
}

/// Bisection stops once the residual (1/mm) is this small.
pub const ROOT_TOL: f64 = 1e-12;

/// Returns the first `n_modes` odd eigenmodes of `spec`.
///
/// Roots are bracketed between consecutive singularities of `cot(k l)`; the
/// point where the junction response changes sign (`w = w_p`) splits the
/// bracket that contains it, since that bracket holds two roots.
pub fn solve_modes(spec: &ResonatorSpec) -> Result<ModeSet> {
    spec.validate()?;
    let disp = spec.dispersion();
    let l = spec.line.half_length_mm;
    let wanted = spec.line.n_modes;
    let max_brackets = 4 * wanted + 8;

    let mut points: Vec<f64> = (0..=max_brackets).map(|m| m as f64 * PI).collect();
    let xp = disp.plasma_x;
    if points.iter().all(|p| (p - xp).abs() > 1e-9) {
        points.push(xp);
    }
    points.sort_by(f64::total_cmp);

    let mut roots = Vec::with_capacity(wanted);
    let mut report = String::new();
    for w in points.windows(2) {
        if roots.len() == wanted {
            break;
        }
        let (a, b) = (w[0], w[1]);
        let eps = 1e-10 * (b - a);
        let (lo, hi) = (a + eps, b - eps);
        let (flo, fhi) = (disp.residual(lo), disp.residual(hi));
        report.push_str(&format!("[{lo:.6}, {hi:.6}]: {flo:.3e} / {fhi:.3e}; "));
        if flo.signum() == fhi.signum() {
            continue;
        }
        let (x, r) = bisect(|x| disp.residual(x) / l, lo, hi, ROOT_TOL, 400)?;
        // A nearly transparent junction makes the residual stiff (slope ~ 2 L_0 l / L_J);
        // there the best representable root is accepted relative to that scale.
        if r.abs() > 1e-10 * (1.0 + disp.stiffness) {
            return Err(Error::NumericalFailure(format!(
                "root in [{lo}, {hi}] only converged to residual {r:e}"
            )));
        }
        roots.push(x);
    }
    if roots.len() < wanted {
        return Err(Error::NumericalFailure(format!(
            "found {} of {wanted} modes; brackets in k*l: {report}",
            roots.len()
        )));
    }

    let modes = roots
        .iter()
        .enumerate()
        .map(|(i, &x)| build_mode(spec, i + 1, x))
        .collect();
    Ok(ModeSet { spec: *spec, modes })
}

fn build_mode(spec: &ResonatorSpec, index: usize, x: f64) -> Mode {
    let line = &spec.line;
    let cr = line.line_capacitance_ff * FEMTO;
    let cj = line.junction_capacitance_ff * FEMTO;
    let k_per_mm = x / line.half_length_mm;
    let freq_ghz = spec.frequency_of(k_per_mm);
    let line_weight = 0.5 * cr * (1.0 + (2.0 * x).sin() / (2.0 * x));
    let junction_weight = 4.0 * cj * x.cos().powi(2);
    let amplitude = (line.loaded_capacitance() / (line_weight + junction_weight)).sqrt();
    let discontinuity = 2.0 * amplitude * x.cos();
    Mode {
        index,
        wavenumber_per_mm: k_per_mm,
        freq_ghz,
        amplitude,
        discontinuity,
        phase_slip: phase_slip(discontinuity, freq_ghz, line.loaded_capacitance()),
    }
}

/// `delta / phi_0 * sqrt(hbar / (2 w C))` with `w` angular and `C` in F.
pub fn phase_slip(discontinuity: f64, freq_ghz: f64, capacitance: f64) -> f64 {
    let w = 2.0 * PI * freq_ghz * GIGA;
    discontinuity / REDUCED_FLUX_QUANTUM * (HBAR / (2.0 * w * capacitance)).sqrt()
}

impl ModeSet {
    pub fn fundamental(&self) -> &Mode {
        &self.modes[0]
    }

    /// Normalized profile `u_n(x)` of mode `n` (1-based), `x` in mm.
    ///
    /// `x = 0` returns the right-hand limit `u_n(0+)`.
    pub fn mode_function(&self, n: usize, x_mm: f64) -> Result<f64> {
        let mode = n
            .checked_sub(1)
            .and_then(|i| self.modes.get(i))
            .ok_or_else(|| invalid(format!("mode {n} not in set of {}", self.modes.len())))?;
        let l = self.spec.line.half_length_mm;
        if !(x_mm >= -l && x_mm <= l) {
            return Err(invalid(format!("x = {x_mm} mm outside [-{l}, {l}]")));
        }
        let k = mode.wavenumber_per_mm;
        Ok(if x_mm >= 0.0 {
            mode.amplitude * (k * (x_mm - l)).cos()
        } else {
            -mode.amplitude * (k * (x_mm + l)).cos()
        })
    }
}

/// Junction-inductance search interval, nH.
pub const CALIBRATION_BOUNDS_NH: (f64, f64) = (1e-3, 1e3);

/// Finds the junction inductance that puts the fundamental at `target_ghz`.
///
/// The fundamental falls monotonically as `L_J` grows, so a bisection in
/// `log L_J` suffices. Targets between the lowest-inductance solution and the
/// bare-line fundamental saturate at the lower bound.
pub fn calibrate_resonator(line: &LineSpec, target_ghz: f64) -> Result<ResonatorSpec> {
    line.validate()?;
    let one_mode = LineSpec { n_modes: 1, ..*line };
    let freq = |log_l: f64| -> Result<f64> {
        let spec = one_mode.with_junction_inductance(10f64.powf(log_l));
        Ok(solve_modes(&spec)?.fundamental().freq_ghz)
    };
    let (lo, hi) = (CALIBRATION_BOUNDS_NH.0.log10(), CALIBRATION_BOUNDS_NH.1.log10());
    let f_top = freq(lo)?;
    let f_bottom = freq(hi)?;
    let finish = |log_l: f64| line.with_junction_inductance(10f64.powf(log_l));
    if target_ghz > f_top {
        if target_ghz <= line.bare_frequency_ghz() + 1e-4 {
            return Ok(finish(lo));
        }
        return Err(Error::CalibrationFailure {
            target: target_ghz,
            low: f_bottom,
            high: f_top,
        });
    }
    if target_ghz < f_bottom {
        return Err(Error::CalibrationFailure {
            target: target_ghz,
            low: f_bottom,
            high: f_top,
        });
    }
    let mut failure = None;
    let (log_l, _) = bisect(
        |log_l| match freq(log_l) {
            Ok(f) => f - target_ghz,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        },
        lo,
        hi,
        1e-9,
        200,
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(finish(log_l))
}
