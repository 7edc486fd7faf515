//! Run configuration: a TOML file whose physical keys carry their units.

use std::path::Path;

use cqed_core::junction::{calibrate_charging, CircuitParams, DEFAULT_N_MAX};
use cqed_core::resonator::{calibrate_resonator, solve_modes, LineSpec, ModeSet, ResonatorSpec};
use serde::{Deserialize, Serialize};

use crate::error::{config_err, CliError, Result};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub resonator: Option<ResonatorSection>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub qubit: Vec<QubitSection>,
    pub protocol: Option<ProtocolSection>,
    pub sweep: Option<SweepSection>,
    pub output: Option<OutputSection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResonatorSection {
    pub impedance_ohm: f64,
    pub line_capacitance_ff: f64,
    pub half_length_mm: f64,
    pub junction_capacitance_ff: f64,
    #[serde(default = "default_n_modes")]
    pub n_modes: usize,
    /// Fundamental to calibrate `L_J` against; exclusive with `junction_inductance_nh`.
    pub target_freq_ghz: Option<f64>,
    pub junction_inductance_nh: Option<f64>,
    /// Fundamental-mode phase slip used for couplings instead of the computed one.
    pub phase_slip: Option<f64>,
}

fn default_n_modes() -> usize {
    3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QubitSection {
    pub ej_ghz: f64,
    pub alpha: f64,
    pub alpha4: f64,
    #[serde(default = "one")]
    pub kinetic_a: f64,
    #[serde(default)]
    pub kinetic_b: f64,
    pub f1: f64,
    /// Defaults to `0.5 - f3 / 2`, which keeps `f1 + f2 + f3 / 2` fixed as `f3` moves.
    pub f2: Option<f64>,
    #[serde(default)]
    pub f3: f64,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    /// Charging energy; exclusive with `target_freq_ghz`.
    pub ec_ghz: Option<f64>,
    /// Qubit splitting at this section's fluxes to calibrate `E_c` against.
    pub target_freq_ghz: Option<f64>,
}

fn one() -> f64 {
    1.0
}

fn default_n_max() -> usize {
    DEFAULT_N_MAX
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSection {
    #[serde(default = "one_mode")]
    pub n_modes: usize,
    #[serde(default = "default_fock")]
    pub fock_n_trunc: usize,
    #[serde(default)]
    pub ramp_ns: f64,
    #[serde(default)]
    pub initial: InitialState,
    /// Used when there is no resonator section.
    pub omega_r_ghz: Option<f64>,
    /// Explicit gate parameters, one entry for both qubits or one per qubit.
    /// Without them the qubit sections and the resonator are used.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub qubit: Vec<GateQubitSection>,
}

fn one_mode() -> usize {
    1
}

fn default_fock() -> usize {
    30
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    #[default]
    PlusPlus,
    Ee,
    Eg,
    Ge,
    Gg,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateQubitSection {
    pub g_over_omega_r: f64,
    #[serde(default = "one")]
    pub c_z: f64,
    #[serde(default)]
    pub c_x: f64,
    pub omega_up_ghz: f64,
    pub omega_down_ghz: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub axis: Vec<Axis>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    Alpha,
    Alpha4,
    F1,
    F3,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::Alpha => "alpha",
            SweepVariable::Alpha4 => "alpha4",
            SweepVariable::F1 => "f1",
            SweepVariable::F3 => "f3",
        }
    }
}

/// Either explicit `values` or `points` evenly spaced from `start` to `stop`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub variable: SweepVariable,
    pub start: Option<f64>,
    pub stop: Option<f64>,
    pub points: Option<usize>,
    pub values: Option<Vec<f64>>,
}

impl Axis {
    pub fn grid(&self) -> Result<Vec<f64>> {
        let name = self.variable.name();
        let values = match (&self.values, self.start, self.stop, self.points) {
            (Some(v), None, None, None) => v.clone(),
            (None, Some(a), Some(b), Some(n)) => {
                if n < 2 {
                    return Err(config_err(format!("sweep axis {name}: points must be at least 2, got {n}")));
                }
                (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
            }
            _ => {
                return Err(config_err(format!(
                    "sweep axis {name}: give either values or start, stop and points"
                )))
            }
        };
        if values.len() < 2 {
            return Err(config_err(format!(
                "sweep axis {name} has {} point(s); a sweep needs at least 2 per axis",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(config_err(format!("sweep axis {name} has non-finite values")));
        }
        Ok(values)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<String>,
    pub stem: Option<String>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| config_err(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => config_err(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn resonator(&self) -> Result<&ResonatorSection> {
        self.resonator
            .as_ref()
            .ok_or_else(|| config_err("missing section [resonator]"))
    }

    pub fn first_qubit(&self) -> Result<&QubitSection> {
        self.qubit.first().ok_or_else(|| config_err("missing section [[qubit]]"))
    }

    pub fn protocol(&self) -> Result<&ProtocolSection> {
        self.protocol
            .as_ref()
            .ok_or_else(|| config_err("missing section [protocol]"))
    }

    pub fn sweep(&self) -> Result<&SweepSection> {
        self.sweep.as_ref().ok_or_else(|| config_err("missing section [sweep]"))
    }
}

/// Resonator after `L_J` is fixed and the modes are solved.
#[derive(Clone, Debug, PartialEq)]
pub struct ResolvedResonator {
    pub spec: ResonatorSpec,
    pub modes: ModeSet,
    /// Phase slip used for couplings: the configured one, else the computed one.
    pub phase_slip: f64,
}

impl ResolvedResonator {
    pub fn omega_r_ghz(&self) -> f64 {
        self.modes.fundamental().freq_ghz
    }
}

impl ResonatorSection {
    pub fn line(&self) -> LineSpec {
        LineSpec {
            impedance_ohm: self.impedance_ohm,
            line_capacitance_ff: self.line_capacitance_ff,
            half_length_mm: self.half_length_mm,
            junction_capacitance_ff: self.junction_capacitance_ff,
            n_modes: self.n_modes,
        }
    }

    pub fn resolve(&self) -> Result<ResolvedResonator> {
        let line = self.line();
        let spec = match (self.target_freq_ghz, self.junction_inductance_nh) {
            (Some(target), None) => calibrate_resonator(&line, target)?,
            (None, Some(lj)) => line.with_junction_inductance(lj),
            _ => {
                return Err(config_err(
                    "[resonator]: give exactly one of target_freq_ghz and junction_inductance_nh",
                ))
            }
        };
        let modes = solve_modes(&spec)?;
        let phase_slip = match self.phase_slip {
            Some(p) if p.is_finite() => p,
            Some(p) => return Err(config_err(format!("[resonator]: phase_slip must be finite, got {p}"))),
            None => modes.fundamental().phase_slip,
        };
        Ok(ResolvedResonator {
            spec,
            modes,
            phase_slip,
        })
    }
}

/// Sets the coupler flux; `f2` follows `0.5 - f3 / 2` unless pinned.
pub fn at_coupler_flux(p: &CircuitParams, f3: f64, pinned_f2: Option<f64>) -> CircuitParams {
    CircuitParams {
        f3,
        f2: pinned_f2.unwrap_or(0.5 - 0.5 * f3),
        ..*p
    }
}

impl QubitSection {
    /// Circuit parameters with `E_c` taken from the section or set to a
    /// placeholder when it is to be calibrated.
    pub fn params(&self) -> CircuitParams {
        let base = CircuitParams {
            ej_ghz: self.ej_ghz,
            alpha: self.alpha,
            alpha4: self.alpha4,
            ec_ghz: self.ec_ghz.unwrap_or(1.0),
            kinetic_a: self.kinetic_a,
            kinetic_b: self.kinetic_b,
            f1: self.f1,
            f2: 0.5,
            f3: self.f3,
            n_max: self.n_max,
        };
        at_coupler_flux(&base, self.f3, self.f2)
    }

    /// Parameters with `E_c` fixed, calibrating it when a target is given.
    pub fn resolve(&self) -> Result<CircuitParams> {
        let p = self.params();
        match (self.ec_ghz, self.target_freq_ghz) {
            (Some(_), None) => {
                p.validate()?;
                Ok(p)
            }
            (None, Some(target)) => Ok(calibrate_charging(&p, target)?),
            _ => Err(config_err("[[qubit]]: give exactly one of ec_ghz and target_freq_ghz")),
        }
    }
}
