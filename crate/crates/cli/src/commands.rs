//! The work behind each subcommand, returning serializable reports.

use cqed_core::gate::{
    numeric_protocol, with_cavity_vacuum, GateParams, GateReport, ProtocolSchedule, QubitGateParams,
};
use cqed_core::junction::{coupling_strength, project_qubit, CircuitParams, PauliCoefficients};
use cqed_core::ops::{Factor, SpaceShape, StateVector};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::{at_coupler_flux, InitialState, QubitSection, ResolvedResonator, RunConfig, SweepVariable};
use crate::error::{config_err, Result};
use crate::output::fmt_float;

#[derive(Clone, Debug, Serialize)]
pub struct ModeEntry {
    pub index: usize,
    pub freq_ghz: f64,
    pub wavenumber_per_mm: f64,
    pub amplitude: f64,
    pub discontinuity: f64,
    pub phase_slip: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ModesReport {
    pub junction_inductance_nh: f64,
    pub plasma_freq_ghz: f64,
    pub bare_line_freq_ghz: f64,
    /// Phase slip used for couplings downstream.
    pub coupling_phase_slip: f64,
    pub modes: Vec<ModeEntry>,
}

pub fn modes_report(cfg: &RunConfig) -> Result<ModesReport> {
    let res = cfg.resonator()?.resolve()?;
    Ok(ModesReport {
        junction_inductance_nh: res.spec.junction_inductance_nh,
        plasma_freq_ghz: res.spec.plasma_frequency_ghz(),
        bare_line_freq_ghz: res.spec.line.bare_frequency_ghz(),
        coupling_phase_slip: res.phase_slip,
        modes: res
            .modes
            .modes
            .iter()
            .map(|m| ModeEntry {
                index: m.index,
                freq_ghz: m.freq_ghz,
                wavenumber_per_mm: m.wavenumber_per_mm,
                amplitude: m.amplitude,
                discontinuity: m.discontinuity,
                phase_slip: m.phase_slip,
            })
            .collect(),
    })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Pauli {
    pub identity: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl From<PauliCoefficients> for Pauli {
    fn from(c: PauliCoefficients) -> Self {
        Pauli {
            identity: c.identity,
            x: c.x,
            y: c.y,
            z: c.z,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct QubitEntry {
    pub ec_ghz: f64,
    pub f1: f64,
    pub f2: f64,
    pub f3: f64,
    pub omega_q_ghz: f64,
    pub levels_ghz: [f64; 3],
    pub first_order: Pauli,
    pub second_order: Pauli,
    pub g_ghz: Option<f64>,
    pub g_over_omega_r: Option<f64>,
}

pub fn qubit_report(cfg: &RunConfig) -> Result<Vec<QubitEntry>> {
    if cfg.qubit.is_empty() {
        return Err(config_err("missing section [[qubit]]"));
    }
    let res = cfg.resonator.as_ref().map(|r| r.resolve()).transpose()?;
    cfg.qubit
        .iter()
        .map(|q| {
            let p = q.resolve()?;
            let m = project_qubit(&p)?;
            let g = res.as_ref().map(|r| coupling_strength(&p, r.phase_slip));
            Ok(QubitEntry {
                ec_ghz: p.ec_ghz,
                f1: p.f1,
                f2: p.f2,
                f3: p.f3,
                omega_q_ghz: m.omega_q_ghz,
                levels_ghz: m.levels_ghz,
                first_order: m.first_order.into(),
                second_order: m.second_order.into(),
                g_ghz: g,
                g_over_omega_r: g.zip(res.as_ref()).map(|(g, r)| g / r.omega_r_ghz()),
            })
        })
        .collect()
}

/// Column order of sweep CSV files.
pub const SWEEP_COLUMNS: [&str; 15] = [
    "alpha",
    "alpha4",
    "f1",
    "f3",
    "omega_q_ghz",
    "c1_z",
    "c1_x",
    "c1_y",
    "c1_identity",
    "c2_identity",
    "c2_z",
    "c2_x",
    "c2_y",
    "g_over_omega_r",
    "error",
];

#[derive(Clone, Copy, Debug, Serialize)]
pub struct PointValues {
    pub omega_q_ghz: f64,
    pub c1: Pauli,
    pub c2: Pauli,
    pub g_over_omega_r: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub alpha4: f64,
    pub f1: f64,
    pub f3: f64,
    pub values: std::result::Result<PointValues, String>,
}

impl SweepRow {
    pub fn cells(&self) -> Vec<String> {
        let mut out: Vec<String> = [self.alpha, self.alpha4, self.f1, self.f3]
            .iter()
            .map(|&v| fmt_float(v))
            .collect();
        match &self.values {
            Ok(v) => {
                out.extend(
                    [
                        v.omega_q_ghz,
                        v.c1.z,
                        v.c1.x,
                        v.c1.y,
                        v.c1.identity,
                        v.c2.identity,
                        v.c2.z,
                        v.c2.x,
                        v.c2.y,
                        v.g_over_omega_r,
                    ]
                    .iter()
                    .map(|&x| fmt_float(x)),
                );
                out.push(String::new());
            }
            Err(e) => {
                out.extend((0..10).map(|_| fmt_float(f64::NAN)));
                out.push(e.clone());
            }
        }
        out
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepResult {
    /// Calibrated base cell shared by every point.
    pub base_ec_ghz: f64,
    pub omega_r_ghz: f64,
    pub phase_slip: f64,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn header() -> Vec<String> {
        SWEEP_COLUMNS.iter().map(|s| s.to_string()).collect()
    }

    pub fn table(&self) -> Vec<Vec<String>> {
        self.rows.iter().map(SweepRow::cells).collect()
    }
}

fn evaluate_point(p: &CircuitParams, phase_slip: f64, omega_r_ghz: f64) -> std::result::Result<PointValues, String> {
    let m = project_qubit(p).map_err(|e| e.to_string())?;
    Ok(PointValues {
        omega_q_ghz: m.omega_q_ghz,
        c1: m.first_order.into(),
        c2: m.second_order.into(),
        g_over_omega_r: m.g_over_omega_r(phase_slip, omega_r_ghz),
    })
}

fn set_variable(p: &CircuitParams, section: &QubitSection, var: SweepVariable, v: f64) -> CircuitParams {
    match var {
        SweepVariable::Alpha => CircuitParams { alpha: v, ..*p },
        SweepVariable::Alpha4 => CircuitParams { alpha4: v, ..*p },
        SweepVariable::F1 => CircuitParams { f1: v, ..*p },
        SweepVariable::F3 => at_coupler_flux(p, v, section.f2),
    }
}

/// Evaluates the first qubit section on the sweep grid, first axis outermost.
/// `E_c` is fixed once at the section's own fluxes; failed points keep their
/// row and carry the error text.
pub fn run_sweep(cfg: &RunConfig) -> Result<SweepResult> {
    let section = cfg.first_qubit()?;
    let sweep = cfg.sweep()?;
    if !(1..=2).contains(&sweep.axis.len()) {
        return Err(config_err(format!("[sweep]: 1 or 2 axes supported, got {}", sweep.axis.len())));
    }
    if sweep.axis.len() == 2 && sweep.axis[0].variable == sweep.axis[1].variable {
        return Err(config_err("[sweep]: the two axes must sweep different variables"));
    }
    let grids: Vec<Vec<f64>> = sweep.axis.iter().map(|a| a.grid()).collect::<Result<_>>()?;
    let res = cfg.resonator()?.resolve()?;
    let base = section.resolve()?;

    let mut points = Vec::new();
    for &a in &grids[0] {
        let p = set_variable(&base, section, sweep.axis[0].variable, a);
        match grids.get(1) {
            Some(inner) => points.extend(inner.iter().map(|&b| set_variable(&p, section, sweep.axis[1].variable, b))),
            None => points.push(p),
        }
    }
    let (slip, wr) = (res.phase_slip, res.omega_r_ghz());
    let rows = points
        .par_iter()
        .map(|p| SweepRow {
            alpha: p.alpha,
            alpha4: p.alpha4,
            f1: p.f1,
            f3: p.f3,
            values: evaluate_point(p, slip, wr),
        })
        .collect();
    Ok(SweepResult {
        base_ec_ghz: base.ec_ghz,
        omega_r_ghz: wr,
        phase_slip: slip,
        rows,
    })
}

/// Command-line overrides of the protocol section.
#[derive(Clone, Copy, Debug, Default)]
pub struct GateOverrides {
    pub modes: Option<usize>,
    pub ramp_ns: Option<f64>,
    pub fock: Option<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct GateQubitEntry {
    pub g_ghz: f64,
    pub g_over_omega_r: f64,
    pub lambda: f64,
    pub c_z: f64,
    pub c_x: f64,
    pub omega_up_ghz: f64,
    pub omega_down_ghz: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GateModeEntry {
    pub index: usize,
    pub freq_ghz: f64,
    pub coupling_scale: f64,
    pub n_trunc: usize,
    pub max_mean_occupation: f64,
    pub max_tail_weight: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GateRunReport {
    pub fidelity: f64,
    pub two_qubit_phase: Option<f64>,
    pub qubit_purity: f64,
    pub gate_time_ns: f64,
    pub t1_ns: f64,
    pub t2_ns: f64,
    pub omega_r_t1: f64,
    pub ramp_ns: f64,
    pub ramp_steps: usize,
    pub initial: InitialState,
    pub qubits: Vec<GateQubitEntry>,
    pub modes: Vec<GateModeEntry>,
}

/// Resolved inputs of a gate run.
#[derive(Clone, Debug)]
pub struct GateSetup {
    pub params: GateParams,
    pub schedule: ProtocolSchedule,
    pub initial: InitialState,
}

fn gate_qubits(cfg: &RunConfig, omega_r: f64, res: Option<&ResolvedResonator>) -> Result<[QubitGateParams; 2]> {
    let protocol = cfg.protocol()?;
    let explicit: Vec<QubitGateParams> = protocol
        .qubit
        .iter()
        .map(|q| QubitGateParams {
            omega_up_ghz: q.omega_up_ghz,
            omega_down_ghz: q.omega_down_ghz,
            g_ghz: q.g_over_omega_r * omega_r,
            c_z: q.c_z,
            c_x: q.c_x,
        })
        .collect();
    let derived = || -> Result<Vec<QubitGateParams>> {
        let res = res.ok_or_else(|| config_err("deriving gate parameters from [[qubit]] needs [resonator]"))?;
        cfg.qubit
            .iter()
            .map(|q| {
                let p = q.resolve()?;
                let on = project_qubit(&at_coupler_flux(&p, 0.0, q.f2))?;
                let off = project_qubit(&at_coupler_flux(&p, 0.5, q.f2))?;
                Ok(QubitGateParams::from_models(&on, &off, res.phase_slip))
            })
            .collect()
    };
    let list = if explicit.is_empty() { derived()? } else { explicit };
    match list.as_slice() {
        [q] => Ok([*q, *q]),
        [a, b] => Ok([*a, *b]),
        [] => Err(config_err("[protocol]: no qubits; add [[protocol.qubit]] or [[qubit]] sections")),
        more => Err(config_err(format!("two qubits expected, got {}", more.len()))),
    }
}

pub fn gate_setup(cfg: &RunConfig, ov: GateOverrides) -> Result<GateSetup> {
    let protocol = cfg.protocol()?;
    let res = cfg.resonator.as_ref().map(|r| r.resolve()).transpose()?;
    let omega_r = match (&res, protocol.omega_r_ghz) {
        (Some(r), None) => r.omega_r_ghz(),
        (None, Some(w)) => w,
        (Some(r), Some(w)) if (r.omega_r_ghz() - w).abs() <= 1e-6 * w => r.omega_r_ghz(),
        (Some(r), Some(w)) => {
            return Err(config_err(format!(
                "[protocol].omega_r_ghz = {w} disagrees with the resonator fundamental {}",
                r.omega_r_ghz()
            )))
        }
        (None, None) => return Err(config_err("need [resonator] or [protocol].omega_r_ghz")),
    };
    let qubits = gate_qubits(cfg, omega_r, res.as_ref())?;
    let n_modes = ov.modes.unwrap_or(protocol.n_modes);
    let fock = ov.fock.unwrap_or(protocol.fock_n_trunc);
    let params = match &res {
        Some(r) => GateParams::from_mode_set(&r.modes, n_modes, qubits, fock)?,
        None if n_modes == 1 => GateParams::single_mode(omega_r, qubits, fock)?,
        None => return Err(config_err("more than one cavity mode needs [resonator]")),
    };
    let schedule = ProtocolSchedule::for_gate(&params, ov.ramp_ns.unwrap_or(protocol.ramp_ns))?;
    Ok(GateSetup {
        params,
        schedule,
        initial: protocol.initial,
    })
}

pub fn initial_qubits(s: InitialState) -> Result<StateVector> {
    let basis = |i| StateVector::basis(SpaceShape::new(vec![Factor::Qubit, Factor::Qubit])?, i);
    Ok(match s {
        InitialState::PlusPlus => StateVector::product(&[StateVector::plus(), StateVector::plus()])?,
        InitialState::Ee => basis(0)?,
        InitialState::Eg => basis(1)?,
        InitialState::Ge => basis(2)?,
        InitialState::Gg => basis(3)?,
    })
}

pub fn run_gate(setup: &GateSetup) -> Result<(GateReport, GateRunReport)> {
    let GateSetup {
        params: gp,
        schedule: sched,
        initial,
    } = setup;
    let psi = with_cavity_vacuum(gp, &initial_qubits(*initial)?)?;
    let (_, report) = numeric_protocol(sched, gp, &psi)?;
    let wr = gp.omega_r_ghz();
    let run = GateRunReport {
        fidelity: report.fidelity,
        two_qubit_phase: report.two_qubit_phase,
        qubit_purity: report.qubit_purity,
        gate_time_ns: report.gate_time_ns,
        t1_ns: sched.t1_ns,
        t2_ns: sched.t2_ns,
        omega_r_t1: sched.theta1(),
        ramp_ns: sched.ramp_ns,
        ramp_steps: report.ramp_steps,
        initial: *initial,
        qubits: (0..2)
            .map(|i| {
                let q = &gp.qubits[i];
                GateQubitEntry {
                    g_ghz: q.g_ghz,
                    g_over_omega_r: q.g_ghz / wr,
                    lambda: gp.lambda(i),
                    c_z: q.c_z,
                    c_x: q.c_x,
                    omega_up_ghz: q.omega_up_ghz,
                    omega_down_ghz: q.omega_down_ghz,
                }
            })
            .collect(),
        modes: gp
            .modes
            .iter()
            .enumerate()
            .map(|(n, m)| GateModeEntry {
                index: n + 1,
                freq_ghz: m.freq_ghz,
                coupling_scale: m.coupling_scale,
                n_trunc: m.n_trunc,
                max_mean_occupation: report.max_mean_occupation[n],
                max_tail_weight: report.max_tail_weight[n],
            })
            .collect(),
    };
    Ok((report, run))
}

/// Calibrated values recorded in sidecars.
pub fn resolved_summary(cfg: &RunConfig) -> serde_json::Value {
    let res = cfg.resonator.as_ref().and_then(|r| r.resolve().ok());
    let qubits: Vec<_> = cfg
        .qubit
        .iter()
        .map(|q| q.resolve().ok().map(|p| json!({ "ec_ghz": p.ec_ghz, "f2": p.f2 })))
        .collect();
    json!({
        "resonator": res.map(|r| json!({
            "junction_inductance_nh": r.spec.junction_inductance_nh,
            "omega_r_ghz": r.omega_r_ghz(),
            "phase_slip": r.phase_slip,
        })),
        "qubits": qubits,
    })
}
