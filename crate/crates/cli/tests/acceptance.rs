//! Acceptance criteria 1-10. Runs without the libtest harness so that every
//! criterion prints its own line; exits non-zero if any criterion fails.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use cqed_cli::commands::{gate_setup, run_gate, run_sweep, GateOverrides, GateRunReport};
use cqed_cli::reproduce::{pinned, FigureId};
use cqed_core::gate::{
    compose_gate_closed_form, cphase_equivalence, solve_t1, step_hamiltonian, with_cavity_vacuum, GateParams,
    ProtocolSchedule, QubitGateParams, DEFAULT_RAMP_NS, MIN_COUPLING_PRODUCT,
};
use cqed_core::junction::{calibrate_charging, coupling_strength, CircuitParams, DEFAULT_N_MAX};
use cqed_core::ops::{displacement, free_rotation, matrix_exponential_propagator, OperatorMatrix, StateVector};
use cqed_core::resonator::{calibrate_resonator, solve_modes, LineSpec};
use cqed_core::{Error, C64};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn failed(detail: impl std::fmt::Display) -> Outcome {
    outcome(false, format!("error: {detail}"))
}

fn cell(alpha4: f64, f3: f64) -> CircuitParams {
    CircuitParams {
        ej_ghz: 221.0,
        alpha: 1.2,
        alpha4,
        ec_ghz: 3.2,
        kinetic_a: 1.0,
        kinetic_b: 0.0,
        f1: 0.505,
        f2: 0.5,
        f3,
        n_max: DEFAULT_N_MAX,
    }
}

fn runner(cases: u32) -> TestRunner {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn coupling_ratio_i() -> Outcome {
    let r: Vec<f64> = [0.0, 1.0, 0.5]
        .iter()
        .map(|&f3| coupling_strength(&cell(0.058, f3), 0.1218) / 7.0)
        .collect();
    let pass = (r[0] - 0.446).abs() <= 0.001 && (r[1] + 0.446).abs() <= 0.001 && r[2].abs() <= 0.001;
    outcome(pass, format!("g/omega_r = {{{:.4}, {:.4}, {:.4}}}", r[0], r[1], r[2]))
}

fn coupling_ratio_ii() -> Outcome {
    let r = coupling_strength(&cell(0.12, 0.0), 0.0768) / 8.01;
    outcome((r - 0.509).abs() <= 0.001, format!("g/omega_r = {r:.4}"))
}

fn timing() -> Outcome {
    let wr = 8.01;
    let g = 0.509 * wr;
    match solve_t1(g, g, wr) {
        Ok(t1) => {
            let x = 2.0 * PI * wr * t1;
            let gate_time = 1.0 / wr;
            let pass = (0.855..=0.865).contains(&x) && (gate_time - 0.1248).abs() < 5e-5;
            outcome(pass, format!("omega_r t1 = {x:.4}, gate time = {gate_time:.4} ns"))
        }
        Err(e) => failed(e),
    }
}

fn gate_run(ov: GateOverrides) -> cqed_cli::Result<GateRunReport> {
    let cfg = pinned(FigureId::GateTable)?;
    Ok(run_gate(&gate_setup(&cfg, ov)?)?.1)
}

fn fidelity(baseline: &mut Option<f64>) -> Outcome {
    let t = Instant::now();
    match gate_run(GateOverrides::default()) {
        Ok(r) => {
            *baseline = Some(r.fidelity);
            outcome(
                r.fidelity >= 0.996,
                format!("F = {:.5} (N_trunc = 30, {:.1} s)", r.fidelity, t.elapsed().as_secs_f64()),
            )
        }
        Err(e) => failed(e),
    }
}

fn ramped_report() {
    for ramp in [0.002, DEFAULT_RAMP_NS] {
        let line = match gate_run(GateOverrides {
            ramp_ns: Some(ramp),
            ..Default::default()
        }) {
            Ok(r) => format!("F = {:.5}, {} substeps per ramp", r.fidelity, r.ramp_steps),
            Err(e) => e.to_string(),
        };
        println!("       ramped switching, {ramp} ns: {line}");
    }
}

fn multimode(baseline: Option<f64>) -> Outcome {
    let Some(f1) = baseline else {
        return failed("single-mode run unavailable");
    };
    let t = Instant::now();
    match gate_run(GateOverrides {
        modes: Some(3),
        fock: Some(12),
        ..Default::default()
    }) {
        Ok(r) => {
            let df = (r.fidelity - f1).abs();
            let occ: Vec<String> = r
                .modes
                .iter()
                .map(|m| format!("{:.3}", m.max_mean_occupation))
                .collect();
            outcome(
                df <= 1e-3,
                format!(
                    "F = {:.5}, |dF| = {df:.2e}, max <n> per mode = [{}] ({:.1} s)",
                    r.fidelity,
                    occ.join(", "),
                    t.elapsed().as_secs_f64()
                ),
            )
        }
        Err(e) => failed(e),
    }
}

const N6: usize = 50;

fn coupling_pair() -> impl Strategy<Value = (f64, f64)> {
    (0.2..1.2f64, 0.0..1.0f64, any::<bool>()).prop_map(|(r1, u, negative)| {
        let lo = (MIN_COUPLING_PRODUCT / r1).max(0.2) * (1.0 + 1e-9);
        let r2 = lo + u * (1.2 - lo);
        if negative {
            (-r1, -r2)
        } else {
            (r1, r2)
        }
    })
}

fn equivalence_case(r1: f64, r2: f64, w1: f64, w2: f64) -> Result<(f64, f64, f64), Error> {
    let q = |r: f64, w: f64| QubitGateParams {
        omega_up_ghz: w,
        omega_down_ghz: w + 0.05,
        g_ghz: r * 8.01,
        c_z: 1.0,
        c_x: 0.0,
    };
    let gp = GateParams::single_mode(8.01, [q(r1, w1), q(r2, w2)], N6)?;
    let sched = ProtocolSchedule::for_gate(&gp, 0.0)?;
    let mut u = OperatorMatrix::identity(&gp.shape());
    for step in 1..=4 {
        let h = step_hamiltonian(step, &sched, &gp)?;
        u = matrix_exponential_propagator(&h, sched.step_duration(step)?)?.compose(&u)?;
    }
    let closed = compose_gate_closed_form(&sched, &gp)?;
    let mut block = 0.0f64;
    for i in 0..4 {
        for j in 0..4 {
            block = block.max((u.get(i * N6, j * N6) - closed.get(i, j)).norm());
        }
    }
    let plus = StateVector::product(&[StateVector::plus(), StateVector::plus()])?;
    let out = u.apply(&with_cavity_vacuum(&gp, &plus)?)?;
    let purity = out.reduced_density_matrix(&[0, 1])?.purity();
    let phase = cphase_equivalence(&closed)?;
    Ok((block, (purity - 1.0).abs(), (phase.abs() - PI).abs()))
}

fn closed_form_equivalence() -> Outcome {
    let worst = std::cell::Cell::new((0.0f64, 0.0f64, 0.0f64));
    let strategy = (coupling_pair(), 9.0..12.0f64, 9.0..12.0f64);
    let result = runner(20).run(&strategy, |((r1, r2), w1, w2)| {
        let (b, p, ph) = equivalence_case(r1, r2, w1, w2).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let w = worst.get();
        worst.set((w.0.max(b), w.1.max(p), w.2.max(ph)));
        if b < 1e-7 && p < 1e-8 && ph < 1e-10 {
            Ok(())
        } else {
            Err(TestCaseError::fail(format!("block {b:e}, purity {p:e}, phase {ph:e}")))
        }
    });
    let (b, p, ph) = worst.get();
    let summary = format!("20 sets: max block error {b:.1e}, purity defect {p:.1e}, phase error {ph:.1e}");
    match result {
        Ok(()) => outcome(true, summary),
        Err(e) => outcome(false, format!("{summary}; {e}")),
    }
}

const N7: usize = 30;

fn displacement_suite() -> Outcome {
    let disk = || (0.0..1.0f64, -PI..PI).prop_map(|(r, p)| C64::from_polar(r, p));
    let worst = std::cell::Cell::new((0.0f64, 0.0f64));
    let result = runner(50).run(&(disk(), disk(), -10.0..10.0f64), |(a, b, theta)| {
        let err = |e: Error| TestCaseError::fail(e.to_string());
        let lhs = displacement(a, N7).and_then(|da| da.compose(&displacement(b, N7)?)).map_err(err)?;
        let rhs = displacement(a + b, N7).map_err(err)?.scaled(C64::from_polar(1.0, (a * b.conj()).im));
        // Inputs |0>..|5>, outputs below N - 10: away from the truncation edge.
        let mut product = 0.0f64;
        for col in 0..6 {
            for row in 0..N7 - 10 {
                product = product.max((lhs.get(row, col) - rhs.get(row, col)).norm());
            }
        }
        let r = free_rotation(theta, N7).map_err(err)?;
        let conj = r
            .compose(&displacement(a, N7).map_err(err)?)
            .and_then(|m| m.compose(&r.adjoint()))
            .map_err(err)?;
        let rotated = displacement(a * C64::from_polar(1.0, -theta), N7).map_err(err)?;
        let rotation = conj.max_abs_diff(&rotated).map_err(err)?;
        let w = worst.get();
        worst.set((w.0.max(product), w.1.max(rotation)));
        if product < 1e-8 && rotation < 1e-8 {
            Ok(())
        } else {
            Err(TestCaseError::fail(format!("product {product:e}, rotation {rotation:e}")))
        }
    });
    let (p, r) = worst.get();
    let summary = format!("50 draws: D(a)D(b) error {p:.1e}, R D R^dag error {r:.1e}");
    match result {
        Ok(()) => outcome(true, summary),
        Err(e) => outcome(false, format!("{summary}; {e}")),
    }
}

fn sweep_structure() -> Outcome {
    let sweep = match pinned(FigureId::Fig2c).and_then(|c| run_sweep(&c)) {
        Ok(s) => s,
        Err(e) => return failed(e),
    };
    let rows: Vec<_> = sweep
        .rows
        .iter()
        .filter(|r| r.f3 == 0.0 && (r.alpha - 1.2).abs() < 1e-12)
        .filter_map(|r| r.values.as_ref().ok().map(|v| (r.f1, v.c1.z, v.c1.x)))
        .collect();
    let below = rows.iter().filter(|r| r.0 < 0.5).max_by(|a, b| a.0.total_cmp(&b.0));
    let above = rows.iter().filter(|r| r.0 > 0.5).min_by(|a, b| a.0.total_cmp(&b.0));
    let at = rows
        .iter()
        .min_by(|a, b| (a.0 - 0.505).abs().total_cmp(&(b.0 - 0.505).abs()));
    match (below, above, at) {
        (Some(lo), Some(hi), Some(p)) => {
            let flips = lo.1 * hi.1 < 0.0;
            let dominant = p.1.abs() > p.2.abs();
            outcome(
                flips && dominant,
                format!(
                    "E_c = {:.4} GHz; c_z = {:.3} at f1 = {:.3}, {:.3} at f1 = {:.3}; at f1 = {:.3}: c_z = {:.4}, c_x = {:.4}",
                    sweep.base_ec_ghz, lo.1, lo.0, hi.1, hi.0, p.0, p.1, p.2
                ),
            )
        }
        _ => outcome(false, "sweep has no points around f1 = 0.5"),
    }
}

fn qubit_calibration() -> Outcome {
    let targets = [(0.0, 10.94), (1.0, 11.25), (0.5, 10.99)];
    let mut fitted = Vec::new();
    for (f3, target) in targets {
        let p = CircuitParams {
            f2: 0.5 - 0.5 * f3,
            ..cell(0.058, f3)
        };
        match calibrate_charging(&p, target) {
            Ok(c) => fitted.push((f3, target, c.ec_ghz)),
            Err(e) => return failed(format!("f3 = {f3}: {e}")),
        }
    }
    let ec: Vec<f64> = fitted.iter().map(|f| f.2).collect();
    let mean = ec.iter().sum::<f64>() / 3.0;
    let spread = ec.iter().map(|e| (e - mean).abs() / mean).fold(0.0, f64::max);
    let list: Vec<String> = fitted
        .iter()
        .map(|(f3, t, e)| format!("f3 = {f3}: {t} GHz with E_c = {e:.4}"))
        .collect();
    let consistent = spread <= 0.05;
    let note = if consistent {
        "one E_c fits all three within 5%".to_string()
    } else {
        format!("discrepancy: E_c differs by up to {:.1}% from the mean, above 5%", 100.0 * spread)
    };
    outcome(consistent, format!("{}; {note}", list.join(", ")))
}

fn resonator_calibration() -> Outcome {
    let line = |cj: f64| LineSpec {
        impedance_ohm: 50.0,
        line_capacitance_ff: 850.0,
        half_length_mm: 4.0,
        junction_capacitance_ff: cj,
        n_modes: 1,
    };
    let mut pass = true;
    let mut parts = Vec::new();
    for (cj, target, dpsi) in [(10.0, 7.0, 0.1218), (17.0, 8.01, 0.0768)] {
        match calibrate_resonator(&line(cj), target).and_then(|s| solve_modes(&s)) {
            Ok(set) => {
                let m = set.fundamental();
                let rel = (m.phase_slip.abs() - dpsi) / dpsi;
                pass &= (m.freq_ghz - target).abs() < 0.005 && rel.abs() <= 0.10;
                parts.push(format!(
                    "{:.3} GHz, dpsi_1 = {:.4} vs {dpsi} ({:+.0}%)",
                    m.freq_ghz,
                    m.phase_slip,
                    100.0 * rel
                ));
            }
            Err(e) => return failed(e),
        }
    }
    let limit = solve_modes(&line(10.0).with_junction_inductance(1e-12))
        .map(|s| (s.fundamental().wavenumber_per_mm * 4.0 - PI / 2.0).abs());
    match limit {
        Ok(d) => {
            pass &= d <= 1e-10;
            parts.push(format!("L_J -> 0: |k l - pi/2| = {d:.1e}"));
        }
        Err(e) => return failed(e),
    }
    outcome(pass, parts.join("; "))
}

fn main() -> ExitCode {
    let mut baseline = None;
    let mut all = true;
    let mut report = |n: usize, name: &str, o: Outcome| {
        all &= o.pass;
        println!("[{}] {n:>2} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    };
    report(1, "coupling ratio I", coupling_ratio_i());
    report(2, "coupling ratio II", coupling_ratio_ii());
    report(3, "timing", timing());
    report(4, "fidelity", fidelity(&mut baseline));
    ramped_report();
    report(5, "multimode robustness", multimode(baseline));
    report(6, "closed-form equivalence", closed_form_equivalence());
    report(7, "displacement algebra", displacement_suite());
    report(8, "coupling sweep structure", sweep_structure());
    report(9, "qubit-frequency calibration", qubit_calibration());
    report(10, "resonator calibration", resonator_calibration());
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
