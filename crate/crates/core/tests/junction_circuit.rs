use std::f64::consts::PI;

use cqed_core::junction::{
    build_junction_hamiltonian, coupling_strength, junction_spectrum, project_qubit, CircuitParams,
};
use proptest::prelude::*;

fn cell(alpha: f64, f1: f64, f3: f64) -> CircuitParams {
    CircuitParams {
        ej_ghz: 221.0,
        alpha,
        alpha4: 0.058,
        ec_ghz: 3.2,
        kinetic_a: 1.0,
        kinetic_b: 0.0,
        f1,
        f2: 0.5,
        f3,
        n_max: 6,
    }
}

fn low_levels(p: &CircuitParams) -> Vec<f64> {
    junction_spectrum(p).unwrap()[..4].to_vec()
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() < tol)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn spectrum_is_periodic_in_both_fluxes(alpha in 0.8..1.4f64, f1 in 0.4..0.6f64, f3 in 0.0..1.0f64) {
        let base = low_levels(&cell(alpha, f1, f3));
        prop_assert!(close(&base, &low_levels(&cell(alpha, f1 + 1.0, f3)), 1e-8));
        prop_assert!(close(&base, &low_levels(&cell(alpha, f1, f3 + 2.0)), 1e-8));
    }

    #[test]
    fn coupling_follows_coupler_flux(f3 in 0.0..1.0f64, dpsi in 0.01..0.2f64) {
        let p = cell(1.2, 0.505, f3);
        let g = coupling_strength(&p, dpsi);
        let expect = 2.0 * 221.0 * 0.058 * (PI * f3).cos() * dpsi;
        prop_assert!((g - expect).abs() < 1e-12 * 221.0);
        let mirrored = coupling_strength(&CircuitParams { f3: 1.0 - f3, ..p }, dpsi);
        prop_assert!((g + mirrored).abs() < 1e-12 * 221.0);
    }
}

#[test]
fn hamiltonian_is_hermitian_over_flux_grid() {
    for f1 in [0.45, 0.5, 0.505, 0.53] {
        for f3 in [0.0, 0.25, 0.5, 1.0] {
            let h = build_junction_hamiltonian(&cell(1.2, f1, f3), 0.0768).unwrap();
            assert!(h.hermiticity_defect() < 1e-12, "f1 = {f1}, f3 = {f3}");
        }
    }
}

#[test]
fn qubit_model_is_consistent_with_spectrum() {
    let p = cell(1.2, 0.505, 0.0);
    let q = project_qubit(&p).unwrap();
    let levels = junction_spectrum(&p).unwrap();
    assert!((q.omega_q_ghz - (levels[1] - levels[0])).abs() < 1e-9);
    assert!((q.ground.norm() - 1.0).abs() < 1e-12);
    assert!((q.excited.norm() - 1.0).abs() < 1e-12);
    assert!(q.ground.dotc(&q.excited).norm() < 1e-10);
    let h = build_junction_hamiltonian(&p, 0.0).unwrap();
    let e = q.excited.dotc(&(h.matrix() * &q.excited)).re;
    let g = q.ground.dotc(&(h.matrix() * &q.ground)).re;
    assert!((e - g - q.omega_q_ghz).abs() < 1e-9);
}
