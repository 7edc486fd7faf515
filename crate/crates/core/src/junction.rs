//! Junction-array Hamiltonian in the charge basis, its two-level projection
//! and the qubit-resonator coupling weights.
//!
//! Energies here are cyclic frequencies in GHz (`E / h`); the junction
//! Hamiltonian is only diagonalized, never propagated, so it stays in those
//! units.
//!
//! The inductive potential of the cell, in units of `E_J`, is
//!
//! ```text
//! U = -[cos p1 + cos p2 + a cos(p2 - p1 + 2 pi f1)
//!       + 2 a4 cos(pi f3) cos(p2 - p1 + 2 pi (f1 + f2 + f3/2) + dpsi)]
//! ```
//!
//! and the kinetic part is `4 A E_c (n1^2 + n2^2) + 8 B E_c n1 n2`. Expanding
//! the last cosine in `dpsi` to second order gives the coupling operators
//! `sin(theta)` and `cos(theta) / 2` with `theta = p2 - p1 + 2 pi f~`, both
//! measured against the prefactor `2 E_J a4 cos(pi f3)`.

use crate::error::{invalid, Error, Result};
use crate::ops::{Factor, HermitianEigen, OperatorMatrix, SpaceShape, C64};
use crate::roots::bisect;
use alloc::{format, vec::Vec};
use core::f64::consts::PI;
use nalgebra::{DMatrix, DVector};
#[cfg_attr(test, allow(unused_imports))]
#[allow(unused_imports)] // only used when std is not linked
use num_traits::Float;

/// Parameters of one six-junction qubit cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CircuitParams {
    /// `E_J / h` of the two large qubit junctions, GHz.
    pub ej_ghz: f64,
    /// Size of the third qubit junction relative to `E_J`.
    pub alpha: f64,
    /// Size of the two coupler junctions relative to `E_J`.
    pub alpha4: f64,
    /// Charging energy `e^2 / 2 C_J` over `h`, GHz.
    pub ec_ghz: f64,
    pub kinetic_a: f64,
    pub kinetic_b: f64,
    pub f1: f64,
    pub f2: f64,
    pub f3: f64,
    /// Charge states `-n_max..=n_max` are kept on each island.
    pub n_max: usize,
}

/// Default charge cutoff.
pub const DEFAULT_N_MAX: usize = 12;

impl CircuitParams {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("ej_ghz", self.ej_ghz > 0.0),
            ("ec_ghz", self.ec_ghz > 0.0),
            ("alpha", self.alpha > 0.0),
            ("alpha4", self.alpha4 >= 0.0),
            ("kinetic_a", self.kinetic_a > 0.0),
        ];
        for (name, ok) in checks {
            if !ok {
                return Err(invalid(format!("{name} out of range")));
            }
        }
        let all = [
            self.ej_ghz,
            self.alpha,
            self.alpha4,
            self.ec_ghz,
            self.kinetic_a,
            self.kinetic_b,
            self.f1,
            self.f2,
            self.f3,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(invalid("circuit parameters must be finite"));
        }
        if self.n_max < 5 {
            return Err(invalid(format!("n_max must be >= 5, got {}", self.n_max)));
        }
        Ok(())
    }

    /// `f~ = f1 + f2 + f3 / 2`.
    pub fn effective_frustration(&self) -> f64 {
        self.f1 + self.f2 + 0.5 * self.f3
    }

    /// `a4(f3) = a4 cos(pi f3)`.
    pub fn alpha4_effective(&self) -> f64 {
        self.alpha4 * cos_pi(self.f3)
    }

    pub fn shape(&self) -> SpaceShape {
        SpaceShape::new([Factor::Charge(self.n_max), Factor::Charge(self.n_max)].to_vec())
            .expect("charge factors are always valid")
    }
}

/// `cos(pi x)`, exact at integer and half-integer `x`.
pub fn cos_pi(x: f64) -> f64 {
    let r = x.rem_euclid(2.0);
    if r == 0.0 {
        1.0
    } else if r == 0.5 || r == 1.5 {
        0.0
    } else if r == 1.0 {
        -1.0
    } else {
        (PI * r).cos()
    }
}

/// `exp(2 pi i x)` with `x` reduced modulo one first.
fn phase_turns(x: f64) -> C64 {
    C64::from_polar(1.0, 2.0 * PI * x.rem_euclid(1.0))
}

/// Inductive energy `U(p1, p2; dpsi) / E_J`.
pub fn inductive_potential(phi1: f64, phi2: f64, dpsi: f64, p: &CircuitParams) -> f64 {
    let d = phi2 - phi1;
    let t1 = 2.0 * PI * p.f1.rem_euclid(1.0);
    let t2 = 2.0 * PI * p.effective_frustration().rem_euclid(1.0);
    -(phi1.cos()
        + phi2.cos()
        + p.alpha * (d + t1).cos()
        + 2.0 * p.alpha4_effective() * (d + t2 + dpsi).cos())
}

fn charge_index(p: &CircuitParams, n1: i64, n2: i64) -> usize {
    let d = 2 * p.n_max as i64 + 1;
    let m = p.n_max as i64;
    ((n1 + m) * d + (n2 + m)) as usize
}

/// Coefficient of `exp(i (p2 - p1))` in the potential, GHz.
fn loop_tunneling(p: &CircuitParams, dpsi: f64) -> C64 {
    let qubit_loop = phase_turns(p.f1) * p.alpha;
    let coupler = phase_turns(p.effective_frustration()) * C64::from_polar(1.0, dpsi) * (2.0 * p.alpha4_effective());
    -(qubit_loop + coupler) * (0.5 * p.ej_ghz)
}

/// Junction Hamiltonian on the `(2 n_max + 1)^2` charge basis `|n1, n2>`,
/// in GHz, for a fixed classical phase slip `dpsi`.
///
/// `exp(i p_k)` raises `n_k` by one; every shift is paired with its
/// conjugate, so the matrix is Hermitian by construction.
pub fn build_junction_hamiltonian(p: &CircuitParams, dpsi: f64) -> Result<OperatorMatrix> {
    p.validate()?;
    let shape = p.shape();
    let dim = shape.dim();
    let m = p.n_max as i64;
    let ec = p.ec_ghz;
    let mut h = DMatrix::<C64>::zeros(dim, dim);
    let half_ej = C64::new(-0.5 * p.ej_ghz, 0.0);
    let t = loop_tunneling(p, dpsi);
    for n1 in -m..=m {
        for n2 in -m..=m {
            let i = charge_index(p, n1, n2);
            let (a, b) = (n1 as f64, n2 as f64);
            h[(i, i)] = C64::new(4.0 * p.kinetic_a * ec * (a * a + b * b) + 8.0 * p.kinetic_b * ec * a * b, 0.0);
            if n1 < m {
                let j = charge_index(p, n1 + 1, n2);
                h[(j, i)] += half_ej;
                h[(i, j)] += half_ej;
            }
            if n2 < m {
                let j = charge_index(p, n1, n2 + 1);
                h[(j, i)] += half_ej;
                h[(i, j)] += half_ej;
            }
            // exp(i p2) exp(-i p1): |n1, n2> -> |n1 - 1, n2 + 1>
            if n1 > -m && n2 < m {
                let j = charge_index(p, n1 - 1, n2 + 1);
                h[(j, i)] += t;
                h[(i, j)] += t.conj();
            }
        }
    }
    OperatorMatrix::from_matrix(shape, h)
}

/// `exp(i theta) v` with `theta = p2 - p1 + 2 pi f~`.
fn apply_loop_phase(p: &CircuitParams, v: &DVector<C64>) -> DVector<C64> {
    let m = p.n_max as i64;
    let ph = phase_turns(p.effective_frustration());
    let mut out = DVector::zeros(v.len());
    for n1 in -m + 1..=m {
        for n2 in -m..m {
            out[charge_index(p, n1 - 1, n2 + 1)] += ph * v[charge_index(p, n1, n2)];
        }
    }
    out
}

/// `exp(-i theta) v`.
fn apply_loop_phase_adjoint(p: &CircuitParams, v: &DVector<C64>) -> DVector<C64> {
    let m = p.n_max as i64;
    let ph = phase_turns(p.effective_frustration()).conj();
    let mut out = DVector::zeros(v.len());
    for n1 in -m..m {
        for n2 in -m + 1..=m {
            out[charge_index(p, n1 + 1, n2 - 1)] += ph * v[charge_index(p, n1, n2)];
        }
    }
    out
}

/// Decomposition `c_I I + c_x sx + c_y sy + c_z sz` of a Hermitian qubit operator.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PauliCoefficients {
    pub identity: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl PauliCoefficients {
    /// From matrix elements in the `(e, g)` basis.
    fn from_elements(ee: C64, gg: C64, eg: C64) -> Self {
        PauliCoefficients {
            identity: 0.5 * (ee.re + gg.re),
            x: eg.re,
            y: -eg.im,
            z: 0.5 * (ee.re - gg.re),
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.identity.powi(2) + self.x.powi(2) + self.y.powi(2) + self.z.powi(2)
    }

    /// Magnitude of the traceless part.
    pub fn transverse_longitudinal_norm(&self) -> f64 {
        (self.x.powi(2) + self.y.powi(2) + self.z.powi(2)).sqrt()
    }
}

/// Two-level model of the cell at `dpsi = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct QubitModel {
    pub params: CircuitParams,
    /// `E_e - E_g`, GHz.
    pub omega_q_ghz: f64,
    /// Three lowest levels, GHz.
    pub levels_ghz: [f64; 3],
    /// Weights of `sin(theta)` projected on the qubit (first order in `dpsi`).
    pub first_order: PauliCoefficients,
    /// Weights of `cos(theta) / 2` projected on the qubit (second order).
    pub second_order: PauliCoefficients,
    /// `2 E_J a4 cos(pi f3)`, GHz.
    pub coupling_prefactor_ghz: f64,
    /// Gauge-fixed eigenvectors in the charge basis.
    pub ground: DVector<C64>,
    pub excited: DVector<C64>,
}

impl QubitModel {
    /// `g = 2 E_J a4(f3) dpsi_1`, GHz.
    pub fn coupling_strength_ghz(&self, phase_slip: f64) -> f64 {
        self.coupling_prefactor_ghz * phase_slip
    }

    pub fn g_over_omega_r(&self, phase_slip: f64, omega_r_ghz: f64) -> f64 {
        self.coupling_strength_ghz(phase_slip) / omega_r_ghz
    }

    /// Longitudinal first-order weight, `c_z`.
    pub fn c_z(&self) -> f64 {
        self.first_order.z
    }

    /// Transverse first-order weight, `c_x`.
    pub fn c_x(&self) -> f64 {
        self.first_order.x
    }
}

/// Makes the largest-magnitude amplitude real and positive.
fn fix_gauge(v: &mut DVector<C64>) {
    let mut best = 0;
    let mut mag = -1.0;
    for (i, z) in v.iter().enumerate() {
        let n = z.norm_sqr();
        if n > mag * (1.0 + 1e-12) {
            mag = n;
            best = i;
        }
    }
    let phase = v[best].conj() / v[best].norm();
    *v *= phase;
}

fn element(a: &DVector<C64>, op_b: &DVector<C64>) -> C64 {
    a.dotc(op_b)
}

/// Relative spacing below which two levels count as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-6;

/// Diagonalizes the cell at `dpsi = 0` and projects the coupling operators
/// onto its two lowest states.
pub fn project_qubit(p: &CircuitParams) -> Result<QubitModel> {
    let h = build_junction_hamiltonian(p, 0.0)?;
    let eig = HermitianEigen::new(&h)?;
    let e = eig.values();
    let tol = DEGENERACY_TOL * p.ej_ghz;
    if e[1] - e[0] <= tol {
        return Err(Error::Degeneracy(format!(
            "lowest two levels are split by {:.3e} GHz (<= {tol:.3e})",
            e[1] - e[0]
        )));
    }
    if e[2] - e[1] <= tol {
        return Err(Error::Degeneracy(format!(
            "second excited level lies {:.3e} GHz above the qubit (<= {tol:.3e})",
            e[2] - e[1]
        )));
    }
    let mut ground = eig.vector(0);
    let mut excited = eig.vector(1);
    fix_gauge(&mut ground);
    fix_gauge(&mut excited);

    let i2 = C64::new(0.0, 2.0);
    let sin_of = |v: &DVector<C64>| (apply_loop_phase(p, v) - apply_loop_phase_adjoint(p, v)) / i2;
    let half_cos_of = |v: &DVector<C64>| (apply_loop_phase(p, v) + apply_loop_phase_adjoint(p, v)) * C64::new(0.25, 0.0);

    let (sin_e, sin_g) = (sin_of(&excited), sin_of(&ground));
    let first_order = PauliCoefficients::from_elements(
        element(&excited, &sin_e),
        element(&ground, &sin_g),
        element(&excited, &sin_g),
    );
    let (cos_e, cos_g) = (half_cos_of(&excited), half_cos_of(&ground));
    let second_order = PauliCoefficients::from_elements(
        element(&excited, &cos_e),
        element(&ground, &cos_g),
        element(&excited, &cos_g),
    );

    Ok(QubitModel {
        params: *p,
        omega_q_ghz: e[1] - e[0],
        levels_ghz: [e[0], e[1], e[2]],
        first_order,
        second_order,
        coupling_prefactor_ghz: 2.0 * p.ej_ghz * p.alpha4_effective(),
        ground,
        excited,
    })
}

/// Effective qubit-resonator coupling `g = 2 E_J a4 cos(pi f3) dpsi_1`, GHz.
pub fn coupling_strength(p: &CircuitParams, phase_slip: f64) -> f64 {
    2.0 * p.ej_ghz * p.alpha4_effective() * phase_slip
}

/// Lowest eigenvalues of the junction Hamiltonian (ascending), GHz.
pub fn junction_spectrum(p: &CircuitParams) -> Result<Vec<f64>> {
    let h = build_junction_hamiltonian(p, 0.0)?;
    let mut values: Vec<f64> = h.into_matrix().symmetric_eigenvalues().iter().copied().collect();
    values.sort_by(f64::total_cmp);
    Ok(values)
}

/// `E_1 - E_0` without computing eigenvectors.
pub fn qubit_frequency(p: &CircuitParams) -> Result<f64> {
    let e = junction_spectrum(p)?;
    Ok(e[1] - e[0])
}

/// Ground-energy shift (in units of `E_J`) when the charge cutoff grows by 4.
pub fn charge_cutoff_shift(p: &CircuitParams) -> Result<f64> {
    let e0 = junction_spectrum(p)?[0];
    let bigger = CircuitParams {
        n_max: p.n_max + 4,
        ..*p
    };
    let e1 = junction_spectrum(&bigger)?[0];
    Ok((e1 - e0).abs() / p.ej_ghz)
}

/// Largest ground-energy shift (units of `E_J`) accepted from [`charge_cutoff_shift`].
pub const CONVERGENCE_TOL: f64 = 1e-8;

/// Search interval and grid for [`calibrate_charging`].
pub const CHARGING_BOUNDS_GHZ: (f64, f64) = (0.1, 20.0);
const CHARGING_SCAN_POINTS: usize = 25;

/// Fits `E_c` so that the qubit splitting equals `target_ghz`.
///
/// The splitting is not monotone in `E_c` over the whole search interval, so
/// the interval is scanned on a logarithmic grid first and the lowest-`E_c`
/// bracket that straddles the target is bisected. Brackets where the charge
/// basis is not converged at the current `n_max` are skipped.
pub fn calibrate_charging(p: &CircuitParams, target_ghz: f64) -> Result<CircuitParams> {
    let with_ec = |ec: f64| CircuitParams { ec_ghz: ec, ..*p };
    with_ec(1.0).validate()?;
    let (lo, hi) = (CHARGING_BOUNDS_GHZ.0.ln(), CHARGING_BOUNDS_GHZ.1.ln());
    let grid: Vec<f64> = (0..CHARGING_SCAN_POINTS)
        .map(|i| lo + (hi - lo) * i as f64 / (CHARGING_SCAN_POINTS - 1) as f64)
        .collect();
    let mut scan = Vec::with_capacity(grid.len());
    for &x in &grid {
        scan.push(qubit_frequency(&with_ec(x.exp()))? - target_ghz);
    }
    let mut bracket = None;
    let mut unconverged = None;
    for k in 0..scan.len() - 1 {
        if scan[k] != 0.0 && scan[k].signum() == scan[k + 1].signum() {
            continue;
        }
        let shift = charge_cutoff_shift(&with_ec(grid[k].exp()))?;
        if shift < CONVERGENCE_TOL {
            bracket = Some(k);
            break;
        }
        unconverged.get_or_insert((grid[k].exp(), shift));
    }
    if let (None, Some((ec, shift))) = (bracket, unconverged) {
        return Err(Error::NumericalFailure(format!(
            "target is only reached near E_c = {ec:.4} GHz, where the charge cutoff n_max = {} is not converged (shift {shift:.2e} E_J)",
            p.n_max
        )));
    }
    let Some(k) = bracket else {
        let (mn, mx) = scan
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &d| (a.min(d), b.max(d)));
        return Err(Error::CalibrationFailure {
            target: target_ghz,
            low: mn + target_ghz,
            high: mx + target_ghz,
        });
    };
    let mut failure = None;
    let (x, _) = bisect(
        |x| match qubit_frequency(&with_ec(x.exp())) {
            Ok(w) => w - target_ghz,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        },
        grid[k],
        grid[k + 1],
        1e-6,
        100,
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(with_ec(x.exp()))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn working_point() -> CircuitParams {
        CircuitParams {
            ej_ghz: 221.0,
            alpha: 1.2,
            alpha4: 0.058,
            ec_ghz: 3.0,
            kinetic_a: 1.0,
            kinetic_b: 0.0,
            f1: 0.505,
            f2: 0.5,
            f3: 0.0,
            n_max: 8,
        }
    }

    #[test]
    fn potential_at_origin() {
        let mut p = working_point();
        p.f1 = 0.0;
        p.f2 = 0.0;
        p.f3 = 0.0;
        let u = inductive_potential(0.0, 0.0, 0.0, &p);
        assert!((u + (2.0 + p.alpha + 2.0 * p.alpha4)).abs() < 1e-14);
    }

    #[test]
    fn potential_sign_flip_at_f3_one() {
        let mut p = working_point();
        p.f1 = 0.0;
        p.f2 = 0.0;
        p.f3 = 1.0;
        // f~ = 1/2, so the coupler term is 2 a4 cos(pi) cos(pi) = +2 a4.
        let u = inductive_potential(0.0, 0.0, 0.0, &p);
        assert!((u - (-(2.0 + p.alpha) - 2.0 * p.alpha4)).abs() < 1e-14);
    }

    #[test]
    fn potential_periodicity() {
        let p = working_point();
        for i in 0..20 {
            let (a, b, d) = (0.3 * i as f64, -1.1 + 0.7 * i as f64, 0.05 * i as f64);
            let u = inductive_potential(a, b, d, &p);
            let shifted = CircuitParams { f1: p.f1 + 1.0, ..p };
            assert!((inductive_potential(a, b, d, &shifted) - u).abs() < 1e-12);
            let shifted = CircuitParams { f3: p.f3 + 2.0, ..p };
            assert!((inductive_potential(a, b, d, &shifted) - u).abs() < 1e-12);
        }
    }

    #[test]
    fn hamiltonian_is_hermitian() {
        let h = build_junction_hamiltonian(&working_point(), 0.2).unwrap();
        assert_eq!(h.hermiticity_defect(), 0.0);
    }

    #[test]
    fn cos_pi_exact_points() {
        assert_eq!(cos_pi(0.5), 0.0);
        assert_eq!(cos_pi(1.0), -1.0);
        assert_eq!(cos_pi(-0.5), 0.0);
        assert_eq!(cos_pi(2.0), 1.0);
        assert!((cos_pi(0.25) - (PI / 4.0).cos()).abs() < 1e-15);
    }

    #[test]
    fn coupling_strength_signs() {
        let p = working_point();
        let g0 = coupling_strength(&p, 0.1218);
        let g1 = coupling_strength(&CircuitParams { f3: 1.0, ..p }, 0.1218);
        let gh = coupling_strength(&CircuitParams { f3: 0.5, ..p }, 0.1218);
        assert_eq!(g1, -g0);
        assert_eq!(gh, 0.0);
    }

    #[test]
    fn spectrum_periodic_in_frustration() {
        let p = working_point();
        let base = junction_spectrum(&p).unwrap();
        for shifted in [CircuitParams { f1: p.f1 + 1.0, ..p }, CircuitParams { f3: p.f3 + 2.0, ..p }] {
            let s = junction_spectrum(&shifted).unwrap();
            for (a, b) in base.iter().zip(&s) {
                assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
            }
        }
    }

    #[test]
    fn gauge_invariance_of_magnitudes() {
        let q = project_qubit(&working_point()).unwrap();
        // Rotate eigenvector phases by hand and recompute the projections.
        let p = q.params;
        let e = &q.excited * C64::from_polar(1.0, 0.7);
        let g = &q.ground * C64::from_polar(1.0, -1.9);
        let sin_g = (apply_loop_phase(&p, &g) - apply_loop_phase_adjoint(&p, &g)) / C64::new(0.0, 2.0);
        let eg = element(&e, &sin_g);
        let mag = (q.first_order.x.powi(2) + q.first_order.y.powi(2)).sqrt();
        assert!((eg.norm() - mag).abs() < 1e-10);
    }

    #[test]
    fn degeneracy_is_refused() {
        // At f1 = 1/2 with tiny charging energy the two persistent-current
        // states are degenerate to far below 1e-6 E_J.
        let p = CircuitParams {
            f1: 0.5,
            f2: 0.5,
            ec_ghz: 0.2,
            ..working_point()
        };
        assert!(matches!(project_qubit(&p), Err(Error::Degeneracy(_))));
    }

    fn paper_point() -> CircuitParams {
        use std::sync::OnceLock;
        static CELL: OnceLock<CircuitParams> = OnceLock::new();
        *CELL.get_or_init(|| {
            let p = CircuitParams {
                n_max: DEFAULT_N_MAX,
                ..working_point()
            };
            calibrate_charging(&p, 10.94).unwrap()
        })
    }

    fn one_dof_spectrum(ej: f64, ec: f64, n_max: usize) -> Vec<f64> {
        let d = 2 * n_max + 1;
        let mut h = DMatrix::<f64>::zeros(d, d);
        for i in 0..d {
            let n = i as f64 - n_max as f64;
            h[(i, i)] = 4.0 * ec * n * n;
            if i + 1 < d {
                h[(i, i + 1)] = -0.5 * ej;
                h[(i + 1, i)] = -0.5 * ej;
            }
        }
        let mut v: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
        v.sort_by(f64::total_cmp);
        v
    }

    #[test]
    fn separable_limit_matches_single_junction() {
        let p = CircuitParams {
            alpha: 1e-300,
            alpha4: 0.0,
            ..working_point()
        };
        let single = one_dof_spectrum(p.ej_ghz, p.ec_ghz, p.n_max);
        let mut sums: Vec<f64> = single
            .iter()
            .flat_map(|a| single.iter().map(move |b| a + b))
            .collect();
        sums.sort_by(f64::total_cmp);
        let full = junction_spectrum(&p).unwrap();
        for (a, b) in full.iter().zip(&sums).take(20) {
            assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn charge_cutoff_converged() {
        let p = CircuitParams {
            n_max: 10,
            ..paper_point()
        };
        assert!(charge_cutoff_shift(&p).unwrap() < 1e-8);
    }

    fn projected(q: &QubitModel, op: &DMatrix<C64>) -> PauliCoefficients {
        let e = &q.excited;
        let g = &q.ground;
        PauliCoefficients::from_elements(
            e.dotc(&(op * e)),
            g.dotc(&(op * g)),
            e.dotc(&(op * g)),
        )
    }

    #[test]
    fn first_order_matches_richardson_difference() {
        let p = paper_point();
        let q = project_qubit(&p).unwrap();
        let h0 = build_junction_hamiltonian(&p, 0.0).unwrap().into_matrix();
        let at = |d: f64| build_junction_hamiltonian(&p, d).unwrap().into_matrix() - &h0;
        let central = |h: f64| (at(h) - at(-h)) / C64::new(2.0 * h, 0.0);
        let rich = (central(1e-4) * C64::new(4.0, 0.0) - central(2e-4)) / C64::new(3.0 * q.coupling_prefactor_ghz, 0.0);
        let c = projected(&q, &rich);
        for (a, b) in [(c.x, q.first_order.x), (c.y, q.first_order.y), (c.z, q.first_order.z), (c.identity, q.first_order.identity)] {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn projections_are_complete() {
        let p = paper_point();
        let q = project_qubit(&p).unwrap();
        let pref = q.coupling_prefactor_ghz;
        let h = |d: f64| build_junction_hamiltonian(&p, d).unwrap().into_matrix();
        // U(pi/2) - U(-pi/2) = 2 O1 and U(pi) - U(0) = 4 O2 hold exactly.
        let o1 = (h(PI / 2.0) - h(-PI / 2.0)) / C64::new(2.0, 0.0);
        let o2 = (h(PI) - h(0.0)) / C64::new(4.0, 0.0);
        for (op, c) in [(o1, q.first_order), (o2, q.second_order)] {
            let basis = [&q.excited, &q.ground];
            let mut frob = 0.0;
            for a in basis {
                for b in basis {
                    frob += a.dotc(&(&op * b)).norm_sqr();
                }
            }
            let expected = pref * pref * 2.0 * c.norm_sqr();
            assert!((frob - expected).abs() <= 1e-10 * expected.max(1.0), "{frob} vs {expected}");
        }
    }

    #[test]
    fn longitudinal_coupling_dominates() {
        let q = project_qubit(&paper_point()).unwrap();
        assert!(q.c_z().abs() > q.c_x().abs());
        assert!(q.first_order.y.abs() <= 0.01 * q.c_z().abs());
        let dpsi = 0.1218;
        let c2 = q.second_order;
        for v in [c2.x, c2.y, c2.z] {
            assert!((v * dpsi).abs() <= 0.01 * q.c_z().abs(), "{v}");
        }
    }

    #[test]
    fn calibration_round_trip_and_local_monotonicity() {
        let p = paper_point();
        let w = qubit_frequency(&p).unwrap();
        assert!((w - 10.94).abs() < 0.01);
        let scan: Vec<f64> = (0..10)
            .map(|i| qubit_frequency(&CircuitParams { ec_ghz: p.ec_ghz * (0.9 + 0.02 * i as f64), ..p }).unwrap())
            .collect();
        let rising = scan.windows(2).all(|w| w[1] > w[0]);
        let falling = scan.windows(2).all(|w| w[1] < w[0]);
        assert!(rising || falling, "{scan:?}");
    }

    #[test]
    fn calibration_reports_band() {
        let p = working_point();
        match calibrate_charging(&p, 1000.0) {
            Err(Error::CalibrationFailure { low, high, .. }) => assert!(low < high && high < 1000.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn working_point_coupling_ratios() {
        let p = CircuitParams { ej_ghz: 221.0, alpha4: 0.058, ..working_point() };
        let r: Vec<f64> = [0.0, 1.0, 0.5]
            .iter()
            .map(|&f3| coupling_strength(&CircuitParams { f3, ..p }, 0.1218) / 7.0)
            .collect();
        assert!((r[0] - 0.446).abs() <= 0.001);
        assert!((r[1] + 0.446).abs() <= 0.001);
        assert_eq!(r[2], 0.0);
        let g = coupling_strength(&CircuitParams { alpha4: 0.12, ..p }, 0.0768) / 8.01;
        assert!((g - 0.509).abs() <= 0.001, "{g}");
    }

    #[test]
    fn rejects_small_cutoff() {
        let p = CircuitParams {
            n_max: 3,
            ..working_point()
        };
        assert!(matches!(build_junction_hamiltonian(&p, 0.0), Err(Error::InvalidArgument(_))));
    }
}
