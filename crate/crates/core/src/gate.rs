//! Four-step controlled-phase protocol between two qubits sharing a cavity.
//!
//! Steps 1 and 3 switch on qubit 1's coupling for `t1`, steps 2 and 4 switch
//! on qubit 2's coupling for `t2 = (pi - w_r t1) / w_r`. Each step displaces
//! the field conditionally on the active qubit, the field returns to its
//! initial state after the full cycle, and the accumulated geometric phase is
//! `4 sin(w_r t1) g1 g2 / w_r^2 sz(1) sz(2)`.
//!
//! Frequencies and couplings are cyclic GHz, times are ns. Every Hamiltonian
//! assembled here is converted to angular units (rad/ns) exactly once, at
//! assembly. The step Hamiltonian is
//!
//! ```text
//! H = sum_i w_qi/2 sz(i) + sum_n w_n a_n^dag a_n
//!     - sum_i sum_n g_in (a_n + a_n^dag) (c_z,i sz(i) + c_x,i sx(i))
//! ```

use crate::error::{invalid, Error, Result};
use crate::junction::{cos_pi, QubitModel};
use crate::ops::{
    displacement, embed, free_rotation, number, qubit_projector, quadrature, sigma_x, sigma_z, DensityMatrix,
    Factor, HermitianEigen, OperatorMatrix, SpaceShape, SparseHermitian, StateVector, C64,
};
use crate::resonator::ModeSet;
use crate::roots::bisect;
use alloc::{format, vec, vec::Vec};
use core::f64::consts::PI;
use nalgebra::DVector;
#[cfg_attr(test, allow(unused_imports))]
#[allow(unused_imports)] // only used when std is not linked
use num_traits::Float;

/// Minimum `g1 g2 / w_r^2` for which the CPHASE condition can be met.
pub const MIN_COUPLING_PRODUCT: f64 = PI / 16.0;

/// Mean occupation within this many levels of `N_trunc` counts as
/// truncation; the population of those top levels is reported alongside.
pub const TRUNCATION_MARGIN: usize = 5;

/// Active blocks up to this dimension are propagated densely.
pub const DENSE_BLOCK_LIMIT: usize = 1024;

/// Smooth-switching time of an 80 GHz switching rate, ns.
pub const DEFAULT_RAMP_NS: f64 = 0.0125;

/// Fock cutoff used for cavity modes above the fundamental.
pub const HIGHER_MODE_N_TRUNC: usize = 12;

/// Flux-bias settings of the coupler loop.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FluxBias {
    /// `f3 = 0`: full positive coupling.
    Maximal,
    /// `f3 = 1`: full coupling with reversed sign.
    Inverted,
    /// `f3 = 1/2`: coupling switched off.
    Off,
}

impl FluxBias {
    pub fn f3(self) -> f64 {
        match self {
            FluxBias::Maximal => 0.0,
            FluxBias::Inverted => 1.0,
            FluxBias::Off => 0.5,
        }
    }

    /// `cos(pi f3)`.
    pub fn coupling_factor(self) -> f64 {
        cos_pi(self.f3())
    }
}

/// `w_r t1` (rad) solving `4 sin(w_r t1) g1 g2 / w_r^2 = pi / 4` on `(0, pi/2]`,
/// returned as `t1` in ns.
pub fn solve_t1(g1_ghz: f64, g2_ghz: f64, omega_r_ghz: f64) -> Result<f64> {
    if !(omega_r_ghz > 0.0 && omega_r_ghz.is_finite()) {
        return Err(invalid(format!("resonator frequency must be positive, got {omega_r_ghz}")));
    }
    let product = g1_ghz * g2_ghz / (omega_r_ghz * omega_r_ghz);
    if !(product >= MIN_COUPLING_PRODUCT) {
        return Err(Error::Unsatisfiable {
            product,
            minimum: MIN_COUPLING_PRODUCT,
        });
    }
    let theta = (PI / (16.0 * product)).min(1.0).asin();
    Ok(theta / (2.0 * PI * omega_r_ghz))
}

/// Timing and flux settings of the four steps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProtocolSchedule {
    pub omega_r_ghz: f64,
    pub t1_ns: f64,
    pub t2_ns: f64,
    /// Bias of each qubit's coupler during its active steps.
    pub active_bias: [FluxBias; 2],
    /// Rise and fall time of each coupling pulse, ns (0 = instantaneous).
    pub ramp_ns: f64,
}

impl ProtocolSchedule {
    pub fn new(omega_r_ghz: f64, t1_ns: f64, ramp_ns: f64) -> Result<Self> {
        if !(omega_r_ghz > 0.0 && omega_r_ghz.is_finite()) {
            return Err(invalid(format!("resonator frequency must be positive, got {omega_r_ghz}")));
        }
        let w = 2.0 * PI * omega_r_ghz;
        let theta = w * t1_ns;
        if !(theta > 0.0 && theta <= PI / 2.0 * (1.0 + 1e-12)) {
            return Err(invalid(format!("w_r t1 = {theta} outside (0, pi/2]")));
        }
        if !(ramp_ns >= 0.0 && ramp_ns.is_finite()) {
            return Err(invalid(format!("ramp time must be >= 0, got {ramp_ns}")));
        }
        let t2_ns = (PI - theta) / w;
        if 2.0 * ramp_ns > t1_ns.min(t2_ns) {
            return Err(invalid(format!(
                "ramp time {ramp_ns} ns does not fit twice into the shorter step ({} ns)",
                t1_ns.min(t2_ns)
            )));
        }
        Ok(ProtocolSchedule {
            omega_r_ghz,
            t1_ns,
            t2_ns,
            active_bias: [FluxBias::Maximal; 2],
            ramp_ns,
        })
    }

    /// Schedule whose `t1` satisfies the CPHASE condition for `gp`.
    ///
    /// Without ramps this is [`solve_t1`]. With ramps the entangling phase is
    /// integrated for the actual pulse shapes and `t1` is found by bisection
    /// on the lowest bracket; when no `t1` reaches `pi/4` the error carries
    /// the coupling product that would be needed.
    pub fn for_gate(gp: &GateParams, ramp_ns: f64) -> Result<Self> {
        let (l1, l2) = (gp.lambda(0), gp.lambda(1));
        let w = gp.omega_r_ghz();
        if ramp_ns == 0.0 {
            let t1 = solve_t1(l1 * w, l2 * w, w)?;
            return ProtocolSchedule::new(w, t1, 0.0);
        }
        if !(ramp_ns > 0.0 && ramp_ns.is_finite()) {
            return Err(invalid(format!("ramp time must be >= 0, got {ramp_ns}")));
        }
        let product = l1 * l2;
        let half_period = 1.0 / (2.0 * w);
        let lo = 2.0 * ramp_ns;
        let hi = (0.5 * half_period).min(half_period - 2.0 * ramp_ns);
        if !(lo < hi) {
            return Err(Error::Unsatisfiable {
                product,
                minimum: f64::INFINITY,
            });
        }
        let phase_at = |t1: f64| -> Result<f64> {
            let s = ProtocolSchedule::new(w, t1, ramp_ns)?;
            Ok(pulse_integrals(&s, gp).entangling.abs() - PI / 4.0)
        };
        let n = RAMP_T1_SCAN;
        let grid: Vec<f64> = (0..=n).map(|k| lo + (hi - lo) * k as f64 / n as f64).collect();
        let mut values = Vec::with_capacity(grid.len());
        for &t in &grid {
            values.push(phase_at(t)?);
        }
        let Some(k) = values.windows(2).position(|v| v[0] <= 0.0 && v[1] >= 0.0) else {
            let best = values.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b)) + PI / 4.0;
            return Err(Error::Unsatisfiable {
                product,
                minimum: product.abs() * (PI / 4.0) / best,
            });
        };
        let (t1, _) = bisect(
            |t| phase_at(t).unwrap_or(f64::NAN),
            grid[k],
            grid[k + 1],
            1e-13,
            200,
        )?;
        ProtocolSchedule::new(w, t1, ramp_ns)
    }

    pub fn with_active_bias(mut self, bias: [FluxBias; 2]) -> Result<Self> {
        if bias.contains(&FluxBias::Off) {
            return Err(invalid("active steps need a coupling-on flux bias"));
        }
        self.active_bias = bias;
        Ok(self)
    }

    /// `w_r t1` in radians.
    pub fn theta1(&self) -> f64 {
        2.0 * PI * self.omega_r_ghz * self.t1_ns
    }

    /// `w_r t2` in radians.
    pub fn theta2(&self) -> f64 {
        2.0 * PI * self.omega_r_ghz * self.t2_ns
    }

    fn check_step(step: usize) -> Result<()> {
        if (1..=4).contains(&step) {
            Ok(())
        } else {
            Err(invalid(format!("step must be 1..=4, got {step}")))
        }
    }

    /// Index (0 or 1) of the qubit whose coupling is on during `step`.
    pub fn active_qubit(step: usize) -> Result<usize> {
        Self::check_step(step)?;
        Ok((step + 1) % 2)
    }

    /// Flat-top duration of `step`, ns.
    pub fn step_duration(&self, step: usize) -> Result<f64> {
        Ok(if Self::active_qubit(step)? == 0 {
            self.t1_ns
        } else {
            self.t2_ns
        })
    }

    /// Coupler bias of both qubits during `step`.
    pub fn step_bias(&self, step: usize) -> Result<[FluxBias; 2]> {
        let a = Self::active_qubit(step)?;
        let mut b = [FluxBias::Off; 2];
        b[a] = self.active_bias[a];
        Ok(b)
    }

    /// `2 (t1 + t2) = 2 pi / w_r`; ramps sit inside the steps.
    pub fn gate_time(&self) -> f64 {
        2.0 * (self.t1_ns + self.t2_ns)
    }

    /// Coupling envelope in `[0, 1]` at time `x` into a step of length `len`:
    /// `sin^2` rise over the ramp time, flat top, mirrored `cos^2` fall.
    pub fn envelope(&self, x: f64, len: f64) -> f64 {
        let tau = self.ramp_ns;
        if x < 0.0 || x > len {
            0.0
        } else if tau > 0.0 && x < tau {
            (PI * x / (2.0 * tau)).sin().powi(2)
        } else if tau > 0.0 && x > len - tau {
            (PI * (x - (len - tau)) / (2.0 * tau)).cos().powi(2)
        } else {
            1.0
        }
    }
}

/// Per-qubit parameters of the gate Hamiltonian.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QubitGateParams {
    /// Qubit splitting with the coupling on, GHz.
    pub omega_up_ghz: f64,
    /// Qubit splitting with the coupling off, GHz.
    pub omega_down_ghz: f64,
    /// Coupling to the fundamental at `f3 = 0`, GHz (signed).
    pub g_ghz: f64,
    pub c_z: f64,
    pub c_x: f64,
}

impl QubitGateParams {
    /// From the coupling-on (`f3 = 0`) and coupling-off (`f3 = 1/2`) models
    /// of the same cell and the fundamental-mode phase slip.
    pub fn from_models(on: &QubitModel, off: &QubitModel, phase_slip: f64) -> Self {
        let p = on.params;
        QubitGateParams {
            omega_up_ghz: on.omega_q_ghz,
            omega_down_ghz: off.omega_q_ghz,
            g_ghz: 2.0 * p.ej_ghz * p.alpha4 * phase_slip,
            c_z: on.first_order.z,
            c_x: on.first_order.x,
        }
    }
}

/// One cavity mode kept in the dynamics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CavityMode {
    pub freq_ghz: f64,
    /// Coupling relative to the fundamental, `dpsi_n / dpsi_1`.
    pub coupling_scale: f64,
    pub n_trunc: usize,
}

/// Everything the gate dynamics needs.
#[derive(Clone, Debug, PartialEq)]
pub struct GateParams {
    pub qubits: [QubitGateParams; 2],
    /// Fundamental first.
    pub modes: Vec<CavityMode>,
}

impl GateParams {
    pub fn single_mode(omega_r_ghz: f64, qubits: [QubitGateParams; 2], n_trunc: usize) -> Result<Self> {
        let gp = GateParams {
            qubits,
            modes: vec![CavityMode {
                freq_ghz: omega_r_ghz,
                coupling_scale: 1.0,
                n_trunc,
            }],
        };
        gp.validate()?;
        Ok(gp)
    }

    /// Uses the first `n_modes` modes of `modes`, scaling couplings by the
    /// phase-slip ratio to the fundamental.
    pub fn from_mode_set(
        modes: &ModeSet,
        n_modes: usize,
        qubits: [QubitGateParams; 2],
        n_trunc: usize,
    ) -> Result<Self> {
        if n_modes == 0 || n_modes > modes.modes.len() {
            return Err(invalid(format!(
                "requested {n_modes} modes, {} available",
                modes.modes.len()
            )));
        }
        let base = modes.fundamental().phase_slip;
        let gp = GateParams {
            qubits,
            modes: modes.modes[..n_modes]
                .iter()
                .enumerate()
                .map(|(i, m)| CavityMode {
                    freq_ghz: m.freq_ghz,
                    coupling_scale: m.phase_slip / base,
                    n_trunc: if i == 0 { n_trunc } else { HIGHER_MODE_N_TRUNC },
                })
                .collect(),
        };
        gp.validate()?;
        Ok(gp)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.modes.len()) {
            return Err(invalid(format!("1 to 3 cavity modes supported, got {}", self.modes.len())));
        }
        for (n, m) in self.modes.iter().enumerate() {
            if !(m.freq_ghz > 0.0 && m.freq_ghz.is_finite() && m.coupling_scale.is_finite()) {
                return Err(invalid(format!("mode {n} has invalid frequency or coupling")));
            }
            if m.n_trunc <= TRUNCATION_MARGIN {
                return Err(invalid(format!(
                    "mode {n} needs N_trunc > {TRUNCATION_MARGIN}, got {}",
                    m.n_trunc
                )));
            }
        }
        for (i, q) in self.qubits.iter().enumerate() {
            let v = [q.omega_up_ghz, q.omega_down_ghz, q.g_ghz, q.c_z, q.c_x];
            if v.iter().any(|x| !x.is_finite()) || q.omega_up_ghz <= 0.0 || q.omega_down_ghz <= 0.0 {
                return Err(invalid(format!("qubit {} parameters invalid", i + 1)));
            }
        }
        Ok(())
    }

    pub fn omega_r_ghz(&self) -> f64 {
        self.modes[0].freq_ghz
    }

    /// Longitudinal displacement amplitude `g c_z / w_r` of qubit `i` at `f3 = 0`.
    pub fn lambda(&self, i: usize) -> f64 {
        self.qubits[i].g_ghz * self.qubits[i].c_z / self.omega_r_ghz()
    }

    /// `[Q, Q, Fock, ...]`.
    pub fn shape(&self) -> SpaceShape {
        let mut f = vec![Factor::Qubit, Factor::Qubit];
        f.extend(self.modes.iter().map(|m| Factor::Fock(m.n_trunc)));
        SpaceShape::new(f).expect("validated modes")
    }

    fn mode_space(&self) -> (usize, Vec<usize>, Vec<usize>) {
        let dims: Vec<usize> = self.modes.iter().map(|m| m.n_trunc).collect();
        let mut strides = vec![1; dims.len()];
        for k in (0..dims.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * dims[k + 1];
        }
        (dims.iter().product(), dims, strides)
    }
}

/// Instantaneous qubit frequency and coupling of one qubit.
#[derive(Clone, Copy, Debug)]
struct Drive {
    omega_ghz: f64,
    /// Signed coupling to the fundamental, GHz.
    g_ghz: f64,
}

fn drive(gp: &GateParams, qubit: usize, bias: FluxBias, profile: f64) -> Drive {
    let q = &gp.qubits[qubit];
    if bias == FluxBias::Off {
        return Drive {
            omega_ghz: q.omega_down_ghz,
            g_ghz: 0.0,
        };
    }
    Drive {
        omega_ghz: q.omega_down_ghz + profile * (q.omega_up_ghz - q.omega_down_ghz),
        g_ghz: profile * bias.coupling_factor() * q.g_ghz,
    }
}

/// Full step Hamiltonian (rad/ns) on [`GateParams::shape`], assembled from
/// the dense operator primitives.
pub fn step_hamiltonian(step: usize, sched: &ProtocolSchedule, gp: &GateParams) -> Result<OperatorMatrix> {
    gp.validate()?;
    let bias = sched.step_bias(step)?;
    let shape = gp.shape();
    let mut h = OperatorMatrix::zeros(&shape);
    let re = |x: f64| C64::new(x, 0.0);
    let (sz, sx) = (sigma_z(), sigma_x());
    for i in 0..2 {
        let d = drive(gp, i, bias[i], 1.0);
        h.add_product_term(re(PI * d.omega_ghz), &[(i, &sz)])?;
        for (n, m) in gp.modes.iter().enumerate() {
            let g = 2.0 * PI * d.g_ghz * m.coupling_scale;
            if g == 0.0 {
                continue;
            }
            let x = quadrature(m.n_trunc)?;
            let q = &gp.qubits[i];
            h.add_product_term(re(-g * q.c_z), &[(i, &sz), (n + 2, &x)])?;
            if q.c_x != 0.0 {
                h.add_product_term(re(-g * q.c_x), &[(i, &sx), (n + 2, &x)])?;
            }
        }
    }
    for (n, m) in gp.modes.iter().enumerate() {
        h.add_product_term(re(2.0 * PI * m.freq_ghz), &[(n + 2, &number(m.n_trunc)?)])?;
    }
    Ok(h)
}

/// Hamiltonian (rad/ns) of the active qubit and the cavity modes, on
/// `[Q, Fock, ...]`, built entry by entry.
fn active_block(gp: &GateParams, qubit: usize, d: Drive) -> SparseHermitian {
    let (m_dim, dims, strides) = gp.mode_space();
    let q = &gp.qubits[qubit];
    let mut h = SparseHermitian::zeros(2 * m_dim);
    for s_idx in 0..2 {
        let s = if s_idx == 0 { 1.0 } else { -1.0 };
        for m in 0..m_dim {
            let i = s_idx * m_dim + m;
            let mut diag = PI * d.omega_ghz * s;
            for (n, mode) in gp.modes.iter().enumerate() {
                let k = (m / strides[n]) % dims[n];
                diag += 2.0 * PI * mode.freq_ghz * k as f64;
                let g = 2.0 * PI * d.g_ghz * mode.coupling_scale;
                if g == 0.0 || k + 1 == dims[n] {
                    continue;
                }
                let amp = ((k + 1) as f64).sqrt();
                let up = m + strides[n];
                let zz = C64::new(-g * q.c_z * s * amp, 0.0);
                h.add(s_idx * m_dim + up, i, zz);
                h.add(i, s_idx * m_dim + up, zz);
                if q.c_x != 0.0 {
                    let j = (1 - s_idx) * m_dim + up;
                    let xx = C64::new(-g * q.c_x * amp, 0.0);
                    h.add(j, i, xx);
                    h.add(i, j, xx);
                }
            }
            h.add(i, i, C64::new(diag, 0.0));
        }
    }
    h
}

fn block_shape(gp: &GateParams) -> SpaceShape {
    let mut f = vec![Factor::Qubit];
    f.extend(gp.modes.iter().map(|m| Factor::Fock(m.n_trunc)));
    SpaceShape::new(f).expect("validated modes")
}

enum BlockPropagator {
    Dense(HermitianEigen),
    Sparse(SparseHermitian),
}

impl BlockPropagator {
    fn new(gp: &GateParams, h: SparseHermitian) -> Result<Self> {
        Ok(if h.dim() <= DENSE_BLOCK_LIMIT {
            BlockPropagator::Dense(HermitianEigen::new(&h.to_operator(block_shape(gp))?)?)
        } else {
            BlockPropagator::Sparse(h)
        })
    }

    fn evolve(&self, psi: &DVector<C64>, t: f64) -> Result<DVector<C64>> {
        match self {
            BlockPropagator::Dense(e) => Ok(e.evolve(psi, t)),
            BlockPropagator::Sparse(h) => h.evolve(psi, t),
        }
    }
}

/// Evolves `psi` for `dt` with qubit `active` driven by `d` and the other
/// qubit idle at its coupling-off frequency.
fn evolve_segment(gp: &GateParams, psi: &mut DVector<C64>, active: usize, d: Drive, dt: f64) -> Result<()> {
    let (m_dim, _, _) = gp.mode_space();
    let prop = BlockPropagator::new(gp, active_block(gp, active, d))?;
    let idle = 1 - active;
    let w_idle = gp.qubits[idle].omega_down_ghz;
    for b in 0..2 {
        let s = if b == 0 { 1.0 } else { -1.0 };
        let full = |a_idx: usize, m: usize| {
            let (s1, s2) = if active == 0 { (a_idx, b) } else { (b, a_idx) };
            s1 * 2 * m_dim + s2 * m_dim + m
        };
        let block = DVector::from_fn(2 * m_dim, |i, _| psi[full(i / m_dim, i % m_dim)]);
        let out = prop.evolve(&block, dt)? * C64::from_polar(1.0, -PI * w_idle * s * dt);
        for i in 0..2 * m_dim {
            psi[full(i / m_dim, i % m_dim)] = out[i];
        }
    }
    Ok(())
}

/// Closed-form unitary of `step` on [`GateParams::shape`] for a single mode,
/// transverse coupling ignored and switching instantaneous:
/// `e^{i l^2 (th - sin th)} e^{-i (w_a sz_a + w_b sz_b) t / 2} R(th) D(l (e^{i th} - 1) sz_a)`
/// with `th = w_r t` and `l = g c_z / w_r`.
pub fn analytic_step_unitary(step: usize, sched: &ProtocolSchedule, gp: &GateParams) -> Result<OperatorMatrix> {
    gp.validate()?;
    if gp.modes.len() != 1 {
        return Err(Error::Unsupported("the closed-form step unitary is single-mode".into()));
    }
    if sched.ramp_ns != 0.0 {
        return Err(Error::Unsupported("the closed-form step unitary assumes instantaneous switching".into()));
    }
    let a = ProtocolSchedule::active_qubit(step)?;
    let t = sched.step_duration(step)?;
    let bias = sched.step_bias(step)?;
    let n = gp.modes[0].n_trunc;
    let shape = gp.shape();
    let theta = 2.0 * PI * gp.omega_r_ghz() * t;
    let lam = drive(gp, a, bias[a], 1.0).g_ghz * gp.qubits[a].c_z / gp.omega_r_ghz();

    let w = [drive(gp, 0, bias[0], 1.0).omega_ghz, drive(gp, 1, bias[1], 1.0).omega_ghz];
    let global = lam * lam * (theta - theta.sin());
    let mut diag = Vec::with_capacity(shape.dim());
    for idx in 0..4 {
        let s = [sign_of(idx / 2), sign_of(idx % 2)];
        let ph = C64::from_polar(1.0, global - PI * (w[0] * s[0] + w[1] * s[1]) * t);
        diag.extend(core::iter::repeat_n(ph, n));
    }
    let phases = OperatorMatrix::diagonal(&shape, &diag)?;

    let beta = (C64::from_polar(1.0, theta) - 1.0) * lam;
    let mut cd = OperatorMatrix::zeros(&shape);
    for s in [1i8, -1] {
        let d = displacement(beta * f64::from(s), n)?;
        cd.add_product_term(C64::new(1.0, 0.0), &[(a, &qubit_projector(s)), (2, &d)])?;
    }
    let rot = embed(&free_rotation(theta, n)?, 2, &shape)?;
    phases.compose(&rot)?.compose(&cd)
}

fn sign_of(idx: usize) -> f64 {
    if idx == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Grid for the ramped `t1` search.
const RAMP_T1_SCAN: usize = 64;
/// RK4 steps per smooth piece of the pulse sequence.
const PULSE_RK4_STEPS: usize = 2000;

/// Phase-space integrals of the longitudinal drive over the whole protocol.
///
/// With `f(t) = sum_i F_i(t) s_i` the field picks up the phase
/// `int_0^T dt f(t) int_0^t dt' f(t') sin(w_r (t - t'))` and ends displaced by
/// `int f e^{-i w_r t}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PulseIntegrals {
    /// Coefficient of `s1 s2` in the phase.
    pub entangling: f64,
    /// Coefficients of `s1^2` and `s2^2` (global).
    pub self_phase: [f64; 2],
    /// `|int F_i e^{-i w_r t} dt|`, zero when the field returns.
    pub residual_displacement: [f64; 2],
}

/// Integrates [`PulseIntegrals`] with RK4 on each smooth piece of the
/// pulse sequence.
pub fn pulse_integrals(sched: &ProtocolSchedule, gp: &GateParams) -> PulseIntegrals {
    let w = 2.0 * PI * sched.omega_r_ghz;
    let amp = [0, 1].map(|i| 2.0 * PI * gp.qubits[i].g_ghz * gp.qubits[i].c_z * sched.active_bias[i].coupling_factor());
    let (t1, t2, tau) = (sched.t1_ns, sched.t2_ns, sched.ramp_ns);
    let starts = [0.0, t1, t1 + t2, 2.0 * t1 + t2];
    let drive_at = |t: f64| -> [f64; 2] {
        let mut f = [0.0; 2];
        for (k, &t0) in starts.iter().enumerate() {
            let len = if k % 2 == 0 { t1 } else { t2 };
            if t >= t0 && t <= t0 + len {
                f[k % 2] = amp[k % 2] * sched.envelope(t - t0, len);
            }
        }
        f
    };
    // y = (I1, I2, Phi11, Phi22, Phi12 + Phi21)
    #[derive(Clone, Copy)]
    struct Y {
        i: [C64; 2],
        p: [f64; 3],
    }
    let rhs = |t: f64, y: &Y, f: [f64; 2]| -> Y {
        let e = C64::from_polar(1.0, -w * t);
        let rot = e.conj();
        let im = |i: usize| (rot * y.i[i]).im;
        Y {
            i: [e * f[0], e * f[1]],
            p: [f[0] * im(0), f[1] * im(1), f[0] * im(1) + f[1] * im(0)],
        }
    };
    let axpy = |y: &Y, h: f64, k: &Y| Y {
        i: [y.i[0] + k.i[0] * h, y.i[1] + k.i[1] * h],
        p: [y.p[0] + h * k.p[0], y.p[1] + h * k.p[1], y.p[2] + h * k.p[2]],
    };
    let mut y = Y {
        i: [C64::new(0.0, 0.0); 2],
        p: [0.0; 3],
    };
    let mut edges = Vec::new();
    for (k, &t0) in starts.iter().enumerate() {
        let len = if k % 2 == 0 { t1 } else { t2 };
        edges.extend([t0, t0 + tau, t0 + len - tau]);
    }
    edges.push(2.0 * (t1 + t2));
    for piece in edges.windows(2) {
        let (a, b) = (piece[0], piece[1]);
        if b <= a {
            continue;
        }
        let h = (b - a) / PULSE_RK4_STEPS as f64;
        // Sample strictly inside the piece so the envelope branch is unambiguous.
        let eval = |t: f64| drive_at(t.clamp(a + 1e-3 * h, b - 1e-3 * h));
        for n in 0..PULSE_RK4_STEPS {
            let t = a + n as f64 * h;
            let k1 = rhs(t, &y, eval(t));
            let k2 = rhs(t + 0.5 * h, &axpy(&y, 0.5 * h, &k1), eval(t + 0.5 * h));
            let k3 = rhs(t + 0.5 * h, &axpy(&y, 0.5 * h, &k2), eval(t + 0.5 * h));
            let k4 = rhs(t + h, &axpy(&y, h, &k3), eval(t + h));
            y = Y {
                i: [0, 1].map(|j| y.i[j] + (k1.i[j] + k2.i[j] * 2.0 + k3.i[j] * 2.0 + k4.i[j]) * (h / 6.0)),
                p: [0, 1, 2].map(|j| y.p[j] + (k1.p[j] + 2.0 * k2.p[j] + 2.0 * k3.p[j] + k4.p[j]) * (h / 6.0)),
            };
        }
    }
    PulseIntegrals {
        entangling: y.p[2],
        self_phase: [y.p[0], y.p[1]],
        residual_displacement: [y.i[0].norm(), y.i[1].norm()],
    }
}

/// Two-qubit unitary of the whole protocol with transverse coupling ignored:
/// diagonal with phase
/// `-(w1u t1 + w1d t2) s1 - (w2d t1 + w2u t2) s2 + 4 sin(w_r t1) l1 l2 s1 s2`
/// (angular frequencies) plus the global phase
/// `2 [l1^2 (th1 - sin th1) + l2^2 (th2 - sin th2)]`.
pub fn compose_gate_closed_form(sched: &ProtocolSchedule, gp: &GateParams) -> Result<OperatorMatrix> {
    gp.validate()?;
    let (t1, t2) = (sched.t1_ns, sched.t2_ns);
    let (th1, th2) = (sched.theta1(), sched.theta2());
    let lam = |i: usize| gp.lambda(i) * sched.active_bias[i].coupling_factor();
    let (l1, l2) = (lam(0), lam(1));
    let q = &gp.qubits;
    // Each active step spends `t - ramp` at the coupling-on frequency on average.
    let tau = sched.ramp_ns;
    let a1 = 2.0 * PI * (q[0].omega_up_ghz * (t1 - tau) + q[0].omega_down_ghz * (t2 + tau));
    let a2 = 2.0 * PI * (q[1].omega_down_ghz * (t1 + tau) + q[1].omega_up_ghz * (t2 - tau));
    let (ent, global) = if tau == 0.0 {
        (
            4.0 * th1.sin() * l1 * l2,
            2.0 * (l1 * l1 * (th1 - th1.sin()) + l2 * l2 * (th2 - th2.sin())),
        )
    } else {
        let p = pulse_integrals(sched, gp);
        (p.entangling, p.self_phase[0] + p.self_phase[1])
    };
    let diag: Vec<C64> = (0..4)
        .map(|idx| {
            let (s1, s2) = (sign_of(idx / 2), sign_of(idx % 2));
            C64::from_polar(1.0, global - a1 * s1 - a2 * s2 + ent * s1 * s2)
        })
        .collect();
    let shape = SpaceShape::new([Factor::Qubit, Factor::Qubit].to_vec())?;
    OperatorMatrix::diagonal(&shape, &diag)
}

/// Local-invariant phase `phi_00 + phi_11 - phi_01 - phi_10` of a diagonal
/// two-qubit unitary, wrapped to `(-pi, pi]`. `|result| = pi` means the gate
/// is locally equivalent to CPHASE.
pub fn cphase_equivalence(u: &OperatorMatrix) -> Result<f64> {
    if u.dim() != 4 {
        return Err(invalid(format!("expected a 4x4 unitary, got dimension {}", u.dim())));
    }
    let defect = u.unitarity_defect();
    if defect > 1e-8 {
        return Err(invalid(format!("operator is not unitary (defect {defect:e})")));
    }
    let ph = |i: usize| u.get(i, i).arg();
    Ok(wrap_phase(ph(0) + ph(3) - ph(1) - ph(2)))
}

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_phase(x: f64) -> f64 {
    let r = x.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// `|q> (x) |0> (x) ...` on [`GateParams::shape`].
pub fn with_cavity_vacuum(gp: &GateParams, qubits: &StateVector) -> Result<StateVector> {
    if qubits.shape().factors() != [Factor::Qubit, Factor::Qubit] {
        return Err(invalid("expected a two-qubit state"));
    }
    let mut parts = vec![qubits.clone()];
    for m in &gp.modes {
        parts.push(StateVector::fock(m.n_trunc, 0)?);
    }
    StateVector::product(&parts)
}

/// Two-qubit factor of a product state `|q> (x) |chi>`.
pub fn qubit_factor(initial: &StateVector) -> Result<StateVector> {
    let rho = initial.reduced_density_matrix(&[0, 1])?;
    let purity = rho.purity();
    if (purity - 1.0).abs() > 1e-10 {
        return Err(invalid(format!(
            "initial state is entangled with the cavity (qubit purity {purity})"
        )));
    }
    let amps = initial.amplitudes();
    let m = amps.len() / 4;
    let col = (0..m)
        .max_by(|&a, &b| {
            let na: f64 = (0..4).map(|s| amps[s * m + a].norm_sqr()).sum();
            let nb: f64 = (0..4).map(|s| amps[s * m + b].norm_sqr()).sum();
            na.total_cmp(&nb)
        })
        .unwrap_or(0);
    let v = DVector::from_fn(4, |s, _| amps[s * m + col]);
    StateVector::normalized(SpaceShape::new([Factor::Qubit, Factor::Qubit].to_vec())?, v)
}

/// Ideal two-qubit output: the closed-form gate applied to the qubit part of
/// `initial`.
pub fn ideal_output(sched: &ProtocolSchedule, gp: &GateParams, initial: &StateVector) -> Result<StateVector> {
    compose_gate_closed_form(sched, gp)?.apply(&qubit_factor(initial)?)
}

/// `<psi|rho|psi>` with `rho` the two-qubit reduced state of `final_state` and
/// `psi` the ideal output for `initial`.
pub fn state_fidelity(
    final_state: &StateVector,
    gp: &GateParams,
    sched: &ProtocolSchedule,
    initial: &StateVector,
) -> Result<f64> {
    if final_state.shape() != initial.shape() || *final_state.shape() != gp.shape() {
        return Err(invalid("final, initial and gate shapes differ"));
    }
    let ideal = ideal_output(sched, gp, initial)?;
    final_state.reduced_density_matrix(&[0, 1])?.fidelity_with_pure(&ideal)
}

/// Outcome of [`numeric_protocol`].
#[derive(Clone, Debug, PartialEq)]
pub struct GateReport {
    pub fidelity: f64,
    /// Local-invariant phase read from the reduced state, when every
    /// two-qubit amplitude of the initial state is non-zero.
    pub two_qubit_phase: Option<f64>,
    pub qubit_purity: f64,
    pub gate_time_ns: f64,
    /// Largest mean occupation per mode over all checkpoints.
    pub max_mean_occupation: Vec<f64>,
    /// Largest population in the top `TRUNCATION_MARGIN` levels per mode.
    pub max_tail_weight: Vec<f64>,
    /// Integration steps per ramp after convergence (0 without ramps).
    pub ramp_steps: usize,
}

#[derive(Default)]
struct Occupation {
    mean: Vec<f64>,
    tail: Vec<f64>,
}

impl Occupation {
    fn record(&mut self, gp: &GateParams, psi: &DVector<C64>) -> Result<()> {
        let (m_dim, dims, strides) = gp.mode_space();
        if self.mean.is_empty() {
            self.mean = vec![0.0; dims.len()];
            self.tail = vec![0.0; dims.len()];
        }
        let mut mean = vec![0.0; dims.len()];
        let mut tail = vec![0.0; dims.len()];
        for (i, z) in psi.iter().enumerate() {
            let p = z.norm_sqr();
            let m = i % m_dim;
            for n in 0..dims.len() {
                let k = (m / strides[n]) % dims[n];
                mean[n] += p * k as f64;
                if k + TRUNCATION_MARGIN >= dims[n] {
                    tail[n] += p;
                }
            }
        }
        for n in 0..dims.len() {
            self.mean[n] = self.mean[n].max(mean[n]);
            self.tail[n] = self.tail[n].max(tail[n]);
            if mean[n] + TRUNCATION_MARGIN as f64 >= dims[n] as f64 {
                return Err(Error::Truncation {
                    mode: n + 1,
                    occupation: mean[n],
                    tail_weight: tail[n],
                    n_trunc: dims[n],
                });
            }
        }
        Ok(())
    }
}

fn run_instantaneous(sched: &ProtocolSchedule, gp: &GateParams, psi: &mut DVector<C64>, occ: &mut Occupation) -> Result<()> {
    for step in 1..=4 {
        let a = ProtocolSchedule::active_qubit(step)?;
        let bias = sched.step_bias(step)?;
        evolve_segment(gp, psi, a, drive(gp, a, bias[a], 1.0), sched.step_duration(step)?)?;
        occ.record(gp, psi)?;
    }
    Ok(())
}

/// Each step is a rise over the ramp time, the flat top and the mirrored
/// fall (see [`ProtocolSchedule::envelope`]); each ramp is integrated with
/// `n_sub` midpoint steps.
fn run_ramped(
    sched: &ProtocolSchedule,
    gp: &GateParams,
    psi: &mut DVector<C64>,
    occ: &mut Occupation,
    n_sub: usize,
) -> Result<()> {
    let tau = sched.ramp_ns;
    let dt = tau / n_sub as f64;
    for step in 1..=4 {
        let a = ProtocolSchedule::active_qubit(step)?;
        let bias = sched.step_bias(step)?[a];
        let len = sched.step_duration(step)?;
        for k in 0..n_sub {
            let p = sched.envelope((k as f64 + 0.5) * dt, len);
            evolve_segment(gp, psi, a, drive(gp, a, bias, p), dt)?;
        }
        evolve_segment(gp, psi, a, drive(gp, a, bias, 1.0), len - 2.0 * tau)?;
        occ.record(gp, psi)?;
        for k in 0..n_sub {
            let p = sched.envelope(len - tau + (k as f64 + 0.5) * dt, len);
            evolve_segment(gp, psi, a, drive(gp, a, bias, p), dt)?;
        }
        occ.record(gp, psi)?;
    }
    Ok(())
}

/// Ramp integration starts with `ramp / RAMP_MIN_STEPS` steps and halves
/// them until the fidelity moves by less than `RAMP_FIDELITY_TOL`.
pub const RAMP_MIN_STEPS: usize = 100;
pub const RAMP_FIDELITY_TOL: f64 = 1e-8;
const RAMP_MAX_HALVINGS: usize = 6;

/// Piecewise-constant propagation of the full step Hamiltonian, transverse
/// terms included, through the four steps.
pub fn numeric_protocol(
    sched: &ProtocolSchedule,
    gp: &GateParams,
    initial: &StateVector,
) -> Result<(StateVector, GateReport)> {
    gp.validate()?;
    if *initial.shape() != gp.shape() {
        return Err(invalid("initial state shape does not match the gate space"));
    }
    if (sched.omega_r_ghz - gp.omega_r_ghz()).abs() > 1e-12 * gp.omega_r_ghz() {
        return Err(invalid("schedule and gate parameters use different resonator frequencies"));
    }
    let ideal = ideal_output(sched, gp, initial)?;
    let finish = |psi: DVector<C64>| -> Result<(StateVector, DensityMatrix, f64)> {
        let norm = psi.norm();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::NumericalFailure(format!("norm drifted to {norm}")));
        }
        let out = StateVector::from_unitary_image(gp.shape(), psi);
        let rho = out.reduced_density_matrix(&[0, 1])?;
        let f = rho.fidelity_with_pure(&ideal)?;
        Ok((out, rho, f))
    };

    let mut occ = Occupation::default();
    let (out, rho, fidelity, ramp_steps) = if sched.ramp_ns == 0.0 {
        let mut psi = initial.amplitudes().clone();
        run_instantaneous(sched, gp, &mut psi, &mut occ)?;
        let (out, rho, f) = finish(psi)?;
        (out, rho, f, 0)
    } else {
        let mut n_sub = RAMP_MIN_STEPS;
        let mut prev: Option<f64> = None;
        let mut converged = None;
        for _ in 0..=RAMP_MAX_HALVINGS {
            let mut trial = Occupation::default();
            let mut psi = initial.amplitudes().clone();
            run_ramped(sched, gp, &mut psi, &mut trial, n_sub)?;
            let (out, rho, f) = finish(psi)?;
            if let Some(p) = prev {
                if (f - p).abs() < RAMP_FIDELITY_TOL {
                    occ = trial;
                    converged = Some((out, rho, f, n_sub));
                    break;
                }
            }
            prev = Some(f);
            n_sub *= 2;
        }
        converged.ok_or_else(|| {
            Error::NumericalFailure(format!(
                "ramp integration did not converge to {RAMP_FIDELITY_TOL:e} within {} halvings",
                RAMP_MAX_HALVINGS
            ))
        })?
    };

    let q0 = qubit_factor(initial)?;
    let report = GateReport {
        fidelity,
        two_qubit_phase: two_qubit_phase(&rho, &q0),
        qubit_purity: rho.purity(),
        gate_time_ns: sched.gate_time(),
        max_mean_occupation: occ.mean,
        max_tail_weight: occ.tail,
        ramp_steps,
    };
    Ok((out, report))
}

/// `phi_00 + phi_11 - phi_01 - phi_10` of the phases acquired relative to
/// `initial`, read from the coherences of `rho`.
pub fn two_qubit_phase(rho: &DensityMatrix, initial: &StateVector) -> Option<f64> {
    let a = initial.amplitudes();
    if a.iter().any(|z| z.norm() < 1e-8) {
        return None;
    }
    let m = rho.matrix();
    // rho_i0 = psi_i psi_0^*, so arg(rho_i0) - arg(a_i a_0^*) = phi_i - phi_0.
    let rel = |i: usize| (m[(i, 0)] * (a[i] * a[0].conj()).conj()).arg();
    Some(wrap_phase(rel(3) - rel(1) - rel(2)))
}

/// `|F(N_trunc) - F(n_large)|` on the fundamental, for the same initial qubits.
pub fn fock_convergence(
    sched: &ProtocolSchedule,
    gp: &GateParams,
    qubits: &StateVector,
    n_large: usize,
) -> Result<f64> {
    let small = numeric_protocol(sched, gp, &with_cavity_vacuum(gp, qubits)?)?.1.fidelity;
    let mut big = gp.clone();
    big.modes[0].n_trunc = n_large;
    let large = numeric_protocol(sched, &big, &with_cavity_vacuum(&big, qubits)?)?.1.fidelity;
    Ok((small - large).abs())
}
