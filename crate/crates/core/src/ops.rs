//! Dense operator algebra on tensor products of qubits and truncated Fock
//! spaces.
//!
//! Tensor factors are ordered as they appear in a [`SpaceShape`]; the
//! repo-wide convention is qubit 1, qubit 2, then cavity modes in ascending
//! mode number. Flattened indices are row-major, so the last factor varies
//! fastest.
//!
//! Qubit factors use the energy basis with index 0 = `|e>` and index 1 =
//! `|g>`, so that `sigma_z = diag(+1, -1)`.

use crate::error::{invalid, Error, Result};
use alloc::{format, vec, vec::Vec};
use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};
#[allow(unused_imports)] // only used when std is not linked
use num_traits::Float;

pub type C64 = Complex<f64>;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };
const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Relative Hermiticity tolerance accepted for Hamiltonians.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// One tensor factor of a Hilbert space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Factor {
    Qubit,
    /// Truncated harmonic oscillator with `N_trunc` levels.
    Fock(usize),
    /// Cooper-pair number basis `-n_max..=n_max` of one junction island.
    Charge(usize),
}

impl Factor {
    pub fn dim(self) -> usize {
        match self {
            Factor::Qubit => 2,
            Factor::Fock(n) => n,
            Factor::Charge(n_max) => 2 * n_max + 1,
        }
    }
}

/// Ordered list of tensor factors.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SpaceShape {
    factors: Vec<Factor>,
}

impl SpaceShape {
    pub fn new(factors: impl Into<Vec<Factor>>) -> Result<Self> {
        let factors = factors.into();
        if factors.is_empty() {
            return Err(invalid("a space needs at least one factor"));
        }
        for f in &factors {
            if let Factor::Fock(n) = f {
                if *n < 2 {
                    return Err(invalid(format!("Fock truncation must be >= 2, got {n}")));
                }
            }
        }
        Ok(SpaceShape { factors })
    }

    pub fn qubit() -> Self {
        SpaceShape {
            factors: vec![Factor::Qubit],
        }
    }

    pub fn fock(n_trunc: usize) -> Result<Self> {
        Self::new(vec![Factor::Fock(n_trunc)])
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.factors.iter().map(|f| f.dim()).product()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.factors.iter().map(|f| f.dim()).collect()
    }

    pub fn strides(&self) -> Vec<usize> {
        let dims = self.dims();
        let mut strides = vec![1; dims.len()];
        for k in (0..dims.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * dims[k + 1];
        }
        strides
    }

    pub fn tensor(&self, other: &SpaceShape) -> SpaceShape {
        let mut factors = self.factors.clone();
        factors.extend_from_slice(&other.factors);
        SpaceShape { factors }
    }

    /// Sub-shape made of the factors at `keep` (ascending, deduplicated).
    pub fn select(&self, keep: &[usize]) -> Result<SpaceShape> {
        let keep = normalize_indices(keep, self.len())?;
        SpaceShape::new(keep.iter().map(|&k| self.factors[k]).collect::<Vec<_>>())
    }
}

fn normalize_indices(keep: &[usize], len: usize) -> Result<Vec<usize>> {
    if keep.is_empty() {
        return Err(invalid("factor index set must be non-empty"));
    }
    let mut keep = keep.to_vec();
    keep.sort_unstable();
    keep.dedup();
    if let Some(&bad) = keep.iter().find(|&&k| k >= len) {
        return Err(invalid(format!("factor index {bad} out of range for {len} factors")));
    }
    Ok(keep)
}

/// Flat-index offsets for a split of a space into kept and traced factors.
///
/// Full index = `kept[i] + traced[t]` for every kept multi-index `i` and
/// traced multi-index `t`, both enumerated in row-major order.
fn split_offsets(shape: &SpaceShape, keep: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let dims = shape.dims();
    let strides = shape.strides();
    let offsets = |sel: &dyn Fn(usize) -> bool| {
        let mut out = vec![0usize];
        for k in 0..dims.len() {
            if !sel(k) {
                continue;
            }
            let mut next = Vec::with_capacity(out.len() * dims[k]);
            for &o in &out {
                for n in 0..dims[k] {
                    next.push(o + n * strides[k]);
                }
            }
            out = next;
        }
        out
    };
    (offsets(&|k| keep.contains(&k)), offsets(&|k| !keep.contains(&k)))
}

/// Square complex matrix acting on a [`SpaceShape`].
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorMatrix {
    shape: SpaceShape,
    mat: DMatrix<C64>,
}

impl OperatorMatrix {
    pub fn from_matrix(shape: SpaceShape, mat: DMatrix<C64>) -> Result<Self> {
        let d = shape.dim();
        if mat.nrows() != d || mat.ncols() != d {
            return Err(invalid(format!(
                "matrix is {}x{}, shape has dimension {d}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        Ok(OperatorMatrix { shape, mat })
    }

    pub fn zeros(shape: &SpaceShape) -> Self {
        let d = shape.dim();
        OperatorMatrix {
            shape: shape.clone(),
            mat: DMatrix::zeros(d, d),
        }
    }

    pub fn identity(shape: &SpaceShape) -> Self {
        let d = shape.dim();
        OperatorMatrix {
            shape: shape.clone(),
            mat: DMatrix::identity(d, d),
        }
    }

    pub fn diagonal(shape: &SpaceShape, diag: &[C64]) -> Result<Self> {
        if diag.len() != shape.dim() {
            return Err(invalid("diagonal length does not match shape dimension"));
        }
        Ok(OperatorMatrix {
            shape: shape.clone(),
            mat: DMatrix::from_diagonal(&DVector::from_column_slice(diag)),
        })
    }

    pub fn shape(&self) -> &SpaceShape {
        &self.shape
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.mat
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.mat
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.mat[(row, col)]
    }

    pub fn adjoint(&self) -> Self {
        OperatorMatrix {
            shape: self.shape.clone(),
            mat: self.mat.adjoint(),
        }
    }

    fn check_same_shape(&self, other: &OperatorMatrix) -> Result<()> {
        if self.shape != other.shape {
            return Err(invalid(format!(
                "shape mismatch: {:?} vs {:?}",
                self.shape.factors, other.shape.factors
            )));
        }
        Ok(())
    }

    /// Matrix product `self * rhs`.
    pub fn compose(&self, rhs: &OperatorMatrix) -> Result<Self> {
        self.check_same_shape(rhs)?;
        Ok(OperatorMatrix {
            shape: self.shape.clone(),
            mat: &self.mat * &rhs.mat,
        })
    }

    /// `self += coeff * other`.
    pub fn add_scaled(&mut self, coeff: C64, other: &OperatorMatrix) -> Result<()> {
        self.check_same_shape(other)?;
        self.mat.zip_apply(&other.mat, |a, b| *a += coeff * b);
        Ok(())
    }

    pub fn scaled(&self, coeff: C64) -> Self {
        OperatorMatrix {
            shape: self.shape.clone(),
            mat: self.mat.map(|z| z * coeff),
        }
    }

    /// Kronecker product; `self` becomes the leading factors.
    pub fn kron(&self, rhs: &OperatorMatrix) -> Self {
        OperatorMatrix {
            shape: self.shape.tensor(&rhs.shape),
            mat: self.mat.kronecker(&rhs.mat),
        }
    }

    pub fn commutator(&self, rhs: &OperatorMatrix) -> Result<Self> {
        let mut ab = self.compose(rhs)?;
        let ba = rhs.compose(self)?;
        ab.mat -= ba.mat;
        Ok(ab)
    }

    /// `max |H - H^dag|` relative to the largest entry magnitude.
    pub fn hermiticity_defect(&self) -> f64 {
        let scale = self.mat.iter().fold(0.0_f64, |m, z| m.max(z.norm()));
        if scale == 0.0 {
            return 0.0;
        }
        let n = self.dim();
        let mut worst = 0.0_f64;
        for j in 0..n {
            for i in j..n {
                worst = worst.max((self.mat[(i, j)] - self.mat[(j, i)].conj()).norm());
            }
        }
        worst / scale
    }

    /// `max |U^dag U - I|` over all entries.
    pub fn unitarity_defect(&self) -> f64 {
        let prod = self.mat.adjoint() * &self.mat;
        max_abs_diff_identity(&prod)
    }

    pub fn max_abs_diff(&self, other: &OperatorMatrix) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(self
            .mat
            .iter()
            .zip(other.mat.iter())
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).norm())))
    }

    pub fn is_real(&self) -> bool {
        self.mat.iter().all(|z| z.im == 0.0)
    }

    pub fn apply(&self, psi: &StateVector) -> Result<StateVector> {
        if self.shape != psi.shape {
            return Err(invalid("operator and state live on different spaces"));
        }
        Ok(StateVector {
            shape: psi.shape.clone(),
            amps: &self.mat * &psi.amps,
        })
    }

    /// Adds `coeff * (A_1 (x) A_2 (x) ...)` where the local operators act on
    /// the listed factors and the identity acts on the rest.
    ///
    /// Only the non-zero entries of each local operator are visited, so this
    /// stays cheap on large spaces.
    pub fn add_product_term(&mut self, coeff: C64, locals: &[(usize, &OperatorMatrix)]) -> Result<()> {
        let factors = self.shape.factors().to_vec();
        let strides = self.shape.strides();
        let mut lists: Vec<Vec<(usize, usize, C64)>> = factors
            .iter()
            .map(|f| (0..f.dim()).map(|n| (n, n, ONE)).collect())
            .collect();
        let mut seen = vec![false; factors.len()];
        for &(idx, op) in locals {
            if idx >= factors.len() {
                return Err(invalid(format!(
                    "factor index {idx} out of range for {} factors",
                    factors.len()
                )));
            }
            if seen[idx] {
                return Err(invalid(format!("factor {idx} listed twice in a product term")));
            }
            seen[idx] = true;
            if op.shape.len() != 1 || op.dim() != factors[idx].dim() {
                return Err(invalid(format!(
                    "local operator of dimension {} does not match factor {idx} of dimension {}",
                    op.dim(),
                    factors[idx].dim()
                )));
            }
            let d = op.dim();
            let mut nz = Vec::new();
            for j in 0..d {
                for i in 0..d {
                    let v = op.mat[(i, j)];
                    if v != ZERO {
                        nz.push((i, j, v));
                    }
                }
            }
            lists[idx] = nz;
        }
        accumulate(&mut self.mat, &lists, &strides, 0, 0, 0, coeff);
        Ok(())
    }
}

fn accumulate(
    mat: &mut DMatrix<C64>,
    lists: &[Vec<(usize, usize, C64)>],
    strides: &[usize],
    level: usize,
    row: usize,
    col: usize,
    val: C64,
) {
    if level == lists.len() {
        mat[(row, col)] += val;
        return;
    }
    let s = strides[level];
    for &(i, j, v) in &lists[level] {
        accumulate(mat, lists, strides, level + 1, row + i * s, col + j * s, val * v);
    }
}

fn max_abs_diff_identity(m: &DMatrix<C64>) -> f64 {
    let mut worst = 0.0_f64;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let target = if i == j { ONE } else { ZERO };
            worst = worst.max((m[(i, j)] - target).norm());
        }
    }
    worst
}

/// Lowering operator `a` with `<n-1|a|n> = sqrt(n)`.
pub fn annihilation(n_trunc: usize) -> Result<OperatorMatrix> {
    let shape = SpaceShape::fock(n_trunc)?;
    let mut a = OperatorMatrix::zeros(&shape);
    for n in 1..n_trunc {
        a.mat[(n - 1, n)] = C64::new(Float::sqrt(n as f64), 0.0);
    }
    Ok(a)
}

pub fn creation(n_trunc: usize) -> Result<OperatorMatrix> {
    Ok(annihilation(n_trunc)?.adjoint())
}

/// `a^dag a`.
pub fn number(n_trunc: usize) -> Result<OperatorMatrix> {
    let shape = SpaceShape::fock(n_trunc)?;
    let diag: Vec<C64> = (0..n_trunc).map(|n| C64::new(n as f64, 0.0)).collect();
    OperatorMatrix::diagonal(&shape, &diag)
}

/// `a + a^dag`.
pub fn quadrature(n_trunc: usize) -> Result<OperatorMatrix> {
    let a = annihilation(n_trunc)?;
    let mut x = a.adjoint();
    x.add_scaled(ONE, &a)?;
    Ok(x)
}

fn qubit_op(entries: [[C64; 2]; 2]) -> OperatorMatrix {
    OperatorMatrix {
        shape: SpaceShape::qubit(),
        mat: DMatrix::from_row_slice(2, 2, &[entries[0][0], entries[0][1], entries[1][0], entries[1][1]]),
    }
}

pub fn sigma_x() -> OperatorMatrix {
    qubit_op([[ZERO, ONE], [ONE, ZERO]])
}

pub fn sigma_y() -> OperatorMatrix {
    qubit_op([[ZERO, -I], [I, ZERO]])
}

pub fn sigma_z() -> OperatorMatrix {
    qubit_op([[ONE, ZERO], [ZERO, -ONE]])
}

/// Projector onto the qubit state with `sigma_z = sign` (+1: `|e>`, -1: `|g>`).
pub fn qubit_projector(sign: i8) -> OperatorMatrix {
    if sign >= 0 {
        qubit_op([[ONE, ZERO], [ZERO, ZERO]])
    } else {
        qubit_op([[ZERO, ZERO], [ZERO, ONE]])
    }
}

/// Free cavity rotation `exp(-i theta a^dag a)`.
pub fn free_rotation(theta: f64, n_trunc: usize) -> Result<OperatorMatrix> {
    let shape = SpaceShape::fock(n_trunc)?;
    let diag: Vec<C64> = (0..n_trunc)
        .map(|n| C64::from_polar(1.0, -theta * n as f64))
        .collect();
    OperatorMatrix::diagonal(&shape, &diag)
}

/// Displacement `D(beta) = exp(beta a^dag - beta* a)` on a truncated Fock
/// space.
///
/// The truncated generator is exponentiated exactly, so the result is unitary
/// to machine precision; it agrees with the infinite-dimensional operator only
/// on Fock states well below the cutoff, which requires `|beta|^2 << N_trunc`.
pub fn displacement(beta: C64, n_trunc: usize) -> Result<OperatorMatrix> {
    let a = annihilation(n_trunc)?;
    let mut generator = a.adjoint().scaled(beta);
    generator.add_scaled(-beta.conj(), &a)?;
    // exp(G) = exp(-i H) with the Hermitian H = i G.
    matrix_exponential_propagator(&generator.scaled(I), 1.0)
}

/// Places `op` on factor `factor_index` of `shape`, identity elsewhere.
pub fn embed(op: &OperatorMatrix, factor_index: usize, shape: &SpaceShape) -> Result<OperatorMatrix> {
    embed_product(&[(factor_index, op)], shape)
}

/// Tensor product of local operators on distinct factors, identity elsewhere.
pub fn embed_product(locals: &[(usize, &OperatorMatrix)], shape: &SpaceShape) -> Result<OperatorMatrix> {
    for &(idx, op) in locals {
        if let Some(f) = shape.factors().get(idx) {
            if op.shape.factors() != [*f] {
                return Err(invalid(format!(
                    "operator on {:?} cannot act on factor {idx} ({f:?})",
                    op.shape.factors()
                )));
            }
        }
    }
    let mut out = OperatorMatrix::zeros(shape);
    out.add_product_term(ONE, locals)?;
    Ok(out)
}

enum EigenBasis {
    Real(DMatrix<f64>),
    Complex(DMatrix<C64>),
}

/// Spectral decomposition `H = V diag(lambda) V^dag` of a Hermitian operator,
/// eigenvalues in ascending order.
///
/// Real symmetric input takes a real solver, which halves memory and is
/// several times faster on the large multimode Hamiltonians.
pub struct HermitianEigen {
    shape: SpaceShape,
    values: Vec<f64>,
    basis: EigenBasis,
}

impl HermitianEigen {
    pub fn new(h: &OperatorMatrix) -> Result<Self> {
        let defect = h.hermiticity_defect();
        if defect > HERMITIAN_TOL {
            return Err(invalid(format!(
                "operator is not Hermitian (relative defect {defect:e})"
            )));
        }
        let (values, basis) = if h.is_real() {
            let eig = SymmetricEigen::new(h.mat.map(|z| z.re));
            let order = ascending(eig.eigenvalues.as_slice());
            let values: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
            let vectors = eig.eigenvectors.select_columns(order.iter());
            (values, EigenBasis::Real(vectors))
        } else {
            let eig = SymmetricEigen::new(h.mat.clone());
            let order = ascending(eig.eigenvalues.as_slice());
            let values: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
            let vectors = eig.eigenvectors.select_columns(order.iter());
            (values, EigenBasis::Complex(vectors))
        };
        if values.iter().any(|v: &f64| !v.is_finite()) {
            return Err(Error::NumericalFailure("eigenvalues are not finite".into()));
        }
        Ok(HermitianEigen {
            shape: h.shape.clone(),
            values,
            basis,
        })
    }

    pub fn shape(&self) -> &SpaceShape {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Eigenvector `k` (ascending order).
    pub fn vector(&self, k: usize) -> DVector<C64> {
        match &self.basis {
            EigenBasis::Real(v) => v.column(k).map(|x| C64::new(x, 0.0)),
            EigenBasis::Complex(v) => v.column(k).into_owned(),
        }
    }

    /// `exp(-i H t)` as a dense operator.
    pub fn propagator(&self, t: f64) -> OperatorMatrix {
        let phases: Vec<C64> = self.values.iter().map(|&e| C64::from_polar(1.0, -e * t)).collect();
        let v = match &self.basis {
            EigenBasis::Real(v) => v.map(|x| C64::new(x, 0.0)),
            EigenBasis::Complex(v) => v.clone(),
        };
        let mut scaled = v.clone();
        for (k, mut col) in scaled.column_iter_mut().enumerate() {
            col *= phases[k];
        }
        OperatorMatrix {
            shape: self.shape.clone(),
            mat: scaled * v.adjoint(),
        }
    }

    /// `exp(-i H t) psi` without forming the propagator.
    pub fn evolve(&self, psi: &DVector<C64>, t: f64) -> DVector<C64> {
        let phase = |k: usize| C64::from_polar(1.0, -self.values[k] * t);
        match &self.basis {
            EigenBasis::Real(v) => {
                let re = psi.map(|z| z.re);
                let im = psi.map(|z| z.im);
                let cr = v.tr_mul(&re);
                let ci = v.tr_mul(&im);
                let mut out_re = DVector::zeros(cr.len());
                let mut out_im = DVector::zeros(cr.len());
                for k in 0..cr.len() {
                    let c = C64::new(cr[k], ci[k]) * phase(k);
                    out_re[k] = c.re;
                    out_im[k] = c.im;
                }
                let r = v * out_re;
                let i = v * out_im;
                DVector::from_fn(r.len(), |n, _| C64::new(r[n], i[n]))
            }
            EigenBasis::Complex(v) => {
                let mut c = v.ad_mul(psi);
                for (k, z) in c.iter_mut().enumerate() {
                    *z *= phase(k);
                }
                v * c
            }
        }
    }
}

fn ascending(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    order
}

/// `U = exp(-i H t)` for Hermitian `H` (angular units) via eigendecomposition.
pub fn matrix_exponential_propagator(h: &OperatorMatrix, t: f64) -> Result<OperatorMatrix> {
    Ok(HermitianEigen::new(h)?.propagator(t))
}

/// Row-stored Hermitian operator for evolving states on spaces too large for
/// dense diagonalization.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseHermitian {
    rows: Vec<Vec<(usize, C64)>>,
}

/// Target accuracy of the Chebyshev series in [`SparseHermitian::evolve`].
pub const CHEBYSHEV_TOL: f64 = 1e-15;

impl SparseHermitian {
    pub fn zeros(dim: usize) -> Self {
        SparseHermitian {
            rows: vec![Vec::new(); dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    /// Adds `v` to entry `(row, col)`. The caller adds the conjugate entry.
    pub fn add(&mut self, row: usize, col: usize, v: C64) {
        let r = &mut self.rows[row];
        match r.iter_mut().find(|(c, _)| *c == col) {
            Some((_, x)) => *x += v,
            None => r.push((col, v)),
        }
    }

    pub fn from_operator(op: &OperatorMatrix) -> Self {
        let n = op.dim();
        let mut s = SparseHermitian::zeros(n);
        for i in 0..n {
            for j in 0..n {
                let v = op.mat[(i, j)];
                if v != ZERO {
                    s.rows[i].push((j, v));
                }
            }
        }
        s
    }

    pub fn to_operator(&self, shape: SpaceShape) -> Result<OperatorMatrix> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                m[(i, j)] += v;
            }
        }
        OperatorMatrix::from_matrix(shape, m)
    }

    /// Largest `|H_ij - conj(H_ji)|`.
    pub fn hermiticity_defect(&self) -> f64 {
        let mut worst = 0.0_f64;
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                let back = self.rows[j].iter().find(|(c, _)| *c == i).map_or(ZERO, |x| x.1);
                worst = worst.max((v - back.conj()).norm());
            }
        }
        worst
    }

    pub fn apply(&self, psi: &DVector<C64>) -> DVector<C64> {
        DVector::from_fn(self.dim(), |i, _| {
            self.rows[i].iter().fold(ZERO, |acc, &(j, v)| acc + v * psi[j])
        })
    }

    /// Gershgorin interval containing the spectrum.
    pub fn spectral_bounds(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (i, row) in self.rows.iter().enumerate() {
            let mut centre = 0.0;
            let mut radius = 0.0;
            for &(j, v) in row {
                if j == i {
                    centre = v.re;
                } else {
                    radius += v.norm();
                }
            }
            lo = lo.min(centre - radius);
            hi = hi.max(centre + radius);
        }
        (lo, hi)
    }

    /// `exp(-i H t) psi` by Chebyshev expansion on the Gershgorin interval.
    pub fn evolve(&self, psi: &DVector<C64>, t: f64) -> Result<DVector<C64>> {
        if psi.len() != self.dim() {
            return Err(invalid("state and operator dimensions differ"));
        }
        let (lo, hi) = self.spectral_bounds();
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(Error::NumericalFailure("operator has non-finite entries".into()));
        }
        let half = 0.5 * (hi - lo);
        let centre = 0.5 * (hi + lo);
        let shift = C64::from_polar(1.0, -centre * t);
        let x = half * t.abs();
        if x == 0.0 {
            return Ok(psi * shift);
        }
        let sign = if t < 0.0 { -1.0 } else { 1.0 };
        let scaled = |v: &DVector<C64>| (self.apply(v) - v * C64::new(centre, 0.0)) / C64::new(half, 0.0);
        // exp(-i y x) = J0(x) + 2 sum_k (-i)^k J_k(x) T_k(y), y in [-1, 1]
        let coeff = |k: usize| {
            let j = libm::jn(k as i32, x);
            let mut c = match k % 4 {
                0 => C64::new(j, 0.0),
                1 => C64::new(0.0, -j * sign),
                2 => C64::new(-j, 0.0),
                _ => C64::new(0.0, j * sign),
            };
            if k > 0 {
                c *= 2.0;
            }
            c
        };
        let max_terms = (1.5 * x) as usize + 200;
        let mut prev = psi.clone();
        let mut cur = scaled(psi);
        let mut sum = &prev * coeff(0) + &cur * coeff(1);
        let mut small = 0;
        for k in 2..max_terms {
            let next = scaled(&cur) * C64::new(2.0, 0.0) - &prev;
            let c = coeff(k);
            sum += &next * c;
            prev = cur;
            cur = next;
            if k as f64 > x && c.norm() < CHEBYSHEV_TOL {
                small += 1;
                if small >= 3 {
                    return Ok(sum * shift);
                }
            } else {
                small = 0;
            }
        }
        Err(Error::NumericalFailure(format!(
            "Chebyshev series did not converge in {max_terms} terms"
        )))
    }
}

/// Normalized pure state on a [`SpaceShape`].
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    shape: SpaceShape,
    amps: DVector<C64>,
}

/// Allowed deviation of `||psi||` from one.
pub const NORM_TOL: f64 = 1e-12;

impl StateVector {
    pub fn new(shape: SpaceShape, amps: DVector<C64>) -> Result<Self> {
        if amps.len() != shape.dim() {
            return Err(invalid(format!(
                "state has {} amplitudes, shape has dimension {}",
                amps.len(),
                shape.dim()
            )));
        }
        let norm = amps.norm();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(invalid(format!("state is not normalized (norm {norm})")));
        }
        Ok(StateVector { shape, amps })
    }

    /// Rescales `amps` to unit norm.
    pub fn normalized(shape: SpaceShape, amps: DVector<C64>) -> Result<Self> {
        let norm = amps.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(invalid("cannot normalize a zero or non-finite vector"));
        }
        Self::new(shape, amps / C64::new(norm, 0.0))
    }

    pub fn basis(shape: SpaceShape, index: usize) -> Result<Self> {
        let d = shape.dim();
        if index >= d {
            return Err(invalid(format!("basis index {index} out of range {d}")));
        }
        let mut amps = DVector::zeros(d);
        amps[index] = ONE;
        Ok(StateVector { shape, amps })
    }

    pub fn fock(n_trunc: usize, level: usize) -> Result<Self> {
        Self::basis(SpaceShape::fock(n_trunc)?, level)
    }

    pub fn excited() -> Self {
        StateVector {
            shape: SpaceShape::qubit(),
            amps: DVector::from_column_slice(&[ONE, ZERO]),
        }
    }

    pub fn ground() -> Self {
        StateVector {
            shape: SpaceShape::qubit(),
            amps: DVector::from_column_slice(&[ZERO, ONE]),
        }
    }

    /// `(|g> + |e>) / sqrt(2)`.
    pub fn plus() -> Self {
        let h = C64::new(core::f64::consts::FRAC_1_SQRT_2, 0.0);
        StateVector {
            shape: SpaceShape::qubit(),
            amps: DVector::from_column_slice(&[h, h]),
        }
    }

    /// Tensor product of the parts, in order.
    pub fn product(parts: &[StateVector]) -> Result<Self> {
        let (first, rest) = parts
            .split_first()
            .ok_or_else(|| invalid("product of zero states"))?;
        let mut out = first.clone();
        for p in rest {
            out = StateVector {
                shape: out.shape.tensor(&p.shape),
                amps: out.amps.kronecker(&p.amps),
            };
        }
        Ok(out)
    }

    pub fn shape(&self) -> &SpaceShape {
        &self.shape
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.norm()
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        if self.shape != other.shape {
            return Err(invalid("inner product between different spaces"));
        }
        Ok(self.amps.dotc(&other.amps))
    }

    /// Wraps amplitudes produced by a unitary map without re-checking norm.
    pub(crate) fn from_unitary_image(shape: SpaceShape, amps: DVector<C64>) -> Self {
        StateVector { shape, amps }
    }

    /// Occupation probabilities of the Fock factor at `factor`.
    pub fn fock_populations(&self, factor: usize) -> Result<Vec<f64>> {
        match self.shape.factors().get(factor) {
            Some(Factor::Fock(_)) => {}
            _ => return Err(invalid(format!("factor {factor} is not a Fock factor"))),
        }
        let rho = self.reduced_density_matrix(&[factor])?;
        Ok((0..rho.mat.nrows()).map(|n| rho.mat[(n, n)].re).collect())
    }

    /// Reduced state on the factors in `keep`, tracing out everything else.
    pub fn reduced_density_matrix(&self, keep: &[usize]) -> Result<DensityMatrix> {
        let keep = normalize_indices(keep, self.shape.len())?;
        let kept_shape = self.shape.select(&keep)?;
        let (ko, to) = split_offsets(&self.shape, &keep);
        let d = ko.len();
        let mut m = DMatrix::zeros(d, d);
        for j in 0..d {
            for i in 0..d {
                let mut acc = ZERO;
                for &t in &to {
                    acc += self.amps[ko[i] + t] * self.amps[ko[j] + t].conj();
                }
                m[(i, j)] = acc;
            }
        }
        Ok(DensityMatrix {
            shape: kept_shape,
            mat: m,
        })
    }
}

/// Mixed state `rho` on a [`SpaceShape`].
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    shape: SpaceShape,
    mat: DMatrix<C64>,
}

impl DensityMatrix {
    /// Validates Hermiticity (1e-12), unit trace (1e-10) and positivity
    /// (eigenvalues >= -1e-10).
    pub fn new(shape: SpaceShape, mat: DMatrix<C64>) -> Result<Self> {
        let op = OperatorMatrix::from_matrix(shape, mat)?;
        let n = op.dim();
        let mut worst = 0.0_f64;
        for j in 0..n {
            for i in 0..n {
                worst = worst.max((op.mat[(i, j)] - op.mat[(j, i)].conj()).norm());
            }
        }
        if worst > 1e-12 {
            return Err(invalid(format!("density matrix is not Hermitian ({worst:e})")));
        }
        let tr = op.mat.trace();
        if (tr.re - 1.0).abs() > 1e-10 || tr.im.abs() > 1e-10 {
            return Err(invalid(format!("density matrix trace is {tr}")));
        }
        let eig = HermitianEigen::new(&op)?;
        if eig.values()[0] < -1e-10 {
            return Err(invalid(format!(
                "density matrix has negative eigenvalue {}",
                eig.values()[0]
            )));
        }
        Ok(DensityMatrix {
            shape: op.shape,
            mat: op.mat,
        })
    }

    pub fn from_pure(psi: &StateVector) -> Self {
        DensityMatrix {
            shape: psi.shape.clone(),
            mat: &psi.amps * psi.amps.adjoint(),
        }
    }

    pub fn shape(&self) -> &SpaceShape {
        &self.shape
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.mat
    }

    pub fn trace(&self) -> C64 {
        self.mat.trace()
    }

    /// `Tr rho^2`.
    pub fn purity(&self) -> f64 {
        // Tr(rho rho) = sum_ij |rho_ij|^2 for Hermitian rho.
        self.mat.iter().map(|z| z.norm_sqr()).sum()
    }

    /// `<psi|rho|psi>`.
    pub fn fidelity_with_pure(&self, psi: &StateVector) -> Result<f64> {
        if psi.shape != self.shape {
            return Err(invalid("fidelity between states on different spaces"));
        }
        Ok(psi.amps.dotc(&(&self.mat * &psi.amps)).re)
    }

    pub fn partial_trace(&self, keep: &[usize]) -> Result<DensityMatrix> {
        partial_trace(self, keep)
    }
}

/// Traces out every factor not listed in `keep`.
pub fn partial_trace(rho: &DensityMatrix, keep: &[usize]) -> Result<DensityMatrix> {
    let keep = normalize_indices(keep, rho.shape.len())?;
    let kept_shape = rho.shape.select(&keep)?;
    let (ko, to) = split_offsets(&rho.shape, &keep);
    let d = ko.len();
    let mut m = DMatrix::zeros(d, d);
    for j in 0..d {
        for i in 0..d {
            let mut acc = ZERO;
            for &t in &to {
                acc += rho.mat[(ko[i] + t, ko[j] + t)];
            }
            m[(i, j)] = acc;
        }
    }
    Ok(DensityMatrix {
        shape: kept_shape,
        mat: m,
    })
}
