//! Dense complex-matrix primitives for states and operators.
//!
//! Bases are ordered by ascending energy; spin bases run `m = -J..=+J`.

use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{invalid, Result};

/// Element-wise Hermiticity tolerance for density matrices.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Unit-trace tolerance for density matrices.
pub const TRACE_TOL: f64 = 1e-10;
/// Smallest admissible eigenvalue of a density matrix.
pub const PSD_TOL: f64 = -1e-10;
/// Hermiticity defect accepted (and re-symmetrized) by [`eigh`].
pub const EIGH_HERMITIAN_TOL: f64 = 1e-10;
/// Eigenvalues at or below this contribute nothing to the entropy.
pub const ENTROPY_CUTOFF: f64 = 1e-14;

pub type CMatrix = DMatrix<C64>;

/// A square complex matrix: Hamiltonians, ladder operators, jump operators.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator(CMatrix);

impl Operator {
    pub fn new(m: CMatrix) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(invalid(format!(
                "operator must be square and non-empty, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(invalid("operator has non-finite entries"));
        }
        Ok(Operator(m))
    }

    pub fn zeros(dim: usize) -> Self {
        Operator(CMatrix::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Self {
        Operator(CMatrix::identity(dim, dim))
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let d = diag.len();
        Operator(CMatrix::from_fn(d, d, |i, j| {
            if i == j {
                C64::new(diag[i], 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        }))
    }

    /// `|i><j|` in a `dim`-dimensional space.
    pub fn ket_bra(dim: usize, i: usize, j: usize) -> Self {
        let mut m = CMatrix::zeros(dim, dim);
        m[(i, j)] = C64::new(1.0, 0.0);
        Operator(m)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn adjoint(&self) -> Operator {
        Operator(self.0.adjoint())
    }

    pub fn scaled(&self, c: f64) -> Operator {
        Operator(self.0.scale(c))
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|z| z.re == 0.0 && z.im == 0.0)
    }

    /// Largest element-wise deviation from Hermiticity.
    pub fn hermiticity_defect(&self) -> f64 {
        hermiticity_defect(&self.0)
    }
}

/// A Hermitian, unit-trace, positive semidefinite matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix(CMatrix);

/// Ways a candidate matrix can fail to be a density matrix.
#[derive(Clone, Debug, PartialEq)]
pub enum StateDefect {
    NotSquare,
    NotHermitian(f64),
    Trace(f64),
    Negative(f64),
}

impl fmt::Display for StateDefect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StateDefect::NotSquare => write!(f, "matrix is not square"),
            StateDefect::NotHermitian(d) => write!(f, "Hermiticity defect {d:e}"),
            StateDefect::Trace(t) => write!(f, "trace {t} differs from 1"),
            StateDefect::Negative(l) => write!(f, "negative eigenvalue {l:e}"),
        }
    }
}

/// Tolerances used when validating a state.
#[derive(Clone, Copy, Debug)]
pub struct StateTolerance {
    pub hermitian: f64,
    pub trace: f64,
    pub min_eigenvalue: f64,
}

impl Default for StateTolerance {
    fn default() -> Self {
        StateTolerance {
            hermitian: HERMITIAN_TOL,
            trace: TRACE_TOL,
            min_eigenvalue: PSD_TOL,
        }
    }
}

/// Checks the density-matrix invariants with the given tolerances.
pub fn validate_state(m: &CMatrix, tol: StateTolerance) -> std::result::Result<(), StateDefect> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(StateDefect::NotSquare);
    }
    let herm = hermiticity_defect(m);
    if !(herm <= tol.hermitian) {
        return Err(StateDefect::NotHermitian(herm));
    }
    let tr = m.trace();
    if !((tr.re - 1.0).abs() <= tol.trace) || !(tr.im.abs() <= tol.trace) {
        return Err(StateDefect::Trace(tr.re));
    }
    let (vals, _) = eigh_unchecked(m);
    if !(vals[0] >= tol.min_eigenvalue) {
        return Err(StateDefect::Negative(vals[0]));
    }
    Ok(())
}

impl DensityMatrix {
    pub fn new(m: CMatrix) -> Result<Self> {
        validate_state(&m, StateTolerance::default())
            .map_err(|d| invalid(format!("not a density matrix: {d}")))?;
        Ok(DensityMatrix(m))
    }

    /// Wraps a matrix that the caller has already validated.
    pub(crate) fn new_unchecked(m: CMatrix) -> Self {
        DensityMatrix(m)
    }

    pub fn from_populations(p: &[f64]) -> Result<Self> {
        if p.is_empty() {
            return Err(invalid("empty population vector"));
        }
        DensityMatrix::new(Operator::from_real_diagonal(p).into_matrix())
    }

    pub fn pure(dim: usize, index: usize) -> Result<Self> {
        if index >= dim {
            return Err(invalid(format!("level {index} outside dimension {dim}")));
        }
        Ok(DensityMatrix(Operator::ket_bra(dim, index, index).into_matrix()))
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        DensityMatrix(CMatrix::identity(dim, dim).scale(1.0 / dim as f64))
    }

    /// `exp(-beta h) / Z`. Negative `beta` gives population-inverted states.
    pub fn gibbs(h: &Operator, beta: f64) -> Result<Self> {
        let (vals, vecs) = eigh(h)?;
        // shift the exponent so the largest weight is exactly 1
        let shift = vals
            .iter()
            .map(|&e| -beta * e)
            .fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = vals.iter().map(|&e| (-beta * e - shift).exp()).collect();
        let z: f64 = w.iter().sum();
        let d = h.dim();
        let mut diag = CMatrix::zeros(d, d);
        for (i, wi) in w.iter().enumerate() {
            diag[(i, i)] = C64::new(wi / z, 0.0);
        }
        let rho = &vecs * diag * vecs.adjoint();
        Ok(DensityMatrix(symmetrize(&rho)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    /// Real diagonal in the working basis.
    pub fn populations(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.0[(i, i)].re).collect()
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        eigh_unchecked(&self.0).0
    }
}

/// Spin quantum number stored as `2J`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SpinQuantum {
    twice_j: u32,
}

impl SpinQuantum {
    pub fn from_twice(twice_j: u32) -> Result<Self> {
        if twice_j == 0 {
            return Err(invalid("spin must be at least 1/2"));
        }
        Ok(SpinQuantum { twice_j })
    }

    /// Accepts only positive half-integers.
    pub fn new(j: f64) -> Result<Self> {
        let twice = 2.0 * j;
        if !twice.is_finite() || twice < 1.0 || (twice - twice.round()).abs() > 1e-12 {
            return Err(invalid(format!("J = {j} is not a positive half-integer")));
        }
        SpinQuantum::from_twice(twice.round() as u32)
    }

    pub fn j(&self) -> f64 {
        self.twice_j as f64 / 2.0
    }

    pub fn twice_j(&self) -> u32 {
        self.twice_j
    }

    pub fn dim(&self) -> usize {
        self.twice_j as usize + 1
    }

    /// Magnetic quantum numbers, ascending.
    pub fn m_values(&self) -> Vec<f64> {
        let j = self.j();
        (0..self.dim()).map(|k| -j + k as f64).collect()
    }
}

impl fmt::Display for SpinQuantum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.twice_j % 2 == 0 {
            write!(f, "{}", self.twice_j / 2)
        } else {
            write!(f, "{}/2", self.twice_j)
        }
    }
}

/// `J_z`, `J_+`, `J_-` in the `m = -J..=+J` basis.
#[derive(Clone, Debug)]
pub struct SpinOperators {
    pub jz: Operator,
    pub jplus: Operator,
    pub jminus: Operator,
}

pub fn spin_operators(spin: SpinQuantum) -> SpinOperators {
    let j = spin.j();
    let m = spin.m_values();
    let d = spin.dim();
    let jz = Operator::from_real_diagonal(&m);
    let mut jp = CMatrix::zeros(d, d);
    for k in 0..d - 1 {
        let mk = m[k];
        jp[(k + 1, k)] = C64::new((j * (j + 1.0) - mk * (mk + 1.0)).sqrt(), 0.0);
    }
    let jplus = Operator(jp);
    let jminus = jplus.adjoint();
    SpinOperators { jz, jplus, jminus }
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

pub fn hermiticity_defect(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            let d = (m[(i, j)] - m[(j, i)].conj()).norm();
            if d > worst || d.is_nan() {
                worst = if d.is_nan() { f64::INFINITY } else { d };
            }
        }
    }
    worst
}

/// `(A + A^dagger) / 2`.
pub fn symmetrize(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

/// `L rho L^dagger - 1/2 {L^dagger L, rho}`.
pub fn dissipator(l: &Operator, rho: &DensityMatrix) -> Result<CMatrix> {
    if l.dim() != rho.dim() {
        return Err(invalid(format!(
            "dimension mismatch: operator {} vs state {}",
            l.dim(),
            rho.dim()
        )));
    }
    Ok(dissipator_raw(l.matrix(), rho.matrix()))
}

pub(crate) fn dissipator_raw(l: &CMatrix, rho: &CMatrix) -> CMatrix {
    let ld = l.adjoint();
    let ldl = &ld * l;
    let anti = &ldl * rho + rho * &ldl;
    l * rho * &ld - anti.scale(0.5)
}

/// Hermitian eigen-decomposition with eigenvalues ascending.
///
/// Inputs within [`EIGH_HERMITIAN_TOL`] of Hermitian are re-symmetrized
/// first; anything further off is rejected.
pub fn eigh(a: &Operator) -> Result<(Vec<f64>, CMatrix)> {
    let defect = a.hermiticity_defect();
    if !(defect <= EIGH_HERMITIAN_TOL) {
        return Err(invalid(format!("matrix is not Hermitian (defect {defect:e})")));
    }
    Ok(eigh_unchecked(a.matrix()))
}

pub(crate) fn eigh_unchecked(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = m.nrows();
    let eig = symmetrize(m).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vecs = CMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (vals, vecs)
}

/// Von Neumann entropy in nats.
pub fn von_neumann_entropy(rho: &DensityMatrix) -> f64 {
    entropy_of_spectrum(&rho.eigenvalues())
}

pub(crate) fn entropy_of_spectrum(vals: &[f64]) -> f64 {
    let s: f64 = vals
        .iter()
        .filter(|&&l| l > ENTROPY_CUTOFF)
        .map(|&l| -l * l.ln())
        .sum();
    s.max(0.0)
}

/// `1/2 ||rho - sigma||_1`.
pub fn trace_distance(a: &CMatrix, b: &CMatrix) -> f64 {
    let (vals, _) = eigh_unchecked(&(a - b));
    0.5 * vals.iter().map(|v| v.abs()).sum::<f64>()
}

pub fn frobenius_norm(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}
