//! Dense complex linear algebra and qubit primitives.
//!
//! Everything numerical in here funnels through one kernel, the Hermitian
//! eigendecomposition ([`Operator::eigen`]); PSD checks, square roots and the
//! fidelity are all derived from it with a single tolerance.
//!
//! Basis convention: `|0> = H`, `|1> = V`, and `sigma_z |0> = +|0>`.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use log::debug;
use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type C64 = Complex<f64>;

/// Maximum entrywise deviation from Hermiticity that is still accepted.
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Smallest eigenvalue still accepted as positive semidefinite.
pub const PSD_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QmathError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("operator is not Hermitian (max deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },
    #[error("operator is not positive semidefinite (min eigenvalue {min_eigenvalue:.3e})")]
    NotPsd { min_eigenvalue: f64 },
    #[error("operator has zero trace, no Bloch direction defined")]
    ZeroTrace,
    #[error("empty list of effects")]
    Empty,
    #[error("zero-length vector")]
    ZeroVector,
}

pub type Result<T> = std::result::Result<T, QmathError>;

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// A dense square complex matrix.
#[derive(Clone, PartialEq)]
pub struct Operator(DMatrix<C64>);

impl fmt::Debug for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Operator({}x{}) {}", self.dim(), self.dim(), self.0)
    }
}

/// Eigenvalues in ascending order with matching eigenvector columns.
#[derive(Clone, Debug)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: DMatrix<C64>,
}

impl HermitianEigen {
    /// Rebuilds `V f(D) V^dagger`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Operator {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for (j, &v) in self.values.iter().enumerate() {
            let fv = f(v);
            for i in 0..n {
                scaled[(i, j)] *= fv;
            }
        }
        Operator(&scaled * self.vectors.adjoint())
    }

    pub fn vector(&self, j: usize) -> DVector<C64> {
        self.vectors.column(j).into_owned()
    }
}

impl Operator {
    pub fn new(m: DMatrix<C64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(QmathError::NotSquare { rows: m.nrows(), cols: m.ncols() });
        }
        Ok(Self(m))
    }

    pub fn from_rows(rows: &[&[C64]]) -> Result<Self> {
        let n = rows.len();
        let mut m = DMatrix::zeros(n, n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(QmathError::NotSquare { rows: n, cols: row.len() });
            }
            for (j, v) in row.iter().enumerate() {
                m[(i, j)] = *v;
            }
        }
        Ok(Self(m))
    }

    pub fn identity(dim: usize) -> Self {
        Self(DMatrix::identity(dim, dim))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(DMatrix::zeros(dim, dim))
    }

    /// `|psi><psi|` for an (unnormalised) ket.
    pub fn projector(ket: &DVector<C64>) -> Self {
        Self(ket * ket.adjoint())
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.0[(i, j)]
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    /// Entrywise complex conjugate (equal to the transpose for Hermitian operators).
    pub fn conj(&self) -> Self {
        Self(self.0.map(|z| z.conj()))
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(self.0.map(|z| z * s))
    }

    pub fn kron(&self, other: &Operator) -> Self {
        Self(self.0.kronecker(&other.0))
    }

    /// Real part of `Tr(self * other)`.
    pub fn trace_product(&self, other: &Operator) -> f64 {
        let n = self.dim();
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..n {
            for k in 0..n {
                acc += self.0[(i, k)] * other.0[(k, i)];
            }
        }
        acc.re
    }

    pub fn hermitian_deviation(&self) -> f64 {
        let n = self.dim();
        let mut dev: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                dev = dev.max((self.0[(i, j)] - self.0[(j, i)].conj()).norm());
            }
        }
        dev
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian_deviation() <= HERMITIAN_TOL
    }

    pub fn require_hermitian(&self) -> Result<()> {
        let deviation = self.hermitian_deviation();
        if deviation > HERMITIAN_TOL {
            return Err(QmathError::NotHermitian { deviation });
        }
        Ok(())
    }

    /// Hermitian part `(A + A^dagger) / 2`.
    pub fn hermitian_part(&self) -> Self {
        Self((&self.0 + self.0.adjoint()).map(|z| z * 0.5))
    }

    /// Eigendecomposition of the Hermitian part, eigenvalues ascending.
    pub fn eigen(&self) -> HermitianEigen {
        let h = self.hermitian_part();
        let se = SymmetricEigen::new(h.0);
        let n = se.eigenvalues.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| se.eigenvalues[a].total_cmp(&se.eigenvalues[b]));
        let values = order.iter().map(|&i| se.eigenvalues[i]).collect();
        let mut vectors = DMatrix::zeros(n, n);
        for (dst, &src) in order.iter().enumerate() {
            vectors.set_column(dst, &se.eigenvectors.column(src));
        }
        HermitianEigen { values, vectors }
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigen().values[0]
    }

    pub fn max_eigenvalue(&self) -> f64 {
        *self.eigen().values.last().expect("non-empty operator")
    }

    pub fn is_psd(&self) -> bool {
        self.is_hermitian() && self.min_eigenvalue() >= -PSD_TOL
    }

    pub fn require_psd(&self) -> Result<()> {
        self.require_hermitian()?;
        let min_eigenvalue = self.min_eigenvalue();
        if min_eigenvalue < -PSD_TOL {
            return Err(QmathError::NotPsd { min_eigenvalue });
        }
        Ok(())
    }

    pub fn is_density(&self) -> bool {
        self.is_psd() && (self.trace().re - 1.0).abs() <= 1e-10 && self.trace().im.abs() <= 1e-10
    }

    /// Principal square root of a PSD operator; small negative eigenvalues are clipped.
    pub fn sqrt_psd(&self) -> Self {
        self.eigen().map(|v| v.max(0.0).sqrt())
    }

    /// `Tr_B` of an operator on `C^{d_a} (x) C^{d_b}`.
    pub fn partial_trace_second(&self, dim_a: usize, dim_b: usize) -> Result<Self> {
        if dim_a * dim_b != self.dim() {
            return Err(QmathError::DimensionMismatch { expected: dim_a * dim_b, found: self.dim() });
        }
        let mut out = DMatrix::zeros(dim_a, dim_a);
        for i in 0..dim_a {
            for j in 0..dim_a {
                let mut acc = C64::new(0.0, 0.0);
                for k in 0..dim_b {
                    acc += self.0[(i * dim_b + k, j * dim_b + k)];
                }
                out[(i, j)] = acc;
            }
        }
        Ok(Self(out))
    }

    /// `Tr_A` of an operator on `C^{d_a} (x) C^{d_b}`.
    pub fn partial_trace_first(&self, dim_a: usize, dim_b: usize) -> Result<Self> {
        if dim_a * dim_b != self.dim() {
            return Err(QmathError::DimensionMismatch { expected: dim_a * dim_b, found: self.dim() });
        }
        let mut out = DMatrix::zeros(dim_b, dim_b);
        for i in 0..dim_b {
            for j in 0..dim_b {
                let mut acc = C64::new(0.0, 0.0);
                for k in 0..dim_a {
                    acc += self.0[(k * dim_b + i, k * dim_b + j)];
                }
                out[(i, j)] = acc;
            }
        }
        Ok(Self(out))
    }

    /// `U self U^dagger`.
    pub fn conjugate_by(&self, u: &Operator) -> Self {
        Self(&u.0 * &self.0 * u.0.adjoint())
    }

    pub fn max_abs_diff(&self, other: &Operator) -> f64 {
        (&self.0 - &other.0).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

impl Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        Operator(&self.0 + &rhs.0)
    }
}

impl Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        Operator(&self.0 - &rhs.0)
    }
}

impl Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        Operator(&self.0 * &rhs.0)
    }
}

pub fn sigma_x() -> Operator {
    Operator(DMatrix::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)]))
}

pub fn sigma_y() -> Operator {
    Operator(DMatrix::from_row_slice(2, 2, &[c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.)]))
}

pub fn sigma_z() -> Operator {
    Operator(DMatrix::from_row_slice(2, 2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(-1., 0.)]))
}

pub fn paulis() -> [Operator; 3] {
    [sigma_x(), sigma_y(), sigma_z()]
}

/// `v . sigma`.
pub fn sigma_dot(v: BlochVector) -> Operator {
    let [sx, sy, sz] = paulis();
    &(&sx.scale(v.x) + &sy.scale(v.y)) + &sz.scale(v.z)
}

/// Computational basis ket `|index>` in dimension `dim`.
pub fn basis_ket(dim: usize, index: usize) -> DVector<C64> {
    let mut v = DVector::zeros(dim);
    v[index] = c(1.0, 0.0);
    v
}

/// `|Phi+> = (|00> + |11>) / sqrt(2)` as a density operator.
pub fn phi_plus() -> Operator {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let ket = DVector::from_vec(vec![c(s, 0.), c(0., 0.), c(0., 0.), c(s, 0.)]);
    Operator::projector(&ket)
}

/// Werner state `v |Phi+><Phi+| + (1 - v) I / 4`.
pub fn werner(visibility: f64) -> Operator {
    &phi_plus().scale(visibility) + &Operator::identity(4).scale((1.0 - visibility) / 4.0)
}

/// Clamps a Born-rule value into `[0, 1]`, logging when clamping was needed.
pub(crate) fn clamp_probability(p: f64) -> f64 {
    if !(0.0..=1.0).contains(&p) {
        if p < -PSD_TOL || p > 1.0 + PSD_TOL {
            log::warn!("probability {p:.3e} outside tolerance band, clamped");
        } else {
            debug!("probability {p:.3e} clamped to [0,1]");
        }
    }
    p.clamp(0.0, 1.0)
}

/// `Tr[(A (x) B) rho]`, clamped to `[0, 1]`.
pub fn born_joint(state: &Operator, effect_a: &Operator, effect_b: &Operator) -> Result<f64> {
    let expected = effect_a.dim() * effect_b.dim();
    if state.dim() != expected {
        return Err(QmathError::DimensionMismatch { expected, found: state.dim() });
    }
    state.require_hermitian()?;
    effect_a.require_hermitian()?;
    effect_b.require_hermitian()?;
    Ok(clamp_probability(effect_a.kron(effect_b).trace_product(state)))
}

/// A real 3-vector; a qubit state when its norm is at most one.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BlochVector {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl BlochVector {
    pub const ZERO: BlochVector = BlochVector { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn dot(self, o: Self) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Self) -> Self {
        Self::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn scale(self, s: f64) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }

    pub fn normalized(self) -> Result<Self> {
        let n = self.norm();
        if n == 0.0 {
            return Err(QmathError::ZeroVector);
        }
        Ok(self.scale(1.0 / n))
    }

    /// Image under complex conjugation of the associated operator: `(x, -y, z)`.
    ///
    /// For `|Phi+>`, `<A (x) B> = Tr(A^T B) / 2`, so Bob's outcome steers Alice
    /// to the conjugated direction.
    pub fn conjugated(self) -> Self {
        Self::new(self.x, -self.y, self.z)
    }

    pub fn distance(self, o: Self) -> f64 {
        (self - o).norm()
    }

    /// Angle between two non-zero vectors, in radians.
    pub fn angle_to(self, o: Self) -> f64 {
        let cos = self.dot(o) / (self.norm() * o.norm());
        let sin = self.cross(o).norm() / (self.norm() * o.norm());
        sin.atan2(cos)
    }
}

impl Add for BlochVector {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for BlochVector {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for BlochVector {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y, -self.z)
    }
}

/// `(weight / 2) (I + v . sigma)`.
pub fn operator_from_bloch(weight: f64, v: BlochVector) -> Operator {
    (&Operator::identity(2) + &sigma_dot(v)).scale(weight / 2.0)
}

/// Inverse of [`operator_from_bloch`]: returns `(Tr op, v)`.
pub fn bloch_from_operator(op: &Operator) -> Result<(f64, BlochVector)> {
    if op.dim() != 2 {
        return Err(QmathError::DimensionMismatch { expected: 2, found: op.dim() });
    }
    op.require_hermitian()?;
    let weight = op.trace().re;
    if weight.abs() < 1e-300 {
        return Err(QmathError::ZeroTrace);
    }
    let [sx, sy, sz] = paulis();
    let v = BlochVector::new(
        op.trace_product(&sx) / weight,
        op.trace_product(&sy) / weight,
        op.trace_product(&sz) / weight,
    );
    Ok((weight, v))
}

/// Density operator of a qubit with Bloch vector `v`.
pub fn qubit_state(v: BlochVector) -> Operator {
    operator_from_bloch(1.0, v)
}

/// Report produced by [`validate_povm`].
#[derive(Clone, Debug, Serialize)]
pub struct PovmDiagnostics {
    pub outcomes: usize,
    pub dim: usize,
    pub min_eigenvalues: Vec<f64>,
    pub all_psd: bool,
    /// Max entrywise deviation of the effect sum from the identity.
    pub completeness_residual: f64,
    pub complete: bool,
    /// Common value of `Tr(A_i A_j)` for `i != j` when the set is symmetric.
    pub pairwise_overlap: Option<f64>,
    /// `max - min` of the off-diagonal overlaps.
    pub overlap_spread: f64,
    pub symmetric: bool,
    pub informationally_complete: bool,
    /// Norm of each effect's direction; for qubits this is the Bloch length `|v|`.
    pub direction_purity: Vec<f64>,
}

impl PovmDiagnostics {
    pub fn is_valid(&self) -> bool {
        self.all_psd && self.complete
    }

    pub fn is_sic(&self) -> bool {
        self.is_valid()
            && self.symmetric
            && self.informationally_complete
            && self.outcomes == self.dim * self.dim
    }
}

pub fn validate_povm(effects: &[Operator]) -> Result<PovmDiagnostics> {
    let first = effects.first().ok_or(QmathError::Empty)?;
    let dim = first.dim();
    for e in effects {
        if e.dim() != dim {
            return Err(QmathError::DimensionMismatch { expected: dim, found: e.dim() });
        }
    }
    let min_eigenvalues: Vec<f64> = effects.iter().map(Operator::min_eigenvalue).collect();
    let all_psd = effects.iter().all(Operator::is_hermitian)
        && min_eigenvalues.iter().all(|&m| m >= -PSD_TOL);

    let sum = effects.iter().fold(Operator::zeros(dim), |acc, e| &acc + e);
    let completeness_residual = sum.max_abs_diff(&Operator::identity(dim));

    let mut overlaps = Vec::new();
    for i in 0..effects.len() {
        for j in 0..effects.len() {
            if i != j {
                overlaps.push(effects[i].trace_product(&effects[j]));
            }
        }
    }
    let (lo, hi) = overlaps
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let overlap_spread = if overlaps.is_empty() { 0.0 } else { hi - lo };
    let symmetric = !overlaps.is_empty() && overlap_spread <= 1e-10;

    // Rank of the real span of the effects inside the d^2-dimensional
    // space of Hermitian matrices.
    let mut span = DMatrix::<f64>::zeros(2 * dim * dim, effects.len());
    for (k, e) in effects.iter().enumerate() {
        for (idx, z) in e.matrix().iter().enumerate() {
            span[(2 * idx, k)] = z.re;
            span[(2 * idx + 1, k)] = z.im;
        }
    }
    let rank = span.rank(1e-9);
    let informationally_complete = rank == dim * dim;

    let d = dim as f64;
    let direction_purity = effects
        .iter()
        .map(|e| {
            let t = e.trace().re;
            if t.abs() < 1e-300 || dim < 2 {
                return 0.0;
            }
            let ratio = d * e.trace_product(e) / (t * t);
            ((ratio - 1.0) / (d - 1.0)).max(0.0).sqrt()
        })
        .collect();

    Ok(PovmDiagnostics {
        outcomes: effects.len(),
        dim,
        min_eigenvalues,
        all_psd,
        completeness_residual,
        complete: completeness_residual <= 1e-10,
        pairwise_overlap: symmetric.then(|| (lo + hi) / 2.0),
        overlap_spread,
        symmetric,
        informationally_complete,
        direction_purity,
    })
}

/// Outcome of steering Alice's system through one of Bob's effects.
#[derive(Clone, Debug)]
pub enum Conditioned {
    Outcome { probability: f64, state: Operator },
    /// The effect has (numerically) zero probability; no state is defined.
    Degenerate { probability: f64 },
}

impl Conditioned {
    pub fn probability(&self) -> f64 {
        match self {
            Conditioned::Outcome { probability, .. } | Conditioned::Degenerate { probability } => {
                *probability
            }
        }
    }

    pub fn state(&self) -> Option<&Operator> {
        match self {
            Conditioned::Outcome { state, .. } => Some(state),
            Conditioned::Degenerate { .. } => None,
        }
    }
}

/// Alice's normalised post-measurement state given Bob's effect `E`,
/// `Tr_B[(I (x) sqrt E) rho (I (x) sqrt E)] / p`.
pub fn conditioned_state(state: &Operator, bob_effect: &Operator) -> Result<Conditioned> {
    let dim_b = bob_effect.dim();
    if dim_b == 0 || state.dim() % dim_b != 0 {
        return Err(QmathError::DimensionMismatch { expected: dim_b, found: state.dim() });
    }
    let dim_a = state.dim() / dim_b;
    state.require_hermitian()?;
    bob_effect.require_hermitian()?;
    let lifted = Operator::identity(dim_a).kron(bob_effect);
    let probability = clamp_probability(lifted.trace_product(state));
    if probability <= 1e-12 {
        return Ok(Conditioned::Degenerate { probability });
    }
    let root = Operator::identity(dim_a).kron(&bob_effect.sqrt_psd());
    let post = &(&root * state) * &root;
    let reduced = post.partial_trace_second(dim_a, dim_b)?.scale(1.0 / probability);
    Ok(Conditioned::Outcome { probability, state: reduced.hermitian_part() })
}

/// Uhlmann fidelity `(Tr sqrt(sqrt(a) b sqrt(a)))^2`.
pub fn fidelity(a: &Operator, b: &Operator) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(QmathError::DimensionMismatch { expected: a.dim(), found: b.dim() });
    }
    a.require_psd()?;
    b.require_psd()?;
    let ra = a.sqrt_psd();
    let inner = &(&ra * b) * &ra;
    let root_trace: f64 = inner.eigen().values.iter().map(|v| v.max(0.0).sqrt()).sum();
    Ok((root_trace * root_trace).clamp(0.0, 1.0))
}


#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    fn bloch(max_norm: f64) -> impl Strategy<Value = BlochVector> {
        (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0, 0.0..max_norm).prop_filter_map("nonzero", move |(x, y, z, r)| {
            let v = BlochVector::new(x, y, z);
            v.normalized().ok().map(|u| u.scale(r))
        })
    }

    fn unitary() -> impl Strategy<Value = Operator> {
        (bloch(1.0), -3.0f64..3.0).prop_map(|(axis, t)| {
            let n = axis.normalized().unwrap_or(BlochVector::new(0., 0., 1.));
            let (s, co) = (t / 2.0).sin_cos();
            let m = Operator::identity(2).matrix().map(|v| v * c(co, 0.))
                - sigma_dot(n).matrix().map(|v| v * c(0., s));
            Operator::new(m).unwrap()
        })
    }

    proptest! {
        #[test]
        fn bloch_round_trip(v in bloch(1.0), w in 0.01f64..2.0) {
            let (w2, v2) = bloch_from_operator(&operator_from_bloch(w, v)).unwrap();
            prop_assert!((w2 - w).abs() < 1e-12);
            prop_assert!(v2.distance(v) < 1e-12);
        }

        #[test]
        fn born_probabilities_sum_to_one(a in bloch(1.0), b in bloch(1.0), v in 0.0f64..1.0) {
            let rho = werner(v);
            let mut total = 0.0;
            for sa in [1.0, -1.0] {
                for sb in [1.0, -1.0] {
                    let ea = operator_from_bloch(1.0, a.scale(sa));
                    let eb = operator_from_bloch(1.0, b.scale(sb));
                    let p = born_joint(&rho, &ea, &eb).unwrap();
                    prop_assert!(p >= 0.0);
                    total += p;
                }
            }
            prop_assert!((total - 1.0).abs() < 1e-12);
        }

        #[test]
        fn fidelity_symmetric_and_unitarily_invariant(a in bloch(0.99), b in bloch(0.99), u in unitary()) {
            let (ra, rb) = (qubit_state(a), qubit_state(b));
            let f = fidelity(&ra, &rb).unwrap();
            prop_assert!((f - fidelity(&rb, &ra).unwrap()).abs() < 1e-9);
            let g = fidelity(&ra.conjugate_by(&u), &rb.conjugate_by(&u)).unwrap();
            prop_assert!((f - g).abs() < 1e-9);
            prop_assert!(f <= 1.0 + 1e-9 && f >= -1e-12);
        }

        #[test]
        fn rotated_tetrahedron_is_a_sic(u in unitary()) {
            let s = 1.0 / 3f64.sqrt();
            let dirs = [
                BlochVector::new(s, s, s),
                BlochVector::new(s, -s, -s),
                BlochVector::new(-s, s, -s),
                BlochVector::new(-s, -s, s),
            ];
            let effects: Vec<Operator> =
                dirs.iter().map(|&n| operator_from_bloch(0.5, n).conjugate_by(&u)).collect();
            let d = validate_povm(&effects).unwrap();
            prop_assert!(d.is_sic());
            // frame identity: sum_j n_j n_j^T = (4/3) I
            let mut frame = [[0.0; 3]; 3];
            for e in &effects {
                let (_, n) = bloch_from_operator(e).unwrap();
                let n = n.to_array();
                for i in 0..3 {
                    for j in 0..3 {
                        frame[i][j] += n[i] * n[j];
                    }
                }
            }
            for i in 0..3 {
                for j in 0..3 {
                    let expected = if i == j { 4.0 / 3.0 } else { 0.0 };
                    prop_assert!((frame[i][j] - expected).abs() < 1e-12);
                }
            }
        }
    }
}
