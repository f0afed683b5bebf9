//! Small primal-dual interior-point SDP solver.
//!
//! Problems are posed as
//!
//! ```text
//! maximize    c^T x
//! subject to  F(x) = F0 + sum_i x_i F_i  is PSD (block diagonal)
//!             A x = b
//! ```
//!
//! with dual
//!
//! ```text
//! minimize    Tr(F0 Y) + b^T lambda
//! subject to  Tr(F_i Y) + c_i = (A^T lambda)_i,  Y PSD.
//! ```
//!
//! Equalities are eliminated through a nullspace basis before the
//! interior-point iterations. The iterations use Nesterov-Todd scaling, a
//! Mehrotra predictor-corrector and an infeasible identity-multiple start.

use log::debug;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Mat = DMatrix<f64>;

#[derive(Debug, Error)]
pub enum SdpError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("numerical breakdown at iteration {iteration}: {detail}")]
    NumericalBreakdown { iteration: usize, detail: String },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, SdpError>;

/// Symmetric block-diagonal matrix given by `(block, row, col, value)`
/// entries. An off-diagonal entry sets both `(row, col)` and `(col, row)`;
/// repeated entries add up.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SymMatrix {
    pub entries: Vec<(usize, usize, usize, f64)>,
}

impl SymMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, block: usize, row: usize, col: usize, value: f64) {
        let (i, j) = if row <= col { (row, col) } else { (col, row) };
        self.entries.push((block, i, j, value));
    }

    pub fn from_dense(blocks: &[Mat]) -> Self {
        let mut s = Self::new();
        for (b, m) in blocks.iter().enumerate() {
            for j in 0..m.ncols() {
                for i in 0..=j {
                    if m[(i, j)] != 0.0 {
                        s.push(b, i, j, m[(i, j)]);
                    }
                }
            }
        }
        s
    }

    pub fn to_dense(&self, blocks: &[usize]) -> Vec<Mat> {
        let mut out: Vec<Mat> = blocks.iter().map(|&d| Mat::zeros(d, d)).collect();
        for &(b, i, j, v) in &self.entries {
            out[b][(i, j)] += v;
            if i != j {
                out[b][(j, i)] += v;
            }
        }
        out
    }

    /// Merged entries listing both triangles.
    fn full_entries(&self) -> Vec<(usize, usize, usize, f64)> {
        let mut map = std::collections::BTreeMap::new();
        for &(b, i, j, v) in &self.entries {
            *map.entry((b, i, j)).or_insert(0.0) += v;
            if i != j {
                *map.entry((b, j, i)).or_insert(0.0) += v;
            }
        }
        map.into_iter().filter(|(_, v)| *v != 0.0).map(|((b, i, j), v)| (b, i, j, v)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SdpProblem {
    pub blocks: Vec<usize>,
    pub c: Vec<f64>,
    #[serde(rename = "F0")]
    pub f0: SymMatrix,
    #[serde(rename = "Fi")]
    pub fi: Vec<SymMatrix>,
    #[serde(rename = "A", default)]
    pub a: Vec<Vec<f64>>,
    #[serde(default)]
    pub b: Vec<f64>,
}

impl SdpProblem {
    pub fn new(blocks: Vec<usize>, c: Vec<f64>) -> Self {
        let n = c.len();
        Self { blocks, c, f0: SymMatrix::new(), fi: vec![SymMatrix::new(); n], a: Vec::new(), b: Vec::new() }
    }

    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    pub fn add_equality(&mut self, row: Vec<f64>, rhs: f64) {
        self.a.push(row);
        self.b.push(rhs);
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SdpError::InvalidProblem(m));
        if self.blocks.is_empty() || self.blocks.contains(&0) {
            return bad("blocks must be non-empty with positive sizes".into());
        }
        if self.fi.len() != self.c.len() {
            return bad(format!("{} coefficient matrices for {} variables", self.fi.len(), self.c.len()));
        }
        for m in std::iter::once(&self.f0).chain(&self.fi) {
            for &(b, i, j, v) in &m.entries {
                if b >= self.blocks.len() || j >= self.blocks[b] || i > j {
                    return bad(format!("entry ({b}, {i}, {j}) outside the block structure"));
                }
                if !v.is_finite() {
                    return bad("non-finite matrix entry".into());
                }
            }
        }
        if self.a.len() != self.b.len() {
            return bad("A and b have different row counts".into());
        }
        if self.a.iter().any(|r| r.len() != self.c.len()) {
            return bad("A has the wrong number of columns".into());
        }
        if self.c.iter().chain(&self.b).chain(self.a.iter().flatten()).any(|v| !v.is_finite()) {
            return bad("non-finite coefficient".into());
        }
        Ok(())
    }

    /// `F(x)` as dense blocks.
    pub fn affine_map(&self, x: &[f64]) -> Vec<Mat> {
        let mut out = self.f0.to_dense(&self.blocks);
        for (xi, fi) in x.iter().zip(&self.fi) {
            for &(b, i, j, v) in &fi.entries {
                out[b][(i, j)] += xi * v;
                if i != j {
                    out[b][(j, i)] += xi * v;
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(text)?;
        p.validate()?;
        Ok(p)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SdpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIterations,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SdpOptions {
    /// Absolute tolerance on `|primal - dual|`.
    pub gap_tolerance: f64,
    /// Relative tolerance on primal and dual residuals.
    pub feasibility_tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SdpOptions {
    fn default() -> Self {
        Self { gap_tolerance: 1e-7, feasibility_tolerance: 1e-8, max_iterations: 200 }
    }
}

/// One logged interior-point iterate. Values refer to the original problem.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterateRecord {
    pub iteration: usize,
    pub primal: f64,
    pub dual: f64,
    pub mu: f64,
    /// Relative residual of the dual equality constraints.
    pub dual_infeasibility: f64,
    /// Relative residual of `F(x) = Z`.
    pub primal_infeasibility: f64,
    pub step_primal: f64,
    pub step_dual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SdpSolution {
    pub status: SdpStatus,
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
    pub x: Vec<f64>,
    /// Dual matrix `Y`, one row-major block each.
    pub dual_matrix: Vec<Vec<f64>>,
    /// Equality multipliers `lambda`.
    pub multipliers: Vec<f64>,
    pub iterations: usize,
    pub trace: Vec<IterateRecord>,
}

impl SdpSolution {
    pub fn dual_blocks(&self, blocks: &[usize]) -> Vec<Mat> {
        blocks.iter().zip(&self.dual_matrix).map(|(&d, v)| Mat::from_row_slice(d, d, v)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Full-entry sparse operator, both triangles listed.
type Sparse = Vec<(usize, usize, usize, f64)>;

/// Equality-free problem in the internal form
/// `max b^T y  s.t.  Z = C - sum y_i A_i  PSD`.
struct Reduced {
    blocks: Vec<usize>,
    c: Vec<Mat>,
    a: Vec<Sparse>,
    b: DVector<f64>,
    /// `x = x0 + N z`, `z` scattered from `y` through `kept`.
    x0: DVector<f64>,
    null: Option<Mat>,
    kept: Vec<usize>,
    reduced_dim: usize,
    offset: f64,
}

enum Prepared {
    Ready(Reduced),
    Status(SdpStatus),
}

fn prepare(p: &SdpProblem) -> Prepared {
    let n = p.num_vars();
    let c = DVector::from_column_slice(&p.c);
    let (x0, null) = if p.a.is_empty() {
        (DVector::zeros(n), None)
    } else {
        let rows = p.a.len();
        let a = Mat::from_fn(rows, n, |i, j| p.a[i][j]);
        let b = DVector::from_column_slice(&p.b);
        let svd = a.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let eps = 1e-11 * smax.max(1.0);
        let x0 = svd.solve(&b, eps).expect("svd with both factors");
        if (&a * &x0 - &b).norm() > 1e-9 * (1.0 + b.norm()) {
            return Prepared::Status(SdpStatus::Infeasible);
        }
        let eig = (a.transpose() * &a).symmetric_eigen();
        let emax = eig.eigenvalues.max().max(1.0);
        let cols: Vec<usize> = (0..n).filter(|&j| eig.eigenvalues[j] <= 1e-10 * emax).collect();
        let mut nb = Mat::zeros(n, cols.len());
        for (k, &j) in cols.iter().enumerate() {
            nb.set_column(k, &eig.eigenvectors.column(j));
        }
        (x0, Some(nb))
    };
    let reduced_dim = null.as_ref().map_or(n, |m| m.ncols());
    let full: Vec<Sparse> = p.fi.iter().map(SymMatrix::full_entries).collect();

    // F0' = F0 + sum x0_i F_i
    let mut c_mat = p.f0.to_dense(&p.blocks);
    for (i, f) in full.iter().enumerate() {
        if x0[i] != 0.0 {
            for &(b, k, l, v) in f {
                c_mat[b][(k, l)] += x0[i] * v;
            }
        }
    }
    let (g, cb): (Vec<Sparse>, Vec<f64>) = match &null {
        None => (full, p.c.clone()),
        Some(nb) => {
            let cb = nb.transpose() * &c;
            let mut g = Vec::with_capacity(nb.ncols());
            for j in 0..nb.ncols() {
                let mut map = std::collections::BTreeMap::new();
                for (i, f) in full.iter().enumerate() {
                    let w = nb[(i, j)];
                    if w.abs() > 1e-15 {
                        for &(b, k, l, v) in f {
                            *map.entry((b, k, l)).or_insert(0.0) += w * v;
                        }
                    }
                }
                g.push(map.into_iter().filter(|(_, v)| v.abs() > 1e-14).map(|((b, k, l), v)| (b, k, l, v)).collect());
            }
            (g, cb.iter().copied().collect())
        }
    };
    let mut kept = Vec::new();
    let mut a = Vec::new();
    let mut b = Vec::new();
    for (j, gj) in g.into_iter().enumerate() {
        if gj.is_empty() {
            if cb[j].abs() > 1e-12 {
                return Prepared::Status(SdpStatus::Unbounded);
            }
            continue;
        }
        kept.push(j);
        a.push(gj.into_iter().map(|(bk, k, l, v)| (bk, k, l, -v)).collect());
        b.push(cb[j]);
    }
    Prepared::Ready(Reduced {
        blocks: p.blocks.clone(),
        c: c_mat,
        a,
        b: DVector::from_vec(b),
        offset: c.dot(&x0),
        x0,
        null,
        kept,
        reduced_dim,
    })
}

fn inner(a: &[Mat], b: &[Mat]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

fn frob(a: &[Mat]) -> f64 {
    a.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt()
}

impl Reduced {
    fn apply(&self, x: &[Mat]) -> DVector<f64> {
        DVector::from_iterator(
            self.a.len(),
            self.a.iter().map(|ai| ai.iter().map(|&(b, k, l, v)| v * x[b][(k, l)]).sum::<f64>()),
        )
    }

    fn adjoint(&self, y: &DVector<f64>) -> Vec<Mat> {
        let mut out: Vec<Mat> = self.blocks.iter().map(|&d| Mat::zeros(d, d)).collect();
        for (ai, &yi) in self.a.iter().zip(y.iter()) {
            for &(b, k, l, v) in ai {
                out[b][(k, l)] += yi * v;
            }
        }
        out
    }

    /// `M_ij = <A_i, W A_j W>`.
    fn schur(&self, w: &[Mat]) -> Mat {
        let m = self.a.len();
        let row = |i: usize| -> Vec<f64> {
            let ai = &self.a[i];
            (i..m)
                .map(|j| {
                    let mut s = 0.0;
                    for &(b, k, l, u) in ai {
                        let wb = &w[b];
                        for &(b2, p, q, v) in &self.a[j] {
                            if b2 == b {
                                s += u * v * wb[(k, p)] * wb[(q, l)];
                            }
                        }
                    }
                    s
                })
                .collect()
        };
        #[cfg(feature = "parallel")]
        let rows: Vec<Vec<f64>> = {
            use rayon::prelude::*;
            (0..m).into_par_iter().map(row).collect()
        };
        #[cfg(not(feature = "parallel"))]
        let rows: Vec<Vec<f64>> = (0..m).map(row).collect();
        let mut out = Mat::zeros(m, m);
        for (i, r) in rows.into_iter().enumerate() {
            for (off, v) in r.into_iter().enumerate() {
                out[(i, i + off)] = v;
                out[(i + off, i)] = v;
            }
        }
        out
    }
}

struct Scaling {
    g: Vec<Mat>,
    g_inv: Vec<Mat>,
    w: Vec<Mat>,
    d: Vec<DVector<f64>>,
}

fn nt_scaling(x: &[Mat], z: &[Mat]) -> std::result::Result<Scaling, String> {
    let mut s = Scaling { g: vec![], g_inv: vec![], w: vec![], d: vec![] };
    for (xb, zb) in x.iter().zip(z) {
        let l = xb.clone().cholesky().ok_or("X lost positive definiteness")?.l();
        let eig = (l.transpose() * zb * &l).symmetric_eigen();
        if eig.eigenvalues.iter().any(|&v| !(v > 0.0)) {
            return Err("Z lost positive definiteness".into());
        }
        let d = eig.eigenvalues.map(f64::sqrt);
        let u = eig.eigenvectors;
        let g = &l * &u * Mat::from_diagonal(&d.map(|v| v.powf(-0.5)));
        let l_inv = l.clone().try_inverse().ok_or("singular Cholesky factor")?;
        let g_inv = Mat::from_diagonal(&d.map(f64::sqrt)) * u.transpose() * l_inv;
        s.w.push(&g * g.transpose());
        s.g.push(g);
        s.g_inv.push(g_inv);
        s.d.push(d);
    }
    Ok(s)
}

/// Largest `alpha` keeping `x + alpha dx` PSD (may be infinite).
fn max_step(x: &[Mat], dx: &[Mat]) -> std::result::Result<f64, String> {
    let mut alpha = f64::INFINITY;
    for (xb, db) in x.iter().zip(dx) {
        let chol = xb.clone().cholesky().ok_or("iterate lost positive definiteness")?;
        let l = chol.l();
        let t = l.solve_lower_triangular(db).ok_or("triangular solve")?;
        let s = l.solve_lower_triangular(&t.transpose()).ok_or("triangular solve")?;
        let s = (&s + s.transpose()) * 0.5;
        let lmin = s.symmetric_eigenvalues().min();
        if lmin < 0.0 {
            alpha = alpha.min(-1.0 / lmin);
        }
    }
    Ok(alpha)
}

fn symmetrize(m: &mut [Mat]) {
    for b in m {
        let t = b.transpose();
        *b += t;
        *b *= 0.5;
    }
}

enum SchurFactor {
    Chol(nalgebra::Cholesky<f64, nalgebra::Dyn>),
    Lu(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

impl SchurFactor {
    fn new(m: Mat) -> Option<Self> {
        match m.clone().cholesky() {
            Some(c) => Some(Self::Chol(c)),
            None => {
                let lu = m.lu();
                lu.is_invertible().then_some(Self::Lu(lu))
            }
        }
    }

    fn solve(&self, r: &DVector<f64>) -> Option<DVector<f64>> {
        match self {
            Self::Chol(c) => Some(c.solve(r)),
            Self::Lu(l) => l.solve(r),
        }
    }
}

struct IpmOutcome {
    status: SdpStatus,
    x: Vec<Mat>,
    y: DVector<f64>,
    iterations: usize,
    trace: Vec<IterateRecord>,
}

fn ipm(r: &Reduced, opts: &SdpOptions) -> Result<IpmOutcome> {
    let n: usize = r.blocks.iter().sum();
    let nf = n as f64;
    let m = r.a.len();
    let norm_c = frob(&r.c);
    let norm_b = r.b.norm();
    let a_norms: Vec<f64> = r.a.iter().map(|a| a.iter().map(|e| e.3 * e.3).sum::<f64>().sqrt()).collect();
    let max_a = a_norms.iter().copied().fold(0.0, f64::max);
    let mut xi = 10f64.max(nf.sqrt());
    for (bi, an) in r.b.iter().zip(&a_norms) {
        xi = xi.max(nf * (1.0 + bi.abs()) / (1.0 + an));
    }
    let eta = 10f64.max(nf.sqrt()).max(norm_c).max(max_a);
    let identity = |s: f64| -> Vec<Mat> { r.blocks.iter().map(|&d| Mat::identity(d, d) * s).collect() };
    let mut x = identity(xi);
    let mut z = identity(eta);
    let mut y = DVector::zeros(m);
    let mut trace = Vec::new();
    let breakdown = |iteration: usize, detail: String| SdpError::NumericalBreakdown { iteration, detail };

    let (mut step_p, mut step_d) = (0.0, 0.0);
    for it in 0..=opts.max_iterations {
        let rp = &r.b - r.apply(&x);
        let aty = r.adjoint(&y);
        let rd: Vec<Mat> = r.c.iter().zip(&aty).zip(&z).map(|((c, a), z)| c - a - z).collect();
        let pobj = r.b.dot(&y) + r.offset;
        let dobj = inner(&r.c, &x) + r.offset;
        let mu = inner(&x, &z) / nf;
        let dinf = rp.norm() / (1.0 + norm_b);
        let pinf = frob(&rd) / (1.0 + norm_c);
        let record = IterateRecord {
            iteration: it,
            primal: pobj,
            dual: dobj,
            mu,
            dual_infeasibility: dinf,
            primal_infeasibility: pinf,
            step_primal: step_d,
            step_dual: step_p,
        };
        debug!(
            "sdp it {it:3}: primal {pobj:.10} dual {dobj:.10} mu {mu:.2e} pinf {pinf:.2e} dinf {dinf:.2e}"
        );
        trace.push(record);
        if (dobj - pobj).abs() <= opts.gap_tolerance
            && pinf <= opts.feasibility_tolerance
            && dinf <= opts.feasibility_tolerance
        {
            return Ok(IpmOutcome { status: SdpStatus::Optimal, x, y, iterations: it, trace });
        }
        // Normalized certificates of infeasibility.
        let cx = inner(&r.c, &x);
        if cx < 0.0 && (r.apply(&x).norm() / -cx) < 1e-9 && frob(&x) > 1e6 {
            return Ok(IpmOutcome { status: SdpStatus::Infeasible, x, y, iterations: it, trace });
        }
        if r.b.dot(&y) > 1e10 * (1.0 + norm_c) {
            return Ok(IpmOutcome { status: SdpStatus::Unbounded, x, y, iterations: it, trace });
        }
        if it == opts.max_iterations {
            break;
        }

        let sc = nt_scaling(&x, &z).map_err(|e| breakdown(it, e))?;
        let schur = r.schur(&sc.w);
        let factor = SchurFactor::new(schur).ok_or_else(|| breakdown(it, "singular Schur complement".into()))?;
        let wrdw: Vec<Mat> = sc.w.iter().zip(&rd).map(|(w, d)| w * d * w).collect();
        let a_wrdw = r.apply(&wrdw);

        let direction = |rc: &[Mat]| -> Option<(Vec<Mat>, DVector<f64>, Vec<Mat>)> {
            let rhs = &rp - r.apply(rc) + &a_wrdw;
            let dy = factor.solve(&rhs)?;
            if dy.iter().any(|v| !v.is_finite()) {
                return None;
            }
            let atdy = r.adjoint(&dy);
            let dz: Vec<Mat> = rd.iter().zip(&atdy).map(|(d, a)| d - a).collect();
            let mut dx: Vec<Mat> =
                rc.iter().zip(&sc.w).zip(&dz).map(|((rc, w), dz)| rc - w * dz * w).collect();
            symmetrize(&mut dx);
            Some((dx, dy, dz))
        };

        // Predictor.
        let rc_aff: Vec<Mat> = x.iter().map(|xb| -xb).collect();
        let (dx_a, _, dz_a) = direction(&rc_aff).ok_or_else(|| breakdown(it, "predictor solve".into()))?;
        let ap = max_step(&x, &dx_a).map_err(|e| breakdown(it, e))?.min(1.0);
        let ad = max_step(&z, &dz_a).map_err(|e| breakdown(it, e))?.min(1.0);
        let x_aff: Vec<Mat> = x.iter().zip(&dx_a).map(|(a, d)| a + d * ap).collect();
        let z_aff: Vec<Mat> = z.iter().zip(&dz_a).map(|(a, d)| a + d * ad).collect();
        let mu_aff = inner(&x_aff, &z_aff) / nf;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        // Corrector in the scaled space.
        let mut rc = Vec::with_capacity(x.len());
        for b in 0..x.len() {
            let dxs = &sc.g_inv[b] * &dx_a[b] * sc.g_inv[b].transpose();
            let dzs = sc.g[b].transpose() * &dz_a[b] * &sc.g[b];
            let prod = &dxs * &dzs;
            let d = &sc.d[b];
            let k = d.len();
            let t = Mat::from_fn(k, k, |i, j| {
                let mut rij = -0.5 * (prod[(i, j)] + prod[(j, i)]);
                if i == j {
                    rij += sigma * mu - d[i] * d[i];
                }
                2.0 * rij / (d[i] + d[j])
            });
            rc.push(&sc.g[b] * t * sc.g[b].transpose());
        }
        let (dx, dy, dz) = direction(&rc).ok_or_else(|| breakdown(it, "corrector solve".into()))?;
        let ap = (0.98 * max_step(&x, &dx).map_err(|e| breakdown(it, e))?).min(1.0);
        let ad = (0.98 * max_step(&z, &dz).map_err(|e| breakdown(it, e))?).min(1.0);
        for b in 0..x.len() {
            x[b] += &dx[b] * ap;
            z[b] += &dz[b] * ad;
        }
        y += dy * ad;
        symmetrize(&mut x);
        symmetrize(&mut z);
        step_p = ap;
        step_d = ad;
    }
    let iterations = opts.max_iterations;
    Ok(IpmOutcome { status: SdpStatus::MaxIterations, x, y, iterations, trace })
}

/// Solves the problem. Deterministic for identical inputs.
pub fn solve_sdp(p: &SdpProblem, opts: &SdpOptions) -> Result<SdpSolution> {
    p.validate()?;
    let r = match prepare(p) {
        Prepared::Ready(r) => r,
        Prepared::Status(status) => {
            return Ok(SdpSolution {
                status,
                primal: f64::NAN,
                dual: f64::NAN,
                gap: f64::NAN,
                x: vec![f64::NAN; p.num_vars()],
                dual_matrix: Vec::new(),
                multipliers: Vec::new(),
                iterations: 0,
                trace: Vec::new(),
            })
        }
    };
    let out = if r.a.is_empty() {
        // Nothing to optimise: F(x0) must already be PSD.
        let feasible = r.c.iter().all(|m| m.symmetric_eigenvalues().min() >= -1e-12);
        let x = r.blocks.iter().map(|&d| Mat::zeros(d, d)).collect();
        let status = if feasible { SdpStatus::Optimal } else { SdpStatus::Infeasible };
        IpmOutcome { status, x, y: DVector::zeros(0), iterations: 0, trace: Vec::new() }
    } else {
        ipm(&r, opts)?
    };

    let mut zfull = DVector::zeros(r.reduced_dim);
    for (k, &j) in r.kept.iter().enumerate() {
        zfull[j] = out.y[k];
    }
    let x = match &r.null {
        None => zfull,
        Some(nb) => &r.x0 + nb * zfull,
    };
    let x: Vec<f64> = x.iter().copied().collect();
    let y_mat = out.x;
    let primal = p.c.iter().zip(&x).map(|(c, x)| c * x).sum::<f64>();
    let multipliers = equality_multipliers(p, &y_mat);
    let dual = dual_value(p, &y_mat, &multipliers);
    Ok(SdpSolution {
        status: out.status,
        primal,
        dual,
        gap: (primal - dual).abs(),
        x,
        dual_matrix: y_mat.iter().map(|m| m.transpose().as_slice().to_vec()).collect(),
        multipliers,
        iterations: out.iterations,
        trace: out.trace,
    })
}

fn dual_products(p: &SdpProblem, y: &[Mat]) -> Vec<f64> {
    p.fi.iter()
        .map(|f| f.full_entries().iter().map(|&(b, i, j, v)| v * y[b][(i, j)]).sum())
        .collect()
}

/// Least-squares `lambda` with `A^T lambda = c + F*(Y)`.
fn equality_multipliers(p: &SdpProblem, y: &[Mat]) -> Vec<f64> {
    if p.a.is_empty() {
        return Vec::new();
    }
    let n = p.num_vars();
    let at = Mat::from_fn(n, p.a.len(), |i, j| p.a[j][i]);
    let r = DVector::from_iterator(n, p.c.iter().zip(dual_products(p, y)).map(|(c, f)| c + f));
    at.svd(true, true).solve(&r, 1e-11).map(|v| v.iter().copied().collect()).unwrap_or_default()
}

fn dual_value(p: &SdpProblem, y: &[Mat], lambda: &[f64]) -> f64 {
    let f0 = p.f0.to_dense(&p.blocks);
    inner(&f0, y) + p.b.iter().zip(lambda).map(|(b, l)| b * l).sum::<f64>()
}

/// Residuals recomputed from the problem data and a claimed solution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    /// Smallest eigenvalue of `F(x)`; negative means primal infeasible.
    pub primal_min_eigenvalue: f64,
    /// Smallest eigenvalue of `Y`.
    pub dual_min_eigenvalue: f64,
    /// `max |A x - b|`.
    pub equality_residual: f64,
    /// `max_i |Tr(F_i Y) + c_i - (A^T lambda)_i|`.
    pub dual_residual: f64,
    pub primal_value: f64,
    pub dual_value: f64,
    pub gap: f64,
}

impl CertificateReport {
    pub fn within(&self, tol: f64) -> bool {
        self.primal_min_eigenvalue >= -tol
            && self.dual_min_eigenvalue >= -tol
            && self.equality_residual <= tol
            && self.dual_residual <= tol
            && self.gap <= tol
    }
}

pub fn check_certificate(p: &SdpProblem, s: &SdpSolution) -> CertificateReport {
    let min_eig = |ms: &[Mat]| ms.iter().map(|m| m.symmetric_eigenvalues().min()).fold(f64::INFINITY, f64::min);
    let fx = p.affine_map(&s.x);
    let y = s.dual_blocks(&p.blocks);
    let equality_residual = p
        .a
        .iter()
        .zip(&p.b)
        .map(|(row, b)| (row.iter().zip(&s.x).map(|(a, x)| a * x).sum::<f64>() - b).abs())
        .fold(0.0, f64::max);
    let products = dual_products(p, &y);
    let dual_residual = (0..p.num_vars())
        .map(|i| {
            let at: f64 = p.a.iter().zip(&s.multipliers).map(|(row, l)| row[i] * l).sum();
            (products[i] + p.c[i] - at).abs()
        })
        .fold(0.0, f64::max);
    let primal_value = p.c.iter().zip(&s.x).map(|(c, x)| c * x).sum::<f64>();
    let dual_value = dual_value(p, &y, &s.multipliers);
    CertificateReport {
        primal_min_eigenvalue: min_eig(&fx),
        dual_min_eigenvalue: if y.is_empty() { f64::NAN } else { min_eig(&y) },
        equality_residual,
        dual_residual,
        primal_value,
        dual_value,
        gap: (primal_value - dual_value).abs(),
    }
}
