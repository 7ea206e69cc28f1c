//! Primal-dual interior-point method for real semidefinite programs with one
//! PSD block and one nonnegative-orthant block:
//!
//! ```text
//! min  <C, X> + c^T x
//! s.t. <A_i, X> + e_i^T x = b_i,   X >= 0 (PSD),   x >= 0
//! ```
//!
//! Search directions are HKM with a Mehrotra predictor-corrector, started from
//! an infeasible scaled identity.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Symmetric coefficient matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum SymTerm {
    /// Upper-triangle entries `(i, j, v)` with `i <= j`; `(j, i)` mirrors `(i, j)`.
    Sparse(Vec<(usize, usize, f64)>),
    /// `sum_k w_k u_k u_k^T`.
    LowRank(Vec<(f64, DVector<f64>)>),
    Dense(DMatrix<f64>),
}

impl SymTerm {
    /// `Tr(A Y)` for an arbitrary square `Y`.
    pub fn inner(&self, y: &DMatrix<f64>) -> f64 {
        match self {
            SymTerm::Sparse(e) => e
                .iter()
                .map(|&(i, j, v)| if i == j { v * y[(i, i)] } else { v * (y[(i, j)] + y[(j, i)]) })
                .sum(),
            SymTerm::LowRank(f) => f.iter().map(|(w, u)| w * u.dot(&(y * u))).sum(),
            SymTerm::Dense(a) => a.component_mul(&y.transpose()).sum(),
        }
    }

    pub fn add_to(&self, m: &mut DMatrix<f64>, scale: f64) {
        match self {
            SymTerm::Sparse(e) => {
                for &(i, j, v) in e {
                    m[(i, j)] += scale * v;
                    if i != j {
                        m[(j, i)] += scale * v;
                    }
                }
            }
            SymTerm::LowRank(f) => {
                for (w, u) in f {
                    m.ger(scale * w, u, u, 1.0);
                }
            }
            SymTerm::Dense(a) => *m += a * scale,
        }
    }

    pub fn to_dense(&self, n: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(n, n);
        self.add_to(&mut m, 1.0);
        m
    }

    pub fn frobenius_sq(&self) -> f64 {
        match self {
            SymTerm::Sparse(e) => e.iter().map(|&(i, j, v)| if i == j { v * v } else { 2.0 * v * v }).sum(),
            SymTerm::LowRank(f) => {
                let mut s = 0.0;
                for (wa, ua) in f {
                    for (wb, ub) in f {
                        let d = ua.dot(ub);
                        s += wa * wb * d * d;
                    }
                }
                s.max(0.0)
            }
            SymTerm::Dense(a) => a.norm_squared(),
        }
    }

    pub fn scale(&mut self, s: f64) {
        match self {
            SymTerm::Sparse(e) => e.iter_mut().for_each(|x| x.2 *= s),
            SymTerm::LowRank(f) => f.iter_mut().for_each(|x| x.0 *= s),
            SymTerm::Dense(a) => *a *= s,
        }
    }

    fn max_index(&self) -> Option<usize> {
        match self {
            SymTerm::Sparse(e) => e.iter().map(|&(i, j, _)| i.max(j)).max(),
            SymTerm::LowRank(f) => f.iter().map(|(_, u)| u.len().saturating_sub(1)).max(),
            SymTerm::Dense(a) => Some(a.nrows().max(a.ncols()).saturating_sub(1)),
        }
    }
}

/// One equality row `<A, X> + e^T x = b`.
#[derive(Debug, Clone, PartialEq)]
pub struct RealRow {
    pub a: Option<SymTerm>,
    /// Sparse LP coefficients `(index, value)`.
    pub e: Vec<(usize, f64)>,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RealSdp {
    pub n: usize,
    pub p: usize,
    pub c_mat: Option<SymTerm>,
    pub c_lin: DVector<f64>,
    pub rows: Vec<RealRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    MaxIters,
    Infeasible,
    Unbounded,
    NumericalError,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IpmSettings {
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for IpmSettings {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            max_iters: 200,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RealSolution {
    pub x_mat: DMatrix<f64>,
    pub x_lin: DVector<f64>,
    pub y: DVector<f64>,
    pub z_mat: DMatrix<f64>,
    pub z_lin: DVector<f64>,
    pub status: SolveStatus,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub gap: f64,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub iterations: usize,
}

/// Rows after equilibration, split by structure for the Schur complement.
struct Prepared {
    n: usize,
    p: usize,
    c_mat: DMatrix<f64>,
    c_lin: DVector<f64>,
    a: Vec<Option<SymTerm>>,
    e: DMatrix<f64>,
    b: DVector<f64>,
    /// Directed sparse entries `(a, b, coef)` per row: `A = sum coef e_a e_b^T`.
    directed: Vec<Vec<(usize, usize, f64)>>,
    /// Stacked low-rank factors with their owning row and weight.
    u: DMatrix<f64>,
    u_owner: Vec<usize>,
    u_weight: Vec<f64>,
    dense_rows: Vec<usize>,
    row_scale: DVector<f64>,
    obj_scale: f64,
    b_scale: f64,
    kept: Vec<usize>,
}

fn prepare(prob: &RealSdp) -> Result<Prepared, SolveStatus> {
    let n = prob.n;
    let p = prob.p;
    let mut kept = Vec::new();
    let mut a = Vec::new();
    let mut e = Vec::new();
    let mut b = Vec::new();
    let mut row_scale = Vec::new();
    for (i, row) in prob.rows.iter().enumerate() {
        let norm_sq = row.a.as_ref().map_or(0.0, |t| t.frobenius_sq()) + row.e.iter().map(|x| x.1 * x.1).sum::<f64>();
        if norm_sq == 0.0 {
            if row.b != 0.0 {
                return Err(SolveStatus::Infeasible);
            }
            continue;
        }
        let s = 1.0 / norm_sq.sqrt();
        let mut t = row.a.clone();
        if let Some(t) = t.as_mut() {
            t.scale(s);
        }
        let mut erow = DVector::zeros(p);
        for &(k, v) in &row.e {
            erow[k] += v * s;
        }
        kept.push(i);
        a.push(t);
        e.push(erow);
        b.push(row.b * s);
        row_scale.push(s);
    }
    let m = kept.len();
    let e_mat = if m == 0 {
        DMatrix::zeros(0, p)
    } else {
        DMatrix::from_fn(m, p, |i, j| e[i][j])
    };
    let mut b = DVector::from_vec(b);
    let b_scale = b.amax().max(1.0);
    b /= b_scale;

    let mut c_mat = prob.c_mat.as_ref().map_or_else(|| DMatrix::zeros(n, n), |t| t.to_dense(n));
    let mut c_lin = prob.c_lin.clone();
    let c_norm = (c_mat.norm_squared() + c_lin.norm_squared()).sqrt();
    let obj_scale = if c_norm > 0.0 { 1.0 / c_norm.max(1e-300) } else { 1.0 };
    c_mat *= obj_scale;
    c_lin *= obj_scale;

    let mut directed = vec![Vec::new(); m];
    let mut cols = Vec::new();
    let mut u_owner = Vec::new();
    let mut u_weight = Vec::new();
    let mut dense_rows = Vec::new();
    for (i, t) in a.iter().enumerate() {
        match t {
            Some(SymTerm::Sparse(entries)) => {
                for &(r, c, v) in entries {
                    directed[i].push((r, c, v));
                    if r != c {
                        directed[i].push((c, r, v));
                    }
                }
            }
            Some(SymTerm::LowRank(f)) => {
                for (w, vec) in f {
                    cols.push(vec.clone());
                    u_owner.push(i);
                    u_weight.push(*w);
                }
            }
            Some(SymTerm::Dense(_)) => dense_rows.push(i),
            None => {}
        }
    }
    let u = if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    };
    Ok(Prepared {
        n,
        p,
        c_mat,
        c_lin,
        a,
        e: e_mat,
        b,
        directed,
        u,
        u_owner,
        u_weight,
        dense_rows,
        row_scale: DVector::from_vec(row_scale),
        obj_scale,
        b_scale,
        kept,
    })
}

impl Prepared {
    fn m(&self) -> usize {
        self.b.len()
    }

    /// `A(Y)_i = Tr(A_i Y)`.
    fn apply(&self, y: &DMatrix<f64>) -> DVector<f64> {
        DVector::from_iterator(self.m(), self.a.iter().map(|t| t.as_ref().map_or(0.0, |t| t.inner(y))))
    }

    /// `sum_i w_i A_i`.
    fn adjoint(&self, w: &DVector<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n, self.n);
        for (i, t) in self.a.iter().enumerate() {
            if let Some(t) = t {
                if w[i] != 0.0 {
                    t.add_to(&mut out, w[i]);
                }
            }
        }
        out
    }

    /// `M_ij = Tr(A_i X A_j Z^-1) + (E D E^T)_ij`.
    fn schur(&self, x: &DMatrix<f64>, zi: &DMatrix<f64>, d: &DVector<f64>) -> DMatrix<f64> {
        let m = self.m();
        let mut out = DMatrix::zeros(m, m);

        // sparse x sparse
        for i in 0..m {
            if self.directed[i].is_empty() {
                continue;
            }
            for j in i..m {
                if self.directed[j].is_empty() {
                    continue;
                }
                let mut s = 0.0;
                for &(a, b, al) in &self.directed[i] {
                    for &(c, dd, ga) in &self.directed[j] {
                        s += al * ga * x[(b, c)] * zi[(dd, a)];
                    }
                }
                out[(i, j)] += s;
            }
        }

        if self.u.ncols() > 0 {
            let xu = x * &self.u;
            let zu = zi * &self.u;
            let pm = self.u.transpose() * &xu;
            let sm = self.u.transpose() * &zu;
            let r = self.u.ncols();
            // low-rank x low-rank
            for a in 0..r {
                for b in 0..r {
                    let (i, j) = (self.u_owner[a], self.u_owner[b]);
                    if i <= j {
                        out[(i, j)] += self.u_weight[a] * self.u_weight[b] * pm[(a, b)] * sm[(b, a)];
                    }
                }
            }
            // sparse x low-rank, both orientations land in the upper triangle
            for i in 0..m {
                if self.directed[i].is_empty() {
                    continue;
                }
                for k in 0..r {
                    let j = self.u_owner[k];
                    let mut s = 0.0;
                    for &(a, b, al) in &self.directed[i] {
                        s += al * xu[(b, k)] * zu[(a, k)];
                    }
                    let v = self.u_weight[k] * s;
                    if i <= j {
                        out[(i, j)] += v;
                    } else {
                        out[(j, i)] += v;
                    }
                }
            }
        }

        // anything touching a dense row goes through G_j = X A_j Z^-1
        for &j in &self.dense_rows {
            if let Some(SymTerm::Dense(aj)) = &self.a[j] {
                let g = x * aj * zi;
                for i in 0..m {
                    if self.dense_rows.contains(&i) && i > j {
                        continue;
                    }
                    if let Some(t) = &self.a[i] {
                        let v = t.inner(&g);
                        let (r, c) = if i <= j { (i, j) } else { (j, i) };
                        out[(r, c)] += v;
                    }
                }
            }
        }

        for i in 0..m {
            for j in 0..i {
                out[(i, j)] = out[(j, i)];
            }
        }
        if self.p > 0 {
            let ed = DMatrix::from_fn(m, self.p, |i, k| self.e[(i, k)] * d[k]);
            out += ed * self.e.transpose();
        }
        out
    }
}

/// Inverse of a lower-triangular matrix by column-oriented forward substitution.
fn lower_inverse(l: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = l.nrows();
    let mut inv = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut col = vec![0.0; n];
        col[j] = 1.0;
        for k in j..n {
            let d = l[(k, k)];
            if d == 0.0 {
                return None;
            }
            let xk = col[k] / d;
            col[k] = xk;
            if xk != 0.0 {
                let lk = l.column(k);
                for i in k + 1..n {
                    col[i] -= lk[i] * xk;
                }
            }
        }
        inv.column_mut(j).copy_from_slice(&col);
    }
    Some(inv)
}

/// `L^-1` of the Cholesky factor of a symmetric positive definite matrix.
fn chol_inverse_factor(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let l = Cholesky::new(m.clone())?.unpack();
    lower_inverse(&l)
}

/// Largest `alpha` keeping `X + alpha dX` PSD, given `L^-1` with `X = L L^T`.
fn max_step_mat(linv: &DMatrix<f64>, dx: &DMatrix<f64>) -> f64 {
    if dx.nrows() == 0 {
        return 1.0;
    }
    let s = sym(&(linv * dx * linv.transpose()));
    let lmin = min_eigenvalue(&s);
    if lmin >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lmin
    }
}

const DENSE_EIG_LIMIT: usize = 48;
const LANCZOS_STEPS: usize = 24;

/// Smallest eigenvalue: exact for small matrices, a Lanczos (Ritz) estimate otherwise.
fn min_eigenvalue(s: &DMatrix<f64>) -> f64 {
    let n = s.nrows();
    if n <= DENSE_EIG_LIMIT {
        return s.symmetric_eigenvalues().min();
    }
    let k = LANCZOS_STEPS.min(n);
    let mut q: Vec<DVector<f64>> = Vec::with_capacity(k);
    let mut v = DVector::from_fn(n, |i, _| 1.0 + (i as f64 * 0.618_033_988_75).fract());
    v /= v.norm();
    let mut alpha = Vec::with_capacity(k);
    let mut beta: Vec<f64> = Vec::with_capacity(k);
    let scale = s.amax().max(f64::MIN_POSITIVE);
    for _ in 0..k {
        let mut w = s * &v;
        let a = v.dot(&w);
        alpha.push(a);
        q.push(v.clone());
        for _ in 0..2 {
            for qi in &q {
                let c = qi.dot(&w);
                w.axpy(-c, qi, 1.0);
            }
        }
        let b = w.norm();
        if b <= 1e-12 * scale {
            break;
        }
        beta.push(b);
        v = w / b;
    }
    let m = alpha.len();
    let t = DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            alpha[i]
        } else if i + 1 == j {
            beta[i]
        } else if j + 1 == i {
            beta[j]
        } else {
            0.0
        }
    });
    t.symmetric_eigenvalues().min()
}

/// Shrink `alpha` until `X + alpha dX` admits a Cholesky factorization.
fn safeguard_step(x: &DMatrix<f64>, dx: &DMatrix<f64>, mut alpha: f64) -> f64 {
    if x.nrows() <= DENSE_EIG_LIMIT {
        return alpha;
    }
    for _ in 0..30 {
        if Cholesky::new(x + dx * alpha).is_some() {
            return alpha;
        }
        alpha *= 0.8;
    }
    0.0
}

fn max_step_vec(x: &DVector<f64>, dx: &DVector<f64>) -> f64 {
    let mut a = f64::INFINITY;
    for (xi, di) in x.iter().zip(dx.iter()) {
        if *di < 0.0 {
            a = a.min(-xi / di);
        }
    }
    a
}

fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

struct Directions {
    dy: DVector<f64>,
    dx: DMatrix<f64>,
    dxl: DVector<f64>,
    dz: DMatrix<f64>,
    dzl: DVector<f64>,
}

#[allow(clippy::too_many_arguments)]
fn directions(
    pr: &Prepared,
    schur: &Cholesky<f64, nalgebra::Dyn>,
    x: &DMatrix<f64>,
    xl: &DVector<f64>,
    zi: &DMatrix<f64>,
    zl: &DVector<f64>,
    rp: &DVector<f64>,
    rd: &DMatrix<f64>,
    rdl: &DVector<f64>,
    rc: &DMatrix<f64>,
    rcl: &DVector<f64>,
) -> Directions {
    let rc_zi = rc * zi;
    let x_rd_zi = x * rd * zi;
    let mut rhs = rp - pr.apply(&rc_zi) + pr.apply(&x_rd_zi);
    if pr.p > 0 {
        let t = DVector::from_fn(pr.p, |k, _| (-rcl[k] + xl[k] * rdl[k]) / zl[k]);
        rhs += &pr.e * t;
    }
    let dy = schur.solve(&rhs);
    let dz = rd - pr.adjoint(&dy);
    let dzl = if pr.p > 0 { rdl - pr.e.transpose() * &dy } else { DVector::zeros(0) };
    let dx = sym(&((rc - x * &dz) * zi));
    let dxl = DVector::from_fn(pr.p, |k, _| (rcl[k] - xl[k] * dzl[k]) / zl[k]);
    Directions { dy, dx, dxl, dz, dzl }
}

pub fn solve_real(prob: &RealSdp, settings: &IpmSettings) -> RealSolution {
    let empty = |status| RealSolution {
        x_mat: DMatrix::zeros(prob.n, prob.n),
        x_lin: DVector::zeros(prob.p),
        y: DVector::zeros(prob.rows.len()),
        z_mat: DMatrix::zeros(prob.n, prob.n),
        z_lin: DVector::zeros(prob.p),
        status,
        primal_infeasibility: f64::INFINITY,
        dual_infeasibility: f64::INFINITY,
        gap: f64::INFINITY,
        primal_objective: f64::NAN,
        dual_objective: f64::NAN,
        iterations: 0,
    };
    let bad_index = prob.rows.iter().any(|r| {
        r.a.as_ref().and_then(|t| t.max_index()).is_some_and(|k| k >= prob.n) || r.e.iter().any(|&(k, _)| k >= prob.p)
    }) || prob.c_lin.len() != prob.p
        || prob.c_mat.as_ref().and_then(|t| t.max_index()).is_some_and(|k| k >= prob.n);
    if bad_index || prob.n + prob.p == 0 {
        return empty(SolveStatus::NumericalError);
    }
    let pr = match prepare(prob) {
        Ok(p) => p,
        Err(s) => return empty(s),
    };
    let n = pr.n;
    let p = pr.p;
    let m = pr.m();
    let nu = (n + p) as f64;

    let b_norm = pr.b.norm();
    let c_norm = (pr.c_mat.norm_squared() + pr.c_lin.norm_squared()).sqrt();
    let sqrt_n = (n.max(1) as f64).sqrt();
    let mut xi = 10f64.max(sqrt_n);
    for i in 0..m {
        let an = pr.a[i].as_ref().map_or(0.0, |t| t.frobenius_sq().sqrt()) + pr.e.row(i).norm();
        xi = xi.max(sqrt_n * (1.0 + pr.b[i].abs()) / (1.0 + an));
    }
    let eta = 10f64.max(sqrt_n).max(c_norm).max(1.0);

    let mut x = DMatrix::identity(n, n) * xi;
    let mut xl = DVector::from_element(p, xi);
    let mut z = DMatrix::identity(n, n) * eta;
    let mut zl = DVector::from_element(p, eta);
    let mut y = DVector::zeros(m);

    let status;
    let mut iters = 0;
    let mut stalls = 0;
    let (mut pinf, mut dinf, mut gap, mut pobj, mut dobj);
    loop {
        let ax = pr.apply(&x) + &pr.e * &xl;
        let rp = &pr.b - &ax;
        let aty = pr.adjoint(&y);
        let rd = &pr.c_mat - &aty - &z;
        let rdl = if p > 0 { &pr.c_lin - pr.e.transpose() * &y - &zl } else { DVector::zeros(0) };
        let compl = x.dot(&z) + xl.dot(&zl);
        pobj = pr.c_mat.dot(&x) + pr.c_lin.dot(&xl);
        dobj = pr.b.dot(&y);
        pinf = rp.norm() / (1.0 + b_norm);
        dinf = (rd.norm_squared() + rdl.norm_squared()).sqrt() / (1.0 + c_norm);
        gap = (pobj - dobj).abs().max(compl.abs()) / (1.0 + pobj.abs() + dobj.abs());
        if !(pinf.is_finite() && dinf.is_finite() && gap.is_finite()) {
            status = SolveStatus::NumericalError;
            break;
        }
        if pinf <= settings.tol && dinf <= settings.tol && gap <= settings.tol {
            status = SolveStatus::Optimal;
            break;
        }
        // Farkas-type certificates along the diverging iterates
        if dobj > 0.0 {
            let cert = ((&aty + &z).norm_squared()
                + if p > 0 { (pr.e.transpose() * &y + &zl).norm_squared() } else { 0.0 })
            .sqrt();
            if cert <= 1e-8 * dobj && dobj > 1e6 {
                status = SolveStatus::Infeasible;
                break;
            }
        }
        let cx = pobj;
        if cx < 0.0 {
            let hom = (ax.norm_squared()).sqrt();
            if hom <= 1e-8 * -cx && -cx > 1e6 {
                status = SolveStatus::Unbounded;
                break;
            }
        }
        if iters >= settings.max_iters {
            status = SolveStatus::MaxIters;
            break;
        }
        iters += 1;

        let (lx, lz) = match (chol_inverse_factor(&x), chol_inverse_factor(&z)) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                status = SolveStatus::NumericalError;
                break;
            }
        };
        let zi = lz.transpose() * &lz;
        let d = DVector::from_fn(p, |k, _| xl[k] / zl[k]);
        let mut mm = pr.schur(&x, &zi, &d);
        let schur = match Cholesky::new(mm.clone()) {
            Some(c) => c,
            None => {
                let reg = 1e-14 * mm.diagonal().amax().max(1e-300);
                for i in 0..m {
                    mm[(i, i)] += reg;
                }
                match Cholesky::new(mm) {
                    Some(c) => c,
                    None => {
                        status = SolveStatus::NumericalError;
                        break;
                    }
                }
            }
        };
        let mu = compl / nu;

        // predictor
        let xz = &x * &z;
        let rc = -&xz;
        let rcl = DVector::from_fn(p, |k, _| -xl[k] * zl[k]);
        let aff = directions(&pr, &schur, &x, &xl, &zi, &zl, &rp, &rd, &rdl, &rc, &rcl);
        let ap = max_step_mat(&lx, &aff.dx).min(max_step_vec(&xl, &aff.dxl)).min(1.0);
        let ad = max_step_mat(&lz, &aff.dz).min(max_step_vec(&zl, &aff.dzl)).min(1.0);
        let mu_aff = ((&x + &aff.dx * ap).dot(&(&z + &aff.dz * ad)) + (&xl + &aff.dxl * ap).dot(&(&zl + &aff.dzl * ad))) / nu;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        // corrector
        let mut rc = DMatrix::identity(n, n) * (sigma * mu) - &xz - &aff.dx * &aff.dz;
        rc = rc.map(|v| if v.is_finite() { v } else { 0.0 });
        let rcl = DVector::from_fn(p, |k, _| sigma * mu - xl[k] * zl[k] - aff.dxl[k] * aff.dzl[k]);
        let dir = directions(&pr, &schur, &x, &xl, &zi, &zl, &rp, &rd, &rdl, &rc, &rcl);
        let gamma = 0.9 + 0.09 * ap.min(ad);
        let ap = (gamma * max_step_mat(&lx, &dir.dx).min(max_step_vec(&xl, &dir.dxl))).min(1.0);
        let ad = (gamma * max_step_mat(&lz, &dir.dz).min(max_step_vec(&zl, &dir.dzl))).min(1.0);
        let ap = safeguard_step(&x, &dir.dx, ap);
        let ad = safeguard_step(&z, &dir.dz, ad);
        if !(ap.is_finite() && ad.is_finite()) {
            status = SolveStatus::NumericalError;
            break;
        }
        if ap < 1e-10 && ad < 1e-10 {
            stalls += 1;
            if stalls >= 3 {
                status = SolveStatus::NumericalError;
                break;
            }
        } else {
            stalls = 0;
        }
        x = sym(&(&x + &dir.dx * ap));
        xl += &dir.dxl * ap;
        z = sym(&(&z + &dir.dz * ad));
        zl += &dir.dzl * ad;
        y += &dir.dy * ad;
    }

    let bs = pr.b_scale;
    let os = pr.obj_scale;
    let mut y_full = DVector::zeros(prob.rows.len());
    for (k, &i) in pr.kept.iter().enumerate() {
        y_full[i] = y[k] * pr.row_scale[k] / os;
    }
    RealSolution {
        x_mat: x * bs,
        x_lin: xl * bs,
        y: y_full,
        z_mat: z / os,
        z_lin: zl / os,
        status,
        primal_infeasibility: pinf,
        dual_infeasibility: dinf,
        gap,
        primal_objective: pobj * bs / os,
        dual_objective: dobj * bs / os,
        iterations: iters,
    }
}
