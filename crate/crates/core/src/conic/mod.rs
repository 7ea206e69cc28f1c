//! Small dense semidefinite programs over Hermitian matrices.
//!
//! A complex problem
//!
//! ```text
//! maximize  Tr(C X) + sum_k c_k t_k
//! s.t.      Tr(A_j X) + sum_k a_jk t_k  (<=, >=, =)  b_j
//!           X_ii = d_i (optional),  X >= 0,  0 <= t_k <= u_k
//! ```
//!
//! is mapped to the real symmetric embedding `[[Re, -Im], [Im, Re]]` of size
//! `2n` (so `Tr(C X) = Tr(emb C emb X) / 2`) and solved by [`real::solve_real`].

pub mod real;
pub mod sdpa;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub use real::{IpmSettings, RealRow, RealSdp, RealSolution, SolveStatus, SymTerm};

/// Hermitian coefficient matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum HermTerm {
    Dense(DMatrix<Complex64>),
    /// `sum_k w_k g_k g_k^H`.
    LowRank(Vec<(f64, DVector<Complex64>)>),
    /// `sum_k v_k e_{i_k} e_{i_k}^T`.
    Diagonal(Vec<(usize, f64)>),
}

impl HermTerm {
    pub fn rank_one(weight: f64, g: DVector<Complex64>) -> Self {
        HermTerm::LowRank(vec![(weight, g)])
    }

    /// `Tr(A X)` (real for Hermitian `X`).
    pub fn inner(&self, x: &DMatrix<Complex64>) -> f64 {
        match self {
            HermTerm::Dense(a) => (a * x).trace().re,
            HermTerm::LowRank(f) => f.iter().map(|(w, g)| w * g.dotc(&(x * g)).re).sum(),
            HermTerm::Diagonal(d) => d.iter().map(|&(i, v)| v * x[(i, i)].re).sum(),
        }
    }

    pub fn to_dense(&self, n: usize) -> DMatrix<Complex64> {
        match self {
            HermTerm::Dense(a) => hermitian_part(a),
            HermTerm::LowRank(f) => {
                let mut m = DMatrix::zeros(n, n);
                for (w, g) in f {
                    m += g * g.adjoint() * Complex64::new(*w, 0.0);
                }
                m
            }
            HermTerm::Diagonal(d) => {
                let mut m = DMatrix::zeros(n, n);
                for &(i, v) in d {
                    m[(i, i)] += Complex64::new(v, 0.0);
                }
                m
            }
        }
    }

    /// Half the real embedding, so that `<embed, emb X> = Tr(A X)`.
    fn embed(&self, n: usize) -> SymTerm {
        match self {
            HermTerm::Dense(a) => SymTerm::Dense(embed_matrix(&hermitian_part(a)) * 0.5),
            HermTerm::LowRank(f) => {
                let mut out = Vec::with_capacity(2 * f.len());
                for (w, g) in f {
                    let (u1, u2) = embed_vector_pair(g);
                    out.push((w / 2.0, u1));
                    out.push((w / 2.0, u2));
                }
                SymTerm::LowRank(out)
            }
            HermTerm::Diagonal(d) => {
                let mut e = Vec::with_capacity(2 * d.len());
                for &(i, v) in d {
                    e.push((i, i, v / 2.0));
                    e.push((i + n, i + n, v / 2.0));
                }
                SymTerm::Sparse(e)
            }
        }
    }

    fn max_index(&self) -> Option<usize> {
        match self {
            HermTerm::Dense(a) => Some(a.nrows().max(a.ncols()).saturating_sub(1)),
            HermTerm::LowRank(f) => f.iter().map(|(_, g)| g.len().saturating_sub(1)).max(),
            HermTerm::Diagonal(d) => d.iter().map(|x| x.0).max(),
        }
    }

    fn dims_ok(&self, n: usize) -> bool {
        match self {
            HermTerm::Dense(a) => a.nrows() == n && a.ncols() == n,
            HermTerm::LowRank(f) => f.iter().all(|(_, g)| g.len() == n),
            HermTerm::Diagonal(_) => self.max_index().is_none_or(|k| k < n),
        }
    }
}

fn hermitian_part(a: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    (a + a.adjoint()) * Complex64::new(0.5, 0.0)
}

/// `[[Re A, -Im A], [Im A, Re A]]`.
pub fn embed_matrix(a: &DMatrix<Complex64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut out = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let z = a[(i, j)];
            out[(i, j)] = z.re;
            out[(i + n, j + n)] = z.re;
            out[(i, j + n)] = -z.im;
            out[(i + n, j)] = z.im;
        }
    }
    out
}

/// Inverse of [`embed_matrix`], averaging the two copies of each block.
pub fn lift(y: &DMatrix<f64>) -> DMatrix<Complex64> {
    let n = y.nrows() / 2;
    DMatrix::from_fn(n, n, |i, j| {
        Complex64::new(
            0.5 * (y[(i, j)] + y[(i + n, j + n)]),
            0.5 * (y[(i + n, j)] - y[(i, j + n)]),
        )
    })
}

/// Factors with `emb(g g^H) = u1 u1^T + u2 u2^T`.
fn embed_vector_pair(g: &DVector<Complex64>) -> (DVector<f64>, DVector<f64>) {
    let n = g.len();
    let mut u1 = DVector::zeros(2 * n);
    let mut u2 = DVector::zeros(2 * n);
    for (i, z) in g.iter().enumerate() {
        u1[i] = z.re;
        u1[i + n] = z.im;
        u2[i] = -z.im;
        u2[i + n] = z.re;
    }
    (u1, u2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub matrix: Option<HermTerm>,
    /// `(scalar index, coefficient)`.
    pub scalars: Vec<(usize, f64)>,
    pub sense: Sense,
    pub bound: f64,
}

/// Auxiliary nonnegative scalar with an optional upper bound.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ScalarVar {
    pub upper: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpProblem {
    pub dim: usize,
    pub objective: Option<HermTerm>,
    pub scalar_objective: Vec<(usize, f64)>,
    pub constraints: Vec<Constraint>,
    pub diag_fixed: Option<Vec<f64>>,
    pub scalars: Vec<ScalarVar>,
}

impl SdpProblem {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            objective: None,
            scalar_objective: Vec::new(),
            constraints: Vec::new(),
            diag_fixed: None,
            scalars: Vec::new(),
        }
    }

    pub fn add_scalar(&mut self, upper: Option<f64>) -> usize {
        self.scalars.push(ScalarVar { upper });
        self.scalars.len() - 1
    }

    pub fn add_constraint(&mut self, matrix: Option<HermTerm>, scalars: Vec<(usize, f64)>, sense: Sense, bound: f64) {
        self.constraints.push(Constraint {
            matrix,
            scalars,
            sense,
            bound,
        });
    }

    fn validate(&self) -> Result<(), String> {
        if self.dim == 0 {
            return Err("matrix dimension must be >= 1".into());
        }
        let n = self.dim;
        let k = self.scalars.len();
        if let Some(o) = &self.objective {
            if !o.dims_ok(n) {
                return Err("objective dimension mismatch".into());
            }
        }
        if self.scalar_objective.iter().any(|&(i, _)| i >= k) {
            return Err("objective references an unknown scalar".into());
        }
        for (j, c) in self.constraints.iter().enumerate() {
            if c.matrix.as_ref().is_some_and(|m| !m.dims_ok(n)) {
                return Err(format!("constraint {j}: dimension mismatch"));
            }
            if c.scalars.iter().any(|&(i, _)| i >= k) {
                return Err(format!("constraint {j}: unknown scalar"));
            }
            if !c.bound.is_finite() {
                return Err(format!("constraint {j}: non-finite bound"));
            }
        }
        if let Some(d) = &self.diag_fixed {
            if d.len() != n {
                return Err("diagonal pin length mismatch".into());
            }
        }
        if self.scalars.iter().any(|s| s.upper.is_some_and(|u| !(u >= 0.0))) {
            return Err("scalar upper bounds must be >= 0".into());
        }
        Ok(())
    }

    /// Real standard form: minimize the negated objective over the `2n` embedding.
    pub fn to_real(&self) -> RealSdp {
        let n = self.dim;
        let k = self.scalars.len();
        let n_ineq = self.constraints.iter().filter(|c| c.sense != Sense::Eq).count();
        let n_ub = self.scalars.iter().filter(|s| s.upper.is_some()).count();
        let p = k + n_ineq + n_ub;
        let mut c_lin = DVector::zeros(p);
        for &(i, v) in &self.scalar_objective {
            c_lin[i] -= v;
        }
        let c_mat = self.objective.as_ref().map(|o| {
            let mut t = o.embed(n);
            t.scale(-1.0);
            t
        });
        let mut rows = Vec::new();
        let mut slack = k;
        for c in &self.constraints {
            let mut e = c.scalars.clone();
            match c.sense {
                Sense::Le => {
                    e.push((slack, 1.0));
                    slack += 1;
                }
                Sense::Ge => {
                    e.push((slack, -1.0));
                    slack += 1;
                }
                Sense::Eq => {}
            }
            rows.push(RealRow {
                a: c.matrix.as_ref().map(|m| m.embed(n)),
                e,
                b: c.bound,
            });
        }
        for (i, s) in self.scalars.iter().enumerate() {
            if let Some(u) = s.upper {
                rows.push(RealRow {
                    a: None,
                    e: vec![(i, 1.0), (slack, 1.0)],
                    b: u,
                });
                slack += 1;
            }
        }
        if let Some(d) = &self.diag_fixed {
            for (i, &v) in d.iter().enumerate() {
                rows.push(RealRow {
                    a: Some(SymTerm::Sparse(vec![(i, i, 0.5), (i + n, i + n, 0.5)])),
                    e: Vec::new(),
                    b: v,
                });
            }
        }
        RealSdp {
            n: 2 * n,
            p,
            c_mat,
            c_lin,
            rows,
        }
    }

    /// Objective value `Tr(C X) + c^T t`.
    pub fn objective_value(&self, x: &DMatrix<Complex64>, t: &[f64]) -> f64 {
        self.objective.as_ref().map_or(0.0, |o| o.inner(x))
            + self.scalar_objective.iter().map(|&(i, v)| v * t[i]).sum::<f64>()
    }

    /// Recompute feasibility of `(X, t)` from the problem data alone.
    pub fn residuals(&self, x: &DMatrix<Complex64>, t: &[f64]) -> Residuals {
        let mut worst = 0.0f64;
        for c in &self.constraints {
            let lhs = c.matrix.as_ref().map_or(0.0, |m| m.inner(x)) + c.scalars.iter().map(|&(i, v)| v * t[i]).sum::<f64>();
            let viol = match c.sense {
                Sense::Le => (lhs - c.bound).max(0.0),
                Sense::Ge => (c.bound - lhs).max(0.0),
                Sense::Eq => (lhs - c.bound).abs(),
            };
            worst = worst.max(viol / (1.0 + c.bound.abs()));
        }
        if let Some(d) = &self.diag_fixed {
            for (i, &v) in d.iter().enumerate() {
                worst = worst.max((x[(i, i)].re - v).abs() / (1.0 + v.abs()));
            }
        }
        for (i, s) in self.scalars.iter().enumerate() {
            worst = worst.max((-t[i]).max(0.0));
            if let Some(u) = s.upper {
                worst = worst.max((t[i] - u).max(0.0) / (1.0 + u.abs()));
            }
        }
        let herm = (x - x.adjoint()).norm() / (1.0 + x.norm());
        let h = hermitian_part(x);
        let trace = h.trace().re.abs();
        let min_eig = SymmetricEigen::new(h).eigenvalues.min();
        Residuals {
            max_constraint_violation: worst,
            hermitian_error: herm,
            min_eigenvalue: min_eig,
            psd_violation: (-min_eig).max(0.0) / (1.0 + trace),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// Largest violation relative to `1 + |bound|`.
    pub max_constraint_violation: f64,
    pub hermitian_error: f64,
    pub min_eigenvalue: f64,
    /// Negative part of the smallest eigenvalue relative to `1 + Tr X`.
    pub psd_violation: f64,
}

impl Residuals {
    pub fn worst(&self) -> f64 {
        self.max_constraint_violation
            .max(self.hermitian_error)
            .max(self.psd_violation)
    }
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub x: DMatrix<Complex64>,
    pub scalars: Vec<f64>,
    pub status: SolveStatus,
    pub objective: f64,
    pub dual_objective: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub gap: f64,
    pub iterations: usize,
}

pub fn solve(p: &SdpProblem, settings: &IpmSettings) -> SdpSolution {
    if p.validate().is_err() {
        return SdpSolution {
            x: DMatrix::zeros(p.dim, p.dim),
            scalars: vec![0.0; p.scalars.len()],
            status: SolveStatus::NumericalError,
            objective: f64::NAN,
            dual_objective: f64::NAN,
            primal_infeasibility: f64::INFINITY,
            dual_infeasibility: f64::INFINITY,
            gap: f64::INFINITY,
            iterations: 0,
        };
    }
    let real = p.to_real();
    let sol = solve_real(&real, settings);
    let x = lift(&sol.x_mat);
    let scalars: Vec<f64> = sol.x_lin.iter().take(p.scalars.len()).copied().collect();
    SdpSolution {
        objective: p.objective_value(&x, &scalars),
        x,
        scalars,
        status: sol.status,
        dual_objective: -sol.dual_objective,
        primal_infeasibility: sol.primal_infeasibility,
        dual_infeasibility: sol.dual_infeasibility,
        gap: sol.gap,
        iterations: sol.iterations,
    }
}

pub use real::solve_real;

/// Principal eigenpair of a Hermitian PSD matrix.
#[derive(Debug, Clone)]
pub struct RankOne {
    pub u1: DVector<Complex64>,
    pub sigma1: f64,
    /// `u1 sqrt(sigma1)`.
    pub v: DVector<Complex64>,
    /// `1 - sigma1 / Tr X`; 1 for the zero matrix.
    pub gap: f64,
    pub degenerate: bool,
}

fn top_eigen(x: &DMatrix<Complex64>) -> (f64, DVector<Complex64>, f64) {
    let h = hermitian_part(x);
    let trace = h.trace().re;
    let eig = SymmetricEigen::new(h);
    let (idx, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    let mut u = eig.eigenvectors.column(idx).into_owned();
    // deterministic global phase: largest-magnitude entry real positive
    if let Some((_, z)) = u
        .iter()
        .enumerate()
        .fold(None::<(usize, Complex64)>, |acc, (i, z)| match acc {
            Some((_, b)) if b.norm() >= z.norm() => acc,
            _ => Some((i, *z)),
        })
    {
        if z.norm() > 0.0 {
            let rot = z.conj() / z.norm();
            u *= rot;
        }
    }
    (eig.eigenvalues[idx], u, trace)
}

pub fn extract_rank_one(x: &DMatrix<Complex64>) -> RankOne {
    let n = x.nrows();
    if n == 0 || x.iter().all(|z| *z == Complex64::new(0.0, 0.0)) {
        return RankOne {
            u1: DVector::zeros(n),
            sigma1: 0.0,
            v: DVector::zeros(n),
            gap: 1.0,
            degenerate: true,
        };
    }
    let (sigma1, u1, trace) = top_eigen(x);
    let sigma1 = sigma1.max(0.0);
    let gap = if trace > 0.0 { (1.0 - sigma1 / trace).max(0.0) } else { 1.0 };
    RankOne {
        v: &u1 * Complex64::new(sigma1.sqrt(), 0.0),
        u1,
        sigma1,
        gap,
        degenerate: !(trace > 0.0),
    }
}

/// `exp(j angle(z1))` of the principal eigenvector; zero entries map to phase 0.
pub fn extract_unit_modulus(x: &DMatrix<Complex64>) -> DVector<Complex64> {
    let n = x.nrows();
    if n == 0 {
        return DVector::zeros(0);
    }
    let (_, u, _) = top_eigen(x);
    u.map(|z| {
        if z.norm() == 0.0 {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::from_polar(1.0, z.arg())
        }
    })
}
