//! Alternating design of the transmit beamformer `v`, the block combiner `W`
//! and the reflection phases `phi`.
//!
//! Sensing enters through auxiliary variables `t_{q,i} <= gamma_s^-2` with
//!
//! ```text
//! || W^H dH_R/dzeta_{q,i} v ||^2 >= t_{q,i} sigma2 / (2 rho^2 T)
//! ```
//!
//! and the design objective is `|h_DL v|^2 + sum t`. Inside the SDPs the
//! variables are normalized: `V = P_max V'` and `tau = t / gamma_s^-2`.

use std::fmt::Write as _;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, Matrix2};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelModel, ChannelSet, PointResponse};
use crate::conic::{self, HermTerm, IpmSettings, Sense, SdpProblem, SdpSolution, SolveStatus};
use crate::error::{Error, Result};
use crate::geometry::SphericalCoord;
use crate::sensing::{combined_derivatives, derivative_products, peb, Fim3, SensingParams};
use crate::signal::{
    cascade_terms, combine, complex_gaussian, effective_dl_channel, matched_filter, row_times, HrisDesign, PhaseBox,
};

/// How the fixed combiner blocks enter an `OP_X_l` constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CombinerConstraint {
    /// Other blocks contribute a constant to every left-hand side.
    #[default]
    WithFixedBlocks,
    /// Only the block being designed.
    BlockOnly,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub p_max: f64,
    pub gamma_s: f64,
    pub sensing: SensingParams,
    pub phase_box: PhaseBox,
    pub combiner_constraint: CombinerConstraint,
    pub max_iters: usize,
    pub tol: f64,
    /// Relative slack on `sum tau` when maximizing the rate over the optimal face.
    pub face_slack: f64,
    pub phi_max_sweeps: usize,
    pub phi_tol: f64,
    pub restarts: usize,
    pub restart_seed: u64,
    pub ipm: IpmSettings,
}

impl OptimizerConfig {
    pub fn new(p_max: f64, gamma_s: f64, sensing: SensingParams) -> Self {
        Self {
            p_max,
            gamma_s,
            sensing,
            phase_box: PhaseBox::Half,
            combiner_constraint: CombinerConstraint::WithFixedBlocks,
            max_iters: 30,
            tol: 1e-4,
            face_slack: 1e-5,
            phi_max_sweeps: 50,
            phi_tol: 1e-8,
            restarts: 0,
            restart_seed: 0,
            ipm: IpmSettings::default(),
        }
    }

    /// `gamma_s^-2`, zero when the threshold is infinite.
    pub fn t_upper(&self) -> f64 {
        if self.gamma_s.is_finite() {
            1.0 / (self.gamma_s * self.gamma_s)
        } else {
            0.0
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.p_max.is_finite() && self.p_max > 0.0) {
            return Err(Error::InvalidConfig(format!("P_max must be positive, got {}", self.p_max)));
        }
        if !(self.gamma_s > 0.0) {
            return Err(Error::InvalidConfig(format!("gamma_s must be positive, got {}", self.gamma_s)));
        }
        let s = &self.sensing;
        if !(s.rho > 0.0 && s.rho <= 1.0) {
            return Err(Error::InvalidConfig(format!("rho must lie in (0, 1], got {}", s.rho)));
        }
        if !(s.sigma2 > 0.0) || s.snapshots == 0 {
            return Err(Error::InvalidConfig("noise power and snapshot count must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be >= 1".into()));
        }
        Ok(())
    }
}

/// Channels as known to the designer plus the precomputed constraint points.
#[derive(Debug, Clone)]
pub struct DesignContext {
    pub h_bu: DVector<Complex64>,
    pub h_ru: DVector<Complex64>,
    pub h_br: DMatrix<Complex64>,
    pub points: Vec<SphericalCoord>,
    pub responses: Vec<PointResponse>,
    pub m_rf: usize,
    pub m_e: usize,
    pub cfg: OptimizerConfig,
}

impl DesignContext {
    pub fn new(
        model: &ChannelModel,
        channels: &ChannelSet,
        points: &[SphericalCoord],
        cfg: OptimizerConfig,
    ) -> Result<Self> {
        Self::with_estimates(model, channels.h_bu.clone(), channels.h_ru.clone(), channels.h_br.clone(), points, cfg)
    }

    pub fn with_estimates(
        model: &ChannelModel,
        h_bu: DVector<Complex64>,
        h_ru: DVector<Complex64>,
        h_br: DMatrix<Complex64>,
        points: &[SphericalCoord],
        cfg: OptimizerConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let responses = crate::par::map(points, |p| model.point_response(p))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let (m_e, m_rf) = (model.hris.rows, model.hris.cols);
        if h_bu.len() != model.n_tx() || h_ru.len() != model.n_rx() || h_br.shape() != (model.n_rx(), model.n_tx()) {
            return Err(Error::ShapeMismatch("channel estimates do not match the array sizes".into()));
        }
        Ok(Self {
            h_bu,
            h_ru,
            h_br,
            points: points.to_vec(),
            responses,
            m_rf,
            m_e,
            cfg,
        })
    }

    fn n_tx(&self) -> usize {
        self.h_bu.len()
    }

    fn sensing_active(&self) -> bool {
        !self.responses.is_empty() && self.cfg.t_upper() > 0.0
    }

    pub fn dl_channel(&self, phi: &DVector<f64>) -> Result<DVector<Complex64>> {
        effective_dl_channel(&self.h_bu, &self.h_ru, phi, &self.h_br, self.cfg.sensing.rho)
    }

    /// Constraint-point FIMs for a unit-amplitude probe.
    pub fn fims(&self, design: &HrisDesign) -> Vec<Fim3> {
        let scale = self.cfg.sensing.fim_scale();
        self.responses
            .iter()
            .map(|r| {
                let d = combined_derivatives(r, design, Complex64::new(1.0, 0.0));
                let mut m = nalgebra::Matrix3::zeros();
                for i in 0..3 {
                    for j in 0..3 {
                        m[(i, j)] = scale * d[i].dotc(&d[j]).re;
                    }
                }
                Fim3(m)
            })
            .collect()
    }

    /// Evaluate a design: `t_{q,i} = min(gamma_s^-2, I_ii)` and the rate terms.
    pub fn evaluate(&self, design: &HrisDesign) -> Result<DesignMetrics> {
        let h = self.dl_channel(&design.phi)?;
        let gain = row_times(&h, &design.v).norm_sqr();
        let u = self.cfg.t_upper();
        let fims = self.fims(design);
        let mut sum_t = 0.0;
        let mut margin = f64::INFINITY;
        let mut met = 0;
        for f in &fims {
            if u > 0.0 {
                sum_t += (0..3).map(|i| f.0[(i, i)].min(u)).sum::<f64>();
            }
            let p = peb(f);
            if p.meets(self.cfg.gamma_s) {
                met += 1;
            }
            let m = p.value().map_or(f64::NEG_INFINITY, |x| self.cfg.gamma_s - x);
            margin = margin.min(m);
        }
        Ok(DesignMetrics {
            rate: (1.0 + gain / self.cfg.sensing.sigma2).log2(),
            gain,
            sum_t,
            min_peb_margin: margin,
            points_met: met,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignMetrics {
    pub rate: f64,
    /// `|h_DL v|^2`.
    pub gain: f64,
    pub sum_t: f64,
    /// `min_q (gamma_s - PEB_q)`; `inf` without constraint points.
    pub min_peb_margin: f64,
    pub points_met: usize,
}

impl DesignMetrics {
    /// `|h_DL v|^2 + sum t`.
    pub fn composite(&self) -> f64 {
        self.gain + self.sum_t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct SubproblemReport {
    pub status: Option<SolveStatus>,
    pub iterations: usize,
    /// Worst independent residual over the solved SDPs.
    pub residual: f64,
    pub rank_one_gap: f64,
    pub relaxations: usize,
    /// Relaxation value of the sensing stage (normalized `sum tau`).
    pub sdp_value: f64,
    /// The same objective at the extracted rank-one point.
    pub candidate_value: f64,
    pub dominance_ok: bool,
    pub accepted: bool,
    pub skipped: bool,
}

#[derive(Debug, Clone)]
pub struct OpVOutput {
    pub v: DVector<Complex64>,
    /// Physical `t_{q,i}` of the relaxation.
    pub t: Vec<[f64; 3]>,
    pub report: SubproblemReport,
}

#[derive(Debug, Clone)]
pub struct OpXlOutput {
    pub w: DVector<Complex64>,
    pub t: Vec<[f64; 3]>,
    pub report: SubproblemReport,
}

const RELAX_LIMIT: usize = 3;
const DOMINANCE_TOL: f64 = 1e-6;

fn unit() -> Complex64 {
    Complex64::new(1.0, 0.0)
}

fn add_sensing_scalars(p: &mut SdpProblem, count: usize, upper: f64) -> Vec<usize> {
    (0..count).map(|_| p.add_scalar(Some(upper))).collect()
}

/// Solve, widening the scalar bounds tenfold while the problem is reported infeasible.
fn solve_with_relaxation(p: &mut SdpProblem, settings: &IpmSettings, report: &mut SubproblemReport) -> SdpSolution {
    let mut sol = conic::solve(p, settings);
    while sol.status == SolveStatus::Infeasible && report.relaxations < RELAX_LIMIT && !p.scalars.is_empty() {
        for s in &mut p.scalars {
            s.upper = s.upper.map(|u| u * 10.0);
        }
        report.relaxations += 1;
        sol = conic::solve(p, settings);
    }
    report.iterations += sol.iterations;
    report.status = Some(sol.status);
    if sol.status == SolveStatus::Optimal {
        report.residual = report.residual.max(p.residuals(&sol.x, &sol.scalars).worst());
    }
    sol
}

fn usable(status: SolveStatus) -> bool {
    matches!(status, SolveStatus::Optimal | SolveStatus::MaxIters)
}

/// `B K B^H` with `B = [a_tx, d_tx]`, `K` the Gram matrix of `[W^H d_rx, W^H a_rx]`, as two rank-one factors.
fn op_v_term(resp: &PointResponse, dim: usize, w_blocks: &[DVector<Complex64>], scale: f64) -> HermTerm {
    let p = combine(w_blocks, &resp.d_rx[dim]);
    let s = combine(w_blocks, &resp.a_rx);
    let k = Matrix2::new(p.dotc(&p), p.dotc(&s), s.dotc(&p), s.dotc(&s));
    let eig = k.symmetric_eigen();
    let mut factors = Vec::with_capacity(2);
    for j in 0..2 {
        let lam = eig.eigenvalues[j];
        if lam > 0.0 {
            let e = eig.eigenvectors.column(j);
            let g = &resp.a_tx * e[0] + &resp.d_tx[dim] * e[1];
            factors.push((lam * scale, g));
        }
    }
    if factors.is_empty() {
        factors.push((0.0, DVector::zeros(resp.a_tx.len())));
    }
    HermTerm::LowRank(factors)
}

/// Beamformer stage. Maximizes the normalized sensing sum, then the rate over
/// the (slightly relaxed) optimal face; the better of the two extracted beams
/// by the design objective is returned, scaled to full power.
pub fn solve_op_v(ctx: &DesignContext, design: &HrisDesign) -> Result<OpVOutput> {
    let cfg = &ctx.cfg;
    let n = ctx.n_tx();
    let p_max = cfg.p_max;
    let u = cfg.t_upper();
    let kappa = cfg.sensing.kappa();
    let h = ctx.dl_channel(&design.phi)?;
    let h_norm2 = h.norm_squared();
    let mut report = SubproblemReport::default();

    let base = |terms: &[HermTerm]| {
        let mut p = SdpProblem::new(n);
        p.add_constraint(
            Some(HermTerm::Diagonal((0..n).map(|i| (i, 1.0)).collect())),
            vec![],
            Sense::Le,
            1.0,
        );
        let taus = add_sensing_scalars(&mut p, terms.len(), 1.0);
        for (term, &tau) in terms.iter().zip(&taus) {
            p.add_constraint(Some(term.clone()), vec![(tau, -1.0)], Sense::Ge, 0.0);
        }
        (p, taus)
    };

    let terms: Vec<HermTerm> = if ctx.sensing_active() {
        let scale = p_max / (kappa * u);
        ctx.responses
            .iter()
            .flat_map(|r| (0..3).map(move |i| (r, i)))
            .map(|(r, i)| op_v_term(r, i, &design.w_blocks, scale))
            .collect()
    } else {
        Vec::new()
    };

    let mut candidates: Vec<DVector<Complex64>> = Vec::new();
    let mut t_out = vec![[0.0; 3]; ctx.responses.len()];
    let mut face_value = None;

    if !terms.is_empty() {
        let (mut p, taus) = base(&terms);
        p.scalar_objective = taus.iter().map(|&t| (t, 1.0)).collect();
        let sol = solve_with_relaxation(&mut p, &cfg.ipm, &mut report);
        if !usable(sol.status) {
            return Err(Error::Solver(format!("beamformer sensing stage: {:?}", sol.status)));
        }
        let value: f64 = taus.iter().map(|&t| sol.scalars[t]).sum();
        for (q, row) in t_out.iter_mut().enumerate() {
            for i in 0..3 {
                row[i] = sol.scalars[taus[3 * q + i]] * u;
            }
        }
        let r1 = conic::extract_rank_one(&sol.x);
        report.rank_one_gap = r1.gap;
        let cand = full_power(&r1.u1, p_max);
        let v_norm = &cand / Complex64::new(p_max.sqrt(), 0.0);
        let cand_value: f64 = terms.iter().map(|t| t.inner(&(&v_norm * v_norm.adjoint())).min(1.0)).sum();
        report.sdp_value = value;
        report.candidate_value = cand_value;
        report.dominance_ok = cand_value <= value * (1.0 + 1e-6) + DOMINANCE_TOL;
        candidates.push(cand);
        face_value = Some(value);
    } else {
        report.dominance_ok = true;
    }

    if h_norm2 > 0.0 {
        let (mut p, taus) = base(&terms);
        p.objective = Some(HermTerm::rank_one(1.0 / h_norm2, h.map(|z| z.conj())));
        let mut slack = cfg.face_slack;
        let mut solved = None;
        for _ in 0..=RELAX_LIMIT {
            let mut q = p.clone();
            if let Some(v) = face_value {
                q.add_constraint(None, taus.iter().map(|&t| (t, 1.0)).collect(), Sense::Ge, v * (1.0 - slack));
            }
            let mut sub = SubproblemReport::default();
            let sol = solve_with_relaxation(&mut q, &cfg.ipm, &mut sub);
            report.iterations += sub.iterations;
            if usable(sol.status) {
                report.residual = report.residual.max(sub.residual);
                solved = Some(sol);
                break;
            }
            slack *= 10.0;
        }
        if let Some(sol) = solved {
            let r1 = conic::extract_rank_one(&sol.x);
            if face_value.is_none() {
                report.rank_one_gap = r1.gap;
                report.status = Some(sol.status);
            }
            candidates.push(full_power(&r1.u1, p_max));
        } else if face_value.is_none() {
            return Err(Error::Solver("beamformer rate stage failed".into()));
        }
    }

    if candidates.is_empty() {
        candidates.push(full_power(&DVector::from_element(n, unit()), p_max));
    }
    let mut best: Option<(f64, DVector<Complex64>)> = None;
    for v in candidates {
        let trial = HrisDesign { v: v.clone(), ..design.clone() };
        let val = ctx.evaluate(&trial)?.composite();
        if best.as_ref().is_none_or(|(b, _)| val > *b) {
            best = Some((val, v));
        }
    }
    let (_, v) = best.expect("at least one candidate");
    report.accepted = true;
    Ok(OpVOutput { v, t: t_out, report })
}

fn full_power(u: &DVector<Complex64>, p_max: f64) -> DVector<Complex64> {
    let n = u.norm();
    if n == 0.0 {
        let mut v = DVector::zeros(u.len());
        if !v.is_empty() {
            v[0] = Complex64::new(p_max.sqrt(), 0.0);
        }
        return v;
    }
    u * Complex64::new(p_max.sqrt() / n, 0.0)
}

/// `dH_R/dzeta_{q,i} v` for every constraint point and dimension.
fn derivative_vectors(ctx: &DesignContext, v: &DVector<Complex64>) -> Vec<DVector<Complex64>> {
    ctx.responses
        .iter()
        .flat_map(|r| derivative_products(r, v, unit()))
        .collect()
}

/// Combiner stage for RF chain `l`.
pub fn solve_op_xl(ctx: &DesignContext, design: &HrisDesign, l: usize) -> Result<OpXlOutput> {
    let cfg = &ctx.cfg;
    let m_e = ctx.m_e;
    if l >= design.m_rf() {
        return Err(Error::IndexOutOfRange {
            row: 0,
            col: l,
            rows: m_e,
            cols: design.m_rf(),
        });
    }
    let mut report = SubproblemReport {
        dominance_ok: true,
        ..Default::default()
    };
    let current = design.w_blocks[l].clone();
    if !ctx.sensing_active() {
        report.skipped = true;
        report.accepted = true;
        return Ok(OpXlOutput {
            w: current,
            t: vec![[0.0; 3]; ctx.responses.len()],
            report,
        });
    }
    let u = cfg.t_upper();
    let norm = 1.0 / (cfg.sensing.kappa() * u);
    let ys = derivative_vectors(ctx, &design.v);
    let mut own = Vec::with_capacity(ys.len());
    let mut others = Vec::with_capacity(ys.len());
    for y in &ys {
        let yl = y.rows(l * m_e, m_e).into_owned();
        let c: f64 = match cfg.combiner_constraint {
            CombinerConstraint::WithFixedBlocks => design
                .w_blocks
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != l)
                .map(|(j, w)| w.dotc(&y.rows(j * m_e, m_e)).norm_sqr())
                .sum(),
            CombinerConstraint::BlockOnly => 0.0,
        };
        own.push(yl);
        others.push(c * norm);
    }
    // already saturated: the stage optimum sum tau = 3Q is attained by the current block
    let saturated = own
        .iter()
        .zip(&others)
        .all(|(y, c)| current.dotc(y).norm_sqr() * norm + c >= 1.0);
    if saturated {
        report.skipped = true;
        report.accepted = true;
        report.sdp_value = own.len() as f64;
        report.candidate_value = own.len() as f64;
        return Ok(OpXlOutput {
            w: current,
            t: vec![[u; 3]; ctx.responses.len()],
            report,
        });
    }

    let (w, taus) = combiner_sdp(&own, &others, norm, &cfg.ipm, &mut report)
        .map_err(|status| Error::Solver(format!("combiner stage {l}: {status:?}")))?;
    let t = (0..ctx.responses.len())
        .map(|q| std::array::from_fn(|i| taus[3 * q + i] * u))
        .collect();
    Ok(OpXlOutput { w, t, report })
}

/// `max sum tau  s.t.  norm |w^H y_k|^2 + c_k >= tau_k, tau_k <= 1` relaxed to
/// `X = w w^H` with unit diagonal. Returns the unit-modulus extraction and the
/// relaxation's `tau`.
pub fn combiner_sdp(
    own: &[DVector<Complex64>],
    others: &[f64],
    norm: f64,
    ipm: &IpmSettings,
    report: &mut SubproblemReport,
) -> std::result::Result<(DVector<Complex64>, Vec<f64>), SolveStatus> {
    let m_e = own.first().map_or(0, |y| y.len());
    let mut p = SdpProblem::new(m_e);
    p.diag_fixed = Some(vec![1.0; m_e]);
    let taus = add_sensing_scalars(&mut p, own.len(), 1.0);
    p.scalar_objective = taus.iter().map(|&t| (t, 1.0)).collect();
    for ((y, c), &tau) in own.iter().zip(others).zip(&taus) {
        p.add_constraint(Some(HermTerm::rank_one(norm, y.clone())), vec![(tau, -1.0)], Sense::Ge, -c);
    }
    let sol = solve_with_relaxation(&mut p, ipm, report);
    if !usable(sol.status) {
        return Err(sol.status);
    }
    let value: f64 = taus.iter().map(|&t| sol.scalars[t]).sum();
    let w = conic::extract_unit_modulus(&sol.x);
    report.rank_one_gap = conic::extract_rank_one(&sol.x).gap;
    report.sdp_value = value;
    report.candidate_value = own
        .iter()
        .zip(others)
        .map(|(y, c)| (w.dotc(y).norm_sqr() * norm + c).min(1.0))
        .sum();
    report.dominance_ok = report.candidate_value <= value * (1.0 + 1e-6) + DOMINANCE_TOL;
    report.accepted = true;
    Ok((w, taus.iter().map(|&t| sol.scalars[t]).collect()))
}

#[derive(Debug, Clone)]
pub struct PhiOutput {
    pub phi: DVector<f64>,
    /// Objective after every coordinate update, starting with the initial value.
    pub history: Vec<f64>,
    pub sweeps: usize,
}

/// Wrap to `(-pi, pi]`.
pub fn wrap_angle(x: f64) -> f64 {
    use std::f64::consts::PI;
    let mut y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y -= 2.0 * PI;
    }
    y
}

/// Cyclic coordinate ascent on `|h_BU v + sum_m c_m exp(j phi_m)|^2` over the phase box.
pub fn solve_op_phi(
    h_bu: &DVector<Complex64>,
    h_ru: &DVector<Complex64>,
    h_br: &DMatrix<Complex64>,
    v: &DVector<Complex64>,
    rho: f64,
    phi0: &DVector<f64>,
    phase_box: PhaseBox,
    max_sweeps: usize,
    tol: f64,
) -> PhiOutput {
    let c = cascade_terms(h_ru, h_br, v, rho);
    coordinate_ascent(row_times(h_bu, v), &c, phi0, phase_box.limit(), max_sweeps, tol)
}

/// Coordinate ascent on `|d + sum_m c_m exp(j phi_m)|^2` with `|phi_m| <= limit`.
pub fn coordinate_ascent(
    direct: Complex64,
    c: &DVector<Complex64>,
    phi0: &DVector<f64>,
    limit: f64,
    max_sweeps: usize,
    tol: f64,
) -> PhiOutput {
    let mut phi = phi0.map(|p| p.clamp(-limit, limit));
    let mut total = direct
        + c.iter()
            .zip(phi.iter())
            .map(|(cm, p)| cm * Complex64::from_polar(1.0, *p))
            .sum::<Complex64>();
    let mut history = vec![total.norm_sqr()];
    let mut sweeps = 0;
    while sweeps < max_sweeps {
        sweeps += 1;
        let start = total.norm_sqr();
        for m in 0..c.len() {
            let cm = c[m];
            if cm.norm() == 0.0 {
                continue;
            }
            let old = cm * Complex64::from_polar(1.0, phi[m]);
            let rest = total - old;
            if rest.norm() == 0.0 {
                continue;
            }
            // circular distance to the unconstrained optimum is minimized by clipping
            let target = wrap_angle(rest.arg() - cm.arg()).clamp(-limit, limit);
            let new = cm * Complex64::from_polar(1.0, target);
            let candidate = rest + new;
            if candidate.norm_sqr() >= total.norm_sqr() {
                phi[m] = target;
                total = candidate;
            }
            history.push(total.norm_sqr());
        }
        let end = total.norm_sqr();
        if end - start <= tol * end.max(f64::MIN_POSITIVE) {
            break;
        }
    }
    PhiOutput { phi, history, sweeps }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub rate: f64,
    pub gain: f64,
    pub sum_t: f64,
    pub composite: f64,
    pub min_peb_margin: f64,
    pub v_gap: f64,
    pub x_gaps: Vec<f64>,
    pub max_residual: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct IterationTrace {
    pub records: Vec<IterationRecord>,
}

fn fmt_f(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.9e}")
    } else if x > 0.0 {
        "inf".into()
    } else if x < 0.0 {
        "-inf".into()
    } else {
        "nan".into()
    }
}

impl IterationTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let m_rf = self.records.iter().map(|r| r.x_gaps.len()).max().unwrap_or(0);
        let mut s = String::from("iteration,rate,gain,sum_t,composite,min_peb_margin,v_gap");
        for l in 0..m_rf {
            let _ = write!(s, ",x_gap_{l}");
        }
        s.push_str(",max_residual,wall_ms\n");
        for r in &self.records {
            let _ = write!(
                s,
                "{},{},{},{},{},{},{}",
                r.iteration,
                fmt_f(r.rate),
                fmt_f(r.gain),
                fmt_f(r.sum_t),
                fmt_f(r.composite),
                fmt_f(r.min_peb_margin),
                fmt_f(r.v_gap)
            );
            for l in 0..m_rf {
                let _ = write!(s, ",{}", r.x_gaps.get(l).map_or(String::new(), |g| fmt_f(*g)));
            }
            let _ = writeln!(s, ",{},{:.3}", fmt_f(r.max_residual), r.wall_ms);
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlternateStatus {
    Converged,
    MaxIters,
    SolverFailure,
}

#[derive(Debug, Clone)]
pub struct IsacSolution {
    pub design: HrisDesign,
    pub trace: IterationTrace,
    pub status: AlternateStatus,
    pub converged: bool,
    pub metrics: DesignMetrics,
    /// Fraction of constraint points meeting the PEB threshold.
    pub point_coverage: f64,
    pub failure: Option<String>,
    /// Worst SDP residual over all stages.
    pub max_residual: f64,
    pub dominance_violations: usize,
}

/// Deterministic start: zero phases, all-ones combiner, matched filter on the direct-plus-reflected channel.
pub fn initial_design(ctx: &DesignContext) -> Result<HrisDesign> {
    let phi = DVector::zeros(ctx.m_rf * ctx.m_e);
    let h = ctx.dl_channel(&phi)?;
    Ok(HrisDesign::initial(matched_filter(&h, ctx.cfg.p_max), ctx.m_rf, ctx.m_e))
}

fn random_design(ctx: &DesignContext, rng: &mut ChaCha8Rng) -> HrisDesign {
    let limit = ctx.cfg.phase_box.limit();
    let v = DVector::from_fn(ctx.n_tx(), |_, _| complex_gaussian(rng, 1.0));
    HrisDesign {
        v: full_power(&v, ctx.cfg.p_max),
        w_blocks: (0..ctx.m_rf)
            .map(|_| DVector::from_fn(ctx.m_e, |_, _| Complex64::from_polar(1.0, rng.gen_range(-3.2..3.2))))
            .collect(),
        phi: DVector::from_fn(ctx.m_rf * ctx.m_e, |_, _| rng.gen_range(-limit..=limit)),
    }
}

/// Alternating loop from the deterministic start, plus optional random restarts.
pub fn alternate(ctx: &DesignContext) -> Result<IsacSolution> {
    let mut best = alternate_from(ctx, initial_design(ctx)?)?;
    if ctx.cfg.restarts > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(ctx.cfg.restart_seed);
        for _ in 0..ctx.cfg.restarts {
            let start = random_design(ctx, &mut rng);
            let sol = alternate_from(ctx, start)?;
            if sol.status != AlternateStatus::SolverFailure
                && (best.status == AlternateStatus::SolverFailure
                    || sol.metrics.composite() > best.metrics.composite())
            {
                best = sol;
            }
        }
    }
    Ok(best)
}

/// Alternating loop from a given design: `v`, then every `w_l`, then `phi`.
/// Each stage result is kept only if the design objective does not drop.
pub fn alternate_from(ctx: &DesignContext, start: HrisDesign) -> Result<IsacSolution> {
    let cfg = &ctx.cfg;
    let limit = cfg.phase_box.limit();
    let mut design = start;
    design.validate(cfg.p_max, limit)?;
    let mut metrics = ctx.evaluate(&design)?;
    let mut trace = IterationTrace::default();
    let mut status = AlternateStatus::MaxIters;
    let mut failure = None;
    let mut max_residual: f64 = 0.0;
    let mut dominance_violations = 0;

    for iteration in 1..=cfg.max_iters {
        let clock = Instant::now();
        let before = metrics.composite();
        let mut iter_residual: f64 = 0.0;
        let mut x_gaps = Vec::with_capacity(ctx.m_rf);

        let stage = (|| -> Result<f64> {
            let out = solve_op_v(ctx, &design)?;
            iter_residual = iter_residual.max(out.report.residual);
            if !out.report.dominance_ok {
                dominance_violations += 1;
            }
            let v_gap = out.report.rank_one_gap;
            let cand = HrisDesign { v: out.v, ..design.clone() };
            let m = ctx.evaluate(&cand)?;
            if m.composite() >= metrics.composite() {
                design = cand;
                metrics = m;
            }
            for l in 0..ctx.m_rf {
                let out = solve_op_xl(ctx, &design, l)?;
                iter_residual = iter_residual.max(out.report.residual);
                if !out.report.dominance_ok {
                    dominance_violations += 1;
                }
                x_gaps.push(out.report.rank_one_gap);
                if out.report.skipped {
                    continue;
                }
                let mut cand = design.clone();
                cand.w_blocks[l] = out.w;
                let m = ctx.evaluate(&cand)?;
                if m.composite() >= metrics.composite() {
                    design = cand;
                    metrics = m;
                }
            }
            let out = solve_op_phi(
                &ctx.h_bu,
                &ctx.h_ru,
                &ctx.h_br,
                &design.v,
                cfg.sensing.rho,
                &design.phi,
                cfg.phase_box,
                cfg.phi_max_sweeps,
                cfg.phi_tol,
            );
            let cand = HrisDesign { phi: out.phi, ..design.clone() };
            let m = ctx.evaluate(&cand)?;
            if m.composite() >= metrics.composite() {
                design = cand;
                metrics = m;
            }
            Ok(v_gap)
        })();

        max_residual = max_residual.max(iter_residual);
        let v_gap = match stage {
            Ok(g) => g,
            Err(e) => {
                status = AlternateStatus::SolverFailure;
                failure = Some(e.to_string());
                break;
            }
        };
        trace.records.push(IterationRecord {
            iteration,
            rate: metrics.rate,
            gain: metrics.gain,
            sum_t: metrics.sum_t,
            composite: metrics.composite(),
            min_peb_margin: metrics.min_peb_margin,
            v_gap,
            x_gaps,
            max_residual: iter_residual,
            wall_ms: clock.elapsed().as_secs_f64() * 1e3,
        });
        let after = metrics.composite();
        if (after - before).abs() <= cfg.tol * after.abs().max(f64::MIN_POSITIVE) {
            status = AlternateStatus::Converged;
            break;
        }
    }

    design.validate(cfg.p_max, limit)?;
    let point_coverage = if ctx.points.is_empty() {
        1.0
    } else {
        metrics.points_met as f64 / ctx.points.len() as f64
    };
    Ok(IsacSolution {
        design,
        trace,
        converged: status == AlternateStatus::Converged,
        status,
        metrics,
        point_coverage,
        failure,
        max_residual,
        dominance_violations,
    })
}
