//! Near-field grid MUSIC through the sensed steering `b(zeta) = rho W^H a_rx(zeta)`
//! and RMSE scoring.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelModel;
use crate::error::{Error, Result};
use crate::geometry::SphericalCoord;
use crate::signal::combine;

/// Relative residual `||E_n^H b|| / ||b||` below which a node is an exact null.
pub const EXACT_NULL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MusicGrid {
    pub ranges: Vec<f64>,
    pub thetas: Vec<f64>,
    pub phis: Vec<f64>,
}

impl MusicGrid {
    pub fn new(ranges: Vec<f64>, thetas: Vec<f64>, phis: Vec<f64>) -> Result<Self> {
        if ranges.is_empty() || thetas.is_empty() || phis.is_empty() {
            return Err(Error::EmptyGrid("MUSIC grid axis"));
        }
        for &r in &ranges {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::InvalidCoordinate(format!("grid range {r}")));
            }
        }
        Ok(Self { ranges, thetas, phis })
    }

    /// Uniform grid over `[r_min, r_max] x {theta} x [phi_min, phi_max]`, endpoints included.
    pub fn uniform(r: (f64, f64), theta: f64, phi: (f64, f64), n_r: usize, n_phi: usize) -> Result<Self> {
        let lin = |a: f64, b: f64, n: usize| -> Vec<f64> {
            if n == 1 {
                vec![0.5 * (a + b)]
            } else {
                (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
            }
        };
        if n_r == 0 || n_phi == 0 {
            return Err(Error::EmptyGrid("MUSIC grid axis"));
        }
        Self::new(lin(r.0, r.1, n_r), vec![theta], lin(phi.0, phi.1, n_phi))
    }

    pub fn len(&self) -> usize {
        self.ranges.len() * self.thetas.len() * self.phis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.phis.len(), self.thetas.len(), self.ranges.len())
    }

    /// Flat index, range fastest.
    pub fn index(&self, ip: usize, it: usize, ir: usize) -> usize {
        (ip * self.thetas.len() + it) * self.ranges.len() + ir
    }

    pub fn unflatten(&self, k: usize) -> (usize, usize, usize) {
        let nr = self.ranges.len();
        let nt = self.thetas.len();
        (k / (nr * nt), (k / nr) % nt, k % nr)
    }

    pub fn point(&self, k: usize) -> SphericalCoord {
        let (ip, it, ir) = self.unflatten(k);
        SphericalCoord {
            r: self.ranges[ir],
            theta: self.thetas[it],
            phi: self.phis[ip],
        }
    }

    pub fn points(&self) -> Vec<SphericalCoord> {
        (0..self.len()).map(|k| self.point(k)).collect()
    }

    /// Whether every node lies in `[r_min, r_max] x [theta_min, theta_max] x [phi_min, phi_max]` (with slack).
    pub fn within(&self, r: (f64, f64), theta: (f64, f64), phi: (f64, f64)) -> bool {
        let tol = 1e-12;
        let inside = |v: f64, (a, b): (f64, f64)| v >= a - tol * (1.0 + a.abs()) && v <= b + tol * (1.0 + b.abs());
        self.ranges.iter().all(|&v| inside(v, r))
            && self.thetas.iter().all(|&v| inside(v, theta))
            && self.phis.iter().all(|&v| inside(v, phi))
    }
}

/// Receive steering vectors `a_rx` for every grid node; independent of the design.
#[derive(Debug, Clone)]
pub struct SteeringCache {
    pub grid: MusicGrid,
    pub a_rx: Vec<DVector<Complex64>>,
}

impl SteeringCache {
    pub fn new(model: &ChannelModel, grid: MusicGrid) -> Result<Self> {
        let pts = grid.points();
        let a_rx = crate::par::map(&pts, |p| model.rx_steering(p))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { grid, a_rx })
    }

    /// `b(zeta) = rho W^H a_rx(zeta)` at every node.
    pub fn sensed(&self, w_blocks: &[DVector<Complex64>], rho: f64) -> Vec<DVector<Complex64>> {
        crate::par::map(&self.a_rx, |a| combine(w_blocks, a) * Complex64::new(rho, 0.0))
    }
}

/// `R = T^-1 Y Y^H`.
pub fn sample_covariance(y: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    let (m, t) = y.shape();
    if t < m {
        return Err(Error::InsufficientSnapshots {
            snapshots: t,
            chains: m,
        });
    }
    let r = y * y.adjoint() / Complex64::new(t as f64, 0.0);
    Ok((&r + r.adjoint()) * Complex64::new(0.5, 0.0))
}

/// Eigenvectors of the `M - n_sources` smallest eigenvalues.
pub fn noise_subspace(r: &DMatrix<Complex64>, n_sources: usize) -> Result<DMatrix<Complex64>> {
    let m = r.nrows();
    if n_sources >= m {
        return Err(Error::TooManySources {
            sources: n_sources,
            chains: m,
        });
    }
    let eig = SymmetricEigen::new(r.clone());
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let cols: Vec<_> = order[..m - n_sources].iter().map(|&k| eig.eigenvectors.column(k).into_owned()).collect();
    Ok(DMatrix::from_columns(&cols))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Spectrum {
    pub values: Vec<f64>,
    /// `||E_n^H b|| / ||b||` per node.
    pub residuals: Vec<f64>,
    /// Nodes whose steering lies exactly in the signal subspace.
    pub infinite: usize,
}

impl Spectrum {
    /// Columns `phi_deg, r, value`.
    pub fn to_csv(&self, grid: &MusicGrid) -> String {
        let mut s = String::from("phi_deg,theta_deg,r,value\n");
        for (k, v) in self.values.iter().enumerate() {
            let p = grid.point(k);
            let _ = writeln!(s, "{:.9},{:.9},{:.9},{:.9e}", p.phi.to_degrees(), p.theta.to_degrees(), p.r, v);
        }
        s
    }
}

/// `P(zeta) = ||b||^2 / ||E_n^H b||^2` (or without the numerator when `normalize` is off).
pub fn music_spectrum(
    r: &DMatrix<Complex64>,
    steering: &[DVector<Complex64>],
    n_sources: usize,
    normalize: bool,
) -> Result<Spectrum> {
    if steering.is_empty() {
        return Err(Error::EmptyGrid("MUSIC steering set"));
    }
    let en = noise_subspace(r, n_sources)?;
    let enh = en.adjoint();
    let out = crate::par::map(steering, |b| {
        let bn = b.norm_squared();
        let proj = (&enh * b).norm_squared();
        let rel = if bn > 0.0 { (proj / bn).sqrt() } else { f64::INFINITY };
        let num = if normalize { bn } else { 1.0 };
        let v = if proj > 0.0 { num / proj } else { f64::INFINITY };
        (v, rel)
    });
    let infinite = out.iter().filter(|(v, _)| v.is_infinite()).count();
    let (values, residuals) = out.into_iter().unzip();
    Ok(Spectrum {
        values,
        residuals,
        infinite,
    })
}

/// Signal-subspace dimension used by [`estimate_targets`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SubspaceRank {
    /// One dimension per source, including the UE when it reflects.
    #[default]
    PerSource,
    /// A single dimension: all reflections carry the same symbol stream.
    Coherent,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MusicConfig {
    pub rank: SubspaceRank,
    pub normalize: bool,
    pub refine: bool,
    /// Minimum separation between picked peaks, in grid cells (Chebyshev).
    pub min_separation: usize,
}

impl Default for MusicConfig {
    fn default() -> Self {
        Self {
            rank: SubspaceRank::PerSource,
            normalize: true,
            refine: true,
            min_separation: 2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateSet {
    pub positions: Vec<SphericalCoord>,
    pub values: Vec<f64>,
    /// Targets for which no peak was left.
    pub misses: usize,
    pub infinite_nodes: usize,
}

/// Local maxima (over the 26-neighbourhood) sorted by decreasing value.
fn local_maxima(grid: &MusicGrid, values: &[f64]) -> Vec<usize> {
    let (np, nt, nr) = grid.shape();
    let mut peaks = Vec::new();
    for ip in 0..np {
        for it in 0..nt {
            for ir in 0..nr {
                let k = grid.index(ip, it, ir);
                let v = values[k];
                let mut is_max = true;
                'scan: for dp in -1i64..=1 {
                    for dt in -1i64..=1 {
                        for dr in -1i64..=1 {
                            if dp == 0 && dt == 0 && dr == 0 {
                                continue;
                            }
                            let (p, t, r) = (ip as i64 + dp, it as i64 + dt, ir as i64 + dr);
                            if p < 0 || t < 0 || r < 0 || p >= np as i64 || t >= nt as i64 || r >= nr as i64 {
                                continue;
                            }
                            let w = values[grid.index(p as usize, t as usize, r as usize)];
                            // ties broken by index so plateaus yield one peak
                            let kk = grid.index(p as usize, t as usize, r as usize);
                            if w > v || (w == v && kk < k) {
                                is_max = false;
                                break 'scan;
                            }
                        }
                    }
                }
                if is_max {
                    peaks.push(k);
                }
            }
        }
    }
    peaks.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    peaks
}

fn cell_distance(grid: &MusicGrid, a: usize, b: usize) -> usize {
    let (p1, t1, r1) = grid.unflatten(a);
    let (p2, t2, r2) = grid.unflatten(b);
    p1.abs_diff(p2).max(t1.abs_diff(t2)).max(r1.abs_diff(r2))
}

/// One parabolic step per axis on `log P`; offsets clipped to half a cell.
fn refine(grid: &MusicGrid, values: &[f64], k: usize) -> SphericalCoord {
    let (ip, it, ir) = grid.unflatten(k);
    let lv = |k: usize| values[k].max(f64::MIN_POSITIVE).ln();
    let f0 = lv(k);
    let step = |axis: &[f64], i: usize, km: Option<usize>, kp: Option<usize>| -> f64 {
        match (km, kp) {
            (Some(a), Some(b)) => {
                let (fm, fp) = (lv(a), lv(b));
                let den = fm - 2.0 * f0 + fp;
                if den < 0.0 && den.is_finite() {
                    let delta = (0.5 * (fm - fp) / den).clamp(-0.5, 0.5);
                    let h = if delta >= 0.0 { axis[i + 1] - axis[i] } else { axis[i] - axis[i - 1] };
                    axis[i] + delta * h
                } else {
                    axis[i]
                }
            }
            _ => axis[i],
        }
    };
    let (np, nt, nr) = grid.shape();
    let nb = |i: usize, n: usize| (i.checked_sub(1), if i + 1 < n { Some(i + 1) } else { None });
    let (pm, pp) = nb(ip, np);
    let (tm, tp) = nb(it, nt);
    let (rm, rp) = nb(ir, nr);
    SphericalCoord {
        phi: step(&grid.phis, ip, pm.map(|p| grid.index(p, it, ir)), pp.map(|p| grid.index(p, it, ir))),
        theta: step(&grid.thetas, it, tm.map(|t| grid.index(ip, t, ir)), tp.map(|t| grid.index(ip, t, ir))),
        r: step(&grid.ranges, ir, rm.map(|r| grid.index(ip, it, r)), rp.map(|r| grid.index(ip, it, r))),
    }
}

/// Pick `K` target positions from the spectrum of `Y`. When `ue` is given, one
/// extra peak is taken and the one closest to the UE discarded.
pub fn estimate_targets(
    y: &DMatrix<Complex64>,
    k: usize,
    ue: Option<&SphericalCoord>,
    steering: &[DVector<Complex64>],
    grid: &MusicGrid,
    cfg: &MusicConfig,
) -> Result<EstimateSet> {
    if k == 0 {
        return Ok(EstimateSet {
            positions: Vec::new(),
            values: Vec::new(),
            misses: 0,
            infinite_nodes: 0,
        });
    }
    if steering.len() != grid.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} steering vectors for {} grid nodes",
            steering.len(),
            grid.len()
        )));
    }
    let sources = k + usize::from(ue.is_some());
    let m = y.nrows();
    if sources >= m {
        return Err(Error::TooManySources { sources, chains: m });
    }
    let r = sample_covariance(y)?;
    let rank = match cfg.rank {
        SubspaceRank::PerSource => sources,
        SubspaceRank::Coherent => 1,
    };
    let spec = music_spectrum(&r, steering, rank, cfg.normalize)?;
    let mut picked: Vec<usize> = Vec::new();
    for p in local_maxima(grid, &spec.values) {
        if picked.len() == sources {
            break;
        }
        if picked.iter().all(|&q| cell_distance(grid, p, q) >= cfg.min_separation) {
            picked.push(p);
        }
    }
    if let Some(ue) = ue {
        if picked.len() == sources {
            let uc = ue.to_cartesian();
            let drop = picked
                .iter()
                .enumerate()
                .map(|(i, &p)| (i, (grid.point(p).to_cartesian() - uc).norm()))
                .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
                .map(|(i, _)| i)
                .expect("non-empty");
            picked.remove(drop);
        } else {
            picked.truncate(k);
        }
    }
    let positions = picked
        .iter()
        .map(|&p| {
            if cfg.refine && spec.residuals[p] > EXACT_NULL {
                refine(grid, &spec.values, p)
            } else {
                grid.point(p)
            }
        })
        .collect();
    Ok(EstimateSet {
        values: picked.iter().map(|&p| spec.values[p]).collect(),
        misses: k - picked.len(),
        positions,
        infinite_nodes: spec.infinite,
    })
}

/// Per-truth error after greedy nearest-neighbour assignment; unmatched truths cost `miss_cost`.
pub fn assignment_errors(estimates: &[SphericalCoord], truths: &[SphericalCoord], miss_cost: f64) -> Vec<f64> {
    let e: Vec<_> = estimates.iter().map(|p| p.to_cartesian()).collect();
    let t: Vec<_> = truths.iter().map(|p| p.to_cartesian()).collect();
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(e.len() * t.len());
    for (i, a) in e.iter().enumerate() {
        for (j, b) in t.iter().enumerate() {
            pairs.push(((a - b).norm(), i, j));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_e = vec![false; e.len()];
    let mut err = vec![miss_cost; t.len()];
    let mut done = vec![false; t.len()];
    for (d, i, j) in pairs {
        if !used_e[i] && !done[j] {
            used_e[i] = true;
            done[j] = true;
            err[j] = d;
        }
    }
    err
}

/// `sqrt(mean(e^2))`; zero for an empty list.
pub fn rmse_from_errors(errors: &[f64]) -> f64 {
    if errors.is_empty() {
        return 0.0;
    }
    (errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt()
}

/// RMSE of equal-length estimate and truth lists after greedy assignment.
pub fn rmse(estimates: &[SphericalCoord], truths: &[SphericalCoord]) -> Result<f64> {
    if estimates.len() != truths.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} estimates for {} truths",
            estimates.len(),
            truths.len()
        )));
    }
    Ok(rmse_from_errors(&assignment_errors(estimates, truths, f64::INFINITY)))
}
