//! Monte-Carlo trials and the three experiments: PEB map, rho sweep and RMSE
//! versus transmit power.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelModel, ChannelSet, PointSource, SourceKind};
use crate::config::{discretize_aoi, Aoi, EstimationCombiner, ScenarioConfig};
use crate::error::{Error, Result};
use crate::estimation::{assignment_errors, estimate_targets, MusicGrid, SteeringCache};
use crate::geometry::SphericalCoord;
use crate::optimizer::{alternate, AlternateStatus, DesignContext, IsacSolution, OptimizerConfig};
use crate::sensing::{coverage, PebReport, PebValue, SensingParams};
use crate::signal::{complex_gaussian, hris_received_block, HrisDesign, NoiseModel};

/// Seed of trial `index` under `master`: the first word of ChaCha stream `index`.
pub fn trial_seed(master: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng.gen()
}

/// Everything derived from a config that does not change between trials.
pub struct Scenario {
    pub cfg: ScenarioConfig,
    pub model: ChannelModel,
    pub aoi: Aoi,
    pub sigma2: f64,
    pub q_points: Vec<SphericalCoord>,
    pub coverage_grid: Vec<SphericalCoord>,
    pub steering: SteeringCache,
    pub diameter: f64,
}

impl Scenario {
    pub fn new(cfg: ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        let model = cfg.model()?;
        let aoi = cfg.aoi()?;
        let q_points = if cfg.q == 0 {
            Vec::new()
        } else {
            discretize_aoi(&aoi, cfg.q, cfg.aoi.q_layout)?
        };
        let coverage_grid = aoi.product_grid(cfg.coverage_grid[0], cfg.coverage_grid[1]);
        let grid = MusicGrid::uniform(aoi.r, aoi.theta, aoi.phi, cfg.estimation.grid_r, cfg.estimation.grid_phi)?;
        let steering = SteeringCache::new(&model, grid)?;
        Ok(Self {
            sigma2: cfg.sigma2(),
            diameter: aoi.diameter(),
            cfg,
            model,
            aoi,
            q_points,
            coverage_grid,
            steering,
        })
    }

    pub fn sensing(&self) -> SensingParams {
        SensingParams {
            rho: self.cfg.rho,
            sigma2: self.sigma2,
            snapshots: self.cfg.snapshots,
        }
    }

    pub fn optimizer_config(&self) -> OptimizerConfig {
        let o = &self.cfg.optimizer;
        let mut c = OptimizerConfig::new(self.cfg.p_max(), self.cfg.gamma_s, self.sensing());
        c.max_iters = o.max_iters;
        c.tol = o.tol;
        c.restarts = o.restarts;
        c.combiner_constraint = o.combiner_constraint;
        c.phase_box = o.phase_box;
        c
    }

    fn draw_position(&self, rng: &mut ChaCha8Rng) -> SphericalCoord {
        if self.cfg.estimation.on_grid {
            let k = rng.gen_range(0..self.steering.grid.len());
            self.steering.grid.point(k)
        } else {
            SphericalCoord {
                r: rng.gen_range(self.aoi.r.0..=self.aoi.r.1),
                theta: self.aoi.theta,
                phi: rng.gen_range(self.aoi.phi.0..=self.aoi.phi.1),
            }
        }
    }

    /// UE plus `K` targets with unit-amplitude random-phase reflection coefficients.
    pub fn draw_channels(&self, rng: &mut ChaCha8Rng) -> Result<ChannelSet> {
        let mut sources = Vec::with_capacity(self.cfg.k_targets + 1);
        for i in 0..=self.cfg.k_targets {
            let position = self.draw_position(rng);
            let phase: f64 = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
            let ue = i == 0;
            let beta = if ue && !self.cfg.estimation.ue_reflects {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::from_polar(1.0, phase)
            };
            sources.push(PointSource {
                position,
                beta,
                kind: if ue { SourceKind::Ue } else { SourceKind::Target },
            });
        }
        ChannelSet::synthesize(&self.model, sources)
    }

    /// Channels as seen by the designer: true channels plus relative CSI error.
    fn design_context(&self, ch: &ChannelSet, rng: &mut ChaCha8Rng) -> Result<DesignContext> {
        let e = self.cfg.csi_error;
        let perturb_v = |h: &DVector<Complex64>, rng: &mut ChaCha8Rng| {
            let var = e * h.norm_squared() / h.len() as f64;
            h.map(|x| x + complex_gaussian(rng, var))
        };
        let cfg = self.optimizer_config();
        if e == 0.0 {
            return DesignContext::new(&self.model, ch, &self.q_points, cfg);
        }
        let h_bu = perturb_v(&ch.h_bu, rng);
        let h_ru = perturb_v(&ch.h_ru, rng);
        let var = e * ch.h_br.norm_squared() / ch.h_br.len() as f64;
        let h_br = ch.h_br.map(|x| x + complex_gaussian(rng, var));
        DesignContext::with_estimates(&self.model, h_bu, h_ru, h_br, &self.q_points, cfg)
    }

    /// One Monte-Carlo trial, fully determined by `seed`.
    pub fn run_trial(&self, index: usize, seed: u64) -> Result<TrialRecord> {
        Ok(self.run_trial_full(index, seed)?.record)
    }

    pub fn run_trial_full(&self, index: usize, seed: u64) -> Result<TrialOutcome> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ch = self.draw_channels(&mut rng)?;
        let ctx = self.design_context(&ch, &mut rng)?;
        let mut rec = TrialRecord::new(index, seed, &self.cfg, ch.ue().position);
        rec.mf_direct_rate = (1.0 + self.cfg.p_max() * ch.h_bu.norm_squared() / self.sigma2).log2();

        let sol = match alternate(&ctx) {
            Ok(s) => s,
            Err(e) => {
                rec.fail(e.to_string());
                return Ok(TrialOutcome {
                    record: rec,
                    solution: None,
                    peb: None,
                });
            }
        };
        rec.iterations = sol.trace.len();
        rec.status = sol.status;
        rec.max_residual = sol.max_residual;
        if sol.status == AlternateStatus::SolverFailure {
            rec.fail(sol.failure.clone().unwrap_or_default());
            return Ok(TrialOutcome {
                record: rec,
                solution: Some(sol),
                peb: None,
            });
        }

        let truth = if self.cfg.csi_error == 0.0 {
            ctx
        } else {
            DesignContext::new(&self.model, &ch, &self.q_points, self.optimizer_config())?
        };
        rec.rate = truth.evaluate(&sol.design)?.rate;

        let report = coverage(&self.model, &self.coverage_grid, &sol.design, self.cfg.gamma_s, &self.sensing())?;
        rec.coverage = report.coverage;
        let (min, median) = peb_stats(&report);
        rec.min_peb = min;
        rec.median_peb = median;
        rec.am_hm_min = report
            .fims
            .iter()
            .filter_map(|f| f.trace_inverse().map(|ti| ti * f.trace()))
            .fold(f64::INFINITY, f64::min);

        self.estimate(&ch, &sol.design, &mut rng, &mut rec)?;
        Ok(TrialOutcome {
            record: rec,
            solution: Some(sol),
            peb: Some(report),
        })
    }

    fn estimate(&self, ch: &ChannelSet, design: &HrisDesign, rng: &mut ChaCha8Rng, rec: &mut TrialRecord) -> Result<()> {
        let k = self.cfg.k_targets;
        if k == 0 {
            return Ok(());
        }
        let est_cfg = &self.cfg.estimation;
        let w = match est_cfg.combiner {
            EstimationCombiner::Optimized => design.w_blocks.clone(),
            EstimationCombiner::Ones => vec![DVector::from_element(design.m_e(), Complex64::new(1.0, 0.0)); design.m_rf()],
            EstimationCombiner::Random => (0..design.m_rf())
                .map(|_| {
                    DVector::from_fn(design.m_e(), |_, _| {
                        Complex64::from_polar(1.0, rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI))
                    })
                })
                .collect(),
        };
        let t = self.cfg.snapshots;
        let pilots: Vec<Complex64> = (0..t)
            .map(|_| Complex64::from_polar(1.0, rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI)))
            .collect();
        let rho = self.cfg.rho;
        let y = if est_cfg.noiseless {
            let mean = crate::signal::combine(&w, &(&ch.h_r * &design.v)) * Complex64::new(rho, 0.0);
            DMatrix::from_fn(mean.len(), t, |i, j| mean[i] * pilots[j])
        } else {
            hris_received_block(&w, &ch.h_r, &design.v, &pilots, rho, &NoiseModel::new(self.sigma2)?, rng)?
        };
        let b = self.steering.sensed(&w, rho);
        let ue = est_cfg.ue_reflects.then(|| ch.ue().position);
        let est = estimate_targets(&y, k, ue.as_ref(), &b, &self.steering.grid, &est_cfg.music())?;
        let truths: Vec<SphericalCoord> = ch.targets().map(|s| s.position).collect();
        let errs = assignment_errors(&est.positions, &truths, self.diameter);
        rec.sq_error_sum = errs.iter().map(|e| e * e).sum();
        rec.targets = truths.len();
        rec.misses = est.misses;
        rec.max_target_error = errs.iter().copied().fold(0.0, f64::max);
        Ok(())
    }
}

fn peb_stats(report: &PebReport) -> (f64, f64) {
    let mut v: Vec<f64> = report
        .peb
        .iter()
        .map(|p| match p {
            PebValue::Finite(x) => *x,
            PebValue::Singular => f64::INFINITY,
        })
        .collect();
    v.sort_by(f64::total_cmp);
    (v[0], v[v.len() / 2])
}

pub struct TrialOutcome {
    pub record: TrialRecord,
    pub solution: Option<IsacSolution>,
    pub peb: Option<PebReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub rho: f64,
    pub q: usize,
    pub p_max_dbm: f64,
    pub gamma_s: f64,
    pub ue_r: f64,
    pub ue_phi_deg: f64,
    pub rate: f64,
    /// Direct-link matched-filter rate `log2(1 + P ||h_BU||^2 / sigma2)`.
    pub mf_direct_rate: f64,
    pub coverage: f64,
    pub min_peb: f64,
    pub median_peb: f64,
    /// `min Tr(I^-1) Tr(I)` over the nonsingular coverage-grid FIMs.
    pub am_hm_min: f64,
    pub sq_error_sum: f64,
    pub targets: usize,
    pub misses: usize,
    pub max_target_error: f64,
    pub iterations: usize,
    pub status: AlternateStatus,
    pub max_residual: f64,
    pub failed: bool,
    pub failure: String,
}

impl TrialRecord {
    fn new(trial: usize, seed: u64, cfg: &ScenarioConfig, ue: SphericalCoord) -> Self {
        Self {
            trial,
            seed,
            rho: cfg.rho,
            q: cfg.q,
            p_max_dbm: cfg.p_max_dbm,
            gamma_s: cfg.gamma_s,
            ue_r: ue.r,
            ue_phi_deg: ue.phi.to_degrees(),
            rate: f64::NAN,
            mf_direct_rate: f64::NAN,
            coverage: f64::NAN,
            min_peb: f64::NAN,
            median_peb: f64::NAN,
            am_hm_min: f64::NAN,
            sq_error_sum: 0.0,
            targets: 0,
            misses: 0,
            max_target_error: 0.0,
            iterations: 0,
            status: AlternateStatus::SolverFailure,
            max_residual: f64::NAN,
            failed: false,
            failure: String::new(),
        }
    }

    fn fail(&mut self, msg: String) {
        self.failed = true;
        self.status = AlternateStatus::SolverFailure;
        self.failure = msg;
    }

    pub fn rmse(&self) -> f64 {
        if self.targets == 0 {
            f64::NAN
        } else {
            (self.sq_error_sum / self.targets as f64).sqrt()
        }
    }

    pub const CSV_HEADER: &'static str = "trial,seed,rho,q,p_max_dbm,gamma_s,ue_r,ue_phi_deg,rate,mf_direct_rate,coverage,min_peb,median_peb,am_hm_min,rmse,sq_error_sum,targets,misses,max_target_error,iterations,status,max_residual,failed,failure";

    pub fn csv_row(&self) -> String {
        let status = match self.status {
            AlternateStatus::Converged => "converged",
            AlternateStatus::MaxIters => "max-iters",
            AlternateStatus::SolverFailure => "solver-failure",
        };
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},\"{}\"",
            self.trial,
            self.seed,
            num(self.rho),
            self.q,
            num(self.p_max_dbm),
            num(self.gamma_s),
            num(self.ue_r),
            num(self.ue_phi_deg),
            num(self.rate),
            num(self.mf_direct_rate),
            num(self.coverage),
            num(self.min_peb),
            num(self.median_peb),
            num(self.am_hm_min),
            num(self.rmse()),
            num(self.sq_error_sum),
            self.targets,
            self.misses,
            num(self.max_target_error),
            self.iterations,
            status,
            num(self.max_residual),
            self.failed,
            self.failure.replace('"', "'")
        )
    }
}

/// Fixed 12-digit scientific notation so CSV bytes are stable.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:.12e}")
    }
}

/// Run trials `0..n` of one scenario on the current pool.
pub fn run_trials(sc: &Scenario, n: usize) -> Result<Vec<TrialRecord>> {
    let master = sc.cfg.seed;
    crate::par::map_range(n, |i| sc.run_trial(i, trial_seed(master, i as u64)))
        .into_iter()
        .collect()
}

/// Standalone trial: builds the scenario and runs trial 0 with `seed`.
pub fn run_trial(cfg: &ScenarioConfig, seed: u64) -> Result<TrialRecord> {
    Scenario::new(cfg.clone())?.run_trial(0, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub rho: f64,
    pub q: usize,
    pub p_max_dbm: f64,
    pub gamma_s: f64,
    pub trials: usize,
    pub failures: usize,
    pub mean_rate: f64,
    pub mean_coverage: f64,
    pub rmse: f64,
    pub mean_mf_direct_rate: f64,
}

impl Aggregate {
    pub const CSV_HEADER: &'static str = "rho,q,p_max_dbm,gamma_s,trials,failures,rate,coverage,rmse,mf_direct_rate";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            num(self.rho),
            self.q,
            num(self.p_max_dbm),
            num(self.gamma_s),
            self.trials,
            self.failures,
            num(self.mean_rate),
            num(self.mean_coverage),
            num(self.rmse),
            num(self.mean_mf_direct_rate)
        )
    }
}

fn same_setting(a: &TrialRecord, b: &TrialRecord) -> bool {
    a.rho.to_bits() == b.rho.to_bits()
        && a.q == b.q
        && a.p_max_dbm.to_bits() == b.p_max_dbm.to_bits()
        && a.gamma_s.to_bits() == b.gamma_s.to_bits()
}

/// Group records by setting (in order of first appearance) and average the successful ones.
pub fn aggregate(records: &[TrialRecord]) -> Vec<Aggregate> {
    let mut groups: Vec<Vec<&TrialRecord>> = Vec::new();
    for r in records {
        match groups.iter_mut().find(|g| same_setting(g[0], r)) {
            Some(g) => g.push(r),
            None => groups.push(vec![r]),
        }
    }
    groups
        .into_iter()
        .map(|g| {
            let ok: Vec<_> = g.iter().filter(|r| !r.failed).collect();
            let n = ok.len() as f64;
            let mean = |f: &dyn Fn(&TrialRecord) -> f64| {
                if ok.is_empty() {
                    f64::NAN
                } else {
                    ok.iter().map(|r| f(r)).sum::<f64>() / n
                }
            };
            let targets: usize = ok.iter().map(|r| r.targets).sum();
            let sq: f64 = ok.iter().map(|r| r.sq_error_sum).sum();
            Aggregate {
                rho: g[0].rho,
                q: g[0].q,
                p_max_dbm: g[0].p_max_dbm,
                gamma_s: g[0].gamma_s,
                trials: g.len(),
                failures: g.len() - ok.len(),
                mean_rate: mean(&|r| r.rate),
                mean_coverage: mean(&|r| r.coverage),
                rmse: if targets == 0 { f64::NAN } else { (sq / targets as f64).sqrt() },
                mean_mf_direct_rate: mean(&|r| r.mf_direct_rate),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
}

impl Provenance {
    pub fn of(cfg: &ScenarioConfig) -> Self {
        Self {
            config_hash: cfg.hash(),
            seed: cfg.seed,
            version: env!("CARGO_PKG_VERSION").into(),
        }
    }

    /// Comment line heading every CSV output.
    pub fn csv_comment(&self) -> String {
        format!("# config_sha256={} seed={} version={}\n", self.config_hash, self.seed, self.version)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub id: String,
    pub provenance: Provenance,
    pub records: Vec<TrialRecord>,
    pub aggregates: Vec<Aggregate>,
}

impl ExperimentResult {
    pub fn new(id: &str, cfg: &ScenarioConfig, records: Vec<TrialRecord>) -> Self {
        let aggregates = aggregate(&records);
        Self {
            id: id.into(),
            provenance: Provenance::of(cfg),
            records,
            aggregates,
        }
    }

    /// Recomputed aggregates match the stored ones bit for bit, and no trial is lost.
    pub fn consistent(&self) -> bool {
        let again = aggregate(&self.records);
        let bits = |a: &Aggregate| {
            [a.rho, a.p_max_dbm, a.gamma_s, a.mean_rate, a.mean_coverage, a.rmse, a.mean_mf_direct_rate].map(f64::to_bits)
        };
        again.len() == self.aggregates.len()
            && again.iter().zip(&self.aggregates).all(|(a, b)| {
                bits(a) == bits(b) && a.q == b.q && a.trials == b.trials && a.failures == b.failures
            })
            && self.aggregates.iter().map(|a| a.trials).sum::<usize>() == self.records.len()
    }

    pub fn failures(&self) -> usize {
        self.records.iter().filter(|r| r.failed).count()
    }

    pub fn records_csv(&self) -> String {
        let mut s = self.provenance.csv_comment();
        s.push_str(TrialRecord::CSV_HEADER);
        s.push('\n');
        for r in &self.records {
            s.push_str(&r.csv_row());
            s.push('\n');
        }
        s
    }

    pub fn aggregates_csv(&self) -> String {
        let mut s = self.provenance.csv_comment();
        s.push_str(Aggregate::CSV_HEADER);
        s.push('\n');
        for a in &self.aggregates {
            s.push_str(&a.csv_row());
            s.push('\n');
        }
        s
    }
}

/// Per `(rho, Q)`: trials with the design re-optimised at every setting.
pub fn sweep_rho(cfg: &ScenarioConfig, rhos: &[f64], qs: &[usize]) -> Result<ExperimentResult> {
    if rhos.is_empty() || qs.is_empty() {
        return Err(Error::InvalidConfig("sweep needs at least one rho and one Q".into()));
    }
    let mut records = Vec::new();
    for &q in qs {
        for &rho in rhos {
            let mut c = cfg.clone();
            c.rho = rho;
            c.q = q;
            let sc = Scenario::new(c)?;
            records.extend(run_trials(&sc, cfg.trials)?);
        }
    }
    Ok(ExperimentResult::new("sweep-rho", cfg, records))
}

/// Coverage of one fixed design re-evaluated at every `rho` (no re-optimisation).
pub fn fixed_design_coverage(sc: &Scenario, design: &HrisDesign, rhos: &[f64]) -> Result<Vec<f64>> {
    rhos.iter()
        .map(|&rho| {
            let p = sc.sensing().with_rho(rho);
            Ok(coverage(&sc.model, &sc.coverage_grid, design, sc.cfg.gamma_s, &p)?.coverage)
        })
        .collect()
}

/// Per `(P_max, gamma_s)`: RMSE and coverage. Trial seeds are shared across settings.
pub fn rmse_vs_power(cfg: &ScenarioConfig, pmax_dbm: &[f64], gammas: &[f64]) -> Result<ExperimentResult> {
    if pmax_dbm.is_empty() || gammas.is_empty() {
        return Err(Error::InvalidConfig("need at least one power and one threshold".into()));
    }
    let mut records = Vec::new();
    for &g in gammas {
        for &p in pmax_dbm {
            let mut c = cfg.clone();
            c.p_max_dbm = p;
            c.gamma_s = g;
            let sc = Scenario::new(c)?;
            records.extend(run_trials(&sc, cfg.trials)?);
        }
    }
    Ok(ExperimentResult::new("rmse-vs-power", cfg, records))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoresightStats {
    pub boresight_phi_deg: f64,
    /// Half-width of the band counted as "in front of" the HRIS.
    pub band_deg: f64,
    pub covered: usize,
    pub uncovered: usize,
    /// Mean `|phi - phi_RIS|` of uncovered / covered points (NaN when empty).
    pub uncovered_mean_offset_deg: f64,
    pub covered_mean_offset_deg: f64,
    pub band_coverage: f64,
    pub outside_coverage: f64,
}

pub fn boresight_stats(report: &PebReport, boresight_phi_deg: f64, band_deg: f64) -> BoresightStats {
    let offs: Vec<f64> = report.grid.iter().map(|p| (p.phi.to_degrees() - boresight_phi_deg).abs()).collect();
    let mean = |sel: &dyn Fn(usize) -> bool| {
        let v: Vec<f64> = (0..offs.len()).filter(|&i| sel(i)).map(|i| offs[i]).collect();
        if v.is_empty() {
            f64::NAN
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    let frac = |sel: &dyn Fn(usize) -> bool| {
        let idx: Vec<usize> = (0..offs.len()).filter(|&i| sel(i)).collect();
        if idx.is_empty() {
            f64::NAN
        } else {
            idx.iter().filter(|&&i| report.satisfied[i]).count() as f64 / idx.len() as f64
        }
    };
    let covered = report.satisfied.iter().filter(|s| **s).count();
    BoresightStats {
        boresight_phi_deg,
        band_deg,
        covered,
        uncovered: report.satisfied.len() - covered,
        uncovered_mean_offset_deg: mean(&|i| !report.satisfied[i]),
        covered_mean_offset_deg: mean(&|i| report.satisfied[i]),
        band_coverage: frac(&|i| offs[i] <= band_deg),
        outside_coverage: frac(&|i| offs[i] > band_deg),
    }
}

pub struct PebMap {
    pub record: TrialRecord,
    pub report: PebReport,
    pub solution: IsacSolution,
    pub boresight: BoresightStats,
    pub shape: (usize, usize),
}

/// Optimise once (trial 0 of the master seed) and map the PEB over the coverage grid.
pub fn peb_map(cfg: &ScenarioConfig) -> Result<PebMap> {
    let sc = Scenario::new(cfg.clone())?;
    let out = sc.run_trial_full(0, trial_seed(cfg.seed, 0))?;
    let (Some(solution), Some(report)) = (out.solution, out.peb) else {
        return Err(Error::Solver(out.record.failure));
    };
    let boresight = boresight_stats(&report, cfg.hris.phi_deg, 10.0);
    Ok(PebMap {
        record: out.record,
        report,
        solution,
        boresight,
        shape: (cfg.coverage_grid[0], cfg.coverage_grid[1]),
    })
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

/// Design as CSV: `kind,index,re,im` rows for `v`, every `w_l` and `phi`.
pub fn design_csv(design: &HrisDesign) -> String {
    let mut s = String::from("kind,index,re,im\n");
    for (i, x) in design.v.iter().enumerate() {
        let _ = writeln!(s, "v,{i},{},{}", num(x.re), num(x.im));
    }
    for (l, b) in design.w_blocks.iter().enumerate() {
        for (m, x) in b.iter().enumerate() {
            let _ = writeln!(s, "w{l},{m},{},{}", num(x.re), num(x.im));
        }
    }
    for (i, p) in design.phi.iter().enumerate() {
        let _ = writeln!(s, "phi,{i},{},0", num(*p));
    }
    s
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Invariant self-checks on the initial design of trial 0.
pub fn self_checks(sc: &Scenario) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let mut push = |name: &str, passed: bool, detail: String| {
        out.push(Check {
            name: name.into(),
            passed,
            detail,
        })
    };
    let cfg = &sc.cfg;
    let (f0, f1) = crate::geometry::fresnel_bounds(&sc.model.hris, cfg.lambda())?;
    push(
        "aoi-in-fresnel",
        sc.aoi.r.0 >= f0 * (1.0 - 1e-12) && sc.aoi.r.1 <= f1 * (1.0 + 1e-12),
        format!("AoI r in [{:.4}, {:.4}], Fresnel [{f0:.4}, {f1:.4}]", sc.aoi.r.0, sc.aoi.r.1),
    );
    let inside = sc.q_points.iter().chain(&sc.coverage_grid).all(|p| sc.aoi.contains(p))
        && sc.steering.grid.within(sc.aoi.r, (sc.aoi.theta, sc.aoi.theta), sc.aoi.phi);
    push("grids-in-aoi", inside, format!("{} + {} + {} points", sc.q_points.len(), sc.coverage_grid.len(), sc.steering.grid.len()));

    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(cfg.seed, 0));
    let ch = sc.draw_channels(&mut rng)?;
    let ctx = DesignContext::new(&sc.model, &ch, &sc.q_points, sc.optimizer_config())?;
    let design = crate::optimizer::initial_design(&ctx)?;
    let ok = design.validate(cfg.p_max(), cfg.optimizer.phase_box.limit()).is_ok();
    push("initial-design", ok, format!("||v||^2 = {:.6e} W", design.v.norm_squared()));

    let probe = sc.aoi.centroid();
    let base = sc.sensing().with_rho(cfg.rho.min(0.5));
    let p1 = crate::sensing::peb(&crate::sensing::fim(&sc.model, &probe, &design, &base)?).value();
    let p2 = crate::sensing::peb(&crate::sensing::fim(&sc.model, &probe, &design, &base.with_rho(2.0 * base.rho))?).value();
    let (ok, detail) = match (p1, p2) {
        (Some(a), Some(b)) => ((b / a - 0.5).abs() <= 1e-9, format!("PEB(2 rho)/PEB(rho) = {:.12}", b / a)),
        _ => (false, "singular FIM at the AoI centroid".into()),
    };
    push("peb-scaling", ok, detail);

    let report = coverage(&sc.model, &sc.coverage_grid, &design, cfg.gamma_s, &sc.sensing())?;
    let amhm = report
        .fims
        .iter()
        .filter_map(|f| f.trace_inverse().map(|ti| ti * f.trace()))
        .fold(f64::INFINITY, f64::min);
    push("am-hm", amhm >= 9.0 * (1.0 - 1e-9), format!("min Tr(I^-1) Tr(I) = {amhm:.6e}"));

    let scale = sc.sensing().fim_scale();
    let mut worst: f64 = 0.0;
    for q in &sc.q_points {
        let lhs: f64 = crate::channel::Dim::ALL
            .iter()
            .map(|&d| crate::sensing::peb_constraint_lhs(&sc.model, q, d, &design))
            .sum::<Result<f64>>()?;
        let tr = crate::sensing::fim(&sc.model, q, &design, &sc.sensing())?.trace();
        worst = worst.max((lhs * scale - tr).abs() / tr.abs().max(f64::MIN_POSITIVE));
    }
    push("constraint-trace", worst <= 1e-10, format!("max relative mismatch {worst:.3e}"));
    Ok(out)
}

#[cfg(test)]
mod tests;
