//! Scenario configuration. Every field defaults to the paper profile, so a TOML
//! file only needs the overrides.

use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{ChannelModel, DerivativeMode, PhysicsConstants};
use crate::error::{Error, Result};
use crate::estimation::{MusicConfig, SubspaceRank};
use crate::geometry::{fresnel_bounds, Facing, RadiationProfile, SphericalCoord, UpaGeometry};
use crate::optimizer::CombinerConstraint;
use crate::signal::PhaseBox;
use crate::units::{dbm_to_watts, noise_power_dbm, wavelength};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BsConfig {
    pub rows: usize,
    pub cols: usize,
    /// Total antenna count; checked against `rows * cols` when given.
    pub n: Option<usize>,
    pub spacing_wavelengths: f64,
}

impl Default for BsConfig {
    fn default() -> Self {
        Self {
            rows: 2,
            cols: 8,
            n: None,
            spacing_wavelengths: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HrisConfig {
    /// Meta-atoms per RF chain (array rows).
    pub m_e: usize,
    /// RF chains (array columns).
    pub m_rf: usize,
    /// Total meta-atoms; checked against `m_e * m_rf` when given.
    pub m: Option<usize>,
    pub spacing_wavelengths: f64,
    pub r: f64,
    pub theta_deg: f64,
    pub phi_deg: f64,
}

impl Default for HrisConfig {
    fn default() -> Self {
        Self {
            m_e: 64,
            m_rf: 4,
            m: None,
            spacing_wavelengths: 0.5,
            r: 8.0,
            theta_deg: 30.0,
            phi_deg: 60.0,
        }
    }
}

/// Placement of the `Q` constraint points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum QLayout {
    /// Equispaced in azimuth at mid-range.
    #[default]
    Azimuth,
    /// Product grid with `q_r` range rows; `Q` must be a multiple of `q_r`.
    Grid { q_r: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AoiConfig {
    pub theta_deg: f64,
    pub phi_min_deg: f64,
    pub phi_max_deg: f64,
    /// Range limits; the HRIS Fresnel interval when absent.
    pub r_min: Option<f64>,
    pub r_max: Option<f64>,
    pub q_layout: QLayout,
}

impl Default for AoiConfig {
    fn default() -> Self {
        Self {
            theta_deg: 30.0,
            phi_min_deg: 20.0,
            phi_max_deg: 80.0,
            r_min: None,
            r_max: None,
            q_layout: QLayout::Azimuth,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSettings {
    pub max_iters: usize,
    pub tol: f64,
    pub restarts: usize,
    pub combiner_constraint: CombinerConstraint,
    pub phase_box: PhaseBox,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            max_iters: 30,
            tol: 1e-4,
            restarts: 0,
            combiner_constraint: CombinerConstraint::WithFixedBlocks,
            phase_box: PhaseBox::Half,
        }
    }
}

/// Which combiner the HRIS uses while collecting the estimation block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum EstimationCombiner {
    #[default]
    Optimized,
    Ones,
    /// Uniform random phases drawn from the trial stream.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimationSettings {
    pub grid_phi: usize,
    pub grid_r: usize,
    pub rank: SubspaceRank,
    pub normalize: bool,
    pub refine: bool,
    pub min_separation: usize,
    pub combiner: EstimationCombiner,
    /// Whether the UE reflects (`beta_UE != 0`) and so appears in the spectrum.
    pub ue_reflects: bool,
    /// Drop the receiver noise from the estimation block.
    pub noiseless: bool,
    /// Draw UE and targets on MUSIC grid nodes.
    pub on_grid: bool,
}

impl Default for EstimationSettings {
    fn default() -> Self {
        let m = MusicConfig::default();
        Self {
            grid_phi: 120,
            grid_r: 60,
            rank: m.rank,
            normalize: m.normalize,
            refine: m.refine,
            min_separation: m.min_separation,
            combiner: EstimationCombiner::Optimized,
            ue_reflects: true,
            noiseless: false,
            on_grid: false,
        }
    }
}

impl EstimationSettings {
    pub fn music(&self) -> MusicConfig {
        MusicConfig {
            rank: self.rank,
            normalize: self.normalize,
            refine: self.refine,
            min_separation: self.min_separation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub noise_figure_db: f64,
    /// Transmissions per coherence block (`T`).
    pub snapshots: usize,
    pub kappa_abs: f64,
    pub radiation_b: f64,
    pub bs: BsConfig,
    pub hris: HrisConfig,
    pub aoi: AoiConfig,
    pub rho: f64,
    pub p_max_dbm: f64,
    pub gamma_s: f64,
    pub q: usize,
    pub k_targets: usize,
    pub trials: usize,
    pub seed: u64,
    /// Coverage grid as `[n_phi, n_r]`.
    pub coverage_grid: [usize; 2],
    /// Relative NMSE of the CSI handed to the optimizer; 0 gives perfect CSI.
    pub csi_error: f64,
    pub optimizer: OptimizerSettings,
    pub estimation: EstimationSettings,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::paper()
    }
}

impl ScenarioConfig {
    /// Reference scenario: 2x8 BS, 64x4 HRIS at 8 m, 120 GHz, 16 dBm.
    pub fn paper() -> Self {
        Self {
            carrier_hz: 120e9,
            bandwidth_hz: 150e3,
            noise_figure_db: 0.0,
            snapshots: 200,
            kappa_abs: 0.0075,
            radiation_b: RadiationProfile::default().b,
            bs: BsConfig::default(),
            hris: HrisConfig::default(),
            aoi: AoiConfig::default(),
            rho: 0.2,
            p_max_dbm: 16.0,
            gamma_s: 1e-3,
            q: 5,
            k_targets: 2,
            trials: 50,
            seed: 1,
            coverage_grid: [40, 25],
            csi_error: 0.0,
            optimizer: OptimizerSettings::default(),
            estimation: EstimationSettings::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn lambda(&self) -> f64 {
        wavelength(self.carrier_hz)
    }

    pub fn p_max(&self) -> f64 {
        dbm_to_watts(self.p_max_dbm)
    }

    pub fn sigma2(&self) -> f64 {
        dbm_to_watts(noise_power_dbm(self.bandwidth_hz, self.noise_figure_db))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.carrier_hz > 0.0 && self.carrier_hz.is_finite()) {
            return bad(format!("carrier must be positive, got {}", self.carrier_hz));
        }
        if !(self.bandwidth_hz > 0.0 && self.bandwidth_hz.is_finite()) {
            return bad(format!("bandwidth must be positive, got {}", self.bandwidth_hz));
        }
        if !self.noise_figure_db.is_finite() || !self.p_max_dbm.is_finite() {
            return bad("noise figure and P_max must be finite".into());
        }
        if let Some(n) = self.bs.n {
            if n != self.bs.rows * self.bs.cols {
                return bad(format!("N = {n} but the BS array is {}x{}", self.bs.rows, self.bs.cols));
            }
        }
        if let Some(m) = self.hris.m {
            if m != self.hris.m_e * self.hris.m_rf {
                return bad(format!("M = {m} but M_E x M_RF = {}x{}", self.hris.m_e, self.hris.m_rf));
            }
        }
        if self.bs.rows * self.bs.cols == 0 || self.hris.m_e * self.hris.m_rf == 0 {
            return bad("arrays need at least one element".into());
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return bad(format!("rho must lie in (0, 1], got {}", self.rho));
        }
        if !(self.gamma_s > 0.0) {
            return bad(format!("gamma_s must be positive, got {}", self.gamma_s));
        }
        if self.snapshots < self.hris.m_rf {
            return bad(format!("T = {} is smaller than M_RF = {}", self.snapshots, self.hris.m_rf));
        }
        let sources = self.k_targets + usize::from(self.estimation.ue_reflects);
        if self.k_targets > 0 && sources >= self.hris.m_rf {
            return bad(format!("{sources} sources need more than M_RF = {} chains", self.hris.m_rf));
        }
        if self.trials == 0 {
            return bad("trials must be >= 1".into());
        }
        if self.coverage_grid.contains(&0) || self.estimation.grid_phi == 0 || self.estimation.grid_r == 0 {
            return bad("grids must be non-empty".into());
        }
        if !(self.csi_error >= 0.0 && self.csi_error.is_finite()) {
            return bad(format!("csi_error must be >= 0, got {}", self.csi_error));
        }
        if let QLayout::Grid { q_r } = self.aoi.q_layout {
            if q_r == 0 || self.q % q_r != 0 {
                return bad(format!("Q = {} is not a multiple of q_r = {q_r}", self.q));
            }
        }
        if !(self.aoi.phi_min_deg < self.aoi.phi_max_deg) {
            return bad("empty AoI azimuth interval".into());
        }
        if !(0.0..=180.0).contains(&self.aoi.theta_deg) {
            return bad(format!("AoI polar angle {} outside [0, 180]", self.aoi.theta_deg));
        }
        self.aoi()?;
        Ok(())
    }

    pub fn bs_geometry(&self) -> Result<UpaGeometry> {
        UpaGeometry::new(
            self.bs.rows,
            self.bs.cols,
            self.bs.spacing_wavelengths * self.lambda(),
            Vector3::zeros(),
            Facing::PlusY,
        )
    }

    pub fn hris_geometry(&self) -> Result<UpaGeometry> {
        let h = &self.hris;
        let at = SphericalCoord::from_degrees(h.r, h.theta_deg, h.phi_deg)?.to_cartesian();
        UpaGeometry::new(h.m_e, h.m_rf, h.spacing_wavelengths * self.lambda(), at, Facing::MinusY)
    }

    pub fn model(&self) -> Result<ChannelModel> {
        Ok(ChannelModel::new(
            PhysicsConstants::new(self.carrier_hz, self.kappa_abs)?,
            RadiationProfile::new(self.radiation_b)?,
            self.bs_geometry()?,
            self.hris_geometry()?,
            DerivativeMode::Full,
        ))
    }

    pub fn aoi(&self) -> Result<Aoi> {
        let (f0, f1) = fresnel_bounds(&self.hris_geometry()?, self.lambda())?;
        let r = (self.aoi.r_min.unwrap_or(f0), self.aoi.r_max.unwrap_or(f1));
        if !(r.0 > 0.0 && r.0 < r.1 && r.1.is_finite()) {
            return Err(Error::InvalidConfig(format!("empty AoI range interval [{}, {}]", r.0, r.1)));
        }
        let phi = (self.aoi.phi_min_deg.to_radians(), self.aoi.phi_max_deg.to_radians());
        SphericalCoord::new(r.0, self.aoi.theta_deg.to_radians(), phi.0)?;
        SphericalCoord::new(r.1, self.aoi.theta_deg.to_radians(), phi.1)?;
        Ok(Aoi {
            r,
            theta: self.aoi.theta_deg.to_radians(),
            phi,
        })
    }
}

/// Fixed-elevation AoI slice `[r0, r1] x {theta} x [phi0, phi1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aoi {
    pub r: (f64, f64),
    pub theta: f64,
    pub phi: (f64, f64),
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (a + b)];
    }
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

impl Aoi {
    pub fn contains(&self, p: &SphericalCoord) -> bool {
        let tol = 1e-9;
        p.r >= self.r.0 * (1.0 - tol)
            && p.r <= self.r.1 * (1.0 + tol)
            && (p.theta - self.theta).abs() <= tol
            && p.phi >= self.phi.0 - tol
            && p.phi <= self.phi.1 + tol
    }

    pub fn centroid(&self) -> SphericalCoord {
        SphericalCoord {
            r: 0.5 * (self.r.0 + self.r.1),
            theta: self.theta,
            phi: 0.5 * (self.phi.0 + self.phi.1),
        }
    }

    /// Product grid, azimuth-major, endpoints included.
    pub fn product_grid(&self, n_phi: usize, n_r: usize) -> Vec<SphericalCoord> {
        let rs = linspace(self.r.0, self.r.1, n_r);
        linspace(self.phi.0, self.phi.1, n_phi)
            .into_iter()
            .flat_map(|phi| rs.iter().map(move |&r| SphericalCoord { r, theta: self.theta, phi }))
            .collect()
    }

    /// Largest distance between two AoI points (boundary sampled at 0.1 degree / 1 mm).
    pub fn diameter(&self) -> f64 {
        let n_phi = ((self.phi.1 - self.phi.0).to_degrees() * 10.0).ceil().max(2.0) as usize;
        let n_r = ((self.r.1 - self.r.0) * 1e3).ceil().max(2.0) as usize;
        let mut boundary = Vec::new();
        for &r in &[self.r.0, self.r.1] {
            boundary.extend(linspace(self.phi.0, self.phi.1, n_phi).into_iter().map(|phi| (r, phi)));
        }
        for &phi in &[self.phi.0, self.phi.1] {
            boundary.extend(linspace(self.r.0, self.r.1, n_r.min(200)).into_iter().map(|r| (r, phi)));
        }
        let pts: Vec<_> = boundary
            .into_iter()
            .map(|(r, phi)| SphericalCoord { r, theta: self.theta, phi }.to_cartesian())
            .collect();
        let mut best: f64 = 0.0;
        for (i, a) in pts.iter().enumerate() {
            for b in &pts[i + 1..] {
                best = best.max((a - b).norm());
            }
        }
        best
    }
}

/// `Q` constraint points: equispaced azimuths at mid-range, or a product grid.
pub fn discretize_aoi(aoi: &Aoi, n_points: usize, layout: QLayout) -> Result<Vec<SphericalCoord>> {
    if n_points == 0 {
        return Err(Error::EmptyGrid("AoI discretisation"));
    }
    match layout {
        QLayout::Azimuth => {
            let r = 0.5 * (aoi.r.0 + aoi.r.1);
            Ok(linspace(aoi.phi.0, aoi.phi.1, n_points)
                .into_iter()
                .map(|phi| SphericalCoord { r, theta: aoi.theta, phi })
                .collect())
        }
        QLayout::Grid { q_r } => {
            if q_r == 0 || n_points % q_r != 0 {
                return Err(Error::InvalidConfig(format!("{n_points} points do not split into {q_r} rows")));
            }
            Ok(aoi.product_grid(n_points / q_r, q_r))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn aoi() -> Aoi {
        ScenarioConfig::paper().aoi().unwrap()
    }

    #[test]
    fn paper_profile_values() {
        let c = ScenarioConfig::paper();
        c.validate().unwrap();
        assert_relative_eq!(c.sigma2(), 5.97e-16, max_relative = 2e-3);
        assert_relative_eq!(c.p_max(), 0.0398, max_relative = 1e-3);
        let a = c.aoi().unwrap();
        assert_relative_eq!(a.r.0, 0.2743, epsilon = 1e-4);
        assert_relative_eq!(a.r.1, 4.969, epsilon = 1e-3);
        assert_eq!(c.coverage_grid[0] * c.coverage_grid[1], 1000);
    }

    #[test]
    fn single_point_is_the_centroid() {
        let a = aoi();
        let p = discretize_aoi(&a, 1, QLayout::Azimuth).unwrap();
        assert_eq!(p, vec![a.centroid()]);
    }

    #[test]
    fn five_points_equispaced_in_azimuth() {
        let a = aoi();
        let p = discretize_aoi(&a, 5, QLayout::Azimuth).unwrap();
        let deg: Vec<f64> = p.iter().map(|p| p.phi.to_degrees()).collect();
        for (d, want) in deg.iter().zip([20.0, 35.0, 50.0, 65.0, 80.0]) {
            assert_relative_eq!(*d, want, epsilon = 1e-12);
        }
        for q in &p {
            assert_relative_eq!(q.r, 0.5 * (a.r.0 + a.r.1), epsilon = 1e-15);
        }
    }

    #[test]
    fn grids_stay_inside_fresnel_bounds() {
        let a = aoi();
        let c = ScenarioConfig::paper();
        let (f0, f1) = fresnel_bounds(&c.hris_geometry().unwrap(), c.lambda()).unwrap();
        let mut all = discretize_aoi(&a, 15, QLayout::Azimuth).unwrap();
        all.extend(discretize_aoi(&a, 12, QLayout::Grid { q_r: 3 }).unwrap());
        all.extend(a.product_grid(40, 25));
        for p in &all {
            assert!(a.contains(p));
            assert!(p.r >= f0 - 1e-12 && p.r <= f1 + 1e-12);
        }
        assert!(discretize_aoi(&a, 0, QLayout::Azimuth).is_err());
        assert!(discretize_aoi(&a, 5, QLayout::Grid { q_r: 2 }).is_err());
    }

    #[test]
    fn diameter_of_a_ring_sector() {
        // theta = 90 deg puts the slice in the xy plane: a 90 degree sector of radius 2
        let a = Aoi {
            r: (1.0, 2.0),
            theta: std::f64::consts::FRAC_PI_2,
            phi: (0.0, std::f64::consts::FRAC_PI_2),
        };
        assert_relative_eq!(a.diameter(), 2.0 * 2f64.sqrt(), epsilon = 1e-9);
    }

    #[test]
    fn toml_overrides_and_round_trip() {
        let c = ScenarioConfig::from_toml("rho = 0.5\n[hris]\nm_e = 16\n").unwrap();
        assert_eq!(c.rho, 0.5);
        assert_eq!(c.hris.m_e, 16);
        assert_eq!(c.hris.m_rf, 4);
        let back = ScenarioConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
        assert_ne!(c.hash(), ScenarioConfig::paper().hash());
    }

    #[test]
    fn infinite_threshold_round_trips() {
        let c = ScenarioConfig::from_toml("gamma_s = inf\n").unwrap();
        assert!(c.gamma_s.is_infinite());
        assert_eq!(ScenarioConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn inconsistent_configs_rejected() {
        for bad in [
            "[hris]\nm = 100\n",
            "[bs]\nn = 15\n",
            "rho = 0.0\n",
            "rho = 1.5\n",
            "k_targets = 3\n",
            "snapshots = 2\n",
            "trials = 0\n",
            "unknown = 1\n",
            "coverage_grid = [0, 25]\n",
            "[aoi]\nphi_min_deg = 80.0\nphi_max_deg = 20.0\n",
            "[aoi]\nr_min = 3.0\nr_max = 2.0\n",
            "q = 5\n[aoi]\nq_layout = { grid = { q_r = 2 } }\n",
        ] {
            assert!(ScenarioConfig::from_toml(bad).is_err(), "{bad}");
        }
        assert!(ScenarioConfig::from_toml("k_targets = 3\n[estimation]\nue_reflects = false\n").is_ok());
    }
}
