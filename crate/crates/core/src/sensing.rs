//! Fisher information, position error bound and AoI coverage.
//!
//! For a probe with reflection coefficient `beta` at `zeta = (r, theta, phi)`,
//! the sensed mean is `rho W^H H_R(zeta) v s`. With unit-power pilots the FIM is
//!
//! ```text
//! I_ij = (2 T / sigma2) Re{ d_i^H d_j },   d_i = rho W^H (dH_R / dzeta_i) v
//! ```

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DVector, Matrix3, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelModel, Dim, PointResponse};
use crate::error::{Error, Result};
use crate::geometry::SphericalCoord;
use crate::signal::{combine, HrisDesign};

/// Relative eigenvalue floor below which a FIM is declared singular.
pub const SINGULAR_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensingParams {
    pub rho: f64,
    pub sigma2: f64,
    pub snapshots: usize,
}

impl SensingParams {
    /// `2 rho^2 T / sigma2`.
    pub fn fim_scale(&self) -> f64 {
        2.0 * self.rho * self.rho * self.snapshots as f64 / self.sigma2
    }

    /// `sigma2 / (2 rho^2 T)`: the per-unit-`t` right-hand side of the trace bound.
    pub fn kappa(&self) -> f64 {
        self.sigma2 / (2.0 * self.rho * self.rho * self.snapshots as f64)
    }

    pub fn with_rho(&self, rho: f64) -> Self {
        Self { rho, ..*self }
    }
}

/// 3x3 FIM in `(r, theta, phi)` order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fim3(pub Matrix3<f64>);

impl Fim3 {
    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn eigenvalues(&self) -> [f64; 3] {
        let e = SymmetricEigen::new(self.0).eigenvalues;
        let mut v = [e[0], e[1], e[2]];
        v.sort_by(|a, b| a.total_cmp(b));
        v
    }

    pub fn is_singular(&self) -> bool {
        let tr = self.trace();
        !(tr > 0.0) || self.eigenvalues()[0] <= SINGULAR_EPS * tr
    }

    /// `Tr(I^-1)`, or `None` when singular.
    pub fn trace_inverse(&self) -> Option<f64> {
        if self.is_singular() {
            return None;
        }
        Some(self.eigenvalues().iter().map(|l| 1.0 / l).sum())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PebValue {
    Finite(f64),
    Singular,
}

impl PebValue {
    pub fn value(self) -> Option<f64> {
        match self {
            PebValue::Finite(v) => Some(v),
            PebValue::Singular => None,
        }
    }

    pub fn meets(self, gamma_s: f64) -> bool {
        match self {
            PebValue::Finite(v) => v <= gamma_s,
            PebValue::Singular => gamma_s == f64::INFINITY,
        }
    }
}

/// `PEB = sqrt(Tr(I^-1))`.
pub fn peb(f: &Fim3) -> PebValue {
    match f.trace_inverse() {
        Some(t) => PebValue::Finite(t.sqrt()),
        None => PebValue::Singular,
    }
}

/// `dH_R/dzeta_i v` for a probe with coefficient `beta`, i = r, theta, phi.
pub fn derivative_products(resp: &PointResponse, v: &DVector<Complex64>, beta: Complex64) -> [DVector<Complex64>; 3] {
    let tx_v = resp.a_tx.dotc(v) * beta;
    std::array::from_fn(|i| {
        let dtx_v = resp.d_tx[i].dotc(v) * beta;
        resp.d_rx[i].map(|x| x * tx_v) + resp.a_rx.map(|x| x * dtx_v)
    })
}

/// `W^H dH_R/dzeta_i v` (without the `rho` factor).
pub fn combined_derivatives(
    resp: &PointResponse,
    design: &HrisDesign,
    beta: Complex64,
) -> [DVector<Complex64>; 3] {
    derivative_products(resp, &design.v, beta).map(|x| combine(&design.w_blocks, &x))
}

fn fim_from_combined(d: &[DVector<Complex64>; 3], params: &SensingParams) -> Result<Fim3> {
    let scale = params.fim_scale();
    let mut m = Matrix3::zeros();
    for i in 0..3 {
        for j in i..3 {
            let e = scale * d[i].dotc(&d[j]).re;
            if !e.is_finite() {
                return Err(Error::NonFinite("FIM entry"));
            }
            m[(i, j)] = e;
            m[(j, i)] = e;
        }
    }
    Ok(Fim3(m))
}

/// FIM of a probe with coefficient `beta` at `p` under `design`.
pub fn fim_with_beta(
    model: &ChannelModel,
    p: &SphericalCoord,
    beta: Complex64,
    design: &HrisDesign,
    params: &SensingParams,
) -> Result<Fim3> {
    let resp = model.point_response(p)?;
    fim_from_combined(&combined_derivatives(&resp, design, beta), params)
}

/// FIM of a unit-amplitude probe at `p`.
pub fn fim(model: &ChannelModel, p: &SphericalCoord, design: &HrisDesign, params: &SensingParams) -> Result<Fim3> {
    fim_with_beta(model, p, Complex64::new(1.0, 0.0), design, params)
}

/// `|| W^H dH_R/dzeta_i v ||^2` for a unit-amplitude probe; compared against `t sigma2 / (2 rho^2 T)`.
pub fn peb_constraint_lhs(model: &ChannelModel, q: &SphericalCoord, dim: Dim, design: &HrisDesign) -> Result<f64> {
    let resp = model.point_response(q)?;
    let d = combined_derivatives(&resp, design, Complex64::new(1.0, 0.0));
    Ok(d[dim.index()].norm_squared())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PebReport {
    pub grid: Vec<SphericalCoord>,
    pub fims: Vec<Fim3>,
    pub peb: Vec<PebValue>,
    pub satisfied: Vec<bool>,
    pub coverage: f64,
    pub gamma_s: f64,
}

impl PebReport {
    pub fn singular_count(&self) -> usize {
        self.peb.iter().filter(|p| matches!(p, PebValue::Singular)).count()
    }

    /// Columns `r, theta_deg, phi_deg, peb, satisfied`; singular points print `inf`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("r,theta_deg,phi_deg,peb,satisfied\n");
        for ((p, v), ok) in self.grid.iter().zip(&self.peb).zip(&self.satisfied) {
            let peb = match v {
                PebValue::Finite(x) => format!("{x:.9e}"),
                PebValue::Singular => "inf".into(),
            };
            let _ = writeln!(
                s,
                "{:.9},{:.9},{:.9},{},{}",
                p.r,
                p.theta.to_degrees(),
                p.phi.to_degrees(),
                peb,
                ok
            );
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// PEB of a unit-amplitude probe at every grid point, thresholded at `gamma_s`.
pub fn coverage(
    model: &ChannelModel,
    grid: &[SphericalCoord],
    design: &HrisDesign,
    gamma_s: f64,
    params: &SensingParams,
) -> Result<PebReport> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid("coverage grid"));
    }
    let fims = crate::par::map(grid, |p| fim(model, p, design, params))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(report_from_fims(grid.to_vec(), fims, gamma_s))
}

pub fn report_from_fims(grid: Vec<SphericalCoord>, fims: Vec<Fim3>, gamma_s: f64) -> PebReport {
    let peb: Vec<PebValue> = fims.iter().map(peb).collect();
    let satisfied: Vec<bool> = peb.iter().map(|p| p.meets(gamma_s)).collect();
    let coverage = satisfied.iter().filter(|s| **s).count() as f64 / satisfied.len().max(1) as f64;
    PebReport {
        grid,
        fims,
        peb,
        satisfied,
        coverage,
        gamma_s,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{DerivativeMode, PhysicsConstants};
    use crate::geometry::{Facing, RadiationProfile, UpaGeometry};
    use crate::signal::complex_gaussian;
    use approx::assert_relative_eq;
    use nalgebra::Vector3;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn toy_model() -> ChannelModel {
        let p = PhysicsConstants::new(120e9, 0.0075).unwrap();
        let s = p.lambda / 2.0;
        let bs = UpaGeometry::new(2, 2, s, Vector3::zeros(), Facing::PlusY).unwrap();
        let origin = SphericalCoord::from_degrees(8.0, 30.0, 60.0).unwrap().to_cartesian();
        let hris = UpaGeometry::new(8, 2, s, origin, Facing::MinusY).unwrap();
        ChannelModel::new(p, RadiationProfile::default(), bs, hris, DerivativeMode::Full)
    }

    fn params(rho: f64) -> SensingParams {
        SensingParams {
            rho,
            sigma2: 5.97e-16,
            snapshots: 200,
        }
    }

    fn random_design(rng: &mut ChaCha8Rng) -> HrisDesign {
        let v = DVector::from_fn(4, |_, _| complex_gaussian(rng, 0.01));
        let mut d = HrisDesign::initial(v, 2, 8);
        for b in d.w_blocks.iter_mut() {
            for w in b.iter_mut() {
                *w = Complex64::from_polar(1.0, rng.gen_range(-PI..PI));
            }
        }
        d
    }

    fn random_point(rng: &mut ChaCha8Rng) -> SphericalCoord {
        SphericalCoord::from_degrees(rng.gen_range(0.3..4.9), 30.0, rng.gen_range(20.0..80.0)).unwrap()
    }

    #[test]
    fn peb_examples() {
        assert_relative_eq!(peb(&Fim3(Matrix3::identity())).value().unwrap(), 3f64.sqrt(), epsilon = 1e-15);
        let d = Fim3(Matrix3::from_diagonal(&Vector3::new(4.0, 1.0, 1.0)));
        assert_relative_eq!(peb(&d).value().unwrap(), 1.5, epsilon = 1e-15);
        let base = Fim3(Matrix3::new(3.0, 0.5, 0.1, 0.5, 2.0, 0.2, 0.1, 0.2, 1.0));
        let scaled = Fim3(base.0 * 4.0);
        assert_relative_eq!(
            peb(&scaled).value().unwrap(),
            peb(&base).value().unwrap() / 2.0,
            max_relative = 1e-14
        );
        assert_eq!(peb(&Fim3(Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, 0.0)))), PebValue::Singular);
        assert_eq!(peb(&Fim3(Matrix3::zeros())), PebValue::Singular);
    }

    #[test]
    fn rho_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = toy_model();
        let design = random_design(&mut rng);
        let p = random_point(&mut rng);
        let a = fim(&model, &p, &design, &params(0.2)).unwrap();
        let b = fim(&model, &p, &design, &params(0.4)).unwrap();
        for (x, y) in a.0.iter().zip(b.0.iter()) {
            assert_relative_eq!(*y, 4.0 * x, max_relative = 1e-13);
        }
        let ratio = peb(&b).value().unwrap() / peb(&a).value().unwrap();
        assert_relative_eq!(ratio, 0.5, max_relative = 1e-9);
    }

    #[test]
    fn zero_beamformer_gives_zero_fim() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let model = toy_model();
        let mut design = random_design(&mut rng);
        design.v.fill(Complex64::new(0.0, 0.0));
        let p = random_point(&mut rng);
        assert_eq!(fim(&model, &p, &design, &params(0.5)).unwrap().0, Matrix3::zeros());
        assert_eq!(peb_constraint_lhs(&model, &p, Dim::Range, &design).unwrap(), 0.0);
    }

    #[test]
    fn fim_is_symmetric_psd_and_am_hm() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = toy_model();
        for _ in 0..1000 {
            let design = random_design(&mut rng);
            let p = random_point(&mut rng);
            let f = fim(&model, &p, &design, &params(rng.gen_range(0.05..1.0))).unwrap();
            assert_eq!(f.0, f.0.transpose());
            let ev = f.eigenvalues();
            assert!(ev[0] >= -1e-10 * f.trace());
            if let Some(ti) = f.trace_inverse() {
                assert!(ti * f.trace() >= 9.0 * (1.0 - 1e-9));
            }
        }
    }

    #[test]
    fn trace_bound_consistency() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let model = toy_model();
        for _ in 0..100 {
            let design = random_design(&mut rng);
            let p = random_point(&mut rng);
            let prm = params(rng.gen_range(0.05..1.0));
            let f = fim(&model, &p, &design, &prm).unwrap();
            let sum: f64 = Dim::ALL
                .iter()
                .map(|&d| peb_constraint_lhs(&model, &p, d, &design).unwrap())
                .sum();
            assert_relative_eq!(sum * prm.fim_scale(), f.trace(), max_relative = 1e-10);
        }
    }

    #[test]
    fn coverage_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let model = toy_model();
        let design = random_design(&mut rng);
        let grid: Vec<_> = (0..20).map(|_| random_point(&mut rng)).collect();
        let all = coverage(&model, &grid, &design, f64::INFINITY, &params(0.2)).unwrap();
        assert_eq!(all.coverage, 1.0);
        let none = coverage(&model, &grid, &design, 0.0, &params(0.2)).unwrap();
        assert_eq!(none.coverage, 0.0);
        assert!(coverage(&model, &[], &design, 1.0, &params(0.2)).is_err());
        let csv = all.to_csv();
        assert_eq!(csv.lines().count(), 21);
        assert!(csv.starts_with("r,theta_deg,phi_deg,peb,satisfied"));
    }

    #[test]
    fn coverage_monotone_in_rho() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let model = toy_model();
        let design = random_design(&mut rng);
        let grid: Vec<_> = (0..50).map(|_| random_point(&mut rng)).collect();
        let pebs: Vec<f64> = coverage(&model, &grid, &design, f64::INFINITY, &params(0.5))
            .unwrap()
            .peb
            .iter()
            .filter_map(|p| p.value())
            .collect();
        let mut sorted = pebs.clone();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let gamma = sorted[sorted.len() / 2];
        let mut last = 0.0;
        for rho in [0.1, 0.2, 0.4, 0.6, 0.8, 1.0] {
            let c = coverage(&model, &grid, &design, gamma, &params(rho)).unwrap().coverage;
            assert!(c >= last);
            last = c;
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn lhs_is_phase_invariant(seed in any::<u64>(), c in -PI..PI) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let model = toy_model();
            let design = random_design(&mut rng);
            let mut rotated = design.clone();
            rotated.v *= Complex64::from_polar(1.0, c);
            let p = random_point(&mut rng);
            for d in Dim::ALL {
                let a = peb_constraint_lhs(&model, &p, d, &design).unwrap();
                let b = peb_constraint_lhs(&model, &p, d, &rotated).unwrap();
                prop_assert!((a - b).abs() <= 1e-12 * a);
            }
        }

        #[test]
        fn peb_scales_inverse_linearly_in_rho(seed in any::<u64>(), rho in 0.05f64..0.5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let model = toy_model();
            let design = random_design(&mut rng);
            let p = random_point(&mut rng);
            let a = peb(&fim(&model, &p, &design, &params(rho)).unwrap());
            let b = peb(&fim(&model, &p, &design, &params(2.0 * rho)).unwrap());
            if let (Some(a), Some(b)) = (a.value(), b.value()) {
                prop_assert!((b / a - 0.5).abs() <= 1e-9);
            }
        }
    }
}
