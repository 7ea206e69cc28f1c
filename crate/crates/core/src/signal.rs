//! Power-splitting transmit/receive models and the downlink rate.
//!
//! Row vectors (`h_BU`, `h_RU`, `h_DL`) are held as [`DVector`]s carrying the
//! row entries; `h v` is the plain (non-conjugating) product.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `| |w| - 1 |` accepted for combiner weights.
pub const UNIT_MODULUS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct HrisDesign {
    pub v: DVector<Complex64>,
    /// One `M_E`-vector per RF chain: the nonzero entries of column `l` of `W`.
    pub w_blocks: Vec<DVector<Complex64>>,
    pub phi: DVector<f64>,
}

impl HrisDesign {
    /// Initial design: all-ones combiner, zero phases and the given beamformer.
    pub fn initial(v: DVector<Complex64>, m_rf: usize, m_e: usize) -> Self {
        Self {
            v,
            w_blocks: vec![DVector::from_element(m_e, Complex64::new(1.0, 0.0)); m_rf],
            phi: DVector::zeros(m_rf * m_e),
        }
    }

    pub fn m_rf(&self) -> usize {
        self.w_blocks.len()
    }

    pub fn m_e(&self) -> usize {
        self.w_blocks.first().map_or(0, |b| b.len())
    }

    pub fn combiner(&self) -> Result<DMatrix<Complex64>> {
        assemble_combiner(&self.w_blocks)
    }

    /// Check power, unit-modulus and phase-box invariants.
    pub fn validate(&self, p_max: f64, phase_limit: f64) -> Result<()> {
        let power = self.v.norm_squared();
        if !power.is_finite() {
            return Err(Error::NonFinite("beamformer"));
        }
        if power > p_max * (1.0 + 1e-9) {
            return Err(Error::InvalidConfig(format!("beamformer power {power} exceeds {p_max}")));
        }
        check_blocks(&self.w_blocks)?;
        if self.phi.len() != self.m_rf() * self.m_e() {
            return Err(Error::ShapeMismatch(format!(
                "{} phases for {} elements",
                self.phi.len(),
                self.m_rf() * self.m_e()
            )));
        }
        if let Some(p) = self.phi.iter().find(|p| !(p.abs() <= phase_limit + 1e-12)) {
            return Err(Error::InvalidConfig(format!("reflection phase {p} outside +-{phase_limit}")));
        }
        Ok(())
    }
}

/// Allowed reflection phase interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PhaseBox {
    /// `[-pi/2, pi/2]`.
    #[default]
    Half,
    /// `[-pi, pi]`.
    Full,
}

impl PhaseBox {
    pub fn limit(self) -> f64 {
        match self {
            PhaseBox::Half => FRAC_PI_2,
            PhaseBox::Full => PI,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatio(f64);

impl SplitRatio {
    pub fn new(rho: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::InvalidConfig(format!("split ratio must lie in [0, 1], got {rho}")));
        }
        Ok(Self(rho))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub sigma2: f64,
}

impl NoiseModel {
    pub fn new(sigma2: f64) -> Result<Self> {
        if !(sigma2.is_finite() && sigma2 >= 0.0) {
            return Err(Error::InvalidConfig(format!("noise variance must be >= 0, got {sigma2}")));
        }
        Ok(Self { sigma2 })
    }

    /// Thermal noise over `bandwidth_hz` plus a receiver noise figure.
    pub fn thermal(bandwidth_hz: f64, noise_figure_db: f64) -> Result<Self> {
        if !(bandwidth_hz.is_finite() && bandwidth_hz > 0.0) {
            return Err(Error::InvalidConfig(format!("bandwidth must be positive, got {bandwidth_hz}")));
        }
        Self::new(crate::units::dbm_to_watts(crate::units::noise_power_dbm(
            bandwidth_hz,
            noise_figure_db,
        )))
    }

    /// One circularly-symmetric complex Gaussian draw with variance `sigma2`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Complex64 {
        complex_gaussian(rng, self.sigma2)
    }
}

pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * s, im * s)
}

fn check_blocks(w_blocks: &[DVector<Complex64>]) -> Result<()> {
    let m_e = w_blocks.first().map_or(0, |b| b.len());
    if m_e == 0 {
        return Err(Error::ShapeMismatch("combiner needs at least one non-empty block".into()));
    }
    for (l, b) in w_blocks.iter().enumerate() {
        if b.len() != m_e {
            return Err(Error::ShapeMismatch(format!("block {l} has {} entries, expected {m_e}", b.len())));
        }
        for (m, w) in b.iter().enumerate() {
            let modulus = w.norm();
            if !((modulus - 1.0).abs() <= UNIT_MODULUS_TOL) {
                return Err(Error::NonUnitModulus {
                    block: l,
                    index: m,
                    modulus,
                });
            }
        }
    }
    Ok(())
}

/// Block-column combiner: `W[l*M_E + m, l] = w_{l,m}`, zero elsewhere.
pub fn assemble_combiner(w_blocks: &[DVector<Complex64>]) -> Result<DMatrix<Complex64>> {
    check_blocks(w_blocks)?;
    let m_e = w_blocks[0].len();
    let mut w = DMatrix::zeros(m_e * w_blocks.len(), w_blocks.len());
    for (l, b) in w_blocks.iter().enumerate() {
        w.view_mut((l * m_e, l), (m_e, 1)).copy_from(b);
    }
    Ok(w)
}

/// `W^H x` without forming `W`.
pub fn combine(w_blocks: &[DVector<Complex64>], x: &DVector<Complex64>) -> DVector<Complex64> {
    let m_e = w_blocks.first().map_or(0, |b| b.len());
    DVector::from_iterator(
        w_blocks.len(),
        w_blocks.iter().enumerate().map(|(l, b)| b.dotc(&x.rows(l * m_e, m_e))),
    )
}

/// Reflected-path coefficients `(1 - rho) h_RU[m] (H_BR v)[m]`.
pub fn cascade_terms(
    h_ru: &DVector<Complex64>,
    h_br: &DMatrix<Complex64>,
    v: &DVector<Complex64>,
    rho: f64,
) -> DVector<Complex64> {
    let hv = h_br * v;
    h_ru.component_mul(&hv) * Complex64::new(1.0 - rho, 0.0)
}

/// `h_DL = h_BU + (1 - rho) h_RU diag(exp(j phi)) H_BR`.
pub fn effective_dl_channel(
    h_bu: &DVector<Complex64>,
    h_ru: &DVector<Complex64>,
    phi: &DVector<f64>,
    h_br: &DMatrix<Complex64>,
    rho: f64,
) -> Result<DVector<Complex64>> {
    if h_ru.len() != phi.len() || h_br.nrows() != phi.len() || h_br.ncols() != h_bu.len() {
        return Err(Error::ShapeMismatch(format!(
            "h_BU {}, h_RU {}, phi {}, H_BR {}x{}",
            h_bu.len(),
            h_ru.len(),
            phi.len(),
            h_br.nrows(),
            h_br.ncols()
        )));
    }
    let scale = 1.0 - rho;
    let weights = DVector::from_iterator(
        phi.len(),
        h_ru.iter()
            .zip(phi.iter())
            .map(|(h, p)| h * Complex64::from_polar(scale, *p)),
    );
    Ok(h_bu + h_br.transpose() * weights)
}

/// `h v` for a row vector stored as a column of its entries.
pub fn row_times(h: &DVector<Complex64>, v: &DVector<Complex64>) -> Complex64 {
    h.iter().zip(v.iter()).map(|(a, b)| a * b).sum()
}

/// `y = h_DL v s + n`.
pub fn ue_received_symbol<R: Rng + ?Sized>(
    h_dl: &DVector<Complex64>,
    v: &DVector<Complex64>,
    s: Complex64,
    noise: &NoiseModel,
    rng: &mut R,
) -> Complex64 {
    row_times(h_dl, v) * s + noise.sample(rng)
}

/// `Y = rho W^H H_R v s + N`, an `M_RF x T` block. The static BS-HRIS
/// contribution is assumed cancelled, so only `H_R` enters.
pub fn hris_received_block<R: Rng + ?Sized>(
    w_blocks: &[DVector<Complex64>],
    h_r: &DMatrix<Complex64>,
    v: &DVector<Complex64>,
    s_row: &[Complex64],
    rho: f64,
    noise: &NoiseModel,
    rng: &mut R,
) -> Result<DMatrix<Complex64>> {
    if s_row.is_empty() {
        return Err(Error::InvalidConfig("need at least one snapshot".into()));
    }
    let mean = combine(w_blocks, &(h_r * v)) * Complex64::new(rho, 0.0);
    let mut y = DMatrix::zeros(mean.len(), s_row.len());
    for (t, s) in s_row.iter().enumerate() {
        for i in 0..mean.len() {
            y[(i, t)] = mean[i] * s + noise.sample(rng);
        }
    }
    Ok(y)
}

/// `log2(1 + |h_DL v|^2 / sigma2)`.
pub fn dl_rate(h_dl: &DVector<Complex64>, v: &DVector<Complex64>, sigma2: f64) -> f64 {
    (1.0 + row_times(h_dl, v).norm_sqr() / sigma2).log2()
}

/// Full-power matched filter `sqrt(P) h^H / |h|` for a row channel `h`.
pub fn matched_filter(h: &DVector<Complex64>, p_max: f64) -> DVector<Complex64> {
    let n = h.norm();
    if n == 0.0 {
        let mut v = DVector::zeros(h.len());
        if !v.is_empty() {
            v[0] = Complex64::new(p_max.sqrt(), 0.0);
        }
        return v;
    }
    h.map(|x| x.conj() * (p_max.sqrt() / n))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SymbolKind {
    #[default]
    Qpsk,
    Gaussian,
}

/// Unit-power pilot symbols. QPSK satisfies `T^-1 s s^H = 1` exactly.
pub fn pilot_symbols<R: Rng + ?Sized>(kind: SymbolKind, t: usize, rng: &mut R) -> Vec<Complex64> {
    match kind {
        SymbolKind::Qpsk => (0..t)
            .map(|_| {
                let re = if rng.gen::<bool>() { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
                let im = if rng.gen::<bool>() { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
                Complex64::new(re, im)
            })
            .collect(),
        SymbolKind::Gaussian => (0..t).map(|_| complex_gaussian(rng, 1.0)).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<Complex64> {
        DVector::from_fn(n, |_, _| complex_gaussian(rng, 1.0))
    }

    fn random_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<Complex64> {
        DMatrix::from_fn(r, c, |_, _| complex_gaussian(rng, 1.0))
    }

    fn unit_blocks(rng: &mut ChaCha8Rng, m_rf: usize, m_e: usize) -> Vec<DVector<Complex64>> {
        (0..m_rf)
            .map(|_| DVector::from_fn(m_e, |_, _| Complex64::from_polar(1.0, rng.gen_range(-PI..PI))))
            .collect()
    }

    #[test]
    fn combiner_all_ones() {
        let blocks = vec![DVector::from_element(64, Complex64::new(1.0, 0.0)); 4];
        let w = assemble_combiner(&blocks).unwrap();
        assert_eq!(w.shape(), (256, 4));
        for j in 0..4 {
            assert_relative_eq!(w.column(j).norm(), 8.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn combiner_indexing_and_gram() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut blocks = unit_blocks(&mut rng, 4, 64);
        blocks[1][2] = Complex64::from_polar(1.0, 0.3);
        let w = assemble_combiner(&blocks).unwrap();
        // 1-based (l = 2, m = 3) -> row 67, column 2
        assert_eq!(w[(66, 1)], blocks[1][2]);
        for i in 0..256 {
            for j in 0..4 {
                assert_eq!(w[(i, j)] != Complex64::new(0.0, 0.0), i / 64 == j);
            }
        }
        let gram = w.adjoint() * &w;
        let expected = DMatrix::<Complex64>::identity(4, 4) * Complex64::new(64.0, 0.0);
        assert_relative_eq!((gram - expected).norm(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn combiner_rejects_bad_modulus() {
        let mut blocks = vec![DVector::from_element(4, Complex64::new(1.0, 0.0)); 2];
        blocks[1][3] = Complex64::new(0.5, 0.0);
        assert!(matches!(
            assemble_combiner(&blocks),
            Err(Error::NonUnitModulus { block: 1, index: 3, .. })
        ));
    }

    #[test]
    fn combine_matches_dense_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let blocks = unit_blocks(&mut rng, 3, 5);
        let x = random_vec(&mut rng, 15);
        let dense = assemble_combiner(&blocks).unwrap().adjoint() * &x;
        assert_relative_eq!((combine(&blocks, &x) - dense).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn dl_channel_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h_bu = random_vec(&mut rng, 4);
        let h_ru = random_vec(&mut rng, 6);
        let h_br = random_mat(&mut rng, 6, 4);
        let phi = DVector::from_fn(6, |_, _| rng.gen_range(-1.0..1.0));
        assert_eq!(effective_dl_channel(&h_bu, &h_ru, &phi, &h_br, 1.0).unwrap(), h_bu);
        let zero = DVector::zeros(6);
        let h0 = effective_dl_channel(&h_bu, &h_ru, &zero, &h_br, 0.0).unwrap();
        let expected = &h_bu + (h_ru.transpose() * &h_br).transpose();
        assert_relative_eq!((h0 - expected).norm(), 0.0, epsilon = 1e-12);
        assert!(effective_dl_channel(&h_bu, &h_ru, &DVector::zeros(5), &h_br, 0.0).is_err());
    }

    #[test]
    fn dl_channel_triangle_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let h_bu = random_vec(&mut rng, 4);
            let h_ru = random_vec(&mut rng, 6);
            let h_br = random_mat(&mut rng, 6, 4);
            let phi = DVector::from_fn(6, |_, _| rng.gen_range(-PI..PI));
            let rho = rng.gen_range(0.0..1.0);
            let h = effective_dl_channel(&h_bu, &h_ru, &phi, &h_br, rho).unwrap();
            let bound = h_bu.norm() + (1.0 - rho) * h_ru.norm() * h_br.norm();
            assert!(h.norm() <= bound * (1.0 + 1e-12));
        }
    }

    #[test]
    fn ue_symbol_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = random_vec(&mut rng, 4);
        let v = random_vec(&mut rng, 4);
        let s = Complex64::new(FRAC_1_SQRT_2, -FRAC_1_SQRT_2);
        let silent = NoiseModel::new(0.0).unwrap();
        assert_eq!(ue_received_symbol(&h, &v, s, &silent, &mut rng), row_times(&h, &v) * s);
        let noise = NoiseModel::new(2.5).unwrap();
        let zero = DVector::zeros(4);
        let n = 100_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let y = ue_received_symbol(&h, &zero, s, &noise, &mut rng);
            acc += y.norm_sqr();
        }
        let var = acc / n as f64;
        assert!((0.98 * 2.5..=1.02 * 2.5).contains(&var), "variance {var}");
    }

    #[test]
    fn hris_block_models() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let blocks = unit_blocks(&mut rng, 4, 8);
        let h_r = random_mat(&mut rng, 32, 4);
        let v = random_vec(&mut rng, 4);
        let s = pilot_symbols(SymbolKind::Qpsk, 200, &mut rng);
        let silent = NoiseModel::new(0.0).unwrap();

        let y0 = hris_received_block(&blocks, &h_r, &v, &s, 0.0, &silent, &mut rng).unwrap();
        assert_eq!(y0.norm(), 0.0);

        let rho = 0.3;
        let y = hris_received_block(&blocks, &h_r, &v, &s, rho, &silent, &mut rng).unwrap();
        let sv = y.clone().svd(false, false).singular_values;
        let mut sv: Vec<f64> = sv.iter().copied().collect();
        sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert!(sv[1] / sv[0] < 1e-10);

        let cov = &y * y.adjoint() / Complex64::new(s.len() as f64, 0.0);
        let w = assemble_combiner(&blocks).unwrap();
        let g = w.adjoint() * &h_r * &v;
        let expected = &g * g.adjoint() * Complex64::new(rho * rho, 0.0);
        assert!((&cov - &expected).norm() / expected.norm() <= 1e-10);
    }

    #[test]
    fn split_ratio_linearity() {
        // sensed mean is linear in rho, reflected cascade linear in (1 - rho)
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let blocks = unit_blocks(&mut rng, 2, 3);
        let h_r = random_mat(&mut rng, 6, 3);
        let v = random_vec(&mut rng, 3);
        let silent = NoiseModel::new(0.0).unwrap();
        let s = [Complex64::new(1.0, 0.0)];
        let mean = |rho: f64| {
            let mut r = ChaCha8Rng::seed_from_u64(0);
            hris_received_block(&blocks, &h_r, &v, &s, rho, &silent, &mut r).unwrap()
        };
        assert_relative_eq!((mean(0.8) - mean(0.4) * Complex64::new(2.0, 0.0)).norm(), 0.0, epsilon = 1e-12);

        let h_ru = random_vec(&mut rng, 6);
        let h_br = random_mat(&mut rng, 6, 3);
        let a = cascade_terms(&h_ru, &h_br, &v, 0.2);
        let b = cascade_terms(&h_ru, &h_br, &v, 0.6);
        assert_relative_eq!((a * Complex64::new(0.5, 0.0) - b).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn rate_values() {
        let h = DVector::from_vec(vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)]);
        let ortho = DVector::from_vec(vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)]);
        assert_eq!(dl_rate(&h, &ortho, 1.0), 0.0);
        let v = DVector::from_vec(vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]);
        assert_relative_eq!(dl_rate(&h, &v, 1.0), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn matched_filter_dominates() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let h = random_vec(&mut rng, 8);
        let p = 0.04;
        let best = dl_rate(&h, &matched_filter(&h, p), 1e-3);
        for _ in 0..10_000 {
            let mut v = random_vec(&mut rng, 8);
            let scale = (p * rng.gen::<f64>()).sqrt() / v.norm();
            v *= Complex64::new(scale, 0.0);
            assert!(dl_rate(&h, &v, 1e-3) <= best + 1e-12);
        }
    }

    #[test]
    fn qpsk_is_exactly_unit_power() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = pilot_symbols(SymbolKind::Qpsk, 200, &mut rng);
        let p: f64 = s.iter().map(|x| x.norm_sqr()).sum::<f64>() / 200.0;
        assert_relative_eq!(p, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn design_validation() {
        let v = DVector::from_element(2, Complex64::new(0.1, 0.0));
        let mut d = HrisDesign::initial(v, 2, 3);
        assert!(d.validate(0.02, FRAC_PI_2).is_ok());
        assert!(d.validate(0.01, FRAC_PI_2).is_err());
        d.phi[0] = 2.0;
        assert!(d.validate(0.02, FRAC_PI_2).is_err());
        assert!(d.validate(0.02, PI).is_ok());
        assert!(SplitRatio::new(1.1).is_err());
        assert!(NoiseModel::new(-1.0).is_err());
    }

    #[test]
    fn thermal_noise_profile() {
        let n = NoiseModel::thermal(150e3, 0.0).unwrap();
        assert_relative_eq!(n.sigma2, 5.97e-16, max_relative = 2e-3);
    }

    proptest! {
        #[test]
        fn rate_is_phase_invariant(seed in any::<u64>(), c in -PI..PI) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let h = random_vec(&mut rng, 6);
            let v = random_vec(&mut rng, 6);
            let rotated = &v * Complex64::from_polar(1.0, c);
            let a = dl_rate(&h, &v, 0.5);
            let b = dl_rate(&h, &rotated, 0.5);
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        }

        #[test]
        fn combiner_support_matches_blocks(m_rf in 1usize..5, m_e in 1usize..9, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let blocks = unit_blocks(&mut rng, m_rf, m_e);
            let w = assemble_combiner(&blocks).unwrap();
            for l in 0..m_rf {
                for j in 0..m_rf {
                    for m in 0..m_e {
                        let e = w[(l * m_e + m, j)];
                        if l == j {
                            prop_assert_eq!(e, blocks[l][m]);
                        } else {
                            prop_assert_eq!(e, Complex64::new(0.0, 0.0));
                        }
                    }
                }
            }
        }
    }
}
