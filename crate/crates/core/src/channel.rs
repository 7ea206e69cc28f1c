//! Near-field channel synthesis with exact spherical wavefronts.
//!
//! Every channel entry between an element at `x_e` (face normal `n`) and a
//! point `p` is
//!
//! ```text
//! lambda / (4 pi d) * sqrt(F(theta_e)) * exp(-kappa d / 2) * exp(j 2 pi d / lambda)
//! ```
//!
//! with `d = |p - x_e|` and `cos(theta_e) = n . (p - x_e) / d`. Derivatives with
//! respect to the spherical parameters of `p` are analytic and cover both the
//! amplitude and the phase unless [`DerivativeMode::PhaseOnly`] is selected.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Cartesian, RadiationProfile, SphericalCoord, UpaGeometry};

/// Minimum element-to-point distance accepted before treating the pair as coincident.
const MIN_DISTANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicsConstants {
    pub carrier_freq: f64,
    pub lambda: f64,
    pub kappa_abs: f64,
}

impl PhysicsConstants {
    pub fn new(carrier_freq: f64, kappa_abs: f64) -> Result<Self> {
        if !(carrier_freq.is_finite() && carrier_freq > 0.0) {
            return Err(Error::InvalidConfig(format!("carrier frequency must be positive, got {carrier_freq}")));
        }
        if !(kappa_abs.is_finite() && kappa_abs >= 0.0) {
            return Err(Error::InvalidConfig(format!("absorption coefficient must be >= 0, got {kappa_abs}")));
        }
        Ok(Self {
            carrier_freq,
            lambda: crate::units::wavelength(carrier_freq),
            kappa_abs,
        })
    }

    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.lambda
    }
}

/// Free-space attenuation with molecular absorption and element pattern.
pub fn attenuation(distance: f64, theta: f64, phys: &PhysicsConstants, prof: &RadiationProfile) -> Result<f64> {
    if !(distance.is_finite() && distance > 0.0) {
        return Err(Error::Singularity(distance));
    }
    let gain = crate::geometry::radiation_gain(theta, prof);
    Ok(amplitude(distance, gain, phys))
}

fn amplitude(distance: f64, gain: f64, phys: &PhysicsConstants) -> f64 {
    phys.lambda / (4.0 * PI * distance) * gain.sqrt() * (-phys.kappa_abs * distance / 2.0).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DerivativeMode {
    /// Differentiate amplitude and phase.
    #[default]
    Full,
    /// Differentiate only the propagation phase.
    PhaseOnly,
}

/// Spherical parameter of a point source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Dim {
    Range,
    Elevation,
    Azimuth,
}

impl Dim {
    pub const ALL: [Dim; 3] = [Dim::Range, Dim::Elevation, Dim::Azimuth];

    pub fn index(self) -> usize {
        match self {
            Dim::Range => 0,
            Dim::Elevation => 1,
            Dim::Azimuth => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SourceKind {
    Target,
    Ue,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointSource {
    pub position: SphericalCoord,
    pub beta: Complex64,
    pub kind: SourceKind,
}

/// Array responses towards one point, optionally with their spherical gradients.
#[derive(Debug, Clone)]
pub struct PointResponse {
    pub a_tx: DVector<Complex64>,
    pub a_rx: DVector<Complex64>,
    /// `d a_tx / d zeta_i` for `i` in `(r, theta, phi)`.
    pub d_tx: [DVector<Complex64>; 3],
    pub d_rx: [DVector<Complex64>; 3],
}

impl PointResponse {
    /// `d(a_rx a_tx^H)/d zeta_i * v` without forming the matrix.
    pub fn outer_derivative_times(&self, dim: usize, v: &DVector<Complex64>) -> DVector<Complex64> {
        let tx_v = self.a_tx.dotc(v);
        let dtx_v = self.d_tx[dim].dotc(v);
        self.d_rx[dim].scale(1.0).map(|x| x * tx_v) + self.a_rx.map(|x| x * dtx_v)
    }

    /// `d(a_rx a_tx^H)/d zeta_i` as a dense matrix.
    pub fn outer_derivative(&self, dim: usize) -> DMatrix<Complex64> {
        &self.d_rx[dim] * self.a_tx.adjoint() + &self.a_rx * self.d_tx[dim].adjoint()
    }
}

/// Array geometry plus propagation constants; the fixed part of every channel.
#[derive(Debug, Clone)]
pub struct ChannelModel {
    pub phys: PhysicsConstants,
    pub profile: RadiationProfile,
    pub bs: UpaGeometry,
    pub hris: UpaGeometry,
    pub derivative: DerivativeMode,
    bs_elems: Vec<Cartesian>,
    hris_elems: Vec<Cartesian>,
}

struct ElementEval {
    value: Complex64,
    grad: Vector3<Complex64>,
}

impl ChannelModel {
    pub fn new(
        phys: PhysicsConstants,
        profile: RadiationProfile,
        bs: UpaGeometry,
        hris: UpaGeometry,
        derivative: DerivativeMode,
    ) -> Self {
        let bs_elems = bs.positions();
        let hris_elems = hris.positions();
        Self {
            phys,
            profile,
            bs,
            hris,
            derivative,
            bs_elems,
            hris_elems,
        }
    }

    /// Number of BS antennas (`N`).
    pub fn n_tx(&self) -> usize {
        self.bs_elems.len()
    }

    /// Number of surface elements (`M`).
    pub fn n_rx(&self) -> usize {
        self.hris_elems.len()
    }

    pub fn bs_elements(&self) -> &[Cartesian] {
        &self.bs_elems
    }

    pub fn hris_elements(&self) -> &[Cartesian] {
        &self.hris_elems
    }

    fn entry(&self, elem: &Cartesian, normal: &Cartesian, p: &Cartesian) -> Result<Complex64> {
        let diff = p - elem;
        let d = diff.norm();
        if d < MIN_DISTANCE {
            return Err(Error::Singularity(d));
        }
        let cos_t = normal.dot(&diff) / d;
        let amp = amplitude(d, self.profile.gain_from_cos(cos_t), &self.phys);
        Ok(Complex64::from_polar(amp, self.phys.wavenumber() * d))
    }

    fn entry_with_grad(&self, elem: &Cartesian, normal: &Cartesian, p: &Cartesian) -> Result<ElementEval> {
        let diff = p - elem;
        let d = diff.norm();
        if d < MIN_DISTANCE {
            return Err(Error::Singularity(d));
        }
        let u = diff / d;
        let cos_t = normal.dot(&u);
        let amp = amplitude(d, self.profile.gain_from_cos(cos_t), &self.phys);
        let k = self.phys.wavenumber();
        let value = Complex64::from_polar(amp, k * d);
        if amp == 0.0 {
            return Ok(ElementEval {
                value,
                grad: Vector3::zeros(),
            });
        }
        let grad = match self.derivative {
            DerivativeMode::PhaseOnly => u.map(|x| value * Complex64::new(0.0, k * x)),
            DerivativeMode::Full => {
                let radial = Complex64::new(-1.0 / d - self.phys.kappa_abs / 2.0, k);
                let angular = if self.profile.b == 0.0 {
                    Vector3::zeros()
                } else {
                    (normal - u * cos_t) * (self.profile.b / (2.0 * cos_t * d))
                };
                Vector3::from_fn(|i, _| value * (radial * u[i] + angular[i]))
            }
        };
        Ok(ElementEval { value, grad })
    }

    /// Cascaded BS-to-surface channel, `M x N`. Element patterns are applied at
    /// the surface side (the meta-atom profile).
    pub fn bs_hris_channel(&self) -> Result<DMatrix<Complex64>> {
        let normal = self.hris.normal();
        let mut h = DMatrix::zeros(self.n_rx(), self.n_tx());
        for (m, xm) in self.hris_elems.iter().enumerate() {
            for (n, xn) in self.bs_elems.iter().enumerate() {
                h[(m, n)] = self.entry(xm, &normal, xn)?;
            }
        }
        Ok(h)
    }

    pub fn steering_vectors(&self, p: &SphericalCoord) -> Result<(DVector<Complex64>, DVector<Complex64>)> {
        p.validate()?;
        let x = p.to_cartesian();
        let n_bs = self.bs.normal();
        let n_h = self.hris.normal();
        let mut a_tx = DVector::zeros(self.n_tx());
        for (i, e) in self.bs_elems.iter().enumerate() {
            a_tx[i] = self.entry(e, &n_bs, &x)?;
        }
        let mut a_rx = DVector::zeros(self.n_rx());
        for (i, e) in self.hris_elems.iter().enumerate() {
            a_rx[i] = self.entry(e, &n_h, &x)?;
        }
        Ok((a_tx, a_rx))
    }

    /// Receive-side steering vector only.
    pub fn rx_steering(&self, p: &SphericalCoord) -> Result<DVector<Complex64>> {
        p.validate()?;
        let x = p.to_cartesian();
        let n_h = self.hris.normal();
        let mut a_rx = DVector::zeros(self.n_rx());
        for (i, e) in self.hris_elems.iter().enumerate() {
            a_rx[i] = self.entry(e, &n_h, &x)?;
        }
        Ok(a_rx)
    }

    /// Steering vectors and their derivatives with respect to `(r, theta, phi)`.
    pub fn point_response(&self, p: &SphericalCoord) -> Result<PointResponse> {
        p.validate()?;
        let x = p.to_cartesian();
        let jac = p.jacobian();
        let fill = |elems: &[Cartesian], normal: Cartesian| -> Result<(DVector<Complex64>, [DVector<Complex64>; 3])> {
            let mut a = DVector::zeros(elems.len());
            let mut d = [
                DVector::zeros(elems.len()),
                DVector::zeros(elems.len()),
                DVector::zeros(elems.len()),
            ];
            for (i, e) in elems.iter().enumerate() {
                let ev = self.entry_with_grad(e, &normal, &x)?;
                a[i] = ev.value;
                for (dim, j) in jac.iter().enumerate() {
                    d[dim][i] = ev.grad[0] * j[0] + ev.grad[1] * j[1] + ev.grad[2] * j[2];
                }
            }
            Ok((a, d))
        };
        let (a_tx, d_tx) = fill(&self.bs_elems, self.bs.normal())?;
        let (a_rx, d_rx) = fill(&self.hris_elems, self.hris.normal())?;
        Ok(PointResponse { a_tx, a_rx, d_tx, d_rx })
    }

    /// `H_R = sum_k beta_k a_rx(zeta_k) a_tx(zeta_k)^H`.
    pub fn reflective_channel(&self, sources: &[PointSource]) -> Result<DMatrix<Complex64>> {
        if sources.is_empty() {
            return Err(Error::InvalidConfig("reflective channel needs at least one source".into()));
        }
        let mut h = DMatrix::zeros(self.n_rx(), self.n_tx());
        for s in sources {
            let (a_tx, a_rx) = self.steering_vectors(&s.position)?;
            h += (a_rx * a_tx.adjoint()) * s.beta;
        }
        Ok(h)
    }

    /// Derivative of `H_R` with respect to one spherical parameter of source `k`.
    pub fn reflective_channel_derivative(
        &self,
        sources: &[PointSource],
        k: usize,
        dim: Dim,
    ) -> Result<DMatrix<Complex64>> {
        let s = sources
            .get(k)
            .ok_or_else(|| Error::InvalidConfig(format!("source index {k} out of range ({} sources)", sources.len())))?;
        let resp = self.point_response(&s.position)?;
        Ok(resp.outer_derivative(dim.index()) * s.beta)
    }
}

/// All channels of one realization. Row vectors (`h_bu`, `h_ru`) are stored as
/// column vectors holding the row entries, without conjugation.
#[derive(Debug, Clone)]
pub struct ChannelSet {
    pub h_br: DMatrix<Complex64>,
    pub h_bu: DVector<Complex64>,
    pub h_ru: DVector<Complex64>,
    pub h_r: DMatrix<Complex64>,
    pub sources: Vec<PointSource>,
}

impl ChannelSet {
    /// Build every channel from the source list. Exactly one source must be the UE.
    pub fn synthesize(model: &ChannelModel, sources: Vec<PointSource>) -> Result<Self> {
        let ue = sources
            .iter()
            .find(|s| s.kind == SourceKind::Ue)
            .ok_or_else(|| Error::InvalidConfig("source list has no UE".into()))?;
        let (a_tx, a_rx) = model.steering_vectors(&ue.position)?;
        Ok(Self {
            h_br: model.bs_hris_channel()?,
            h_bu: a_tx,
            h_ru: a_rx,
            h_r: model.reflective_channel(&sources)?,
            sources,
        })
    }

    pub fn ue(&self) -> &PointSource {
        self.sources
            .iter()
            .find(|s| s.kind == SourceKind::Ue)
            .expect("channel set always holds a UE")
    }

    pub fn targets(&self) -> impl Iterator<Item = &PointSource> {
        self.sources.iter().filter(|s| s.kind == SourceKind::Target)
    }
}

const DUMP_MAGIC: &[u8; 8] = b"HRISCHAN";

/// Header entry of a channel dump: one named complex matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DumpHeader {
    format: String,
    version: u32,
    endianness: String,
    element: String,
    layout: String,
    matrices: Vec<DumpEntry>,
}

/// Write named complex matrices as: 8-byte magic, little-endian `u64` header
/// length, JSON header, then each matrix row-major as `(re, im)` little-endian
/// `f64` pairs in header order.
pub fn write_matrix_dump<W: Write>(mut w: W, matrices: &[(&str, &DMatrix<Complex64>)]) -> Result<()> {
    let header = DumpHeader {
        format: "hris-channel-dump".into(),
        version: 1,
        endianness: "little".into(),
        element: "complex-f64".into(),
        layout: "row-major".into(),
        matrices: matrices
            .iter()
            .map(|(name, m)| DumpEntry {
                name: name.to_string(),
                rows: m.nrows(),
                cols: m.ncols(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::Format(e.to_string()))?;
    w.write_all(DUMP_MAGIC)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    for (_, m) in matrices {
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let z = m[(i, j)];
                w.write_all(&z.re.to_le_bytes())?;
                w.write_all(&z.im.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

pub fn read_matrix_dump<R: Read>(mut r: R) -> Result<Vec<(String, DMatrix<Complex64>)>> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != DUMP_MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let len = u64::from_le_bytes(len) as usize;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)?;
    let header: DumpHeader = serde_json::from_slice(&json).map_err(|e| Error::Format(e.to_string()))?;
    if header.version != 1 {
        return Err(Error::Format(format!("unsupported dump version {}", header.version)));
    }
    let mut out = Vec::with_capacity(header.matrices.len());
    let mut buf = [0u8; 8];
    for entry in header.matrices {
        let mut m = DMatrix::zeros(entry.rows, entry.cols);
        for i in 0..entry.rows {
            for j in 0..entry.cols {
                r.read_exact(&mut buf)?;
                let re = f64::from_le_bytes(buf);
                r.read_exact(&mut buf)?;
                let im = f64::from_le_bytes(buf);
                m[(i, j)] = Complex64::new(re, im);
            }
        }
        out.push((entry.name, m));
    }
    Ok(out)
}

/// Dump `H_BR`, `h_BU`, `h_RU` and `H_R` of a channel set.
pub fn write_channel_dump(path: &Path, set: &ChannelSet) -> Result<()> {
    let h_bu = DMatrix::from_row_slice(1, set.h_bu.len(), set.h_bu.as_slice());
    let h_ru = DMatrix::from_row_slice(1, set.h_ru.len(), set.h_ru.as_slice());
    let w = BufWriter::new(File::create(path)?);
    write_matrix_dump(
        w,
        &[("H_BR", &set.h_br), ("h_BU", &h_bu), ("h_RU", &h_ru), ("H_R", &set.h_r)],
    )
}

pub fn read_channel_dump(path: &Path) -> Result<Vec<(String, DMatrix<Complex64>)>> {
    read_matrix_dump(BufReader::new(File::open(path)?))
}
