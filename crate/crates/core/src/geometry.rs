//! Coordinate conventions, planar array layout, element radiation profile and
//! Fresnel-region bounds.
//!
//! Spherical coordinates use `theta` as the polar angle measured from `+z`
//! and `phi` as the azimuth measured from `+x` towards `+y`:
//!
//! ```text
//! x = r sin(theta) cos(phi)
//! y = r sin(theta) sin(phi)
//! z = r cos(theta)
//! ```
//!
//! Every array lies in a plane parallel to `xz`. Elements are laid out on a
//! `rows x cols` lattice with rows stepping along `+z` and columns along `+x`,
//! and the flat element index is column-major (`col * rows + row`), so a
//! column of the surface is one contiguous block of the index space.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Cartesian = Vector3<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphericalCoord {
    /// Range in meters.
    pub r: f64,
    /// Polar angle from `+z` in radians, in `[0, pi]`.
    pub theta: f64,
    /// Azimuth in radians, in `(-pi, pi]`.
    pub phi: f64,
}

impl SphericalCoord {
    pub fn new(r: f64, theta: f64, phi: f64) -> Result<Self> {
        let p = Self { r, theta, phi };
        p.validate()?;
        Ok(p)
    }

    /// Convenience constructor taking angles in degrees.
    pub fn from_degrees(r: f64, theta_deg: f64, phi_deg: f64) -> Result<Self> {
        Self::new(r, theta_deg.to_radians(), phi_deg.to_radians())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r.is_finite() && self.r > 0.0) {
            return Err(Error::InvalidCoordinate(format!("range must be positive, got {}", self.r)));
        }
        if !(0.0..=PI).contains(&self.theta) {
            return Err(Error::InvalidCoordinate(format!(
                "polar angle {} outside [0, pi]",
                self.theta
            )));
        }
        if !(self.phi > -PI && self.phi <= PI) {
            return Err(Error::InvalidCoordinate(format!(
                "azimuth {} outside (-pi, pi]",
                self.phi
            )));
        }
        Ok(())
    }

    pub fn to_cartesian(&self) -> Cartesian {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        Vector3::new(self.r * st * cp, self.r * st * sp, self.r * ct)
    }

    /// Partial derivatives of the Cartesian position with respect to
    /// `(r, theta, phi)`, in that order.
    pub fn jacobian(&self) -> [Cartesian; 3] {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        [
            Vector3::new(st * cp, st * sp, ct),
            Vector3::new(self.r * ct * cp, self.r * ct * sp, -self.r * st),
            Vector3::new(-self.r * st * sp, self.r * st * cp, 0.0),
        ]
    }
}

pub fn spherical_to_cartesian(p: &SphericalCoord) -> Result<Cartesian> {
    p.validate()?;
    Ok(p.to_cartesian())
}

pub fn cartesian_to_spherical(p: &Cartesian) -> Result<SphericalCoord> {
    let r = p.norm();
    if !(r.is_finite() && r > 0.0) {
        return Err(Error::InvalidCoordinate(format!("cannot convert point at range {r}")));
    }
    let rho = p.x.hypot(p.y);
    let theta = rho.atan2(p.z);
    let mut phi = p.y.atan2(p.x);
    if phi <= -PI {
        phi = PI;
    }
    Ok(SphericalCoord { r, theta, phi })
}

/// Which way the array face points. Both options keep the array in the `xz` plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Facing {
    PlusY,
    MinusY,
}

impl Facing {
    pub fn normal(self) -> Cartesian {
        match self {
            Facing::PlusY => Vector3::new(0.0, 1.0, 0.0),
            Facing::MinusY => Vector3::new(0.0, -1.0, 0.0),
        }
    }
}

/// Uniform planar array in a plane parallel to `xz`.
#[derive(Debug, Clone, PartialEq)]
pub struct UpaGeometry {
    pub rows: usize,
    pub cols: usize,
    pub spacing: f64,
    pub reference_point: Cartesian,
    pub facing: Facing,
}

impl UpaGeometry {
    pub fn new(
        rows: usize,
        cols: usize,
        spacing: f64,
        reference_point: Cartesian,
        facing: Facing,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidConfig(format!("array must have at least one element, got {rows}x{cols}")));
        }
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::InvalidConfig(format!("element spacing must be positive, got {spacing}")));
        }
        Ok(Self {
            rows,
            cols,
            spacing,
            reference_point,
            facing,
        })
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn normal(&self) -> Cartesian {
        self.facing.normal()
    }

    /// Flat column-major index of element `(row, col)`.
    pub fn flat_index(&self, row: usize, col: usize) -> usize {
        col * self.rows + row
    }

    /// Element positions in flat index order.
    pub fn positions(&self) -> Vec<Cartesian> {
        let mut out = Vec::with_capacity(self.len());
        for col in 0..self.cols {
            for row in 0..self.rows {
                out.push(self.offset(row, col));
            }
        }
        out
    }

    /// Euclidean length of the aperture diagonal between corner element centers.
    pub fn diagonal(&self) -> f64 {
        let w = (self.cols - 1) as f64 * self.spacing;
        let h = (self.rows - 1) as f64 * self.spacing;
        w.hypot(h)
    }

    fn offset(&self, row: usize, col: usize) -> Cartesian {
        self.reference_point + Vector3::new(col as f64 * self.spacing, 0.0, row as f64 * self.spacing)
    }
}

pub fn element_position(g: &UpaGeometry, row: usize, col: usize) -> Result<Cartesian> {
    if row >= g.rows || col >= g.cols {
        return Err(Error::IndexOutOfRange {
            row,
            col,
            rows: g.rows,
            cols: g.cols,
        });
    }
    Ok(g.offset(row, col))
}

/// Element power pattern `F(theta) = 2(b+1) cos^b(theta)` on the front half-space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiationProfile {
    pub b: f64,
}

impl Default for RadiationProfile {
    fn default() -> Self {
        Self { b: 2.0 }
    }
}

impl RadiationProfile {
    pub fn new(b: f64) -> Result<Self> {
        if !(b.is_finite() && b >= 0.0) {
            return Err(Error::InvalidConfig(format!("boresight exponent must be >= 0, got {b}")));
        }
        Ok(Self { b })
    }

    /// Gain as a function of `cos(theta)`; zero behind the element.
    pub fn gain_from_cos(&self, cos_theta: f64) -> f64 {
        if cos_theta < 0.0 {
            return 0.0;
        }
        2.0 * (self.b + 1.0) * cos_theta.powf(self.b)
    }
}

pub fn radiation_gain(theta: f64, prof: &RadiationProfile) -> f64 {
    if theta.abs() > FRAC_PI_2 {
        return 0.0;
    }
    prof.gain_from_cos(theta.cos().max(0.0))
}

/// Near-field (radiating Fresnel) range interval `[0.62 sqrt(D^3/lambda), 2 D^2 / lambda]`.
pub fn fresnel_bounds(g: &UpaGeometry, lambda: f64) -> Result<(f64, f64)> {
    if g.len() < 2 {
        return Err(Error::DegenerateAperture("a single element has no diagonal".into()));
    }
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::InvalidConfig(format!("wavelength must be positive, got {lambda}")));
    }
    let d = g.diagonal();
    let r_min = 0.62 * (d.powi(3) / lambda).sqrt();
    let r_max = 2.0 * d * d / lambda;
    Ok((r_min, r_max))
}
