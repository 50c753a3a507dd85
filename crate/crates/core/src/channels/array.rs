//! Array response vectors for the BS uniform linear array and the IRS
//! uniform rectangular arrays.
//!
//! Conventions:
//! - Every array lives in a local frame `(normal, horizontal, vertical)`.
//!   A direction with azimuth `az` (measured from the normal towards the
//!   horizontal axis) and elevation `el` (measured from the horizontal plane)
//!   has local unit vector `(cos el cos az, cos el sin az, sin el)`.
//! - A ULA is laid out along the horizontal axis; a URA with `rows x cols`
//!   elements spans the horizontal (columns) and vertical (rows) axes.
//!   URA element `(r, c)` is stored at index `r * cols + c`.
//! - Element `p` responds with `exp(+j 2 pi <pos_p, u>)`, positions in
//!   wavelengths, so the first element is the phase reference and equals 1.

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{phasor, CVec};

/// Array layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArrayKind {
    Ula { elements: usize },
    Ura { rows: usize, cols: usize },
}

impl ArrayKind {
    pub fn len(&self) -> usize {
        match *self {
            ArrayKind::Ula { elements } => elements,
            ArrayKind::Ura { rows, cols } => rows * cols,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Near-square URA holding `n` elements: the row count is the largest
    /// divisor of `n` not exceeding `sqrt(n)`.
    pub fn square_ura(n: usize) -> Self {
        let mut rows = (n as f64).sqrt().floor() as usize;
        while rows > 1 && !n.is_multiple_of(rows) {
            rows -= 1;
        }
        let rows = rows.max(1);
        ArrayKind::Ura {
            rows,
            cols: n / rows,
        }
    }

    /// Element positions in wavelengths along (horizontal, vertical).
    fn positions(&self, spacing: f64) -> Vec<(f64, f64)> {
        match *self {
            ArrayKind::Ula { elements } => {
                (0..elements).map(|n| (n as f64 * spacing, 0.0)).collect()
            }
            ArrayKind::Ura { rows, cols } => (0..rows)
                .flat_map(|r| (0..cols).map(move |c| (c as f64 * spacing, r as f64 * spacing)))
                .collect(),
        }
    }
}

/// Response of an array to a plane wave from local direction `(azimuth,
/// elevation)` in radians, for element spacing in wavelengths.
pub fn array_response(kind: ArrayKind, azimuth: f64, elevation: f64, spacing: f64) -> Result<CVec> {
    if kind.is_empty() {
        return Err(Error::Domain("array must have at least one element".into()));
    }
    if !(spacing > 0.0) {
        return Err(Error::Domain(format!(
            "element spacing must be positive, got {spacing}"
        )));
    }
    let horizontal = elevation.cos() * azimuth.sin();
    let vertical = elevation.sin();
    Ok(response_from_components(
        kind, spacing, horizontal, vertical,
    ))
}

fn response_from_components(kind: ArrayKind, spacing: f64, horizontal: f64, vertical: f64) -> CVec {
    let pos = kind.positions(spacing);
    CVec::from_iterator(
        pos.len(),
        pos.iter()
            .map(|&(x, z)| phasor(std::f64::consts::TAU * (x * horizontal + z * vertical))),
    )
}

/// An array placed in the global frame: its normal and horizontal axis lie
/// in the horizontal plane, rotated by `azimuth` about the z-axis. The
/// horizontal axis points along `(cos azimuth, sin azimuth, 0)` and the
/// normal along `(sin azimuth, -cos azimuth, 0)`.
#[derive(Debug, Clone, Copy)]
pub struct PlacedArray {
    pub kind: ArrayKind,
    pub position: Vector3<f64>,
    pub azimuth: f64,
    pub spacing: f64,
}

impl PlacedArray {
    pub fn normal(&self) -> Vector3<f64> {
        Vector3::new(self.azimuth.sin(), -self.azimuth.cos(), 0.0)
    }

    pub fn horizontal_axis(&self) -> Vector3<f64> {
        Vector3::new(self.azimuth.cos(), self.azimuth.sin(), 0.0)
    }

    pub fn len(&self) -> usize {
        self.kind.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kind.is_empty()
    }

    /// Response towards a global unit direction.
    pub fn response(&self, direction: &Vector3<f64>) -> CVec {
        response_from_components(
            self.kind,
            self.spacing,
            direction.dot(&self.horizontal_axis()),
            direction.z,
        )
    }

    /// Response towards another point in space.
    pub fn response_towards(&self, target: &Vector3<f64>) -> CVec {
        let d = target - self.position;
        self.response(&(d / d.norm()))
    }

    /// Response towards a direction drawn uniformly over the front
    /// half-space (the hemisphere around the array normal).
    pub fn random_front_response<R: Rng + ?Sized>(&self, rng: &mut R) -> CVec {
        let dir = random_hemisphere_direction(&self.normal(), rng);
        self.response(&dir)
    }
}

/// Uniform direction on the hemisphere `{u : <u, normal> >= 0}`.
pub fn random_hemisphere_direction<R: Rng + ?Sized>(
    normal: &Vector3<f64>,
    rng: &mut R,
) -> Vector3<f64> {
    loop {
        let v: Vector3<f64> = Vector3::new(
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        );
        let n = v.norm();
        if n > 1e-12 {
            let u: Vector3<f64> = v / n;
            return if u.dot(normal) < 0.0 { -u } else { u };
        }
    }
}
