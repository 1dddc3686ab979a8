use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vec2::Vec2;

/// Square periodic sampling of the transverse plane.
///
/// Node `j` along an axis sits at `(j - n/2) * spacing`, so the origin is a
/// grid node and the reflection `x -> -x` maps nodes onto nodes (modulo the
/// period).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransverseGrid {
    n: usize,
    extent: f64,
}

impl TransverseGrid {
    pub fn new(n: usize, extent: f64) -> Result<Self> {
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::invalid(
                "grid_n",
                format!("{n} is not a power of two >= 2"),
            ));
        }
        if !(extent.is_finite() && extent > 0.0) {
            return Err(Error::invalid(
                "grid_extent",
                format!("{extent} is not a positive length"),
            ));
        }
        Ok(TransverseGrid { n, extent })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }

    pub fn spacing(&self) -> f64 {
        self.extent / self.n as f64
    }

    pub fn dual_spacing(&self) -> f64 {
        2.0 * PI / self.extent
    }

    pub fn k_max(&self) -> f64 {
        PI / self.spacing()
    }

    /// Coordinate of node `j` along one axis.
    pub fn coord(&self, j: usize) -> f64 {
        (j as f64 - (self.n / 2) as f64) * self.spacing()
    }

    /// Wavenumber of FFT bin `j` along one axis.
    pub fn wavenumber(&self, j: usize) -> f64 {
        let signed = if j < self.n / 2 {
            j as isize
        } else {
            j as isize - self.n as isize
        };
        signed as f64 * self.dual_spacing()
    }

    pub fn point(&self, i1: usize, i2: usize) -> Vec2 {
        Vec2::new(self.coord(i1), self.coord(i2))
    }

    /// Flat index of node `(i1, i2)`; `i1` runs fastest.
    pub fn index(&self, i1: usize, i2: usize) -> usize {
        i2 * self.n + i1
    }

    pub fn point_at(&self, idx: usize) -> Vec2 {
        self.point(idx % self.n, idx / self.n)
    }

    pub fn wavevector_at(&self, idx: usize) -> Vec2 {
        Vec2::new(self.wavenumber(idx % self.n), self.wavenumber(idx / self.n))
    }

    /// Nearest node to `x` along one axis, wrapped into the period.
    pub fn nearest_axis(&self, x: f64) -> usize {
        let j = (x / self.spacing()).round() as i64 + (self.n / 2) as i64;
        j.rem_euclid(self.n as i64) as usize
    }

    pub fn nearest(&self, p: Vec2) -> (usize, usize) {
        (self.nearest_axis(p.x), self.nearest_axis(p.y))
    }

    /// Rounds `p` to the nearest node position.
    pub fn snap(&self, p: Vec2) -> Vec2 {
        let dx = self.spacing();
        Vec2::new((p.x / dx).round() * dx, (p.y / dx).round() * dx)
    }

    pub fn check_same(&self, other: &TransverseGrid) -> Result<()> {
        if self.n != other.n {
            return Err(Error::GridMismatch {
                expected: self.n,
                found: other.n,
            });
        }
        if self.extent != other.extent {
            return Err(Error::invalid(
                "grid_extent",
                format!("fields on extents {} and {}", self.extent, other.extent),
            ));
        }
        Ok(())
    }

    /// True when `p` lies in the central half `[-extent/4, extent/4]^2`.
    pub fn in_central_half(&self, p: Vec2) -> bool {
        let q = self.extent / 4.0;
        p.x.abs() <= q && p.y.abs() <= q
    }
}
