use num_complex::Complex64;

use crate::error::Result;
use crate::grid::TransverseGrid;
use crate::vec2::Vec2;

/// Complex amplitudes sampled on a [`TransverseGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    pub grid: TransverseGrid,
    pub values: Vec<Complex64>,
}

/// Real samples on a [`TransverseGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct RealField {
    pub grid: TransverseGrid,
    pub values: Vec<f64>,
}

impl ComplexField {
    pub fn zeros(grid: TransverseGrid) -> Self {
        ComplexField {
            grid,
            values: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn from_fn(grid: TransverseGrid, mut f: impl FnMut(Vec2) -> Complex64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.point_at(i))).collect();
        ComplexField { grid, values }
    }

    pub fn at(&self, i1: usize, i2: usize) -> Complex64 {
        self.values[self.grid.index(i1, i2)]
    }

    /// Value at the node nearest to `p`.
    pub fn sample(&self, p: Vec2) -> Complex64 {
        let (i1, i2) = self.grid.nearest(p);
        self.at(i1, i2)
    }

    /// Discrete L2 norm `sqrt(sum |u|^2 dx^2)`.
    pub fn norm_l2(&self) -> f64 {
        let dx = self.grid.spacing();
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt() * dx
    }

    pub fn intensity(&self) -> RealField {
        RealField {
            grid: self.grid,
            values: self.values.iter().map(|v| v.norm_sqr()).collect(),
        }
    }

    pub fn modulus(&self) -> RealField {
        RealField {
            grid: self.grid,
            values: self.values.iter().map(|v| v.norm()).collect(),
        }
    }

    pub fn scale(&mut self, s: Complex64) {
        self.values.iter_mut().for_each(|v| *v *= s);
    }

    pub fn conj(&self) -> ComplexField {
        ComplexField {
            grid: self.grid,
            values: self.values.iter().map(|v| v.conj()).collect(),
        }
    }

    /// `self += w * other`.
    pub fn add_scaled(&mut self, w: Complex64, other: &ComplexField) -> Result<()> {
        self.grid.check_same(&other.grid)?;
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += w * b;
        }
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.values
            .iter()
            .all(|v| v.re.is_finite() && v.im.is_finite())
    }
}

impl RealField {
    pub fn zeros(grid: TransverseGrid) -> Self {
        RealField {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn from_fn(grid: TransverseGrid, mut f: impl FnMut(Vec2) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.point_at(i))).collect();
        RealField { grid, values }
    }

    pub fn at(&self, i1: usize, i2: usize) -> f64 {
        self.values[self.grid.index(i1, i2)]
    }

    pub fn sample(&self, p: Vec2) -> f64 {
        let (i1, i2) = self.grid.nearest(p);
        self.at(i1, i2)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}
