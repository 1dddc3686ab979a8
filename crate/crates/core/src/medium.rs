use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::Fft2;
use crate::field::RealField;
use crate::grid::TransverseGrid;
use crate::vec2::Vec2;

/// Normalized isotropic covariance shape `C~(r)` with `C~(0) = 1`,
/// `C~'(0) = 0` and `C~''(0) = -1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovarianceProfile {
    /// `exp(-r^2 / 2)`.
    Gaussian,
}

impl CovarianceProfile {
    pub const ALL: [CovarianceProfile; 1] = [CovarianceProfile::Gaussian];

    pub fn name(self) -> &'static str {
        match self {
            CovarianceProfile::Gaussian => "gaussian",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        CovarianceProfile::ALL
            .into_iter()
            .find(|p| p.name() == name)
            .ok_or_else(|| {
                Error::invalid("profile", format!("unknown covariance profile `{name}`"))
            })
    }

    pub fn value(self, r: f64) -> f64 {
        match self {
            CovarianceProfile::Gaussian => (-0.5 * r * r).exp(),
        }
    }

    /// 2D Fourier transform of `C~(|x|)` at `|k| = kappa`.
    pub fn spectrum(self, kappa: f64) -> f64 {
        match self {
            CovarianceProfile::Gaussian => 2.0 * PI * (-0.5 * kappa * kappa).exp(),
        }
    }

    /// `int_0^1 C~(|p + s d|) ds`.
    pub fn line_mean(self, p: Vec2, d: Vec2) -> f64 {
        match self {
            CovarianceProfile::Gaussian => gaussian_line_mean(p, d),
        }
    }

    /// `int_0^1 C~(u s) ds`.
    pub fn radial_line_mean(self, u: f64) -> f64 {
        match self {
            CovarianceProfile::Gaussian => {
                let u = u.abs();
                if u < 1e-4 {
                    let u2 = u * u;
                    1.0 - u2 / 6.0 + u2 * u2 / 40.0
                } else {
                    (PI / 2.0).sqrt() * libm::erf(u * FRAC_1_SQRT_2) / u
                }
            }
        }
    }
}

fn gaussian_line_mean(p: Vec2, d: Vec2) -> f64 {
    let d2 = d.norm_sq();
    if d2 < 1e-8 {
        // Three-point Gauss-Legendre on [0, 1]; error O(|d|^6).
        let nodes = [0.5 - 0.5 * 0.6_f64.sqrt(), 0.5, 0.5 + 0.5 * 0.6_f64.sqrt()];
        let weights = [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0];
        return nodes
            .iter()
            .zip(weights)
            .map(|(&s, w)| w * (-0.5 * (p + d * s).norm_sq()).exp())
            .sum();
    }
    let dn = d2.sqrt();
    let t0 = p.dot(d) / d2;
    let perp2 = (p.norm_sq() - p.dot(d) * t0).max(0.0);
    let a = dn * t0 * FRAC_1_SQRT_2;
    let b = dn * (1.0 + t0) * FRAC_1_SQRT_2;
    let diff = if a >= 0.0 {
        libm::erfc(a) - libm::erfc(b)
    } else if b <= 0.0 {
        libm::erfc(-b) - libm::erfc(-a)
    } else {
        libm::erf(b) - libm::erf(a)
    };
    (-0.5 * perp2).exp() * (PI / 2.0).sqrt() / dn * diff
}

/// Statistics of the random medium: `C(x) = sigma^2 l_c C~(|x| / l_c)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MediumModel {
    pub sigma: f64,
    pub l_c: f64,
    pub profile: CovarianceProfile,
}

impl MediumModel {
    pub fn new(sigma: f64, l_c: f64, profile: CovarianceProfile) -> Result<Self> {
        let m = MediumModel {
            sigma,
            l_c,
            profile,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn gaussian(sigma: f64, l_c: f64) -> Result<Self> {
        MediumModel::new(sigma, l_c, CovarianceProfile::Gaussian)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::invalid(
                "sigma",
                format!("{} must be finite and >= 0", self.sigma),
            ));
        }
        if !(self.l_c.is_finite() && self.l_c > 0.0) {
            return Err(Error::invalid(
                "l_c",
                format!("{} must be a positive length", self.l_c),
            ));
        }
        Ok(())
    }

    pub fn is_homogeneous(&self) -> bool {
        self.sigma == 0.0
    }

    /// `C(0) = sigma^2 l_c`.
    pub fn c0(&self) -> f64 {
        self.sigma * self.sigma * self.l_c
    }

    pub fn covariance_at(&self, x: Vec2) -> f64 {
        self.c0() * self.profile.value(x.norm() / self.l_c)
    }

    pub fn spectral_density(&self, k: Vec2) -> f64 {
        self.sigma * self.sigma * self.l_c.powi(3) * self.profile.spectrum(k.norm() * self.l_c)
    }

    /// `int_0^z C(p + s v) ds` for a straight path.
    pub fn path_integral(&self, p: Vec2, v: Vec2, z: f64) -> f64 {
        z * self.c0()
            * self
                .profile
                .line_mean(p * (1.0 / self.l_c), v * (z / self.l_c))
    }
}

pub fn covariance_at(m: &MediumModel, x: Vec2) -> f64 {
    m.covariance_at(x)
}

pub fn spectral_density(m: &MediumModel, k: Vec2) -> f64 {
    m.spectral_density(k)
}

/// One Brownian increment `Delta B` over a longitudinal step.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseScreen {
    pub values: RealField,
    pub delta_z: f64,
}

impl PhaseScreen {
    pub fn zeros(grid: TransverseGrid, delta_z: f64) -> Self {
        PhaseScreen {
            values: RealField::zeros(grid),
            delta_z,
        }
    }

    pub fn grid(&self) -> &TransverseGrid {
        &self.values.grid
    }
}

/// Checks that `grid` resolves the medium: spacing at most `l_c / 2` and
/// dual spacing at most `1 / l_c`.
pub fn check_resolution(m: &MediumModel, grid: &TransverseGrid) -> Result<()> {
    if grid.spacing() > m.l_c / 2.0 {
        return Err(Error::invalid(
            "grid_n",
            format!("spacing {} exceeds l_c/2 = {}", grid.spacing(), m.l_c / 2.0),
        ));
    }
    if grid.dual_spacing() > 1.0 / m.l_c {
        return Err(Error::invalid(
            "grid_extent",
            format!(
                "dual spacing {} exceeds 1/l_c = {}",
                grid.dual_spacing(),
                1.0 / m.l_c
            ),
        ));
    }
    Ok(())
}

/// Spectral screen generator with a cached filter.
///
/// Each transform of circular complex white noise yields two independent
/// real screens (real and imaginary parts): the filter is even in `k`, so the
/// cross-covariance of the two parts vanishes identically on the grid.
pub struct ScreenSynthesizer {
    grid: TransverseGrid,
    delta_z: f64,
    amplitude: Vec<f64>,
    fft: Fft2,
}

impl ScreenSynthesizer {
    pub fn new(m: &MediumModel, grid: TransverseGrid, delta_z: f64) -> Result<Self> {
        m.validate()?;
        if !(delta_z.is_finite() && delta_z >= 0.0) {
            return Err(Error::invalid("delta_z", format!("{delta_z} must be >= 0")));
        }
        check_resolution(m, &grid)?;
        // Transposed spectral layout; the filter is radial so this is the
        // same array as in natural layout.
        let scale = (2.0 * delta_z).sqrt() / grid.extent();
        let amplitude = (0..grid.len())
            .map(|i| scale * m.spectral_density(grid.wavevector_at(i)).sqrt())
            .collect();
        Ok(ScreenSynthesizer {
            grid,
            delta_z,
            amplitude,
            fft: Fft2::new(grid.n()),
        })
    }

    pub fn grid(&self) -> &TransverseGrid {
        &self.grid
    }

    pub fn synthesize_pair<R: Rng + ?Sized>(&mut self, rng: &mut R) -> (PhaseScreen, PhaseScreen) {
        let half = FRAC_1_SQRT_2;
        let mut buf: Vec<Complex64> = self
            .amplitude
            .iter()
            .map(|&a| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                Complex64::new(a * half * re, a * half * im)
            })
            .collect();
        self.fft.inverse_transposed(&mut buf);
        let first = RealField {
            grid: self.grid,
            values: buf.iter().map(|v| v.re).collect(),
        };
        let second = RealField {
            grid: self.grid,
            values: buf.iter().map(|v| v.im).collect(),
        };
        (
            PhaseScreen {
                values: first,
                delta_z: self.delta_z,
            },
            PhaseScreen {
                values: second,
                delta_z: self.delta_z,
            },
        )
    }
}

/// Draws one screen with covariance `delta_z * C(x - x')`.
pub fn synthesize_screen<R: Rng + ?Sized>(
    m: &MediumModel,
    grid: TransverseGrid,
    delta_z: f64,
    rng: &mut R,
) -> Result<PhaseScreen> {
    Ok(ScreenSynthesizer::new(m, grid, delta_z)?
        .synthesize_pair(rng)
        .0)
}
