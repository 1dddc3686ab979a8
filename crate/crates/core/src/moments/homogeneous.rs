//! Exact refocused field in a homogeneous medium.
//!
//! Every operation of the two-leg experiment maps complex Gaussians
//! `amp exp(-a |x|^2 + b.x)` to complex Gaussians, so at `sigma = 0` the
//! finite-parameter field has a closed form. It is the oracle for the
//! simulator in that case.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::config::MirrorSpec;
use crate::timereversal::ImageFunction;
use crate::vec2::Vec2;

/// `amp exp(-a |x|^2 + b.x)` with complex `a`, `b` (bilinear dot product).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexGaussian {
    pub amp: Complex64,
    pub a: Complex64,
    pub b: [Complex64; 2],
}

fn cdot(u: [Complex64; 2], v: [Complex64; 2]) -> Complex64 {
    u[0] * v[0] + u[1] * v[1]
}

impl ComplexGaussian {
    /// Unit-mass Gaussian `(2 pi w^2)^-1 exp(-|x - y|^2 / (2 w^2))`.
    pub fn normalized(y: Vec2, w: f64) -> Self {
        let a = 1.0 / (2.0 * w * w);
        ComplexGaussian {
            amp: Complex64::new((-y.norm_sq() * a).exp() / (2.0 * PI * w * w), 0.0),
            a: Complex64::new(a, 0.0),
            b: [
                Complex64::new(y.x / (w * w), 0.0),
                Complex64::new(y.y / (w * w), 0.0),
            ],
        }
    }

    pub fn eval(&self, x: Vec2) -> Complex64 {
        self.amp * (-self.a * x.norm_sq() + self.b[0] * x.x + self.b[1] * x.y).exp()
    }

    pub fn mul(&self, o: &ComplexGaussian) -> Self {
        ComplexGaussian {
            amp: self.amp * o.amp,
            a: self.a + o.a,
            b: [self.b[0] + o.b[0], self.b[1] + o.b[1]],
        }
    }

    pub fn conj(&self) -> Self {
        ComplexGaussian {
            amp: self.amp.conj(),
            a: self.a.conj(),
            b: [self.b[0].conj(), self.b[1].conj()],
        }
    }

    /// Convolution with the isotropic kernel `kappa exp(-c |x|^2)`; needs
    /// `Re(a + c) > 0`.
    pub fn convolve(&self, k: &Kernel) -> Self {
        let s = self.a + k.c;
        ComplexGaussian {
            amp: self.amp * k.kappa * PI / s * (cdot(self.b, self.b) / (4.0 * s)).exp(),
            a: self.a * k.c / s,
            b: [self.b[0] * k.c / s, self.b[1] * k.c / s],
        }
    }
}

/// Isotropic convolution kernel `kappa exp(-c |x|^2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kernel {
    pub kappa: Complex64,
    pub c: Complex64,
}

impl Kernel {
    /// Unit-mass Gaussian of radius `rho`.
    pub fn smoothing(rho: f64) -> Self {
        Kernel {
            kappa: Complex64::new(1.0 / (2.0 * PI * rho * rho), 0.0),
            c: Complex64::new(1.0 / (2.0 * rho * rho), 0.0),
        }
    }

    /// Paraxial free-space propagator over `z`, `(k0 / (2 pi i z)) exp(i k0 |x|^2 / (2 z))`.
    pub fn fresnel(k0: f64, z: f64) -> Self {
        Kernel {
            kappa: Complex64::new(0.0, -k0 / (2.0 * PI * z)),
            c: Complex64::new(0.0, -k0 / (2.0 * z)),
        }
    }

    /// The kernel applied to a unit point mass at `y`.
    fn at(&self, y: Vec2) -> ComplexGaussian {
        ComplexGaussian {
            amp: self.kappa * (-self.c * y.norm_sq()).exp(),
            a: self.c,
            b: [self.c * (2.0 * y.x), self.c * (2.0 * y.y)],
        }
    }
}

/// Two-leg experiment in a homogeneous medium, evaluated exactly.
#[derive(Debug, Clone)]
pub struct HomogeneousChain {
    terms: Vec<ComplexGaussian>,
}

impl HomogeneousChain {
    /// Source at `y` (unit point mass, or unit-mass Gaussian of radius
    /// `source_width`), mirror at distance `distance`, emission with linear
    /// phase `shift` and optional image.
    pub fn new(
        k0: f64,
        distance: f64,
        mirror: &MirrorSpec,
        y: Vec2,
        source_width: Option<f64>,
        shift: Vec2,
        image: Option<&ImageFunction>,
    ) -> Self {
        let smooth = Kernel::smoothing(mirror.rho_0);
        let fresnel = Kernel::fresnel(k0, distance);
        let recorded = match source_width {
            None => smooth.at(y).convolve(&fresnel),
            Some(w) => ComplexGaussian::normalized(y, w)
                .convolve(&smooth)
                .convolve(&fresnel),
        };
        let a2 = mirror.aperture_sq();
        let gain = mirror.emission_gain();
        let phases: Vec<(Vec2, f64)> = match image {
            None => vec![(shift, 1.0)],
            Some(psi) => psi
                .weighted_points()
                .iter()
                .map(|p| (shift + p.b, p.weight))
                .collect(),
        };
        let conj = recorded.conj();
        let terms = phases
            .into_iter()
            .map(|(b, weight)| {
                let mask = ComplexGaussian {
                    amp: Complex64::new(gain * weight, 0.0),
                    a: Complex64::new(1.0 / a2, 0.0),
                    b: [Complex64::new(0.0, b.x / a2), Complex64::new(0.0, b.y / a2)],
                };
                mask.mul(&conj).convolve(&smooth).convolve(&fresnel)
            })
            .collect();
        HomogeneousChain { terms }
    }

    pub fn field(&self, x: Vec2) -> Complex64 {
        self.terms.iter().map(|t| t.eval(x)).sum()
    }
}
