//! Prediction engine: quadratures of the mean and covariance of the
//! refocused field and their strong-scattering closed forms.
//!
//! Except for [`mean_field_m1`], which keeps every finite-parameter term,
//! all predictions are the scintillation-limit forms: the medium correlation
//! length is small compared with the mirror radii and the distance.

pub mod bessel;
pub mod homogeneous;
pub mod quadrature;

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, MirrorSpec};
use crate::error::{Error, Result};
use crate::medium::MediumModel;
use crate::timereversal::{EmissionVariant, ImageFunction};
use crate::vec2::Vec2;

pub use homogeneous::HomogeneousChain;
pub use quadrature::{Estimate, QuadOptions};

use quadrature::{integrate, integrate_2d};

/// Gaussian envelopes are truncated once they fall below `exp(-TAIL)`.
const TAIL: f64 = 36.0;

/// Physical inputs of the moment formulas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentParams {
    pub k0: f64,
    pub distance: f64,
    pub r_0: f64,
    pub rho_0: f64,
    pub medium: MediumModel,
    pub quad: QuadOptions,
}

impl MomentParams {
    pub fn new(k0: f64, distance: f64, r_0: f64, rho_0: f64, medium: MediumModel) -> Result<Self> {
        for (name, v) in [("k0", k0), ("r_0", r_0), ("rho_0", rho_0)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(name, format!("{v} must be positive")));
            }
        }
        if !(distance.is_finite() && distance >= 0.0) {
            return Err(Error::invalid("L", format!("{distance} must be >= 0")));
        }
        if rho_0 > r_0 {
            return Err(Error::invalid(
                "rho_0",
                format!("element radius {rho_0} exceeds r_0 = {r_0}"),
            ));
        }
        medium.validate()?;
        Ok(MomentParams {
            k0,
            distance,
            r_0,
            rho_0,
            medium,
            quad: QuadOptions::default(),
        })
    }

    pub fn from_mirror(
        k0: f64,
        distance: f64,
        mirror: &MirrorSpec,
        medium: MediumModel,
    ) -> Result<Self> {
        MomentParams::new(k0, distance, mirror.r_0, mirror.rho_0, medium)
    }

    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        MomentParams::from_mirror(cfg.k0, cfg.distance, &cfg.mirror, cfg.medium)
    }

    /// `k0^2 C(0) L / 4`, the distance in units of the mean free path.
    pub fn gamma(&self) -> f64 {
        self.k0 * self.k0 * self.medium.c0() * self.distance / 4.0
    }

    /// `sigma^2 k0^2 l_c L`.
    pub fn strength(&self) -> f64 {
        4.0 * self.gamma()
    }

    /// `sigma^2 L^3 / (6 l_c)`: squared radius of the diffuse beam.
    pub fn q6(&self) -> f64 {
        self.medium.sigma * self.medium.sigma * self.distance.powi(3) / (6.0 * self.medium.l_c)
    }

    /// `sigma^2 L^3 / (24 l_c)`.
    pub fn q24(&self) -> f64 {
        self.q6() / 4.0
    }

    fn eta(&self) -> f64 {
        self.distance / self.k0
    }

    fn sum_sq(&self) -> f64 {
        self.r_0 * self.r_0 + self.rho_0 * self.rho_0
    }

    fn diff_sq(&self) -> f64 {
        self.r_0 * self.r_0 - self.rho_0 * self.rho_0
    }

    /// `(k0^2 / 4) int_0^L C(p - xi z / k0) dz`.
    pub fn path_exponent(&self, p: Vec2, xi: Vec2) -> f64 {
        let lc = self.medium.l_c;
        self.gamma()
            * self
                .medium
                .profile
                .line_mean(p * (1.0 / lc), xi * (-self.eta() / lc))
    }

    /// `(k0^2 / 4) int_0^L C(beta z / k0) dz` for `|beta| = b`.
    fn radial_exponent(&self, b: f64) -> f64 {
        self.gamma()
            * self
                .medium
                .profile
                .radial_line_mean(b * self.eta() / self.medium.l_c)
    }

    /// Number of initial sub-intervals for a wavevector range of length
    /// `span`, resolving the scale `l_c k0 / L` of the path exponent.
    fn splits(&self, span: f64) -> usize {
        let feature = self.medium.l_c / self.eta().max(f64::MIN_POSITIVE);
        ((span / feature).ceil() as usize).clamp(4, 32)
    }

    fn xi_box(&self, center: Vec2, halfwidth: f64) -> ((f64, f64), (f64, f64), usize) {
        (
            (center.x - halfwidth, center.x + halfwidth),
            (center.y - halfwidth, center.y + halfwidth),
            self.splits(2.0 * halfwidth),
        )
    }
}

fn integrate_box<F>(
    f: F,
    bx: ((f64, f64), (f64, f64), usize),
    opts: &QuadOptions,
) -> Result<Estimate<Complex64>>
where
    F: FnMut(f64, f64) -> Result<Complex64>,
{
    let ((ax, bxx), (ay, by), splits) = bx;
    let opts = opts.with_splits(splits);
    integrate_2d(f, ax, bxx, |_| (ay, by), &opts)
}

fn scale(e: Estimate<Complex64>, s: f64) -> Estimate<Complex64> {
    Estimate {
        value: e.value * s,
        error: e.error * s.abs(),
    }
}

/// Finite-parameter mean field `E[u_tr(r + q/2; r - q/2)]`.
pub fn mean_field_m1(r: Vec2, q: Vec2, p: &MomentParams) -> Result<Estimate<Complex64>> {
    let r0 = p.r_0;
    let rho = p.rho_0;
    let eta = p.eta();
    let gamma = p.gamma();
    let half = (4.0 * TAIL).sqrt() / r0;
    let est = integrate_box(
        |x1, x2| {
            let xi = Vec2::new(x1, x2);
            let mismatch = (q - xi * eta).norm_sq() / (4.0 * rho * rho);
            let expo = -r0 * r0 * xi.norm_sq() / 4.0 - mismatch + p.path_exponent(q, xi) - gamma;
            Ok(Complex64::from_polar(expo.exp(), xi.dot(r)))
        },
        p.xi_box(Vec2::ZERO, half),
        &p.quad,
    )?;
    Ok(scale(est, r0 * r0 / (4.0 * PI)))
}

/// Limit of the mean field at offset `x` from a source at `y`, with linear
/// phase `b` on the mirror.
pub fn limit_mean_shifted(
    x: Vec2,
    y: Vec2,
    b: Vec2,
    p: &MomentParams,
) -> Result<Estimate<Complex64>> {
    let r0 = p.r_0;
    let gamma = p.gamma();
    let center = b * (1.0 / (r0 * r0));
    let half = (4.0 * TAIL).sqrt() / r0;
    let est = integrate_box(
        |x1, x2| {
            let xi = Vec2::new(x1, x2);
            let expo = -r0 * r0 * (xi - center).norm_sq() / 4.0 + p.path_exponent(x, xi) - gamma;
            Ok(Complex64::from_polar(expo.exp(), xi.dot(y)))
        },
        p.xi_box(center, half),
        &p.quad,
    )?;
    let damping = (-p.rho_0 * p.rho_0 * b.norm_sq() / (4.0 * r0 * r0 * p.diff_sq())).exp();
    Ok(scale(est, damping * r0 * r0 / (4.0 * PI)))
}

/// Limit of the mean refocused field at offset `x` from a source at `y`.
pub fn limit_mean_refocused(x: Vec2, y: Vec2, p: &MomentParams) -> Result<Estimate<Complex64>> {
    limit_mean_shifted(x, y, Vec2::ZERO, p)
}

/// Mean amplitude at the focal point (`x = 0`).
pub fn peak_amplitude(y: Vec2, p: &MomentParams) -> Result<Estimate<Complex64>> {
    limit_mean_refocused(Vec2::ZERO, y, p)
}

/// Mean amplitude far from the focal point: `exp(-|y|^2/r_0^2 - k0^2 C(0) L / 4)`.
pub fn background_amplitude(y: Vec2, p: &MomentParams) -> f64 {
    (-y.norm_sq() / (p.r_0 * p.r_0) - p.gamma()).exp()
}

/// Peak intensity `|U_peak - U_background|^2` for a source at `y`, by 2D
/// quadrature over the wavevector.
pub fn peak_intensity_at(y: Vec2, p: &MomentParams) -> Result<Estimate<f64>> {
    let r0 = p.r_0;
    let gamma = p.gamma();
    let half = (4.0 * (TAIL + gamma)).sqrt() / r0;
    let est = integrate_box(
        |x1, x2| {
            let xi = Vec2::new(x1, x2);
            let envelope = (-r0 * r0 * xi.norm_sq() / 4.0 - gamma).exp();
            let bracket = p.radial_exponent(xi.norm()).exp_m1();
            Ok(Complex64::from_polar(envelope * bracket, xi.dot(y)))
        },
        p.xi_box(Vec2::ZERO, half),
        &p.quad,
    )?;
    let amp = scale(est, r0 * r0 / (4.0 * PI));
    Ok(Estimate {
        value: amp.value.norm_sqr(),
        error: 2.0 * amp.value.norm() * amp.error + amp.error * amp.error,
    })
}

/// Peak intensity for a centered source, radial form.
pub fn peak_intensity(p: &MomentParams) -> Result<Estimate<f64>> {
    let gamma = p.gamma();
    let kappa = 2f64.sqrt() * p.distance / (p.k0 * p.medium.l_c * p.r_0);
    let a_max = (2.0 * (TAIL + gamma)).sqrt();
    let est = integrate(
        |a| {
            let u = a * kappa;
            let bracket = (gamma * p.medium.profile.radial_line_mean(u)).exp_m1();
            Ok(a * (-0.5 * a * a - gamma).exp() * bracket)
        },
        0.0,
        a_max,
        &p.quad.with_splits(8),
    )?;
    Ok(Estimate {
        value: est.value * est.value,
        error: 2.0 * est.value.abs() * est.error + est.error * est.error,
    })
}

/// Background (speckle) intensity for a centered source, radial form with
/// the Bessel kernel.
pub fn background_intensity(p: &MomentParams) -> Result<Estimate<f64>> {
    let gamma = p.gamma();
    let sum = p.sum_sq();
    let c = p.diff_sq() / sum;
    let kappa = 2.0 * p.distance / (p.k0 * p.medium.l_c * sum.sqrt());
    let prefactor = (2.0 * p.r_0 * p.rho_0 / sum).powi(2);
    let profile = p.medium.profile;
    let a_max = (2.0 * (TAIL + 4.0) / (1.0 - c * c)).sqrt();
    let band = (2.0 * (TAIL + 4.0)).sqrt();
    let opts = p
        .quad
        .with_abs_tol(p.quad.abs_tol / prefactor.max(1e-300))
        .with_splits(16);
    let est = integrate_2d(
        |a, b| {
            let ab = a * b;
            let expo = -0.5 * (a * a + b * b) + c * ab - 2.0 * gamma;
            let bracket = (gamma
                * (profile.radial_line_mean(a * kappa) + profile.radial_line_mean(b * kappa)))
            .exp_m1();
            Ok(ab * expo.exp() * bessel::i0e(c * ab) * bracket)
        },
        0.0,
        a_max,
        |a| ((c * a - band).max(0.0), c * a + band),
        &opts,
    )?;
    Ok(Estimate {
        value: prefactor * est.value,
        error: prefactor * est.error,
    })
}

/// Background intensity for a source at `y`, through the covariance route.
pub fn background_intensity_at(y: Vec2, p: &MomentParams) -> Result<Estimate<f64>> {
    let e = covariance_refocused(Vec2::ZERO, Vec2::ZERO, y, p)?;
    Ok(Estimate {
        value: e.value.re,
        error: e.error,
    })
}

/// `int_0^{2 pi} exp(b (w_x cos t + w_y sin t) - b |Re w|) dt` for complex
/// `w`, by the trapezoid rule.
///
/// For large `b |Re w|` the integrand is a narrow bump around the direction
/// of `Re w` and only a window of a few widths is summed.
fn angular_kernel_scaled(b: f64, w_re: Vec2, w_im: Vec2) -> Complex64 {
    let x = b * w_re.norm();
    let osc = b * w_im.norm();
    let (center, half) = if x > 50.0 {
        (
            w_re.y.atan2(w_re.x),
            (2.0 * (TAIL + 4.0) / x).sqrt().min(PI),
        )
    } else {
        (0.0, PI)
    };
    let spacing = (0.8 / x.max(1.0).sqrt()).min(1.0 / (osc + 1.0));
    let m = ((2.0 * half / spacing).ceil() as usize + 16).next_multiple_of(8);
    let h = 2.0 * half / m as f64;
    let mut acc = Complex64::new(0.0, 0.0);
    for j in 0..m {
        let (s, c) = (center - half + j as f64 * h).sin_cos();
        let re = b * (w_re.x * c + w_re.y * s) - x;
        let im = b * (w_im.x * c + w_im.y * s);
        acc += Complex64::from_polar(re.exp(), im);
    }
    acc * h
}

/// Chebyshev interpolant of a smooth function on `[lo, hi]`.
struct Chebyshev {
    lo: f64,
    hi: f64,
    coeffs: Vec<f64>,
}

impl Chebyshev {
    /// Fits on Chebyshev nodes, doubling the degree until the trailing
    /// coefficients are negligible.
    fn fit<F: FnMut(f64) -> Result<f64>>(mut f: F, lo: f64, hi: f64) -> Result<Self> {
        let mut n = 128;
        loop {
            let values: Vec<f64> = (0..n)
                .map(|k| {
                    let t = (PI * (k as f64 + 0.5) / n as f64).cos();
                    f(lo + 0.5 * (t + 1.0) * (hi - lo))
                })
                .collect::<Result<_>>()?;
            let coeffs: Vec<f64> = (0..n)
                .map(|j| {
                    let s: f64 = values
                        .iter()
                        .enumerate()
                        .map(|(k, v)| v * (PI * j as f64 * (k as f64 + 0.5) / n as f64).cos())
                        .sum();
                    s * if j == 0 { 1.0 } else { 2.0 } / n as f64
                })
                .collect();
            let scale = coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
            let tail = coeffs[n - n / 8..]
                .iter()
                .fold(0.0f64, |m, c| m.max(c.abs()));
            if tail <= 1e-13 * scale.max(f64::MIN_POSITIVE) || n >= 2048 {
                if tail > 1e-9 * scale {
                    return Err(Error::Quadrature {
                        value: scale,
                        error: tail,
                        intervals: n,
                    });
                }
                return Ok(Chebyshev { lo, hi, coeffs });
            }
            n *= 2;
        }
    }

    fn eval(&self, x: f64) -> f64 {
        let t = (2.0 * x - self.lo - self.hi) / (self.hi - self.lo);
        let (mut b1, mut b2) = (0.0, 0.0);
        for &c in self.coeffs[1..].iter().rev() {
            let b0 = 2.0 * t * b1 - b2 + c;
            b2 = b1;
            b1 = b0;
        }
        t * b1 - b2 + self.coeffs[0]
    }
}

/// Limit covariance `Cov(u(x + h/2), u(x - h/2))` of the refocused field for
/// a source at `y`. The value does not depend on `x`.
///
/// The `beta` integral is done in polar form: its angular part is a Bessel
/// kernel for `y = 0` and a trapezoid sum otherwise, and the `-1` part of
/// the bracket is Gaussian in closed form. The `alpha` integral is a nested
/// adaptive 2D quadrature.
pub fn covariance_refocused(
    _x: Vec2,
    h: Vec2,
    y: Vec2,
    p: &MomentParams,
) -> Result<Estimate<Complex64>> {
    if p.medium.is_homogeneous() {
        return Ok(Estimate {
            value: Complex64::new(0.0, 0.0),
            error: 0.0,
        });
    }
    let gamma = p.gamma();
    let sum = p.sum_sq();
    let diff = p.diff_sq();
    let rr = p.r_0 * p.rho_0;
    let alpha_max = (2.0 * (TAIL + 2.0 * gamma) * sum).sqrt() / rr;
    let b_width = (8.0 * (TAIL + gamma) / sum).sqrt();
    let centered = y.norm_sq() == 0.0;
    let b_opts = p.quad.with_splits(4);
    let beta_term = |alpha: Vec2| -> Result<Complex64> {
        let w_re = alpha * (diff / 4.0);
        let w_im = -y;
        let a2 = alpha.norm_sq();
        let peak = diff * alpha.norm() / sum;
        let lo = (peak - b_width).max(0.0);
        let hi = peak + b_width;
        let e = integrate(
            |b| {
                let g = p.radial_exponent(b).exp_m1();
                let gauss = -sum * (a2 + b * b) / 8.0;
                if centered {
                    let z = b * w_re.norm();
                    Ok(Complex64::new(
                        2.0 * PI * b * g * (gauss + z).exp() * bessel::i0e(z),
                        0.0,
                    ))
                } else {
                    let k = angular_kernel_scaled(b, w_re, w_im);
                    Ok(k * (b * g * (gauss + b * w_re.norm()).exp()))
                }
            },
            lo,
            hi,
            &b_opts,
        )?;
        Ok(e.value)
    };
    // For a centered source the beta term depends on |alpha| only.
    let table = if centered {
        Some(Chebyshev::fit(
            |t| Ok(beta_term(Vec2::new(t, 0.0))?.re),
            0.0,
            alpha_max * 2f64.sqrt(),
        )?)
    } else {
        None
    };
    let est = integrate_box(
        |a1, a2| {
            let alpha = Vec2::new(a1, a2);
            let f = p.path_exponent(h, alpha);
            let w_re = alpha * (diff / 4.0);
            // exp(-sum |alpha|^2 / 8 + 2 v.v / sum) with v = w_re - i y.
            let vv_re = w_re.norm_sq() - y.norm_sq();
            let vv_im = -2.0 * w_re.dot(y);
            let closed = Complex64::from_polar(
                (-sum * alpha.norm_sq() / 8.0 + 2.0 * vv_re / sum).exp(),
                2.0 * vv_im / sum,
            ) * (8.0 * PI / sum * f.exp_m1());
            let beta = match &table {
                Some(t) => Complex64::new(t.eval(alpha.norm()), 0.0),
                None => beta_term(alpha)?,
            };
            let total = beta * f.exp() + closed;
            Ok(total * Complex64::from_polar((-2.0 * gamma).exp(), alpha.dot(y)))
        },
        p.xi_box(Vec2::ZERO, alpha_max),
        &p.quad,
    )?;
    Ok(scale(est, (rr / (4.0 * PI)).powi(2)))
}

/// Strong-scattering regime of the signal-to-noise ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SnrRegime {
    /// `rho_0^2 > sigma^2 L^3 / (6 l_c)`: elements wider than the diffuse
    /// beam; SNR close to 1.
    CoarseElements,
    /// `rho_0^2 < sigma^2 L^3 / (6 l_c) < r_0^2`: SNR set by the diffuse beam
    /// radius, about `sigma^2 L^3 / (6 l_c rho_0^2)`.
    DiffuseBeamLimited,
    /// `r_0^2 < sigma^2 L^3 / (6 l_c)`: SNR saturates at the number of
    /// elements `r_0^2 / rho_0^2`.
    ElementCount,
}

impl SnrRegime {
    pub fn classify(q6: f64, r_0: f64, rho_0: f64) -> Self {
        if rho_0 * rho_0 > q6 {
            SnrRegime::CoarseElements
        } else if q6 < r_0 * r_0 {
            SnrRegime::DiffuseBeamLimited
        } else {
            SnrRegime::ElementCount
        }
    }

    /// Leading-order SNR in this regime.
    pub fn approximation(self, q6: f64, r_0: f64, rho_0: f64) -> f64 {
        match self {
            SnrRegime::CoarseElements => 1.0,
            SnrRegime::DiffuseBeamLimited => q6 / (rho_0 * rho_0),
            SnrRegime::ElementCount => (r_0 * r_0) / (rho_0 * rho_0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SnrRegime::CoarseElements => "coarse-elements",
            SnrRegime::DiffuseBeamLimited => "diffuse-beam-limited",
            SnrRegime::ElementCount => "element-count",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SnrValue {
    Finite(f64),
    /// No scattering: the background vanishes.
    Infinite,
}

impl SnrValue {
    pub fn value(self) -> f64 {
        match self {
            SnrValue::Finite(v) => v,
            SnrValue::Infinite => f64::INFINITY,
        }
    }
}

impl std::fmt::Display for SnrValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SnrValue::Finite(v) => write!(f, "{v}"),
            SnrValue::Infinite => write!(f, "infinite (no scattering)"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnrReport {
    pub peak: Estimate<f64>,
    pub background: Estimate<f64>,
    pub quadrature: SnrValue,
    pub closed_form: f64,
    pub regime: SnrRegime,
    /// Warning raised when the closed form is outside its domain of validity.
    pub diagnostic: Option<String>,
}

/// Largest quartic correction accepted before [`snr`] flags the closed form.
pub const QUADRATIC_CORE_LIMIT: f64 = 0.05;

/// Size of the quartic term of the path exponent relative to the quadratic
/// one that the closed forms keep, evaluated at the typical mirror
/// wavevectors of the peak and background integrals. The closed forms are
/// exact for a quadratic covariance; this measures how far outside its
/// quadratic core the Gaussian `C` is sampled.
pub fn quadratic_core_defect(p: &MomentParams) -> f64 {
    let lc2 = p.medium.l_c * p.medium.l_c;
    let eta2 = p.eta() * p.eta();
    let q6 = p.q6();
    let u_p2 = 4.0 * eta2 / (lc2 * (p.r_0 * p.r_0 + q6));
    let u_b2 = 2.0 * eta2 / (lc2 * (p.rho_0 * p.rho_0 + q6));
    let g = p.gamma();
    (g * u_p2 * u_p2 / 20.0).max(g * u_b2 * u_b2 / 10.0)
}

/// `(1 + q6 / rho_0^2) / (1 + q6 / r_0^2)`.
pub fn snr_closed_form(q6: f64, r_0: f64, rho_0: f64) -> f64 {
    (1.0 + q6 / (rho_0 * rho_0)) / (1.0 + q6 / (r_0 * r_0))
}

pub fn snr(p: &MomentParams) -> Result<SnrReport> {
    let peak = peak_intensity(p)?;
    let background = background_intensity(p)?;
    let quadrature = if background.value <= 0.0 || p.medium.is_homogeneous() {
        SnrValue::Infinite
    } else {
        SnrValue::Finite(peak.value / background.value)
    };
    let q6 = p.q6();
    let defect = quadratic_core_defect(p);
    let diagnostic = if p.medium.is_homogeneous() {
        Some("homogeneous medium: closed form does not apply".to_string())
    } else if p.strength() < 10.0 {
        Some(format!(
            "sigma^2 k0^2 l_c L = {:.3} < 10: closed form outside its strong-scattering domain",
            p.strength()
        ))
    } else if defect > QUADRATIC_CORE_LIMIT {
        Some(format!(
            "quartic correction {defect:.3} > {QUADRATIC_CORE_LIMIT}: the focal spot samples C beyond its quadratic core"
        ))
    } else {
        None
    };
    Ok(SnrReport {
        peak,
        background,
        quadrature,
        closed_form: snr_closed_form(q6, p.r_0, p.rho_0),
        regime: SnrRegime::classify(q6, p.r_0, p.rho_0),
        diagnostic,
    })
}

/// Closed forms valid when `sigma^2 k0^2 l_c L >> 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrongScattering {
    /// Peak amplitude `1 / (1 + q6 / r_0^2)`.
    pub amplitude: f64,
    pub r_tr: f64,
    pub peak_intensity: f64,
    pub background_intensity: f64,
    pub snr: f64,
    pub alpha_l: f64,
    pub b_max: f64,
    pub r_max: f64,
}

impl StrongScattering {
    pub fn new(p: &MomentParams) -> Self {
        let r2 = p.r_0 * p.r_0;
        let rho2 = p.rho_0 * p.rho_0;
        let q6 = p.q6();
        let q24 = p.q24();
        let amplitude = 1.0 / (1.0 + q6 / r2);
        let strength = p.strength();
        let r_tr = if strength > 0.0 {
            (4.0 * p.medium.l_c / (p.medium.sigma.powi(2) * p.k0 * p.k0 * p.distance)
                * (1.0 + q6 / r2)
                / (1.0 + q24 / r2))
                .sqrt()
        } else {
            f64::INFINITY
        };
        let snr = snr_closed_form(q6, p.r_0, p.rho_0);
        let alpha_l = p.distance / (2.0 * p.k0 * r2 * (1.0 + q24 / r2));
        // b_max^2 = 2 r0^2 (r0^2 + q24) ln(SNR) / q24, with the q -> 0 limit
        // ln(SNR) / q24 -> 4 (1/rho0^2 - 1/r0^2) taken explicitly.
        let log_ratio_per_q24 = if q24 > 1e-10 * r2 {
            ((q6 / rho2).ln_1p() - (q6 / r2).ln_1p()) / q24
        } else {
            4.0 * (1.0 / rho2 - 1.0 / r2)
        };
        let b_max = (2.0 * r2 * (r2 + q24) * log_ratio_per_q24).max(0.0).sqrt();
        StrongScattering {
            amplitude,
            r_tr,
            peak_intensity: amplitude * amplitude,
            background_intensity: 1.0 / ((1.0 + q6 / r2) * (1.0 + q6 / rho2)),
            snr,
            alpha_l,
            b_max,
            r_max: alpha_l * b_max,
        }
    }
}

/// Gaussian peak `(1 / (1 + q6 / r_0^2)) exp(-|x|^2 / (2 R_tr^2))`.
pub fn strong_scattering_profile(x: Vec2, p: &MomentParams) -> Complex64 {
    let s = StrongScattering::new(p);
    Complex64::new(
        s.amplitude * (-x.norm_sq() / (2.0 * s.r_tr * s.r_tr)).exp(),
        0.0,
    )
}

/// Focal-spot steering by a linear phase `b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftParams {
    pub x_b: Vec2,
    pub alpha_l: f64,
    /// Amplitude damping of the shifted peak.
    pub damping: f64,
    pub snr_shifted: f64,
    pub b_max: f64,
    pub r_max: f64,
}

impl ShiftParams {
    /// Linear phase that steers the focus to `x_t`.
    pub fn phase_for_target(&self, x_t: Vec2) -> Vec2 {
        x_t * (1.0 / self.alpha_l)
    }
}

fn attenuation_rate(p: &MomentParams) -> f64 {
    let r2 = p.r_0 * p.r_0;
    let q24 = p.q24();
    q24 / (r2 + q24) + p.rho_0 * p.rho_0 / p.diff_sq()
}

pub fn shift_params(b: Vec2, p: &MomentParams) -> Result<ShiftParams> {
    if p.rho_0 >= p.r_0 {
        return Err(Error::invalid(
            "rho_0",
            "shift damping requires rho_0 < r_0",
        ));
    }
    let s = StrongScattering::new(p);
    let r2 = p.r_0 * p.r_0;
    let q24 = p.q24();
    let b2 = b.norm_sq();
    Ok(ShiftParams {
        x_b: b * s.alpha_l,
        alpha_l: s.alpha_l,
        damping: (-b2 / (4.0 * r2) * attenuation_rate(p)).exp(),
        snr_shifted: s.snr * (-b2 / (2.0 * r2) * q24 / (r2 + q24)).exp(),
        b_max: s.b_max,
        r_max: s.r_max,
    })
}

/// Mean transmitted image in the strong-scattering regime: the image dilated
/// by `alpha_L`, radially attenuated and blurred by the focal spot.
pub fn predict_image(x: Vec2, psi: &ImageFunction, p: &MomentParams) -> Complex64 {
    let s = StrongScattering::new(p);
    let rate = attenuation_rate(p) / (4.0 * p.r_0 * p.r_0);
    let sum: f64 = psi
        .weighted_points()
        .iter()
        .map(|pt| {
            let blur = (-(x - pt.b * s.alpha_l).norm_sq() / (2.0 * s.r_tr * s.r_tr)).exp();
            pt.weight * blur * (-pt.b.norm_sq() * rate).exp()
        })
        .sum();
    Complex64::new(s.amplitude * sum, 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelValues {
    pub k: f64,
    pub a: Estimate<Complex64>,
}

/// `K(z) = (2 pi)^8 exp(-k0^2 C(0) z / 2)`.
pub fn kernel_k(z: f64, p: &MomentParams) -> f64 {
    (2.0 * PI).powi(8) * (-p.k0 * p.k0 * p.medium.c0() * z / 2.0).exp()
}

/// `K(z)` and `A(z, xi, zeta)`.
pub fn k_and_a(z: f64, xi: Vec2, zeta: Vec2, p: &MomentParams) -> Result<KernelValues> {
    if !(z.is_finite() && z >= 0.0) {
        return Err(Error::invalid("z", format!("{z} must be >= 0")));
    }
    let k = kernel_k(z, p);
    let gamma_z = p.k0 * p.k0 * p.medium.c0() * z / 4.0;
    if z == 0.0 || gamma_z == 0.0 {
        return Ok(KernelValues {
            k,
            a: Estimate {
                value: Complex64::new(0.0, 0.0),
                error: 0.0,
            },
        });
    }
    let lc = p.medium.l_c;
    let end = zeta * (-z / p.k0);
    let margin = lc * (2.0 * (gamma_z / 1e-16).ln().max(0.0)).sqrt() + lc;
    let lo = Vec2::new(end.x.min(0.0) - margin, end.y.min(0.0) - margin);
    let hi = Vec2::new(end.x.max(0.0) + margin, end.y.max(0.0) + margin);
    let step = zeta * (z / (p.k0 * lc));
    let splits = (((hi.x - lo.x).max(hi.y - lo.y) / lc).ceil() as usize).clamp(4, 32);
    let est = integrate_box(
        |x1, x2| {
            let x = Vec2::new(x1, x2);
            let bracket = (gamma_z * p.medium.profile.line_mean(x * (1.0 / lc), step)).exp_m1();
            Ok(Complex64::from_polar(bracket, -xi.dot(x)))
        },
        ((lo.x, hi.x), (lo.y, hi.y), splits),
        &p.quad,
    )?;
    Ok(KernelValues {
        k,
        a: scale(est, 1.0 / (2.0 * (2.0 * PI).powi(2))),
    })
}

/// Offset pair at which the field covariance is probed: points `x + h/2`
/// and `x - h/2` relative to the source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub x: Vec2,
    pub h: Vec2,
}

/// Probe set with `h` along both axes at `{0, R/2, R, 2R, 4R}` and `x` at
/// `{0, R, 4R}` along the first axis.
pub fn default_probes(r_tr: f64) -> Vec<Probe> {
    let hs = [0.0, 0.5, 1.0, 2.0, 4.0];
    let xs = [0.0, 1.0, 4.0];
    let mut out = Vec::new();
    for &xm in &xs {
        for (i, &hm) in hs.iter().enumerate() {
            let x = Vec2::new(xm * r_tr, 0.0);
            out.push(Probe {
                x,
                h: Vec2::new(hm * r_tr, 0.0),
            });
            if i > 0 {
                out.push(Probe {
                    x,
                    h: Vec2::new(0.0, hm * r_tr),
                });
            }
        }
    }
    out
}

/// Bundle of predictions for one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentPrediction {
    pub params: MomentParams,
    /// Source position; profile and probe offsets are relative to it.
    pub source: Vec2,
    pub mean_profile: Vec<(Vec2, Estimate<Complex64>)>,
    pub covariance: Vec<(Probe, Estimate<Complex64>)>,
    pub u_peak: Estimate<Complex64>,
    pub u_background: Complex64,
    pub i_p: Estimate<f64>,
    pub i_b: Estimate<f64>,
    pub snr: SnrValue,
    pub closed: StrongScattering,
    pub snr_shifted: Vec<(Vec2, f64)>,
    pub k_of_l: f64,
}

impl MomentPrediction {
    /// Evaluates every prediction for a source at `y`: the mean profile at
    /// `offsets`, the covariance at `probes`, and the shifted SNR at `shifts`.
    pub fn evaluate(
        p: &MomentParams,
        y: Vec2,
        offsets: &[Vec2],
        probes: &[Probe],
        shifts: &[Vec2],
    ) -> Result<Self> {
        let mean_profile = offsets
            .iter()
            .map(|&x| Ok((x, limit_mean_refocused(x, y, p)?)))
            .collect::<Result<Vec<_>>>()?;
        let mut covariance: Vec<(Probe, Estimate<Complex64>)> = Vec::with_capacity(probes.len());
        for probe in probes {
            // The covariance does not depend on x; reuse equal h values.
            let cached = covariance
                .iter()
                .find(|(q, _)| q.h == probe.h)
                .map(|(_, e)| *e);
            let e = match cached {
                Some(e) => e,
                None => covariance_refocused(probe.x, probe.h, y, p)?,
            };
            covariance.push((*probe, e));
        }
        let centered = y.norm_sq() == 0.0;
        let (i_p, i_b) = if centered {
            (peak_intensity(p)?, background_intensity(p)?)
        } else {
            (peak_intensity_at(y, p)?, background_intensity_at(y, p)?)
        };
        let snr = if p.medium.is_homogeneous() || i_b.value <= 0.0 {
            SnrValue::Infinite
        } else {
            SnrValue::Finite(i_p.value / i_b.value)
        };
        let snr_shifted = shifts
            .iter()
            .map(|&b| Ok((b, shift_params(b, p)?.snr_shifted)))
            .collect::<Result<Vec<_>>>()?;
        Ok(MomentPrediction {
            params: *p,
            source: y,
            mean_profile,
            covariance,
            u_peak: peak_amplitude(y, p)?,
            u_background: Complex64::new(background_amplitude(y, p), 0.0),
            i_p,
            i_b,
            snr,
            closed: StrongScattering::new(p),
            snr_shifted,
            k_of_l: kernel_k(p.distance, p),
        })
    }
}

impl MomentPrediction {
    /// Predictions for one emission variant of an experiment. The mean
    /// profile is the exact finite-parameter field in a homogeneous medium
    /// and the limit mean (summed over image points) otherwise. The source is
    /// taken at the grid node the simulator uses.
    pub fn for_experiment(
        cfg: &ExperimentConfig,
        variant: &EmissionVariant,
        offsets: &[Vec2],
        probes: &[Probe],
        shifts: &[Vec2],
    ) -> Result<Self> {
        let p = MomentParams::from_config(cfg)?;
        let y = cfg.grid.snap(cfg.source_offset);
        let mut pred = MomentPrediction::evaluate(&p, y, &[], probes, shifts)?;
        pred.mean_profile = if p.medium.is_homogeneous() {
            let chain = HomogeneousChain::new(
                cfg.k0,
                cfg.distance,
                &cfg.mirror,
                y,
                cfg.source_width,
                variant.shift,
                variant.image.as_ref(),
            );
            offsets
                .iter()
                .map(|&x| {
                    (
                        x,
                        Estimate {
                            value: chain.field(y + x),
                            error: 0.0,
                        },
                    )
                })
                .collect()
        } else {
            let phases: Vec<(Vec2, f64)> = match &variant.image {
                None => vec![(variant.shift, 1.0)],
                Some(psi) => psi
                    .weighted_points()
                    .iter()
                    .map(|pt| (variant.shift + pt.b, pt.weight))
                    .collect(),
            };
            offsets
                .iter()
                .map(|&x| {
                    let mut acc = Estimate {
                        value: Complex64::new(0.0, 0.0),
                        error: 0.0,
                    };
                    for &(b, w) in &phases {
                        let e = limit_mean_shifted(x, y, b, &p)?;
                        acc.value += e.value * w;
                        acc.error += e.error * w.abs();
                    }
                    Ok((x, acc))
                })
                .collect::<Result<_>>()?
        };
        Ok(pred)
    }
}
