//! Adaptive Gauss-Kronrod (7/15) quadrature, globally adaptive, with a
//! nested 2D driver.

use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];

const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Values the integrator can accumulate.
pub trait QuadValue:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self>
{
    fn zero() -> Self;
    fn magnitude(&self) -> f64;
}

impl QuadValue for f64 {
    fn zero() -> Self {
        0.0
    }
    fn magnitude(&self) -> f64 {
        self.abs()
    }
}

impl QuadValue for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn magnitude(&self) -> f64 {
        self.norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
    /// Equal sub-intervals the range is cut into before adapting, so that
    /// narrow features are not missed by the first rule.
    pub initial_splits: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions {
            abs_tol: 1e-8,
            rel_tol: 1e-10,
            max_intervals: 2000,
            initial_splits: 4,
        }
    }
}

impl QuadOptions {
    pub fn with_abs_tol(mut self, tol: f64) -> Self {
        self.abs_tol = tol;
        self
    }

    pub fn with_splits(mut self, n: usize) -> Self {
        self.initial_splits = n.max(1);
        self
    }
}

/// An integral value with its estimated absolute error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate<T> {
    pub value: T,
    pub error: f64,
}

struct Piece<T> {
    a: f64,
    b: f64,
    value: T,
    error: f64,
}

fn gk15<T: QuadValue, F: FnMut(f64) -> Result<T>>(f: &mut F, a: f64, b: f64) -> Result<Piece<T>> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center)?;
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    let mut samples = [(T::zero(), T::zero()); 7];
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(center - dx)?;
        let f2 = f(center + dx)?;
        samples[j] = (f1, f2);
        kronrod = kronrod + (f1 + f2) * WGK[j];
        if j % 2 == 1 {
            gauss = gauss + (f1 + f2) * WG[j / 2];
        }
    }
    let mean = kronrod * 0.5;
    let mut resasc = WGK[7] * (fc - mean).magnitude();
    let mut resabs = WGK[7] * fc.magnitude();
    for j in 0..7 {
        let (f1, f2) = samples[j];
        resasc += WGK[j] * ((f1 - mean).magnitude() + (f2 - mean).magnitude());
        resabs += WGK[j] * (f1.magnitude() + f2.magnitude());
    }
    let scale = half.abs();
    resasc *= scale;
    resabs *= scale;
    let mut error = ((kronrod - gauss) * half).magnitude();
    if resasc > 0.0 && error > 0.0 {
        error = resasc * (200.0 * error / resasc).powf(1.5).min(1.0);
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        error = error.max(50.0 * f64::EPSILON * resabs);
    }
    Ok(Piece {
        a,
        b,
        value: kronrod * half,
        error,
    })
}

/// Integrates `f` over `[a, b]` to `max(abs_tol, rel_tol |I|)`.
pub fn integrate<T, F>(mut f: F, a: f64, b: f64, opts: &QuadOptions) -> Result<Estimate<T>>
where
    T: QuadValue,
    F: FnMut(f64) -> Result<T>,
{
    if a == b {
        return Ok(Estimate {
            value: T::zero(),
            error: 0.0,
        });
    }
    let splits = opts.initial_splits.max(1);
    let width = (b - a) / splits as f64;
    let mut pieces = Vec::with_capacity(splits * 4);
    for i in 0..splits {
        let lo = a + width * i as f64;
        let hi = if i + 1 == splits {
            b
        } else {
            a + width * (i + 1) as f64
        };
        pieces.push(gk15(&mut f, lo, hi)?);
    }
    loop {
        let total = pieces.iter().fold(T::zero(), |acc, p| acc + p.value);
        let error: f64 = pieces.iter().map(|p| p.error).sum();
        let target = opts.abs_tol.max(opts.rel_tol * total.magnitude());
        if error <= target {
            return Ok(Estimate {
                value: total,
                error,
            });
        }
        let (worst, _) = pieces
            .iter()
            .enumerate()
            .fold((0, -1.0), |(bi, be), (i, p)| {
                if p.error > be {
                    (i, p.error)
                } else {
                    (bi, be)
                }
            });
        let p = pieces.swap_remove(worst);
        let mid = 0.5 * (p.a + p.b);
        let unresolvable = mid <= p.a.min(p.b) || mid >= p.a.max(p.b);
        if pieces.len() + 2 > opts.max_intervals || unresolvable {
            return Err(Error::Quadrature {
                value: total.magnitude(),
                error,
                intervals: pieces.len() + 1,
            });
        }
        pieces.push(gk15(&mut f, p.a, mid)?);
        pieces.push(gk15(&mut f, mid, p.b)?);
    }
}

/// Iterated integral `int_ax^bx int_{lo(x)}^{hi(x)} f(x, y) dy dx`.
///
/// The inner tolerance is tightened by the outer width so inner errors do
/// not dominate; the reported error adds the worst inner error times the
/// outer width.
pub fn integrate_2d<T, F, R>(
    mut f: F,
    ax: f64,
    bx: f64,
    mut inner_range: R,
    opts: &QuadOptions,
) -> Result<Estimate<T>>
where
    T: QuadValue,
    F: FnMut(f64, f64) -> Result<T>,
    R: FnMut(f64) -> (f64, f64),
{
    let width = (bx - ax).abs().max(f64::MIN_POSITIVE);
    let inner_opts = QuadOptions {
        abs_tol: opts.abs_tol / (4.0 * width),
        ..*opts
    };
    let mut worst_inner = 0.0f64;
    let outer = integrate(
        |x| {
            let (lo, hi) = inner_range(x);
            let est = integrate(|y| f(x, y), lo, hi, &inner_opts)?;
            worst_inner = worst_inner.max(est.error);
            Ok(est.value)
        },
        ax,
        bx,
        opts,
    )?;
    Ok(Estimate {
        value: outer.value,
        error: outer.error + worst_inner * width,
    })
}
