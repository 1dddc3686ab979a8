use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, MirrorSpec};
use crate::error::{Error, Result};
use crate::field::ComplexField;
use crate::grid::TransverseGrid;
use crate::medium::ScreenSynthesizer;
use crate::propagator::{point_source, Direction, MediumRealization, PreparedMedium, Propagator};
use crate::vec2::Vec2;

/// A point of a discrete image: a Dirac mass of weight `weight` at `b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImagePoint {
    pub b: Vec2,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ImageRepr {
    Points(Vec<ImagePoint>),
    /// `n x n` cell-centered samples with the given spacing, centered on the
    /// origin, row-major with the first coordinate fastest.
    Sampled {
        n: usize,
        spacing: f64,
        values: Vec<f64>,
    },
}

/// Real-valued image transmitted by the phase-modulated mirror.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageFunction {
    pub repr: ImageRepr,
    pub support_radius: f64,
}

impl ImageFunction {
    pub fn points(points: Vec<ImagePoint>) -> Result<Self> {
        let support_radius = points.iter().map(|p| p.b.norm()).fold(0.0, f64::max);
        let img = ImageFunction {
            repr: ImageRepr::Points(points),
            support_radius,
        };
        img.validate()?;
        Ok(img)
    }

    pub fn single(b: Vec2, weight: f64) -> Self {
        ImageFunction {
            repr: ImageRepr::Points(vec![ImagePoint { b, weight }]),
            support_radius: b.norm(),
        }
    }

    /// Samples outside the disk of radius `support_radius` are dropped.
    pub fn sampled(n: usize, spacing: f64, values: Vec<f64>, support_radius: f64) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::invalid(
                "image",
                format!("expected {} samples, got {}", n * n, values.len()),
            ));
        }
        let img = ImageFunction {
            repr: ImageRepr::Sampled { n, spacing, values },
            support_radius,
        };
        img.validate()?;
        Ok(img)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.support_radius.is_finite() && self.support_radius >= 0.0) {
            return Err(Error::invalid("image", "support radius must be finite"));
        }
        match &self.repr {
            ImageRepr::Points(pts) => {
                if pts.is_empty() {
                    return Err(Error::invalid("image", "point set is empty"));
                }
                if pts
                    .iter()
                    .any(|p| !p.b.is_finite() || !p.weight.is_finite())
                {
                    return Err(Error::invalid("image", "non-finite point or weight"));
                }
                if pts
                    .iter()
                    .any(|p| p.b.norm() > self.support_radius * (1.0 + 1e-12))
                {
                    return Err(Error::invalid(
                        "image",
                        "point outside the declared support",
                    ));
                }
            }
            ImageRepr::Sampled {
                spacing, values, ..
            } => {
                if !(spacing.is_finite() && *spacing > 0.0) || values.iter().any(|v| !v.is_finite())
                {
                    return Err(Error::invalid(
                        "image",
                        "sampled image needs a positive spacing and finite values",
                    ));
                }
            }
        }
        Ok(())
    }

    /// The image as weighted Dirac masses; samples carry weight
    /// `value * spacing^2`.
    pub fn weighted_points(&self) -> Vec<ImagePoint> {
        match &self.repr {
            ImageRepr::Points(p) => p.clone(),
            ImageRepr::Sampled { n, spacing, values } => {
                let c = (*n as f64 - 1.0) / 2.0;
                let mut out = Vec::new();
                for j in 0..*n {
                    for i in 0..*n {
                        let b = Vec2::new((i as f64 - c) * spacing, (j as f64 - c) * spacing);
                        let v = values[j * n + i];
                        if v != 0.0 && b.norm() <= self.support_radius {
                            out.push(ImagePoint {
                                b,
                                weight: v * spacing * spacing,
                            });
                        }
                    }
                }
                out
            }
        }
    }

    /// `conj(psi_hat(xi))` with `psi_hat(xi) = int psi(b) exp(-i b.xi) db`.
    pub fn conj_transform(&self, xi: Vec2) -> Complex64 {
        self.weighted_points()
            .iter()
            .map(|p| p.weight * Complex64::from_polar(1.0, p.b.dot(xi)))
            .sum()
    }

    /// `psi -> eps^2 psi(eps x)`.
    pub fn rescaled(&self, eps: f64) -> Self {
        let repr = match &self.repr {
            ImageRepr::Points(pts) => ImageRepr::Points(
                pts.iter()
                    .map(|p| ImagePoint {
                        b: p.b * (1.0 / eps),
                        weight: p.weight,
                    })
                    .collect(),
            ),
            ImageRepr::Sampled { n, spacing, values } => ImageRepr::Sampled {
                n: *n,
                spacing: spacing / eps,
                values: values.iter().map(|v| v * eps * eps).collect(),
            },
        };
        ImageFunction {
            repr,
            support_radius: self.support_radius / eps,
        }
    }
}

/// Smoothed field recorded by the mirror.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordedField {
    pub u_rec: ComplexField,
    pub rho_0: f64,
}

/// Target-plane field of one two-leg run.
#[derive(Debug, Clone, PartialEq)]
pub struct RefocusedField {
    pub u_tr: ComplexField,
    pub realization: u64,
    pub shift: Vec2,
    pub image: Option<ImageFunction>,
}

fn check_element(grid: &TransverseGrid, rho_0: f64) -> Result<()> {
    if rho_0 < 2.0 * grid.spacing() {
        return Err(Error::invalid(
            "rho_0",
            format!(
                "element radius {rho_0} is below two grid spacings ({})",
                2.0 * grid.spacing()
            ),
        ));
    }
    Ok(())
}

/// Convolves `g` with the unit-mass Gaussian element kernel of radius `rho_0`.
pub fn record(g: &ComplexField, rho_0: f64) -> Result<RecordedField> {
    check_element(&g.grid, rho_0)?;
    let mut u_rec = g.clone();
    Propagator::new(g.grid, 1.0).smooth(&mut u_rec.values, rho_0);
    Ok(RecordedField { u_rec, rho_0 })
}

/// Mirror-plane factor `exp(-|x|^2/R_m^2 + i b.x/R_m^2) conj(psi_hat(x/R_m^2))`.
pub fn emission_mask(
    grid: &TransverseGrid,
    mirror: &MirrorSpec,
    b: Vec2,
    psi: Option<&ImageFunction>,
) -> Vec<Complex64> {
    let a2 = mirror.aperture_sq();
    let points = psi.map(|p| p.weighted_points());
    (0..grid.len())
        .map(|i| {
            let x = grid.point_at(i);
            let base = Complex64::from_polar((-x.norm_sq() / a2).exp(), b.dot(x) / a2);
            match &points {
                None => base,
                Some(pts) => {
                    let xi = x * (1.0 / a2);
                    let ft: Complex64 = pts
                        .iter()
                        .map(|p| p.weight * Complex64::from_polar(1.0, p.b.dot(xi)))
                        .sum();
                    base * ft
                }
            }
        })
        .collect()
}

/// Equivalent single source in the mirror plane: element smoothing of the
/// masked, conjugated recording.
pub fn emission_source(
    rec: &RecordedField,
    mirror: &MirrorSpec,
    b: Vec2,
    psi: Option<&ImageFunction>,
) -> Result<ComplexField> {
    let grid = rec.u_rec.grid;
    check_element(&grid, mirror.rho_0)?;
    let mask = emission_mask(&grid, mirror, b, psi);
    let mut s = ComplexField::zeros(grid);
    for ((out, m), u) in s.values.iter_mut().zip(&mask).zip(&rec.u_rec.values) {
        *out = m * u.conj();
    }
    Propagator::new(grid, 1.0).smooth(&mut s.values, mirror.rho_0);
    Ok(s)
}

/// Phase-modulation setting of the re-emission step.
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionVariant {
    pub shift: Vec2,
    pub image: Option<ImageFunction>,
}

impl EmissionVariant {
    pub fn of(cfg: &ExperimentConfig) -> Self {
        EmissionVariant {
            shift: cfg.shift,
            image: cfg.image.clone(),
        }
    }
}

/// Reusable workspace for two-leg runs of one configuration. Leg 1 is
/// shared by all emission variants of a realization.
pub struct ExperimentRunner {
    cfg: ExperimentConfig,
    variants: Vec<EmissionVariant>,
    masks: Vec<Vec<Complex64>>,
    propagator: Propagator,
    synth: Option<ScreenSynthesizer>,
    source: Vec2,
}

impl ExperimentRunner {
    pub fn new(cfg: &ExperimentConfig, variants: Vec<EmissionVariant>) -> Result<Self> {
        check_element(&cfg.grid, cfg.mirror.rho_0)?;
        if !cfg.grid.in_central_half(cfg.source_offset) {
            return Err(Error::SourceOutsideSafeRegion {
                x: cfg.source_offset.x,
                y: cfg.source_offset.y,
            });
        }
        let gain = cfg.mirror.emission_gain();
        let masks = variants
            .iter()
            .map(|v| {
                emission_mask(&cfg.grid, &cfg.mirror, v.shift, v.image.as_ref())
                    .into_iter()
                    .map(|m| m * gain)
                    .collect()
            })
            .collect();
        let synth = if cfg.medium.is_homogeneous() {
            None
        } else {
            Some(ScreenSynthesizer::new(
                &cfg.medium,
                cfg.grid,
                cfg.delta_z(),
            )?)
        };
        Ok(ExperimentRunner {
            cfg: cfg.clone(),
            variants,
            masks,
            propagator: Propagator::new(cfg.grid, cfg.k0),
            synth,
            source: cfg.grid.snap(cfg.source_offset),
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn variants(&self) -> &[EmissionVariant] {
        &self.variants
    }

    /// Source position actually used (snapped to the nearest node).
    pub fn source(&self) -> Vec2 {
        self.source
    }

    pub fn realization(&mut self, index: u64) -> MediumRealization {
        match self.synth.as_mut() {
            Some(s) => MediumRealization::generate_with(s, &self.cfg, index),
            None => {
                let mut r = MediumRealization::homogeneous(
                    self.cfg.grid,
                    self.cfg.distance,
                    self.cfg.n_steps,
                );
                r.index = index;
                r
            }
        }
    }

    /// Leg 1: source at `(y, L)` recorded at `z = 0` and element-smoothed.
    pub fn record_leg(&mut self, medium: &PreparedMedium) -> RecordedField {
        let mut g = point_source(&self.cfg.grid, self.source, self.cfg.source_width);
        self.propagator
            .propagate_in_place(&mut g.values, medium, Direction::Backward);
        self.propagator.smooth(&mut g.values, self.cfg.mirror.rho_0);
        RecordedField {
            u_rec: g,
            rho_0: self.cfg.mirror.rho_0,
        }
    }

    /// Both legs through `real` for every variant.
    pub fn run_on(&mut self, real: &MediumRealization) -> Result<Vec<RefocusedField>> {
        self.cfg.grid.check_same(&real.grid)?;
        let medium = PreparedMedium::new(real, self.cfg.k0, self.cfg.absorbing_boundary);
        let rec = self.record_leg(&medium);
        let mut out = Vec::with_capacity(self.variants.len());
        for (variant, mask) in self.variants.iter().zip(&self.masks) {
            let mut s = ComplexField::zeros(self.cfg.grid);
            for ((o, m), u) in s.values.iter_mut().zip(mask).zip(&rec.u_rec.values) {
                *o = m * u.conj();
            }
            self.propagator.smooth(&mut s.values, self.cfg.mirror.rho_0);
            self.propagator
                .propagate_in_place(&mut s.values, &medium, Direction::Forward);
            out.push(RefocusedField {
                u_tr: s,
                realization: real.index,
                shift: variant.shift,
                image: variant.image.clone(),
            });
        }
        Ok(out)
    }

    /// Draws realization `index` and runs it.
    pub fn run_index(&mut self, index: u64) -> Result<Vec<RefocusedField>> {
        let real = self.realization(index);
        self.run_on(&real)
    }
}

/// Full two-leg experiment for `cfg` through one frozen realization.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    realization: &MediumRealization,
) -> Result<RefocusedField> {
    let mut runner = ExperimentRunner::new(cfg, vec![EmissionVariant::of(cfg)])?;
    Ok(runner.run_on(realization)?.remove(0))
}
