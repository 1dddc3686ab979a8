use std::f64::consts::PI;

use num_complex::Complex64;

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::fft::Fft2;
use crate::field::ComplexField;
use crate::grid::TransverseGrid;
use crate::medium::{PhaseScreen, ScreenSynthesizer};
use crate::rng;
use crate::vec2::Vec2;

/// Order in which the screens of a realization are traversed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// From plane `z = 0` to plane `z = L`.
    Forward,
    /// From plane `z = L` to plane `z = 0` (screens in reverse order).
    Backward,
}

/// One frozen medium: an ordered list of Brownian increments.
#[derive(Debug, Clone, PartialEq)]
pub struct MediumRealization {
    pub grid: TransverseGrid,
    pub delta_z: f64,
    pub screens: Vec<PhaseScreen>,
    pub index: u64,
}

impl MediumRealization {
    /// Zero screens: pure Fresnel propagation.
    pub fn homogeneous(grid: TransverseGrid, distance: f64, n_steps: usize) -> Self {
        let delta_z = distance / n_steps as f64;
        MediumRealization {
            grid,
            delta_z,
            screens: (0..n_steps)
                .map(|_| PhaseScreen::zeros(grid, delta_z))
                .collect(),
            index: 0,
        }
    }

    /// Draws realization `index` of `cfg`'s medium from the derived streams.
    pub fn generate(cfg: &ExperimentConfig, index: u64) -> Result<Self> {
        if cfg.medium.is_homogeneous() {
            let mut r = MediumRealization::homogeneous(cfg.grid, cfg.distance, cfg.n_steps);
            r.index = index;
            return Ok(r);
        }
        let mut synth = ScreenSynthesizer::new(&cfg.medium, cfg.grid, cfg.delta_z())?;
        Ok(MediumRealization::generate_with(&mut synth, cfg, index))
    }

    /// As [`MediumRealization::generate`] with a caller-owned synthesizer.
    /// Screens `2p` and `2p + 1` come from stream `(seed, index, p)`.
    pub fn generate_with(
        synth: &mut ScreenSynthesizer,
        cfg: &ExperimentConfig,
        index: u64,
    ) -> Self {
        let mut screens = Vec::with_capacity(cfg.n_steps + 1);
        let mut pair = 0u64;
        while screens.len() < cfg.n_steps {
            let mut stream = rng::stream(cfg.master_seed, index, pair);
            let (a, b) = synth.synthesize_pair(&mut stream);
            screens.push(a);
            screens.push(b);
            pair += 1;
        }
        screens.truncate(cfg.n_steps);
        MediumRealization {
            grid: cfg.grid,
            delta_z: cfg.delta_z(),
            screens,
            index,
        }
    }

    pub fn distance(&self) -> f64 {
        self.delta_z * self.screens.len() as f64
    }

    pub fn n_steps(&self) -> usize {
        self.screens.len()
    }
}

/// Unimodular screen factors `exp(i k0 dB / 2)`, optionally multiplied by
/// the absorbing mask, ready for repeated propagation.
pub struct PreparedMedium {
    pub grid: TransverseGrid,
    pub delta_z: f64,
    factors: Vec<Vec<Complex64>>,
}

impl PreparedMedium {
    pub fn new(real: &MediumRealization, k0: f64, absorbing: bool) -> Self {
        let mask = absorbing.then(|| absorbing_mask(&real.grid));
        let factors = real
            .screens
            .iter()
            .map(|s| {
                s.values
                    .values
                    .iter()
                    .enumerate()
                    .map(|(i, &db)| {
                        let f = Complex64::from_polar(1.0, 0.5 * k0 * db);
                        match &mask {
                            Some(m) => f * m[i],
                            None => f,
                        }
                    })
                    .collect()
            })
            .collect();
        PreparedMedium {
            grid: real.grid,
            delta_z: real.delta_z,
            factors,
        }
    }

    pub fn n_steps(&self) -> usize {
        self.factors.len()
    }
}

/// Super-Gaussian absorbing layer `exp(-(|x| / (0.45 extent))^16)`.
pub fn absorbing_mask(grid: &TransverseGrid) -> Vec<f64> {
    let a = 0.45 * grid.extent();
    (0..grid.len())
        .map(|i| {
            let r = grid.point_at(i).norm() / a;
            (-(r * r).powi(8)).exp()
        })
        .collect()
}

type StepObserver<'a> = &'a mut dyn FnMut(usize, &[Complex64]);

/// Split-step workspace for one grid and wavenumber. Not shareable across
/// threads; create one per worker.
pub struct Propagator {
    grid: TransverseGrid,
    k0: f64,
    fft: Fft2,
    cached_dz: f64,
    half: Vec<Complex64>,
    full: Vec<Complex64>,
    cached_rho: f64,
    smoothing: Vec<f64>,
}

impl Propagator {
    pub fn new(grid: TransverseGrid, k0: f64) -> Self {
        Propagator {
            grid,
            k0,
            fft: Fft2::new(grid.n()),
            cached_dz: f64::NAN,
            half: Vec::new(),
            full: Vec::new(),
            cached_rho: f64::NAN,
            smoothing: Vec::new(),
        }
    }

    pub fn grid(&self) -> &TransverseGrid {
        &self.grid
    }

    pub fn k0(&self) -> f64 {
        self.k0
    }

    fn multiplier(&self, dz: f64) -> Vec<Complex64> {
        let norm = 1.0 / self.grid.len() as f64;
        let c = -dz / (2.0 * self.k0);
        (0..self.grid.len())
            .map(|i| Complex64::from_polar(norm, c * self.grid.wavevector_at(i).norm_sq()))
            .collect()
    }

    fn ensure_step(&mut self, dz: f64) {
        if self.cached_dz != dz {
            self.half = self.multiplier(0.5 * dz);
            self.full = self.multiplier(dz);
            self.cached_dz = dz;
        }
    }

    /// Exact Fresnel propagation over `dz`.
    pub fn diffract(&mut self, data: &mut [Complex64], dz: f64) {
        if dz == 0.0 {
            return;
        }
        let m = self.multiplier(dz);
        self.fft.filter_symmetric(data, &m);
    }

    /// Strang-split propagation through `medium` in the given direction.
    pub fn propagate_in_place(
        &mut self,
        data: &mut [Complex64],
        medium: &PreparedMedium,
        dir: Direction,
    ) {
        self.run_steps(data, medium, dir, None);
    }

    /// As [`Propagator::propagate_in_place`], calling `observe(step, field)`
    /// with the completed field after each step `1..=n_steps`.
    pub fn propagate_observed(
        &mut self,
        data: &mut [Complex64],
        medium: &PreparedMedium,
        dir: Direction,
        observe: &mut dyn FnMut(usize, &[Complex64]),
    ) {
        self.run_steps(data, medium, dir, Some(observe));
    }

    fn run_steps(
        &mut self,
        data: &mut [Complex64],
        medium: &PreparedMedium,
        dir: Direction,
        mut observe: Option<StepObserver<'_>>,
    ) {
        let n = medium.n_steps();
        if n == 0 {
            return;
        }
        self.ensure_step(medium.delta_z);
        let half = std::mem::take(&mut self.half);
        let full = std::mem::take(&mut self.full);
        let mut scratch: Vec<Complex64> = Vec::new();
        self.fft.filter_symmetric(data, &half);
        for step in 0..n {
            let idx = match dir {
                Direction::Forward => step,
                Direction::Backward => n - 1 - step,
            };
            for (v, f) in data.iter_mut().zip(&medium.factors[idx]) {
                *v *= f;
            }
            if step + 1 == n {
                self.fft.filter_symmetric(data, &half);
                if let Some(obs) = observe.as_mut() {
                    obs(n, data);
                }
            } else {
                if let Some(obs) = observe.as_mut() {
                    scratch.clear();
                    scratch.extend_from_slice(data);
                    self.fft.filter_symmetric(&mut scratch, &half);
                    obs(step + 1, &scratch);
                }
                self.fft.filter_symmetric(data, &full);
            }
        }
        self.half = half;
        self.full = full;
    }

    /// Spectral convolution with the normalized Gaussian of radius `rho`.
    pub fn smooth(&mut self, data: &mut [Complex64], rho: f64) {
        if self.cached_rho != rho {
            let norm = 1.0 / self.grid.len() as f64;
            self.smoothing = (0..self.grid.len())
                .map(|i| norm * (-0.5 * rho * rho * self.grid.wavevector_at(i).norm_sq()).exp())
                .collect();
            self.cached_rho = rho;
        }
        self.fft.filter_symmetric_real(data, &self.smoothing);
    }
}

/// Regularized point source at the node nearest to `y`: the discrete delta
/// `1/dx^2` when `width` is `None`, otherwise the unit-mass Gaussian
/// `(2 pi w^2)^-1 exp(-|x - y|^2 / (2 w^2))`.
pub fn point_source(grid: &TransverseGrid, y: Vec2, width: Option<f64>) -> ComplexField {
    match width {
        None => {
            let mut f = ComplexField::zeros(*grid);
            let (i1, i2) = grid.nearest(y);
            let dx = grid.spacing();
            f.values[grid.index(i1, i2)] = Complex64::new(1.0 / (dx * dx), 0.0);
            f
        }
        Some(w) => {
            let c = 1.0 / (2.0 * PI * w * w);
            ComplexField::from_fn(*grid, |x| {
                Complex64::new(c * (-(x - y).norm_sq() / (2.0 * w * w)).exp(), 0.0)
            })
        }
    }
}

/// Analytic paraxial Gaussian beam: the field at distance `z` from the
/// initial profile `amp * exp(-|x - c|^2 / (2 w^2))`.
pub fn gaussian_beam(x: Vec2, center: Vec2, amp: f64, w: f64, z: f64, k0: f64) -> Complex64 {
    let q = Complex64::new(w * w, z / k0);
    amp * (w * w) / q * (-(x - center).norm_sq() / (2.0 * q)).exp()
}

pub fn diffraction_step(f: &ComplexField, dz: f64, k0: f64) -> Result<ComplexField> {
    if !(dz.is_finite() && dz >= 0.0) {
        return Err(Error::invalid("dz", format!("{dz} must be >= 0")));
    }
    let mut out = f.clone();
    Propagator::new(f.grid, k0).diffract(&mut out.values, dz);
    Ok(out)
}

pub fn screen_step(f: &ComplexField, s: &PhaseScreen, k0: f64) -> Result<ComplexField> {
    f.grid.check_same(s.grid())?;
    let values = f
        .values
        .iter()
        .zip(&s.values.values)
        .map(|(v, &db)| v * Complex64::from_polar(1.0, 0.5 * k0 * db))
        .collect();
    Ok(ComplexField {
        grid: f.grid,
        values,
    })
}

/// Forward propagation of `f0` through `real` without absorbing layer.
pub fn propagate(f0: &ComplexField, real: &MediumRealization, k0: f64) -> Result<ComplexField> {
    f0.grid.check_same(&real.grid)?;
    let medium = PreparedMedium::new(real, k0, false);
    let mut out = f0.clone();
    Propagator::new(f0.grid, k0).propagate_in_place(&mut out.values, &medium, Direction::Forward);
    Ok(out)
}

fn check_source(cfg: &ExperimentConfig, y: Vec2) -> Result<()> {
    if !cfg.grid.in_central_half(y) {
        return Err(Error::SourceOutsideSafeRegion { x: y.x, y: y.y });
    }
    Ok(())
}

/// Field at `z = L` radiated by a regularized source at `(y, 0)`.
pub fn green_field(
    y: Vec2,
    real: &MediumRealization,
    cfg: &ExperimentConfig,
) -> Result<ComplexField> {
    directed_green_field(y, real, cfg, Direction::Forward)
}

/// Field at `z = 0` radiated by a regularized source at `(y, L)`.
pub fn reverse_green_field(
    y: Vec2,
    real: &MediumRealization,
    cfg: &ExperimentConfig,
) -> Result<ComplexField> {
    directed_green_field(y, real, cfg, Direction::Backward)
}

fn directed_green_field(
    y: Vec2,
    real: &MediumRealization,
    cfg: &ExperimentConfig,
    dir: Direction,
) -> Result<ComplexField> {
    cfg.grid.check_same(&real.grid)?;
    check_source(cfg, y)?;
    let medium = PreparedMedium::new(real, cfg.k0, cfg.absorbing_boundary);
    let mut f = point_source(&cfg.grid, y, cfg.source_width);
    Propagator::new(cfg.grid, cfg.k0).propagate_in_place(&mut f.values, &medium, dir);
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::medium::{synthesize_screen, MediumModel};

    fn bumpy(grid: TransverseGrid) -> ComplexField {
        ComplexField::from_fn(grid, |p| {
            Complex64::new(
                (-p.norm_sq() / 8.0).exp() * (1.0 + 0.3 * p.x.sin()),
                0.2 * (p.y * 0.7).cos(),
            )
        })
    }

    #[test]
    fn zero_step_is_identity() {
        let g = TransverseGrid::new(32, 16.0).unwrap();
        let f = bumpy(g);
        assert_eq!(diffraction_step(&f, 0.0, 2.0).unwrap(), f);
    }

    #[test]
    fn uniform_field_is_invariant() {
        let g = TransverseGrid::new(32, 16.0).unwrap();
        let f = ComplexField::from_fn(g, |_| Complex64::new(0.7, -0.2));
        let out = diffraction_step(&f, 3.0, 1.5).unwrap();
        for v in &out.values {
            assert!((v - Complex64::new(0.7, -0.2)).norm() < 1e-14);
        }
    }

    #[test]
    fn gaussian_beam_matches_analytic_oracle() {
        let g = TransverseGrid::new(128, 64.0).unwrap();
        let (w, k0, z) = (2.0, 3.0, 25.0);
        let c = Vec2::new(1.25, -0.625);
        let f = ComplexField::from_fn(g, |x| gaussian_beam(x, c, 1.0, w, 0.0, k0));
        let out = diffraction_step(&f, z, k0).unwrap();
        let err = (0..g.len())
            .map(|i| (out.values[i] - gaussian_beam(g.point_at(i), c, 1.0, w, z, k0)).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn zero_and_unimodular_screens() {
        let g = TransverseGrid::new(32, 16.0).unwrap();
        let f = bumpy(g);
        let zero = PhaseScreen::zeros(g, 0.1);
        assert_eq!(screen_step(&f, &zero, 2.0).unwrap(), f);
        let m = MediumModel::gaussian(1.0, 1.0).unwrap();
        let s = synthesize_screen(&m, g, 0.5, &mut rng::stream(1, 2, 3)).unwrap();
        let out = screen_step(&f, &s, 2.0).unwrap();
        for (a, b) in out.values.iter().zip(&f.values) {
            assert!((a.norm() - b.norm()).abs() <= 1e-15 * b.norm().max(1e-300));
        }
        let other = TransverseGrid::new(16, 16.0).unwrap();
        assert!(screen_step(&ComplexField::zeros(other), &s, 1.0).is_err());
    }

    #[test]
    fn homogeneous_propagation_equals_single_diffraction() {
        let g = TransverseGrid::new(64, 32.0).unwrap();
        let f = bumpy(g);
        let real = MediumRealization::homogeneous(g, 7.0, 9);
        let a = propagate(&f, &real, 1.3).unwrap();
        let b = diffraction_step(&f, 7.0, 1.3).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn observed_snapshots_match_shorter_runs() {
        let g = TransverseGrid::new(32, 16.0).unwrap();
        let m = MediumModel::gaussian(0.5, 1.0).unwrap();
        let screens: Vec<_> = (0..4)
            .map(|s| synthesize_screen(&m, g, 0.5, &mut rng::stream(4, 0, s)).unwrap())
            .collect();
        let full = MediumRealization {
            grid: g,
            delta_z: 0.5,
            screens: screens.clone(),
            index: 0,
        };
        let short = MediumRealization {
            grid: g,
            delta_z: 0.5,
            screens: screens[..2].to_vec(),
            index: 0,
        };
        let f = bumpy(g);
        let mut p = Propagator::new(g, 2.0);
        let mut data = f.values.clone();
        let mut snap = Vec::new();
        p.propagate_observed(
            &mut data,
            &PreparedMedium::new(&full, 2.0, false),
            Direction::Forward,
            &mut |s, v| {
                if s == 2 {
                    snap = v.to_vec();
                }
            },
        );
        let expect = propagate(&f, &short, 2.0).unwrap();
        for (a, b) in snap.iter().zip(&expect.values) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn smoothing_preserves_constants() {
        let g = TransverseGrid::new(32, 16.0).unwrap();
        let mut data = vec![Complex64::new(2.0, 1.0); g.len()];
        Propagator::new(g, 1.0).smooth(&mut data, 1.5);
        for v in &data {
            assert!((v - Complex64::new(2.0, 1.0)).norm() < 1e-13);
        }
    }
}
