use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TransverseGrid;
use crate::medium::{self, CovarianceProfile, MediumModel};
use crate::timereversal::ImageFunction;
use crate::vec2::Vec2;

/// Gaussian mirror aperture with Gaussian elements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MirrorSpec {
    pub r_m: f64,
    pub rho_0: f64,
    /// Effective radius, `r_0^2 = R_m^2 + rho_0^2`.
    pub r_0: f64,
    /// `1/R_0^2 = (1/r_0^2 + 1/rho_0^2) / 2`.
    pub big_r_0: f64,
    /// Normalization constant of the refocused field, fixed to 1.
    pub c_0: f64,
}

pub fn derive_mirror(r_m: f64, rho_0: f64) -> Result<MirrorSpec> {
    if !(r_m.is_finite() && r_m > 0.0) {
        return Err(Error::invalid(
            "R_m",
            format!("{r_m} must be a positive length"),
        ));
    }
    if !(rho_0.is_finite() && rho_0 > 0.0) {
        return Err(Error::invalid(
            "rho_0",
            format!("{rho_0} must be a positive length"),
        ));
    }
    let r_0 = r_m.hypot(rho_0);
    let big_r_0 = (2.0 / (1.0 / (r_0 * r_0) + 1.0 / (rho_0 * rho_0))).sqrt();
    Ok(MirrorSpec {
        r_m,
        rho_0,
        r_0,
        big_r_0,
        c_0: 1.0,
    })
}

impl MirrorSpec {
    /// The normalization `(r_0^2 - rho_0^2) / (16 pi k0^2 rho_0^2 r_0^2)`
    /// that the unit convention `c_0 = 1` replaces.
    pub fn c_0_formula(&self, k0: f64) -> f64 {
        self.r_m * self.r_m / (16.0 * PI * k0 * k0 * self.rho_0 * self.rho_0 * self.r_0 * self.r_0)
    }

    /// Factor that maps the simulated two-leg field onto the `c_0 = 1`
    /// convention: `4 pi rho_0^2 r_0^2 / R_m^2`.
    pub fn emission_gain(&self) -> f64 {
        4.0 * PI * self.rho_0 * self.rho_0 * self.r_0 * self.r_0 / (self.r_m * self.r_m)
    }

    /// `r_0^2 - rho_0^2`, which equals `R_m^2` exactly by construction.
    pub fn aperture_sq(&self) -> f64 {
        self.r_m * self.r_m
    }
}

/// Scattering mean free path `4 / (sigma^2 k0^2 l_c)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeanFreePath {
    Finite(f64),
    /// `sigma = 0`: no scattering.
    Homogeneous,
}

impl MeanFreePath {
    pub fn value(self) -> f64 {
        match self {
            MeanFreePath::Finite(v) => v,
            MeanFreePath::Homogeneous => f64::INFINITY,
        }
    }
}

pub fn scattering_mean_free_path(m: &MediumModel, k0: f64) -> Result<MeanFreePath> {
    m.validate()?;
    if !(k0.is_finite() && k0 > 0.0) {
        return Err(Error::invalid("k0", format!("{k0} must be positive")));
    }
    if m.is_homogeneous() {
        return Ok(MeanFreePath::Homogeneous);
    }
    Ok(MeanFreePath::Finite(
        4.0 / (m.sigma * m.sigma * k0 * k0 * m.l_c),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingConfig {
    epsilon: f64,
}

impl ScalingConfig {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0 && epsilon <= 1.0) {
            return Err(Error::invalid(
                "epsilon",
                format!("{epsilon} is outside (0, 1]"),
            ));
        }
        Ok(ScalingConfig { epsilon })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

/// Everything that defines one time-reversal experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub k0: f64,
    pub distance: f64,
    pub mirror: MirrorSpec,
    pub source_offset: Vec2,
    pub shift: Vec2,
    pub image: Option<ImageFunction>,
    pub medium: MediumModel,
    pub grid: TransverseGrid,
    pub n_steps: usize,
    pub master_seed: u64,
    /// Width of the Gaussian source regularization; `None` uses the
    /// discrete (one-node) delta.
    pub source_width: Option<f64>,
    pub absorbing_boundary: bool,
}

impl ExperimentConfig {
    pub fn delta_z(&self) -> f64 {
        self.distance / self.n_steps as f64
    }

    /// `L / L_sca = k0^2 C(0) L / 4`.
    pub fn scattering_depth(&self) -> f64 {
        self.k0 * self.k0 * self.medium.c0() * self.distance / 4.0
    }

    /// Transverse walk-off of the Nyquist wavenumber over `L`, as a
    /// fraction of the grid extent: `L / (k0 dx^2 n) * pi`.
    pub fn fresnel_ratio(&self) -> f64 {
        let dx = self.grid.spacing();
        self.distance / (self.k0 * dx * dx * self.grid.n() as f64)
    }

    /// Checks every hard constraint and returns advisory warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        let mut warnings = Vec::new();
        positive("k0", self.k0)?;
        positive("L", self.distance)?;
        if self.n_steps == 0 {
            return Err(Error::invalid("n_steps", "must be at least 1"));
        }
        let mirror = derive_mirror(self.mirror.r_m, self.mirror.rho_0)?;
        if mirror != self.mirror {
            return Err(Error::invalid(
                "rho_0",
                "mirror derived quantities are inconsistent",
            ));
        }
        self.medium.validate()?;
        if !self.source_offset.is_finite() {
            return Err(Error::invalid("y_x", "source offset must be finite"));
        }
        if !self.shift.is_finite() {
            return Err(Error::invalid("b_x", "shift vector must be finite"));
        }
        let dx = self.grid.spacing();
        if !self.medium.is_homogeneous() {
            medium::check_resolution(&self.medium, &self.grid)?;
            let per_step = self.k0 * self.k0 * self.medium.c0() * self.delta_z() / 4.0;
            if per_step > 0.1 {
                return Err(Error::invalid(
                    "n_steps",
                    format!("per-step scattering k0^2 C(0) dz / 4 = {per_step:.4} exceeds 0.1"),
                ));
            }
            if self.grid.extent() < 8.0 * self.medium.l_c {
                warnings.push(format!(
                    "grid extent {} is below 8 l_c; screen periodization is not negligible",
                    self.grid.extent()
                ));
            }
        }
        let fresnel = self.fresnel_ratio();
        if fresnel > 1.0 / PI {
            return Err(Error::invalid(
                "grid_extent",
                format!("Fresnel ratio L/(k0 dx^2 n) = {fresnel:.4} exceeds 1/pi; the diffraction kernel aliases"),
            ));
        }
        if self.mirror.rho_0 < 2.0 * dx {
            return Err(Error::invalid(
                "rho_0",
                format!(
                    "{} is below two grid spacings ({})",
                    self.mirror.rho_0,
                    2.0 * dx
                ),
            ));
        }
        if let Some(w) = self.source_width {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::invalid("w_src", format!("{w} must be positive")));
            }
            if w > self.mirror.rho_0 / 4.0 {
                return Err(Error::invalid(
                    "w_src",
                    format!("{w} exceeds rho_0/4 = {}", self.mirror.rho_0 / 4.0),
                ));
            }
        }
        if !self.grid.in_central_half(self.source_offset) {
            return Err(Error::SourceOutsideSafeRegion {
                x: self.source_offset.x,
                y: self.source_offset.y,
            });
        }
        if 2.0 * self.mirror.r_0 > 0.45 * self.grid.extent() {
            warnings.push(format!(
                "mirror radius r_0 = {} is large compared to the grid extent {}",
                self.mirror.r_0,
                self.grid.extent()
            ));
        }
        if let Some(img) = &self.image {
            img.validate()?;
        }
        Ok(warnings)
    }
}

fn positive(field: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(field, format!("{v} must be positive")))
    }
}

/// Rescales a configuration into the scintillation regime: `sigma^2 -> eps
/// sigma^2`, mirror radii, `L`, `y` and `b` divided by `eps`, and the image
/// mapped to `eps^2 psi(eps x)`. Grid and step count are left as given.
pub fn apply_scintillation_scaling(
    cfg: &ExperimentConfig,
    s: ScalingConfig,
) -> Result<ExperimentConfig> {
    let eps = s.epsilon();
    let mut out = cfg.clone();
    out.medium.sigma = cfg.medium.sigma * eps.sqrt();
    out.mirror = derive_mirror(cfg.mirror.r_m / eps, cfg.mirror.rho_0 / eps)?;
    out.distance = cfg.distance / eps;
    out.source_offset = cfg.source_offset * (1.0 / eps);
    out.shift = cfg.shift * (1.0 / eps);
    out.image = cfg.image.as_ref().map(|img| img.rescaled(eps));
    Ok(out)
}

/// A parsed config file: the experiment plus run-level settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub experiment: ExperimentConfig,
    pub n_realizations: usize,
    pub epsilon: f64,
}

pub const CONFIG_KEYS: [&str; 19] = [
    "k0",
    "L",
    "R_m",
    "rho_0",
    "sigma",
    "l_c",
    "profile",
    "grid_n",
    "grid_extent",
    "n_steps",
    "y_x",
    "y_y",
    "b_x",
    "b_y",
    "seed",
    "n_realizations",
    "epsilon",
    "w_src",
    "absorbing",
];

const DEFAULT_REALIZATIONS: usize = 100;

impl RunConfig {
    /// Parses the flat `key = value` format. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: Vec<(&'static str, String, usize)> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::ConfigSyntax {
                line: lineno + 1,
                reason: format!("expected `key = value`, got `{line}`"),
            })?;
            let key = key.trim();
            let known = CONFIG_KEYS
                .iter()
                .find(|k| **k == key)
                .ok_or_else(|| Error::UnknownKey(key.to_string()))?;
            if entries.iter().any(|(k, _, _)| k == known) {
                return Err(Error::ConfigSyntax {
                    line: lineno + 1,
                    reason: format!("duplicate key `{key}`"),
                });
            }
            entries.push((known, value.trim().to_string(), lineno + 1));
        }
        let lookup = |key: &'static str| entries.iter().find(|(k, _, _)| *k == key);
        let num = |key: &'static str| -> Result<Option<f64>> {
            match lookup(key) {
                None => Ok(None),
                Some((_, v, line)) => v.parse::<f64>().map(Some).map_err(|_| Error::ConfigSyntax {
                    line: *line,
                    reason: format!("`{key}` expects a number, got `{v}`"),
                }),
            }
        };
        let int = |key: &'static str| -> Result<Option<u64>> {
            match lookup(key) {
                None => Ok(None),
                Some((_, v, line)) => v.parse::<u64>().map(Some).map_err(|_| Error::ConfigSyntax {
                    line: *line,
                    reason: format!("`{key}` expects a non-negative integer, got `{v}`"),
                }),
            }
        };
        let required =
            |key: &'static str| -> Result<f64> { num(key)?.ok_or(Error::MissingKey(key)) };

        let profile = match lookup("profile") {
            Some((_, v, _)) => CovarianceProfile::parse(v)?,
            None => CovarianceProfile::Gaussian,
        };
        let absorbing = match lookup("absorbing") {
            None => false,
            Some((_, v, line)) => match v.as_str() {
                "true" | "1" => true,
                "false" | "0" => false,
                _ => {
                    return Err(Error::ConfigSyntax {
                        line: *line,
                        reason: format!("`absorbing` expects true/false, got `{v}`"),
                    })
                }
            },
        };
        let w_src = num("w_src")?.unwrap_or(0.0);
        let grid_n = int("grid_n")?.ok_or(Error::MissingKey("grid_n"))? as usize;
        let experiment = ExperimentConfig {
            k0: required("k0")?,
            distance: required("L")?,
            mirror: derive_mirror(required("R_m")?, required("rho_0")?)?,
            source_offset: Vec2::new(num("y_x")?.unwrap_or(0.0), num("y_y")?.unwrap_or(0.0)),
            shift: Vec2::new(num("b_x")?.unwrap_or(0.0), num("b_y")?.unwrap_or(0.0)),
            image: None,
            medium: MediumModel::new(required("sigma")?, required("l_c")?, profile)?,
            grid: TransverseGrid::new(grid_n, required("grid_extent")?)?,
            n_steps: int("n_steps")?.ok_or(Error::MissingKey("n_steps"))? as usize,
            master_seed: int("seed")?.unwrap_or(0),
            source_width: if w_src > 0.0 { Some(w_src) } else { None },
            absorbing_boundary: absorbing,
        };
        let run = RunConfig {
            experiment,
            n_realizations: int("n_realizations")?
                .map(|v| v as usize)
                .unwrap_or(DEFAULT_REALIZATIONS),
            epsilon: num("epsilon")?.unwrap_or(1.0),
        };
        ScalingConfig::new(run.epsilon)?;
        Ok(run)
    }

    /// Canonical text form: every key, fixed order, shortest round-trip
    /// float formatting.
    pub fn to_text(&self) -> String {
        let e = &self.experiment;
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("k0", fmt_f64(e.k0));
        put("L", fmt_f64(e.distance));
        put("R_m", fmt_f64(e.mirror.r_m));
        put("rho_0", fmt_f64(e.mirror.rho_0));
        put("sigma", fmt_f64(e.medium.sigma));
        put("l_c", fmt_f64(e.medium.l_c));
        put("profile", e.medium.profile.name().to_string());
        put("grid_n", e.grid.n().to_string());
        put("grid_extent", fmt_f64(e.grid.extent()));
        put("n_steps", e.n_steps.to_string());
        put("y_x", fmt_f64(e.source_offset.x));
        put("y_y", fmt_f64(e.source_offset.y));
        put("b_x", fmt_f64(e.shift.x));
        put("b_y", fmt_f64(e.shift.y));
        put("seed", e.master_seed.to_string());
        put("n_realizations", self.n_realizations.to_string());
        put("epsilon", fmt_f64(self.epsilon));
        put("w_src", fmt_f64(e.source_width.unwrap_or(0.0)));
        put("absorbing", e.absorbing_boundary.to_string());
        s
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::parse(&text)
    }
}

fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) const SAMPLE: &str = "\
# sample
k0 = 1
L = 6
R_m = 16.8
rho_0 = 2.5
sigma = 0.5773502691896257
l_c = 1
grid_n = 64
grid_extent = 32
n_steps = 32
seed = 17
";

    #[test]
    fn derive_mirror_examples() {
        let m = derive_mirror(3.0, 4.0).unwrap();
        assert_eq!(m.r_0, 5.0);
        assert_eq!(m.c_0, 1.0);
        let tiny = derive_mirror(1.0, 1e-9).unwrap();
        assert!((tiny.r_0 - 1.0).abs() < 1e-15);
        // Harmonic-type mean of equal radii returns the radius.
        let r = 2.0f64;
        let big_r0 = (2.0 / (1.0 / (r * r) + 1.0 / (r * r))).sqrt();
        assert_eq!(big_r0, 2.0);
        assert!(m.big_r_0 <= (m.r_0 * 2f64.sqrt()).min(m.rho_0 * 2f64.sqrt()));
    }

    #[test]
    fn derive_mirror_names_offending_field() {
        match derive_mirror(-1.0, 1.0) {
            Err(Error::Validation { field, .. }) => assert_eq!(field, "R_m"),
            other => panic!("{other:?}"),
        }
        match derive_mirror(1.0, 0.0) {
            Err(Error::Validation { field, .. }) => assert_eq!(field, "rho_0"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn c0_formula_and_gain_are_reciprocal() {
        let m = derive_mirror(3.0, 1.5).unwrap();
        let k0 = 2.3;
        assert!((4.0 * k0 * k0 * m.c_0_formula(k0) * m.emission_gain() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn mean_free_path_examples() {
        let m = MediumModel::gaussian(1.0, 1.0).unwrap();
        assert_eq!(
            scattering_mean_free_path(&m, 1.0).unwrap(),
            MeanFreePath::Finite(4.0)
        );
        let m2 = MediumModel::gaussian(2.0, 1.0).unwrap();
        assert_eq!(
            scattering_mean_free_path(&m2, 1.0).unwrap(),
            MeanFreePath::Finite(1.0)
        );
        let h = MediumModel::gaussian(0.0, 1.0).unwrap();
        assert_eq!(
            scattering_mean_free_path(&h, 1.0).unwrap(),
            MeanFreePath::Homogeneous
        );
        // exp(-L / (2 L_sca)) = exp(-k0^2 C(0) L / 8).
        let (k0, l) = (1.7, 3.0);
        let m3 = MediumModel::gaussian(0.4, 1.2).unwrap();
        let lsca = scattering_mean_free_path(&m3, k0).unwrap().value();
        assert!(((-l / (2.0 * lsca)).exp() - (-k0 * k0 * m3.c0() * l / 8.0).exp()).abs() < 1e-15);
    }

    #[test]
    fn parse_and_print_round_trip() {
        let run = RunConfig::parse(SAMPLE).unwrap();
        assert_eq!(run.experiment.master_seed, 17);
        assert_eq!(run.n_realizations, DEFAULT_REALIZATIONS);
        let again = RunConfig::parse(&run.to_text()).unwrap();
        assert_eq!(run, again);
        assert_eq!(again.to_text(), run.to_text());
    }

    #[test]
    fn unknown_and_duplicate_keys_are_rejected() {
        let bad = format!("{SAMPLE}colour = blue\n");
        assert!(matches!(RunConfig::parse(&bad), Err(Error::UnknownKey(k)) if k == "colour"));
        let dup = format!("{SAMPLE}k0 = 2\n");
        assert!(matches!(
            RunConfig::parse(&dup),
            Err(Error::ConfigSyntax { .. })
        ));
        assert!(matches!(
            RunConfig::parse("k0 = 1\n"),
            Err(Error::MissingKey(_))
        ));
    }

    #[test]
    fn scaling_examples() {
        let run = RunConfig::parse(SAMPLE).unwrap();
        let cfg = run.experiment;
        let same = apply_scintillation_scaling(&cfg, ScalingConfig::new(1.0).unwrap()).unwrap();
        assert_eq!(same, cfg);
        let half = apply_scintillation_scaling(&cfg, ScalingConfig::new(0.5).unwrap()).unwrap();
        assert_eq!(half.distance, 2.0 * cfg.distance);
        assert!((half.medium.sigma.powi(2) - 0.5 * cfg.medium.sigma.powi(2)).abs() < 1e-15);
        assert_eq!(half.mirror.r_m, 2.0 * cfg.mirror.r_m);
        assert_eq!(half.mirror.rho_0, 2.0 * cfg.mirror.rho_0);
        assert!((half.mirror.r_0 - 2.0 * cfg.mirror.r_0).abs() < 1e-12);
        assert!(ScalingConfig::new(0.0).is_err());
        assert!(ScalingConfig::new(-0.5).is_err());
    }

    #[test]
    fn validation_rejects_undersampled_medium() {
        let mut cfg = RunConfig::parse(SAMPLE).unwrap().experiment;
        cfg.grid = TransverseGrid::new(16, 4.0).unwrap();
        assert!(cfg.validate().is_err());
    }

    proptest! {
        #[test]
        fn mirror_identity_holds(r_m in 1e-3f64..1e3, rho in 1e-3f64..1e3) {
            let m = derive_mirror(r_m, rho).unwrap();
            let lhs = m.r_0 * m.r_0 - m.rho_0 * m.rho_0;
            prop_assert!((lhs - r_m * r_m).abs() <= 1e-12 * m.r_0 * m.r_0);
            prop_assert!(m.r_0 > m.rho_0);
        }

        #[test]
        fn scaling_composes(e1 in 0.05f64..1.0, e2 in 0.05f64..1.0) {
            let cfg = RunConfig::parse(SAMPLE).unwrap().experiment;
            let s = |e| ScalingConfig::new(e).unwrap();
            let twice = apply_scintillation_scaling(&apply_scintillation_scaling(&cfg, s(e1)).unwrap(), s(e2)).unwrap();
            let once = apply_scintillation_scaling(&cfg, s(e1 * e2)).unwrap();
            let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0);
            prop_assert!(close(twice.distance, once.distance));
            prop_assert!(close(twice.medium.sigma, once.medium.sigma));
            prop_assert!(close(twice.mirror.r_m, once.mirror.r_m));
            prop_assert!(close(twice.mirror.rho_0, once.mirror.rho_0));
            prop_assert!(close(twice.mirror.r_0, once.mirror.r_0));
            prop_assert!(close(twice.source_offset.x, once.source_offset.x));
            prop_assert!(close(twice.shift.y, once.shift.y));
        }

        #[test]
        fn scaling_preserves_scattering_depth(e in 0.01f64..1.0) {
            let cfg = RunConfig::parse(SAMPLE).unwrap().experiment;
            let scaled = apply_scintillation_scaling(&cfg, ScalingConfig::new(e).unwrap()).unwrap();
            let a = cfg.scattering_depth();
            let b = scaled.scattering_depth();
            prop_assert!((a - b).abs() <= 1e-12 * a);
            let sl = |c: &ExperimentConfig| c.medium.sigma.powi(2) * c.distance;
            prop_assert!((sl(&cfg) - sl(&scaled)).abs() <= 1e-12 * sl(&cfg));
        }
    }
}
