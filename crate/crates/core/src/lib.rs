//! Time-reversal focusing through random media in the white-noise paraxial
//! regime.
//!
//! The crate has two halves that are meant to be checked against each other:
//!
//! * a Monte Carlo simulator ([`propagator`], [`timereversal`],
//!   [`montecarlo`]) that propagates waves through sampled phase screens with
//!   a split-step Fourier solver and runs the record / conjugate / re-emit
//!   experiment;
//! * a prediction engine ([`moments`]) that evaluates the mean, covariance,
//!   peak and background intensities of the refocused field by quadrature,
//!   together with their strong-scattering closed forms.
//!
//! All lengths share one user-chosen unit.

pub mod cli;
pub mod config;
pub mod error;
pub mod fft;
pub mod field;
pub mod grid;
pub mod io;
pub mod medium;
pub mod moments;
pub mod montecarlo;
pub mod propagator;
pub mod rng;
pub mod timereversal;
pub mod vec2;

pub use config::{
    apply_scintillation_scaling, derive_mirror, scattering_mean_free_path, ExperimentConfig,
    MeanFreePath, MirrorSpec, RunConfig, ScalingConfig,
};
pub use error::{Error, Result};
pub use field::{ComplexField, RealField};
pub use grid::TransverseGrid;
pub use medium::{CovarianceProfile, MediumModel, PhaseScreen};
pub use num_complex::Complex64;
pub use propagator::MediumRealization;
pub use timereversal::{ImageFunction, ImagePoint};
pub use vec2::Vec2;
