//! Ensemble runs and comparison against the moment predictions.
//!
//! Realizations are split into fixed chunks. Each chunk is accumulated
//! sequentially (Welford) and chunks are merged pairwise in a fixed tree, so
//! results are bit-identical for any thread count.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::field::{ComplexField, RealField};
use crate::grid::TransverseGrid;
use crate::moments::{default_probes, MomentParams, MomentPrediction, Probe, StrongScattering};
use crate::timereversal::{EmissionVariant, ExperimentRunner};
use crate::vec2::Vec2;

/// Realizations per work item.
const CHUNK: u64 = 4;

/// A probe resolved onto grid nodes: `x + h/2` and `x - h/2` relative to the
/// source are snapped independently.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbeSite {
    /// Requested offsets.
    pub probe: Probe,
    /// Offsets actually sampled.
    pub x: Vec2,
    pub h: Vec2,
    plus: usize,
    minus: usize,
}

impl ProbeSite {
    pub fn resolve(grid: &TransverseGrid, source: Vec2, probe: Probe) -> Self {
        let p = grid.snap(source + probe.x + probe.h * 0.5);
        let m = grid.snap(source + probe.x - probe.h * 0.5);
        let (p1, p2) = grid.nearest(p);
        let (m1, m2) = grid.nearest(m);
        ProbeSite {
            probe,
            x: (p + m) * 0.5 - source,
            h: p - m,
            plus: grid.index(p1, p2),
            minus: grid.index(m1, m2),
        }
    }

    /// The same probe as a [`Probe`] at the sampled offsets.
    pub fn effective(&self) -> Probe {
        Probe {
            x: self.x,
            h: self.h,
        }
    }
}

/// Estimates at one probe pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeEstimate {
    pub site: ProbeSite,
    /// Sample mean of `u(x + h/2) conj(u(x - h/2))`.
    pub second_moment: Complex64,
    pub second_moment_se: f64,
    /// Sample covariance of `u(x + h/2)` and `u(x - h/2)`.
    pub covariance: Complex64,
    pub covariance_se: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PeakFit {
    pub center: Vec2,
    pub width: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum PeakResult {
    Found(PeakFit),
    /// The maximum is less than twice the median.
    NoPeak {
        ratio: f64,
    },
}

impl PeakResult {
    pub fn found(&self) -> Option<&PeakFit> {
        match self {
            PeakResult::Found(f) => Some(f),
            PeakResult::NoPeak { .. } => None,
        }
    }
}

/// Ensemble estimates for one emission variant.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    pub config: ExperimentConfig,
    pub variant: EmissionVariant,
    pub n: usize,
    /// Source node used by the simulator.
    pub source: Vec2,
    pub mean_field: ComplexField,
    /// Unbiased sample variance `E|u - E u|^2` per node.
    pub variance_field: RealField,
    /// Sample mean of `|u|^2`.
    pub mean_intensity: RealField,
    pub probes: Vec<ProbeEstimate>,
    pub peak_fit: PeakResult,
}

impl EnsembleStats {
    fn node(&self, offset: Vec2) -> usize {
        let g = &self.mean_field.grid;
        let (i1, i2) = g.nearest(self.source + offset);
        g.index(i1, i2)
    }

    /// Mean field at the node nearest to `source + offset`.
    pub fn mean_at(&self, offset: Vec2) -> Complex64 {
        self.mean_field.values[self.node(offset)]
    }

    pub fn variance_at(&self, offset: Vec2) -> f64 {
        self.variance_field.values[self.node(offset)]
    }

    /// Standard error of the mean field at `source + offset`.
    pub fn mean_se_at(&self, offset: Vec2) -> f64 {
        (self.variance_at(offset) / self.n as f64).sqrt()
    }

    pub fn standard_error_field(&self) -> RealField {
        let n = self.n as f64;
        RealField {
            grid: self.variance_field.grid,
            values: self
                .variance_field
                .values
                .iter()
                .map(|v| (v / n).sqrt())
                .collect(),
        }
    }

    /// Single-realization contrast `|E u| / sqrt(Var u)` at `source + offset`:
    /// how many speckle standard deviations the mean stands above zero.
    pub fn contrast_at(&self, offset: Vec2) -> f64 {
        let v = self.variance_at(offset);
        if v > 0.0 {
            self.mean_at(offset).norm() / v.sqrt()
        } else {
            f64::INFINITY
        }
    }

    /// Coefficient of variation of the variance field over the nodes within
    /// `radius` of the source.
    pub fn variance_cv(&self, radius: f64) -> f64 {
        let vals: Vec<f64> = profile_offsets(&self.variance_field.grid, radius)
            .into_iter()
            .map(|x| self.variance_at(x))
            .collect();
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        if mean > 0.0 {
            var.sqrt() / mean
        } else {
            0.0
        }
    }
}

/// Grid-node offsets within `radius` of the origin, in raster order.
pub fn profile_offsets(grid: &TransverseGrid, radius: f64) -> Vec<Vec2> {
    let dx = grid.spacing();
    let m = (radius / dx).floor() as i64;
    let mut out = Vec::new();
    for j in -m..=m {
        for i in -m..=m {
            let x = Vec2::new(i as f64 * dx, j as f64 * dx);
            if x.norm() <= radius + 1e-12 * dx {
                out.push(x);
            }
        }
    }
    out
}

/// Welford accumulator for one complex field.
#[derive(Debug, Clone)]
struct FieldAcc {
    n: u64,
    mean: Vec<Complex64>,
    m2: Vec<f64>,
}

impl FieldAcc {
    fn new(len: usize) -> Self {
        FieldAcc {
            n: 0,
            mean: vec![Complex64::new(0.0, 0.0); len],
            m2: vec![0.0; len],
        }
    }

    fn push(&mut self, u: &[Complex64]) {
        self.n += 1;
        let inv = 1.0 / self.n as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(u) {
            let d = v - *m;
            *m += d * inv;
            *s += (d.conj() * (v - *m)).re;
        }
    }

    /// Chan et al. pairwise merge.
    fn merge(mut self, other: FieldAcc) -> FieldAcc {
        if other.n == 0 {
            return self;
        }
        if self.n == 0 {
            return other;
        }
        let (na, nb) = (self.n as f64, other.n as f64);
        let n = na + nb;
        for i in 0..self.mean.len() {
            let d = other.mean[i] - self.mean[i];
            self.mean[i] += d * (nb / n);
            self.m2[i] += other.m2[i] + d.norm_sqr() * na * nb / n;
        }
        self.n += other.n;
        self
    }
}

/// Per-chunk results: one accumulator per variant and the probe values of
/// every realization, in realization order.
struct Partial {
    fields: Vec<FieldAcc>,
    probes: Vec<Vec<(Complex64, Complex64)>>,
}

impl Partial {
    fn merge(mut self, other: Partial) -> Partial {
        self.fields = self
            .fields
            .into_iter()
            .zip(other.fields)
            .map(|(a, b)| a.merge(b))
            .collect();
        for (a, b) in self.probes.iter_mut().zip(other.probes) {
            a.extend(b);
        }
        self
    }
}

fn tree_reduce(mut parts: Vec<Partial>) -> Option<Partial> {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(a) = it.next() {
            next.push(match it.next() {
                Some(b) => a.merge(b),
                None => a,
            });
        }
        parts = next;
    }
    parts.pop()
}

/// Probe offsets used when none are given: the default set scaled by the
/// predicted focal width, or by four grid cells without scattering.
pub fn default_probe_set(cfg: &ExperimentConfig) -> Result<Vec<Probe>> {
    let p = MomentParams::from_config(cfg)?;
    let r = StrongScattering::new(&p).r_tr;
    let r = if r.is_finite() {
        r
    } else {
        4.0 * cfg.grid.spacing()
    };
    Ok(default_probes(r))
}

/// Runs `n` realizations of `cfg` with the default probe set.
pub fn run_ensemble(cfg: &ExperimentConfig, n: usize) -> Result<EnsembleStats> {
    let probes = default_probe_set(cfg)?;
    Ok(run_ensembles(cfg, n, vec![EmissionVariant::of(cfg)], &probes)?.remove(0))
}

/// Runs realizations `0..n` once and evaluates every emission variant on
/// each, sharing the recording leg.
pub fn run_ensembles(
    cfg: &ExperimentConfig,
    n: usize,
    variants: Vec<EmissionVariant>,
    probes: &[Probe],
) -> Result<Vec<EnsembleStats>> {
    if n < 2 {
        return Err(Error::invalid(
            "n",
            format!("ensemble size {n} must be at least 2"),
        ));
    }
    if variants.is_empty() {
        return Err(Error::invalid(
            "variants",
            "at least one emission variant is required",
        ));
    }
    cfg.validate()?;
    // Validates the runner setup once; workers then build their own.
    let source = ExperimentRunner::new(cfg, variants.clone())?.source();
    let grid = cfg.grid;
    let sites: Vec<ProbeSite> = probes
        .iter()
        .map(|&p| ProbeSite::resolve(&grid, source, p))
        .collect();
    let n = n as u64;
    let chunks: Vec<(u64, u64)> = (0..n.div_ceil(CHUNK))
        .map(|c| (c * CHUNK, ((c + 1) * CHUNK).min(n)))
        .collect();
    let nv = variants.len();
    let partials: Vec<Partial> = chunks
        .par_iter()
        .map_init(
            || ExperimentRunner::new(cfg, variants.clone()),
            |runner, &(lo, hi)| -> Result<Partial> {
                let runner = runner
                    .as_mut()
                    .map_err(|e| Error::ConfigMismatch(e.to_string()))?;
                let mut part = Partial {
                    fields: vec![FieldAcc::new(grid.len()); nv],
                    probes: vec![Vec::with_capacity(((hi - lo) as usize) * sites.len()); nv],
                };
                for index in lo..hi {
                    let out = runner.run_index(index).map_err(|e| Error::Realization {
                        index: index as usize,
                        source: Box::new(e),
                    })?;
                    for (v, field) in out.iter().enumerate() {
                        let u = &field.u_tr.values;
                        if !u.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
                            return Err(Error::Realization {
                                index: index as usize,
                                source: Box::new(Error::invalid(
                                    "u_tr",
                                    "non-finite refocused field",
                                )),
                            });
                        }
                        part.fields[v].push(u);
                        part.probes[v].extend(sites.iter().map(|s| (u[s.plus], u[s.minus])));
                    }
                }
                Ok(part)
            },
        )
        .collect::<Result<Vec<_>>>()?;
    let total = tree_reduce(partials).expect("at least one chunk");
    let nf = n as f64;
    let mut out = Vec::with_capacity(nv);
    for (v, (acc, values)) in total.fields.into_iter().zip(total.probes).enumerate() {
        let variance: Vec<f64> = acc.m2.iter().map(|s| (s / (nf - 1.0)).max(0.0)).collect();
        let mean_intensity: Vec<f64> = acc
            .mean
            .iter()
            .zip(&acc.m2)
            .map(|(m, s)| m.norm_sqr() + s / nf)
            .collect();
        let mean_field = ComplexField {
            grid,
            values: acc.mean,
        };
        let probes = sites
            .iter()
            .enumerate()
            .map(|(k, site)| {
                probe_estimate(*site, values.iter().skip(k).step_by(sites.len()).copied())
            })
            .collect();
        let peak_fit = fit_peak(&mean_field.modulus());
        out.push(EnsembleStats {
            config: cfg.clone(),
            variant: variants[v].clone(),
            n: n as usize,
            source,
            mean_field,
            variance_field: RealField {
                grid,
                values: variance,
            },
            mean_intensity: RealField {
                grid,
                values: mean_intensity,
            },
            probes,
            peak_fit,
        });
    }
    Ok(out)
}

fn mean_and_se(values: &[Complex64]) -> (Complex64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<Complex64>() / n;
    let var = values.iter().map(|v| (v - mean).norm_sqr()).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn probe_estimate(
    site: ProbeSite,
    values: impl Iterator<Item = (Complex64, Complex64)>,
) -> ProbeEstimate {
    let pairs: Vec<(Complex64, Complex64)> = values.collect();
    let n = pairs.len() as f64;
    let products: Vec<Complex64> = pairs.iter().map(|(a, b)| a * b.conj()).collect();
    let (second_moment, second_moment_se) = mean_and_se(&products);
    let mp = pairs.iter().map(|p| p.0).sum::<Complex64>() / n;
    let mm = pairs.iter().map(|p| p.1).sum::<Complex64>() / n;
    let centered: Vec<Complex64> = pairs
        .iter()
        .map(|(a, b)| (a - mp) * (b - mm).conj())
        .collect();
    let (c, covariance_se) = mean_and_se(&centered);
    ProbeEstimate {
        site,
        second_moment,
        second_moment_se,
        covariance: c * (n / (n - 1.0)),
        covariance_se,
    }
}

/// Least-squares fit of `A exp(-|x - c|^2 / (2 w^2))` to the dominant peak.
///
/// The start values come from a log-parabola through the maximum and its
/// neighbours; Gauss-Newton (Levenberg damped) then refines all four
/// parameters on the nodes within three start widths of the maximum, a
/// window six widths across.
pub fn fit_peak(field: &RealField) -> PeakResult {
    let grid = field.grid;
    let n = grid.n();
    let dx = grid.spacing();
    let vals = &field.values;
    let (imax, &vmax) =
        vals.iter()
            .enumerate()
            .fold((0, &f64::NEG_INFINITY), |(bi, bv), (i, v)| {
                if v > bv {
                    (i, v)
                } else {
                    (bi, bv)
                }
            });
    let mut sorted = vals.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let median = sorted[sorted.len() / 2];
    let ratio = if median > 0.0 {
        vmax / median
    } else if vmax > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    if ratio.is_nan() || ratio < 2.0 || !vmax.is_finite() {
        return PeakResult::NoPeak { ratio };
    }
    let i1 = imax % n;
    let i2 = imax / n;
    let at = |a: i64, b: i64| -> f64 {
        let a = a.rem_euclid(n as i64) as usize;
        let b = b.rem_euclid(n as i64) as usize;
        vals[grid.index(a, b)]
    };
    // Log-parabola per axis.
    let axis = |lm: f64, l0: f64, lp: f64| -> (f64, f64) {
        let d2 = lm - 2.0 * l0 + lp;
        if d2 < 0.0 && lm.is_finite() && lp.is_finite() {
            (0.5 * (lm - lp) / d2, (-1.0 / d2).sqrt())
        } else {
            (0.0, 1.0)
        }
    };
    let ln = |v: f64| if v > 0.0 { v.ln() } else { f64::NEG_INFINITY };
    let (s1, w1) = axis(
        ln(at(i1 as i64 - 1, i2 as i64)),
        ln(vmax),
        ln(at(i1 as i64 + 1, i2 as i64)),
    );
    let (s2, w2) = axis(
        ln(at(i1 as i64, i2 as i64 - 1)),
        ln(vmax),
        ln(at(i1 as i64, i2 as i64 + 1)),
    );
    let origin = grid.point(i1, i2);
    let mut c = origin + Vec2::new(s1 * dx, s2 * dx);
    let mut w = (0.5 * (w1 + w2) * dx).max(0.5 * dx);
    let mut amp = vmax;

    let radius = (3.0 * w).max(2.0 * dx);
    let m = (radius / dx).ceil() as i64;
    let mut pts: Vec<(Vec2, f64)> = Vec::new();
    for dj in -m..=m {
        for di in -m..=m {
            let off = Vec2::new(di as f64 * dx, dj as f64 * dx);
            if off.norm() <= radius {
                pts.push((origin + off, at(i1 as i64 + di, i2 as i64 + dj)));
            }
        }
    }
    let residual = |amp: f64, c: Vec2, w: f64| -> f64 {
        pts.iter()
            .map(|(x, v)| (v - amp * (-(*x - c).norm_sq() / (2.0 * w * w)).exp()).powi(2))
            .sum()
    };
    let mut lambda = 1e-3;
    let mut cost = residual(amp, c, w);
    for _ in 0..100 {
        let mut jtj = [[0.0f64; 4]; 4];
        let mut jtr = [0.0f64; 4];
        for (x, v) in &pts {
            let d = *x - c;
            let e = (-d.norm_sq() / (2.0 * w * w)).exp();
            let model = amp * e;
            let r = v - model;
            let jac = [
                e,
                model * d.x / (w * w),
                model * d.y / (w * w),
                model * d.norm_sq() / (w * w * w),
            ];
            for a in 0..4 {
                jtr[a] += jac[a] * r;
                for b in 0..4 {
                    jtj[a][b] += jac[a] * jac[b];
                }
            }
        }
        let mut improved = false;
        for _ in 0..20 {
            let mut a = jtj;
            for (k, row) in a.iter_mut().enumerate() {
                row[k] *= 1.0 + lambda;
            }
            let Some(step) = solve4(a, jtr) else {
                lambda *= 10.0;
                continue;
            };
            let (na, nc, nw) = (amp + step[0], c + Vec2::new(step[1], step[2]), w + step[3]);
            if nw > 0.0 {
                let nc_cost = residual(na, nc, nw);
                if nc_cost < cost {
                    let rel = (cost - nc_cost) / cost.max(f64::MIN_POSITIVE);
                    amp = na;
                    c = nc;
                    w = nw;
                    cost = nc_cost;
                    lambda = (lambda * 0.1).max(1e-12);
                    improved = rel > 1e-15;
                    break;
                }
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    PeakResult::Found(PeakFit {
        center: c,
        width: w,
        amplitude: amp,
    })
}

/// Gaussian elimination with partial pivoting.
#[allow(clippy::needless_range_loop)]
fn solve4(mut a: [[f64; 4]; 4], mut b: [f64; 4]) -> Option<[f64; 4]> {
    for k in 0..4 {
        let p = (k..4).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs()))?;
        if a[p][k].abs() < 1e-300 {
            return None;
        }
        a.swap(k, p);
        b.swap(k, p);
        for i in k + 1..4 {
            let f = a[i][k] / a[k][k];
            for j in k..4 {
                a[i][j] -= f * a[k][j];
            }
            b[i] -= f * b[k];
        }
    }
    let mut x = [0.0; 4];
    for k in (0..4).rev() {
        let s: f64 = (k + 1..4).map(|j| a[k][j] * x[j]).sum();
        x[k] = (b[k] - s) / a[k][k];
    }
    Some(x)
}

/// Normalized cross-correlation `<a, b> / (|a| |b|)` (uncentered).
pub fn ncc(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Pass criteria of [`compare_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    /// Relative L2 error of the mean profile.
    pub mean_profile: f64,
    /// Relative covariance error accepted at each probe...
    pub covariance_rel: f64,
    /// ...or this many standard errors, whichever is larger.
    pub covariance_se: f64,
    /// Coefficient of variation of the variance field near the source.
    pub variance_cv: f64,
    /// Radius of the disk used for the variance CV.
    pub variance_disk: f64,
}

impl Tolerances {
    /// Defaults for a scattering run whose focal width is `r_tr`.
    pub fn for_focal_width(r_tr: f64) -> Self {
        Tolerances {
            mean_profile: 0.15,
            covariance_rel: 0.20,
            covariance_se: 3.0,
            variance_cv: 0.30,
            variance_disk: 4.0 * r_tr,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub quantity: String,
    /// Real part of the Monte Carlo estimate.
    pub mc_value: f64,
    /// Real part of the prediction.
    pub prediction: f64,
    /// `|mc - prediction| / |prediction|` on the complex values.
    pub rel_err: f64,
    /// `|mc - prediction| / SE`.
    pub z_score: f64,
    /// `None` for informational rows.
    pub pass: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass != Some(false))
    }

    pub fn row(&self, quantity: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.quantity == quantity)
    }

    /// CSV with a fixed header; quantity names containing commas are quoted.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let _ = w.write_record([
            "quantity",
            "mc_value",
            "prediction",
            "rel_err",
            "z_score",
            "pass",
        ]);
        for r in &self.rows {
            let pass = match r.pass {
                Some(true) => "true",
                Some(false) => "false",
                None => "na",
            };
            let _ = w.write_record([
                r.quantity.clone(),
                format!("{:e}", r.mc_value),
                format!("{:e}", r.prediction),
                format!("{:e}", r.rel_err),
                format!("{:e}", r.z_score),
                pass.to_string(),
            ]);
        }
        String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8 fields")
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        for r in &self.rows {
            let verdict = match r.pass {
                Some(true) => "PASS",
                Some(false) => "FAIL",
                None => "info",
            };
            s.push_str(&format!(
                "{verdict:4}  {:<40} mc={:<12.5e} pred={:<12.5e} rel={:.3e} z={:.2}\n",
                r.quantity, r.mc_value, r.prediction, r.rel_err, r.z_score
            ));
        }
        s.push_str(if self.passed() {
            "overall: PASS\n"
        } else {
            "overall: FAIL\n"
        });
        s
    }
}

fn rel_err(mc: Complex64, pred: Complex64) -> f64 {
    let d = (mc - pred).norm();
    if d == 0.0 {
        0.0
    } else {
        d / pred.norm()
    }
}

fn z_score(mc: Complex64, pred: Complex64, se: f64) -> f64 {
    let d = (mc - pred).norm();
    if d == 0.0 {
        0.0
    } else {
        d / se
    }
}

/// Compares with tolerances derived from the predicted focal width.
pub fn compare(stats: &EnsembleStats, pred: &MomentPrediction) -> Result<ComparisonReport> {
    let r = pred.closed.r_tr;
    let r = if r.is_finite() {
        r
    } else {
        4.0 * stats.mean_field.grid.spacing()
    };
    compare_with(stats, pred, &Tolerances::for_focal_width(r))
}

pub fn compare_with(
    stats: &EnsembleStats,
    pred: &MomentPrediction,
    tol: &Tolerances,
) -> Result<ComparisonReport> {
    let cfg = &stats.config;
    let p = MomentParams::from_config(cfg)?;
    if p.k0 != pred.params.k0
        || p.distance != pred.params.distance
        || p.r_0 != pred.params.r_0
        || p.rho_0 != pred.params.rho_0
        || p.medium != pred.params.medium
    {
        return Err(Error::ConfigMismatch(
            "ensemble and prediction were built from different parameters".into(),
        ));
    }
    if (stats.source - pred.source).norm() > 1e-12 * (1.0 + stats.source.norm()) {
        return Err(Error::ConfigMismatch(format!(
            "ensemble source {:?} differs from prediction source {:?}",
            stats.source, pred.source
        )));
    }
    let mut rows = Vec::new();
    let scattering = !cfg.medium.is_homogeneous();

    if !pred.mean_profile.is_empty() {
        let (mut num, mut den, mut mc2, mut chi2) = (0.0, 0.0, 0.0, 0.0);
        for (x, e) in &pred.mean_profile {
            let mc = stats.mean_at(*x);
            num += (mc - e.value).norm_sqr();
            den += e.value.norm_sqr();
            mc2 += mc.norm_sqr();
            let se = stats.mean_se_at(*x);
            if se > 0.0 {
                chi2 += (mc - e.value).norm_sqr() / (se * se);
            }
        }
        let rel = if num == 0.0 { 0.0 } else { (num / den).sqrt() };
        rows.push(ComparisonRow {
            quantity: "mean_profile_l2".into(),
            mc_value: mc2.sqrt(),
            prediction: den.sqrt(),
            rel_err: rel,
            z_score: (chi2 / pred.mean_profile.len() as f64).sqrt(),
            pass: Some(rel <= tol.mean_profile),
        });
        let (x0, e0) = pred
            .mean_profile
            .iter()
            .min_by(|a, b| a.0.norm().total_cmp(&b.0.norm()))
            .expect("non-empty profile");
        let mc0 = stats.mean_at(*x0);
        rows.push(ComparisonRow {
            quantity: "mean_at_source".into(),
            mc_value: mc0.re,
            prediction: e0.value.re,
            rel_err: rel_err(mc0, e0.value),
            z_score: z_score(mc0, e0.value, stats.mean_se_at(*x0)),
            pass: None,
        });
    }

    // Snapping can map distinct nominal probes onto the same node pair.
    let mut seen: Vec<(Vec2, Vec2)> = Vec::new();
    for est in &stats.probes {
        let h = est.site.h;
        if seen.contains(&(est.site.x, h)) {
            continue;
        }
        seen.push((est.site.x, h));
        let Some((_, e)) = pred
            .covariance
            .iter()
            .find(|(q, _)| (q.h - h).norm() <= 1e-9 * (1.0 + h.norm()))
        else {
            continue;
        };
        let diff = (est.covariance - e.value).norm();
        let pass = diff
            <= (tol.covariance_rel * e.value.norm()).max(tol.covariance_se * est.covariance_se);
        rows.push(ComparisonRow {
            quantity: format!(
                "covariance(x={},{};h={},{})",
                est.site.x.x, est.site.x.y, h.x, h.y
            ),
            mc_value: est.covariance.re,
            prediction: e.value.re,
            rel_err: rel_err(est.covariance, e.value),
            z_score: z_score(est.covariance, e.value, est.covariance_se),
            pass: Some(pass),
        });
    }

    if scattering {
        let cv = stats.variance_cv(tol.variance_disk);
        rows.push(ComparisonRow {
            quantity: "variance_cv".into(),
            mc_value: cv,
            prediction: 0.0,
            rel_err: cv,
            z_score: 0.0,
            pass: Some(cv <= tol.variance_cv),
        });
        let var0 = stats.variance_at(Vec2::ZERO);
        let mc_snr = (stats.mean_at(Vec2::ZERO) - pred.u_background).norm_sqr() / var0;
        let pred_snr = pred.snr.value();
        rows.push(ComparisonRow {
            quantity: "snr".into(),
            mc_value: mc_snr,
            prediction: pred_snr,
            rel_err: (mc_snr - pred_snr).abs() / pred_snr,
            z_score: 0.0,
            pass: None,
        });
    }
    Ok(ComparisonReport { rows })
}
