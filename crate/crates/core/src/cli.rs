//! Command-line front end: `simulate`, `moments`, `compare`, `scaling`.
//!
//! Every run command writes `manifest.json` into its output directory before
//! any other file. Passing that manifest in place of the config file replays
//! the run into the same directory with byte-identical outputs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::config::{
    apply_scintillation_scaling, scattering_mean_free_path, ExperimentConfig, RunConfig,
    ScalingConfig,
};
use crate::error::{Error, Result};
use crate::field::ComplexField;
use crate::io::{
    cross_sections_csv, fmt_num, load_points, write_atomic, write_field, write_screen,
};
use crate::moments::{
    default_probes, mean_field_m1, shift_params, MomentParams, MomentPrediction, Probe, SnrValue,
    StrongScattering,
};
use crate::montecarlo::{compare, profile_offsets, run_ensembles, EnsembleStats, PeakResult};
use crate::propagator::MediumRealization;
use crate::timereversal::{EmissionVariant, ExperimentRunner, ImageFunction, ImagePoint};
use crate::vec2::Vec2;

pub const THREADS_ENV: &str = "PARAXIAL_TR_THREADS";
pub const MANIFEST_FILE: &str = "manifest.json";

pub const EXIT_OK: u8 = 0;
pub const EXIT_CRITERION: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_VALIDATION: u8 = 3;
pub const EXIT_IO: u8 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "paraxial-tr",
    version,
    about = "Time-reversal focusing in white-noise paraxial random media"
)]
pub struct Cli {
    /// Worker threads for Monte Carlo ensembles (results do not depend on it).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one realization or an ensemble of the time-reversal experiment.
    Simulate(SimulateArgs),
    /// Evaluate the moment predictions (profiles, covariance, SNR, shifts).
    Moments(MomentsArgs),
    /// Run an ensemble, evaluate predictions and write a pass/fail report.
    Compare(CompareArgs),
    /// Emit the scintillation-rescaled config.
    Scaling(ScalingArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Config file, or a manifest.json from an earlier run.
    pub config: PathBuf,
    /// Number of realizations (defaults to the config's n_realizations).
    #[arg(long)]
    pub n: Option<usize>,
    /// Linear phase on the mirror, "bx,by".
    #[arg(long, allow_hyphen_values = true, value_parser = parse_vec2)]
    pub b: Option<Vec2>,
    /// Image points file: CSV rows b1, b2, weight.
    #[arg(long)]
    pub image: Option<PathBuf>,
    /// Write binary dumps of the target-plane fields.
    #[arg(long)]
    pub dump_fields: bool,
    /// Write the phase screens of realization 0 (single-realization runs).
    #[arg(long)]
    pub dump_screens: bool,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MomentsArgs {
    pub config: PathBuf,
    /// Image points file for the image prediction.
    #[arg(long)]
    pub image: Option<PathBuf>,
    /// Rows of the shift table, evenly spaced in |b| up to b_max.
    #[arg(long, default_value_t = 8)]
    pub shifts: usize,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    pub config: PathBuf,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub image: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScalingArgs {
    pub config: PathBuf,
    #[arg(long)]
    pub epsilon: f64,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_vec2(s: &str) -> std::result::Result<Vec2, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(format!("expected \"bx,by\", got \"{s}\""));
    }
    let x = parts[0]
        .parse::<f64>()
        .map_err(|e| format!("{}: {e}", parts[0]))?;
    let y = parts[1]
        .parse::<f64>()
        .map_err(|e| format!("{}: {e}", parts[1]))?;
    Ok(Vec2::new(x, y))
}

/// Resolved options of a run, stored in the manifest for replay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub n: usize,
    pub shift: Option<Vec2>,
    pub image: Option<Vec<ImagePoint>>,
    pub dump_fields: bool,
    pub dump_screens: bool,
    pub shifts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedParams {
    pub r_0: f64,
    pub l_sca: Option<f64>,
    pub depth: f64,
    /// Closed-form strong-scattering SNR; null without scattering.
    pub snr_predicted: Option<f64>,
    pub r_tr: Option<f64>,
    pub alpha_l: f64,
    pub b_max: f64,
    pub r_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub master_seed: u64,
    /// Realizations `0..realizations` were drawn.
    pub realizations: usize,
}

/// Record of one CLI run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub started_unix_s: u64,
    /// Canonical text of the config file as given (before `epsilon` is applied).
    pub config_text: String,
    /// Config the run used, after scaling and command-line overrides.
    pub resolved: ExperimentConfig,
    pub options: RunOptions,
    pub seeds: Seeds,
    pub derived: DerivedParams,
    /// Output files, relative to the manifest's directory.
    pub outputs: Vec<String>,
}

pub fn derived_params(cfg: &ExperimentConfig) -> Result<DerivedParams> {
    let p = MomentParams::from_config(cfg)?;
    let s = StrongScattering::new(&p);
    let finite = |v: f64| v.is_finite().then_some(v);
    let scattering = !cfg.medium.is_homogeneous();
    Ok(DerivedParams {
        r_0: cfg.mirror.r_0,
        l_sca: finite(scattering_mean_free_path(&cfg.medium, cfg.k0)?.value()),
        depth: cfg.scattering_depth(),
        snr_predicted: if scattering { finite(s.snr) } else { None },
        r_tr: finite(s.r_tr),
        alpha_l: s.alpha_l,
        b_max: s.b_max,
        r_max: s.r_max,
    })
}

/// Maps an error to the process exit code.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::UnknownKey(_) | Error::ConfigSyntax { .. } | Error::MissingKey(_) => EXIT_USAGE,
        Error::Io { .. } | Error::BadDump { .. } => EXIT_IO,
        _ => EXIT_VALIDATION,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_from<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>> {
    if let Some(n) = flag {
        return Ok(Some(n));
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v.trim().parse::<usize>().map(Some).map_err(|_| {
            Error::invalid(
                "threads",
                format!("{THREADS_ENV}={v} is not a non-negative integer"),
            )
        }),
        Err(_) => Ok(None),
    }
}

pub fn execute(cli: &Cli) -> Result<u8> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_count(cli.threads)? {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::invalid("threads", e.to_string()))?;
    pool.install(|| match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Moments(a) => cmd_moments(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Scaling(a) => cmd_scaling(a),
    })
}

fn is_manifest(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "json")
}

fn load_manifest(path: &Path, command: &str) -> Result<RunManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let m: RunManifest = serde_json::from_str(&text).map_err(|e| Error::BadDump {
        path: path.to_path_buf(),
        reason: format!("not a run manifest: {e}"),
    })?;
    if m.command != command {
        return Err(Error::invalid(
            "manifest",
            format!("manifest records `{}`, not `{command}`", m.command),
        ));
    }
    Ok(m)
}

fn load_image(path: Option<&PathBuf>) -> Result<Option<Vec<ImagePoint>>> {
    path.map(|p| load_points(p)).transpose()
}

/// Run setup shared by the commands: either replayed from a manifest or
/// resolved from a config file plus flags.
struct Plan {
    config_text: String,
    cfg: ExperimentConfig,
    options: RunOptions,
    dir: PathBuf,
}

fn plan(
    command: &str,
    config: &Path,
    out: &Path,
    fresh: impl FnOnce(&RunConfig) -> Result<RunOptions>,
) -> Result<Plan> {
    if is_manifest(config) {
        let m = load_manifest(config, command)?;
        let dir = config.parent().map(Path::to_path_buf).unwrap_or_default();
        return Ok(Plan {
            config_text: m.config_text,
            cfg: m.resolved,
            options: m.options,
            dir,
        });
    }
    let run = RunConfig::load(config)?;
    let options = fresh(&run)?;
    let mut cfg = apply_scintillation_scaling(&run.experiment, ScalingConfig::new(run.epsilon)?)?;
    if let Some(b) = options.shift {
        cfg.shift = b;
    }
    if let Some(points) = &options.image {
        cfg.image = Some(ImageFunction::points(points.clone())?);
    }
    Ok(Plan {
        config_text: run.to_text(),
        cfg,
        options,
        dir: out.to_path_buf(),
    })
}

impl Plan {
    fn start(&self, command: &str, realizations: usize, outputs: &[String]) -> Result<()> {
        for w in self.cfg.validate()? {
            eprintln!("warning: {w}");
        }
        std::fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        for o in outputs {
            if let Some(parent) = self.dir.join(o).parent() {
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
        }
        let manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            started_unix_s: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            config_text: self.config_text.clone(),
            resolved: self.cfg.clone(),
            options: self.options.clone(),
            seeds: Seeds {
                master_seed: self.cfg.master_seed,
                realizations,
            },
            derived: derived_params(&self.cfg)?,
            outputs: outputs.to_vec(),
        };
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        write_atomic(&self.dir.join(MANIFEST_FILE), json.as_bytes())
    }

    fn write(&self, name: &str, bytes: &[u8]) -> Result<()> {
        write_atomic(&self.dir.join(name), bytes)
    }

    fn variant(&self) -> EmissionVariant {
        EmissionVariant::of(&self.cfg)
    }
}

fn default_options(n: usize) -> RunOptions {
    RunOptions {
        n,
        shift: None,
        image: None,
        dump_fields: false,
        dump_screens: false,
        shifts: 0,
    }
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<u8> {
    let plan = plan("simulate", &a.config, &a.out, |run| {
        Ok(RunOptions {
            n: a.n.unwrap_or(run.n_realizations),
            shift: a.b,
            image: load_image(a.image.as_ref())?,
            dump_fields: a.dump_fields,
            dump_screens: a.dump_screens,
            shifts: 0,
        })
    })?;
    let o = &plan.options;
    let cfg = &plan.cfg;
    if o.n == 0 {
        return Err(Error::invalid("n", "at least one realization is required"));
    }
    let single = o.n == 1;
    let mut outputs = vec!["summary.txt".to_string()];
    if single {
        outputs.push("u_tr.csv".into());
        if o.dump_fields {
            outputs.push("u_tr.bin".into());
        }
        if o.dump_screens {
            outputs.extend((0..cfg.n_steps).map(|j| format!("screens/screen_{j:04}.bin")));
        }
    } else {
        outputs.extend(["mean.csv", "variance.csv", "probes.csv"].map(String::from));
        if o.dump_fields {
            outputs
                .extend(["mean_field.bin", "variance.bin", "mean_intensity.bin"].map(String::from));
        }
    }
    plan.start("simulate", o.n, &outputs)?;

    let mut summary = String::new();
    if single {
        let mut runner = ExperimentRunner::new(cfg, vec![plan.variant()])?;
        let real = runner.realization(0);
        let u = runner.run_on(&real)?.remove(0).u_tr;
        let source = runner.source();
        plan.write("u_tr.csv", cross_sections_csv(&u, source).as_bytes())?;
        if o.dump_fields {
            write_field(&plan.dir.join("u_tr.bin"), &u, cfg.distance)?;
        }
        if o.dump_screens {
            dump_screens(&plan.dir, &real)?;
        }
        let at = u.sample(source);
        let _ = writeln!(summary, "realizations = 1");
        let _ = writeln!(
            summary,
            "source = {}, {}",
            fmt_num(source.x),
            fmt_num(source.y)
        );
        let _ = writeln!(summary, "u_tr(source) = {} {:+}i", fmt_num(at.re), at.im);
        let _ = writeln!(summary, "max |u_tr| = {}", fmt_num(u.max_abs()));
    } else {
        let probes = probes_for(cfg)?;
        let stats = run_ensembles(cfg, o.n, vec![plan.variant()], &probes)?.remove(0);
        write_stats(&plan, &stats, o.dump_fields)?;
        summary = stats_summary(&stats);
    }
    plan.write("summary.txt", summary.as_bytes())?;
    print!("{summary}");
    Ok(EXIT_OK)
}

fn dump_screens(dir: &Path, real: &MediumRealization) -> Result<()> {
    for (j, s) in real.screens.iter().enumerate() {
        write_screen(&dir.join(format!("screens/screen_{j:04}.bin")), s)?;
    }
    Ok(())
}

fn probes_for(cfg: &ExperimentConfig) -> Result<Vec<Probe>> {
    Ok(default_probes(focal_scale(cfg)?))
}

/// Predicted focal width, or four grid cells without scattering.
fn focal_scale(cfg: &ExperimentConfig) -> Result<f64> {
    let r = StrongScattering::new(&MomentParams::from_config(cfg)?).r_tr;
    Ok(if r.is_finite() {
        r
    } else {
        4.0 * cfg.grid.spacing()
    })
}

fn real_as_complex(values: &[f64], grid: crate::grid::TransverseGrid) -> ComplexField {
    ComplexField {
        grid,
        values: values
            .iter()
            .map(|&v| num_complex::Complex64::new(v, 0.0))
            .collect(),
    }
}

fn write_stats(plan: &Plan, stats: &EnsembleStats, dump: bool) -> Result<()> {
    let grid = stats.mean_field.grid;
    let var = real_as_complex(&stats.variance_field.values, grid);
    plan.write(
        "mean.csv",
        cross_sections_csv(&stats.mean_field, stats.source).as_bytes(),
    )?;
    plan.write(
        "variance.csv",
        cross_sections_csv(&var, stats.source).as_bytes(),
    )?;
    let mut s = String::from("x1,x2,h1,h2,re,im,se\n");
    for p in &stats.probes {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            fmt_num(p.site.x.x),
            fmt_num(p.site.x.y),
            fmt_num(p.site.h.x),
            fmt_num(p.site.h.y),
            fmt_num(p.covariance.re),
            fmt_num(p.covariance.im),
            fmt_num(p.covariance_se)
        );
    }
    plan.write("probes.csv", s.as_bytes())?;
    if dump {
        let d = plan.cfg.distance;
        write_field(&plan.dir.join("mean_field.bin"), &stats.mean_field, d)?;
        write_field(&plan.dir.join("variance.bin"), &var, d)?;
        let mi = real_as_complex(&stats.mean_intensity.values, grid);
        write_field(&plan.dir.join("mean_intensity.bin"), &mi, d)?;
    }
    Ok(())
}

fn stats_summary(stats: &EnsembleStats) -> String {
    let mut s = String::new();
    let m = stats.mean_at(Vec2::ZERO);
    let _ = writeln!(s, "realizations = {}", stats.n);
    let _ = writeln!(
        s,
        "source = {}, {}",
        fmt_num(stats.source.x),
        fmt_num(stats.source.y)
    );
    let _ = writeln!(s, "mean(source) = {} {:+}i", fmt_num(m.re), m.im);
    let _ = writeln!(
        s,
        "var(source) = {}",
        fmt_num(stats.variance_at(Vec2::ZERO))
    );
    let _ = writeln!(
        s,
        "contrast(source) = {}",
        fmt_num(stats.contrast_at(Vec2::ZERO))
    );
    match &stats.peak_fit {
        PeakResult::Found(f) => {
            let _ = writeln!(
                s,
                "peak = center ({}, {}), width {}, amplitude {}",
                fmt_num(f.center.x),
                fmt_num(f.center.y),
                fmt_num(f.width),
                fmt_num(f.amplitude)
            );
        }
        PeakResult::NoPeak { ratio } => {
            let _ = writeln!(s, "peak = none (peak/median {})", fmt_num(*ratio));
        }
    }
    s
}

const MOMENTS_HEADER: &str = "quantity,x1,x2,h1,h2,re,im,est_error";

fn moment_row(s: &mut String, q: &str, x: Vec2, h: Vec2, v: num_complex::Complex64, err: f64) {
    let _ = writeln!(
        s,
        "{q},{},{},{},{},{},{},{}",
        fmt_num(x.x),
        fmt_num(x.y),
        fmt_num(h.x),
        fmt_num(h.y),
        fmt_num(v.re),
        fmt_num(v.im),
        fmt_num(err)
    );
}

pub fn cmd_moments(a: &MomentsArgs) -> Result<u8> {
    let plan = plan("moments", &a.config, &a.out, |_| {
        Ok(RunOptions {
            image: load_image(a.image.as_ref())?,
            shifts: a.shifts,
            ..default_options(0)
        })
    })?;
    let cfg = &plan.cfg;
    let mut outputs = vec![
        "moments.csv".to_string(),
        "shifts.csv".into(),
        "summary.txt".into(),
    ];
    if cfg.image.is_some() {
        outputs.push("image.csv".into());
    }
    plan.start("moments", 0, &outputs)?;

    let p = MomentParams::from_config(cfg)?;
    let r = focal_scale(cfg)?;
    let line: Vec<f64> = (-16..=16).map(|i| i as f64 * r / 4.0).collect();
    let mut offsets: Vec<Vec2> = line.iter().map(|&t| Vec2::new(t, 0.0)).collect();
    offsets.extend(
        line.iter()
            .filter(|&&t| t != 0.0)
            .map(|&t| Vec2::new(0.0, t)),
    );
    let probes = default_probes(r);
    let plain = cfg.shift.norm_sq() == 0.0 && cfg.image.is_none();
    let pred = MomentPrediction::for_experiment(
        cfg,
        &plan.variant(),
        &offsets,
        if plain { &probes } else { &[] },
        &[],
    )?;

    let mut csv = String::new();
    let _ = writeln!(csv, "{MOMENTS_HEADER}");
    for (x, e) in &pred.mean_profile {
        moment_row(&mut csv, "mean", *x, Vec2::ZERO, e.value, e.error);
    }
    if plain && !cfg.medium.is_homogeneous() {
        for &t in &line {
            let x = Vec2::new(t, 0.0);
            let e = mean_field_m1(pred.source + x * 0.5, x, &p)?;
            moment_row(&mut csv, "mean_m1", x, Vec2::ZERO, e.value, e.error);
        }
    }
    for (probe, e) in &pred.covariance {
        moment_row(&mut csv, "covariance", probe.x, probe.h, e.value, e.error);
    }
    let c = |v: f64| num_complex::Complex64::new(v, 0.0);
    moment_row(
        &mut csv,
        "peak_intensity",
        Vec2::ZERO,
        Vec2::ZERO,
        c(pred.i_p.value),
        pred.i_p.error,
    );
    moment_row(
        &mut csv,
        "background_intensity",
        Vec2::ZERO,
        Vec2::ZERO,
        c(pred.i_b.value),
        pred.i_b.error,
    );
    plan.write("moments.csv", csv.as_bytes())?;

    let closed = pred.closed;
    let mut shifts = String::from("b1,b2,x1,x2,damping,snr\n");
    if p.rho_0 < p.r_0 && closed.b_max.is_finite() {
        let k = plan.options.shifts;
        for i in 0..=k {
            let b = Vec2::new(closed.b_max * i as f64 / k.max(1) as f64, 0.0);
            let sp = shift_params(b, &p)?;
            let _ = writeln!(
                shifts,
                "{},{},{},{},{},{}",
                fmt_num(b.x),
                fmt_num(b.y),
                fmt_num(sp.x_b.x),
                fmt_num(sp.x_b.y),
                fmt_num(sp.damping),
                fmt_num(sp.snr_shifted)
            );
        }
    }
    plan.write("shifts.csv", shifts.as_bytes())?;

    if let Some(psi) = &cfg.image {
        let g = cfg.grid;
        let reach = psi.support_radius * closed.alpha_l + 4.0 * r;
        let img = ComplexField::from_fn(g, |x| {
            let d = x - pred.source;
            if d.norm() <= reach {
                crate::moments::predict_image(d, psi, &p)
            } else {
                num_complex::Complex64::new(0.0, 0.0)
            }
        });
        plan.write(
            "image.csv",
            cross_sections_csv(&img, pred.source).as_bytes(),
        )?;
    }

    let summary = moments_summary(cfg, &pred)?;
    plan.write("summary.txt", summary.as_bytes())?;
    print!("{summary}");
    Ok(EXIT_OK)
}

fn moments_summary(cfg: &ExperimentConfig, pred: &MomentPrediction) -> Result<String> {
    let d = derived_params(cfg)?;
    let c = &pred.closed;
    let mut s = String::new();
    let opt = |v: Option<f64>| v.map(fmt_num).unwrap_or_else(|| "infinite".into());
    let _ = writeln!(s, "I_p = {}", fmt_num(pred.i_p.value));
    let _ = writeln!(s, "I_b = {}", fmt_num(pred.i_b.value));
    match pred.snr {
        SnrValue::Finite(v) => {
            let _ = writeln!(s, "SNR = {}", fmt_num(v));
        }
        SnrValue::Infinite => {
            let _ = writeln!(s, "SNR = {}", SnrValue::Infinite);
        }
    }
    if !cfg.medium.is_homogeneous() {
        let _ = writeln!(s, "SNR_closed_form = {}", fmt_num(c.snr));
    }
    let _ = writeln!(s, "R_tr = {}", opt(d.r_tr));
    let _ = writeln!(s, "alpha_L = {}", fmt_num(c.alpha_l));
    let _ = writeln!(s, "b_max = {}", fmt_num(c.b_max));
    let _ = writeln!(s, "R_max = {}", fmt_num(c.r_max));
    let _ = writeln!(s, "L_sca = {}", opt(d.l_sca));
    let _ = writeln!(s, "L/L_sca = {}", fmt_num(d.depth));
    Ok(s)
}

pub fn cmd_compare(a: &CompareArgs) -> Result<u8> {
    let plan = plan("compare", &a.config, &a.out, |run| {
        Ok(RunOptions {
            image: load_image(a.image.as_ref())?,
            ..default_options(a.n.unwrap_or(run.n_realizations))
        })
    })?;
    let cfg = &plan.cfg;
    let n = plan.options.n;
    let outputs: Vec<String> = [
        "report.csv",
        "summary.txt",
        "mean_field.bin",
        "variance.bin",
    ]
    .map(String::from)
    .to_vec();
    plan.start("compare", n, &outputs)?;

    let r = focal_scale(cfg)?;
    let plain = cfg.shift.norm_sq() == 0.0 && cfg.image.is_none();
    // The covariance prediction is for the unshifted, single-point emission.
    let probes = if plain { default_probes(r) } else { Vec::new() };
    let stats = run_ensembles(cfg, n, vec![plan.variant()], &probes)?.remove(0);
    let sites: Vec<Probe> = stats.probes.iter().map(|e| e.site.effective()).collect();
    let offsets = profile_offsets(&cfg.grid, 3.0 * r);
    let pred = MomentPrediction::for_experiment(cfg, &plan.variant(), &offsets, &sites, &[])?;
    let report = compare(&stats, &pred)?;

    plan.write("report.csv", report.to_csv().as_bytes())?;
    let mut summary = stats_summary(&stats);
    summary.push_str(&report.summary());
    plan.write("summary.txt", summary.as_bytes())?;
    write_field(
        &plan.dir.join("mean_field.bin"),
        &stats.mean_field,
        cfg.distance,
    )?;
    let var = real_as_complex(&stats.variance_field.values, cfg.grid);
    write_field(&plan.dir.join("variance.bin"), &var, cfg.distance)?;
    print!("{summary}");
    Ok(if report.passed() {
        EXIT_OK
    } else {
        EXIT_CRITERION
    })
}

pub fn cmd_scaling(a: &ScalingArgs) -> Result<u8> {
    let s = ScalingConfig::new(a.epsilon)?;
    let mut run = RunConfig::load(&a.config)?;
    run.experiment = apply_scintillation_scaling(&run.experiment, s)?;
    let text = run.to_text();
    match &a.out {
        Some(path) => write_atomic(path, text.as_bytes())?,
        None => print!("{text}"),
    }
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vec2_flag_parses() {
        assert_eq!(parse_vec2("1.5,-2").unwrap(), Vec2::new(1.5, -2.0));
        assert_eq!(parse_vec2(" 3 , 4 ").unwrap(), Vec2::new(3.0, 4.0));
        assert!(parse_vec2("1").is_err());
        assert!(parse_vec2("a,b").is_err());
    }

    #[test]
    fn exit_codes_by_error_kind() {
        assert_eq!(exit_code(&Error::UnknownKey("x".into())), EXIT_USAGE);
        assert_eq!(exit_code(&Error::MissingKey("L")), EXIT_USAGE);
        assert_eq!(exit_code(&Error::invalid("L", "bad")), EXIT_VALIDATION);
        assert_eq!(
            exit_code(&Error::io(
                "p",
                std::io::Error::from(std::io::ErrorKind::NotFound)
            )),
            EXIT_IO
        );
    }

    #[test]
    fn unknown_flag_is_usage_error() {
        assert_eq!(
            run_from(["paraxial-tr", "moments", "x.cfg", "--bogus"]),
            EXIT_USAGE
        );
        assert_eq!(run_from(["paraxial-tr", "frobnicate"]), EXIT_USAGE);
    }

    #[test]
    fn manifest_detection() {
        assert!(is_manifest(Path::new("out/manifest.json")));
        assert!(!is_manifest(Path::new("run.cfg")));
    }
}
