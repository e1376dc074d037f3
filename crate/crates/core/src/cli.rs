//! Run configuration, subcommand dispatch and CSV export.

use std::f64::consts::PI;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dispersive::{
    dispersive_curve, tls_boundary, ChebyshevDispersion, DispersiveModel, DressedDispersion, TlsMode,
};
use crate::dynamics::{
    fit_kappa, fixed_flux_trajectory, simulate_ramsey, synthesize_compensation_with, window_model,
    CompensationOptions, ContrastSample, DrivePulse, MeasurementDephasing, ReadoutTrajectory,
};
use crate::error::{ensure_finite, ensure_positive, FluxError, Result};
use crate::mist::{dressed_resonator_drive, find_collisions, mist_map};
use crate::optimize::{optimize_readout, CmaConfig, DephasingSource, SimulatedReadout, DEFAULT_SHOTS};
use crate::readout::{
    classify_errors, fidelity, postselect_error_curve, simulate_shots, NoiseModel, ShotRecord,
};
use crate::spectrum::{DeviceParams, FluxoniumBasis, NumericsConfig};

/// Evenly spaced samples `min, ..., max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl Grid {
    pub const fn new(min: f64, max: f64, points: usize) -> Self {
        Grid { min, max, points }
    }

    pub fn validate(&self, field: &str) -> Result<()> {
        ensure_finite(field, self.min)?;
        ensure_finite(field, self.max)?;
        if self.points == 0 || (self.points > 1 && !(self.max > self.min)) {
            return Err(FluxError::validation(
                field,
                "need points >= 1 and max > min when points > 1",
            ));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.min];
        }
        let span = self.max - self.min;
        let last = (self.points - 1) as f64;
        (0..self.points).map(|i| self.min + span * i as f64 / last).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumOptions {
    pub phi: Grid,
    /// Levels reported, including the ground state.
    pub levels: usize,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        SpectrumOptions {
            phi: Grid::new(0.0, 2.0 * PI, 101),
            levels: 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChiOptions {
    pub phi: Grid,
}

impl Default for ChiOptions {
    fn default() -> Self {
        ChiOptions {
            phi: Grid::new(0.6 * PI, 1.4 * PI, 81),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MistOptions {
    pub phi: Grid,
    pub n_bar: Grid,
    pub level: usize,
    /// Replaces the top-level numerics for this map when given.
    pub numerics: Option<NumericsConfig>,
}

impl Default for MistOptions {
    fn default() -> Self {
        MistOptions {
            phi: Grid::new(0.6 * PI, 1.4 * PI, 25),
            n_bar: Grid::new(0.0, 40.0, 25),
            level: 0,
            numerics: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriveReference {
    /// Qubit-state-dressed resonator frequency.
    Dressed,
    /// Bare `f_r`.
    Bare,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CollisionOptions {
    pub phi: Grid,
    pub transitions: Vec<(usize, usize)>,
    pub m_max: u32,
    pub drive: DriveReference,
}

impl Default for CollisionOptions {
    fn default() -> Self {
        CollisionOptions {
            phi: Grid::new(0.6 * PI, 1.4 * PI, 161),
            transitions: vec![(1, 3), (1, 5)],
            m_max: 3,
            drive: DriveReference::Dressed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReadoutOptions {
    pub n_bar: f64,
    /// MHz.
    pub detuning: f64,
    /// us.
    pub duration: f64,
    pub phi_start: f64,
    pub compensate: bool,
    pub compensation: CompensationOptions,
    /// Widen TLS lines by the measurement-dephasing rate.
    pub dephasing_broadening: bool,
    pub shots: usize,
}

impl Default for ReadoutOptions {
    fn default() -> Self {
        ReadoutOptions {
            n_bar: 10.0,
            detuning: 0.0,
            duration: 2.0,
            phi_start: 1.05 * PI,
            compensate: true,
            compensation: CompensationOptions::default(),
            dephasing_broadening: true,
            shots: DEFAULT_SHOTS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RamseyOptions {
    /// Drive offsets from the zero-photon `f01` at `phi_start`, MHz.
    pub drive_offset: Grid,
    /// us.
    pub delays: Grid,
    /// us.
    pub interval: f64,
}

impl Default for RamseyOptions {
    fn default() -> Self {
        RamseyOptions {
            drive_offset: Grid::new(-8.0, 8.0, 161),
            delays: Grid::new(0.0, 2.4, 49),
            interval: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PostselectOptions {
    /// Defaults to the noise model threshold.
    pub threshold: Option<f64>,
    pub gaps: Grid,
    pub truth: u8,
}

impl Default for PostselectOptions {
    fn default() -> Self {
        PostselectOptions {
            threshold: None,
            gaps: Grid::new(0.0, 4.0, 41),
            truth: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizeOptions {
    pub n_bar: (f64, f64),
    pub phi_start: (f64, f64),
    pub detuning: (f64, f64),
    /// Physical start point; the box center when omitted.
    pub x0: Option<[f64; 3]>,
    /// Fraction of each interval.
    pub sigma0: f64,
    pub budget: usize,
    pub population: Option<usize>,
    /// Shots per preparation per evaluation.
    pub shots: usize,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        OptimizeOptions {
            n_bar: (1.0, 30.0),
            phi_start: (1.0 * PI, 1.1 * PI),
            detuning: (-2.0, 2.0),
            x0: None,
            sigma0: 0.3,
            budget: 240,
            population: None,
            shots: DEFAULT_SHOTS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitKappaOptions {
    /// us.
    pub pulse_duration: f64,
}

impl Default for FitKappaOptions {
    fn default() -> Self {
        FitKappaOptions { pulse_duration: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub device: DeviceParams,
    #[serde(default)]
    pub numerics: NumericsConfig,
    #[serde(default)]
    pub tls_catalog: Vec<TlsMode>,
    #[serde(default)]
    pub noise: NoiseModel,
    #[serde(default)]
    pub spectrum: SpectrumOptions,
    #[serde(default)]
    pub chi: ChiOptions,
    #[serde(default)]
    pub mist: MistOptions,
    #[serde(default)]
    pub collisions: CollisionOptions,
    #[serde(default)]
    pub readout: ReadoutOptions,
    #[serde(default)]
    pub ramsey: RamseyOptions,
    #[serde(default)]
    pub postselect: PostselectOptions,
    #[serde(default)]
    pub optimize: OptimizeOptions,
    #[serde(default)]
    pub fit_kappa: FitKappaOptions,
}

/// The bundled example configuration.
pub const EXAMPLE_CONFIG: &str = include_str!("../config/example.json");

impl RunConfig {
    pub fn example() -> Self {
        parse_config(EXAMPLE_CONFIG, Path::new("<bundled example>")).expect("bundled example config is valid")
    }

    pub fn validate(&self) -> Result<()> {
        self.device.validate()?;
        self.numerics.validate(&self.device)?;
        for (i, tls) in self.tls_catalog.iter().enumerate() {
            tls.validate().map_err(|e| prefix(e, &format!("tls_catalog[{i}]")))?;
        }
        self.noise.validate()?;
        self.spectrum.phi.validate("spectrum.phi")?;
        if self.spectrum.levels < 2 || self.spectrum.levels > self.numerics.n_osc {
            return Err(FluxError::validation("spectrum.levels", "need 2 <= levels <= n_osc"));
        }
        self.chi.phi.validate("chi.phi")?;
        self.mist.phi.validate("mist.phi")?;
        self.mist.n_bar.validate("mist.n_bar")?;
        if self.mist.n_bar.min < 0.0 {
            return Err(FluxError::validation("mist.n_bar", "photon numbers must be >= 0"));
        }
        if let Some(n) = &self.mist.numerics {
            n.validate(&self.device).map_err(|e| prefix(e, "mist"))?;
        }
        self.collisions.phi.validate("collisions.phi")?;
        if self.collisions.m_max == 0 {
            return Err(FluxError::validation("collisions.m_max", "must be >= 1"));
        }
        let r = &self.readout;
        if !(r.n_bar >= 0.0) {
            return Err(FluxError::validation("readout.n_bar", "must be >= 0"));
        }
        ensure_finite("readout.detuning", r.detuning)?;
        ensure_positive("readout.duration", r.duration)?;
        ensure_finite("readout.phi_start", r.phi_start)?;
        r.compensation.validate()?;
        if r.shots == 0 {
            return Err(FluxError::validation("readout.shots", "must be >= 1"));
        }
        self.ramsey.drive_offset.validate("ramsey.drive_offset")?;
        self.ramsey.delays.validate("ramsey.delays")?;
        ensure_positive("ramsey.interval", self.ramsey.interval)?;
        self.postselect.gaps.validate("postselect.gaps")?;
        if self.postselect.gaps.min < 0.0 {
            return Err(FluxError::validation("postselect.gaps", "gaps must be >= 0"));
        }
        if self.postselect.truth > 1 {
            return Err(FluxError::validation("postselect.truth", "must be 0 or 1"));
        }
        self.optimizer_config(0)?.validate()?;
        if self.optimize.shots == 0 {
            return Err(FluxError::validation("optimize.shots", "must be >= 1"));
        }
        ensure_positive("fit_kappa.pulse_duration", self.fit_kappa.pulse_duration)
    }

    fn optimizer_config(&self, seed: u64) -> Result<CmaConfig> {
        let o = &self.optimize;
        let bounds = vec![o.n_bar, o.phi_start, o.detuning];
        let x0 = match o.x0 {
            Some(x) => x.to_vec(),
            None => bounds.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect(),
        };
        let cfg = CmaConfig {
            x0,
            sigma0: o.sigma0,
            population: o.population,
            budget: o.budget,
            bounds,
            seed,
        };
        cfg.validate().map_err(|e| prefix(e, "optimize"))?;
        Ok(cfg)
    }
}

fn prefix(err: FluxError, scope: &str) -> FluxError {
    match err {
        FluxError::Validation { field, reason } => FluxError::Validation {
            field: format!("{scope}.{}", field.rsplit('.').next().unwrap_or(&field)),
            reason,
        },
        other => other,
    }
}

fn parse_config(text: &str, path: &Path) -> Result<RunConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let config: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let inner = e.inner();
        FluxError::Config {
            path: path.to_path_buf(),
            location: format!("`{}` (line {}, column {})", e.path(), inner.line(), inner.column()),
            reason: inner.to_string(),
        }
    })?;
    config.validate()?;
    Ok(config)
}

/// Read, parse and validate a JSON run configuration.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| FluxError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text, path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    Spectrum,
    Chi,
    MistMap,
    Collisions,
    TlsBoundaries,
    Compensate,
    Ramsey,
    SimulateReadout,
    Postselect,
    Classify,
    Optimize,
    FitKappa,
}

impl Subcommand {
    pub const ALL: [Subcommand; 12] = [
        Subcommand::Spectrum,
        Subcommand::Chi,
        Subcommand::MistMap,
        Subcommand::Collisions,
        Subcommand::TlsBoundaries,
        Subcommand::Compensate,
        Subcommand::Ramsey,
        Subcommand::SimulateReadout,
        Subcommand::Postselect,
        Subcommand::Classify,
        Subcommand::Optimize,
        Subcommand::FitKappa,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Spectrum => "spectrum",
            Subcommand::Chi => "chi",
            Subcommand::MistMap => "mist-map",
            Subcommand::Collisions => "collisions",
            Subcommand::TlsBoundaries => "tls-boundaries",
            Subcommand::Compensate => "compensate",
            Subcommand::Ramsey => "ramsey",
            Subcommand::SimulateReadout => "simulate-readout",
            Subcommand::Postselect => "postselect",
            Subcommand::Classify => "classify",
            Subcommand::Optimize => "optimize",
            Subcommand::FitKappa => "fit-kappa",
        }
    }

    pub fn randomized(self) -> bool {
        matches!(self, Subcommand::SimulateReadout | Subcommand::Optimize)
    }

    pub fn needs_input(self) -> bool {
        matches!(self, Subcommand::Postselect | Subcommand::Classify | Subcommand::FitKappa)
    }
}

impl FromStr for Subcommand {
    type Err = FluxError;

    fn from_str(s: &str) -> Result<Self> {
        Subcommand::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Subcommand::ALL.iter().map(|c| c.name()).collect();
                FluxError::Usage(format!("unknown subcommand `{s}`; expected one of {}", names.join(", ")))
            })
    }
}

/// Everything a subcommand needs besides the configuration.
#[derive(Debug, Clone, Default)]
pub struct RunArgs {
    pub out_dir: PathBuf,
    pub seed: Option<u64>,
    pub input: Option<PathBuf>,
}

/// Run one subcommand and return the files it wrote.
pub fn run_subcommand(command: Subcommand, config: &RunConfig, args: &RunArgs) -> Result<Vec<PathBuf>> {
    if command.randomized() && args.seed.is_none() {
        return Err(FluxError::Usage(format!("`{}` is randomized and requires --seed", command.name())));
    }
    if command.needs_input() && args.input.is_none() {
        return Err(FluxError::Usage(format!("`{}` reads data and requires --input", command.name())));
    }
    std::fs::create_dir_all(&args.out_dir).map_err(|source| FluxError::Io {
        path: args.out_dir.clone(),
        source,
    })?;
    let out = |name: &str| args.out_dir.join(name);
    let seed = args.seed.unwrap_or(0);
    let input = args.input.as_deref().unwrap_or(Path::new(""));
    match command {
        Subcommand::Spectrum => run_spectrum(config, &out("spectrum.csv")),
        Subcommand::Chi => run_chi(config, &out("chi.csv")),
        Subcommand::MistMap => run_mist(config, &out("mist_map.csv")),
        Subcommand::Collisions => run_collisions(config, &out("collisions.csv")),
        Subcommand::TlsBoundaries => run_tls_boundaries(config, &out("tls_boundaries.csv")),
        Subcommand::Compensate => {
            let traj = readout_trajectory(config, &readout_model(config)?)?;
            write_trajectory(&out("trajectory.csv"), &traj)?;
            Ok(vec![out("trajectory.csv")])
        }
        Subcommand::Ramsey => run_ramsey(config, &out("ramsey.csv")),
        Subcommand::SimulateReadout => run_readout(config, seed, &args.out_dir),
        Subcommand::Postselect => {
            let records = read_shots(input)?;
            let threshold = config.postselect.threshold.unwrap_or(config.noise.threshold);
            let curve = postselect_error_curve(&records, threshold, &config.postselect.gaps.values(), config.postselect.truth)?;
            let path = out("postselect.csv");
            write_csv(
                &path,
                &["gap", "retained", "error"],
                curve.iter().map(|p| vec![num(p.gap), num(p.retained), num(p.error)]),
            )?;
            Ok(vec![path])
        }
        Subcommand::Classify => {
            let records = read_shots(input)?;
            let c = classify_errors(&records)?;
            let path = out("classify.csv");
            write_csv(
                &path,
                &["correct", "assignment_error", "transition_error", "other", "total"],
                std::iter::once(
                    [c.correct, c.assignment_error, c.transition_error, c.other, c.total()]
                        .iter()
                        .map(|v| v.to_string())
                        .collect(),
                ),
            )?;
            Ok(vec![path])
        }
        Subcommand::Optimize => run_optimize(config, seed, &args.out_dir),
        Subcommand::FitKappa => {
            let samples: Vec<ContrastSample> = read_csv(input)?;
            let fit = fit_kappa(&samples, config.fit_kappa.pulse_duration)?;
            let path = out("fit_kappa.csv");
            write_csv(
                &path,
                &["kappa", "n_bar_scale", "residual"],
                std::iter::once(vec![num(fit.kappa), num(fit.n_bar_scale), num(fit.residual)]),
            )?;
            Ok(vec![path])
        }
    }
}

/// Shortest round-trip decimal; `NaN` for missing values.
pub fn num(v: f64) -> String {
    format!("{v}")
}

pub fn write_csv<I>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let io = |e: csv::Error| FluxError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e),
    };
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|source| FluxError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|source| FluxError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::Reader::from_reader(BufReader::new(file));
    reader
        .deserialize()
        .enumerate()
        .map(|(i, row)| {
            row.map_err(|e| FluxError::Config {
                path: path.to_path_buf(),
                location: format!("record {}", i + 1),
                reason: e.to_string(),
            })
        })
        .collect()
}

pub fn read_shots(path: &Path) -> Result<Vec<ShotRecord>> {
    read_csv(path)
}

pub fn write_shots(path: &Path, records: &[ShotRecord]) -> Result<()> {
    write_csv(
        path,
        &["m1", "m2", "m3", "iq1", "iq2", "iq3"],
        records.iter().map(|r| {
            vec![
                r.m1.to_string(),
                r.m2.to_string(),
                r.m3.to_string(),
                num(r.iq1),
                num(r.iq2),
                num(r.iq3),
            ]
        }),
    )
}

pub fn write_trajectory(path: &Path, traj: &ReadoutTrajectory) -> Result<()> {
    write_csv(
        path,
        &["t", "phi_ext", "n_bar", "f01_shifted"],
        traj.samples
            .iter()
            .map(|s| vec![num(s.t), num(s.phi_ext), num(s.n_bar), num(s.f01_shifted)]),
    )
}

fn run_spectrum(config: &RunConfig, path: &Path) -> Result<Vec<PathBuf>> {
    use rayon::prelude::*;
    let basis = FluxoniumBasis::new(&config.device, config.numerics.n_osc)?;
    let levels = config.spectrum.levels;
    let rows = config
        .spectrum
        .phi
        .values()
        .par_iter()
        .map(|&phi| {
            let spec = basis.diagonalize(phi)?;
            let mut row = vec![num(phi)];
            row.extend((1..levels).map(|j| num(spec.energies[j] - spec.energies[0])));
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut header = vec!["phi_ext".to_string()];
    header.extend((1..levels).map(|j| format!("f0{j}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(path, &header, rows)?;
    Ok(vec![path.to_path_buf()])
}

fn run_chi(config: &RunConfig, path: &Path) -> Result<Vec<PathBuf>> {
    let model = DressedDispersion::new(&config.device, &config.numerics)?;
    let phis = config.chi.phi.values();
    let rows = phis.iter().zip(dispersive_curve(&model, &phis)).map(|(&phi, point)| match point {
        Ok(p) => vec![num(phi), num(p.f01), num(p.chi), "ok".into()],
        Err(e) => vec![num(phi), num(f64::NAN), num(f64::NAN), e.to_string()],
    });
    write_csv(path, &["phi_ext", "f01", "chi", "status"], rows)?;
    Ok(vec![path.to_path_buf()])
}

fn run_mist(config: &RunConfig, path: &Path) -> Result<Vec<PathBuf>> {
    let numerics = config.mist.numerics.unwrap_or(config.numerics);
    let points = mist_map(
        &config.device,
        &numerics,
        &config.mist.phi.values(),
        &config.mist.n_bar.values(),
        config.mist.level,
    )?;
    let rows = points.iter().map(|p| {
        let (eps, status) = match &p.epsilon {
            Ok(v) => (*v, "ok".to_string()),
            Err(e) => (f64::NAN, e.clone()),
        };
        vec![num(p.phi_ext), num(p.n_bar), p.level.to_string(), num(eps), status]
    });
    write_csv(path, &["phi_ext", "n_bar", "level", "epsilon", "status"], rows)?;
    Ok(vec![path.to_path_buf()])
}

fn run_collisions(config: &RunConfig, path: &Path) -> Result<Vec<PathBuf>> {
    let opts = &config.collisions;
    let phis = opts.phi.values();
    let loci = match opts.drive {
        DriveReference::Bare => {
            let f_r = config.device.f_r;
            find_collisions(&config.device, &config.numerics, &opts.transitions, &phis, 1..=opts.m_max, |_, _| Ok(f_r))?
        }
        DriveReference::Dressed => {
            let mut levels: Vec<usize> = opts.transitions.iter().map(|t| t.0).collect();
            levels.sort_unstable();
            levels.dedup();
            let drive = dressed_resonator_drive(&config.device, &config.numerics, &levels, &phis)?;
            find_collisions(&config.device, &config.numerics, &opts.transitions, &phis, 1..=opts.m_max, |i, phi| {
                Ok(drive[&i].eval(phi))
            })?
        }
    };
    let rows = loci.iter().flat_map(|locus| {
        locus.curve.iter().map(move |&(phi, f)| {
            vec![
                locus.transition.0.to_string(),
                locus.transition.1.to_string(),
                locus.m.to_string(),
                num(phi),
                num(f),
            ]
        })
    });
    write_csv(path, &["i", "j", "m", "phi_ext", "frequency"], rows)?;
    Ok(vec![path.to_path_buf()])
}

fn run_tls_boundaries(config: &RunConfig, path: &Path) -> Result<Vec<PathBuf>> {
    if config.tls_catalog.is_empty() {
        return Err(FluxError::validation("tls_catalog", "no TLS modes configured"));
    }
    let model = DressedDispersion::new(&config.device, &config.numerics)?;
    let phis = config.chi.phi.values();
    let points: Vec<_> = dispersive_curve(&model, &phis)
        .into_iter()
        .filter_map(|p| match p {
            Ok(p) => Some(p),
            Err(e) => {
                log::warn!("skipping flux point: {e}");
                None
            }
        })
        .collect();
    let mut rows = Vec::new();
    for (index, tls) in config.tls_catalog.iter().enumerate() {
        let boundary = tls_boundary(&points, tls);
        for phi in &boundary.singular {
            log::warn!("TLS {index}: chi vanishes at phi_ext = {phi}, no boundary point");
        }
        rows.extend(
            boundary
                .points
                .iter()
                .map(|b| vec![index.to_string(), num(tls.f_tls), num(b.phi_ext), num(b.n)]),
        );
    }
    write_csv(path, &["tls_index", "f_tls", "phi_ext", "n"], rows)?;
    Ok(vec![path.to_path_buf()])
}

/// Interpolated dispersive model over the readout flux window.
pub fn readout_model(config: &RunConfig) -> Result<ChebyshevDispersion> {
    window_model(
        &config.device,
        &config.numerics,
        config.readout.phi_start,
        &config.readout.compensation,
    )
}

fn readout_pulse(config: &RunConfig) -> DrivePulse {
    let r = &config.readout;
    DrivePulse::for_photons(r.n_bar, r.detuning, r.duration, config.device.kappa)
}

/// Compensated or fixed-flux trajectory, per `readout.compensate`.
pub fn readout_trajectory<M: DispersiveModel>(config: &RunConfig, model: &M) -> Result<ReadoutTrajectory> {
    let r = &config.readout;
    let pulse = readout_pulse(config);
    if r.compensate {
        synthesize_compensation_with(model, &pulse, config.device.kappa, r.phi_start, &r.compensation)
    } else {
        fixed_flux_trajectory(model, &pulse, config.device.kappa, r.phi_start, &r.compensation)
    }
}

fn dephasing_at<M: DispersiveModel>(config: &RunConfig, model: &M) -> Result<MeasurementDephasing> {
    Ok(MeasurementDephasing {
        chi: model.point(config.readout.phi_start)?.chi,
        kappa: config.device.kappa,
    })
}

fn run_ramsey(config: &RunConfig, path: &Path) -> Result<Vec<PathBuf>> {
    let model = readout_model(config)?;
    let traj = readout_trajectory(config, &model)?;
    let f0 = model.point(config.readout.phi_start)?.f01;
    let dephasing = dephasing_at(config, &model)?;
    let drives: Vec<f64> = config.ramsey.drive_offset.values().iter().map(|d| f0 + d * 1e-3).collect();
    let map = simulate_ramsey(
        &traj,
        &drives,
        &config.ramsey.delays.values(),
        config.ramsey.interval,
        |n| dephasing.rate(n),
    )?;
    let mut rows = Vec::new();
    for (i, &delay) in map.delays.iter().enumerate() {
        for (j, &fd) in map.drive_freqs.iter().enumerate() {
            rows.push(vec![num(delay), num(fd), num(map.probability[i][j])]);
        }
    }
    write_csv(path, &["delay", "drive_frequency", "probability"], rows)?;
    Ok(vec![path.to_path_buf()])
}

fn run_readout(config: &RunConfig, seed: u64, dir: &Path) -> Result<Vec<PathBuf>> {
    let model = readout_model(config)?;
    let traj = readout_trajectory(config, &model)?;
    let dephasing = dephasing_at(config, &model)?;
    let broadening = config.readout.dephasing_broadening;
    let rate = |n: f64| if broadening { dephasing.rate(n) } else { 0.0 };
    let mut written = Vec::new();
    let mut by_state = Vec::new();
    for state in [0u8, 1] {
        let shots = simulate_shots(
            &traj,
            &config.tls_catalog,
            &config.noise,
            rate,
            state,
            config.readout.shots,
            seed.wrapping_add(u64::from(state)),
        )?;
        let path = dir.join(format!("shots_{state}.csv"));
        write_shots(&path, &shots)?;
        written.push(path);
        by_state.push(shots);
    }
    let f = fidelity(&by_state[0], &by_state[1])?;
    let mut rows = Vec::new();
    for (state, shots) in by_state.iter().enumerate() {
        let c = classify_errors(shots)?;
        let wrong = shots.iter().filter(|r| usize::from(r.m2) != state).count();
        rows.push(vec![
            state.to_string(),
            shots.len().to_string(),
            c.correct.to_string(),
            c.assignment_error.to_string(),
            c.transition_error.to_string(),
            c.other.to_string(),
            num(wrong as f64 / shots.len() as f64),
            num(f),
        ]);
    }
    let path = dir.join("readout_summary.csv");
    write_csv(
        &path,
        &[
            "initial_state",
            "shots",
            "correct",
            "assignment_error",
            "transition_error",
            "other",
            "m2_error",
            "fidelity",
        ],
        rows,
    )?;
    written.push(path);
    Ok(written)
}

fn run_optimize(config: &RunConfig, seed: u64, dir: &Path) -> Result<Vec<PathBuf>> {
    let (lo, hi) = config.optimize.phi_start;
    let margin = config.readout.compensation.flux_window;
    let exact = DressedDispersion::new(&config.device, &config.numerics)?;
    let nodes = config.readout.compensation.nodes.max(16);
    let model = ChebyshevDispersion::build(&exact, lo - margin, hi + margin, nodes)?;
    let objective = SimulatedReadout {
        model: &model,
        kappa: config.device.kappa,
        catalog: &config.tls_catalog,
        noise: config.noise,
        options: config.readout.compensation,
        compensate: config.readout.compensate,
        dephasing: config.readout.dephasing_broadening.then_some(DephasingSource::ChiAtBias),
        shots: config.optimize.shots,
        seed,
    };
    let cma = config.optimizer_config(seed)?;
    let best = optimize_readout(&objective, config.readout.duration, &cma)?;
    let trace = dir.join("optimize_trace.csv");
    write_csv(
        &trace,
        &["generation", "evaluations", "best_value", "sigma", "n_bar", "phi_start", "detuning"],
        best.result.history.iter().map(|g| {
            vec![
                g.generation.to_string(),
                g.evaluations.to_string(),
                num(g.best_value),
                num(g.sigma),
                num(g.best_x[0]),
                num(g.best_x[1]),
                num(g.best_x[2]),
            ]
        }),
    )?;
    let result = dir.join("optimize_result.csv");
    write_csv(
        &result,
        &["n_bar", "phi_start", "detuning", "error", "error_stderr", "evaluations", "failed_candidates", "termination"],
        std::iter::once(vec![
            num(best.settings.n_bar),
            num(best.settings.phi_start),
            num(best.settings.detuning),
            num(best.error),
            num(best.error_stderr),
            best.result.evaluations.to_string(),
            best.failed_candidates.to_string(),
            format!("{:?}", best.result.termination).to_lowercase(),
        ]),
    )?;
    Ok(vec![trace, result])
}
