//! Configuration files, CSV output and the command-line workflows.
//!
//! A configuration is a TOML document with the flat sections `[run]`,
//! `[model]`, `[chem]` and `[sim]`. Every key is checked: unknown keys are
//! errors, and validation failures name the offending key.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::{info, warn};
use sha2::{Digest, Sha256};
use thiserror::Error;
use toml::{Table, Value};

use crate::cauchy_sim::{self, InitialRho, SimConfig, SimError, SimOutput};
use crate::chemo_fields::{default_half_width, solve_n, ChemError, ChemParams, NField, SField};
use crate::velocity_model::{mirror_half_line, normalize_weights, ModelError, VelocityModel};
use crate::wave_profile::WaveProfile;
use crate::wave_speed::{self, SpeedError, UpsilonCurve, DEFAULT_SAMPLES};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const EXIT_OK: u8 = 0;
pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;
pub const EXIT_IO: u8 = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unknown key {0}")]
    UnknownKey(String),
    #[error("missing key {0}")]
    MissingKey(String),
    #[error("{key}: expected {expected}")]
    WrongType { key: String, expected: &'static str },
    #[error("{key}: {message}")]
    Invalid { key: String, message: String },
    #[error("{key}: {source}")]
    Model {
        key: String,
        #[source]
        source: ModelError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Validate,
    UpsilonScan,
    Profile,
    Simulate,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Validate => "validate",
            Mode::UpsilonScan => "upsilon-scan",
            Mode::Profile => "profile",
            Mode::Simulate => "simulate",
        }
    }
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "validate" => Ok(Mode::Validate),
            "upsilon-scan" => Ok(Mode::UpsilonScan),
            "profile" => Ok(Mode::Profile),
            "simulate" => Ok(Mode::Simulate),
            other => Err(format!(
                "unknown mode {other:?} (expected validate, upsilon-scan, profile or simulate)"
            )),
        }
    }
}

/// The model as written in the file: the nonnegative half of the velocity
/// set.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSource {
    pub velocities: Vec<f64>,
    pub weights: Vec<f64>,
    pub chi_s: f64,
    pub chi_n: f64,
    /// Rescale the mirrored weights to unit sum before validation.
    pub normalize_weights: bool,
}

impl ModelSource {
    pub fn build(&self) -> Result<VelocityModel, ConfigError> {
        let context = |source: ModelError| {
            let key = match source {
                ModelError::SensitivityOutOfRange { chi_s, .. } => {
                    if chi_s > 0.0 && chi_s <= 0.5 {
                        "model.chi_n"
                    } else {
                        "model.chi_s"
                    }
                }
                ModelError::WeightSumNotOne { .. } | ModelError::NegativeWeight { .. } => "model.weights",
                _ => "model.velocities",
            };
            ConfigError::Model {
                key: key.to_string(),
                source,
            }
        };
        let (v, w) = mirror_half_line(&self.velocities, &self.weights).map_err(context)?;
        let w = if self.normalize_weights {
            normalize_weights(&w)
        } else {
            w
        };
        VelocityModel::new(v, w, self.chi_s, self.chi_n).map_err(context)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub output_dir: PathBuf,
    pub samples_per_interval: usize,
    /// Speed of the `profile` workflow.
    pub profile_c: Option<f64>,
    pub model_source: ModelSource,
    pub model: VelocityModel,
    pub chem: Option<ChemParams>,
    pub sim: Option<SimConfig>,
}

impl RunConfig {
    /// Checks the blocks a mode needs and switches to it.
    pub fn with_mode(mut self, mode: Mode) -> Result<Self, ConfigError> {
        self.mode = mode;
        self.check_mode()?;
        Ok(self)
    }

    fn check_mode(&self) -> Result<(), ConfigError> {
        let missing = |k: &str| Err(ConfigError::MissingKey(k.to_string()));
        match self.mode {
            Mode::Validate => Ok(()),
            Mode::UpsilonScan if self.chem.is_none() => missing("chem"),
            Mode::Profile if self.chem.is_none() => missing("chem"),
            Mode::Profile if self.profile_c.is_none() => missing("run.profile_c"),
            Mode::Simulate if self.sim.is_none() => missing("sim"),
            _ => Ok(()),
        }
    }

    pub fn chem(&self) -> &ChemParams {
        self.chem.as_ref().expect("checked by mode")
    }
}

const RUN_KEYS: &[&str] = &["mode", "output_dir", "samples_per_interval", "profile_c"];
const MODEL_KEYS: &[&str] = &["velocities", "weights", "chi_s", "chi_n", "normalize_weights"];
const CHEM_KEYS: &[&str] = &["d_s", "d_n", "alpha", "beta", "gamma"];
const SIM_KEYS: &[&str] = &[
    "domain_length",
    "cells",
    "cfl",
    "t_end",
    "initial",
    "block_start",
    "block_end",
    "gaussian_center",
    "gaussian_width",
    "mass",
    "initial_n",
    "sign_deadzone",
    "track_interval",
    "snapshot_interval",
    "window_fraction",
    "prominence",
];

/// One section of the document with typed, key-qualified accessors.
struct Section<'a> {
    name: &'static str,
    table: &'a Table,
}

impl<'a> Section<'a> {
    fn new(doc: &'a Table, name: &'static str, keys: &[&str]) -> Result<Option<Self>, ConfigError> {
        let Some(value) = doc.get(name) else {
            return Ok(None);
        };
        let table = value.as_table().ok_or_else(|| ConfigError::WrongType {
            key: name.to_string(),
            expected: "a table",
        })?;
        if let Some(k) = table.keys().find(|k| !keys.contains(&k.as_str())) {
            return Err(ConfigError::UnknownKey(format!("{name}.{k}")));
        }
        Ok(Some(Section { name, table }))
    }

    fn key(&self, k: &str) -> String {
        format!("{}.{k}", self.name)
    }

    fn get(&self, k: &str) -> Option<&'a Value> {
        self.table.get(k)
    }

    fn require(&self, k: &str) -> Result<&'a Value, ConfigError> {
        self.get(k).ok_or_else(|| ConfigError::MissingKey(self.key(k)))
    }

    fn number(&self, k: &str, v: &Value) -> Result<f64, ConfigError> {
        match v {
            Value::Float(x) => Ok(*x),
            Value::Integer(i) => Ok(*i as f64),
            _ => Err(ConfigError::WrongType {
                key: self.key(k),
                expected: "a number",
            }),
        }
    }

    fn f64(&self, k: &str) -> Result<f64, ConfigError> {
        self.number(k, self.require(k)?)
    }

    fn f64_or(&self, k: &str, default: f64) -> Result<f64, ConfigError> {
        self.get(k).map_or(Ok(default), |v| self.number(k, v))
    }

    fn opt_f64(&self, k: &str) -> Result<Option<f64>, ConfigError> {
        self.get(k).map(|v| self.number(k, v)).transpose()
    }

    fn usize(&self, k: &str) -> Result<usize, ConfigError> {
        self.usize_value(k, self.require(k)?)
    }

    fn usize_value(&self, k: &str, v: &Value) -> Result<usize, ConfigError> {
        v.as_integer()
            .and_then(|i| usize::try_from(i).ok())
            .ok_or_else(|| ConfigError::WrongType {
                key: self.key(k),
                expected: "a nonnegative integer",
            })
    }

    fn string(&self, k: &str) -> Result<Option<&'a str>, ConfigError> {
        self.get(k)
            .map(|v| {
                v.as_str().ok_or_else(|| ConfigError::WrongType {
                    key: self.key(k),
                    expected: "a string",
                })
            })
            .transpose()
    }

    fn bool_or(&self, k: &str, default: bool) -> Result<bool, ConfigError> {
        self.get(k).map_or(Ok(default), |v| {
            v.as_bool().ok_or_else(|| ConfigError::WrongType {
                key: self.key(k),
                expected: "a boolean",
            })
        })
    }

    fn numbers(&self, k: &str) -> Result<Vec<f64>, ConfigError> {
        let arr = self.require(k)?.as_array().ok_or_else(|| ConfigError::WrongType {
            key: self.key(k),
            expected: "an array of numbers",
        })?;
        arr.iter().map(|v| self.number(k, v)).collect()
    }
}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

fn chem_context(e: ChemError) -> ConfigError {
    match e {
        ChemError::NonPositiveParameter { name, value } => ConfigError::Invalid {
            key: format!("chem.{name}"),
            message: format!("must be positive, got {value}"),
        },
        other => ConfigError::Invalid {
            key: "chem".to_string(),
            message: other.to_string(),
        },
    }
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let doc: Table = text.parse().map_err(|e: toml::de::Error| {
        let (line, column) = e.span().map_or((0, 0), |s| line_column(text, s.start));
        ConfigError::Parse {
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    if let Some(k) = doc
        .keys()
        .find(|k| !["run", "model", "chem", "sim"].contains(&k.as_str()))
    {
        return Err(ConfigError::UnknownKey(k.clone()));
    }

    let run = Section::new(&doc, "run", RUN_KEYS)?;
    let (mode, output_dir, samples_per_interval, profile_c) = match &run {
        Some(r) => {
            let mode = match r.string("mode")? {
                Some(m) => m.parse().map_err(|message| ConfigError::Invalid {
                    key: r.key("mode"),
                    message,
                })?,
                None => Mode::Validate,
            };
            let samples = match r.get("samples_per_interval") {
                Some(v) => r.usize_value("samples_per_interval", v)?,
                None => DEFAULT_SAMPLES,
            };
            if samples < wave_speed::MIN_SAMPLES {
                return Err(ConfigError::Invalid {
                    key: r.key("samples_per_interval"),
                    message: format!("must be at least {}", wave_speed::MIN_SAMPLES),
                });
            }
            let out = r.string("output_dir")?.unwrap_or("out");
            (mode, PathBuf::from(out), samples, r.opt_f64("profile_c")?)
        }
        None => (Mode::Validate, PathBuf::from("out"), DEFAULT_SAMPLES, None),
    };

    let model_sec =
        Section::new(&doc, "model", MODEL_KEYS)?.ok_or_else(|| ConfigError::MissingKey("model".into()))?;
    let model_source = ModelSource {
        velocities: model_sec.numbers("velocities")?,
        weights: model_sec.numbers("weights")?,
        chi_s: model_sec.f64("chi_s")?,
        chi_n: model_sec.f64("chi_n")?,
        normalize_weights: model_sec.bool_or("normalize_weights", false)?,
    };
    let model = model_source.build()?;

    let chem = match Section::new(&doc, "chem", CHEM_KEYS)? {
        Some(c) => Some(
            ChemParams::new(c.f64("d_s")?, c.f64("d_n")?, c.f64("alpha")?, c.f64("beta")?, c.f64("gamma")?)
                .map_err(chem_context)?,
        ),
        None => None,
    };

    let sim = match Section::new(&doc, "sim", SIM_KEYS)? {
        Some(s) => {
            let params = chem.ok_or_else(|| ConfigError::MissingKey("chem".into()))?;
            let mut cfg = SimConfig::new(
                model.clone(),
                params,
                s.f64("domain_length")?,
                s.usize("cells")?,
                s.f64("t_end")?,
            );
            cfg.cfl = s.f64_or("cfl", cfg.cfl)?;
            let mass = s.f64_or("mass", 1.0)?;
            cfg.initial_rho = match s.string("initial")?.unwrap_or("block") {
                "block" => InitialRho::Block {
                    start: s.f64_or("block_start", 0.0)?,
                    end: s.f64_or("block_end", 0.1 * cfg.domain_length)?,
                    mass,
                },
                "gaussian" => InitialRho::Gaussian {
                    center: s.f64("gaussian_center")?,
                    width: s.f64("gaussian_width")?,
                    mass,
                },
                other => {
                    return Err(ConfigError::Invalid {
                        key: s.key("initial"),
                        message: format!("expected \"block\" or \"gaussian\", got {other:?}"),
                    })
                }
            };
            cfg.initial_n = s.f64_or("initial_n", cfg.initial_n)?;
            cfg.sign_deadzone = s.f64_or("sign_deadzone", cfg.sign_deadzone)?;
            cfg.track_interval = s.f64_or("track_interval", cfg.track_interval)?;
            cfg.snapshot_interval = s.f64_or("snapshot_interval", cfg.snapshot_interval)?;
            cfg.window_fraction = s.f64_or("window_fraction", cfg.window_fraction)?;
            cfg.prominence = s.f64_or("prominence", cfg.prominence)?;
            cfg.validate().map_err(|e| match e {
                SimError::InvalidConfig { name, reason } => ConfigError::Invalid {
                    key: format!("sim.{name}"),
                    message: reason,
                },
                other => ConfigError::Invalid {
                    key: "sim".into(),
                    message: other.to_string(),
                },
            })?;
            Some(cfg)
        }
        None => None,
    };

    let config = RunConfig {
        mode,
        output_dir,
        samples_per_interval,
        profile_c,
        model_source,
        model,
        chem,
        sim,
    };
    config.check_mode()?;
    Ok(config)
}

fn float_array(values: &[f64]) -> Value {
    Value::Array(values.iter().map(|&x| Value::Float(x)).collect())
}

/// Serializes a configuration; parsing the result gives back an equal
/// configuration.
pub fn config_to_toml(config: &RunConfig) -> String {
    let mut doc = Table::new();
    let mut run = Table::new();
    run.insert("mode".into(), Value::String(config.mode.name().into()));
    run.insert(
        "output_dir".into(),
        Value::String(config.output_dir.to_string_lossy().into_owned()),
    );
    run.insert(
        "samples_per_interval".into(),
        Value::Integer(config.samples_per_interval as i64),
    );
    if let Some(c) = config.profile_c {
        run.insert("profile_c".into(), Value::Float(c));
    }
    doc.insert("run".into(), Value::Table(run));

    let m = &config.model_source;
    let mut model = Table::new();
    model.insert("velocities".into(), float_array(&m.velocities));
    model.insert("weights".into(), float_array(&m.weights));
    model.insert("chi_s".into(), Value::Float(m.chi_s));
    model.insert("chi_n".into(), Value::Float(m.chi_n));
    model.insert("normalize_weights".into(), Value::Boolean(m.normalize_weights));
    doc.insert("model".into(), Value::Table(model));

    if let Some(p) = &config.chem {
        let chem: Table = p
            .named()
            .iter()
            .map(|&(k, v)| (k.to_string(), Value::Float(v)))
            .collect();
        doc.insert("chem".into(), Value::Table(chem));
    }
    if let Some(s) = &config.sim {
        let mut sim = Table::new();
        let mut put = |k: &str, v: f64| {
            sim.insert(k.into(), Value::Float(v));
        };
        put("domain_length", s.domain_length);
        put("cfl", s.cfl);
        put("t_end", s.t_end);
        put("initial_n", s.initial_n);
        put("sign_deadzone", s.sign_deadzone);
        put("track_interval", s.track_interval);
        put("snapshot_interval", s.snapshot_interval);
        put("window_fraction", s.window_fraction);
        put("prominence", s.prominence);
        match s.initial_rho {
            InitialRho::Block { start, end, mass } => {
                put("block_start", start);
                put("block_end", end);
                put("mass", mass);
                sim.insert("initial".into(), Value::String("block".into()));
            }
            InitialRho::Gaussian {
                center,
                width,
                mass,
            } => {
                put("gaussian_center", center);
                put("gaussian_width", width);
                put("mass", mass);
                sim.insert("initial".into(), Value::String("gaussian".into()));
            }
        }
        sim.insert("cells".into(), Value::Integer(s.cells as i64));
        doc.insert("sim".into(), Value::Table(sim));
    }
    doc.to_string()
}

/// Metadata written as `#` lines at the top of every CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub version: String,
    pub config_sha256: String,
    pub seed: Option<u64>,
}

impl Provenance {
    pub fn for_config(text: &str, seed: Option<u64>) -> Self {
        Provenance {
            version: VERSION.to_string(),
            config_sha256: hex::encode(Sha256::digest(text.as_bytes())),
            seed,
        }
    }

    fn header(&self) -> String {
        let mut s = format!("# chemowave {}\n# config_sha256 {}\n", self.version, self.config_sha256);
        if let Some(seed) = self.seed {
            let _ = writeln!(s, "# seed {seed}");
        }
        s
    }
}

/// Seventeen significant digits, enough to recover every double.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_file(path: &Path, contents: &str) -> io::Result<()> {
    let mut file = io::BufWriter::new(fs::File::create(path)?);
    file.write_all(contents.as_bytes())?;
    file.flush()
}

fn csv_row(values: impl IntoIterator<Item = f64>) -> String {
    let cells: Vec<String> = values.into_iter().map(fmt_f64).collect();
    cells.join(",")
}

/// `c, upsilon, interval_id`, ascending in `c`.
pub fn emit_upsilon_csv(curve: &UpsilonCurve, path: &Path, prov: &Provenance) -> io::Result<()> {
    let mut out = prov.header();
    out.push_str("c,upsilon,interval_id\n");
    for (c, u, id) in curve.samples() {
        let _ = writeln!(out, "{},{},{id}", fmt_f64(c), fmt_f64(u));
    }
    write_file(path, &out)
}

/// `node, left_limit, right_limit, sign_change` for every velocity node
/// inside the scanned range.
pub fn emit_discontinuities_csv(curve: &UpsilonCurve, path: &Path, prov: &Provenance) -> io::Result<()> {
    let mut out = prov.header();
    out.push_str("node,left_limit,right_limit,sign_change\n");
    for d in &curve.discontinuities {
        let _ = writeln!(
            out,
            "{},{}",
            csv_row([d.node, d.left_limit, d.right_limit]),
            d.sign_change()
        );
    }
    write_file(path, &out)
}

/// `c, residual, interval_id` for every admissible speed; a
/// `# status=no_wave` line closes an empty list.
pub fn emit_speeds_summary(curve: &UpsilonCurve, path: &Path, prov: &Provenance) -> io::Result<()> {
    let mut out = prov.header();
    out.push_str("c,residual,interval_id\n");
    for r in &curve.roots {
        let _ = writeln!(out, "{},{},{}", fmt_f64(r.c), fmt_f64(r.residual), r.interval_id);
    }
    if curve.roots.is_empty() {
        out.push_str("# status=no_wave\n");
    }
    write_file(path, &out)
}

/// `z, rho, I, s, n, f_0, …` on the verification grid of the profile.
pub fn emit_profile_csv(
    profile: &WaveProfile,
    s: &SField,
    n: Option<&NField>,
    path: &Path,
    prov: &Provenance,
) -> io::Result<()> {
    let mut out = prov.header();
    let _ = writeln!(out, "# c {}", fmt_f64(profile.c()));
    out.push_str("z,rho,I,s,n");
    for k in 0..profile.model().len() {
        let _ = write!(out, ",f_{k}");
    }
    out.push('\n');
    for z in profile.verification_grid() {
        let n_value = n.map_or(f64::NAN, |nf| nf.value_at(z));
        let head = [z, profile.rho(z), profile.tumbling_density(z), s.value(z), n_value];
        let _ = writeln!(out, "{}", csv_row(head.into_iter().chain(profile.f_all(z))));
    }
    write_file(path, &out)
}

/// One snapshot file per recorded time (`x, rho, s, n`), the peak track
/// (`t, peak_x`) and a key-value diagnostics summary.
pub fn emit_simulation(output: &SimOutput, config: &SimConfig, dir: &Path, prov: &Provenance) -> io::Result<()> {
    let snap_dir = dir.join("snapshots");
    fs::create_dir_all(&snap_dir)?;
    let x = config.cell_centers();
    for (i, snap) in output.snapshots.iter().enumerate() {
        let mut out = prov.header();
        let _ = writeln!(out, "# t {}", fmt_f64(snap.t));
        out.push_str("x,rho,s,n\n");
        for j in 0..x.len() {
            let _ = writeln!(out, "{}", csv_row([x[j], snap.rho[j], snap.s[j], snap.n[j]]));
        }
        write_file(&snap_dir.join(format!("snapshot_{i:04}.csv")), &out)?;
    }
    let mut track = prov.header();
    track.push_str("t,peak_x\n");
    for &(t, px) in &output.diagnostics.peak_track {
        let _ = writeln!(track, "{}", csv_row([t, px]));
    }
    write_file(&dir.join("track.csv"), &track)?;

    let d = &output.diagnostics;
    let mut summary = prov.header();
    summary.push_str("key,value\n");
    for (k, v) in [
        ("fitted_speed", d.fitted_speed),
        ("fit_residual", d.fit_residual),
        ("mass_drift", d.mass_drift),
        ("min_f", d.min_f),
        ("min_n", d.min_n),
    ] {
        let _ = writeln!(summary, "{k},{}", fmt_f64(v));
    }
    let _ = writeln!(summary, "n_components,{}", d.n_components);
    let _ = writeln!(summary, "n_max_nonincreasing,{}", d.n_max_nonincreasing);
    write_file(&dir.join("diagnostics.csv"), &summary)
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Speed(#[from] SpeedError),
    #[error(transparent)]
    Chem(#[from] ChemError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => EXIT_VALIDATION,
            CliError::Speed(SpeedError::Model(_)) | CliError::Speed(SpeedError::TooFewSamples(_)) => {
                EXIT_VALIDATION
            }
            CliError::Sim(SimError::InvalidConfig { .. }) => EXIT_VALIDATION,
            CliError::Speed(_) | CliError::Chem(_) | CliError::Sim(_) => EXIT_NUMERICAL,
            CliError::Io { .. } => EXIT_IO,
        }
    }
}

fn io_at(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn read_config(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(io_at(path))
}

/// Runs the workflow of `config.mode`, writing into `out_dir`; returns a
/// short human-readable summary.
pub fn execute(config: &RunConfig, out_dir: &Path, prov: &Provenance) -> Result<String, CliError> {
    let model = &config.model;
    let interval = model.admissible_speed_interval().map_err(SpeedError::from)?;
    let mut summary = format!(
        "{} active velocities; c_lower = {}, c_upper = {}, {} continuity intervals\n",
        model.len(),
        interval.c_lower,
        interval.c_upper,
        interval.admissible_intervals.len()
    );
    if config.mode == Mode::Validate {
        return Ok(summary);
    }
    fs::create_dir_all(out_dir).map_err(io_at(out_dir))?;
    match config.mode {
        Mode::Validate => unreachable!(),
        Mode::UpsilonScan => {
            let params = config.chem();
            let curve = wave_speed::find_wave_speeds(model, params, config.samples_per_interval)?;
            for root in &curve.roots {
                let check = wave_speed::verify_root(model, params, root.c)?;
                if !check.unimodal || check.max_location.abs() > 1e-6 {
                    warn!(
                        "attractant at c = {} is not peaked at the origin (max at {})",
                        root.c, check.max_location
                    );
                }
            }
            for (name, emit) in [
                ("upsilon.csv", emit_upsilon_csv as fn(&UpsilonCurve, &Path, &Provenance) -> io::Result<()>),
                ("discontinuities.csv", emit_discontinuities_csv),
                ("speeds.csv", emit_speeds_summary),
            ] {
                let path = out_dir.join(name);
                emit(&curve, &path, prov).map_err(io_at(&path))?;
            }
            if curve.roots.is_empty() {
                summary.push_str("no admissible wave speed\n");
            }
            for r in &curve.roots {
                let _ = writeln!(summary, "wave speed {} (residual {:e})", r.c, r.residual);
            }
            if !curve.failures.is_empty() {
                let _ = writeln!(summary, "{} sample(s) failed", curve.failures.len());
            }
        }
        Mode::Profile => {
            let c = config.profile_c.expect("checked by mode");
            let params = config.chem();
            let (profile, rho, s) = wave_speed::wave_fields(model, params, c)?;
            let n = if c > 0.0 {
                Some(solve_n(&rho, params, c, default_half_width(&rho))?)
            } else {
                None
            };
            let path = out_dir.join("profile.csv");
            emit_profile_csv(&profile, &s, n.as_ref(), &path, prov).map_err(io_at(&path))?;
            let _ = writeln!(
                summary,
                "profile at c = {c}: dS/dz(0) = {:e}, unimodal S: {}",
                s.slope_at_zero,
                s.is_unimodal()
            );
        }
        Mode::Simulate => {
            let sim = config.sim.as_ref().expect("checked by mode");
            info!("simulating to t = {} on {} cells", sim.t_end, sim.cells);
            let output = cauchy_sim::run(sim)?;
            emit_simulation(&output, sim, out_dir, prov).map_err(io_at(out_dir))?;
            let d = &output.diagnostics;
            let _ = writeln!(
                summary,
                "fitted front speed {} (rms {}), {} component(s), mass drift {:e}",
                d.fitted_speed, d.fit_residual, d.n_components, d.mass_drift
            );
        }
    }
    Ok(summary)
}
