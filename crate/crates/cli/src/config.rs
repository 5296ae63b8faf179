//! Experiment configuration: TOML with explicit units, presets, `--set`
//! overrides and validation errors that name the offending field.

use std::fmt;
use std::path::{Path, PathBuf};

use toml::{Table, Value};

use noisespec::classical_noise::{LorentzianSumPSD, LorentzianTerm, SquareNoiseModel};
use noisespec::comb_inversion::Truncation;
use noisespec::experiments::DataMode;
use noisespec::sequences::SequenceDescription;
use noisespec::spinboson::{BathStateModel, SpectralDensity, SpinBosonModel, ThermalComponent};

use crate::units::{parse_quantity, Dimension};

pub const PRESETS: [(&str, &str); 4] = [
    ("fig1", include_str!("../presets/fig1.toml")),
    ("fig2", include_str!("../presets/fig2.toml")),
    ("fig4", include_str!("../presets/fig4.toml")),
    ("alvarez-suter", include_str!("../presets/alvarez-suter.toml")),
];

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

type Result<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone)]
pub struct Timing {
    pub delta: Option<f64>,
    pub tau: f64,
    pub q: Option<u64>,
    pub repetitions: u32,
}

#[derive(Debug, Clone)]
pub enum Noise {
    Classical(SquareNoiseModel),
    SpinBoson(SpinBosonModel),
}

#[derive(Debug, Clone)]
pub struct Search {
    pub count: usize,
    pub iterations: usize,
    pub max_parts: usize,
    pub granularity: u64,
    pub max_order: u32,
}

#[derive(Debug, Clone)]
pub enum SequenceSource {
    List(Vec<SequenceDescription>),
    Search(Search),
    /// CPMG trains of `1..=n` cycles on a common period.
    CpmgFamily(u64),
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    /// Highest harmonic of the PSD (or `S_eff`).
    pub radius: i64,
    pub bispectrum_radius: Option<i64>,
    pub bispectrum_shape: Truncation,
    pub trispectrum_radius: i64,
    pub data: DataMode,
    pub grid_nodes: usize,
    /// Relative singular-value cutoff for a truncated-SVD solve.
    pub cutoff: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimulationMethod {
    Quadrature,
    MonteCarlo,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub method: SimulationMethod,
    pub trajectories: usize,
}

#[derive(Debug, Clone)]
pub struct Prediction {
    pub step: f64,
    pub count: usize,
    /// Monte Carlo trajectories for the classical oracle; 0 skips it.
    pub trajectories: usize,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    pub timing: Timing,
    pub noise: Option<Noise>,
    pub sequences: Option<SequenceSource>,
    pub reconstruction: Option<Reconstruction>,
    pub simulation: Simulation,
    pub prediction: Option<Prediction>,
}

impl ExperimentConfig {
    pub fn noise(&self) -> Result<&Noise> {
        self.noise.as_ref().ok_or_else(|| missing("noise"))
    }

    pub fn sequences(&self) -> Result<&SequenceSource> {
        self.sequences.as_ref().ok_or_else(|| missing("sequences"))
    }

    pub fn reconstruction(&self) -> Result<&Reconstruction> {
        self.reconstruction.as_ref().ok_or_else(|| missing("reconstruction"))
    }

    pub fn prediction(&self) -> Result<&Prediction> {
        self.prediction.as_ref().ok_or_else(|| missing("prediction"))
    }
}

fn missing(section: &str) -> ConfigError {
    ConfigError::new(section, "section is required by this subcommand")
}

pub fn preset_text(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

fn parse_table(text: &str, origin: &str) -> Result<Table> {
    text.parse::<Table>()
        .map_err(|e| ConfigError::new("", format!("{origin}: {}", e.message())))
}

fn preset_table(name: &str, path: &str) -> Result<Table> {
    let text = preset_text(name).ok_or_else(|| {
        let known: Vec<&str> = PRESETS.iter().map(|p| p.0).collect();
        ConfigError::new(path, format!("unknown preset `{name}` (known: {})", known.join(", ")))
    })?;
    parse_table(text, &format!("preset {name}"))
}

fn merge(base: &mut Table, top: Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Applies `a.b.c=value`. The value is read as TOML when it parses and as a
/// plain string otherwise, so `--set timing.tau="300 us"` and
/// `--set timing.tau=300 us` both work.
pub fn apply_override(table: &mut Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| ConfigError::new("--set", format!("`{assignment}` is not key=value")))?;
    let key = key.trim();
    let value = format!("v = {}", raw.trim())
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.trim().to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(ConfigError::new("--set", format!("bad key `{key}`")));
    }
    let mut cur = table;
    for (i, part) in parts[..parts.len() - 1].iter().enumerate() {
        let here = parts[..=i].join(".");
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        cur = match entry {
            Value::Table(t) => t,
            Value::Array(items) => {
                // `terms.1.center`: the next segment indexes the array
                let idx: usize = parts[i + 1]
                    .parse()
                    .map_err(|_| ConfigError::new(here.clone(), "array needs a numeric index"))?;
                let item = items
                    .get_mut(idx)
                    .ok_or_else(|| ConfigError::new(here.clone(), format!("index {idx} out of range")))?;
                let Value::Table(t) = item else {
                    return Err(ConfigError::new(here, "array items are not tables"));
                };
                if i + 2 == parts.len() {
                    return Err(ConfigError::new(key, "cannot replace a whole array item"));
                }
                return set_nested(t, &parts[i + 2..], value, key);
            }
            _ => return Err(ConfigError::new(here, "not a table")),
        };
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn set_nested(table: &mut Table, parts: &[&str], value: Value, key: &str) -> Result<()> {
    let mut cur = table;
    for part in &parts[..parts.len() - 1] {
        cur = match cur
            .entry(part.to_string())
            .or_insert_with(|| Value::Table(Table::new()))
        {
            Value::Table(t) => t,
            _ => return Err(ConfigError::new(key, "not a table")),
        };
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Raw table from a config file and/or preset, with overrides applied. A
/// config may name a `preset` it extends; `preset` is used alone when no
/// file is given.
pub fn load_table(config: Option<&Path>, preset: Option<&str>, overrides: &[String]) -> Result<(Table, PathBuf)> {
    let (mut table, base_dir) = match config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| ConfigError::new("--config", format!("cannot read {}: {e}", path.display())))?;
            let mut own = parse_table(&text, &path.display().to_string())?;
            let extends = match own.remove("preset") {
                Some(Value::String(s)) => Some(s),
                Some(_) => return Err(ConfigError::new("preset", "expected a preset name")),
                None => preset.map(str::to_string),
            };
            let mut table = match extends {
                Some(name) => preset_table(&name, "preset")?,
                None => Table::new(),
            };
            // the sequence sources are alternatives, so a config's own
            // `[sequences]` replaces the preset's instead of merging with it
            if own.contains_key("sequences") {
                table.remove("sequences");
            }
            merge(&mut table, own);
            let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
            (table, dir)
        }
        None => match preset {
            Some(name) => (preset_table(name, "preset")?, PathBuf::from(".")),
            None => return Err(ConfigError::new("--config", "give a config file or a preset name")),
        },
    };
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    Ok((table, base_dir))
}

pub fn load(config: Option<&Path>, preset: Option<&str>, overrides: &[String]) -> Result<ExperimentConfig> {
    let (table, dir) = load_table(config, preset, overrides)?;
    parse(&table, &dir)
}

/// Typed view of one table that remembers its dotted path.
struct Section<'a> {
    path: String,
    table: &'a Table,
}

impl<'a> Section<'a> {
    fn new(path: impl Into<String>, table: &'a Table) -> Self {
        Section {
            path: path.into(),
            table,
        }
    }

    fn field(&self, key: &str) -> String {
        if self.path.is_empty() {
            key.to_string()
        } else {
            format!("{}.{key}", self.path)
        }
    }

    fn err(&self, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError::new(self.field(key), message)
    }

    fn allow(&self, keys: &[&str]) -> Result<()> {
        for k in self.table.keys() {
            if !keys.contains(&k.as_str()) {
                return Err(self.err(k, format!("unknown key (expected one of {})", keys.join(", "))));
            }
        }
        Ok(())
    }

    fn has(&self, key: &str) -> bool {
        self.table.contains_key(key)
    }

    fn sub(&self, key: &str) -> Result<Option<Section<'a>>> {
        match self.table.get(key) {
            None => Ok(None),
            Some(Value::Table(t)) => Ok(Some(Section::new(self.field(key), t))),
            Some(_) => Err(self.err(key, "expected a table")),
        }
    }

    fn str(&self, key: &str) -> Result<Option<&'a str>> {
        match self.table.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(_) => Err(self.err(key, "expected a string")),
        }
    }

    fn uint(&self, key: &str) -> Result<Option<u64>> {
        match self.table.get(key) {
            None => Ok(None),
            Some(Value::Integer(i)) if *i >= 0 => Ok(Some(*i as u64)),
            Some(_) => Err(self.err(key, "expected a non-negative integer")),
        }
    }

    fn required_uint(&self, key: &str) -> Result<u64> {
        self.uint(key)?.ok_or_else(|| self.err(key, "is required"))
    }

    fn positive_uint(&self, key: &str) -> Result<u64> {
        match self.required_uint(key)? {
            0 => Err(self.err(key, "must be at least 1")),
            v => Ok(v),
        }
    }

    fn number(&self, key: &str) -> Result<Option<f64>> {
        match self.table.get(key) {
            None => Ok(None),
            Some(Value::Float(f)) if f.is_finite() => Ok(Some(*f)),
            Some(Value::Integer(i)) => Ok(Some(*i as f64)),
            Some(_) => Err(self.err(key, "expected a number")),
        }
    }

    fn quantity(&self, key: &str, dim: Dimension, tau: Option<f64>) -> Result<Option<f64>> {
        match self.table.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => parse_quantity(s, dim, tau).map(Some).map_err(|m| self.err(key, m)),
            Some(_) => Err(self.err(
                key,
                format!("expected a quantity string with unit ({})", dim.expected()),
            )),
        }
    }

    fn required_quantity(&self, key: &str, dim: Dimension, tau: Option<f64>) -> Result<f64> {
        self.quantity(key, dim, tau)?
            .ok_or_else(|| self.err(key, format!("is required (unit: {})", dim.expected())))
    }

    fn tables(&self, key: &str) -> Result<Vec<Section<'a>>> {
        match self.table.get(key) {
            None => Err(self.err(key, "is required")),
            Some(Value::Array(items)) => items
                .iter()
                .enumerate()
                .map(|(i, v)| match v {
                    Value::Table(t) => Ok(Section::new(format!("{}.{i}", self.field(key)), t)),
                    _ => Err(ConfigError::new(format!("{}.{i}", self.field(key)), "expected a table")),
                })
                .collect(),
            Some(_) => Err(self.err(key, "expected an array of tables")),
        }
    }
}

pub fn parse(table: &Table, base_dir: &Path) -> Result<ExperimentConfig> {
    let root = Section::new("", table);
    root.allow(&[
        "name",
        "seed",
        "timing",
        "noise",
        "sequences",
        "reconstruction",
        "simulation",
        "prediction",
    ])?;
    let name = root.str("name")?.unwrap_or("experiment").to_string();
    let seed = root.uint("seed")?.unwrap_or(1);

    let timing_sec = root
        .sub("timing")?
        .ok_or_else(|| ConfigError::new("timing", "section is required"))?;
    let timing = parse_timing(&timing_sec)?;
    let noise = root.sub("noise")?.map(|s| parse_noise(&s, timing.tau)).transpose()?;
    let sequences = root
        .sub("sequences")?
        .map(|s| parse_sequences(&s, &timing, base_dir))
        .transpose()?;
    let reconstruction = root
        .sub("reconstruction")?
        .map(|s| parse_reconstruction(&s))
        .transpose()?;
    let simulation = match root.sub("simulation")? {
        Some(s) => parse_simulation(&s)?,
        None => Simulation {
            method: SimulationMethod::Quadrature,
            trajectories: 0,
        },
    };
    let prediction = root.sub("prediction")?.map(|s| parse_prediction(&s)).transpose()?;
    Ok(ExperimentConfig {
        name,
        seed,
        timing,
        noise,
        sequences,
        reconstruction,
        simulation,
        prediction,
    })
}

fn parse_timing(s: &Section) -> Result<Timing> {
    s.allow(&["delta", "tau", "q", "repetitions"])?;
    let tau = s.required_quantity("tau", Dimension::Time, None)?;
    if tau <= 0.0 {
        return Err(s.err("tau", "must be positive"));
    }
    let delta = s.quantity("delta", Dimension::Time, None)?;
    if delta.is_some_and(|d| d <= 0.0 || d > tau) {
        return Err(s.err("delta", "must lie in (0, tau]"));
    }
    let q = s.uint("q")?;
    if q == Some(0) {
        return Err(s.err("q", "must be at least 1"));
    }
    let repetitions = u32::try_from(s.positive_uint("repetitions")?).map_err(|_| s.err("repetitions", "too large"))?;
    Ok(Timing {
        delta,
        tau,
        q,
        repetitions,
    })
}

fn parse_noise(s: &Section, tau: f64) -> Result<Noise> {
    match s.str("model")? {
        Some("classical") => {
            s.allow(&["model", "mixing", "terms"])?;
            let mixing = s.number("mixing")?.unwrap_or(0.0);
            let mut terms = Vec::new();
            for t in s.tables("terms")? {
                t.allow(&["weight", "center", "width"])?;
                terms.push(LorentzianTerm {
                    weight: t.required_quantity("weight", Dimension::Spectrum, Some(tau))?,
                    center: t.required_quantity("center", Dimension::Frequency, Some(tau))?,
                    width: t.required_quantity("width", Dimension::Frequency, Some(tau))?,
                });
            }
            let psd = LorentzianSumPSD::new(terms).map_err(|e| s.err("terms", e.to_string()))?;
            let model = SquareNoiseModel::new(psd, mixing).map_err(|e| s.err("mixing", e.to_string()))?;
            Ok(Noise::Classical(model))
        }
        Some("spin-boson") => {
            s.allow(&["model", "coupling", "cutoff", "branch", "components"])?;
            let coupling = s.number("coupling")?.ok_or_else(|| s.err("coupling", "is required"))?;
            let cutoff = s.required_quantity("cutoff", Dimension::Frequency, Some(tau))?;
            let density = SpectralDensity::new(coupling, cutoff).map_err(|e| s.err("coupling", e.to_string()))?;
            let separable = match s.str("branch")?.unwrap_or("entangled") {
                "entangled" => false,
                "separable" => true,
                other => {
                    return Err(s.err(
                        "branch",
                        format!("unknown branch `{other}` (expected entangled or separable)"),
                    ))
                }
            };
            let mut components = Vec::new();
            for c in s.tables("components")? {
                c.allow(&["weight", "temperature"])?;
                components.push(ThermalComponent {
                    weight: c.number("weight")?.ok_or_else(|| c.err("weight", "is required"))?,
                    temperature: c.required_quantity("temperature", Dimension::Temperature, None)?,
                });
            }
            let state = BathStateModel::new(components, separable).map_err(|e| s.err("components", e.to_string()))?;
            Ok(Noise::SpinBoson(SpinBosonModel::new(density, state)))
        }
        Some(other) => Err(s.err(
            "model",
            format!("unknown model `{other}` (expected classical or spin-boson)"),
        )),
        None => Err(s.err("model", "is required (classical or spin-boson)")),
    }
}

fn parse_sequences(s: &Section, timing: &Timing, base_dir: &Path) -> Result<SequenceSource> {
    s.allow(&["list", "file", "search", "cpmg_cycles"])?;
    let given: Vec<&str> = ["list", "file", "search", "cpmg_cycles"]
        .into_iter()
        .filter(|k| s.has(k))
        .collect();
    if given.len() != 1 {
        return Err(ConfigError::new(
            s.path.clone(),
            "give exactly one of list, file, search or cpmg_cycles",
        ));
    }
    let need_delta = |key: &str| -> Result<()> {
        if timing.delta.is_none() {
            return Err(ConfigError::new(
                "timing.delta",
                format!("is required by sequences.{key}"),
            ));
        }
        Ok(())
    };
    match given[0] {
        "list" | "file" => {
            need_delta(given[0])?;
            let lines: Vec<(String, String)> = if given[0] == "list" {
                let Some(Value::Array(items)) = s.table.get("list") else {
                    return Err(s.err("list", "expected an array of strings"));
                };
                items
                    .iter()
                    .enumerate()
                    .map(|(i, v)| match v {
                        Value::String(line) => Ok((format!("{}.{i}", s.field("list")), line.clone())),
                        _ => Err(ConfigError::new(
                            format!("{}.{i}", s.field("list")),
                            "expected a string",
                        )),
                    })
                    .collect::<Result<_>>()?
            } else {
                let rel = s.str("file")?.unwrap_or_default();
                let path = base_dir.join(rel);
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| s.err("file", format!("cannot read {}: {e}", path.display())))?;
                text.lines()
                    .enumerate()
                    .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
                    .map(|(i, l)| (format!("{} line {}", s.field("file"), i + 1), l.to_string()))
                    .collect()
            };
            let mut out = Vec::new();
            for (path, line) in lines {
                let d = SequenceDescription::parse(&line).map_err(|e| ConfigError::new(path.clone(), e.to_string()))?;
                if timing.q.is_some_and(|q| q != d.q) {
                    return Err(ConfigError::new(path, format!("q = {} differs from timing.q", d.q)));
                }
                out.push(d);
            }
            Ok(SequenceSource::List(out))
        }
        "search" => {
            need_delta("search")?;
            if timing.q.is_none() {
                return Err(ConfigError::new("timing.q", "is required by sequences.search"));
            }
            let t = s.sub("search")?.ok_or_else(|| s.err("search", "expected a table"))?;
            t.allow(&["count", "iterations", "max_parts", "granularity", "max_order"])?;
            Ok(SequenceSource::Search(Search {
                count: t.positive_uint("count")? as usize,
                iterations: t.positive_uint("iterations")? as usize,
                max_parts: t.positive_uint("max_parts")? as usize,
                granularity: t.positive_uint("granularity")?,
                max_order: t.required_uint("max_order")? as u32,
            }))
        }
        _ => Ok(SequenceSource::CpmgFamily(s.positive_uint("cpmg_cycles")?)),
    }
}

fn parse_reconstruction(s: &Section) -> Result<Reconstruction> {
    s.allow(&[
        "radius",
        "bispectrum_radius",
        "bispectrum_shape",
        "trispectrum_radius",
        "data",
        "grid_nodes",
        "cutoff",
    ])?;
    let data = match s.str("data")? {
        None => DataMode::Differential,
        Some(m) => DataMode::parse(m).map_err(|e| s.err("data", e.to_string()))?,
    };
    let bispectrum_shape = match s.str("bispectrum_shape")?.unwrap_or("hexagonal") {
        "hexagonal" => Truncation::Hexagonal,
        "box" => Truncation::Box,
        other => {
            return Err(s.err(
                "bispectrum_shape",
                format!("unknown shape `{other}` (expected hexagonal or box)"),
            ))
        }
    };
    let cutoff = s.number("cutoff")?;
    if cutoff.is_some_and(|c| !(c > 0.0 && c < 1.0)) {
        return Err(s.err("cutoff", "must lie in (0, 1)"));
    }
    Ok(Reconstruction {
        radius: s.required_uint("radius")? as i64,
        bispectrum_radius: s.uint("bispectrum_radius")?.map(|r| r as i64),
        bispectrum_shape,
        trispectrum_radius: s.uint("trispectrum_radius")?.unwrap_or(0) as i64,
        data,
        grid_nodes: s.uint("grid_nodes")?.unwrap_or(24) as usize,
        cutoff,
    })
}

fn parse_simulation(s: &Section) -> Result<Simulation> {
    s.allow(&["method", "trajectories"])?;
    let method = match s.str("method")?.unwrap_or("quadrature") {
        "quadrature" => SimulationMethod::Quadrature,
        "monte-carlo" => SimulationMethod::MonteCarlo,
        other => {
            return Err(s.err(
                "method",
                format!("unknown method `{other}` (expected quadrature or monte-carlo)"),
            ))
        }
    };
    let trajectories = s.uint("trajectories")?.unwrap_or(0) as usize;
    if method == SimulationMethod::MonteCarlo && trajectories < 2 {
        return Err(s.err("trajectories", "Monte Carlo needs at least 2 trajectories"));
    }
    Ok(Simulation { method, trajectories })
}

fn parse_prediction(s: &Section) -> Result<Prediction> {
    s.allow(&["step", "count", "trajectories"])?;
    let step = s.required_quantity("step", Dimension::Time, None)?;
    if step <= 0.0 {
        return Err(s.err("step", "must be positive"));
    }
    Ok(Prediction {
        step,
        count: s.positive_uint("count")? as usize,
        trajectories: s.uint("trajectories")?.unwrap_or(0) as usize,
    })
}
