//! `key = value` run configuration.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::fvm::{Dissipation, Grid2D};
use crate::model::PrimitiveState;
use crate::riemann::Case1Formula;
use crate::scenarios::{build_scenario, ScenarioName, ScenarioSpec};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{}key '{key}': {message}", location(*line))]
pub struct ConfigError {
    /// 1-based line of the config text; 0 for command-line overrides and whole-config checks.
    pub line: usize,
    pub key: String,
    pub message: String,
}

fn location(line: usize) -> String {
    if line == 0 {
        String::new()
    } else {
        format!("line {line}: ")
    }
}

impl ConfigError {
    fn new(line: usize, key: &str, message: impl Into<String>) -> Self {
        ConfigError { line, key: key.to_string(), message: message.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Pgm,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioSource {
    Named(ScenarioName),
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: ScenarioSource,
    pub spec: ScenarioSpec,
    pub formats: Vec<Format>,
    pub reference: Option<PathBuf>,
    pub case1_formula: Case1Formula,
    pub fan_samples: usize,
    /// Left state for `riemann`, the state for `eigen`.
    pub wl: PrimitiveState,
    pub wr: PrimitiveState,
    pub xi: (f64, f64),
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scenario: ScenarioSource::Named(ScenarioName::MicroMacro),
            spec: build_scenario(ScenarioName::MicroMacro),
            formats: vec![Format::Csv],
            reference: None,
            case1_formula: Case1Formula::default(),
            fan_samples: 11,
            wl: PrimitiveState::new(0.5, 0.8, 0.0),
            wr: PrimitiveState::new(0.5, 0.8, 0.0),
            xi: (1.0, 0.0),
        }
    }
}

/// Grid extents are collected separately and the grid is rebuilt once all keys are read.
#[derive(Debug, Clone, Copy)]
struct GridDraft {
    nx: f64,
    ny: f64,
    ax: f64,
    bx: f64,
    ay: f64,
    by: f64,
}

impl From<Grid2D> for GridDraft {
    fn from(g: Grid2D) -> Self {
        GridDraft { nx: g.nx as f64, ny: g.ny as f64, ax: g.ax, bx: g.bx, ay: g.ay, by: g.by }
    }
}

struct Draft {
    config: RunConfig,
    grid: GridDraft,
}

type Getter = fn(&Draft) -> f64;
type Setter = fn(&mut Draft, f64);

macro_rules! numeric_keys {
    ($( $key:literal => |$d:ident| $place:expr ),* $(,)?) => {
        const NUMERIC: &[(&str, Getter, Setter)] = &[
            $( ($key, |$d: &Draft| $place, |$d: &mut Draft, v: f64| $place = v), )*
        ];
    };
}

numeric_keys! {
    "u_ref" => |d| d.config.spec.params.u_ref,
    "v_ref" => |d| d.config.spec.params.v_ref,
    "gamma1" => |d| d.config.spec.params.gamma1,
    "gamma2" => |d| d.config.spec.params.gamma2,
    "rho_floor" => |d| d.config.spec.params.rho_floor,
    "rho_max" => |d| d.config.spec.params.rho_max,
    "nx" => |d| d.grid.nx,
    "ny" => |d| d.grid.ny,
    "ax" => |d| d.grid.ax,
    "bx" => |d| d.grid.bx,
    "ay" => |d| d.grid.ay,
    "by" => |d| d.grid.by,
    "t_final" => |d| d.config.spec.t_final,
    "ne_rho" => |d| d.config.spec.quadrants.ne.rho,
    "ne_u" => |d| d.config.spec.quadrants.ne.u,
    "ne_v" => |d| d.config.spec.quadrants.ne.v,
    "nw_rho" => |d| d.config.spec.quadrants.nw.rho,
    "nw_u" => |d| d.config.spec.quadrants.nw.u,
    "nw_v" => |d| d.config.spec.quadrants.nw.v,
    "se_rho" => |d| d.config.spec.quadrants.se.rho,
    "se_u" => |d| d.config.spec.quadrants.se.u,
    "se_v" => |d| d.config.spec.quadrants.se.v,
    "sw_rho" => |d| d.config.spec.quadrants.sw.rho,
    "sw_u" => |d| d.config.spec.quadrants.sw.u,
    "sw_v" => |d| d.config.spec.quadrants.sw.v,
    "car_length" => |d| d.config.spec.car_length,
    "car_width" => |d| d.config.spec.car_width,
    "micro_dt" => |d| d.config.spec.micro_dt,
    "cfl" => |d| d.config.spec.scheme.cfl,
    "wl_rho" => |d| d.config.wl.rho,
    "wl_u" => |d| d.config.wl.u,
    "wl_v" => |d| d.config.wl.v,
    "wr_rho" => |d| d.config.wr.rho,
    "wr_u" => |d| d.config.wr.u,
    "wr_v" => |d| d.config.wr.v,
    "xi1" => |d| d.config.xi.0,
    "xi2" => |d| d.config.xi.1,
}

/// Keys taking a string or list value.
pub const STRING_KEYS: &[&str] =
    &["scenario", "formats", "reference", "dissipation", "snapshot_times", "case1_formula", "fan_samples"];

/// Every numeric override key.
pub fn numeric_keys() -> impl Iterator<Item = &'static str> {
    NUMERIC.iter().map(|(k, _, _)| *k)
}

/// One `key = value` assignment with its source line (0 for overrides).
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub line: usize,
    pub key: String,
    pub value: String,
}

/// Splits config text into assignments; blank lines and `#` comments are skipped.
pub fn tokenize(text: &str) -> Result<Vec<Assignment>, ConfigError> {
    let mut out = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        out.push(split_assignment(line, k + 1)?);
    }
    Ok(out)
}

/// Parses a single `key=value` pair such as a command-line override.
pub fn split_assignment(text: &str, line: usize) -> Result<Assignment, ConfigError> {
    let Some((key, value)) = text.split_once('=') else {
        return Err(ConfigError::new(line, text.trim(), "expected 'key = value'"));
    };
    let (key, value) = (key.trim(), value.trim());
    if key.is_empty() {
        return Err(ConfigError::new(line, key, "empty key"));
    }
    Ok(Assignment { line, key: key.to_string(), value: value.to_string() })
}

fn number(a: &Assignment) -> Result<f64, ConfigError> {
    let v: f64 = a.value.parse().map_err(|_| ConfigError::new(a.line, &a.key, format!("'{}' is not a number", a.value)))?;
    if !v.is_finite() {
        return Err(ConfigError::new(a.line, &a.key, "value must be finite"));
    }
    Ok(v)
}

/// Parses config text without any command-line overrides. Custom scenario
/// files are resolved relative to the working directory.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    build_config(tokenize(text)?, Path::new("."))
}

/// Builds a validated config from assignments applied in order. A `scenario`
/// key, wherever it appears, selects the base values before any other key is applied.
pub fn build_config(assignments: Vec<Assignment>, base_dir: &Path) -> Result<RunConfig, ConfigError> {
    let mut config = RunConfig::default();
    if let Some(a) = assignments.iter().rev().find(|a| a.key == "scenario") {
        match a.value.parse::<ScenarioName>() {
            Ok(ScenarioName::Custom) | Err(_) => {
                let path = base_dir.join(&a.value);
                if !path.is_file() {
                    return Err(ConfigError::new(a.line, &a.key, format!("unknown scenario or missing file '{}'", a.value)));
                }
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| ConfigError::new(a.line, &a.key, format!("reading {}: {e}", path.display())))?;
                let inner = tokenize(&text).map_err(|e| ConfigError { message: format!("in {}: {}", path.display(), e.message), ..e })?;
                if let Some(bad) = inner.iter().find(|x| x.key == "scenario") {
                    return Err(ConfigError::new(bad.line, &bad.key, "custom scenario files cannot name another scenario"));
                }
                let mut spec = build_config(inner, path.parent().unwrap_or(Path::new(".")))
                    .map_err(|e| ConfigError { message: format!("in {}: {}", path.display(), e.message), ..e })?
                    .spec;
                spec.name = ScenarioName::Custom;
                config.spec = spec;
                config.scenario = ScenarioSource::File(path);
            }
            Ok(name) => {
                config.spec = build_scenario(name);
                config.scenario = ScenarioSource::Named(name);
            }
        }
    }

    let mut draft = Draft { grid: config.spec.grid.into(), config };
    for a in &assignments {
        if let Some((_, _, set)) = NUMERIC.iter().find(|(k, _, _)| *k == a.key) {
            set(&mut draft, number(a)?);
            continue;
        }
        let c = &mut draft.config;
        match a.key.as_str() {
            "scenario" => {}
            "formats" => {
                let mut formats = Vec::new();
                for item in a.value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                    let f = match item {
                        "csv" => Format::Csv,
                        "pgm" => Format::Pgm,
                        other => return Err(ConfigError::new(a.line, &a.key, format!("unknown format '{other}'"))),
                    };
                    if !formats.contains(&f) {
                        formats.push(f);
                    }
                }
                c.formats = formats;
            }
            "reference" => c.reference = Some(base_dir.join(&a.value)),
            "dissipation" => {
                c.spec.scheme.dissipation = match a.value.as_str() {
                    "local" => Dissipation::Local,
                    "global" => Dissipation::Global,
                    other => return Err(ConfigError::new(a.line, &a.key, format!("expected local or global, got '{other}'"))),
                }
            }
            "case1_formula" => {
                c.case1_formula = match a.value.as_str() {
                    "invariant" => Case1Formula::InvariantConsistent,
                    "printed" => Case1Formula::Printed,
                    other => return Err(ConfigError::new(a.line, &a.key, format!("expected invariant or printed, got '{other}'"))),
                }
            }
            "fan_samples" => {
                c.fan_samples = a
                    .value
                    .parse()
                    .ok()
                    .filter(|&n: &usize| n >= 2)
                    .ok_or_else(|| ConfigError::new(a.line, &a.key, "expected an integer >= 2"))?;
            }
            "snapshot_times" => {
                let mut times = Vec::new();
                for item in a.value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                    times.push(number(&Assignment { value: item.to_string(), ..a.clone() })?);
                }
                c.spec.snapshot_times = times;
            }
            _ => return Err(ConfigError::new(a.line, &a.key, "unknown key")),
        }
    }
    finish(draft)
}

fn count(v: f64, key: &str) -> Result<usize, ConfigError> {
    if v >= 1.0 && v.fract() == 0.0 && v <= 1e7 {
        Ok(v as usize)
    } else {
        Err(ConfigError::new(0, key, format!("expected a positive integer, got {v}")))
    }
}

fn finish(draft: Draft) -> Result<RunConfig, ConfigError> {
    let Draft { mut config, grid } = draft;
    let cfl = config.spec.scheme.cfl;
    if !(cfl > 0.0 && cfl < 1.0) {
        return Err(ConfigError::new(0, "cfl", format!("cfl out of (0,1): {cfl}")));
    }
    config.spec.grid = Grid2D::new(count(grid.nx, "nx")?, count(grid.ny, "ny")?, grid.ax, grid.bx, grid.ay, grid.by)
        .map_err(|e| ConfigError::new(0, "grid", e.to_string()))?;
    config.spec.validate().map_err(|e| ConfigError::new(0, "scenario", e.to_string()))?;
    if config.spec.snapshot_times.iter().any(|&t| t < 0.0) {
        return Err(ConfigError::new(0, "snapshot_times", "times must be non-negative"));
    }
    for (key, w) in [("wl", config.wl), ("wr", config.wr)] {
        w.validate().map_err(|e| ConfigError::new(0, key, e.to_string()))?;
    }
    Ok(config)
}

/// Current value of a numeric key.
pub fn numeric_value(config: &RunConfig, key: &str) -> Option<f64> {
    let draft = Draft { grid: config.spec.grid.into(), config: config.clone() };
    NUMERIC.iter().find(|(k, _, _)| *k == key).map(|(_, get, _)| get(&draft))
}
