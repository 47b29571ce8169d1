//! Experiment configuration: a TOML file with the sections `[domain]`,
//! `[flux]`, `[model]`, `[time]` and `[output]`.
//!
//! Validation reports every problem it finds rather than stopping at the first.

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::fem::{MassKind, TimeGrid};
use crate::geometry::Point2;
use crate::mesh::DomainSpec;
use crate::metrics::FluxRecovery;
use crate::source::FluxSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Approach {
    SingleDirac,
    MultiDirac,
}

impl Approach {
    pub fn slug(self) -> &'static str {
        match self {
            Approach::SingleDirac => "single_dirac",
            Approach::MultiDirac => "multi_dirac",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub half_width: f64,
    pub cell_center: [f64; 2],
    pub cell_radius: f64,
    pub h: f64,
    #[serde(default)]
    pub graded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluxConfig {
    pub phi0: f64,
    pub rho: f64,
    pub n: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub diffusivity: f64,
    pub approaches: Vec<Approach>,
    pub r_values: Vec<f64>,
    pub epsilon: f64,
    pub circle_samples: usize,
    #[serde(default)]
    pub flux_recovery: FluxRecovery,
    #[serde(default)]
    pub mass: MassKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub dt: f64,
    pub t_end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub seed: u64,
    /// Warn when `steps × vertices` of a run exceeds this.
    pub budget: f64,
    /// Write nodal snapshots at the final time.
    #[serde(default)]
    pub snapshots: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub domain: DomainConfig,
    pub flux: FluxConfig,
    pub model: ModelConfig,
    pub time: TimeConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Preset {
    /// h = 0.0875, dt = 0.04, T = 40
    Paper,
    /// h = 0.35, dt = 0.16, T = 10.08 (63 steps; 10 is not a multiple of 0.16)
    Ci,
}

/// All problems found in a configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigErrors(pub Vec<String>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} configuration error(s):", self.0.len())?;
        for e in &self.0 {
            writeln!(f, "  - {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

#[derive(Clone, Copy)]
enum Kind {
    Float,
    Int,
    Bool,
    Str,
    FloatList,
    StrList,
}

impl Kind {
    fn accepts(self, v: &toml::Value) -> bool {
        use toml::Value as V;
        let number = |v: &V| matches!(v, V::Float(_) | V::Integer(_));
        match self {
            Kind::Float => number(v),
            Kind::Int => matches!(v, V::Integer(i) if *i >= 0),
            Kind::Bool => matches!(v, V::Boolean(_)),
            Kind::Str => matches!(v, V::String(_)),
            Kind::FloatList => matches!(v, V::Array(a) if a.iter().all(number)),
            Kind::StrList => matches!(v, V::Array(a) if a.iter().all(|x| matches!(x, V::String(_)))),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Kind::Float => "a number",
            Kind::Int => "a non-negative integer",
            Kind::Bool => "a boolean",
            Kind::Str => "a string",
            Kind::FloatList => "a list of numbers",
            Kind::StrList => "a list of strings",
        }
    }
}

// (section, key, kind, required)
const SCHEMA: &[(&str, &str, Kind, bool)] = &[
    ("domain", "half_width", Kind::Float, true),
    ("domain", "cell_center", Kind::FloatList, true),
    ("domain", "cell_radius", Kind::Float, true),
    ("domain", "h", Kind::Float, true),
    ("domain", "graded", Kind::Bool, false),
    ("flux", "phi0", Kind::Float, true),
    ("flux", "rho", Kind::Float, true),
    ("flux", "n", Kind::Int, true),
    ("model", "diffusivity", Kind::Float, true),
    ("model", "approaches", Kind::StrList, true),
    ("model", "r_values", Kind::FloatList, true),
    ("model", "epsilon", Kind::Float, true),
    ("model", "circle_samples", Kind::Int, true),
    ("model", "flux_recovery", Kind::Str, false),
    ("model", "mass", Kind::Str, false),
    ("time", "dt", Kind::Float, true),
    ("time", "t_end", Kind::Float, true),
    ("output", "dir", Kind::Str, true),
    ("output", "seed", Kind::Int, true),
    ("output", "budget", Kind::Float, true),
    ("output", "snapshots", Kind::Bool, false),
];

const SECTIONS: [&str; 5] = ["domain", "flux", "model", "time", "output"];

fn structural_errors(table: &toml::Table) -> Vec<String> {
    let mut errors = Vec::new();
    for (section, value) in table {
        if !SECTIONS.contains(&section.as_str()) {
            errors.push(format!("unknown section [{section}]"));
            continue;
        }
        let Some(body) = value.as_table() else {
            errors.push(format!("[{section}] must be a section"));
            continue;
        };
        for key in body.keys() {
            if !SCHEMA.iter().any(|(s, k, ..)| s == section && k == key) {
                errors.push(format!("unknown key {section}.{key}"));
            }
        }
    }
    for &(section, key, kind, required) in SCHEMA {
        match table.get(section).and_then(|s| s.as_table()).and_then(|s| s.get(key)) {
            None if required => errors.push(format!("missing key {section}.{key}")),
            None => {}
            Some(v) if !kind.accepts(v) => errors.push(format!("{section}.{key} must be {}", kind.name())),
            Some(_) => {}
        }
    }
    let str_value = |section: &str, key: &str| {
        table.get(section).and_then(|s| s.get(key)).and_then(|v| v.as_str()).map(str::to_owned)
    };
    if let Some(v) = str_value("model", "flux_recovery") {
        if !["direct", "patch"].contains(&v.as_str()) {
            errors.push(format!("model.flux_recovery must be \"direct\" or \"patch\", got {v:?}"));
        }
    }
    if let Some(v) = str_value("model", "mass") {
        if !["Consistent", "Lumped"].contains(&v.as_str()) {
            errors.push(format!("model.mass must be \"Consistent\" or \"Lumped\", got {v:?}"));
        }
    }
    if let Some(list) = table.get("model").and_then(|s| s.get("approaches")).and_then(|v| v.as_array()) {
        for a in list.iter().filter_map(|v| v.as_str()) {
            if !["SingleDirac", "MultiDirac"].contains(&a) {
                errors.push(format!("unknown approach {a:?} (expected \"SingleDirac\" or \"MultiDirac\")"));
            }
        }
    }
    if let Some(c) = table.get("domain").and_then(|s| s.get("cell_center")).and_then(|v| v.as_array()) {
        if c.len() != 2 {
            errors.push(format!("domain.cell_center must have two coordinates, got {}", c.len()));
        }
    }
    errors
}

/// Parses and validates configuration text.
pub fn validate_config(text: &str) -> Result<ExperimentConfig, ConfigErrors> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigErrors(vec![e.to_string()]))?;
    let errors = structural_errors(&table);
    if !errors.is_empty() {
        return Err(ConfigErrors(errors));
    }
    let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| ConfigErrors(vec![e.to_string()]))?;
    cfg.check()?;
    Ok(cfg)
}

impl ExperimentConfig {
    pub fn preset(preset: Preset) -> Self {
        let mut cfg = Self {
            domain: DomainConfig { half_width: 10.0, cell_center: [0.0, 0.0], cell_radius: 1.0, h: 0.0875, graded: false },
            flux: FluxConfig { phi0: 1.0, rho: 1.0, n: 1 },
            model: ModelConfig {
                diffusivity: 5.0,
                approaches: vec![Approach::SingleDirac, Approach::MultiDirac],
                r_values: vec![0.25, 0.1, 0.01],
                epsilon: 0.01,
                circle_samples: 360,
                flux_recovery: FluxRecovery::Direct,
                mass: MassKind::Consistent,
            },
            time: TimeConfig { dt: 0.04, t_end: 40.0 },
            output: OutputConfig { dir: PathBuf::from("out"), seed: 20_240_501, budget: 1e8, snapshots: false },
        };
        cfg.apply_preset(preset);
        cfg
    }

    /// Overrides the resolution parameters with those of `preset`.
    pub fn apply_preset(&mut self, preset: Preset) {
        let (h, dt, t_end) = match preset {
            Preset::Paper => (0.0875, 0.04, 40.0),
            Preset::Ci => (0.35, 0.16, 10.08),
        };
        self.domain.h = h;
        self.time.dt = dt;
        self.time.t_end = t_end;
    }

    /// Invariant checks; collects every violation.
    pub fn check(&self) -> Result<(), ConfigErrors> {
        let mut e = Vec::new();
        let d = &self.domain;
        if let Err(err) = self.domain_spec(true).validate() {
            e.push(err.to_string());
        }
        if let Err(err) = FluxSpec::new(self.flux.phi0, self.flux.rho, self.flux.n, Point2::new(d.cell_center[0], d.cell_center[1]), d.cell_radius) {
            e.push(err.to_string());
        }
        let m = &self.model;
        if !(m.diffusivity.is_finite() && m.diffusivity > 0.0) {
            e.push(format!("model.diffusivity must be positive, got {}", m.diffusivity));
        }
        if m.approaches.is_empty() {
            e.push("model.approaches must not be empty".into());
        }
        if m.approaches.contains(&Approach::MultiDirac) && m.r_values.is_empty() {
            e.push("model.r_values must not be empty when MultiDirac is requested".into());
        }
        for &r in &m.r_values {
            if !(r > 0.0 && r < d.cell_radius) {
                e.push(format!("model.r_values: r must lie in (0,R); got r = {r}, R = {}", d.cell_radius));
            }
        }
        if !(m.epsilon.is_finite() && m.epsilon > 0.0) {
            e.push(format!("model.epsilon must be positive, got {}", m.epsilon));
        }
        if m.circle_samples < 64 {
            e.push(format!("model.circle_samples must be at least 64, got {}", m.circle_samples));
        }
        if let Err(err) = TimeGrid::new(self.time.dt, self.time.t_end) {
            e.push(err.to_string());
        }
        if !(self.output.budget > 0.0) {
            e.push(format!("output.budget must be positive, got {}", self.output.budget));
        }
        if self.output.dir.as_os_str().is_empty() {
            e.push("output.dir must not be empty".into());
        }
        if e.is_empty() {
            Ok(())
        } else {
            Err(ConfigErrors(e))
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is always representable")
    }

    pub fn cell_center(&self) -> Point2 {
        Point2::new(self.domain.cell_center[0], self.domain.cell_center[1])
    }

    pub fn domain_spec(&self, with_hole: bool) -> DomainSpec {
        DomainSpec {
            graded: self.domain.graded,
            ..DomainSpec::new(self.domain.half_width, self.cell_center(), self.domain.cell_radius, with_hole, self.domain.h)
        }
    }

    /// Flux of the configured mode.
    pub fn flux_spec(&self) -> FluxSpec {
        self.flux_spec_mode(self.flux.n)
    }

    pub fn flux_spec_mode(&self, n: u32) -> FluxSpec {
        FluxSpec::new(self.flux.phi0, self.flux.rho, n, self.cell_center(), self.domain.cell_radius)
            .expect("validated configuration")
    }

    pub fn time_grid(&self) -> TimeGrid {
        TimeGrid::new(self.time.dt, self.time.t_end).expect("validated configuration")
    }

    /// Rough vertex count of the full mesh from the lattice density.
    pub fn estimated_vertices(&self) -> f64 {
        let side = 2.0 * self.domain.half_width;
        side * side / (self.domain.h * self.domain.h * 3f64.sqrt() / 2.0)
    }

    /// `steps × vertices` per run.
    pub fn estimated_work(&self) -> f64 {
        (self.time.t_end / self.time.dt).round() * self.estimated_vertices()
    }

    pub fn over_budget(&self) -> bool {
        self.estimated_work() > self.output.budget
    }
}
