use std::fmt;
use std::path::PathBuf;

use serde::de::{self, Deserializer, Visitor};
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::eigenmodes::{KernelMode, DEFAULT_ENTRY_BUDGET};
use crate::geometry::{LinkGeometry, Medium, NearFieldGuard};
use crate::quadrature::QuadratureSpec;

/// Configuration problem, with the line it came from when known.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    fn new(line: Option<usize>, message: impl Into<String>) -> Self {
        Self {
            line,
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "config line {l}: {}", self.message),
            None => write!(f, "config: {}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// A length in meters. Accepts a bare number (meters) or a string with a
/// unit: `"5 cm"`, `"12mm"`, `"0.3 m"`, `"200 um"`, `"1 km"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Length(pub f64);

pub fn parse_length(text: &str) -> Result<f64, String> {
    let t = text.trim();
    let unit_len: usize = t
        .chars()
        .rev()
        .take_while(|c| c.is_alphabetic() || *c == 'µ')
        .map(char::len_utf8)
        .sum();
    let (num, unit) = t.split_at(t.len() - unit_len);
    let value: f64 = num
        .trim()
        .parse()
        .map_err(|_| format!("invalid length `{text}`"))?;
    let scale = match unit.trim() {
        "" | "m" => 1.0,
        "km" => 1e3,
        "cm" => 1e-2,
        "mm" => 1e-3,
        "um" | "µm" => 1e-6,
        other => return Err(format!("unknown length unit `{other}` in `{text}`")),
    };
    Ok(value * scale)
}

impl<'de> Deserialize<'de> for Length {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct LengthVisitor;

        impl Visitor<'_> for LengthVisitor {
            type Value = Length;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a length in meters or a string such as \"5 cm\"")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Length, E> {
                Ok(Length(v))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Length, E> {
                Ok(Length(v as f64))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Length, E> {
                Ok(Length(v as f64))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Length, E> {
                parse_length(v).map(Length).map_err(E::custom)
            }
        }

        deserializer.deserialize_any(LengthVisitor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Gain,
    Dof,
    Modes,
    Sweep,
    Validate,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Gain => "gain",
            Task::Dof => "dof",
            Task::Modes => "modes",
            Task::Sweep => "sweep",
            Task::Validate => "validate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Parallel,
    Perpendicular,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub kind: Orientation,
    pub wavelength: Option<Length>,
    pub frequency_hz: Option<f64>,
    pub distance: Length,
    pub tx_size: [Length; 2],
    pub rx_size: [Length; 2],
    #[serde(default = "zero_offset")]
    pub tx_offset: [Length; 2],
    #[serde(default = "one")]
    pub min_distance_wavelengths: f64,
}

fn zero_offset() -> [Length; 2] {
    [Length(0.0), Length(0.0)]
}

fn one() -> f64 {
    1.0
}

/// Sweep over `F = d²/A_R` in dB at fixed `d`; the receive sides follow
/// from `A_R` and each aspect ratio `S_x:S_y`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub start_db: f64,
    pub stop_db: f64,
    pub points: usize,
    #[serde(default = "square_only")]
    pub aspect_ratios: Vec<f64>,
}

fn square_only() -> Vec<f64> {
    vec![1.0]
}

impl SweepConfig {
    pub fn grid(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.start_db];
        }
        let step = (self.stop_db - self.start_db) / (self.points - 1) as f64;
        (0..self.points).map(|i| self.start_db + step * i as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NumericConfig {
    pub nodes: usize,
    pub rel_tol: f64,
    pub max_subdivisions: u32,
    pub max_panels: usize,
    /// Evaluate the quadrature gain and DoF alongside the closed forms.
    pub numeric: bool,
}

impl Default for NumericConfig {
    fn default() -> Self {
        let q = QuadratureSpec::default();
        Self {
            nodes: q.nodes,
            rel_tol: q.rel_tol,
            max_subdivisions: q.max_subdivisions,
            max_panels: q.max_panels,
            numeric: true,
        }
    }
}

impl NumericConfig {
    pub fn quadrature(&self) -> QuadratureSpec {
        QuadratureSpec {
            nodes: self.nodes,
            rel_tol: self.rel_tol,
            max_subdivisions: self.max_subdivisions,
            max_panels: self.max_panels,
            ..QuadratureSpec::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModesConfig {
    /// Patch side; defaults to λ/8.
    pub patch: Option<Length>,
    pub kernel: String,
    pub threshold_db: f64,
    /// 1-based mode indices to export as field maps.
    pub export: Vec<usize>,
    pub budget: usize,
    pub sum_rule: bool,
}

impl Default for ModesConfig {
    fn default() -> Self {
        Self {
            patch: None,
            kernel: KernelMode::XToVector.name().to_string(),
            threshold_db: 3.0,
            export: Vec::new(),
            budget: DEFAULT_ENTRY_BUDGET,
            sum_rule: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub formats: Vec<String>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("out"),
            formats: vec!["csv".to_string()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub gain_closed_vs_numeric: f64,
    pub dof_closed_vs_numeric: f64,
    pub gain_limits: f64,
    pub dof_asymptote: f64,
    pub scaling: f64,
    pub sum_rule: f64,
    pub orthonormality: f64,
    pub reciprocity: f64,
    pub mode_count: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            gain_closed_vs_numeric: 5e-3,
            dof_closed_vs_numeric: 0.05,
            gain_limits: 1e-2,
            dof_asymptote: 1e-3,
            scaling: 1e-9,
            sum_rule: 0.02,
            orthonormality: 1e-8,
            reciprocity: 1e-8,
            mode_count: 2.0,
        }
    }
}

/// Eigen-solver checks run on a separate small link, sizes in wavelengths.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidateConfig {
    pub tolerances: Tolerances,
    pub modes_tx: f64,
    pub modes_rx: f64,
    pub modes_distance: f64,
    pub modes_patch: f64,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        Self {
            tolerances: Tolerances::default(),
            modes_tx: 2.0,
            modes_rx: 8.0,
            modes_distance: 2.0,
            modes_patch: 0.125,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub task: Task,
    pub geometry: GeometryConfig,
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub numeric: NumericConfig,
    #[serde(default)]
    pub modes: ModesConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub validate: ValidateConfig,
}

/// Parsed configuration plus what is needed for output headers.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub sha256: String,
}

/// Parses `source`, applies `key=value` overrides (dotted keys, values in
/// TOML syntax with bare strings accepted) and validates the result.
pub fn load_config(source: &str, overrides: &[String]) -> Result<LoadedConfig, ConfigError> {
    let mut table: toml::Table = toml::from_str(source).map_err(|e| toml_error(source, &e))?;
    for item in overrides {
        apply_override(&mut table, item)?;
    }
    let config: RunConfig = match RunConfig::deserialize(toml::Value::Table(table.clone())) {
        Ok(c) => c,
        // Prefer the file's own error, which carries a line number.
        Err(e) => {
            toml::from_str::<RunConfig>(source).map_err(|e| toml_error(source, &e))?;
            return Err(ConfigError::new(None, format!("after overrides: {}", e.message())));
        }
    };
    // Canonical form: sorted keys, so formatting and comments do not change
    // the hash. The output directory does not affect results.
    if let Some(toml::Value::Table(out)) = table.get_mut("output") {
        out.remove("directory");
    }
    let canonical = toml::to_string(&table).map_err(|e| ConfigError::new(None, e.to_string()))?;
    let sha256 = Sha256::digest(canonical.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect();
    let loaded = LoadedConfig { config, sha256 };
    validate(&loaded.config, source)?;
    Ok(loaded)
}

fn toml_error(source: &str, e: &toml::de::Error) -> ConfigError {
    let line = e
        .span()
        .map(|s| source[..s.start.min(source.len())].matches('\n').count() + 1);
    ConfigError::new(line, e.message().to_string())
}

fn apply_override(table: &mut toml::Table, item: &str) -> Result<(), ConfigError> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| ConfigError::new(None, format!("override `{item}` is not key=value")))?;
    let value = parse_value(raw.trim());
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, path) = parts.split_last().expect("split yields one part");
    let mut cur = table;
    for p in path {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| ConfigError::new(None, format!("override `{key}`: `{p}` is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&doc) {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Line of `key` inside `[section]` (or at top level when `section` is
/// empty), by a plain scan of the source.
pub fn locate(source: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, line) in source.lines().enumerate() {
        let t = line.trim();
        if let Some(name) = t.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            current = name.trim().to_string();
            continue;
        }
        if current == section {
            if let Some((k, _)) = t.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

fn validate(c: &RunConfig, source: &str) -> Result<(), ConfigError> {
    let at = |section: &str, key: &str, msg: String| ConfigError::new(locate(source, section, key), msg);
    let g = &c.geometry;
    match (g.wavelength, g.frequency_hz) {
        (Some(_), Some(_)) => {
            return Err(at("geometry", "frequency_hz", "give either wavelength or frequency_hz, not both".into()))
        }
        (None, None) => return Err(at("geometry", "kind", "geometry needs wavelength or frequency_hz".into())),
        _ => {}
    }
    if let Some(w) = g.wavelength {
        positive(w.0, "geometry.wavelength").map_err(|m| at("geometry", "wavelength", m))?;
    }
    if let Some(f) = g.frequency_hz {
        positive(f, "geometry.frequency_hz").map_err(|m| at("geometry", "frequency_hz", m))?;
    }
    positive(g.distance.0, "geometry.distance").map_err(|m| at("geometry", "distance", m))?;
    for (key, pair) in [("tx_size", g.tx_size), ("rx_size", g.rx_size)] {
        for l in pair {
            positive(l.0, &format!("geometry.{key}")).map_err(|m| at("geometry", key, m))?;
        }
    }
    if !g.tx_offset.iter().all(|l| l.0.is_finite()) {
        return Err(at("geometry", "tx_offset", "geometry.tx_offset must be finite".into()));
    }
    if !(g.min_distance_wavelengths >= 0.0) {
        return Err(at(
            "geometry",
            "min_distance_wavelengths",
            "geometry.min_distance_wavelengths must be >= 0".into(),
        ));
    }
    if let Some(s) = &c.sweep {
        if s.points == 0 {
            return Err(at("sweep", "points", "sweep.points must be >= 1".into()));
        }
        if !(s.start_db.is_finite() && s.stop_db.is_finite()) {
            return Err(at("sweep", "start_db", "sweep bounds must be finite".into()));
        }
        if s.aspect_ratios.is_empty() || !s.aspect_ratios.iter().all(|a| *a > 0.0 && a.is_finite()) {
            return Err(at("sweep", "aspect_ratios", "sweep.aspect_ratios must be positive".into()));
        }
    } else if c.task == Task::Sweep {
        return Err(at("", "task", "task `sweep` needs a [sweep] section".into()));
    }
    c.numeric
        .quadrature()
        .validate()
        .map_err(|e| at("numeric", "rel_tol", e.to_string()))?;
    c.modes
        .kernel
        .parse::<KernelMode>()
        .map_err(|e| at("modes", "kernel", e))?;
    if let Some(p) = c.modes.patch {
        positive(p.0, "modes.patch").map_err(|m| at("modes", "patch", m))?;
    }
    if !(c.modes.threshold_db >= 0.0) {
        return Err(at("modes", "threshold_db", "modes.threshold_db must be >= 0".into()));
    }
    if c.modes.export.contains(&0) {
        return Err(at("modes", "export", "mode indices start at 1".into()));
    }
    for f in &c.output.formats {
        if f != "csv" {
            return Err(at("output", "formats", format!("unsupported output format `{f}`")));
        }
    }
    let v = &c.validate;
    for (key, value) in [
        ("modes_tx", v.modes_tx),
        ("modes_rx", v.modes_rx),
        ("modes_distance", v.modes_distance),
        ("modes_patch", v.modes_patch),
    ] {
        positive(value, &format!("validate.{key}")).map_err(|m| at("validate", key, m))?;
    }
    c.link().map_err(|e| at("geometry", "distance", e.to_string()))?;
    Ok(())
}

fn positive(v: f64, name: &str) -> Result<(), String> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(format!("{name} must be positive, got {v}"))
    }
}

impl RunConfig {
    pub fn medium(&self) -> Result<Medium, crate::geometry::GeometryError> {
        match (self.geometry.wavelength, self.geometry.frequency_hz) {
            (Some(w), _) => Medium::new(w.0),
            (None, Some(f)) => Medium::from_frequency(f),
            (None, None) => Medium::new(f64::NAN),
        }
    }

    pub fn guard(&self) -> NearFieldGuard {
        NearFieldGuard {
            min_distance_wavelengths: self.geometry.min_distance_wavelengths,
        }
    }

    /// Link with the receive sides given explicitly.
    pub fn link_with_rx(&self, rx: (f64, f64)) -> Result<LinkGeometry, crate::geometry::GeometryError> {
        let g = &self.geometry;
        let tx = (g.tx_size[0].0, g.tx_size[1].0);
        let off = (g.tx_offset[0].0, g.tx_offset[1].0);
        let medium = self.medium()?;
        match g.kind {
            Orientation::Parallel => LinkGeometry::parallel_with_guard(g.distance.0, tx, rx, off, medium, self.guard()),
            Orientation::Perpendicular => {
                LinkGeometry::perpendicular_with_guard(g.distance.0, tx, rx, off, medium, self.guard())
            }
        }
    }

    pub fn link(&self) -> Result<LinkGeometry, crate::geometry::GeometryError> {
        let g = &self.geometry;
        self.link_with_rx((g.rx_size[0].0, g.rx_size[1].0))
    }

    pub fn kernel_mode(&self) -> KernelMode {
        self.modes.kernel.parse().unwrap_or(KernelMode::XToVector)
    }
}
