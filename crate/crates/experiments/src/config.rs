//! Experiment configuration: the TOML schema, its validation and the
//! built-in presets.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use erglim_core::{MapId, ObservableKind, ObservableSpec, Start};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    /// TOML syntax or a missing/unknown key; the message carries the line.
    #[error("{0}")]
    Parse(String),
    #[error("field `{field}`: {msg}")]
    Field { field: &'static str, msg: String },
    #[error("unknown preset '{0}'")]
    UnknownPreset(String),
}

impl ConfigError {
    fn field(field: &'static str, msg: impl Into<String>) -> Self {
        ConfigError::Field { field, msg: msg.into() }
    }

    /// Name of the offending field, when the error is about one.
    pub fn field_name(&self) -> Option<&str> {
        match self {
            ConfigError::Field { field, .. } => Some(field),
            ConfigError::Parse(msg) => msg
                .split('`')
                .nth(1)
                .filter(|_| msg.contains("missing field") || msg.contains("unknown field")),
            ConfigError::UnknownPreset(_) => None,
        }
    }
}

/// Which statistic an experiment evaluates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StatVariant {
    Main1,
    Main2,
    HSlow,
    NoTrim,
    HFast,
    /// Trimming `⌊(log log N)^u⌋` terms.
    Intermediate { u: f64 },
    Dispersion,
    TailLaw,
    PhiLaw,
    BorelBernstein,
}

impl StatVariant {
    /// Variants that tally samples rather than follow long orbits.
    pub fn is_law(&self) -> bool {
        matches!(self, StatVariant::TailLaw | StatVariant::PhiLaw)
    }
}

impl fmt::Display for StatVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StatVariant::Main1 => f.write_str("main1"),
            StatVariant::Main2 => f.write_str("main2"),
            StatVariant::HSlow => f.write_str("h_slow"),
            StatVariant::NoTrim => f.write_str("no_trim"),
            StatVariant::HFast => f.write_str("h_fast"),
            StatVariant::Intermediate { u } => write!(f, "intermediate:{u}"),
            StatVariant::Dispersion => f.write_str("dispersion"),
            StatVariant::TailLaw => f.write_str("tail_law"),
            StatVariant::PhiLaw => f.write_str("phi_law"),
            StatVariant::BorelBernstein => f.write_str("bb"),
        }
    }
}

impl FromStr for StatVariant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "main1" => StatVariant::Main1,
            "main2" => StatVariant::Main2,
            "h_slow" => StatVariant::HSlow,
            "no_trim" => StatVariant::NoTrim,
            "h_fast" => StatVariant::HFast,
            "dispersion" => StatVariant::Dispersion,
            "tail_law" => StatVariant::TailLaw,
            "phi_law" => StatVariant::PhiLaw,
            "bb" | "borel_bernstein" => StatVariant::BorelBernstein,
            other => {
                let Some(u) = other.strip_prefix("intermediate:") else {
                    return Err(format!(
                        "unknown variant '{other}' (expected main1, main2, h_slow, no_trim, h_fast, \
                         intermediate:u, dispersion, tail_law, phi_law, bb)"
                    ));
                };
                let u: f64 = u.parse().map_err(|_| format!("bad u in '{other}'"))?;
                if !(u > 1.0) {
                    return Err(format!("intermediate trimming needs u > 1, got {u}"));
                }
                StatVariant::Intermediate { u }
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EngineKind {
    Exact,
    Float,
}

impl fmt::Display for EngineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EngineKind::Exact => "exact",
            EngineKind::Float => "float",
        })
    }
}

impl FromStr for EngineKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact" => Ok(EngineKind::Exact),
            "float" => Ok(EngineKind::Float),
            other => Err(format!("unknown engine '{other}', expected exact or float")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Jsonl,
}

impl FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Format::Csv),
            "jsonl" => Ok(Format::Jsonl),
            other => Err(format!("unknown format '{other}', expected csv or jsonl")),
        }
    }
}

/// Seeds either listed or as a contiguous range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeedSpec {
    List(Vec<u64>),
    Range { start: u64, count: u64 },
}

impl SeedSpec {
    pub fn expand(&self) -> Vec<u64> {
        match self {
            SeedSpec::List(v) => v.clone(),
            SeedSpec::Range { start, count } => (*start..start + count).collect(),
        }
    }
}

/// The file as written. Every field of the resolved config appears here as
/// plain text so errors can name it.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub name: Option<String>,
    pub map: String,
    pub observable: String,
    pub variant: String,
    pub n_grid: Vec<u64>,
    pub seeds: SeedSpec,
    pub engine: Option<String>,
    pub start: Option<String>,
    /// Borel–Bernstein thresholds `δ_n = n (log n)^p`.
    pub threshold_power: Option<f64>,
    pub bit_cap: Option<u64>,
    pub output: Option<RawOutput>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RawOutput {
    pub dir: Option<PathBuf>,
    pub format: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub obs: ObservableSpec,
    pub variant: StatVariant,
    pub n_grid: Vec<u64>,
    pub seeds: Vec<u64>,
    pub engine: EngineKind,
    pub start: Start,
    pub threshold_power: f64,
    pub bit_cap: u64,
    pub out_dir: Option<PathBuf>,
    pub format: Format,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        Self::from_raw(raw)
    }

    pub fn from_raw(raw: RawConfig) -> Result<Self, ConfigError> {
        let map: MapId = raw.map.parse().map_err(|e: String| ConfigError::field("map", e))?;
        let kind: ObservableKind = raw
            .observable
            .parse()
            .map_err(|e: String| ConfigError::field("observable", e))?;
        let obs = ObservableSpec::new(map, kind).map_err(|e| ConfigError::field("observable", e))?;
        let variant: StatVariant = raw
            .variant
            .parse()
            .map_err(|e: String| ConfigError::field("variant", e))?;
        let engine = match &raw.engine {
            Some(s) => s.parse().map_err(|e: String| ConfigError::field("engine", e))?,
            None => EngineKind::Exact,
        };
        let default_start = match variant {
            StatVariant::TailLaw => Start::Uniform01,
            _ => Start::UniformE,
        };
        let start = match &raw.start {
            Some(s) => s.parse().map_err(|e: String| ConfigError::field("start", e))?,
            None => default_start,
        };
        let format = match raw.output.as_ref().and_then(|o| o.format.as_ref()) {
            Some(s) => s.parse().map_err(|e: String| ConfigError::field("output.format", e))?,
            None => Format::Csv,
        };
        let cfg = ExperimentConfig {
            name: raw.name.unwrap_or_else(|| format!("{map}-{kind}-{variant}")),
            obs,
            variant,
            n_grid: raw.n_grid,
            seeds: raw.seeds.expand(),
            engine,
            start,
            threshold_power: raw.threshold_power.unwrap_or(2.0),
            bit_cap: raw.bit_cap.unwrap_or(erglim_core::cfmaps::DEFAULT_BIT_CAP),
            out_dir: raw.output.and_then(|o| o.dir),
            format,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_grid.is_empty() {
            return Err(ConfigError::field("n_grid", "must not be empty"));
        }
        if !self.n_grid.windows(2).all(|w| w[0] < w[1]) {
            return Err(ConfigError::field("n_grid", "must be strictly increasing"));
        }
        if self.seeds.is_empty() {
            return Err(ConfigError::field("seeds", "must not be empty"));
        }
        let mut s = self.seeds.clone();
        s.sort_unstable();
        if s.windows(2).any(|w| w[0] == w[1]) {
            return Err(ConfigError::field("seeds", "must not repeat a seed"));
        }
        let min_n = self.n_grid[0];
        match self.variant {
            StatVariant::Intermediate { .. } => {
                if !matches!(self.obs.kind, ObservableKind::Power { s } if s > 1.0) {
                    return Err(ConfigError::field(
                        "observable",
                        "intermediate trimming needs power:s with s > 1",
                    ));
                }
                if min_n < 16 {
                    return Err(ConfigError::field("n_grid", "intermediate trimming needs N >= 16"));
                }
            }
            StatVariant::HFast if min_n < 16 => {
                return Err(ConfigError::field("n_grid", "h_fast needs N >= 16"));
            }
            StatVariant::TailLaw | StatVariant::PhiLaw if !self.obs.is_integer_valued() => {
                return Err(ConfigError::field("observable", "law variants need digits or gtilde"));
            }
            StatVariant::PhiLaw if self.start != Start::UniformE => {
                return Err(ConfigError::field("start", "phi_law samples from uniform_E"));
            }
            StatVariant::BorelBernstein if !(self.threshold_power.is_finite()) => {
                return Err(ConfigError::field("threshold_power", "must be finite"));
            }
            _ => {}
        }
        if !self.variant.is_law() && self.start != Start::UniformE {
            return Err(ConfigError::field("start", "orbit statistics start in E (uniform_E)"));
        }
        if self.n_grid[0] == 0 && !self.variant.is_law() {
            return Err(ConfigError::field("n_grid", "N must be at least 1"));
        }
        Ok(())
    }

    /// The resolved config in the file's own schema.
    pub fn to_raw(&self) -> RawConfig {
        RawConfig {
            name: Some(self.name.clone()),
            map: self.obs.map.to_string(),
            observable: self.obs.kind.to_string(),
            variant: self.variant.to_string(),
            n_grid: self.n_grid.clone(),
            seeds: SeedSpec::List(self.seeds.clone()),
            engine: Some(self.engine.to_string()),
            start: Some(self.start.to_string()),
            threshold_power: Some(self.threshold_power),
            bit_cap: Some(self.bit_cap),
            output: Some(RawOutput {
                dir: self.out_dir.clone(),
                format: Some(
                    match self.format {
                        Format::Csv => "csv",
                        Format::Jsonl => "jsonl",
                    }
                    .to_string(),
                ),
            }),
        }
    }

    /// One-line summary for output headers. Seed lists are collapsed to
    /// a range when contiguous.
    pub fn summary_line(&self) -> String {
        let seeds = match (self.seeds.first(), self.seeds.last()) {
            (Some(&a), Some(&b)) if b >= a && (b - a + 1) as usize == self.seeds.len() && is_sorted(&self.seeds) => {
                format!("{a}..={b}")
            }
            _ => format!("{:?}", self.seeds),
        };
        format!(
            "name={} map={} observable={} variant={} n_grid={:?} seeds={} engine={} start={} threshold_power={} bit_cap={}",
            self.name,
            self.obs.map,
            self.obs.kind,
            self.variant,
            self.n_grid,
            seeds,
            self.engine,
            self.start,
            self.threshold_power,
            self.bit_cap
        )
    }
}

fn is_sorted(v: &[u64]) -> bool {
    v.windows(2).all(|w| w[0] < w[1])
}

pub const PRESETS: &[&str] = &[
    "bcf-corollary",
    "bcf-main1",
    "ecf-gtilde",
    "ecf-g",
    "bcf-dispersion",
    "bcf-h-slow",
    "bcf-no-trim",
    "bcf-h-fast",
    "bcf-intermediate",
    "bcf-tail-law",
    "ecf-tail-law",
    "bcf-phi-law",
    "ecf-phi-law",
    "bcf-bb",
];

pub fn preset(name: &str) -> Result<ExperimentConfig, ConfigError> {
    let text = match name {
        "bcf-corollary" => orbit_preset(name, "bcf", "digits", "main2", "[1000, 10000, 100000]", 100, "exact"),
        "bcf-main1" => orbit_preset(name, "bcf", "digits", "main1", "[1000, 10000, 100000]", 100, "exact"),
        "ecf-gtilde" => orbit_preset(name, "ecf", "gtilde", "main2", "[1000, 10000, 100000]", 100, "exact"),
        "ecf-g" => orbit_preset(name, "ecf", "digits", "main2", "[1000, 10000, 100000]", 100, "exact"),
        "bcf-dispersion" => orbit_preset(name, "bcf", "digits", "dispersion", "[1000, 10000, 100000]", 100, "exact"),
        "bcf-h-slow" => orbit_preset(name, "bcf", "power:0.5", "h_slow", "[10000, 100000, 1000000]", 100, "float"),
        "bcf-no-trim" => orbit_preset(name, "bcf", "power:0.5", "no_trim", "[10000, 100000, 1000000]", 100, "float"),
        "bcf-h-fast" => orbit_preset(name, "bcf", "tlogt", "h_fast", "[10000, 100000, 1000000]", 100, "float"),
        "bcf-intermediate" => {
            orbit_preset(name, "bcf", "power:2", "intermediate:1.5", "[10000, 100000, 1000000]", 50, "float")
        }
        "bcf-tail-law" => law_preset(name, "bcf", "tail_law", "[2, 5, 10, 50]"),
        "ecf-tail-law" => law_preset(name, "ecf", "tail_law", "[2, 5, 10, 50]"),
        "bcf-phi-law" => law_preset(name, "bcf", "phi_law", "[1, 5, 10, 50]"),
        "ecf-phi-law" => law_preset(name, "ecf", "phi_law", "[1, 5, 10, 50]"),
        "bcf-bb" => orbit_preset(name, "bcf", "digits", "bb", "[1000, 10000, 100000]", 100, "float"),
        other => return Err(ConfigError::UnknownPreset(other.to_string())),
    };
    ExperimentConfig::from_toml(&text)
}

fn orbit_preset(name: &str, map: &str, obs: &str, variant: &str, grid: &str, seeds: u64, engine: &str) -> String {
    format!(
        "name = \"{name}\"\nmap = \"{map}\"\nobservable = \"{obs}\"\nvariant = \"{variant}\"\n\
         n_grid = {grid}\nseeds = {{ start = 0, count = {seeds} }}\nengine = \"{engine}\"\n"
    )
}

fn law_preset(name: &str, map: &str, variant: &str, grid: &str) -> String {
    format!(
        "name = \"{name}\"\nmap = \"{map}\"\nobservable = \"digits\"\nvariant = \"{variant}\"\n\
         n_grid = {grid}\nseeds = {{ start = 0, count = 1000000 }}\nengine = \"exact\"\n"
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = r#"
map = "bcf"
observable = "digits"
variant = "main2"
n_grid = [10, 100]
seeds = [1, 2, 3]
"#;

    #[test]
    fn parses_and_defaults() {
        let c = ExperimentConfig::from_toml(BASIC).unwrap();
        assert_eq!(c.engine, EngineKind::Exact);
        assert_eq!(c.start, Start::UniformE);
        assert_eq!(c.seeds, vec![1, 2, 3]);
        assert_eq!(c.variant, StatVariant::Main2);
    }

    #[test]
    fn missing_grid_names_the_field() {
        let text = BASIC.replace("n_grid = [10, 100]\n", "");
        let e = ExperimentConfig::from_toml(&text).unwrap_err();
        assert_eq!(e.field_name(), Some("n_grid"), "{e}");
    }

    #[test]
    fn rejects_bad_grids_and_seeds() {
        let e = ExperimentConfig::from_toml(&BASIC.replace("[10, 100]", "[100, 10]")).unwrap_err();
        assert_eq!(e.field_name(), Some("n_grid"));
        let e = ExperimentConfig::from_toml(&BASIC.replace("[1, 2, 3]", "[1, 1]")).unwrap_err();
        assert_eq!(e.field_name(), Some("seeds"));
        let e = ExperimentConfig::from_toml(&BASIC.replace("[1, 2, 3]", "[]")).unwrap_err();
        assert_eq!(e.field_name(), Some("seeds"));
    }

    #[test]
    fn rejects_unknown_keys() {
        let e = ExperimentConfig::from_toml(&format!("{BASIC}colour = \"red\"\n")).unwrap_err();
        assert_eq!(e.field_name(), Some("colour"), "{e}");
    }

    #[test]
    fn variant_strings_round_trip() {
        for s in ["main1", "main2", "h_slow", "no_trim", "h_fast", "intermediate:1.5", "dispersion", "tail_law", "phi_law", "bb"] {
            let v: StatVariant = s.parse().unwrap();
            assert_eq!(v.to_string(), s);
        }
        assert!("intermediate:0.5".parse::<StatVariant>().is_err());
    }

    #[test]
    fn every_preset_is_valid() {
        for p in PRESETS {
            let c = preset(p).unwrap();
            assert_eq!(&c.name, p);
        }
        assert!(preset("nope").is_err());
    }

    #[test]
    fn range_seeds() {
        let text = BASIC.replace("[1, 2, 3]", "{ start = 5, count = 3 }");
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap().seeds, vec![5, 6, 7]);
    }

    #[test]
    fn raw_round_trip() {
        let c = preset("bcf-intermediate").unwrap();
        let back = ExperimentConfig::from_raw(c.to_raw()).unwrap();
        assert_eq!(back, c);
    }
}
