//! Experiment configuration: INI files or the JSON echo written next to
//! every sweep.
//!
//! ```ini
//! [geometry]
//! levels = 1..4        ; or `level = 2`
//! h = 3^-4             ; numeric keys accept constant expressions
//! bsub = 2
//!
//! [problem]
//! s = 0.8
//! p = 4, 8, 16, 32     ; `inf` allowed in n-sweeps
//! f = x - 0.5
//! b = 1
//! phi1 = -0.2
//! phi2 = 0.2
//! phi1_n = -0.2 - 0.01*(0.5)^n   ; optional per-level obstacles
//! delta_n = 1                     ; optional override of (3/4)^n
//!
//! [solver]
//! tol = 1e-6
//! max_iters = 20000
//! accel = false
//! seed = 0
//! init = midpoint
//!
//! [limit]
//! C1 = 1
//! C2 = 1
//!
//! [output]
//! directory = out
//! formats = csv, json
//! ```

use std::path::Path;

use ini::Ini;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field_expr::{eval_constant, parse_field, parse_field_at_level, FieldError, ScalarField};
use crate::geometry::MAX_LEVEL;
use crate::obstacle::InitStrategy;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("INI syntax: {0}")]
    Ini(String),
    #[error("JSON config: {0}")]
    Json(#[from] serde_json::Error),
    #[error("[{section}] {key}: {message}")]
    Value {
        section: &'static str,
        key: String,
        message: String,
    },
    #[error("[{section}] {key}: expression {text:?}: {source}")]
    Expression {
        section: &'static str,
        key: String,
        text: String,
        source: FieldError,
    },
    #[error("unknown key [{section}] {key}")]
    UnknownKey { section: String, key: String },
}

fn value_err(section: &'static str, key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Value {
        section,
        key: key.to_string(),
        message: message.into(),
    }
}

/// `p` in a sweep: a finite exponent or the limit problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PValue {
    Finite(f64),
    Infinite,
}

impl PValue {
    pub fn as_f64(self) -> f64 {
        match self {
            PValue::Finite(p) => p,
            PValue::Infinite => f64::INFINITY,
        }
    }
    pub fn label(self) -> String {
        match self {
            PValue::Finite(p) => format!("{p:?}"),
            PValue::Infinite => "inf".to_string(),
        }
    }
}

impl std::fmt::Display for PValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.label())
    }
}

impl std::str::FromStr for PValue {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("inf") || t.eq_ignore_ascii_case("infinity") {
            return Ok(PValue::Infinite);
        }
        let v = eval_constant(t, None).map_err(|e| e.to_string())?;
        if v.is_infinite() && v > 0.0 {
            Ok(PValue::Infinite)
        } else {
            Ok(PValue::Finite(v))
        }
    }
}

impl Serialize for PValue {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            PValue::Finite(p) => s.serialize_f64(*p),
            PValue::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for PValue {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(p) => Ok(PValue::Finite(p)),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryConfig {
    pub level_min: u32,
    pub level_max: u32,
    /// Shared grid pitch; defaults depend on the command.
    pub h: Option<f64>,
    pub bsub: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemConfig {
    pub s: f64,
    pub p: Vec<PValue>,
    pub f: String,
    pub b: String,
    pub phi1: String,
    pub phi2: String,
    pub phi1_n: Option<String>,
    pub phi2_n: Option<String>,
    pub delta_n: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iters: usize,
    pub accel: bool,
    pub seed: u64,
    pub init: InitStrategy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitConfig {
    #[serde(rename = "C1")]
    pub c1: f64,
    #[serde(rename = "C2")]
    pub c2: f64,
    pub tol: f64,
    pub max_iters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputConfig {
    pub directory: String,
    pub formats: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub geometry: GeometryConfig,
    pub problem: ProblemConfig,
    pub solver: SolverConfig,
    pub limit: LimitConfig,
    pub output: OutputConfig,
    /// Duplicated `p` values dropped while loading.
    #[serde(default)]
    pub dropped_p: Vec<PValue>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            geometry: GeometryConfig {
                level_min: 1,
                level_max: 1,
                h: None,
                bsub: crate::discretization::DEFAULT_BOUNDARY_SUBDIV,
            },
            problem: ProblemConfig {
                s: 0.8,
                p: vec![PValue::Finite(3.0)],
                f: "0".into(),
                b: "1".into(),
                phi1: "-1".into(),
                phi2: "1".into(),
                phi1_n: None,
                phi2_n: None,
                delta_n: None,
            },
            solver: SolverConfig {
                tol: 1e-6,
                max_iters: 20_000,
                accel: false,
                seed: 0,
                init: InitStrategy::Midpoint,
            },
            limit: LimitConfig {
                c1: 1.0,
                c2: 1.0,
                tol: 1e-8,
                max_iters: 400_000,
            },
            output: OutputConfig {
                directory: "out".into(),
                formats: vec!["csv".into(), "json".into()],
            },
            dropped_p: Vec::new(),
        }
    }
}

const KEYS: &[(&str, &[&str])] = &[
    ("geometry", &["level", "levels", "h", "bsub"]),
    (
        "problem",
        &["s", "p", "f", "b", "phi1", "phi2", "phi1_n", "phi2_n", "delta_n"],
    ),
    ("solver", &["tol", "max_iters", "accel", "seed", "init"]),
    ("limit", &["c1", "c2", "tol", "max_iters"]),
    ("output", &["directory", "formats"]),
];

fn number(section: &'static str, key: &str, text: &str) -> Result<f64, ConfigError> {
    eval_constant(text, None).map_err(|source| ConfigError::Expression {
        section,
        key: key.to_string(),
        text: text.to_string(),
        source,
    })
}

fn integer<T: TryFrom<i64>>(section: &'static str, key: &str, text: &str) -> Result<T, ConfigError> {
    let v = number(section, key, text)?;
    if v.fract() != 0.0 || v < 0.0 || v > 9.0e15 {
        return Err(value_err(section, key, format!("expected a nonnegative integer, got {text}")));
    }
    T::try_from(v as i64).map_err(|_| value_err(section, key, format!("{text} out of range")))
}

fn boolean(section: &'static str, key: &str, text: &str) -> Result<bool, ConfigError> {
    match text.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(value_err(section, key, format!("expected a boolean, got {text}"))),
    }
}

fn levels(text: &str) -> Result<(u32, u32), ConfigError> {
    let bad = |m: String| value_err("geometry", "levels", m);
    let t = text.trim();
    let (a, b) = if let Some((a, b)) = t.split_once("..") {
        (a, b)
    } else if let Some((a, b)) = t.split_once('-') {
        (a, b)
    } else if t.contains(',') {
        let list: Vec<u32> = t
            .split(',')
            .map(|x| integer("geometry", "levels", x))
            .collect::<Result<_, _>>()?;
        if list.windows(2).any(|w| w[1] != w[0] + 1) {
            return Err(bad(format!("levels must be contiguous, got {t}")));
        }
        return Ok((list[0], *list.last().unwrap()));
    } else {
        let n = integer("geometry", "levels", t)?;
        return Ok((n, n));
    };
    let a: u32 = integer("geometry", "levels", a)?;
    let b: u32 = integer("geometry", "levels", b)?;
    if a > b {
        return Err(bad(format!("empty level range {t}")));
    }
    Ok((a, b))
}

impl ExperimentConfig {
    /// Reads an INI file, or a JSON echo if the file starts with `{`.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        if text.trim_start().starts_with('{') {
            Self::from_json(text)
        } else {
            Self::from_ini(text)
        }
    }

    /// Parses the JSON config echo, or a full sweep.json containing one
    /// under `config`.
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let inner = value.get("config").cloned().unwrap_or(value);
        let cfg: ExperimentConfig = serde_json::from_value(inner)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn from_ini(text: &str) -> Result<Self, ConfigError> {
        let ini = Ini::load_from_str(text).map_err(|e| ConfigError::Ini(e.to_string()))?;
        let mut cfg = ExperimentConfig::default();
        for (section, props) in ini.iter() {
            let Some(name) = section else {
                if let Some((key, _)) = props.iter().next() {
                    return Err(ConfigError::UnknownKey {
                        section: String::new(),
                        key: key.to_string(),
                    });
                }
                continue;
            };
            let lower = name.to_ascii_lowercase();
            let Some(&(sec, allowed)) = KEYS.iter().find(|(s, _)| *s == lower) else {
                return Err(ConfigError::UnknownKey {
                    section: name.to_string(),
                    key: String::new(),
                });
            };
            for (key, value) in props.iter() {
                let k = key.to_ascii_lowercase();
                if !allowed.contains(&k.as_str()) {
                    return Err(ConfigError::UnknownKey {
                        section: name.to_string(),
                        key: key.to_string(),
                    });
                }
                cfg.set(sec, &k, value.trim())?;
            }
        }
        cfg.normalize_p();
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, section: &'static str, key: &str, v: &str) -> Result<(), ConfigError> {
        match (section, key) {
            ("geometry", "level" | "levels") => {
                let (a, b) = levels(v)?;
                self.geometry.level_min = a;
                self.geometry.level_max = b;
            }
            ("geometry", "h") => self.geometry.h = Some(number(section, key, v)?),
            ("geometry", "bsub") => self.geometry.bsub = integer(section, key, v)?,
            ("problem", "s") => self.problem.s = number(section, key, v)?,
            ("problem", "p") => {
                self.problem.p = v
                    .split(',')
                    .map(|t| t.parse::<PValue>().map_err(|m| value_err(section, key, m)))
                    .collect::<Result<_, _>>()?;
            }
            ("problem", "f") => self.problem.f = v.to_string(),
            ("problem", "b") => self.problem.b = v.to_string(),
            ("problem", "phi1") => self.problem.phi1 = v.to_string(),
            ("problem", "phi2") => self.problem.phi2 = v.to_string(),
            ("problem", "phi1_n") => self.problem.phi1_n = Some(v.to_string()),
            ("problem", "phi2_n") => self.problem.phi2_n = Some(v.to_string()),
            ("problem", "delta_n") => self.problem.delta_n = Some(number(section, key, v)?),
            ("solver", "tol") => self.solver.tol = number(section, key, v)?,
            ("solver", "max_iters") => self.solver.max_iters = integer(section, key, v)?,
            ("solver", "accel") => self.solver.accel = boolean(section, key, v)?,
            ("solver", "seed") => self.solver.seed = integer(section, key, v)?,
            ("solver", "init") => {
                self.solver.init = serde_json::from_value(serde_json::Value::String(
                    v.to_ascii_lowercase(),
                ))
                .map_err(|_| {
                    value_err(section, key, format!("expected midpoint|lower|upper|random, got {v}"))
                })?
            }
            ("limit", "c1") => self.limit.c1 = number(section, key, v)?,
            ("limit", "c2") => self.limit.c2 = number(section, key, v)?,
            ("limit", "tol") => self.limit.tol = number(section, key, v)?,
            ("limit", "max_iters") => self.limit.max_iters = integer(section, key, v)?,
            ("output", "directory") => self.output.directory = v.to_string(),
            ("output", "formats") => {
                self.output.formats = v.split(',').map(|t| t.trim().to_ascii_lowercase()).collect()
            }
            _ => unreachable!("key table and setter disagree on [{section}] {key}"),
        }
        Ok(())
    }

    /// Drops repeated `p` values, remembering them for the warning row.
    fn normalize_p(&mut self) {
        let mut kept: Vec<PValue> = Vec::new();
        for &p in &self.problem.p {
            if kept.contains(&p) {
                self.dropped_p.push(p);
            } else {
                kept.push(p);
            }
        }
        self.problem.p = kept;
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let g = &self.geometry;
        if g.level_max > MAX_LEVEL {
            return Err(value_err("geometry", "levels", format!("level above {MAX_LEVEL}")));
        }
        if let Some(h) = g.h {
            if !(h > 0.0 && h.is_finite()) {
                return Err(value_err("geometry", "h", format!("must be positive, got {h}")));
            }
        }
        if g.bsub == 0 {
            return Err(value_err("geometry", "bsub", "must be at least 1"));
        }
        let p = &self.problem;
        if p.p.is_empty() {
            return Err(value_err("problem", "p", "empty exponent list"));
        }
        if p.p.windows(2).any(|w| !(w[0].as_f64() < w[1].as_f64())) {
            return Err(value_err("problem", "p", "exponents must be sorted ascending"));
        }
        for (key, text) in [("f", &p.f), ("b", &p.b), ("phi1", &p.phi1), ("phi2", &p.phi2)] {
            parse_field(text).map_err(|source| ConfigError::Expression {
                section: "problem",
                key: key.to_string(),
                text: text.clone(),
                source,
            })?;
        }
        for (key, text) in [("phi1_n", &p.phi1_n), ("phi2_n", &p.phi2_n)] {
            if let Some(text) = text {
                parse_field_at_level(text, g.level_min).map_err(|source| ConfigError::Expression {
                    section: "problem",
                    key: key.to_string(),
                    text: text.clone(),
                    source,
                })?;
            }
        }
        if let Some(d) = p.delta_n {
            if !(d > 0.0 && d.is_finite()) {
                return Err(value_err("problem", "delta_n", format!("must be positive, got {d}")));
            }
        }
        if !(self.solver.tol > 0.0) {
            return Err(value_err("solver", "tol", "must be positive"));
        }
        if !(self.limit.c1 > 0.0 && self.limit.c2 > 0.0) {
            return Err(value_err("limit", "C1/C2", "must be positive"));
        }
        if !(self.limit.tol > 0.0) {
            return Err(value_err("limit", "tol", "must be positive"));
        }
        for f in &self.output.formats {
            if f != "csv" && f != "json" {
                return Err(value_err("output", "formats", format!("unknown format {f}")));
            }
        }
        Ok(())
    }

    /// Obstacle expressions on level `n`: the per-level keys when given.
    pub fn obstacles_at(&self, n: u32) -> Result<(ScalarField, ScalarField), FieldError> {
        let p = &self.problem;
        let one = |per_level: &Option<String>, base: &str| match per_level {
            Some(t) => parse_field_at_level(t, n),
            None => parse_field(base),
        };
        Ok((one(&p.phi1_n, &p.phi1)?, one(&p.phi2_n, &p.phi2)?))
    }

    pub fn levels(&self) -> std::ops::RangeInclusive<u32> {
        self.geometry.level_min..=self.geometry.level_max
    }

    pub fn finite_p(&self) -> Vec<f64> {
        self.problem
            .p
            .iter()
            .filter_map(|p| match p {
                PValue::Finite(v) => Some(*v),
                PValue::Infinite => None,
            })
            .collect()
    }
}
