//! Flat `key = value` run configuration with command-line overrides.

use std::path::Path;

use num_complex::Complex64;
use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::measurement::InitialSpinState;
use crate::model::{ModelParams, Sector};

const MODEL_KEYS: [&str; 6] = ["n_spins", "coupling_j", "coupling_g", "gamma", "temperature", "cutoff"];

const OTHER_KEYS: [&str; 16] = [
    "t_max",
    "n_samples",
    "times",
    "snapshot_times",
    "coupling_off_at",
    "sector",
    "r_uu",
    "r_ud_re",
    "r_ud_im",
    "seed",
    "readout_samples",
    "margin",
    "residual_threshold",
    "recurrence_threshold",
    "sweep",
    "probe",
];

/// Keys that take strings or lists and so cannot be swept.
const NON_SCALAR_KEYS: [&str; 4] = ["times", "snapshot_times", "sweep", "probe"];

fn is_known(key: &str) -> bool {
    MODEL_KEYS.contains(&key) || OTHER_KEYS.contains(&key)
}

pub fn is_sweepable(key: &str) -> bool {
    is_known(key) && !NON_SCALAR_KEYS.contains(&key)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: ModelParams,
    pub t_max: Option<f64>,
    pub n_samples: usize,
    pub times: Option<Vec<f64>>,
    pub snapshot_times: Vec<f64>,
    pub coupling_off_at: Option<f64>,
    pub sector: Sector,
    pub r_uu: f64,
    pub r_ud_re: f64,
    pub r_ud_im: f64,
    pub seed: u64,
    pub readout_samples: usize,
    pub margin: f64,
    pub residual_threshold: f64,
    pub recurrence_threshold: f64,
    pub sweep: Option<String>,
    pub probe: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            params: ModelParams::reference(),
            t_max: None,
            n_samples: 300,
            times: None,
            snapshot_times: Vec::new(),
            coupling_off_at: None,
            sector: Sector::Up,
            r_uu: 0.64,
            r_ud_re: 0.48,
            r_ud_im: 0.0,
            seed: 0,
            readout_samples: 100_000,
            margin: 10.0,
            residual_threshold: 1e-3,
            recurrence_threshold: 1e-3,
            sweep: None,
            probe: "reduction".to_string(),
        }
    }
}

fn line_of(text: &str, key: &str) -> Option<usize> {
    text.lines()
        .position(|l| {
            let l = l.trim_start();
            l.strip_prefix(key)
                .is_some_and(|rest| rest.trim_start().starts_with('='))
        })
        .map(|i| i + 1)
}

fn line_at(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Parses a `--set` value as a TOML value; bare words become strings.
fn parse_override_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

pub fn split_override(arg: &str) -> Result<(String, Value)> {
    let (key, value) = arg
        .split_once('=')
        .ok_or_else(|| Error::config(None, format!("override `{arg}` is not KEY=VALUE")))?;
    let key = key.trim();
    if !is_known(key) {
        return Err(Error::config(Some(key), "unknown key"));
    }
    Ok((key.to_string(), parse_override_value(value.trim())))
}

impl RunConfig {
    /// Reads `path` if given, then applies `overrides` in order.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)?,
            None => String::new(),
        };
        Self::from_parts(&text, path.is_some(), overrides)
    }

    pub fn from_parts(text: &str, require_model: bool, overrides: &[String]) -> Result<Self> {
        let mut table: Table = text.parse().map_err(|e: toml::de::Error| Error::Config {
            line: e.span().map(|s| line_at(text, s.start)),
            key: None,
            message: e.message().to_string(),
        })?;
        for (key, value) in &table {
            if !is_known(key) {
                return Err(Error::Config {
                    line: line_of(text, key),
                    key: Some(key.clone()),
                    message: "unknown key".into(),
                });
            }
            if value.is_table() {
                return Err(Error::Config {
                    line: line_of(text, key),
                    key: Some(key.clone()),
                    message: "nested tables are not supported".into(),
                });
            }
        }
        if require_model {
            if let Some(missing) = MODEL_KEYS.iter().find(|k| !table.contains_key(**k)) {
                return Err(Error::config(Some(missing), "missing required key"));
            }
        }
        let mut from_override = std::collections::HashSet::new();
        for arg in overrides {
            let (key, value) = split_override(arg)?;
            from_override.insert(key.clone());
            table.insert(key, value);
        }
        let reader = Reader {
            table: &table,
            text,
            from_override,
        };
        reader.build()
    }

    pub fn spin_state(&self) -> Result<InitialSpinState> {
        InitialSpinState::new(self.r_uu, Complex64::new(self.r_ud_re, self.r_ud_im))
    }

    /// Every resolved value as a flat table, readable back with `load`.
    pub fn to_table(&self) -> Table {
        let mut t = Table::new();
        let p = &self.params;
        t.insert("n_spins".into(), Value::Integer(p.n_spins as i64));
        t.insert("coupling_j".into(), Value::Float(p.coupling_j));
        t.insert("coupling_g".into(), Value::Float(p.coupling_g));
        t.insert("gamma".into(), Value::Float(p.gamma));
        t.insert("temperature".into(), Value::Float(p.temperature));
        t.insert("cutoff".into(), Value::Float(p.cutoff));
        if let Some(v) = self.t_max {
            t.insert("t_max".into(), Value::Float(v));
        }
        t.insert("n_samples".into(), Value::Integer(self.n_samples as i64));
        if let Some(times) = &self.times {
            t.insert("times".into(), float_array(times));
        }
        if !self.snapshot_times.is_empty() {
            t.insert("snapshot_times".into(), float_array(&self.snapshot_times));
        }
        if let Some(v) = self.coupling_off_at {
            t.insert("coupling_off_at".into(), Value::Float(v));
        }
        t.insert("sector".into(), Value::Integer(self.sector.sign() as i64));
        t.insert("r_uu".into(), Value::Float(self.r_uu));
        t.insert("r_ud_re".into(), Value::Float(self.r_ud_re));
        t.insert("r_ud_im".into(), Value::Float(self.r_ud_im));
        t.insert("seed".into(), Value::Integer(self.seed as i64));
        t.insert("readout_samples".into(), Value::Integer(self.readout_samples as i64));
        t.insert("margin".into(), Value::Float(self.margin));
        t.insert("residual_threshold".into(), Value::Float(self.residual_threshold));
        t.insert("recurrence_threshold".into(), Value::Float(self.recurrence_threshold));
        if let Some(s) = &self.sweep {
            t.insert("sweep".into(), Value::String(s.clone()));
        }
        t.insert("probe".into(), Value::String(self.probe.clone()));
        t
    }

    /// Copy with one scalar key replaced, used by parameter sweeps.
    pub fn with_value(&self, key: &str, value: f64) -> Result<Self> {
        if !is_sweepable(key) {
            return Err(Error::config(Some(key), "not a numeric key"));
        }
        let mut table = self.to_table();
        let integral = matches!(table.get(key), Some(Value::Integer(_)))
            || matches!(key, "n_spins" | "n_samples" | "seed" | "readout_samples" | "sector");
        let v = if integral {
            Value::Integer(value.round() as i64)
        } else {
            Value::Float(value)
        };
        table.insert(key.to_string(), v);
        Reader {
            table: &table,
            text: "",
            from_override: Default::default(),
        }
        .build()
    }
}

fn float_array(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|&x| Value::Float(x)).collect())
}

struct Reader<'a> {
    table: &'a Table,
    text: &'a str,
    from_override: std::collections::HashSet<String>,
}

impl Reader<'_> {
    fn err(&self, key: &str, message: impl Into<String>) -> Error {
        let line = if self.from_override.contains(key) {
            None
        } else {
            line_of(self.text, key)
        };
        Error::Config {
            line,
            key: Some(key.to_string()),
            message: message.into(),
        }
    }

    fn f64(&self, key: &str) -> Result<Option<f64>> {
        match self.table.get(key) {
            None => Ok(None),
            Some(Value::Float(x)) => Ok(Some(*x)),
            Some(Value::Integer(i)) => Ok(Some(*i as f64)),
            Some(v) => Err(self.err(key, format!("expected a number, found {}", v.type_str()))),
        }
    }

    fn u64(&self, key: &str) -> Result<Option<u64>> {
        match self.table.get(key) {
            None => Ok(None),
            Some(Value::Integer(i)) if *i >= 0 => Ok(Some(*i as u64)),
            Some(v) => Err(self.err(key, format!("expected a non-negative integer, found {v}"))),
        }
    }

    fn string(&self, key: &str) -> Result<Option<String>> {
        match self.table.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(v) => Err(self.err(key, format!("expected a string, found {}", v.type_str()))),
        }
    }

    fn times(&self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.table.get(key) {
            None => Ok(None),
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| match v {
                    Value::Float(x) => Ok(*x),
                    Value::Integer(i) => Ok(*i as f64),
                    _ => Err(self.err(key, "expected an array of numbers")),
                })
                .collect::<Result<Vec<_>>>()
                .map(Some),
            Some(v) => Err(self.err(key, format!("expected an array, found {}", v.type_str()))),
        }
    }

    fn build(&self) -> Result<RunConfig> {
        let d = RunConfig::default();
        let mut params = d.params;
        if let Some(n) = self.u64("n_spins")? {
            params.n_spins = n as usize;
        }
        params.coupling_j = self.f64("coupling_j")?.unwrap_or(params.coupling_j);
        params.coupling_g = self.f64("coupling_g")?.unwrap_or(params.coupling_g);
        params.gamma = self.f64("gamma")?.unwrap_or(params.gamma);
        params.temperature = self.f64("temperature")?.unwrap_or(params.temperature);
        params.cutoff = self.f64("cutoff")?.unwrap_or(params.cutoff);
        params.validate().map_err(|e| match e {
            Error::InvalidParameter { name, reason } => self.err(name, reason),
            other => other,
        })?;

        let sector = match self.table.get("sector") {
            None => d.sector,
            Some(Value::Integer(1)) => Sector::Up,
            Some(Value::Integer(-1)) => Sector::Down,
            Some(_) => return Err(self.err("sector", "must be 1 or -1")),
        };
        let cfg = RunConfig {
            params,
            t_max: self.f64("t_max")?,
            n_samples: self.u64("n_samples")?.map_or(d.n_samples, |n| n as usize),
            times: self.times("times")?,
            snapshot_times: self.times("snapshot_times")?.unwrap_or_default(),
            coupling_off_at: self.f64("coupling_off_at")?,
            sector,
            r_uu: self.f64("r_uu")?.unwrap_or(d.r_uu),
            r_ud_re: self.f64("r_ud_re")?.unwrap_or(d.r_ud_re),
            r_ud_im: self.f64("r_ud_im")?.unwrap_or(d.r_ud_im),
            seed: self.u64("seed")?.unwrap_or(d.seed),
            readout_samples: self.u64("readout_samples")?.map_or(d.readout_samples, |n| n as usize),
            margin: self.f64("margin")?.unwrap_or(d.margin),
            residual_threshold: self.f64("residual_threshold")?.unwrap_or(d.residual_threshold),
            recurrence_threshold: self.f64("recurrence_threshold")?.unwrap_or(d.recurrence_threshold),
            sweep: self.string("sweep")?,
            probe: self.string("probe")?.unwrap_or(d.probe),
        };
        if let Some(t) = cfg.t_max {
            if !(t > 0.0) {
                return Err(self.err("t_max", "must be > 0"));
            }
        }
        if cfg.n_samples == 0 {
            return Err(self.err("n_samples", "must be >= 1"));
        }
        if !(cfg.margin >= 1.0) {
            return Err(self.err("margin", "must be >= 1"));
        }
        cfg.spin_state().map_err(|e| self.err("r_uu", e.to_string()))?;
        Ok(cfg)
    }
}
