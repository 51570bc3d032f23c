//! Text formats: dataset CSV (`y,x1,...,xn`), regressor-matrix CSV
//! (`x1,...,xn`), the JSON sidecar carrying ground truth, and flat key-value
//! config files.
//!
//! Numbers are written with 17 significant digits so that every `f64`
//! round-trips.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::datagen::{NoiseModel, RegressionDataset};
use crate::error::{Error, Result};
use crate::numkit::Regressors;

/// Round-trippable float formatting.
pub fn fmt_num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

fn parse_cell(cell: &str, row: usize, col: usize) -> Result<f64> {
    let v: f64 = cell
        .parse()
        .map_err(|_| Error::Parse(format!("row {row}, column {col}: not a number: {cell:?}")))?;
    if !v.is_finite() {
        return Err(Error::Parse(format!(
            "row {row}, column {col}: non-finite value"
        )));
    }
    Ok(v)
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

/// Header check for `x1..xn` names starting at `offset`.
fn check_x_header(names: &[&str], offset: usize) -> Result<usize> {
    let n = names.len() - offset;
    if n == 0 {
        return Err(Error::Parse("header names no regressor column".into()));
    }
    for (k, name) in names[offset..].iter().enumerate() {
        if *name != format!("x{}", k + 1) {
            return Err(Error::Parse(format!(
                "header column {}: expected x{}, found {name:?}",
                offset + k + 1,
                k + 1
            )));
        }
    }
    Ok(n)
}

/// Reads rows of `width` numbers each, returning them flattened row by row.
fn read_rows(rdr: &mut csv::Reader<&[u8]>, width: usize) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != width {
            return Err(Error::Parse(format!(
                "row {}: expected {width} fields, found {}",
                i + 1,
                rec.len()
            )));
        }
        for (j, cell) in rec.iter().enumerate() {
            out.push(parse_cell(cell, i + 1, j + 1)?);
        }
    }
    if out.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(out)
}

/// Parses a dataset CSV into regressors and observations.
pub fn parse_dataset_csv(text: &str) -> Result<(Regressors, Vec<f64>)> {
    let mut rdr = reader(text);
    let header = rdr.headers()?.clone();
    let names: Vec<&str> = header.iter().collect();
    if names.first() != Some(&"y") {
        return Err(Error::Parse("header must start with y".into()));
    }
    let n = check_x_header(&names, 1)?;
    let rows = read_rows(&mut rdr, n + 1)?;
    let mut y = Vec::with_capacity(rows.len() / (n + 1));
    let mut flat = Vec::with_capacity(rows.len() - rows.len() / (n + 1));
    for row in rows.chunks_exact(n + 1) {
        y.push(row[0]);
        flat.extend_from_slice(&row[1..]);
    }
    Ok((Regressors::from_flat(n, flat)?, y))
}

/// Parses a regressor-matrix CSV; row `t` becomes column `x_t`.
pub fn parse_matrix_csv(text: &str) -> Result<Regressors> {
    let mut rdr = reader(text);
    let header = rdr.headers()?.clone();
    let names: Vec<&str> = header.iter().collect();
    let n = check_x_header(&names, 0)?;
    Regressors::from_flat(n, read_rows(&mut rdr, n)?)
}

pub fn dataset_to_csv(ds: &RegressionDataset) -> String {
    let mut s = String::from("y");
    for k in 1..=ds.dim() {
        let _ = write!(s, ",x{k}");
    }
    s.push('\n');
    for (x, y) in ds.x.columns().zip(&ds.y) {
        s.push_str(&fmt_num(*y));
        for v in x {
            s.push(',');
            s.push_str(&fmt_num(*v));
        }
        s.push('\n');
    }
    s
}

/// Ground-truth metadata stored next to a dataset CSV.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    #[serde(default)]
    pub theta_true: Option<Vec<f64>>,
    #[serde(default)]
    pub v: Option<Vec<f64>>,
    #[serde(default)]
    pub outlier_mask: Option<Vec<bool>>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub noise: Option<NoiseModel>,
}

impl Sidecar {
    pub fn from_dataset(ds: &RegressionDataset) -> Self {
        Self {
            theta_true: ds.theta_true.clone(),
            v: ds.v.clone(),
            outlier_mask: ds.outlier_mask.clone(),
            seed: ds.seed,
            noise: ds.noise.clone(),
        }
    }

    /// Attaches the metadata after checking its shapes against `ds`.
    pub fn attach(self, mut ds: RegressionDataset) -> Result<RegressionDataset> {
        let check = |expected: usize, found: usize| {
            if expected == found {
                Ok(())
            } else {
                Err(Error::DimensionError { expected, found })
            }
        };
        if let Some(t) = &self.theta_true {
            check(ds.dim(), t.len())?;
        }
        if let Some(v) = &self.v {
            check(ds.len(), v.len())?;
        }
        if let Some(m) = &self.outlier_mask {
            check(ds.len(), m.len())?;
        }
        if let Some(noise) = &self.noise {
            noise.validate()?;
        }
        ds.theta_true = self.theta_true;
        ds.v = self.v;
        ds.outlier_mask = self.outlier_mask;
        ds.seed = self.seed;
        ds.noise = self.noise;
        Ok(ds)
    }
}

pub fn parse_sidecar_json(text: &str) -> Result<Sidecar> {
    let sc: Sidecar = serde_json::from_str(text)?;
    for v in sc.theta_true.iter().chain(&sc.v).flatten() {
        if !v.is_finite() {
            return Err(Error::Parse("sidecar holds a non-finite number".into()));
        }
    }
    Ok(sc)
}

pub fn sidecar_to_json(sc: &Sidecar) -> String {
    let mut s = serde_json::to_string_pretty(sc).expect("sidecar serializes");
    s.push('\n');
    s
}

/// Default sidecar location: `data.csv` -> `data.json`.
pub fn sidecar_path(csv_path: &Path) -> std::path::PathBuf {
    csv_path.with_extension("json")
}

/// Reads a dataset CSV and, if present, its sidecar.
pub fn read_dataset(csv_path: &Path, sidecar: Option<&Path>) -> Result<RegressionDataset> {
    let text = std::fs::read_to_string(csv_path)?;
    let (x, y) = parse_dataset_csv(&text)?;
    let ds = RegressionDataset::new(x, y)?;
    let side = match sidecar {
        Some(p) => Some(p.to_path_buf()),
        None => Some(sidecar_path(csv_path)).filter(|p| p.is_file()),
    };
    match side {
        Some(p) => parse_sidecar_json(&std::fs::read_to_string(p)?)?.attach(ds),
        None => Ok(ds),
    }
}

/// A flat config value: scalar or array of scalars.
#[derive(Debug, Clone, PartialEq)]
pub enum ConfigValue {
    Bool(bool),
    Number(f64),
    Text(String),
    List(Vec<f64>),
}

impl ConfigValue {
    /// Renders the value as a command-line flag argument.
    pub fn to_arg(&self) -> String {
        match self {
            ConfigValue::Bool(b) => b.to_string(),
            ConfigValue::Number(v) => v.to_string(),
            ConfigValue::Text(s) => s.clone(),
            ConfigValue::List(v) => v.iter().map(f64::to_string).collect::<Vec<_>>().join(","),
        }
    }
}

pub type Config = BTreeMap<String, ConfigValue>;

/// Parses a flat key-value config: either a JSON object with scalar or
/// numeric-array values, or `key = value` / `key: value` lines with `#`
/// comments.
pub fn parse_config(text: &str) -> Result<Config> {
    if text.trim_start().starts_with('{') {
        parse_config_json(text)
    } else {
        parse_config_lines(text)
    }
}

fn check_key(key: &str) -> Result<()> {
    let ok = !key.is_empty()
        && key
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
    if ok {
        Ok(())
    } else {
        Err(Error::Parse(format!("invalid config key {key:?}")))
    }
}

fn parse_config_json(text: &str) -> Result<Config> {
    let map: serde_json::Map<String, Value> = serde_json::from_str(text)?;
    let mut out = Config::new();
    for (k, v) in map {
        check_key(&k)?;
        let value = match v {
            Value::Bool(b) => ConfigValue::Bool(b),
            Value::Number(n) => ConfigValue::Number(
                n.as_f64()
                    .ok_or_else(|| Error::Parse(format!("{k}: number out of range")))?,
            ),
            Value::String(s) => ConfigValue::Text(s),
            Value::Array(items) => ConfigValue::List(
                items
                    .iter()
                    .map(|x| {
                        x.as_f64()
                            .ok_or_else(|| Error::Parse(format!("{k}: arrays must hold numbers")))
                    })
                    .collect::<Result<_>>()?,
            ),
            Value::Null | Value::Object(_) => {
                return Err(Error::Parse(format!("{k}: config must be flat")));
            }
        };
        out.insert(k, value);
    }
    Ok(out)
}

fn parse_config_lines(text: &str) -> Result<Config> {
    let mut out = Config::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .or_else(|| line.split_once(':'))
            .ok_or_else(|| Error::Parse(format!("line {}: expected key = value", i + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        check_key(k)?;
        let v = v.trim_matches('"');
        let value = if v == "true" || v == "false" {
            ConfigValue::Bool(v == "true")
        } else if let Ok(x) = v.parse::<f64>() {
            ConfigValue::Number(x)
        } else if v.contains(',') {
            let items: std::result::Result<Vec<f64>, _> = v
                .trim_matches(|c| c == '[' || c == ']')
                .split(',')
                .map(|s| s.trim().parse())
                .collect();
            match items {
                Ok(list) => ConfigValue::List(list),
                Err(_) => ConfigValue::Text(v.to_string()),
            }
        } else {
            ConfigValue::Text(v.to_string())
        };
        if out.insert(k.to_string(), value).is_some() {
            return Err(Error::Parse(format!("line {}: duplicate key {k}", i + 1)));
        }
    }
    Ok(out)
}

/// Expands a config into `--key value` arguments (`--key` alone for `true`,
/// nothing for `false`).
pub fn config_to_args(cfg: &Config) -> Vec<String> {
    let mut out = Vec::new();
    for (k, v) in cfg {
        let flag = format!("--{}", k.replace('_', "-"));
        match v {
            ConfigValue::Bool(true) => out.push(flag),
            ConfigValue::Bool(false) => {}
            other => {
                out.push(flag);
                out.push(other.to_arg());
            }
        }
    }
    out
}

/// Renders rows as CSV with a fixed header; every value goes through [`fmt_num`]
/// unless pre-rendered.
pub fn render_csv(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    s
}
